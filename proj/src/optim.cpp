#include "lvce/optim.hpp"

#include <cmath>

namespace lvce::train {

void Adam::step(std::map<std::string, nn::Tensor>& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, tensor] : params) {
    auto& data = tensor.data();
    auto& grad = tensor.grad();
    if (grad.size() != data.size())
      throw TrainingDivergence("adam: missing gradient for parameter " + name);
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(data.size(), 0.0);
      st.v.assign(data.size(), 0.0);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g))
        throw TrainingDivergence("adam: non-finite gradient in parameter " + name);
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = st.m[i] / bc1;
      const double v_hat = st.v[i] / bc2;
      data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

void PlateauConfig::validate() const {
  if (!(factor > 0.0 && factor < 1.0))
    throw InvalidArgument("PlateauConfig: factor must be in (0, 1)");
  if (patience < 1) throw InvalidArgument("PlateauConfig: patience must be >= 1");
  if (min_delta < 0.0) throw InvalidArgument("PlateauConfig: min_delta must be non-negative");
}

PlateauScheduler::PlateauScheduler(double initial_lr, const PlateauConfig& cfg)
    : lr_(initial_lr), cfg_(cfg) {
  if (!(initial_lr > 0.0)) throw InvalidArgument("PlateauScheduler: lr must be positive");
  cfg_.validate();
}

double PlateauScheduler::update(double epoch_loss) {
  if (!std::isfinite(epoch_loss))
    throw TrainingDivergence("plateau scheduler: non-finite monitored loss");
  const bool improved =
      epoch_loss < best_ - cfg_.min_delta * std::fabs(best_) || best_ == std::numeric_limits<double>::infinity();
  if (improved) {
    best_ = epoch_loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ >= cfg_.patience) {
      lr_ *= cfg_.factor;
      bad_epochs_ = 0;
      best_ = epoch_loss;
    }
  }
  return lr_;
}

}  // namespace lvce::train
