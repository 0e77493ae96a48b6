#pragma once

#include <limits>
#include <map>
#include <string>

#include "lvce/tensor.hpp"

namespace lvce::train {

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// Gradients are read from each tensor's grad buffer. A non-finite gradient
/// raises TrainingDivergence naming the parameter.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::map<std::string, nn::Tensor>& params, double lr);
  long step_count() const { return t_; }

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::map<std::string, State> state_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct PlateauConfig {
  double factor = 0.5;
  int patience = 10;
  double min_delta = 1e-4;  // relative improvement threshold

  void validate() const;
};

/// Reduce-on-plateau controller: the rate is multiplied by `factor` after
/// `patience` consecutive epochs without a relative improvement over the
/// running best of more than min_delta; the best tracker and the counter
/// reset on each reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, const PlateauConfig& cfg);

  /// Feeds one epoch's monitored loss; returns the (possibly reduced) lr.
  double update(double epoch_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  PlateauConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

}  // namespace lvce::train
