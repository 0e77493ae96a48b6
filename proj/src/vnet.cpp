#include "lvce/vnet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lvce/rng.hpp"

namespace lvce::nn {

void VNetConfig::validate() const {
  if (in_channels != 2 && in_channels != 4)
    throw InvalidArgument("VNetConfig: in_channels must be 2 or 4");
  if (levels < 2) throw InvalidArgument("VNetConfig: levels must be >= 2");
  if (base_channels < 4) throw InvalidArgument("VNetConfig: base_channels must be >= 4");
  if (convs_per_level < 1) throw InvalidArgument("VNetConfig: convs_per_level must be >= 1");
  if (kernel_size != 3 && kernel_size != 5)
    throw InvalidArgument("VNetConfig: kernel_size must be 3 or 5");
}

namespace {

Tensor kaiming_kernel(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(shape, true);
  const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.gaussian(0.0, sigma);
  return t;
}

int channels_at(const VNetConfig& cfg, int level) { return cfg.base_channels << level; }

}  // namespace

VNet::VNet(const VNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int k = config_.kernel_size;

  auto add_conv = [&](const std::string& name, int cin, int cout, int ksize, bool zero_init) {
    const int fan_in = cin * ksize * ksize * ksize;
    params_[name + ".w"] = zero_init ? Tensor::zeros({cout, cin, ksize, ksize, ksize}, true)
                                     : kaiming_kernel({cout, cin, ksize, ksize, ksize}, fan_in, rng);
    params_[name + ".b"] = Tensor::zeros({cout}, true);
  };
  auto add_tconv = [&](const std::string& name, int cin, int cout, int ksize) {
    const int fan_in = cin * ksize * ksize * ksize;
    params_[name + ".w"] = kaiming_kernel({cin, cout, ksize, ksize, ksize}, fan_in, rng);
    params_[name + ".b"] = Tensor::zeros({cout}, true);
  };
  auto add_act = [&](const std::string& name) {
    if (config_.activation == Activation::kPrelu)
      params_[name + ".a"] = Tensor::from_data({1}, {0.25}, true);
  };

  // Encoder.
  for (int i = 0; i < config_.convs_per_level; ++i) {
    add_conv("enc0.conv" + std::to_string(i), i == 0 ? config_.in_channels : channels_at(config_, 0),
             channels_at(config_, 0), k, false);
    add_act("enc0.conv" + std::to_string(i));
  }
  for (int l = 1; l < config_.levels; ++l) {
    add_conv("down" + std::to_string(l), channels_at(config_, l - 1), channels_at(config_, l), 2,
             false);
    add_act("down" + std::to_string(l));
    for (int i = 0; i < config_.convs_per_level; ++i) {
      add_conv("enc" + std::to_string(l) + ".conv" + std::to_string(i), channels_at(config_, l),
               channels_at(config_, l), k, false);
      add_act("enc" + std::to_string(l) + ".conv" + std::to_string(i));
    }
  }
  // Decoder.
  for (int l = config_.levels - 2; l >= 0; --l) {
    add_tconv("up" + std::to_string(l), channels_at(config_, l + 1), channels_at(config_, l), 2);
    add_act("up" + std::to_string(l));
    for (int i = 0; i < config_.convs_per_level; ++i) {
      add_conv("dec" + std::to_string(l) + ".conv" + std::to_string(i),
               i == 0 ? 2 * channels_at(config_, l) : channels_at(config_, l),
               channels_at(config_, l), k, false);
      add_act("dec" + std::to_string(l) + ".conv" + std::to_string(i));
    }
  }
  add_conv("head", channels_at(config_, 0), 1, 1, config_.predict_residual);
}

std::int64_t VNet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

Tensor VNet::activate(const Tensor& t, const std::string& name) const {
  if (config_.activation == Activation::kPrelu) return prelu(t, params_.at(name + ".a"));
  return relu(t);
}

Tensor VNet::conv_block(const Tensor& input, const std::string& name, int convs) const {
  const int pad = config_.kernel_size / 2;
  Tensor y = conv3d(input, params_.at(name + ".conv0.w"), params_.at(name + ".conv0.b"), 1, pad);
  y = activate(y, name + ".conv0");
  Tensor res;
  if (config_.residual)
    res = input.shape()[0] == y.shape()[0] ? input : y;
  const bool res_usable = config_.residual && (input.shape()[0] == y.shape()[0] || convs > 1);
  for (int i = 1; i < convs; ++i) {
    const std::string cn = name + ".conv" + std::to_string(i);
    y = conv3d(y, params_.at(cn + ".w"), params_.at(cn + ".b"), 1, pad);
    y = activate(y, cn);
  }
  if (res_usable) y = add(y, res);
  return y;
}

Tensor VNet::forward(const Tensor& input) const {
  if (static_cast<int>(input.shape().size()) != 4)
    throw ShapeError("vnet: input must be 4-D [C, X, Y, Z]");
  if (input.shape()[0] != config_.in_channels)
    throw ShapeError("vnet: expected " + std::to_string(config_.in_channels) +
                     " input channels, got " + std::to_string(input.shape()[0]));

  std::vector<Tensor> skips;
  Tensor t = conv_block(input, "enc0", config_.convs_per_level);
  for (int l = 1; l < config_.levels; ++l) {
    skips.push_back(t);
    for (int d = 1; d < 4; ++d) {
      if (t.shape()[d] % 2 != 0)
        throw ShapeError("vnet: spatial dims not divisible by 2 at down level " +
                         std::to_string(l) + " (dim " + std::to_string(t.shape()[d]) + ")");
    }
    const std::string dn = "down" + std::to_string(l);
    t = conv3d(t, params_.at(dn + ".w"), params_.at(dn + ".b"), 2, 0);
    t = activate(t, dn);
    t = conv_block(t, "enc" + std::to_string(l), config_.convs_per_level);
  }
  for (int l = config_.levels - 2; l >= 0; --l) {
    const std::string un = "up" + std::to_string(l);
    t = conv_transpose3d(t, params_.at(un + ".w"), params_.at(un + ".b"), 2);
    t = activate(t, un);
    t = concat_channels(t, skips[static_cast<std::size_t>(l)]);
    t = conv_block(t, "dec" + std::to_string(l), config_.convs_per_level);
  }
  t = conv3d(t, params_.at("head.w"), params_.at("head.b"), 1, 0);
  if (config_.predict_residual)
    t = add(t, select_channel(input, config_.in_channels - 1));
  return t;
}

VNet VNet::clone() const {
  VNet copy;
  copy.config_ = config_;
  for (const auto& [name, t] : params_) copy.params_[name] = t.detached_copy();
  return copy;
}

// -- volume bridging -----------------------------------------------------------

Tensor to_tensor(const MultiChannelVolume& mcv, bool requires_grad) {
  if (mcv.channels.empty()) throw InvalidArgument("to_tensor: no channels");
  const auto& d = mcv.channels.front().dims;
  const std::size_t sp = mcv.channels.front().size();
  Tensor t = Tensor::zeros({mcv.count(), d[0], d[1], d[2]}, requires_grad);
  for (int c = 0; c < mcv.count(); ++c) {
    const auto& vol = mcv.channels[static_cast<std::size_t>(c)];
    if (vol.dims != d) throw ShapeError("to_tensor: channel dims differ");
    std::copy(vol.data.begin(), vol.data.end(), t.data().begin() + static_cast<std::ptrdiff_t>(c * sp));
  }
  return t;
}

Tensor to_tensor(const Volume& vol, bool requires_grad) {
  Tensor t = Tensor::zeros({1, vol.dims[0], vol.dims[1], vol.dims[2]}, requires_grad);
  std::copy(vol.data.begin(), vol.data.end(), t.data().begin());
  return t;
}

Volume from_tensor(const Tensor& t, const Volume& geometry_like) {
  if (t.shape().size() != 4 || t.shape()[0] != 1)
    throw ShapeError("from_tensor: expected a [1, X, Y, Z] tensor");
  Volume out(Index3{t.shape()[1], t.shape()[2], t.shape()[3]}, geometry_like.spacing,
             geometry_like.origin);
  std::copy(t.data().begin(), t.data().end(), out.data.begin());
  return out;
}

Volume vnet_forward(const VNet& model, const MultiChannelVolume& input) {
  if (input.count() != model.config().in_channels)
    throw ShapeError("vnet_forward: input has " + std::to_string(input.count()) +
                     " channels, model expects " + std::to_string(model.config().in_channels));
  const Tensor out = model.forward(to_tensor(input));
  return from_tensor(out, input.channels.front());
}

// -- checkpoints -----------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'L', 'V', 'C', 'E', '1'};

nlohmann::json config_to_json(const VNetConfig& c) {
  return nlohmann::json{{"in_channels", c.in_channels},
                        {"levels", c.levels},
                        {"base_channels", c.base_channels},
                        {"convs_per_level", c.convs_per_level},
                        {"activation", c.activation == Activation::kPrelu ? "prelu" : "relu"},
                        {"residual", c.residual},
                        {"predict_residual", c.predict_residual},
                        {"kernel_size", c.kernel_size}};
}

VNetConfig config_from_json(const nlohmann::json& j) {
  VNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.levels = j.at("levels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.convs_per_level = j.at("convs_per_level").get<int>();
  c.activation = j.at("activation").get<std::string>() == "relu" ? Activation::kRelu
                                                                 : Activation::kPrelu;
  c.residual = j.at("residual").get<bool>();
  c.predict_residual = j.at("predict_residual").get<bool>();
  c.kernel_size = j.at("kernel_size").get<int>();
  return c;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4))
    throw FormatError("checkpoint: truncated file " + path);
  return v;
}

}  // namespace

void save_checkpoint(const VNet& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  const std::string cfg = config_to_json(model.config()).dump();
  write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u32(os, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, t] : model.parameters()) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    std::vector<float> buf(t.data().size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw FormatError("checkpoint: failed writing " + path);
}

VNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path);
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  const std::uint32_t cfg_len = read_u32(is, path);
  std::string cfg_str(cfg_len, '\0');
  if (!is.read(cfg_str.data(), cfg_len)) throw FormatError("checkpoint: truncated config in " + path);

  VNet model;
  // Build with the stored topology, then overwrite every parameter tensor.
  const VNetConfig cfg = config_from_json(nlohmann::json::parse(cfg_str));
  model = VNet(cfg, 0);

  const std::uint32_t n_params = read_u32(is, path);
  std::set<std::string> seen;
  for (std::uint32_t p = 0; p < n_params; ++p) {
    const std::uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("checkpoint: truncated name in " + path);
    const std::uint32_t ndim = read_u32(is, path);
    std::vector<int> shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(read_u32(is, path));
      n *= static_cast<std::size_t>(d);
    }
    std::vector<float> buf(n);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(n * sizeof(float))))
      throw FormatError("checkpoint: truncated data for parameter " + name + " in " + path);
    auto it = model.parameters().find(name);
    if (it == model.parameters().end())
      throw FormatError("checkpoint: unknown parameter " + name + " in " + path);
    if (it->second.shape() != shape)
      throw FormatError("checkpoint: shape mismatch for parameter " + name + " in " + path);
    for (std::size_t i = 0; i < n; ++i) it->second.data()[i] = static_cast<double>(buf[i]);
    seen.insert(name);
  }
  if (seen.size() != model.parameters().size())
    throw FormatError("checkpoint: missing parameters in " + path);
  return model;
}

// -- gradient check ---------------------------------------------------------------

GradientCheckReport gradient_check_core(
    const std::function<double()>& loss_fn,
    std::vector<std::pair<std::string, Tensor>>& params,
    const std::map<std::string, std::vector<double>>& analytic_grads, double epsilon,
    double tolerance, double sample_fraction, std::uint64_t seed) {
  GradientCheckReport report;
  report.tolerance = tolerance;

  std::int64_t total = 0;
  for (auto& [name, t] : params) total += t.numel();
  if (total == 0) return report;  // empty model: nothing to check, pass

  std::int64_t n_samples =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(sample_fraction * static_cast<double>(total)));
  n_samples = std::min(n_samples, total);

  Rng rng(seed);
  std::set<std::int64_t> chosen;
  while (static_cast<std::int64_t>(chosen.size()) < n_samples)
    chosen.insert(static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(total))));

  for (std::int64_t flat : chosen) {
    std::int64_t offset = flat;
    for (auto& [name, t] : params) {
      if (offset >= t.numel()) {
        offset -= t.numel();
        continue;
      }
      const std::size_t idx = static_cast<std::size_t>(offset);
      const double saved = t.data()[idx];
      t.data()[idx] = saved + epsilon;
      const double lp = loss_fn();
      t.data()[idx] = saved - epsilon;
      const double lm = loss_fn();
      t.data()[idx] = saved;
      const double fd = (lp - lm) / (2.0 * epsilon);
      const double an = analytic_grads.at(name)[idx];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
      const double rel = std::fabs(fd - an) / denom;
      ++report.n_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name + "[" + std::to_string(idx) + "]";
      }
      break;
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

GradientCheckReport gradient_check(VNet& model, const Tensor& input, const Tensor& target,
                                   double epsilon, double tolerance, double sample_fraction,
                                   std::uint64_t seed) {
  for (auto& [name, t] : model.parameters()) t.zero_grad();
  const Tensor loss = mse_loss(model.forward(input), target);
  loss.backward();

  std::map<std::string, std::vector<double>> grads;
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& [name, t] : model.parameters()) {
    grads[name] = t.grad();
    params.emplace_back(name, t);
  }
  auto loss_fn = [&]() { return mse_loss(model.forward(input), target).data()[0]; };
  return gradient_check_core(loss_fn, params, grads, epsilon, tolerance, sample_fraction, seed);
}

}  // namespace lvce::nn
