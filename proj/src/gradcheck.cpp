#include "cafct/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cafct/gates_decoder.hpp"
#include "cafct/objective.hpp"
#include "cafct/ops.hpp"

namespace cafct {

Tensor rand_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  const int64_t n = numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor rand_binary(Shape shape, Rng& rng, double p_one) {
  const int64_t n = numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = rng.uniform() < p_one ? 1.0 : 0.0;
  return Tensor::from_data(std::move(shape), std::move(data), false);
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  check_arg(eps > 0.0, "finite_diff_grad: eps must be positive");
  Tensor probe = x.clone();
  std::vector<double> grad(static_cast<size_t>(x.size()));
  NoGradGuard no_grad;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + eps;
    const double up = f(probe);
    probe.data()[i] = saved - eps;
    const double down = f(probe);
    probe.data()[i] = saved;
    grad[static_cast<size_t>(i)] = (up - down) / (2.0 * eps);
  }
  return Tensor::from_data(x.shape(), std::move(grad));
}

double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

double check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> wiggle,
                       Rng& rng, double eps, int sample_cap, bool corrupt, double denom_floor) {
  for (auto& t : wiggle) {
    check_arg(t.requires_grad(), "check_gradients: wiggle tensor does not require grad");
    t.grad_data();
    t.zero_grad();
  }
  const Tensor loss = loss_fn();
  backward(loss);
  if (corrupt && !wiggle.empty()) {
    double* g = wiggle[0].grad_data();
    for (int64_t i = 0; i < wiggle[0].size(); ++i) g[i] += 1.0;
  }

  const auto eval = [&](uint64_t* signature) {
    NoGradGuard no_grad;
    ops::set_activation_sign_tracking(true);
    ops::reset_activation_signature();
    const double value = loss_fn().item();
    *signature = ops::activation_signature();
    ops::set_activation_sign_tracking(false);
    return value;
  };

  double worst = 0.0;
  int64_t evaluated = 0;
  int64_t skipped = 0;
  for (auto& t : wiggle) {
    std::vector<int64_t> probes;
    if (sample_cap <= 0 || t.size() <= sample_cap) {
      probes.resize(static_cast<size_t>(t.size()));
      for (int64_t i = 0; i < t.size(); ++i) probes[static_cast<size_t>(i)] = i;
    } else {
      std::unordered_set<int64_t> picked;
      while (static_cast<int>(picked.size()) < sample_cap) {
        picked.insert(rng.uniform_int(0, static_cast<int>(t.size()) - 1));
      }
      probes.assign(picked.begin(), picked.end());
      std::sort(probes.begin(), probes.end());
    }
    const std::vector<double>& analytic = t.grad_vec();
    for (int64_t j : probes) {
      const double saved = t.data()[j];
      bool smooth = true;
      uint64_t sig_first = 0;
      bool have_first = false;
      const auto central = [&](double h) {
        uint64_t sig_up = 0, sig_down = 0;
        t.data()[j] = saved + h;
        const double up = eval(&sig_up);
        t.data()[j] = saved - h;
        const double down = eval(&sig_down);
        t.data()[j] = saved;
        smooth = smooth && sig_up == sig_down && (!have_first || sig_up == sig_first);
        sig_first = sig_up;
        have_first = true;
        return (up - down) / (2.0 * h);
      };
      const double fd_wide = central(eps);
      const double fd_half = central(eps / 2.0);
      // A differing activation pattern means a probe straddled a ReLU kink,
      // where the central difference is not the derivative.
      if (!smooth) {
        ++skipped;
        continue;
      }
      ++evaluated;
      // Richardson extrapolation cancels the O(eps^2) truncation term, which
      // dominates along high-fan-out coordinates of deep composites.
      const double fd = (4.0 * fd_half - fd_wide) / 3.0;
      const double err = std::fabs(analytic[static_cast<size_t>(j)] - fd) /
                         std::max({std::fabs(analytic[static_cast<size_t>(j)]), std::fabs(fd), denom_floor});
      worst = std::max(worst, err);
    }
  }
  // Guard against a vacuous pass: the detectors may discard the odd probe but
  // never the bulk of them.
  check_arg(evaluated >= skipped, "check_gradients: most probes fell in nonsmooth regions");
  return worst;
}

namespace {

Tensor project(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

// ---- numerics -------------------------------------------------------------

double suite_conv2d(Rng& rng, bool corrupt) {
  double worst = 0.0;
  {
    Tensor x = rand_tensor({1, 2, 6, 6}, rng);
    Tensor w = rand_tensor({3, 2, 3, 3}, rng);
    Tensor b = rand_tensor({3}, rng);
    Tensor proj = rand_tensor({1, 3, 6, 6}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::conv2d(x, w, b, 1, 1, 1), proj); };
    worst = std::max(worst, check_gradients(loss, {x, w, b}, rng, 1e-5, 0, corrupt));
  }
  {
    Tensor x = rand_tensor({2, 2, 9, 9}, rng);
    Tensor w = rand_tensor({2, 2, 3, 3}, rng);
    Tensor proj = rand_tensor({2, 2, 5, 5}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::conv2d(x, w, Tensor(), 2, 2, 2), proj); };
    worst = std::max(worst, check_gradients(loss, {x, w}, rng));
  }
  return worst;
}

double suite_batch_norm(Rng& rng, bool corrupt) {
  double worst = 0.0;
  {
    Tensor x = rand_tensor({2, 3, 4, 4}, rng, -2, 2);
    Tensor gamma = rand_tensor({3}, rng, 0.5, 1.5);
    Tensor beta = rand_tensor({3}, rng, -0.5, 0.5);
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);
    Tensor nu = Tensor::zeros({1});
    Tensor proj = rand_tensor({2, 3, 4, 4}, rng, -1, 1, false);
    auto loss = [&]() mutable {
      return project(ops::batch_norm(x, gamma, beta, rm, rv, nu, true), proj);
    };
    worst = std::max(worst, check_gradients(loss, {x, gamma, beta}, rng, 1e-5, 0, corrupt));
  }
  {
    Tensor x = rand_tensor({2, 3, 4, 4}, rng, -2, 2);
    Tensor gamma = rand_tensor({3}, rng, 0.5, 1.5);
    Tensor beta = rand_tensor({3}, rng, -0.5, 0.5);
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);
    Tensor nu = Tensor::zeros({1});
    {
      NoGradGuard no_grad;
      Tensor warmup = rand_tensor({4, 3, 4, 4}, rng, -2, 2, false);
      ops::batch_norm(warmup, gamma, beta, rm, rv, nu, true);
    }
    Tensor proj = rand_tensor({2, 3, 4, 4}, rng, -1, 1, false);
    auto loss = [&]() mutable {
      return project(ops::batch_norm(x, gamma, beta, rm, rv, nu, false), proj);
    };
    worst = std::max(worst, check_gradients(loss, {x, gamma, beta}, rng));
  }
  return worst;
}

double suite_pooling(Rng& rng, bool corrupt) {
  Tensor x = rand_tensor({2, 3, 4, 4}, rng);
  Tensor proj = rand_tensor({2, 3, 1, 1}, rng, -1, 1, false);
  auto loss = [&] { return project(ops::global_avg_pool(x), proj); };
  return check_gradients(loss, {x}, rng, 1e-5, 0, corrupt);
}

double suite_bilinear(Rng& rng, bool corrupt) {
  double worst = 0.0;
  {
    Tensor x = rand_tensor({1, 2, 5, 7}, rng);
    Tensor proj = rand_tensor({1, 2, 8, 10}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::bilinear_resize(x, 8, 10), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng, 1e-5, 0, corrupt));
  }
  {
    Tensor x = rand_tensor({1, 2, 5, 7}, rng);
    Tensor proj = rand_tensor({1, 2, 3, 4}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::bilinear_resize(x, 3, 4), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng));
  }
  return worst;
}

double suite_activations(Rng& rng, bool corrupt) {
  double worst = 0.0;
  {
    // Keep inputs away from the ReLU kink; central differences straddle it.
    std::vector<double> vals(40);
    for (auto& v : vals) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.5);
    Tensor x = Tensor::from_data({40}, std::move(vals), true);
    Tensor proj = rand_tensor({40}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::relu(x), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng, 1e-5, 0, corrupt));
  }
  {
    Tensor x = rand_tensor({40}, rng, -2.5, 2.5);
    Tensor proj = rand_tensor({40}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::sigmoid(x), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng));
  }
  {
    Tensor x = rand_tensor({3, 7}, rng, -2, 2);
    Tensor proj = rand_tensor({3, 7}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::softmax(x, 1), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng));
  }
  {
    Tensor x = rand_tensor({2, 3, 4}, rng, -2, 2);
    Tensor proj = rand_tensor({2, 3, 4}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::softmax(x, 1), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng));
  }
  return worst;
}

double suite_linear(Rng& rng, bool corrupt) {
  Tensor x = rand_tensor({5, 4}, rng);
  Tensor w = rand_tensor({3, 4}, rng);
  Tensor b = rand_tensor({3}, rng);
  Tensor proj = rand_tensor({5, 3}, rng, -1, 1, false);
  auto loss = [&] { return project(ops::linear(x, w, b), proj); };
  return check_gradients(loss, {x, w, b}, rng, 1e-5, 0, corrupt);
}

double suite_matmul(Rng& rng, bool corrupt) {
  double worst = 0.0;
  {
    Tensor a = rand_tensor({2, 3, 4}, rng);
    Tensor b = rand_tensor({2, 4, 5}, rng);
    Tensor proj = rand_tensor({2, 3, 5}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::matmul(a, b), proj); };
    worst = std::max(worst, check_gradients(loss, {a, b}, rng, 1e-5, 0, corrupt));
  }
  {
    Tensor a = rand_tensor({2, 3, 4}, rng);
    Tensor b = rand_tensor({2, 5, 4}, rng);
    Tensor proj = rand_tensor({2, 3, 5}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::matmul_nt(a, b), proj); };
    worst = std::max(worst, check_gradients(loss, {a, b}, rng));
  }
  return worst;
}

double suite_layer_norm(Rng& rng, bool corrupt) {
  Tensor x = rand_tensor({6, 8}, rng, -2, 2);
  Tensor gamma = rand_tensor({8}, rng, 0.5, 1.5);
  Tensor beta = rand_tensor({8}, rng, -0.5, 0.5);
  Tensor proj = rand_tensor({6, 8}, rng, -1, 1, false);
  auto loss = [&] { return project(ops::layer_norm(x, gamma, beta), proj); };
  return check_gradients(loss, {x, gamma, beta}, rng, 1e-5, 0, corrupt);
}

double suite_attention(Rng& rng, bool corrupt) {
  ops::MhsaParams p;
  p.wq = rand_tensor({8, 8}, rng, -0.5, 0.5);
  p.bq = rand_tensor({8}, rng, -0.2, 0.2);
  p.wk = rand_tensor({8, 8}, rng, -0.5, 0.5);
  p.wv = rand_tensor({8, 8}, rng, -0.5, 0.5);
  p.bv = rand_tensor({8}, rng, -0.2, 0.2);
  p.wo = rand_tensor({8, 8}, rng, -0.5, 0.5);
  p.bo = rand_tensor({8}, rng, -0.2, 0.2);
  Tensor x = rand_tensor({2, 5, 8}, rng);
  Tensor proj = rand_tensor({2, 5, 8}, rng, -1, 1, false);
  auto loss = [&] { return project(ops::multi_head_self_attention(x, p, 2), proj); };
  return check_gradients(loss, {x, p.wq, p.bq, p.wk, p.wv, p.bv, p.wo, p.bo}, rng, 1e-5, 0, corrupt);
}

double suite_tensor_ops(Rng& rng, bool corrupt) {
  double worst = 0.0;
  {
    Tensor a = rand_tensor({3, 4, 5}, rng);
    Tensor b = rand_tensor({1, 4, 5}, rng);
    Tensor proj = rand_tensor({3, 4, 5}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::add(a, b), proj); };
    worst = std::max(worst, check_gradients(loss, {a, b}, rng, 1e-5, 0, corrupt));
  }
  {
    Tensor a = rand_tensor({20}, rng);
    Tensor b = rand_tensor({20}, rng);
    Tensor proj = rand_tensor({20}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::scale(ops::mul(a, b), 1.7), proj); };
    worst = std::max(worst, check_gradients(loss, {a, b}, rng));
  }
  {
    Tensor a = rand_tensor({2, 2, 3}, rng);
    Tensor b = rand_tensor({2, 1, 3}, rng);
    Tensor c = rand_tensor({2, 4, 3}, rng);
    Tensor proj = rand_tensor({2, 7, 3}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::concat({a, b, c}, 1), proj); };
    worst = std::max(worst, check_gradients(loss, {a, b, c}, rng));
  }
  {
    Tensor x = rand_tensor({2, 3, 4, 5}, rng);
    Tensor proj = rand_tensor({4, 2, 5, 3}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::permute(x, {2, 0, 3, 1}), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng));
  }
  {
    Tensor x = rand_tensor({3, 8}, rng);
    Tensor proj = rand_tensor({2, 12}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::reshape(x, {2, 12}), proj); };
    worst = std::max(worst, check_gradients(loss, {x}, rng));
  }
  {
    Tensor x = rand_tensor({2, 3, 4, 4}, rng);
    Tensor s = rand_tensor({2, 3}, rng, 0.1, 1.0);
    Tensor proj = rand_tensor({2, 3, 4, 4}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::scale_channels(x, s), proj); };
    worst = std::max(worst, check_gradients(loss, {x, s}, rng));
  }
  {
    Tensor x = rand_tensor({2, 3, 4, 4}, rng);
    Tensor a = rand_tensor({2, 1, 4, 4}, rng, 0.1, 1.0);
    Tensor proj = rand_tensor({2, 3, 4, 4}, rng, -1, 1, false);
    auto loss = [&] { return project(ops::scale_spatial(x, a), proj); };
    worst = std::max(worst, check_gradients(loss, {x, a}, rng));
  }
  return worst;
}

// ---- architecture modules ---------------------------------------------

EncoderConfig tiny_encoder_config() {
  EncoderConfig cfg;
  cfg.input_size = 16;
  cfg.base_channels = 4;
  cfg.patch_size = 2;
  cfg.depth_per_stage = 1;
  cfg.heads = 2;
  cfg.cnn_blocks_per_stage = 2;
  return cfg;
}

template <class Encoder>
double check_encoder(Encoder& enc, const EncoderConfig& cfg, Rng& rng, bool corrupt) {
  Tensor image = rand_tensor({1, 1, cfg.input_size, cfg.input_size}, rng, 0, 1);
  const auto channels = cfg.stage_channels();
  const auto sizes = cfg.stage_sizes();
  std::vector<Tensor> projections;
  for (int i = 0; i < 4; ++i) {
    projections.push_back(rand_tensor({1, channels[static_cast<size_t>(i)], sizes[static_cast<size_t>(i)],
                                       sizes[static_cast<size_t>(i)]},
                                      rng, -1, 1, false));
  }
  auto loss = [&]() {
    const FeaturePyramid p = enc.forward(image, true);
    Tensor acc = project(p.levels[0], projections[0]);
    for (int i = 1; i < 4; ++i) acc = ops::add(acc, project(p.levels[static_cast<size_t>(i)], projections[static_cast<size_t>(i)]));
    return acc;
  };
  double worst = check_gradients(loss, {image}, rng, 1e-4, 0, corrupt, 1e-7);

  std::vector<Parameter> params;
  enc.visit_params("enc", [&](const std::string& name, Tensor& t) { params.push_back({name, t}); });
  std::vector<Tensor> wiggle;
  for (auto& p : params) wiggle.push_back(p.tensor);
  worst = std::max(worst, check_gradients(loss, wiggle, rng, 1e-4, 4, false, 1e-7));
  return worst;
}

double suite_cnn_encoder(Rng& rng, bool corrupt) {
  const EncoderConfig cfg = tiny_encoder_config();
  CnnEncoder enc(cfg, rng);
  return check_encoder(enc, cfg, rng, corrupt);
}

double suite_transformer_encoder(Rng& rng, bool corrupt) {
  const EncoderConfig cfg = tiny_encoder_config();
  TransformerEncoder enc(cfg, rng);
  return check_encoder(enc, cfg, rng, corrupt);
}

double suite_se_block(Rng& rng, bool corrupt) {
  SeBlock se(8, 4, rng);
  Tensor x = rand_tensor({1, 8, 5, 5}, rng);
  Tensor proj = rand_tensor({1, 8, 5, 5}, rng, -1, 1, false);
  auto loss = [&] { return project(se.forward(x), proj); };
  std::vector<Tensor> wiggle{x};
  se.visit_params("se", [&](const std::string&, Tensor& t) { wiggle.push_back(t); });
  return check_gradients(loss, wiggle, rng, 1e-5, 0, corrupt);
}

double suite_aff_fuse(Rng& rng, bool corrupt) {
  AffFuse aff(4, 2, rng);
  Tensor f_cnn = rand_tensor({1, 4, 6, 6}, rng);
  Tensor f_trans = rand_tensor({1, 4, 6, 6}, rng);
  Tensor proj = rand_tensor({1, 4, 6, 6}, rng, -1, 1, false);
  auto loss = [&]() mutable { return project(aff.forward(f_cnn, f_trans, true), proj); };
  std::vector<Tensor> wiggle{f_cnn, f_trans};
  aff.visit_params("aff", [&](const std::string&, Tensor& t) { wiggle.push_back(t); });
  return check_gradients(loss, wiggle, rng, 1e-4, 0, corrupt, 1e-7);
}

double check_aspp(int channels, std::array<int, 3> rates, int hw, Rng& rng, bool corrupt) {
  Aspp aspp(channels, rates, rng);
  // Batch of 2: at batch 1 the image-pooling branch feeds BN one element per
  // channel, whose conv gradients are then exactly zero and unverifiable
  // against finite differences.
  Tensor x = rand_tensor({2, channels, hw, hw}, rng);
  Tensor proj = rand_tensor({2, channels, hw, hw}, rng, -1, 1, false);
  auto loss = [&]() mutable { return project(aspp.forward(x, true), proj); };
  std::vector<Tensor> wiggle{x};
  aspp.visit_params("aspp", [&](const std::string&, Tensor& t) { wiggle.push_back(t); });
  // Narrow probe window: wide ReLU nets put the odd pre-activation within
  // any larger eps of its kink.
  return check_gradients(loss, wiggle, rng, 1e-5, 0, corrupt, 1e-7);
}

double suite_aspp_small(Rng& rng, bool corrupt) { return check_aspp(4, {1, 2, 3}, 9, rng, corrupt); }

double suite_aspp_paper(Rng& rng, bool corrupt) { return check_aspp(4, {6, 12, 18}, 20, rng, corrupt); }

double suite_attention_gate(Rng& rng, bool corrupt) {
  AttentionGate gate(4, 8, 2, rng);
  Tensor x = rand_tensor({1, 4, 6, 6}, rng);
  Tensor g = rand_tensor({1, 8, 3, 3}, rng);
  Tensor proj = rand_tensor({1, 4, 6, 6}, rng, -1, 1, false);
  auto loss = [&] { return project(gate.forward(x, g), proj); };
  std::vector<Tensor> wiggle{x, g};
  gate.visit_params("gate", [&](const std::string&, Tensor& t) { wiggle.push_back(t); });
  return check_gradients(loss, wiggle, rng, 1e-5, 0, corrupt);
}

double suite_model(Rng& rng, bool corrupt) {
  ModelConfig cfg;
  cfg.encoder = tiny_encoder_config();
  cfg.se_ratio = 4;
  cfg.aspp_rates = {2, 3, 4};
  CafctModel model(cfg, rng);
  Tensor image = rand_tensor({1, 1, 16, 16}, rng, 0, 1);
  auto loss = [&]() mutable {
    const Tensor logits = model.forward(image, true);
    return ops::sum(ops::mul(logits, logits));
  };
  std::vector<Tensor> wiggle{image};
  for (auto& p : model.parameters()) wiggle.push_back(p.tensor);
  // Floor 1e-5: dead-unit coordinates have exactly-zero gradients, and the
  // finite-difference side of the comparison bottoms out at rounding noise
  // of roughly |loss|*u/eps.
  return check_gradients(loss, wiggle, rng, 1e-4, 4, corrupt, 1e-5);
}

// ---- objective -------------------------------------------------------

double suite_bce(Rng& rng, bool corrupt) {
  Tensor logits = rand_tensor({1, 1, 4, 4}, rng, -3, 3);
  Tensor target = rand_binary({1, 1, 4, 4}, rng);
  auto loss = [&] { return bce_loss(logits, target); };
  return check_gradients(loss, {logits}, rng, 1e-5, 0, corrupt);
}

double suite_dice(Rng& rng, bool corrupt) {
  Tensor logits = rand_tensor({1, 1, 4, 4}, rng, -3, 3);
  Tensor target = rand_binary({1, 1, 4, 4}, rng);
  auto loss = [&] { return dice_loss(logits, target); };
  return check_gradients(loss, {logits}, rng, 1e-5, 0, corrupt);
}

double suite_bce_dice(Rng& rng, bool corrupt) {
  Tensor logits = rand_tensor({2, 1, 4, 4}, rng, -3, 3);
  Tensor target = rand_binary({2, 1, 4, 4}, rng);
  auto loss = [&] { return bce_dice_loss(logits, target, 0.7, 1.3); };
  return check_gradients(loss, {logits}, rng, 1e-5, 0, corrupt);
}

struct SuiteDef {
  const char* scope;
  const char* name;
  double tol;
  double (*run)(Rng&, bool);
};

const SuiteDef kSuites[] = {
    {"numerics", "conv2d", 1e-4, suite_conv2d},
    {"numerics", "batch_norm", 1e-4, suite_batch_norm},
    {"numerics", "global_avg_pool", 1e-4, suite_pooling},
    {"numerics", "bilinear_resize", 1e-4, suite_bilinear},
    {"numerics", "activations", 1e-4, suite_activations},
    {"numerics", "linear", 1e-4, suite_linear},
    {"numerics", "matmul", 1e-4, suite_matmul},
    {"numerics", "layer_norm", 1e-4, suite_layer_norm},
    {"numerics", "attention", 1e-4, suite_attention},
    {"numerics", "tensor_ops", 1e-4, suite_tensor_ops},
    {"encoders", "cnn_encoder", 1e-4, suite_cnn_encoder},
    {"encoders", "transformer_encoder", 1e-4, suite_transformer_encoder},
    {"fusion", "se_block", 1e-4, suite_se_block},
    {"fusion", "aff_fuse", 1e-4, suite_aff_fuse},
    {"aspp", "aspp_small_rates", 1e-4, suite_aspp_small},
    {"aspp", "aspp_paper_rates", 1e-4, suite_aspp_paper},
    {"gates_decoder", "attention_gate", 1e-4, suite_attention_gate},
    {"model", "end_to_end", 1e-3, suite_model},
    {"objective", "bce_loss", 1e-5, suite_bce},
    {"objective", "dice_loss", 1e-5, suite_dice},
    {"objective", "bce_dice_loss", 1e-5, suite_bce_dice},
};

}  // namespace

const std::vector<std::string>& grad_check_scopes() {
  static const std::vector<std::string> scopes = {
      "numerics", "encoders", "fusion", "aspp", "gates_decoder", "model", "objective", "all"};
  return scopes;
}

std::vector<GradCheckResult> run_grad_check(const std::string& scope, uint64_t seed, bool corrupt) {
  const auto& scopes = grad_check_scopes();
  check_arg(std::find(scopes.begin(), scopes.end(), scope) != scopes.end(),
            "grad_check: unknown scope '" + scope + "'");
  std::vector<GradCheckResult> results;
  uint64_t salt = 0;
  bool corrupt_pending = corrupt;
  for (const auto& suite : kSuites) {
    ++salt;
    if (scope != "all" && scope != suite.scope) continue;
    Rng rng(seed * 1000003 + salt);
    GradCheckResult r;
    r.suite = std::string(suite.scope) + "/" + suite.name;
    r.tolerance = suite.tol;
    r.worst = suite.run(rng, corrupt_pending);
    corrupt_pending = false;
    r.passed = r.worst < r.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace cafct
