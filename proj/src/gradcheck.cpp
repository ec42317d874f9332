#include "occpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "occpose/loss_metrics.hpp"

namespace occpose::nn {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values) v = u(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

// Max relative error between `analytic` and central differences of `f` with
// respect to every entry of `values`.
double compare(std::vector<double>& values, const std::vector<double>& analytic,
               const std::function<double()>& f, double step, const std::vector<std::size_t>* subset = nullptr) {
  double worst = 0.0;
  const std::size_t n = subset ? subset->size() : values.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = subset ? (*subset)[k] : k;
    const double keep = values[i];
    values[i] = keep + step;
    const double up = f();
    values[i] = keep - step;
    const double down = f();
    values[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

void record(std::vector<GradCheck>& out, const std::string& name, double err, std::size_t n) {
  out.push_back({name, err, n});
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheck> check_primitives(std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheck> out;

  // conv1d, stride 1 and 2: loss = <r, conv(x)>
  for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    Tensor x = random_tensor({2, 3, 8}, rng);
    Tensor k = random_tensor({4, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    const Tensor y0 = conv1d_temporal(x, k, &b, stride);
    const Tensor r = random_tensor(y0.shape, rng);
    k.grad.clear();
    b.grad.clear();
    const Tensor dx = conv1d_temporal_backward(x, k, &b, r, stride);
    auto f = [&] { return dot(r, conv1d_temporal(x, k, &b, stride)); };
    const std::string tag = "conv1d(stride " + std::to_string(stride) + ")";
    record(out, tag + ".kernel", compare(k.values, k.grad, f, step), k.size());
    record(out, tag + ".bias", compare(b.values, b.grad, f, step), b.size());
    record(out, tag + ".input", compare(x.values, dx.values, f, step), x.size());
  }

  // batchnorm in both modes
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    Tensor x = random_tensor({3, 4, 5}, rng, -2.0, 2.0);
    Tensor scale = random_tensor({4}, rng, 0.5, 1.5);
    Tensor shift = random_tensor({4}, rng);
    Tensor rm = random_tensor({4}, rng, -0.2, 0.2);
    Tensor rv = random_tensor({4}, rng, 0.5, 1.5);
    BatchNormCache cache;
    const Tensor y0 = batchnorm_1d(x, scale, shift, rm, rv, mode, &cache, false);
    const Tensor r = random_tensor(y0.shape, rng);
    const Tensor dx = batchnorm_1d_backward(cache, scale, shift, r);
    auto f = [&] { return dot(r, batchnorm_1d(x, scale, shift, rm, rv, mode, nullptr, false)); };
    const std::string tag = mode == Mode::Train ? "batchnorm(train)" : "batchnorm(eval)";
    record(out, tag + ".scale", compare(scale.values, scale.grad, f, step), scale.size());
    record(out, tag + ".shift", compare(shift.values, shift.grad, f, step), shift.size());
    record(out, tag + ".input", compare(x.values, dx.values, f, step), x.size());
  }

  {
    // Keep inputs away from the kink at 0.
    Tensor x = random_tensor({2, 3, 4}, rng, 0.1, 1.0);
    std::bernoulli_distribution neg(0.5);
    for (double& v : x.values)
      if (neg(rng)) v = -v;
    const Tensor r = random_tensor(x.shape, rng);
    const Tensor dx = relu_backward(relu(x), r);
    auto f = [&] { return dot(r, relu(x)); };
    record(out, "relu.input", compare(x.values, dx.values, f, step), x.size());
  }
  {
    Tensor x = random_tensor({2, 3, 4}, rng, -4.0, 4.0);
    const Tensor r = random_tensor(x.shape, rng);
    const Tensor dx = sigmoid_backward(sigmoid(x), r);
    auto f = [&] { return dot(r, sigmoid(x)); };
    record(out, "sigmoid.input", compare(x.values, dx.values, f, step), x.size());
  }
  {
    Tensor x = random_tensor({2, 3, 6}, rng);
    const double p = 0.3;
    const std::mt19937_64 mask_rng(rng());
    std::vector<std::uint8_t> mask;
    std::mt19937_64 g = mask_rng;
    dropout(x, p, g, Mode::Train, &mask);
    const Tensor r = random_tensor(x.shape, rng);
    const Tensor dx = dropout_backward(mask, p, r);
    auto f = [&] {
      std::mt19937_64 same = mask_rng;
      return dot(r, dropout(x, p, same, Mode::Train));
    };
    record(out, "dropout.input", compare(x.values, dx.values, f, step), x.size());
  }
  {
    Tensor kp = random_tensor({2, 6, 5}, rng);
    Tensor logits = random_tensor({2, 3, 5}, rng, 0.5, 3.0);
    std::bernoulli_distribution neg(0.5);
    for (double& v : logits.values)
      if (neg(rng)) v = -v;
    const GateResult g = occlusion_gate(kp, logits, 0.5);
    const Tensor r = random_tensor(kp.shape, rng);
    const Tensor dx = occlusion_gate_backward(g, r);
    auto f = [&] { return dot(r, occlusion_gate(kp, logits, 0.5).gated); };
    record(out, "occlusion_gate.keypoints", compare(kp.values, dx.values, f, step), kp.size());
  }
  {
    const std::size_t m = 3, n = 4;
    Tensor pred = random_tensor({m, 3 * n}, rng);
    Tensor gt = random_tensor({m, 3 * n}, rng);
    Tensor occ_pred = random_tensor({m, n, 2}, rng, 0.05, 0.95);
    Tensor occ_gt({m, n, 2});
    std::bernoulli_distribution coin(0.5);
    for (double& v : occ_gt.values) v = coin(rng) ? 1.0 : 0.0;
    const LossWeights w{0.7, 1.3};
    const LossValue lv = combined_loss(pred, gt, occ_pred, occ_gt, w, 0);
    auto f = [&] { return combined_loss(pred, gt, occ_pred, occ_gt, w, 0).total; };
    record(out, "combined_loss.pred3d", compare(pred.values, lv.d_pred3d.values, f, step), pred.size());
    record(out, "combined_loss.occ_pred", compare(occ_pred.values, lv.d_occ_pred.values, f, step), occ_pred.size());
  }
  return out;
}

GradCheck check_network(const TcnConfig& cfg_in, std::uint64_t seed, double step, std::size_t max_coords) {
  TcnConfig cfg = cfg_in;
  cfg.dropout = 0.0;
  std::mt19937_64 rng(seed);
  ParameterStore params = init_tcn_params(cfg, rng());
  // A zero bias with an all-zero occlusion input puts the logit exactly on
  // the gate threshold, where finite differences flip the hard mask.
  std::uniform_real_distribution<double> bias_dist(0.2, 1.0);
  for (double& v : params.get("occ.bias").values) v = rng() % 2 ? bias_dist(rng) : -bias_dist(rng);
  const std::size_t nb = 4;
  const std::size_t n = static_cast<std::size_t>(cfg.joints);
  const std::size_t rf = static_cast<std::size_t>(cfg.receptive_field());
  const std::size_t t_out = static_cast<std::size_t>(cfg.occ_frames());

  const Tensor kp = random_tensor({nb, 2 * n, rf}, rng);
  Tensor occ_in({nb, n, rf});
  Tensor occ_gt({nb, n, t_out});
  std::bernoulli_distribution coin(0.4);
  for (double& v : occ_in.values) v = coin(rng) ? 1.0 : 0.0;
  for (double& v : occ_gt.values) v = coin(rng) ? 1.0 : 0.0;
  const Tensor gt3d = random_tensor({nb, 3 * n}, rng, -0.5, 0.5);
  const LossWeights w{1.0, 1.0};

  auto loss_of = [&](TcnTrace* trace) {
    ForwardOptions opts{Mode::Train, nullptr, trace, nullptr};
    const TcnOutput out = tcn_forward(kp, occ_in, cfg, params, opts);
    return combined_loss(out.pose3d, gt3d, out.occ_prob, occ_gt, w, 0);
  };

  TcnTrace trace;
  const LossValue lv = loss_of(&trace);
  params.zero_grad();
  tcn_backward(trace, lv.d_pred3d, lv.d_occ_pred, cfg, params);

  GradCheck res{"network(" + to_string(cfg.variant) + ")", 0.0, 0};
  auto f = [&] { return loss_of(nullptr).total; };
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    const std::vector<double> analytic = e.tensor.grad;
    if (max_coords == 0 || e.tensor.size() <= max_coords) {
      res.max_rel_error = std::max(res.max_rel_error, compare(e.tensor.values, analytic, f, step));
      res.coords += e.tensor.size();
      continue;
    }
    std::vector<std::size_t> pick(e.tensor.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(max_coords);
    std::sort(pick.begin(), pick.end());
    res.max_rel_error = std::max(res.max_rel_error, compare(e.tensor.values, analytic, f, step, &pick));
    res.coords += max_coords;
  }
  return res;
}

GradSuite run_gradcheck_suite(std::uint64_t seed, double step) {
  GradSuite s;
  s.primitives = check_primitives(seed, step);
  for (const auto& g : s.primitives) s.max_primitive = std::max(s.max_primitive, g.max_rel_error);
  TcnConfig tiny;
  tiny.joints = 3;
  tiny.channels = 8;
  tiny.blocks = 1;
  tiny.kernel_w = 3;
  tiny.dropout = 0.0;
  for (Variant v : {Variant::OneVector, Variant::ManyVectors}) {
    tiny.variant = v;
    s.network.push_back(check_network(tiny, seed + 1, step));
    s.max_network = std::max(s.max_network, s.network.back().max_rel_error);
  }
  return s;
}

}  // namespace occpose::nn
