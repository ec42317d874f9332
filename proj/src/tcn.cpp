#include "occpose/tcn.hpp"

#include <cmath>
#include <sstream>

#include "occpose/errors.hpp"

namespace occpose::nn {

namespace {

std::string block_prefix(int b, int layer) {
  return "block" + std::to_string(b) + ".layer" + std::to_string(layer);
}

void add_conv_bn(ParameterStore& p, const std::string& prefix, std::size_t cout, std::size_t cin,
                 std::size_t w, std::mt19937_64& rng) {
  Tensor& k = p.add(prefix + ".conv", {cout, cin, w});
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cin * w)));
  for (double& v : k.values) v = dist(rng);
  p.add(prefix + ".bn.scale", {cout}, true, 1.0);
  p.add(prefix + ".bn.shift", {cout}, true, 0.0);
  p.add(prefix + ".bn.running_mean", {cout}, false, 0.0);
  p.add(prefix + ".bn.running_var", {cout}, false, 1.0);
}

// conv -> batchnorm -> relu -> dropout
Tensor conv_layer_forward(const Tensor& x, const std::string& prefix, const TcnConfig& cfg,
                          const ParameterStore& params, const ForwardOptions& opts,
                          ConvLayerTrace* trace) {
  const Tensor z = conv1d_temporal(x, params.get(prefix + ".conv"), nullptr);
  const std::string rm = prefix + ".bn.running_mean";
  const std::string rv = prefix + ".bn.running_var";
  Tensor bn_out;
  BatchNormCache* cache = trace ? &trace->bn : nullptr;
  if (opts.mode == Mode::Train && opts.running_stats) {
    bn_out = batchnorm_1d(z, params.get(prefix + ".bn.scale"), params.get(prefix + ".bn.shift"),
                          opts.running_stats->get(rm), opts.running_stats->get(rv), opts.mode, cache);
  } else {
    Tensor mean = params.get(rm);
    Tensor var = params.get(rv);
    bn_out = batchnorm_1d(z, params.get(prefix + ".bn.scale"), params.get(prefix + ".bn.shift"),
                          mean, var, opts.mode, cache, false);
  }
  Tensor act = relu(bn_out);
  Tensor out;
  if (opts.mode == Mode::Train && cfg.dropout > 0.0) {
    if (!opts.dropout_rng) throw ConfigError("train-mode dropout needs a seeded generator");
    out = dropout(act, cfg.dropout, *opts.dropout_rng, opts.mode, trace ? &trace->drop_mask : nullptr);
  } else {
    if (trace) trace->drop_mask.assign(act.size(), 1);
    out = act;
  }
  if (trace) {
    trace->input = x;
    trace->relu_out = std::move(act);
  }
  return out;
}

Tensor conv_layer_backward(const ConvLayerTrace& trace, const std::string& prefix,
                           const TcnConfig& cfg, ParameterStore& params, const Tensor& dy,
                           bool need_dx) {
  Tensor d = dropout_backward(trace.drop_mask, cfg.dropout, dy);
  d = relu_backward(trace.relu_out, d);
  d = batchnorm_1d_backward(trace.bn, params.get(prefix + ".bn.scale"),
                            params.get(prefix + ".bn.shift"), d);
  return conv1d_temporal_backward(trace.input, params.get(prefix + ".conv"), nullptr, d, 1, need_dx);
}

// Center crop along time, used to align the residual with the shorter branch.
Tensor crop_time(const Tensor& x, std::size_t t_out) {
  const std::size_t nb = x.shape[0], nc = x.shape[1], t = x.shape[2];
  const std::size_t off = (t - t_out) / 2;
  Tensor y({nb, nc, t_out});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < t_out; ++i) y.at(b, c, i) = x.at(b, c, i + off);
  return y;
}

Tensor uncrop_time(const Tensor& dy, std::size_t t_in) {
  const std::size_t nb = dy.shape[0], nc = dy.shape[1], t_out = dy.shape[2];
  const std::size_t off = (t_in - t_out) / 2;
  Tensor dx({nb, nc, t_in});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t i = 0; i < t_out; ++i) dx.at(b, c, i + off) = dy.at(b, c, i);
  return dx;
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::OneVector ? "one" : "many"; }

Variant variant_from_string(const std::string& s) {
  if (s == "one" || s == "OneVector") return Variant::OneVector;
  if (s == "many" || s == "ManyVectors") return Variant::ManyVectors;
  throw ConfigError("unknown variant '" + s + "' (expected one|many)");
}

void TcnConfig::validate() const {
  if (joints < 1) throw ConfigError("joints must be >= 1");
  if (kernel_w < 1 || kernel_w % 2 == 0) throw ConfigError("kernel_w must be odd and >= 1");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (blocks < 0) throw ConfigError("blocks must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(gate_tau > 0.0 && gate_tau < 1.0)) throw ConfigError("gate_tau must be in (0, 1)");
}

std::string TcnConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "joints=" << joints << "\n"
     << "kernel_w=" << kernel_w << "\n"
     << "channels=" << channels << "\n"
     << "blocks=" << blocks << "\n"
     << "dropout=" << dropout << "\n"
     << "gate_tau=" << gate_tau << "\n"
     << "variant=" << to_string(variant) << "\n"
     << "receptive_field=" << receptive_field() << "\n";
  return os.str();
}

TcnConfig TcnConfig::from_text(const std::string& text) {
  TcnConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "joints") cfg.joints = std::stoi(val);
      else if (key == "kernel_w") cfg.kernel_w = std::stoi(val);
      else if (key == "channels") cfg.channels = std::stoi(val);
      else if (key == "blocks") cfg.blocks = std::stoi(val);
      else if (key == "dropout") cfg.dropout = std::stod(val);
      else if (key == "gate_tau") cfg.gate_tau = std::stod(val);
      else if (key == "variant") cfg.variant = variant_from_string(val);
      else if (key == "receptive_field") continue;  // derived
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for '" + key + "': " + val);
    }
  }
  cfg.validate();
  return cfg;
}

ParameterStore init_tcn_params(const TcnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterStore p;
  const std::size_t n = static_cast<std::size_t>(cfg.joints);
  const std::size_t c = static_cast<std::size_t>(cfg.channels);
  const std::size_t w = static_cast<std::size_t>(cfg.kernel_w);

  const std::size_t occ_w = cfg.variant == Variant::OneVector
                                ? static_cast<std::size_t>(cfg.receptive_field())
                                : 1;
  Tensor& occ_k = p.add("occ.conv", {n, n, occ_w});
  std::normal_distribution<double> occ_dist(0.0, std::sqrt(2.0 / static_cast<double>(n * occ_w)));
  for (double& v : occ_k.values) v = occ_dist(rng);
  p.add("occ.bias", {n});

  add_conv_bn(p, "input", c, 2 * n, w, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    add_conv_bn(p, block_prefix(b, 0), c, c, w, rng);
    add_conv_bn(p, block_prefix(b, 1), c, c, 1, rng);
  }
  Tensor& head = p.add("head.conv", {3 * n, c, 1});
  std::normal_distribution<double> head_dist(0.0, std::sqrt(2.0 / static_cast<double>(c)));
  for (double& v : head.values) v = head_dist(rng);
  p.add("head.bias", {3 * n});
  return p;
}

TcnOutput tcn_forward(const Tensor& seq2d, const Tensor& occ_in, const TcnConfig& cfg,
                      const ParameterStore& params, const ForwardOptions& opts) {
  const std::size_t n = static_cast<std::size_t>(cfg.joints);
  const std::size_t rf = static_cast<std::size_t>(cfg.receptive_field());
  if (seq2d.rank() != 3 || seq2d.shape[1] != 2 * n)
    throw ShapeMismatch("keypoint window must be [B x " + std::to_string(2 * n) + " x T], got " +
                        seq2d.shape_string());
  if (seq2d.shape[2] != rf)
    throw ConfigError("window length " + std::to_string(seq2d.shape[2]) +
                      " != receptive field " + std::to_string(rf));
  if (occ_in.shape != std::vector<std::size_t>{seq2d.shape[0], n, rf})
    throw ShapeMismatch("occlusion input " + occ_in.shape_string() + " vs keypoints " +
                        seq2d.shape_string());

  TcnTrace* trace = opts.trace;
  const Tensor logits = conv1d_temporal(occ_in, params.get("occ.conv"), &params.get("occ.bias"));
  GateResult gate = occlusion_gate(seq2d, logits, cfg.gate_tau);

  Tensor h = conv_layer_forward(gate.gated, "input", cfg, params, opts,
                                trace ? &trace->input_layer : nullptr);
  if (trace) trace->block_layers.assign(static_cast<std::size_t>(2 * cfg.blocks), {});
  for (int b = 0; b < cfg.blocks; ++b) {
    Tensor a = conv_layer_forward(h, block_prefix(b, 0), cfg, params, opts,
                                  trace ? &trace->block_layers[2 * b] : nullptr);
    a = conv_layer_forward(a, block_prefix(b, 1), cfg, params, opts,
                           trace ? &trace->block_layers[2 * b + 1] : nullptr);
    const Tensor res = crop_time(h, a.shape[2]);
    for (std::size_t i = 0; i < a.size(); ++i) a.values[i] += res.values[i];
    h = std::move(a);
  }
  const Tensor head = conv1d_temporal(h, params.get("head.conv"), &params.get("head.bias"));

  TcnOutput out;
  out.pose3d = Tensor({head.shape[0], head.shape[1]}, head.values);
  out.occ_prob = gate.occ_prob;
  if (trace) {
    trace->occ_in = occ_in;
    trace->gate = std::move(gate);
    trace->head_input = std::move(h);
  }
  return out;
}

void tcn_backward(const TcnTrace& trace, const Tensor& d_pose3d, const Tensor& d_occ_prob,
                  const TcnConfig& cfg, ParameterStore& params) {
  const std::size_t nb = trace.head_input.shape[0];
  if (d_pose3d.size() != nb * 3 * static_cast<std::size_t>(cfg.joints))
    throw ShapeMismatch("pose gradient " + d_pose3d.shape_string());
  if (d_occ_prob.shape != trace.gate.occ_prob.shape)
    throw ShapeMismatch("occlusion gradient " + d_occ_prob.shape_string() + " vs " +
                        trace.gate.occ_prob.shape_string());

  const Tensor d_head({nb, d_pose3d.size() / nb, 1}, d_pose3d.values);
  Tensor d_h = conv1d_temporal_backward(trace.head_input, params.get("head.conv"),
                                        &params.get("head.bias"), d_head);
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const auto& l0 = trace.block_layers[2 * b];
    const auto& l1 = trace.block_layers[2 * b + 1];
    Tensor d_res = uncrop_time(d_h, l0.input.shape[2]);
    Tensor d = conv_layer_backward(l1, block_prefix(b, 1), cfg, params, d_h, true);
    d = conv_layer_backward(l0, block_prefix(b, 0), cfg, params, d, true);
    for (std::size_t i = 0; i < d.size(); ++i) d.values[i] += d_res.values[i];
    d_h = std::move(d);
  }
  // The keypoints are data, so the trunk stops at the input convolution.
  conv_layer_backward(trace.input_layer, "input", cfg, params, d_h, false);

  // Gating is straight-through, so the occlusion branch learns only from the
  // occlusion term of the loss.
  const Tensor d_logits = sigmoid_backward(trace.gate.occ_prob, d_occ_prob);
  conv1d_temporal_backward(trace.occ_in, params.get("occ.conv"), &params.get("occ.bias"), d_logits, 1,
                           false);
}

}  // namespace occpose::nn
