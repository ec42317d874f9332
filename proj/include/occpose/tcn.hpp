#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "occpose/ops.hpp"
#include "occpose/params.hpp"

namespace occpose::nn {

enum class Variant {
  OneVector,    // occlusion branch down-convolves the window to the center frame
  ManyVectors,  // occlusion branch keeps one vector per input frame
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct TcnConfig {
  int joints = 17;
  int kernel_w = 3;
  int channels = 64;  // 1024 at full scale
  int blocks = 2;
  double dropout = 0.25;
  double gate_tau = 0.5;
  Variant variant = Variant::ManyVectors;

  /// Frames consumed per prediction: (W - 1) * (1 + B) + 1.
  int receptive_field() const { return (kernel_w - 1) * (1 + blocks) + 1; }
  /// Temporal length of the occlusion head output.
  int occ_frames() const { return variant == Variant::OneVector ? 1 : receptive_field(); }
  void validate() const;

  /// key=value lines.
  std::string to_text() const;
  static TcnConfig from_text(const std::string& text);
};

/// Seeded Kaiming (fan-in) initialization; batchnorm scale 1, shift 0.
ParameterStore init_tcn_params(const TcnConfig& cfg, std::uint64_t seed);

struct ConvLayerTrace {
  Tensor input;
  BatchNormCache bn;
  Tensor relu_out;
  std::vector<std::uint8_t> drop_mask;
};

/// Everything the backward pass needs from one forward pass.
struct TcnTrace {
  Tensor occ_in;
  GateResult gate;
  ConvLayerTrace input_layer;
  std::vector<ConvLayerTrace> block_layers;  // two per block
  Tensor head_input;
};

struct TcnOutput {
  Tensor pose3d;    // [B x 3N], joint-major (x, y, z)
  Tensor occ_prob;  // [B x N x T_out]
};

struct ForwardOptions {
  Mode mode = Mode::Eval;
  std::mt19937_64* dropout_rng = nullptr;  // required for Train with dropout > 0
  TcnTrace* trace = nullptr;
  // Train mode only: fold batch statistics into the stored running stats.
  ParameterStore* running_stats = nullptr;
};

/// seq2d is [B x 2N x T] with channels (x0, y0, x1, y1, ...); occ_in is
/// [B x N x T] in [0, 1]. T must equal cfg.receptive_field().
TcnOutput tcn_forward(const Tensor& seq2d, const Tensor& occ_in, const TcnConfig& cfg,
                      const ParameterStore& params, const ForwardOptions& opts = {});

/// Accumulates parameter gradients for the loss whose derivatives with
/// respect to the two outputs are given.
void tcn_backward(const TcnTrace& trace, const Tensor& d_pose3d, const Tensor& d_occ_prob,
                  const TcnConfig& cfg, ParameterStore& params);

}  // namespace occpose::nn
