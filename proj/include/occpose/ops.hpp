#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "occpose/tensor.hpp"

namespace occpose::nn {

enum class Mode { Train, Eval };

// All ops take activations as [C x T] or [B x C x T] and return the same rank.
// Backward functions accumulate parameter gradients into the parameter's
// `grad` buffer and return the gradient with respect to the input.

/// Valid (unpadded) cross-correlation over time. `bias` may be null.
/// k is [C_out x C_in x W]; output length floor((T - W) / stride) + 1.
Tensor conv1d_temporal(const Tensor& x, const Tensor& k, const Tensor* bias, std::size_t stride = 1);
Tensor conv1d_temporal_backward(const Tensor& x, Tensor& k, Tensor* bias, const Tensor& dy,
                                std::size_t stride = 1, bool need_dx = true);

struct BatchNormCache {
  Mode mode = Mode::Eval;
  std::vector<double> xhat;
  std::vector<double> inv_std;  // per channel
};

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization over batch and time. Train mode uses batch
/// statistics and, if `update_running`, folds them into the running stats;
/// Eval mode reads the running stats only.
Tensor batchnorm_1d(const Tensor& x, const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                    Tensor& running_var, Mode mode, BatchNormCache* cache = nullptr,
                    bool update_running = true);
Tensor batchnorm_1d_backward(const BatchNormCache& cache, Tensor& scale, Tensor& shift,
                             const Tensor& dy);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& dy);

/// Inverted dropout: kept activations scale by 1 / (1 - p). `mask` receives
/// the keep pattern (all ones in Eval mode or when p == 0).
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, Mode mode,
               std::vector<std::uint8_t>* mask = nullptr);
Tensor dropout_backward(const std::vector<std::uint8_t>& mask, double p, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

struct GateResult {
  Tensor gated;                     // same shape as the keypoints
  Tensor occ_prob;                  // sigmoid(occ_logits)
  std::vector<std::uint8_t> mask;   // [B x N x T], 1 where zeroed
};

/// Zeroes both coordinate channels (2j, 2j+1) of joint j wherever
/// sigmoid(logit) > tau. occ_logits is [B x N x T_out] with T_out equal to 1
/// (broadcast over the window) or to T.
GateResult occlusion_gate(const Tensor& keypoints, const Tensor& occ_logits, double tau);
/// Straight-through: the mask is a constant, so surviving coordinates pass
/// their gradient unchanged and zeroed ones receive none.
Tensor occlusion_gate_backward(const GateResult& gate, const Tensor& d_gated);

}  // namespace occpose::nn
