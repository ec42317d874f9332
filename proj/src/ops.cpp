#include "occpose/ops.hpp"

#include <cmath>

#include "occpose/errors.hpp"

namespace occpose::nn {

namespace {

struct Dims {
  std::size_t b, c, t;
};

Dims dims_of(const Tensor& x, const char* what) {
  if (x.rank() == 2) return {1, x.shape[0], x.shape[1]};
  if (x.rank() == 3) return {x.shape[0], x.shape[1], x.shape[2]};
  throw ShapeMismatch(std::string(what) + " must be rank 2 or 3, got " + x.shape_string());
}

std::vector<std::size_t> shape_like(const Tensor& x, std::size_t b, std::size_t c, std::size_t t) {
  if (x.rank() == 2) return {c, t};
  return {b, c, t};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeMismatch(std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace

Tensor conv1d_temporal(const Tensor& x, const Tensor& k, const Tensor* bias, std::size_t stride) {
  const auto [nb, cin, t] = dims_of(x, "conv input");
  if (k.rank() != 3) throw ShapeMismatch("conv kernel must be rank 3, got " + k.shape_string());
  const std::size_t cout = k.shape[0];
  const std::size_t w = k.shape[2];
  if (k.shape[1] != cin)
    throw ShapeMismatch("kernel expects " + std::to_string(k.shape[1]) + " input channels, got " +
                        std::to_string(cin));
  if (w == 0 || w > t)
    throw ShapeMismatch("kernel width " + std::to_string(w) + " vs sequence length " + std::to_string(t));
  if (stride == 0) throw ShapeMismatch("stride must be >= 1");
  if (bias && (bias->rank() != 1 || bias->shape[0] != cout))
    throw ShapeMismatch("bias " + bias->shape_string() + " vs " + std::to_string(cout) + " outputs");
  const std::size_t tout = (t - w) / stride + 1;

  Tensor y(shape_like(x, nb, cout, tout));
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      double* out = &y.values[(b * cout + co) * tout];
      if (bias)
        for (std::size_t i = 0; i < tout; ++i) out[i] = bias->values[co];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* in = &x.values[(b * cin + ci) * t];
        const double* kr = &k.values[(co * cin + ci) * w];
        for (std::size_t dw = 0; dw < w; ++dw) {
          const double kv = kr[dw];
          if (stride == 1)
            for (std::size_t i = 0; i < tout; ++i) out[i] += kv * in[i + dw];
          else
            for (std::size_t i = 0; i < tout; ++i) out[i] += kv * in[i * stride + dw];
        }
      }
    }
  return y;
}

Tensor conv1d_temporal_backward(const Tensor& x, Tensor& k, Tensor* bias, const Tensor& dy,
                                std::size_t stride, bool need_dx) {
  const auto [nb, cin, t] = dims_of(x, "conv input");
  const std::size_t cout = k.shape[0];
  const std::size_t w = k.shape[2];
  const std::size_t tout = (t - w) / stride + 1;
  const auto [db, dc, dt] = dims_of(dy, "conv output gradient");
  if (db != nb || dc != cout || dt != tout)
    throw ShapeMismatch("conv output gradient " + dy.shape_string());

  k.ensure_grad();
  if (bias) bias->ensure_grad();
  Tensor dx;
  if (need_dx) dx = Tensor(x.shape);

  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g = &dy.values[(b * cout + co) * tout];
      if (bias) {
        double s = 0.0;
        for (std::size_t i = 0; i < tout; ++i) s += g[i];
        bias->grad[co] += s;
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* in = &x.values[(b * cin + ci) * t];
        double* kg = &k.grad[(co * cin + ci) * w];
        const double* kr = &k.values[(co * cin + ci) * w];
        double* din = need_dx ? &dx.values[(b * cin + ci) * t] : nullptr;
        for (std::size_t dw = 0; dw < w; ++dw) {
          double s = 0.0;
          for (std::size_t i = 0; i < tout; ++i) s += g[i] * in[i * stride + dw];
          kg[dw] += s;
          if (din) {
            const double kv = kr[dw];
            for (std::size_t i = 0; i < tout; ++i) din[i * stride + dw] += kv * g[i];
          }
        }
      }
    }
  return dx;
}

Tensor batchnorm_1d(const Tensor& x, const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                    Tensor& running_var, Mode mode, BatchNormCache* cache, bool update_running) {
  const auto [nb, nc, t] = dims_of(x, "batchnorm input");
  for (const Tensor* p : {&scale, &shift, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)})
    if (p->size() != nc)
      throw ShapeMismatch("batchnorm parameter " + p->shape_string() + " vs " + std::to_string(nc) +
                          " channels");
  const std::size_t n = nb * t;
  Tensor y(x.shape);
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(nc);

  for (std::size_t c = 0; c < nc; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < t; ++i) s += x.values[(b * nc + c) * t + i];
      mean = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < t; ++i) {
          const double d = x.values[(b * nc + c) * t + i] - mean;
          ss += d * d;
        }
      var = ss / static_cast<double>(n);
      if (update_running) {
        const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
        running_mean.values[c] = (1.0 - kBatchNormMomentum) * running_mean.values[c] + kBatchNormMomentum * mean;
        running_var.values[c] = (1.0 - kBatchNormMomentum) * running_var.values[c] + kBatchNormMomentum * unbiased;
      }
    } else {
      mean = running_mean.values[c];
      var = running_var.values[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < t; ++i) {
        const std::size_t idx = (b * nc + c) * t + i;
        xhat[idx] = (x.values[idx] - mean) * inv_std[c];
        y.values[idx] = scale.values[c] * xhat[idx] + shift.values[c];
      }
  }
  if (cache) {
    cache->mode = mode;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor batchnorm_1d_backward(const BatchNormCache& cache, Tensor& scale, Tensor& shift,
                             const Tensor& dy) {
  const auto [nb, nc, t] = dims_of(dy, "batchnorm output gradient");
  if (cache.xhat.size() != dy.size() || cache.inv_std.size() != nc)
    throw ShapeMismatch("batchnorm cache does not match gradient " + dy.shape_string());
  scale.ensure_grad();
  shift.ensure_grad();
  const double n = static_cast<double>(nb * t);
  Tensor dx(dy.shape);
  for (std::size_t c = 0; c < nc; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < t; ++i) {
        const std::size_t idx = (b * nc + c) * t + i;
        sum_dy += dy.values[idx];
        sum_dy_xhat += dy.values[idx] * cache.xhat[idx];
      }
    scale.grad[c] += sum_dy_xhat;
    shift.grad[c] += sum_dy;
    const double g = scale.values[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < t; ++i) {
        const std::size_t idx = (b * nc + c) * t + i;
        if (cache.mode == Mode::Train)
          dx.values[idx] = g * (dy.values[idx] - sum_dy / n - cache.xhat[idx] * sum_dy_xhat / n);
        else
          dx.values[idx] = g * dy.values[idx];
      }
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.values[i] = x.values[i] > 0.0 ? x.values[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "relu gradient");
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.values[i] = y.values[i] > 0.0 ? dy.values[i] : 0.0;
  return dx;
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, Mode mode,
               std::vector<std::uint8_t>* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) {
    if (mask) mask->assign(x.size(), 1);
    return x;
  }
  std::vector<std::uint8_t> keep(x.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor y(x.shape);
  const double s = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    keep[i] = u(rng) >= p ? 1 : 0;
    y.values[i] = keep[i] ? x.values[i] * s : 0.0;
  }
  if (mask) *mask = std::move(keep);
  return y;
}

Tensor dropout_backward(const std::vector<std::uint8_t>& mask, double p, const Tensor& dy) {
  if (mask.size() != dy.size()) throw ShapeMismatch("dropout mask vs gradient " + dy.shape_string());
  const double s = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.values[i] = mask[i] ? dy.values[i] * s : 0.0;
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.values[i];
    // Split on sign so exp never overflows.
    if (v >= 0.0) {
      y.values[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y.values[i] = e / (1.0 + e);
    }
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "sigmoid gradient");
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i)
    dx.values[i] = dy.values[i] * y.values[i] * (1.0 - y.values[i]);
  return dx;
}

GateResult occlusion_gate(const Tensor& keypoints, const Tensor& occ_logits, double tau) {
  const auto [nb, c2, t] = dims_of(keypoints, "gate keypoints");
  const auto [lb, nj, tout] = dims_of(occ_logits, "gate logits");
  if (keypoints.rank() != occ_logits.rank() || lb != nb || c2 != 2 * nj || (tout != 1 && tout != t))
    throw ShapeMismatch("keypoints " + keypoints.shape_string() + " vs occlusion logits " +
                        occ_logits.shape_string());
  GateResult r;
  r.occ_prob = sigmoid(occ_logits);
  r.gated = keypoints;
  r.mask.assign(nb * nj * t, 0);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t i = 0; i < t; ++i) {
        const double prob = r.occ_prob.values[(b * nj + j) * tout + (tout == 1 ? 0 : i)];
        if (prob > tau) {
          r.mask[(b * nj + j) * t + i] = 1;
          r.gated.values[(b * c2 + 2 * j) * t + i] = 0.0;
          r.gated.values[(b * c2 + 2 * j + 1) * t + i] = 0.0;
        }
      }
  return r;
}

Tensor occlusion_gate_backward(const GateResult& gate, const Tensor& d_gated) {
  require_same_shape(gate.gated, d_gated, "gate gradient");
  const auto [nb, c2, t] = dims_of(d_gated, "gate gradient");
  const std::size_t nj = c2 / 2;
  Tensor dx = d_gated;
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t i = 0; i < t; ++i)
        if (gate.mask[(b * nj + j) * t + i]) {
          dx.values[(b * c2 + 2 * j) * t + i] = 0.0;
          dx.values[(b * c2 + 2 * j + 1) * t + i] = 0.0;
        }
  return dx;
}

}  // namespace occpose::nn
