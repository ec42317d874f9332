#pragma once

#include <map>
#include <string>
#include <vector>

#include "occpose/tensor.hpp"

namespace occpose::nn {

/// Named tensors in insertion order. Batchnorm running statistics live here
/// too but are not trainable.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, std::vector<std::size_t> shape, bool trainable = true,
              double fill = 0.0);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool all_finite() const;

  /// Exact (bitwise for finite values) comparison of names, shapes and values.
  bool same_values(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Momentum buffers, one per parameter in store order.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// v <- momentum * v + g; p <- p - lr * v for every trainable parameter.
/// Throws NonFiniteGradient before touching anything if a gradient is NaN/Inf.
void sgd_step(ParameterStore& params, SgdState& state, double lr, double momentum);

/// TCN1 checkpoint: "TCN1", u32 version, u32 count, then per tensor
/// u16 name_len, name, u32 rank, u32 dims..., f64 values..., little-endian.
void save_checkpoint(const std::string& path, const ParameterStore& params);
ParameterStore load_checkpoint(const std::string& path);

}  // namespace occpose::nn
