#include "occpose/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "occpose/endian.hpp"
#include "occpose/errors.hpp"

namespace occpose::nn {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

bool is_running_stat(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::size_t n = std::strlen(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}

}  // namespace

Tensor& ParameterStore::add(const std::string& name, std::vector<std::size_t> shape, bool trainable,
                            double fill) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, Tensor(std::move(shape), fill), trainable});
  return entries_.back().tensor;
}

Tensor& ParameterStore::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter '" + name + "'");
  return entries_[it->second].tensor;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) {
    e.tensor.ensure_grad();
    e.tensor.zero_grad();
  }
}

bool ParameterStore::all_finite() const {
  for (const auto& e : entries_)
    for (double v : e.tensor.values)
      if (!std::isfinite(v)) return false;
  return true;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.tensor.shape != b.tensor.shape) return false;
    if (std::memcmp(a.tensor.values.data(), b.tensor.values.data(),
                    a.tensor.values.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

void sgd_step(ParameterStore& params, SgdState& state, double lr, double momentum) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  auto& entries = params.entries();
  for (const auto& e : entries) {
    if (!e.trainable) continue;
    for (double g : e.tensor.grad)
      if (!std::isfinite(g)) throw NonFiniteGradient(e.name);
  }
  state.velocity.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.trainable || e.tensor.grad.empty()) continue;
    auto& v = state.velocity[i];
    if (v.size() != e.tensor.size()) v.assign(e.tensor.size(), 0.0);
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = momentum * v[k] + e.tensor.grad[k];
      e.tensor.values[k] -= lr * v[k];
    }
  }
  if (!params.all_finite()) throw NonFiniteGradient("parameter update");
}

void save_checkpoint(const std::string& path, const ParameterStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write '" + path + "'");
  out.write("TCN1", 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : e.tensor.values) put_le<double>(out, v);
  }
  if (!out) throw Error(ErrorKind::Data, "write failed for '" + path + "'");
}

ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TCN1", 4) != 0) throw ParseError(0, "bad TCN1 magic in " + path);
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ParseError(0, "unsupported checkpoint version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(in);
  ParameterStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get_le<std::uint32_t>(in);
    if (!in || rank > 8) throw ParseError(0, "corrupt checkpoint entry " + std::to_string(i));
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(in);
    Tensor& t = store.add(name, shape, !is_running_stat(name));
    for (double& v : t.values) v = get_le<double>(in);
    if (!in) throw ParseError(0, "truncated checkpoint at '" + name + "'");
  }
  return store;
}

}  // namespace occpose::nn
