#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occpose/tcn.hpp"

namespace occpose::nn {

struct GradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

/// |a - n| / max(|a|, |n|, 1e-6); the floor keeps vanishing gradients from
/// producing meaningless ratios.
double relative_error(double analytic, double numeric);

/// Central finite differences of every primitive op against its backward.
std::vector<GradCheck> check_primitives(std::uint64_t seed, double step = 1e-5);

/// End-to-end check of the network plus combined loss, dropout off, batch
/// statistics on. With max_coords > 0, larger tensors are checked on a seeded
/// sample of that many coordinates.
GradCheck check_network(const TcnConfig& cfg, std::uint64_t seed, double step = 1e-5,
                        std::size_t max_coords = 0);

struct GradSuite {
  std::vector<GradCheck> primitives;
  std::vector<GradCheck> network;
  double max_primitive = 0.0;
  double max_network = 0.0;
};

/// Primitives plus the tiny network (3 joints, 8 channels, 1 block) in both
/// variants.
GradSuite run_gradcheck_suite(std::uint64_t seed, double step = 1e-5);

}  // namespace occpose::nn
