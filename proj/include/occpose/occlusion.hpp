#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "occpose/geometry.hpp"

namespace occpose {

/// Per-joint binary labels, 1 = occluded.
struct OcclusionVector {
  std::vector<std::uint8_t> labels;

  OcclusionVector() = default;
  explicit OcclusionVector(std::size_t n) : labels(n, 0) {}
  explicit OcclusionVector(std::vector<std::uint8_t> l) : labels(std::move(l)) {}

  std::size_t size() const { return labels.size(); }
  std::uint8_t operator[](std::size_t i) const { return labels[i]; }
  std::uint8_t& operator[](std::size_t i) { return labels[i]; }
  std::size_t count() const;
  bool any() const { return count() > 0; }
  bool operator==(const OcclusionVector&) const = default;
};

struct ClusterConfig {
  double epsilon = 0.06;
  // Union-find over overlapping neighborhoods instead of the literal
  // per-neighborhood rule.
  bool transitive = false;
};

enum class DeltaUnit { MeanBoneFraction, Absolute };

struct BoxedManConfig {
  DeltaUnit unit = DeltaUnit::MeanBoneFraction;
  // Half-width for a segment of width 1.0; the head segment is wider.
  double default_delta = 0.13;
  // Segment name -> half-width, replacing default_delta * segment.width.
  std::map<std::string, double> per_segment_overrides;
  bool include_torso = true;

  void validate() const;
};

/// Four corners in a consistent winding order.
struct Quad {
  std::array<Vec2, 4> corners;

  Vec2 centroid() const;
  /// Reorders arbitrary corners by angle about their centroid so the
  /// polygon is simple.
  static Quad from_unordered(const std::array<Vec2, 4>& pts);
};

/// Occlusion labels from camera-frame 3D joints: within every planar
/// epsilon-neighborhood only the nearest joint stays visible. Depth ties
/// (within 1e-12) go to the lowest joint index.
OcclusionVector cluster_occlusions(const Pose3D& camera_pose, const ClusterConfig& cfg);

/// Box of half-width `delta` around segment ab, corners {A1, A2, B2, B1}.
/// A1 = a - delta * n, A2 = a + delta * n where n is the unit normal with a
/// positive x component (n = (0, 1) for horizontal segments).
Quad build_segment_quad(const Vec2& a, const Vec2& b, double delta);

/// Boundary counts as inside.
bool point_in_quad(const Vec2& p, const Quad& q);

/// One occluding box and the joints it can never occlude.
struct Occluder {
  std::string name;
  Quad quad;
  std::vector<int> exempt;
};

/// The head, limb and torso boxes for one 2D pose.
std::vector<Occluder> build_occluders(const Pose2D& pose, const SkeletonTopology& topo,
                                      const BoxedManConfig& cfg);

double segment_delta(const Segment& s, const BoxedManConfig& cfg, double mean_bone);

/// Depth-free labels: a joint is occluded when it lies in a box that does not
/// belong to it.
OcclusionVector boxed_man_occlusions(const Pose2D& pose, const SkeletonTopology& topo,
                                     const BoxedManConfig& cfg);

}  // namespace occpose
