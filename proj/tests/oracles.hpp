// Independent reference implementations shared by the unit and acceptance
// tests. Deliberately naive.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "occpose/geometry.hpp"
#include "occpose/occlusion.hpp"

namespace oracle {

using occpose::Pose2D;
using occpose::Pose3D;
using occpose::Vec2;

// Joints packed into a 0.5 m square so epsilon neighborhoods actually overlap.
inline Pose3D random_camera_pose(std::mt19937_64& rng, int n = 17) {
  std::uniform_real_distribution<double> xy(-0.25, 0.25), z(2.0, 4.0);
  Pose3D p(n, 3);
  for (int j = 0; j < n; ++j) p.row(j) << xy(rng), xy(rng), z(rng);
  return p;
}

inline Pose2D random_image_pose(std::mt19937_64& rng, int n = 17, double extent = 200.0) {
  std::uniform_real_distribution<double> u(0.0, extent);
  Pose2D p(n, 2);
  for (int j = 0; j < n; ++j) p.row(j) << u(rng), u(rng);
  return p;
}

// Pairwise rule: j is hidden iff some neighborhood S_i holds a k that beats
// it on depth (ties within 1e-12 go to the lower index).
inline occpose::OcclusionVector cluster(const Pose3D& p, double eps) {
  const int n = static_cast<int>(p.rows());
  auto in_s = [&](int i, int j) {
    return i == j || std::hypot(p(i, 0) - p(j, 0), p(i, 1) - p(j, 1)) < eps;
  };
  auto beats = [&](int k, int j) {
    if (std::abs(p(k, 2) - p(j, 2)) <= 1e-12) return k < j;
    return p(k, 2) < p(j, 2);
  };
  occpose::OcclusionVector out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (!in_s(i, j)) continue;
      for (int k = 0; k < n; ++k)
        if (k != j && in_s(i, k) && beats(k, j)) out[j] = 1;
    }
  return out;
}

// Corner formulas written with slopes: m' = -1/m, offset (cos atan m', sin atan m') * delta.
// Only valid for finite, nonzero slopes.
inline std::array<Vec2, 4> slope_quad(const Vec2& a, const Vec2& b, double delta) {
  const double m = (b.y() - a.y()) / (b.x() - a.x());
  const double mp = -1.0 / m;
  const Vec2 off(std::cos(std::atan(mp)) * delta, std::sin(std::atan(mp)) * delta);
  return {a - off, a + off, b + off, b - off};
}

// Winding number by summed turning angle; boundary points are not expected.
inline bool inside_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  double total = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec2 u = poly[k] - p;
    const Vec2 v = poly[(k + 1) % poly.size()] - p;
    total += std::atan2(u.x() * v.y() - u.y() * v.x(), u.dot(v));
  }
  return std::abs(total) > M_PI;
}

inline double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

// Every joint against every box, built from scratch.
inline occpose::OcclusionVector boxed_man(const Pose2D& pose, const occpose::SkeletonTopology& topo,
                                          double default_delta, bool include_torso = true) {
  double bone = 0.0;
  int bones = 0;
  for (int j = 0; j < topo.joint_count; ++j)
    if (topo.parent[j] >= 0) {
      bone += (pose.row(j) - pose.row(topo.parent[j])).norm();
      ++bones;
    }
  bone /= bones;

  struct Box {
    std::vector<Vec2> poly;
    std::vector<int> own;
  };
  std::vector<Box> boxes;
  auto segment_box = [&](const occpose::Segment& s) {
    const Vec2 a = pose.row(s.a).transpose(), b = pose.row(s.b).transpose();
    const Vec2 d = (b - a).normalized();
    const Vec2 n(-d.y(), d.x());
    const double delta = default_delta * s.width * bone;
    boxes.push_back({{a + delta * n, b + delta * n, b - delta * n, a - delta * n}, {s.a, s.b}});
  };
  segment_box(topo.head_segment);
  for (const auto& s : topo.limb_segments) segment_box(s);
  if (include_torso) {
    std::vector<Vec2> pts;
    Vec2 c = Vec2::Zero();
    for (int k : topo.torso_quad) {
      pts.push_back(pose.row(k).transpose());
      c += pts.back() / 4.0;
    }
    std::sort(pts.begin(), pts.end(), [&](const Vec2& u, const Vec2& v) {
      return std::atan2(u.y() - c.y(), u.x() - c.x()) < std::atan2(v.y() - c.y(), v.x() - c.x());
    });
    std::vector<int> own(topo.torso_quad.begin(), topo.torso_quad.end());
    own.insert(own.end(), topo.torso_interior.begin(), topo.torso_interior.end());
    boxes.push_back({pts, own});
  }

  occpose::OcclusionVector out(static_cast<std::size_t>(topo.joint_count));
  for (int j = 0; j < topo.joint_count; ++j)
    for (const auto& box : boxes) {
      if (std::find(box.own.begin(), box.own.end(), j) != box.own.end()) continue;
      if (inside_polygon(pose.row(j).transpose(), box.poly)) out[j] = 1;
    }
  return out;
}

}  // namespace oracle
