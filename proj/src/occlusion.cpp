#include "occpose/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "occpose/errors.hpp"

namespace occpose {

namespace {

constexpr double kDepthTie = 1e-12;
constexpr double kMinSegment = 1e-12;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Lowest-depth member; ties within kDepthTie resolve to the lowest index.
// `members` must be sorted ascending.
int depth_argmin(const Pose3D& pose, const std::vector<int>& members) {
  int best = members.front();
  for (int k : members)
    if (pose(k, 2) < pose(best, 2) - kDepthTie) best = k;
  return best;
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len = ab.norm();
  const double scale = std::max({1.0, p.cwiseAbs().maxCoeff(), a.cwiseAbs().maxCoeff(),
                                  b.cwiseAbs().maxCoeff()});
  const double tol = 1e-12 * scale;
  if (len <= tol) return (p - a).norm() <= tol;
  if (std::abs(cross(a, b, p)) > tol * len) return false;
  const double t = (p - a).dot(ab);
  return t >= -tol * len && t <= len * len + tol * len;
}

}  // namespace

std::size_t OcclusionVector::count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void BoxedManConfig::validate() const {
  if (!(default_delta > 0.0)) throw ConfigError("boxed man delta must be > 0");
  for (const auto& [name, d] : per_segment_overrides)
    if (!(d > 0.0)) throw ConfigError("delta override for '" + name + "' must be > 0");
}

Vec2 Quad::centroid() const {
  return (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0;
}

Quad Quad::from_unordered(const std::array<Vec2, 4>& pts) {
  const Vec2 c = (pts[0] + pts[1] + pts[2] + pts[3]) / 4.0;
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return std::atan2(pts[i].y() - c.y(), pts[i].x() - c.x()) <
           std::atan2(pts[j].y() - c.y(), pts[j].x() - c.x());
  });
  Quad q;
  for (int k = 0; k < 4; ++k) q.corners[k] = pts[order[k]];
  return q;
}

OcclusionVector cluster_occlusions(const Pose3D& pose, const ClusterConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw ConfigError("cluster epsilon must be > 0");
  const int n = static_cast<int>(pose.rows());
  OcclusionVector out(static_cast<std::size_t>(n));
  const double eps2 = cfg.epsilon * cfg.epsilon;
  auto near = [&](int i, int j) {
    const double dx = pose(i, 0) - pose(j, 0);
    const double dy = pose(i, 1) - pose(j, 1);
    return dx * dx + dy * dy < eps2;
  };

  if (!cfg.transitive) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      members.clear();
      for (int j = 0; j < n; ++j)
        if (j == i || near(i, j)) members.push_back(j);
      const int visible = depth_argmin(pose, members);
      for (int j : members)
        if (j != visible) out[j] = 1;
    }
    return out;
  }

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (near(i, j)) parent[find_root(parent, i)] = find_root(parent, j);
  std::vector<std::vector<int>> groups(n);
  for (int i = 0; i < n; ++i) groups[find_root(parent, i)].push_back(i);
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    const int visible = depth_argmin(pose, g);
    for (int j : g)
      if (j != visible) out[j] = 1;
  }
  return out;
}

Quad build_segment_quad(const Vec2& a, const Vec2& b, double delta) {
  const Vec2 d = b - a;
  const double len = d.norm();
  if (!(len > kMinSegment)) throw DegenerateSegment("segment length " + std::to_string(len));
  // Perpendicular direction with the same orientation as
  // (cos(atan(m')), sin(atan(m'))), m' = -dx/dy.
  Vec2 n(d.y(), -d.x());
  n /= len;
  if (n.x() < 0.0 || (n.x() == 0.0 && n.y() < 0.0)) n = -n;
  const Vec2 off = delta * n;
  return Quad{{a - off, a + off, b + off, b - off}};
}

bool point_in_quad(const Vec2& p, const Quad& q) {
  const auto& c = q.corners;
  for (int k = 0; k < 4; ++k)
    if (on_segment(p, c[k], c[(k + 1) % 4])) return true;
  // Crossing number against a horizontal ray.
  bool inside = false;
  for (int k = 0, prev = 3; k < 4; prev = k++) {
    const Vec2& u = c[k];
    const Vec2& v = c[prev];
    if ((u.y() > p.y()) != (v.y() > p.y())) {
      const double x_at = u.x() + (p.y() - u.y()) * (v.x() - u.x()) / (v.y() - u.y());
      if (p.x() < x_at) inside = !inside;
    }
  }
  return inside;
}

double segment_delta(const Segment& s, const BoxedManConfig& cfg, double mean_bone) {
  const auto it = cfg.per_segment_overrides.find(s.name);
  const double base = it != cfg.per_segment_overrides.end() ? it->second : cfg.default_delta * s.width;
  return cfg.unit == DeltaUnit::MeanBoneFraction ? base * mean_bone : base;
}

std::vector<Occluder> build_occluders(const Pose2D& pose, const SkeletonTopology& topo,
                                      const BoxedManConfig& cfg) {
  cfg.validate();
  if (pose.rows() != topo.joint_count)
    throw TopologyMismatch("pose has " + std::to_string(pose.rows()) + " joints, topology '" +
                           topo.name + "' has " + std::to_string(topo.joint_count));
  const double mean_bone = mean_bone_length(pose, topo);
  std::vector<Occluder> out;
  auto add_segment = [&](const Segment& s) {
    const Vec2 a = pose.row(s.a).transpose();
    const Vec2 b = pose.row(s.b).transpose();
    try {
      out.push_back({s.name, build_segment_quad(a, b, segment_delta(s, cfg, mean_bone)), {s.a, s.b}});
    } catch (const DegenerateSegment&) {
      throw DegenerateSegment(s.name + " (joints " + std::to_string(s.a) + ", " +
                              std::to_string(s.b) + ")");
    }
  };
  add_segment(topo.head_segment);
  for (const auto& s : topo.limb_segments) add_segment(s);
  if (cfg.include_torso) {
    std::array<Vec2, 4> pts;
    for (int k = 0; k < 4; ++k) pts[k] = pose.row(topo.torso_quad[k]).transpose();
    Occluder torso{"torso", Quad::from_unordered(pts),
                   {topo.torso_quad.begin(), topo.torso_quad.end()}};
    torso.exempt.insert(torso.exempt.end(), topo.torso_interior.begin(), topo.torso_interior.end());
    out.push_back(std::move(torso));
  }
  return out;
}

OcclusionVector boxed_man_occlusions(const Pose2D& pose, const SkeletonTopology& topo,
                                     const BoxedManConfig& cfg) {
  const auto occluders = build_occluders(pose, topo, cfg);
  OcclusionVector out(static_cast<std::size_t>(topo.joint_count));
  for (int j = 0; j < topo.joint_count; ++j) {
    const Vec2 p = pose.row(j).transpose();
    for (const auto& occ : occluders) {
      if (std::find(occ.exempt.begin(), occ.exempt.end(), j) != occ.exempt.end()) continue;
      if (point_in_quad(p, occ.quad)) {
        out[j] = 1;
        break;
      }
    }
  }
  return out;
}

}  // namespace occpose
