#include "occpose/geometry.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "occpose/errors.hpp"

namespace occpose {

namespace {

constexpr double kDepthGuard = 1e-9;

SkeletonTopology make_h36m17() {
  SkeletonTopology t;
  t.name = "h36m17";
  t.joint_count = 17;
  t.joint_names = {"pelvis",    "r_hip",      "r_knee",   "r_ankle",  "l_hip",    "l_knee",
                   "l_ankle",   "spine",      "thorax",   "neck",     "head",     "l_shoulder",
                   "l_elbow",   "l_wrist",    "r_shoulder", "r_elbow", "r_wrist"};
  t.parent = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  t.root_index = 0;
  t.head_segment = {"head", 10, 9, 2.0};
  t.limb_segments = {
      {"r_thigh", 1, 2, 1.0},     {"r_shin", 2, 3, 1.0},      {"l_thigh", 4, 5, 1.0},
      {"l_shin", 5, 6, 1.0},      {"l_upper_arm", 11, 12, 1.0}, {"l_forearm", 12, 13, 1.0},
      {"r_upper_arm", 14, 15, 1.0}, {"r_forearm", 15, 16, 1.0},
  };
  t.torso_quad = {1, 4, 11, 14};
  t.torso_interior = {0, 7, 8};
  return t;
}

SkeletonTopology make_humaneva15() {
  SkeletonTopology t;
  t.name = "humaneva15";
  t.joint_count = 15;
  t.joint_names = {"pelvis", "thorax", "l_shoulder", "l_elbow", "l_wrist",
                   "r_shoulder", "r_elbow", "r_wrist", "l_hip", "l_knee",
                   "l_ankle", "r_hip", "r_knee", "r_ankle", "head"};
  t.parent = {-1, 0, 1, 2, 3, 1, 5, 6, 0, 8, 9, 0, 11, 12, 1};
  t.root_index = 0;
  t.head_segment = {"head", 14, 1, 2.0};
  t.limb_segments = {
      {"l_upper_arm", 2, 3, 1.0}, {"l_forearm", 3, 4, 1.0}, {"r_upper_arm", 5, 6, 1.0},
      {"r_forearm", 6, 7, 1.0},   {"l_thigh", 8, 9, 1.0},   {"l_shin", 9, 10, 1.0},
      {"r_thigh", 11, 12, 1.0},   {"r_shin", 12, 13, 1.0},
  };
  t.torso_quad = {8, 11, 2, 5};
  t.torso_interior = {0, 1};
  return t;
}

Segment segment_from_json(const nlohmann::json& j, const std::string& fallback_name) {
  Segment s;
  s.name = j.value("name", fallback_name);
  s.a = j.at("a").get<int>();
  s.b = j.at("b").get<int>();
  s.width = j.value("width", 1.0);
  return s;
}

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be positive");
  const Mat3 gram = rotation.transpose() * rotation;
  if (!((gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9))
    throw ConfigError("camera rotation is not orthonormal");
  if (!translation.allFinite()) throw ConfigError("camera translation is not finite");
}

int CameraModel::image_width() const { return std::max(1, static_cast<int>(std::lround(2.0 * cx))); }
int CameraModel::image_height() const { return std::max(1, static_cast<int>(std::lround(2.0 * cy))); }

void SkeletonTopology::validate() const {
  auto in_range = [&](int i) { return i >= 0 && i < joint_count; };
  if (joint_count <= 0) throw ConfigError("topology has no joints");
  if (static_cast<int>(joint_names.size()) != joint_count ||
      static_cast<int>(parent.size()) != joint_count)
    throw ConfigError("topology '" + name + "': names/parents length differs from joint_count");
  if (!in_range(root_index) || parent[root_index] != -1)
    throw ConfigError("topology '" + name + "': root must have parent -1");
  for (int j = 0; j < joint_count; ++j) {
    if (j == root_index) continue;
    if (!in_range(parent[j])) throw ConfigError("topology '" + name + "': bad parent index");
    // Walk to the root; a cycle would exceed joint_count steps.
    int cur = j;
    int steps = 0;
    while (cur != root_index) {
      cur = parent[cur];
      if (!in_range(cur) || ++steps > joint_count)
        throw ConfigError("topology '" + name + "': parent links do not form a tree");
    }
  }
  auto check_segment = [&](const Segment& s) {
    if (!in_range(s.a) || !in_range(s.b) || s.a == s.b)
      throw ConfigError("topology '" + name + "': bad segment " + s.name);
    if (!(s.width > 0.0)) throw ConfigError("topology '" + name + "': segment width must be > 0");
  };
  check_segment(head_segment);
  for (const auto& s : limb_segments) check_segment(s);
  for (int i : torso_quad)
    if (!in_range(i)) throw ConfigError("topology '" + name + "': bad torso index");
  for (int i : torso_interior)
    if (!in_range(i)) throw ConfigError("topology '" + name + "': bad torso interior index");
}

std::vector<std::pair<int, int>> SkeletonTopology::bones() const {
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < joint_count; ++j)
    if (parent[j] >= 0) out.emplace_back(parent[j], j);
  return out;
}

int SkeletonTopology::index_of(const std::string& joint_name) const {
  for (int j = 0; j < joint_count; ++j)
    if (joint_names[j] == joint_name) return j;
  return -1;
}

std::vector<std::string> topology_preset_names() { return {"h36m17", "humaneva15"}; }

SkeletonTopology topology_preset(const std::string& name) {
  if (name == "h36m17") return make_h36m17();
  if (name == "humaneva15") return make_humaneva15();
  throw ConfigError("unknown topology preset '" + name + "'");
}

SkeletonTopology load_topology(const std::string& name_or_path) {
  for (const auto& preset : topology_preset_names())
    if (preset == name_or_path) return topology_preset(preset);

  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("cannot open topology file '" + name_or_path + "'");
  nlohmann::json j;
  try {
    in >> j;
    SkeletonTopology t;
    t.name = j.value("name", name_or_path);
    t.joint_names = j.at("joints").get<std::vector<std::string>>();
    t.joint_count = static_cast<int>(t.joint_names.size());
    t.parent = j.at("parent").get<std::vector<int>>();
    t.root_index = j.value("root", 0);
    t.head_segment = segment_from_json(j.at("head"), "head");
    for (const auto& s : j.at("limbs")) t.limb_segments.push_back(segment_from_json(s, "limb"));
    t.torso_quad = j.at("torso").get<std::array<int, 4>>();
    t.torso_interior = j.value("torso_interior", std::vector<int>{});
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("topology file '" + name_or_path + "': " + e.what());
  }
}

Pose3D world_to_camera(const Pose3D& pose, const CameraModel& cam) {
  Pose3D out(pose.rows(), 3);
  for (Eigen::Index j = 0; j < pose.rows(); ++j)
    out.row(j) = (cam.rotation * pose.row(j).transpose() + cam.translation).transpose();
  return out;
}

Pose2D project(const Pose3D& pose, const CameraModel& cam, Frame frame) {
  const Pose3D cam_pose = frame == Frame::World ? world_to_camera(pose, cam) : pose;
  Pose2D out(cam_pose.rows(), 2);
  for (Eigen::Index j = 0; j < cam_pose.rows(); ++j) {
    const double z = cam_pose(j, 2);
    if (!(z > kDepthGuard)) throw NonPositiveDepth(static_cast<std::size_t>(j));
    out(j, 0) = cam.fx * cam_pose(j, 0) / z + cam.cx;
    out(j, 1) = cam.fy * cam_pose(j, 1) / z + cam.cy;
  }
  return out;
}

Pose3D root_center(const Pose3D& pose, const SkeletonTopology& topo) {
  if (pose.rows() != topo.joint_count)
    throw TopologyMismatch("pose has " + std::to_string(pose.rows()) + " joints, topology '" +
                           topo.name + "' has " + std::to_string(topo.joint_count));
  const Eigen::RowVector3d root = pose.row(topo.root_index);
  Pose3D out = pose.rowwise() - root;
  out.row(topo.root_index).setZero();
  return out;
}

}  // namespace occpose
