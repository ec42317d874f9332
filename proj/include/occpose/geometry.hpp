#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace occpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// N x 3 joint positions in meters (camera or world frame, see call site).
using Pose3D = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
// N x 2 image coordinates.
using Pose2D = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Pinhole camera without lens distortion. `rotation`/`translation` map world
/// points into the camera frame: x_cam = R * x_world + t.
struct CameraModel {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 500.0;
  double cy = 500.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Throws ConfigError if the rotation is not orthonormal or a focal length
  /// is not positive.
  void validate() const;

  /// Half the nominal image width, used to normalize keypoints to [-1, 1].
  double half_extent() const { return cx; }
  int image_width() const;
  int image_height() const;
};

enum class Frame { World, Camera };

struct Segment {
  std::string name;
  int a = 0;
  int b = 0;
  double width = 1.0;  // relative to BoxedManConfig::default_delta
};

/// Joint layout plus the occluder geometry used by the boxed man labeler.
struct SkeletonTopology {
  std::string name;
  int joint_count = 0;
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // -1 for the root
  int root_index = 0;
  Segment head_segment;
  std::vector<Segment> limb_segments;
  std::array<int, 4> torso_quad{};
  // Trunk joints that sit on or inside the torso box by construction
  // (pelvis, spine, thorax). They are exempt from the torso quad like its
  // corners.
  std::vector<int> torso_interior;

  void validate() const;
  std::vector<std::pair<int, int>> bones() const;
  int index_of(const std::string& joint_name) const;
};

/// Built-in layouts: "h36m17" and "humaneva15".
SkeletonTopology topology_preset(const std::string& name);
/// Loads a JSON topology description, or a preset when `name_or_path` names one.
SkeletonTopology load_topology(const std::string& name_or_path);
std::vector<std::string> topology_preset_names();

Pose3D world_to_camera(const Pose3D& pose, const CameraModel& cam);

/// Perspective projection to pixels. Throws NonPositiveDepth for any joint
/// with camera-frame z <= 1e-9.
Pose2D project(const Pose3D& pose, const CameraModel& cam, Frame frame);

/// Subtracts the root joint from every joint.
Pose3D root_center(const Pose3D& pose, const SkeletonTopology& topo);

/// Mean parent-child distance; works for 2D and 3D poses.
template <typename Derived>
double mean_bone_length(const Eigen::MatrixBase<Derived>& pose, const SkeletonTopology& topo) {
  double sum = 0.0;
  int count = 0;
  for (int j = 0; j < topo.joint_count; ++j) {
    const int p = topo.parent[j];
    if (p < 0) continue;
    sum += (pose.row(j) - pose.row(p)).norm();
    ++count;
  }
  return count > 0 ? sum / count : 0.0;
}

}  // namespace occpose
