#pragma once

#include <span>
#include <string>
#include <vector>

#include "occpose/geometry.hpp"
#include "occpose/tensor.hpp"

namespace occpose {

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  void validate() const;
};

/// Root-relative mean per-joint position error of one frame, in meters.
double frame_position_error(const Pose3D& pred, const Pose3D& gt, const SkeletonTopology& topo);

/// MPJPE over a batch in millimeters. Both sides are root-centered first.
double mpjpe(std::span<const Pose3D> pred, std::span<const Pose3D> gt, const SkeletonTopology& topo);

/// Mean absolute difference between predicted occlusion probabilities and
/// binary targets; tensors must have the same shape.
double occlusion_loss(const nn::Tensor& occ_pred, const nn::Tensor& occ_gt);

struct LossValue {
  double total = 0.0;
  double position_m = 0.0;  // L, meters
  double occlusion = 0.0;
  nn::Tensor d_pred3d;
  nn::Tensor d_occ_pred;
};

/// lambda1 * L + lambda2 * occlusion term, with gradients. pred3d and gt3d
/// are [B x 3N] joint-major in meters; |.| and the zero-error norm use 0 as
/// their derivative at the kink.
LossValue combined_loss(const nn::Tensor& pred3d, const nn::Tensor& gt3d, const nn::Tensor& occ_pred,
                        const nn::Tensor& occ_gt, const LossWeights& w, int root_index);

struct FrameError {
  std::string subject;
  std::string action;
  double error_mm = 0.0;
};

struct EvalReport {
  struct Row {
    std::string subject;
    std::string action;
    std::size_t frames = 0;
    double mpjpe_mm = 0.0;
  };
  std::vector<Row> rows;  // sorted by subject, then action
  double overall_mm = 0.0;
  std::size_t total_frames = 0;

  std::string to_text() const;
  /// Header: subject,action,frames,mpjpe_mm
  std::string to_csv() const;
};

/// Groups by (subject, action); the overall value is frame-weighted.
/// Throws EmptyEvaluation for no frames.
EvalReport build_report(std::span<const FrameError> frames);

/// One row per labeled run, one column per subject for `action` plus an
/// "Average" column (mean of the subject columns).
std::string render_action_table(const std::string& action,
                                const std::vector<std::pair<std::string, EvalReport>>& runs);

/// One row per labeled run with a single "Average" column.
std::string render_average_table(const std::vector<std::pair<std::string, EvalReport>>& runs);

}  // namespace occpose
