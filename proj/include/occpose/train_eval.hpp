#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occpose/data.hpp"
#include "occpose/loss_metrics.hpp"
#include "occpose/occlusion.hpp"
#include "occpose/tcn.hpp"

namespace occpose {

enum class Labeler { Clustered, BoxedMan };

std::string to_string(Labeler l);
Labeler labeler_from_string(const std::string& s);

struct LabelerConfig {
  Labeler kind = Labeler::BoxedMan;
  ClusterConfig cluster;
  BoxedManConfig boxed;
};

/// Clustered labels come from camera-frame 3D, boxed-man labels from the
/// projected 2D pose.
OcclusionVector label_frame(const Pose3D& camera_pose, const Pose2D& image_pose,
                            const SkeletonTopology& topo, const LabelerConfig& cfg);

/// One training window.
struct Example {
  std::vector<double> keypoints;   // [2N x rf], normalized image coordinates
  std::vector<double> occ_window;  // [N x rf] labels as 0/1
  std::vector<double> target3d;    // [3N] root-centered center frame, meters
  std::string subject;
  std::string action;
  std::int64_t center_frame = 0;
};

/// Pixel -> normalized coordinates: subtract the principal point and divide
/// by the half image width, keeping the aspect ratio.
Vec2 normalize_keypoint(const Vec2& px, const CameraModel& cam);

/// Every full receptive-field window of `seq` (stride 1 by default).
/// Throws SequenceTooShort when seq.size() < rf.
std::vector<Example> make_windows(const MotionSequence& seq, const CameraModel& cam,
                                  const LabelerConfig& labeler, int rf, int stride = 1);
std::vector<Example> make_dataset(const std::vector<MotionSequence>& seqs, const LabelerConfig& labeler,
                                  int rf, int stride = 1);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double lr_decay = 0.95;  // per epoch
  LossWeights loss_weights;
  LabelerConfig labeler;
  nn::TcnConfig tcn;
  std::uint64_t seed = 0;
  std::string checkpoint_path;  // best-validation checkpoint, empty to skip

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_mpjpe_mm = 0.0;
  double val_mpjpe_mm = 0.0;
  double val_occ_loss = 0.0;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  /// epoch,train_loss,val_mpjpe_mm,val_occ_loss,lr
  std::string to_csv() const;
};

struct TrainResult {
  nn::ParameterStore params;       // after the last epoch
  nn::ParameterStore best_params;  // lowest validation MPJPE
  int best_epoch = 0;
  TrainLog log;
};

/// Packs examples into network tensors; occ_target holds the center column
/// for OneVector and the whole window for ManyVectors.
struct Batch {
  nn::Tensor keypoints;  // [B x 2N x rf]
  nn::Tensor occ_in;     // [B x N x rf]
  nn::Tensor target3d;   // [B x 3N]
  nn::Tensor occ_target; // [B x N x T_out]
};
Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& indices,
                 const nn::TcnConfig& cfg);

/// Seeded momentum-SGD training against the combined loss.
TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& cfg, const SkeletonTopology& topo);

struct EvalResult {
  EvalReport report;
  double occ_loss = 0.0;
  std::vector<FrameError> frames;
};

/// Eval-mode forward over every example.
EvalResult evaluate(const std::vector<Example>& dataset, const nn::ParameterStore& params,
                    const nn::TcnConfig& cfg, const SkeletonTopology& topo, int batch_size = 64);

}  // namespace occpose
