#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "occpose/geometry.hpp"
#include "occpose/occlusion.hpp"

namespace occpose {

/// Ordered world-frame poses of one subject seen by one camera.
struct MotionSequence {
  std::string topology = "h36m17";
  std::vector<Pose3D> frames;
  std::vector<std::int64_t> frame_index;
  double fps = 50.0;
  std::string subject;
  std::string action;
  std::string camera_id;
  CameraModel camera;
  // Optional per-frame annotations; either empty or one entry per frame.
  std::vector<Pose2D> joints2d;
  std::vector<OcclusionVector> occ;

  std::size_t size() const { return frames.size(); }
};

struct GaitParams {
  double stride_m = 1.4;      // distance per full gait cycle
  double cadence_hz = 0.9;    // gait cycles per second
  double arm_swing_rad = 0.5;
  double hip_sway_m = 0.03;
};

/// The subject walks a circular track around the point the static camera
/// looks at, so relative to the subject the camera orbits at angular_speed.
struct CameraOrbit {
  double radius_m = 9.0;       // camera distance from the track center
  double height_m = 1.3;
  double angular_speed = 0.35; // rad/s of the subject around the track
};

struct SynthConfig {
  std::uint64_t seed = 7;
  int n_frames = 500;  // per sequence
  int sequences = 4;
  double fps = 50.0;
  GaitParams gait;
  CameraOrbit camera_orbit;
  std::string topology = "h36m17";
  std::string action = "Walk";

  void validate() const;
};

/// One seeded walking sequence with rigid bones.
MotionSequence synth_walk(const SynthConfig& cfg, int sequence_index = 0);
/// cfg.sequences sequences (subjects S1..Sk) with per-sequence seeds derived
/// from cfg.seed.
std::vector<MotionSequence> synth_dataset(const SynthConfig& cfg);

struct LoadResult {
  std::vector<MotionSequence> sequences;
  std::size_t discarded_frames = 0;
  std::size_t total_frames = 0;
};

/// POSEQ1 JSON-lines. Frames with any non-finite (null) coordinate are
/// dropped and the sequence is split at the gap, as it is at any jump in the
/// frame index. A new header line starts a new sequence.
LoadResult load_sequences(const std::string& path);
LoadResult read_sequences(std::istream& in);

void write_sequences(const std::string& path, const std::vector<MotionSequence>& seqs);
void write_sequences(std::ostream& out, const std::vector<MotionSequence>& seqs);

/// Seeded partition at sequence granularity; each side keeps input order.
std::pair<std::vector<MotionSequence>, std::vector<MotionSequence>> split_train_val(
    const std::vector<MotionSequence>& seqs, double fraction = 0.5, std::uint64_t seed = 0);

}  // namespace occpose
