#pragma once

#include <string>
#include <vector>

#include "occpose/geometry.hpp"
#include "occpose/occlusion.hpp"

namespace occpose {

/// Continuous image-space rectangle. Pixel i spans [i - 0.5, i + 0.5].
struct CropWindow {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 0.0;
  double height = 0.0;
};

/// N channels of H x W intensities in [0, 1], channel-major, row-major.
struct HeatmapStack {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;
  // Provenance of the pixels.
  int source_height = 0;
  int source_width = 0;
  CropWindow crop;
  std::vector<int> joint_order;

  HeatmapStack() = default;
  HeatmapStack(int n, int h, int w);

  double& at(int c, int y, int x) { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double channel_sum(int c) const;
  bool channel_is_zero(int c) const;

  /// Max over channels; the single-image visualization.
  std::vector<double> max_projection() const;
};

/// Unnormalized Gaussian per visible joint with peak 1 at the joint; occluded
/// channels stay zero.
HeatmapStack render_heatmaps(const Pose2D& pose, const OcclusionVector& occ, int height, int width,
                             double sigma);

struct CropConfig {
  int out_size = 128;
  double margin = 1.25;
  // Floor on the crop side so a single visible joint still gets a window.
  double min_side = 16.0;
};

/// Square window around the visible-joint bounding box, clamped to the image.
/// Throws NoVisibleJoints when every joint is occluded.
CropWindow subject_crop_window(const Pose2D& pose, const OcclusionVector& occ, int image_height,
                               int image_width, const CropConfig& cfg = {});

/// Bilinear resample of `window` to out_size x out_size per channel.
HeatmapStack crop_resize(const HeatmapStack& hm, const CropWindow& window, int out_size);

HeatmapStack center_crop_resize(const HeatmapStack& hm, const Pose2D& pose,
                                const OcclusionVector& occ, const CropConfig& cfg = {});

/// HMS1 binary stack: "HMS1", u32 N, u32 H, u32 W, then N*H*W little-endian
/// float32 values.
void write_hms(const std::string& path, const HeatmapStack& hm);
HeatmapStack read_hms(const std::string& path);

/// 8-bit grayscale PNG of the max-projection.
void write_heatmap_png(const std::string& path, const HeatmapStack& hm);

}  // namespace occpose
