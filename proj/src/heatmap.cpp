#include "occpose/heatmap.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>

#include "occpose/endian.hpp"
#include "occpose/errors.hpp"

namespace occpose {

HeatmapStack::HeatmapStack(int n, int h, int w)
    : channels(n), height(h), width(w),
      values(static_cast<std::size_t>(n) * h * w, 0.0),
      source_height(h), source_width(w),
      crop{-0.5, -0.5, static_cast<double>(w), static_cast<double>(h)},
      joint_order(n) {
  std::iota(joint_order.begin(), joint_order.end(), 0);
}

double HeatmapStack::channel_sum(int c) const {
  const auto begin = values.begin() + static_cast<std::ptrdiff_t>(c) * height * width;
  return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(height) * width, 0.0);
}

bool HeatmapStack::channel_is_zero(int c) const {
  const auto begin = values.begin() + static_cast<std::ptrdiff_t>(c) * height * width;
  return std::all_of(begin, begin + static_cast<std::ptrdiff_t>(height) * width,
                     [](double v) { return v == 0.0; });
}

std::vector<double> HeatmapStack::max_projection() const {
  std::vector<double> out(static_cast<std::size_t>(height) * width, 0.0);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double& o = out[static_cast<std::size_t>(y) * width + x];
        o = std::max(o, at(c, y, x));
      }
  return out;
}

HeatmapStack render_heatmaps(const Pose2D& pose, const OcclusionVector& occ, int height, int width,
                             double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be > 0");
  if (height < 1 || width < 1) throw ConfigError("heatmap size must be at least 1x1");
  if (occ.size() != static_cast<std::size_t>(pose.rows()))
    throw ShapeMismatch("occlusion vector length " + std::to_string(occ.size()) + " vs " +
                        std::to_string(pose.rows()) + " joints");
  const int n = static_cast<int>(pose.rows());
  HeatmapStack hm(n, height, width);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx(width), gy(height);
  for (int c = 0; c < n; ++c) {
    if (occ[c]) continue;
    const double u = pose(c, 0);
    const double v = pose(c, 1);
    // exp(-(dx^2 + dy^2) / 2s^2) factors into a row and a column profile.
    for (int x = 0; x < width; ++x) gx[x] = std::exp(-(x - u) * (x - u) * inv);
    for (int y = 0; y < height; ++y) gy[y] = std::exp(-(y - v) * (y - v) * inv);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) hm.at(c, y, x) = gy[y] * gx[x];
  }
  return hm;
}

CropWindow subject_crop_window(const Pose2D& pose, const OcclusionVector& occ, int image_height,
                               int image_width, const CropConfig& cfg) {
  double min_x = INFINITY, min_y = INFINITY, max_x = -INFINITY, max_y = -INFINITY;
  bool any = false;
  for (Eigen::Index j = 0; j < pose.rows(); ++j) {
    if (occ[static_cast<std::size_t>(j)]) continue;
    any = true;
    min_x = std::min(min_x, pose(j, 0));
    max_x = std::max(max_x, pose(j, 0));
    min_y = std::min(min_y, pose(j, 1));
    max_y = std::max(max_y, pose(j, 1));
  }
  if (!any) throw NoVisibleJoints();
  const double side = std::max(cfg.margin * std::max(max_x - min_x, max_y - min_y), cfg.min_side);
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);
  const double left = std::max(cx - side / 2, -0.5);
  const double top = std::max(cy - side / 2, -0.5);
  const double right = std::min(cx + side / 2, image_width - 0.5);
  const double bottom = std::min(cy + side / 2, image_height - 0.5);
  if (!(right > left) || !(bottom > top)) throw NoVisibleJoints();
  return {left, top, right - left, bottom - top};
}

HeatmapStack crop_resize(const HeatmapStack& hm, const CropWindow& window, int out_size) {
  if (out_size < 1) throw ConfigError("out_size must be >= 1");
  HeatmapStack out(hm.channels, out_size, out_size);
  out.source_height = hm.source_height;
  out.source_width = hm.source_width;
  out.crop = window;
  out.joint_order = hm.joint_order;

  const double sx = window.width / out_size;
  const double sy = window.height / out_size;
  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [](double src, int extent) {
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, extent - 1);
    return Tap{i0, i1, src - i0};
  };
  std::vector<Tap> xt(out_size), yt(out_size);
  for (int i = 0; i < out_size; ++i) {
    xt[i] = taps(window.x0 + (i + 0.5) * sx, hm.width);
    yt[i] = taps(window.y0 + (i + 0.5) * sy, hm.height);
  }
  for (int c = 0; c < hm.channels; ++c)
    for (int y = 0; y < out_size; ++y) {
      const Tap& ty = yt[y];
      for (int x = 0; x < out_size; ++x) {
        const Tap& tx = xt[x];
        const double top = (1 - tx.w1) * hm.at(c, ty.i0, tx.i0) + tx.w1 * hm.at(c, ty.i0, tx.i1);
        const double bot = (1 - tx.w1) * hm.at(c, ty.i1, tx.i0) + tx.w1 * hm.at(c, ty.i1, tx.i1);
        out.at(c, y, x) = std::clamp((1 - ty.w1) * top + ty.w1 * bot, 0.0, 1.0);
      }
    }
  return out;
}

HeatmapStack center_crop_resize(const HeatmapStack& hm, const Pose2D& pose,
                                const OcclusionVector& occ, const CropConfig& cfg) {
  const CropWindow w = subject_crop_window(pose, occ, hm.height, hm.width, cfg);
  return crop_resize(hm, w, cfg.out_size);
}

void write_hms(const std::string& path, const HeatmapStack& hm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write '" + path + "'");
  out.write("HMS1", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(hm.channels));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(hm.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(hm.width));
  for (double v : hm.values) put_le<float>(out, static_cast<float>(v));
  if (!out) throw Error(ErrorKind::Data, "write failed for '" + path + "'");
}

HeatmapStack read_hms(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HMS1", 4) != 0) throw ParseError(0, "bad HMS1 magic");
  const auto n = get_le<std::uint32_t>(in);
  const auto h = get_le<std::uint32_t>(in);
  const auto w = get_le<std::uint32_t>(in);
  HeatmapStack hm(static_cast<int>(n), static_cast<int>(h), static_cast<int>(w));
  for (double& v : hm.values) v = get_le<float>(in);
  if (!in) throw ParseError(0, "truncated HMS1 stack");
  return hm;
}

void write_heatmap_png(const std::string& path, const HeatmapStack& hm) {
  const auto image = hm.max_projection();
  std::vector<png_byte> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    pixels[i] = static_cast<png_byte>(std::lround(255.0 * std::clamp(image[i], 0.0, 1.0)));

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(ErrorKind::Data, "cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Data, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Data, "libpng failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(hm.width), static_cast<png_uint_32>(hm.height),
               8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < hm.height; ++y)
    png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * hm.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace occpose
