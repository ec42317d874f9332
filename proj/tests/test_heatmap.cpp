#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "occpose/errors.hpp"
#include "occpose/heatmap.hpp"

using namespace occpose;

namespace {

Pose2D single(double x, double y) {
  Pose2D p(1, 2);
  p << x, y;
  return p;
}

}  // namespace

TEST_CASE("render: peak and falloff") {
  const HeatmapStack hm = render_heatmaps(single(20, 15), OcclusionVector(1), 40, 50, 2.0);
  CHECK(hm.channels == 1);
  CHECK(hm.height == 40);
  CHECK(hm.width == 50);
  CHECK(std::abs(hm.at(0, 15, 20) - 1.0) < 1e-12);
  CHECK(hm.at(0, 15, 22) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(hm.at(0, 17, 20) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(hm.at(0, 13, 18) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("render: channel mass") {
  for (double sigma : {1.5, 2.0, 3.0}) {
    const HeatmapStack hm = render_heatmaps(single(40.3, 39.6), OcclusionVector(1), 80, 80, sigma);
    const double mass = 2 * M_PI * sigma * sigma;
    CHECK(std::abs(hm.channel_sum(0) - mass) / mass < 0.01);
  }
}

TEST_CASE("render: occluded channels are exactly zero") {
  Pose2D p(3, 2);
  p << 5, 5, 10, 10, 15, 15;
  OcclusionVector occ(std::vector<std::uint8_t>{0, 1, 0});
  const HeatmapStack hm = render_heatmaps(p, occ, 20, 20, 2.0);
  CHECK(hm.channel_is_zero(1));
  CHECK_FALSE(hm.channel_is_zero(0));
  OcclusionVector all(std::vector<std::uint8_t>{1, 1, 1});
  const HeatmapStack none = render_heatmaps(p, all, 20, 20, 2.0);
  for (double v : none.values) CHECK(v == 0.0);
}

TEST_CASE("render: values stay in [0, 1]") {
  Pose2D p(4, 2);
  p << -3, 4, 7.2, 8.9, 19.5, 0.1, 10, 10;
  const HeatmapStack hm = render_heatmaps(p, OcclusionVector(4), 20, 20, 2.0);
  for (double v : hm.values) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("crop: identity window reproduces the input") {
  Pose2D p(2, 2);
  p << 12.3, 20.7, 30, 8;
  HeatmapStack hm = render_heatmaps(p, OcclusionVector(2), 40, 40, 2.0);
  const HeatmapStack out = crop_resize(hm, {-0.5, -0.5, 40, 40}, 40);
  REQUIRE(out.values.size() == hm.values.size());
  for (std::size_t i = 0; i < hm.values.size(); ++i) CHECK(std::abs(out.values[i] - hm.values[i]) < 1e-12);
}

TEST_CASE("crop: a centered peak lands at the output center") {
  const HeatmapStack hm = render_heatmaps(single(100, 60), OcclusionVector(1), 200, 300, 2.0);
  const CropWindow w{100 - 25, 60 - 25, 50, 50};
  const HeatmapStack out = crop_resize(hm, w, 128);
  int by = 0, bx = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (out.at(0, y, x) > out.at(0, by, bx)) {
        by = y;
        bx = x;
      }
  CHECK(std::abs(by - 63.5) <= 1.0);
  CHECK(std::abs(bx - 63.5) <= 1.0);
}

TEST_CASE("crop window around visible joints") {
  Pose2D p(3, 2);
  p << 100, 100, 140, 180, 500, 500;
  OcclusionVector occ(std::vector<std::uint8_t>{0, 0, 1});
  const CropWindow w = subject_crop_window(p, occ, 400, 400);
  CHECK(w.width == doctest::Approx(100.0));  // 1.25 * 80
  CHECK(w.height == doctest::Approx(100.0));
  CHECK(w.x0 + w.width / 2 == doctest::Approx(120.0));
  CHECK(w.y0 + w.height / 2 == doctest::Approx(140.0));
  OcclusionVector none(std::vector<std::uint8_t>{1, 1, 1});
  CHECK_THROWS_AS(subject_crop_window(p, none, 400, 400), NoVisibleJoints);
}

TEST_CASE("crop window is clamped to the image") {
  Pose2D p(2, 2);
  p << 2, 3, 60, 40;
  const CropWindow w = subject_crop_window(p, OcclusionVector(2), 50, 80);
  CHECK(w.x0 >= -0.5);
  CHECK(w.y0 >= -0.5);
  CHECK(w.x0 + w.width <= 79.5 + 1e-9);
  CHECK(w.y0 + w.height <= 49.5 + 1e-9);
}

TEST_CASE("center crop keeps channels and range") {
  Pose2D p(3, 2);
  p << 40, 50, 60, 90, 45, 70;
  OcclusionVector occ(std::vector<std::uint8_t>{0, 0, 1});
  const HeatmapStack hm = render_heatmaps(p, occ, 120, 160, 2.0);
  CropConfig cc;
  cc.out_size = 32;
  const HeatmapStack out = center_crop_resize(hm, p, occ, cc);
  CHECK(out.channels == 3);
  CHECK(out.height == 32);
  CHECK(out.width == 32);
  CHECK(out.channel_is_zero(2));
  CHECK(out.source_width == 160);
  CHECK(out.source_height == 120);
  for (double v : out.values) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("HMS1 round trip and layout") {
  Pose2D p(2, 2);
  p << 3, 4, 8, 1;
  const HeatmapStack hm = render_heatmaps(p, OcclusionVector(2), 6, 10, 1.5);
  const std::string path = "hm_test.hms";
  write_hms(path, hm);
  CHECK(std::filesystem::file_size(path) == 16 + 4 * 2 * 6 * 10);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "HMS1");
  const HeatmapStack back = read_hms(path);
  CHECK(back.channels == 2);
  CHECK(back.height == 6);
  CHECK(back.width == 10);
  for (std::size_t i = 0; i < hm.values.size(); ++i)
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(hm.values[i])));
}

TEST_CASE("PNG output") {
  const HeatmapStack hm = render_heatmaps(single(8, 8), OcclusionVector(1), 16, 16, 2.0);
  const std::string path = "hm_test.png";
  write_heatmap_png(path, hm);
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8];
  in.read(reinterpret_cast<char*>(sig), 8);
  CHECK(sig[0] == 0x89);
  CHECK(sig[1] == 'P');
  CHECK(sig[2] == 'N');
  CHECK(sig[3] == 'G');
}

TEST_CASE("max projection") {
  Pose2D p(2, 2);
  p << 2, 2, 7, 7;
  const HeatmapStack hm = render_heatmaps(p, OcclusionVector(2), 10, 10, 1.0);
  const auto mp = hm.max_projection();
  REQUIRE(mp.size() == 100u);
  CHECK(mp[2 * 10 + 2] == doctest::Approx(1.0));
  CHECK(mp[7 * 10 + 7] == doctest::Approx(1.0));
  for (int i = 0; i < 100; ++i) CHECK(mp[i] == std::max(hm.values[i], hm.values[100 + i]));
}
