#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "occpose/data.hpp"
#include "occpose/errors.hpp"
#include "occpose/train_eval.hpp"

using namespace occpose;

namespace {

SynthConfig small_synth(int frames = 120, int sequences = 2) {
  SynthConfig c;
  c.n_frames = frames;
  c.sequences = sequences;
  return c;
}

std::string header(const std::string& topo = "humaneva15") {
  return R"({"format":"POSEQ1","topology":")" + topo +
         R"(","fps":60,"subject":"S1","action":"Walk","camera_id":"C1",)"
         R"("camera":{"fx":1000,"fy":1000,"cx":500,"cy":500,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,5]}})";
}

std::string frame_line(int t, int n, double offset = 0.0, bool null_first = false) {
  std::ostringstream os;
  os << R"({"t":)" << t << R"(,"joints3d":[)";
  for (int j = 0; j < n; ++j) {
    if (j) os << ",";
    if (j == 0 && null_first) os << "[null,0,0]";
    else os << "[" << 0.01 * j + offset << "," << 0.02 * j << "," << 0.03 * j << "]";
  }
  os << "]}";
  return os.str();
}

LoadResult parse(const std::string& text) {
  std::istringstream in(text);
  return read_sequences(in);
}

}  // namespace

TEST_CASE("synth is deterministic per seed") {
  const auto a = synth_dataset(small_synth());
  const auto b = synth_dataset(small_synth());
  REQUIRE(a.size() == b.size());
  for (std::size_t s = 0; s < a.size(); ++s)
    for (std::size_t f = 0; f < a[s].size(); ++f) REQUIRE(a[s].frames[f] == b[s].frames[f]);
  SynthConfig other = small_synth();
  other.seed = 8;
  CHECK_FALSE(synth_dataset(other)[0].frames[10] == a[0].frames[10]);
}

TEST_CASE("synth bones stay rigid") {
  const MotionSequence s = synth_walk(small_synth(1000, 1));
  const SkeletonTopology t = load_topology(s.topology);
  double drift = 0.0;
  for (const auto& [c, p] : t.bones()) {
    const double l0 = (s.frames[0].row(c) - s.frames[0].row(p)).norm();
    for (const auto& f : s.frames) drift = std::max(drift, std::abs((f.row(c) - f.row(p)).norm() - l0));
  }
  CHECK(drift < 1e-6);
}

TEST_CASE("synth metadata and camera") {
  const auto seqs = synth_dataset(small_synth(60, 3));
  REQUIRE(seqs.size() == 3);
  std::set<std::string> subjects;
  for (const auto& s : seqs) {
    subjects.insert(s.subject);
    CHECK(s.action == "Walk");
    CHECK(s.size() == 60);
    CHECK_NOTHROW(s.camera.validate());
    for (std::size_t f = 1; f < s.size(); ++f) CHECK(s.frame_index[f] == s.frame_index[f - 1] + 1);
    // Every joint in front of the camera and inside the image.
    for (const auto& f : s.frames) {
      const Pose2D px = project(f, s.camera, Frame::World);
      CHECK(px.col(0).minCoeff() > 0);
      CHECK(px.col(0).maxCoeff() < s.camera.image_width());
      CHECK(px.col(1).minCoeff() > 0);
      CHECK(px.col(1).maxCoeff() < s.camera.image_height());
    }
  }
  CHECK(subjects.size() == 3);
}

TEST_CASE("synth humaneva15 layout") {
  SynthConfig c = small_synth(30, 1);
  c.topology = "humaneva15";
  const MotionSequence s = synth_walk(c);
  CHECK(s.frames[0].rows() == 15);
}

TEST_CASE("synth covers both occluded and clear frames") {
  const auto seqs = synth_dataset(SynthConfig{});
  const SkeletonTopology t = topology_preset("h36m17");
  std::size_t frames = 0, occluded = 0;
  for (const auto& s : seqs)
    for (const auto& f : s.frames) {
      ++frames;
      if (boxed_man_occlusions(project(f, s.camera, Frame::World), t, {}).any()) ++occluded;
    }
  CHECK(frames == 2000);
  const double fraction = static_cast<double>(occluded) / frames;
  CHECK(fraction > 0.1);
  CHECK(fraction < 0.9);
  // Regression fixture from the first verified run.
  CHECK(fraction == doctest::Approx(0.5675).epsilon(1e-9));
}

TEST_CASE("load: empty input") {
  CHECK(parse("").sequences.empty());
  CHECK(parse("\n\n").sequences.empty());
}

TEST_CASE("load: one humaneva15 frame") {
  const LoadResult r = parse(header() + "\n" + frame_line(0, 15) + "\n");
  REQUIRE(r.sequences.size() == 1);
  CHECK(r.sequences[0].size() == 1);
  CHECK(r.sequences[0].topology == "humaneva15");
  CHECK(r.sequences[0].fps == 60);
  CHECK(r.sequences[0].camera.translation.z() == 5.0);
  CHECK(r.discarded_frames == 0);
}

TEST_CASE("load: non-finite frames are dropped and split the sequence") {
  std::string text = header() + "\n";
  for (int t = 0; t < 6; ++t) text += frame_line(t, 15, 0.0, t == 2) + "\n";
  const LoadResult r = parse(text);
  CHECK(r.discarded_frames == 1);
  CHECK(r.total_frames == 6);
  REQUIRE(r.sequences.size() == 2);
  CHECK(r.sequences[0].frame_index == std::vector<std::int64_t>{0, 1});
  CHECK(r.sequences[1].frame_index == std::vector<std::int64_t>{3, 4, 5});
}

TEST_CASE("load: gaps in the frame index split the sequence") {
  std::string text = header() + "\n" + frame_line(0, 15) + "\n" + frame_line(1, 15) + "\n" + frame_line(5, 15) + "\n";
  const LoadResult r = parse(text);
  REQUIRE(r.sequences.size() == 2);
  CHECK(r.sequences[1].frame_index.front() == 5);
}

TEST_CASE("load: frame order is preserved") {
  std::string text = header() + "\n";
  for (int t = 0; t < 5; ++t) text += frame_line(t, 15, 0.1 * t) + "\n";
  const LoadResult r = parse(text);
  REQUIRE(r.sequences.size() == 1);
  for (int t = 0; t < 5; ++t) CHECK(r.sequences[0].frames[t](1, 0) == doctest::Approx(0.01 + 0.1 * t));
}

TEST_CASE("load: malformed input") {
  CHECK_THROWS_AS(parse(frame_line(0, 15)), ParseError);
  CHECK_THROWS_AS(parse(header() + "\n{not json"), ParseError);
  CHECK_THROWS_AS(parse(header() + "\n" + frame_line(0, 17)), Error);
  try {
    parse(header() + "\n" + frame_line(0, 15) + "\n{oops");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find('3') != std::string::npos);
    CHECK(e.kind() == ErrorKind::Data);
  }
  CHECK_THROWS_AS(load_sequences("no_such_file.jsonl"), Error);
}

TEST_CASE("write/read round trip") {
  auto seqs = synth_dataset(small_synth(40, 2));
  // Include labels so the optional fields are exercised.
  const SkeletonTopology t = topology_preset("h36m17");
  for (auto& s : seqs)
    for (const auto& f : s.frames) {
      s.joints2d.push_back(project(f, s.camera, Frame::World));
      s.occ.push_back(boxed_man_occlusions(s.joints2d.back(), t, {}));
    }
  std::stringstream buf;
  write_sequences(buf, seqs);
  const LoadResult r = read_sequences(buf);
  REQUIRE(r.sequences.size() == seqs.size());
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const auto& a = seqs[s];
    const auto& b = r.sequences[s];
    CHECK(a.subject == b.subject);
    CHECK(a.action == b.action);
    CHECK(a.camera_id == b.camera_id);
    CHECK((a.camera.rotation - b.camera.rotation).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.camera.translation - b.camera.translation).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE(a.size() == b.size());
    for (std::size_t f = 0; f < a.size(); ++f) {
      CHECK((a.frames[f] - b.frames[f]).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.joints2d[f] - b.joints2d[f]).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(a.occ[f] == b.occ[f]);
    }
  }
}

TEST_CASE("split: single sequence lands in one set") {
  const auto seqs = synth_dataset(small_synth(10, 1));
  const auto [train, val] = split_train_val(seqs, 0.5, 3);
  CHECK(train.size() + val.size() == 1);
}

TEST_CASE("split: partition of many sequences") {
  std::vector<MotionSequence> seqs(100);
  for (int i = 0; i < 100; ++i) seqs[i].subject = "S" + std::to_string(i);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto [train, val] = split_train_val(seqs, 0.5, seed);
    CHECK(train.size() >= 40);
    CHECK(train.size() <= 60);
    std::set<std::string> names;
    for (const auto& s : train) names.insert(s.subject);
    for (const auto& s : val) CHECK(names.insert(s.subject).second);
    CHECK(names.size() == 100);
    const auto again = split_train_val(seqs, 0.5, seed);
    REQUIRE(again.first.size() == train.size());
    for (std::size_t i = 0; i < train.size(); ++i) CHECK(again.first[i].subject == train[i].subject);
  }
  CHECK_THROWS_AS(split_train_val(seqs, 1.5, 1), ConfigError);
}
