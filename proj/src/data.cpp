#include "occpose/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "occpose/errors.hpp"

namespace occpose {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct BodyDims {
  double hip_half = 0.12;
  double thigh = 0.45;
  double shin = 0.44;
  double spine = 0.23;
  double chest = 0.25;
  double neck = 0.12;
  double head = 0.12;
  double shoulder_half = 0.18;
  double upper_arm = 0.28;
  double forearm = 0.26;
};

CameraModel orbit_camera(const CameraOrbit& orbit) {
  const Vec3 center(0.0, -orbit.radius_m, orbit.height_m);
  const Vec3 target(0.0, 0.0, 0.9);
  const Vec3 fwd = (target - center).normalized();
  const Vec3 right = fwd.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = fwd.cross(right);
  CameraModel cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = fwd.transpose();
  cam.translation = -cam.rotation * center;
  return cam;
}

// Named joint positions for one frame.
std::map<std::string, Vec3> walk_frame(double t, const SynthConfig& cfg, const BodyDims& d,
                                       double phase0, double track0, double swing_scale) {
  const auto& g = cfg.gait;
  const auto& o = cfg.camera_orbit;
  const double speed = g.stride_m * g.cadence_hz;
  const double track_r = speed / o.angular_speed;
  const double theta = track0 + o.angular_speed * t;
  const double phase = phase0 + 2.0 * kPi * g.cadence_hz * t;

  const Vec3 up = Vec3::UnitZ();
  const Vec3 fwd(-std::sin(theta), std::cos(theta), 0.0);
  const Vec3 left = up.cross(fwd);

  std::map<std::string, Vec3> j;
  const double pelvis_h = d.thigh + d.shin + 0.06 + 0.015 * std::cos(2.0 * phase);
  j["pelvis"] = Vec3(track_r * std::cos(theta), track_r * std::sin(theta), pelvis_h) +
                g.hip_sway_m * std::sin(phase) * left;

  const double lean = 0.05;
  const Vec3 trunk = std::cos(lean) * up + std::sin(lean) * fwd;
  const Vec3 trunk_fwd = std::cos(lean) * fwd - std::sin(lean) * up;
  j["spine"] = j["pelvis"] + d.spine * trunk;
  j["thorax"] = j["spine"] + d.chest * trunk;
  j["neck"] = j["thorax"] + d.neck * (0.97 * trunk + std::sqrt(1.0 - 0.97 * 0.97) * trunk_fwd);
  j["head"] = j["neck"] + d.head * trunk;

  auto leg = [&](const std::string& side, double sign, double ph) {
    const Vec3 hip = j["pelvis"] + sign * d.hip_half * left;
    const double flex = 0.42 * std::sin(ph);
    const double knee_flex = 0.08 + 0.55 * 0.5 * (1.0 - std::cos(ph - 0.9));
    const Vec3 thigh_dir = std::sin(flex) * fwd - std::cos(flex) * up;
    const Vec3 knee = hip + d.thigh * thigh_dir;
    const double shin_angle = flex - knee_flex;
    const Vec3 shin_dir = std::sin(shin_angle) * fwd - std::cos(shin_angle) * up;
    j[side + "_hip"] = hip;
    j[side + "_knee"] = knee;
    j[side + "_ankle"] = knee + d.shin * shin_dir;
  };
  // Right leg leads; the left is half a cycle behind.
  leg("r", -1.0, phase);
  leg("l", 1.0, phase + kPi);

  auto arm = [&](const std::string& side, double sign, double ph) {
    const Vec3 shoulder = j["thorax"] + sign * d.shoulder_half * left;
    const Vec3 outward = sign * left;
    const double abduct = 0.14;
    const double swing = swing_scale * g.arm_swing_rad * std::sin(ph);
    const Vec3 upper_dir = std::cos(abduct) * (std::sin(swing) * fwd - std::cos(swing) * up) +
                           std::sin(abduct) * outward;
    const Vec3 elbow = shoulder + d.upper_arm * upper_dir;
    const double bend = swing + 0.35 + 0.3 * 0.5 * (1.0 + std::sin(ph));
    const Vec3 fore_dir = std::cos(abduct) * (std::sin(bend) * fwd - std::cos(bend) * up) +
                          std::sin(abduct) * outward;
    j[side + "_shoulder"] = shoulder;
    j[side + "_elbow"] = elbow;
    j[side + "_wrist"] = elbow + d.forearm * fore_dir;
  };
  // Arms swing against the same-side leg.
  arm("r", -1.0, phase + kPi);
  arm("l", 1.0, phase);
  return j;
}

double get_number(const json& v, std::size_t line, const char* what) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw ParseError(line, std::string(what) + " must be numeric");
  return v.get<double>();
}

// Accepts [[x, y, ...], ...] or a flat list of N * dims numbers.
Eigen::MatrixXd read_points(const json& arr, int dims, std::size_t line, const char* what) {
  if (!arr.is_array()) throw ParseError(line, std::string(what) + " must be an array");
  const bool nested = !arr.empty() && arr.front().is_array();
  const std::size_t n = nested ? arr.size() : arr.size() / static_cast<std::size_t>(dims);
  if (!nested && arr.size() % static_cast<std::size_t>(dims) != 0)
    throw ParseError(line, std::string(what) + " length is not a multiple of " + std::to_string(dims));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), dims);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < dims; ++a) {
      if (nested) {
        if (!arr[i].is_array() || arr[i].size() != static_cast<std::size_t>(dims))
          throw ParseError(line, std::string(what) + " entries must have " + std::to_string(dims) + " values");
        m(static_cast<Eigen::Index>(i), a) = get_number(arr[i][static_cast<std::size_t>(a)], line, what);
      } else {
        m(static_cast<Eigen::Index>(i), a) = get_number(arr[i * dims + a], line, what);
      }
    }
  return m;
}

json points_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index a = 0; a < m.cols(); ++a) row.push_back(m(i, a));
    arr.push_back(std::move(row));
  }
  return arr;
}

CameraModel camera_from_json(const json& c, std::size_t line) {
  CameraModel cam;
  try {
    cam.fx = c.at("fx").get<double>();
    cam.fy = c.at("fy").get<double>();
    cam.cx = c.at("cx").get<double>();
    cam.cy = c.at("cy").get<double>();
    const auto r = c.at("R").get<std::vector<double>>();
    const auto t = c.at("t").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw ParseError(line, "camera R needs 9 values and t 3");
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) cam.rotation(i, k) = r[static_cast<std::size_t>(3 * i + k)];
      cam.translation(i) = t[static_cast<std::size_t>(i)];
    }
  } catch (const json::exception& e) {
    throw ParseError(line, std::string("camera: ") + e.what());
  }
  try {
    cam.validate();
  } catch (const ConfigError& e) {
    throw ParseError(line, e.what());
  }
  return cam;
}

json camera_json(const CameraModel& cam) {
  json r = json::array(), t = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(cam.rotation(i, k));
    t.push_back(cam.translation(i));
  }
  return json{{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"R", r}, {"t", t}};
}

}  // namespace

void SynthConfig::validate() const {
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (sequences < 1) throw ConfigError("sequences must be >= 1");
  if (!(fps > 0.0)) throw ConfigError("fps must be > 0");
  if (!(gait.stride_m > 0.0 && gait.cadence_hz > 0.0 && gait.arm_swing_rad > 0.0 && gait.hip_sway_m > 0.0))
    throw ConfigError("gait magnitudes must be > 0");
  if (!(camera_orbit.radius_m > 0.0 && camera_orbit.height_m > 0.0 && camera_orbit.angular_speed > 0.0))
    throw ConfigError("camera orbit magnitudes must be > 0");
  const double track_r = gait.stride_m * gait.cadence_hz / camera_orbit.angular_speed;
  if (!(camera_orbit.radius_m > track_r + 1.5))
    throw ConfigError("camera radius must exceed the walking track radius (" + std::to_string(track_r) +
                      " m) by at least 1.5 m");
}

MotionSequence synth_walk(const SynthConfig& cfg, int sequence_index) {
  cfg.validate();
  const SkeletonTopology topo = topology_preset(cfg.topology);
  std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(sequence_index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = 0.92 + 0.16 * unit(rng);
  const double phase0 = 2.0 * kPi * unit(rng);
  const double track0 = 2.0 * kPi * unit(rng);
  const double swing_scale = 0.85 + 0.3 * unit(rng);

  BodyDims d;
  for (double* v : {&d.hip_half, &d.thigh, &d.shin, &d.spine, &d.chest, &d.neck, &d.head,
                    &d.shoulder_half, &d.upper_arm, &d.forearm})
    *v *= scale;

  MotionSequence seq;
  seq.topology = topo.name;
  seq.fps = cfg.fps;
  seq.subject = "S" + std::to_string(sequence_index + 1);
  seq.action = cfg.action;
  seq.camera_id = "C1";
  seq.camera = orbit_camera(cfg.camera_orbit);
  seq.frames.reserve(static_cast<std::size_t>(cfg.n_frames));
  for (int f = 0; f < cfg.n_frames; ++f) {
    const auto named = walk_frame(f / cfg.fps, cfg, d, phase0, track0, swing_scale);
    Pose3D pose(topo.joint_count, 3);
    for (int k = 0; k < topo.joint_count; ++k)
      pose.row(k) = named.at(topo.joint_names[static_cast<std::size_t>(k)]).transpose();
    seq.frames.push_back(std::move(pose));
    seq.frame_index.push_back(f);
  }
  return seq;
}

std::vector<MotionSequence> synth_dataset(const SynthConfig& cfg) {
  std::vector<MotionSequence> out;
  for (int s = 0; s < cfg.sequences; ++s) out.push_back(synth_walk(cfg, s));
  return out;
}

LoadResult load_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open sequence file '" + path + "'");
  return read_sequences(in);
}

LoadResult read_sequences(std::istream& in) {
  LoadResult result;
  MotionSequence header;
  SkeletonTopology topo;
  bool have_header = false;
  MotionSequence current;
  std::int64_t last_t = 0;
  bool have_last = false;

  auto flush = [&]() {
    if (!current.frames.empty()) result.sequences.push_back(std::move(current));
    current = header;
    have_last = false;
  };

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");

    if (j.contains("format")) {
      if (j["format"] != "POSEQ1") throw ParseError(line_no, "unsupported format");
      if (have_header) flush();
      header = MotionSequence{};
      try {
        header.topology = j.at("topology").get<std::string>();
        header.fps = j.at("fps").get<double>();
        header.subject = j.at("subject").get<std::string>();
        header.action = j.at("action").get<std::string>();
        header.camera_id = j.at("camera_id").get<std::string>();
      } catch (const json::exception& e) {
        throw ParseError(line_no, std::string("header: ") + e.what());
      }
      header.camera = camera_from_json(j.at("camera"), line_no);
      try {
        topo = load_topology(header.topology);
      } catch (const ConfigError& e) {
        throw TopologyMismatch(e.what());
      }
      current = header;
      have_header = true;
      have_last = false;
      continue;
    }
    if (!have_header) throw ParseError(line_no, "frame before POSEQ1 header");
    if (!j.contains("joints3d")) throw ParseError(line_no, "frame without joints3d");

    ++result.total_frames;
    const std::int64_t t = j.value("t", have_last ? last_t + 1 : std::int64_t{0});
    const Eigen::MatrixXd p3 = read_points(j["joints3d"], 3, line_no, "joints3d");
    if (p3.rows() != topo.joint_count)
      throw TopologyMismatch("line " + std::to_string(line_no) + ": " + std::to_string(p3.rows()) +
                             " joints, topology '" + topo.name + "' has " + std::to_string(topo.joint_count));
    Eigen::MatrixXd p2;
    if (j.contains("joints2d")) {
      p2 = read_points(j["joints2d"], 2, line_no, "joints2d");
      if (p2.rows() != topo.joint_count) throw TopologyMismatch("line " + std::to_string(line_no) + ": joints2d count");
    }
    std::vector<std::uint8_t> occ;
    if (j.contains("occ")) {
      try {
        const auto raw = j["occ"].get<std::vector<int>>();
        if (raw.size() != static_cast<std::size_t>(topo.joint_count))
          throw TopologyMismatch("line " + std::to_string(line_no) + ": occ count");
        for (int v : raw) {
          if (v != 0 && v != 1) throw ParseError(line_no, "occ entries must be 0 or 1");
          occ.push_back(static_cast<std::uint8_t>(v));
        }
      } catch (const json::exception& e) {
        throw ParseError(line_no, std::string("occ: ") + e.what());
      }
    }

    const bool finite = p3.allFinite() && (p2.size() == 0 || p2.allFinite());
    if (!finite) {
      ++result.discarded_frames;
      if (!current.frames.empty()) flush();
      have_last = true;
      last_t = t;
      continue;
    }
    if (have_last && t != last_t + 1 && !current.frames.empty()) flush();
    // Annotations must be all-or-nothing within a sequence.
    if (!current.frames.empty() && (current.joints2d.empty() != (p2.size() == 0) ||
                                    current.occ.empty() != occ.empty()))
      throw ParseError(line_no, "optional fields must be present on every frame of a sequence");
    current.frames.push_back(p3);
    current.frame_index.push_back(t);
    if (p2.size() > 0) current.joints2d.push_back(p2);
    if (!occ.empty()) current.occ.emplace_back(std::move(occ));
    last_t = t;
    have_last = true;
  }
  if (have_header && !current.frames.empty()) result.sequences.push_back(std::move(current));
  return result;
}

void write_sequences(const std::string& path, const std::vector<MotionSequence>& seqs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot write '" + path + "'");
  write_sequences(out, seqs);
  if (!out) throw Error(ErrorKind::Data, "write failed for '" + path + "'");
}

void write_sequences(std::ostream& out, const std::vector<MotionSequence>& seqs) {
  for (const auto& s : seqs) {
    const json header{{"format", "POSEQ1"},    {"topology", s.topology}, {"fps", s.fps},
                      {"subject", s.subject},  {"action", s.action},     {"camera_id", s.camera_id},
                      {"camera", camera_json(s.camera)}};
    out << header.dump() << "\n";
    for (std::size_t f = 0; f < s.frames.size(); ++f) {
      json line;
      line["t"] = f < s.frame_index.size() ? s.frame_index[f] : static_cast<std::int64_t>(f);
      line["joints3d"] = points_json(s.frames[f]);
      if (f < s.joints2d.size()) line["joints2d"] = points_json(s.joints2d[f]);
      if (f < s.occ.size()) {
        json o = json::array();
        for (auto v : s.occ[f].labels) o.push_back(static_cast<int>(v));
        line["occ"] = std::move(o);
      }
      out << line.dump() << "\n";
    }
  }
}

std::pair<std::vector<MotionSequence>, std::vector<MotionSequence>> split_train_val(
    const std::vector<MotionSequence>& seqs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0, 1)");
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(seqs.size())));
  std::vector<std::uint8_t> in_train(seqs.size(), 0);
  for (std::size_t i = 0; i < n_train && i < order.size(); ++i) in_train[order[i]] = 1;
  std::pair<std::vector<MotionSequence>, std::vector<MotionSequence>> out;
  for (std::size_t i = 0; i < seqs.size(); ++i) (in_train[i] ? out.first : out.second).push_back(seqs[i]);
  return out;
}

}  // namespace occpose
