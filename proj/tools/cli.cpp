#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "occpose/data.hpp"
#include "occpose/errors.hpp"
#include "occpose/gradcheck.hpp"
#include "occpose/heatmap.hpp"
#include "occpose/train_eval.hpp"

namespace occpose::cli {

namespace {

namespace fs = std::filesystem;

constexpr double kNetworkGradTol = 1e-3;
constexpr double kPrimitiveGradTol = 1e-4;

struct GlobalOptions {
  std::uint64_t seed = 7;
  std::string topology = "h36m17";
  std::string out;
};

struct LabelerOptions {
  std::string kind = "boxedman";
  double epsilon = 0.06;
  bool transitive = false;
  double delta = 0.13;
  std::string delta_unit = "bone";
  bool no_torso = false;

  LabelerConfig resolve() const {
    LabelerConfig c;
    c.kind = labeler_from_string(kind);
    c.cluster.epsilon = epsilon;
    c.cluster.transitive = transitive;
    c.boxed.default_delta = delta;
    if (delta_unit == "bone") c.boxed.unit = DeltaUnit::MeanBoneFraction;
    else if (delta_unit == "absolute") c.boxed.unit = DeltaUnit::Absolute;
    else throw ConfigError("unknown delta unit '" + delta_unit + "' (expected bone|absolute)");
    c.boxed.include_torso = !no_torso;
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    c.boxed.validate();
    return c;
  }

  std::string describe() const {
    std::ostringstream os;
    os << "labeler=" << kind << " epsilon=" << epsilon << " transitive=" << transitive << " delta=" << delta
       << " delta_unit=" << delta_unit << " torso=" << !no_torso;
    return os.str();
  }

  // Persisted next to a checkpoint so eval rebuilds identical inputs.
  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "labeler.kind=" << kind << "\nlabeler.epsilon=" << epsilon << "\nlabeler.transitive=" << transitive
       << "\nlabeler.delta=" << delta << "\nlabeler.delta_unit=" << delta_unit
       << "\nlabeler.torso=" << !no_torso << "\n";
    return os.str();
  }
};

void add_labeler_flags(CLI::App* cmd, LabelerOptions& o) {
  cmd->add_option("--labeler", o.kind, "Occlusion labeler: clustered|boxedman")
      ->check(CLI::IsMember({"clustered", "boxedman"}));
  cmd->add_option("--epsilon", o.epsilon, "Clustered: planar neighborhood radius (meters)");
  cmd->add_flag("--transitive", o.transitive, "Clustered: merge overlapping neighborhoods");
  cmd->add_option("--delta", o.delta, "Boxed man: limb box half-width (head uses twice this)");
  cmd->add_option("--delta-unit", o.delta_unit, "Boxed man: bone (fraction of mean bone length) | absolute (pixels)")
      ->check(CLI::IsMember({"bone", "absolute"}));
  cmd->add_flag("--no-torso", o.no_torso, "Boxed man: skip the torso quad");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write '" + path + "'");
  out << text;
}

void require_out(const GlobalOptions& g, const char* what) {
  if (g.out.empty()) throw ConfigError(std::string("--out is required for ") + what);
}

std::vector<MotionSequence> load_checked(const std::string& path, const GlobalOptions& g, bool topology_given,
                                         std::ostream& err) {
  LoadResult r = load_sequences(path);
  if (r.discarded_frames > 0)
    err << "discarded " << r.discarded_frames << " of " << r.total_frames << " frames with non-finite joints in "
        << path << "\n";
  if (topology_given)
    for (const auto& s : r.sequences)
      if (s.topology != g.topology)
        throw TopologyMismatch(path + " uses '" + s.topology + "', --topology is '" + g.topology + "'");
  return std::move(r.sequences);
}

// --- subcommands ----------------------------------------------------------

int cmd_synth(const GlobalOptions& g, SynthConfig cfg, std::ostream& out) {
  require_out(g, "synth");
  cfg.seed = g.seed;
  cfg.topology = g.topology;
  cfg.validate();
  out << "synth: seed=" << cfg.seed << " topology=" << cfg.topology << " sequences=" << cfg.sequences
      << " frames=" << cfg.n_frames << " fps=" << cfg.fps << " stride_m=" << cfg.gait.stride_m
      << " cadence_hz=" << cfg.gait.cadence_hz << " arm_swing_rad=" << cfg.gait.arm_swing_rad
      << " hip_sway_m=" << cfg.gait.hip_sway_m << " cam_radius_m=" << cfg.camera_orbit.radius_m
      << " cam_height_m=" << cfg.camera_orbit.height_m << " angular_speed=" << cfg.camera_orbit.angular_speed
      << " out=" << g.out << "\n";
  write_sequences(g.out, synth_dataset(cfg));
  return kOk;
}

int cmd_label(const GlobalOptions& g, bool topology_given, const std::string& in, const LabelerOptions& lo,
              std::ostream& out, std::ostream& err) {
  require_out(g, "label");
  const LabelerConfig lc = lo.resolve();
  out << "label: in=" << in << " " << lo.describe() << " out=" << g.out << "\n";
  auto seqs = load_checked(in, g, topology_given, err);
  std::size_t frames = 0, occluded = 0, joints = 0;
  for (auto& s : seqs) {
    const SkeletonTopology topo = load_topology(s.topology);
    s.joints2d.clear();
    s.occ.clear();
    for (const auto& f : s.frames) {
      const Pose3D cam3d = world_to_camera(f, s.camera);
      const Pose2D px = project(cam3d, s.camera, Frame::Camera);
      s.joints2d.push_back(px);
      s.occ.push_back(label_frame(cam3d, px, topo, lc));
      ++frames;
      occluded += s.occ.back().count();
      joints += s.occ.back().size();
    }
  }
  write_sequences(g.out, seqs);
  out << "labeled " << frames << " frames, " << occluded << " of " << joints << " joints occluded\n";
  return kOk;
}

int cmd_render(const GlobalOptions& g, bool topology_given, const std::string& in, double sigma, int size,
               int every, int max_frames, std::ostream& out, std::ostream& err) {
  require_out(g, "render");
  if (every < 1) throw ConfigError("--every must be >= 1");
  out << "render: in=" << in << " sigma=" << sigma << " size=" << size << " every=" << every
      << " max_frames=" << max_frames << " out=" << g.out << "\n";
  const auto seqs = load_checked(in, g, topology_given, err);
  fs::create_directories(g.out);
  int written = 0;
  for (std::size_t si = 0; si < seqs.size(); ++si) {
    const auto& s = seqs[si];
    if (s.occ.empty() || s.joints2d.empty())
      throw Error(ErrorKind::Data, "sequence " + s.subject + " has no labels; run `label` first");
    for (std::size_t f = 0; f < s.size(); f += static_cast<std::size_t>(every)) {
      if (max_frames > 0 && written >= max_frames) break;
      const HeatmapStack full =
          render_heatmaps(s.joints2d[f], s.occ[f], s.camera.image_height(), s.camera.image_width(), sigma);
      CropConfig cc;
      cc.out_size = size;
      HeatmapStack crop;
      try {
        crop = center_crop_resize(full, s.joints2d[f], s.occ[f], cc);
      } catch (const NoVisibleJoints&) {
        err << "skipping frame " << s.frame_index[f] << ": every joint occluded\n";
        continue;
      }
      std::ostringstream stem;
      stem << s.subject << "_" << s.action << "_" << s.camera_id << "_" << si << "_" << std::setw(6)
           << std::setfill('0') << s.frame_index[f];
      const fs::path base = fs::path(g.out) / stem.str();
      write_heatmap_png(base.string() + ".png", crop);
      write_hms(base.string() + ".hms", crop);
      ++written;
    }
  }
  out << "wrote " << written << " heatmap stacks\n";
  return kOk;
}

struct TrainOptions {
  std::string train_path;
  std::string val_path;
  std::string data_path;
  double val_fraction = 0.5;
  std::string variant = "many";
};

int cmd_train(const GlobalOptions& g, bool topology_given, TrainConfig cfg, const TrainOptions& to,
              const LabelerOptions& lo, std::ostream& out, std::ostream& err) {
  require_out(g, "train");
  cfg.seed = g.seed;
  cfg.labeler = lo.resolve();
  cfg.tcn.variant = nn::variant_from_string(to.variant);
  cfg.checkpoint_path = g.out;

  std::vector<MotionSequence> train_seqs, val_seqs;
  if (!to.data_path.empty()) {
    auto all = load_checked(to.data_path, g, topology_given, err);
    std::tie(train_seqs, val_seqs) = split_train_val(all, 1.0 - to.val_fraction, g.seed);
  } else {
    if (to.train_path.empty() || to.val_path.empty())
      throw ConfigError("train needs --data, or both --train and --val");
    train_seqs = load_checked(to.train_path, g, topology_given, err);
    val_seqs = load_checked(to.val_path, g, topology_given, err);
  }
  if (train_seqs.empty() || val_seqs.empty()) throw Error(ErrorKind::Data, "empty train or validation split");
  const SkeletonTopology topo = load_topology(train_seqs.front().topology);
  for (const auto& s : val_seqs)
    if (s.topology != topo.name) throw TopologyMismatch("train and validation topologies differ");
  cfg.tcn.joints = topo.joint_count;
  cfg.validate();

  out << "train: seed=" << cfg.seed << " topology=" << topo.name << " epochs=" << cfg.epochs
      << " batch_size=" << cfg.batch_size << " lr=" << cfg.lr << " momentum=" << cfg.momentum
      << " lr_decay=" << cfg.lr_decay << " lambda1=" << cfg.loss_weights.lambda1
      << " lambda2=" << cfg.loss_weights.lambda2 << " " << lo.describe() << " variant=" << to.variant
      << " kernel_w=" << cfg.tcn.kernel_w << " channels=" << cfg.tcn.channels << " blocks=" << cfg.tcn.blocks
      << " dropout=" << cfg.tcn.dropout << " tau=" << cfg.tcn.gate_tau
      << " receptive_field=" << cfg.tcn.receptive_field() << " out=" << g.out << "\n";

  const int rf = cfg.tcn.receptive_field();
  const auto train_set = make_dataset(train_seqs, cfg.labeler, rf);
  const auto val_set = make_dataset(val_seqs, cfg.labeler, rf);
  out << "windows: train=" << train_set.size() << " val=" << val_set.size() << "\n";
  if (train_set.empty() || val_set.empty())
    throw Error(ErrorKind::Data, "no sequence is long enough for the receptive field");

  const TrainResult res = train(train_set, val_set, cfg, topo);
  write_file(g.out + ".cfg", cfg.tcn.to_text() + lo.to_text() + "topology=" + topo.name + "\n");
  write_file(g.out + ".log.csv", res.log.to_csv());
  for (const auto& r : res.log.records)
    out << "epoch " << r.epoch << " train_loss=" << r.train_loss << " val_mpjpe_mm=" << r.val_mpjpe_mm
        << " val_occ_loss=" << r.val_occ_loss << " lr=" << r.lr << "\n";
  out << "best epoch " << res.best_epoch << " checkpoint " << g.out << "\n";
  return kOk;
}

struct SavedRun {
  nn::TcnConfig tcn;
  LabelerOptions labeler;
  std::string topology;
};

SavedRun read_saved_config(const std::string& path) {
  SavedRun run;
  std::istringstream is(read_file(path));
  std::string line, tcn_text;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq);
    const std::string val = eq == std::string::npos ? "" : line.substr(eq + 1);
    if (key == "topology") run.topology = val;
    else if (key == "labeler.kind") run.labeler.kind = val;
    else if (key == "labeler.epsilon") run.labeler.epsilon = std::stod(val);
    else if (key == "labeler.transitive") run.labeler.transitive = val == "1";
    else if (key == "labeler.delta") run.labeler.delta = std::stod(val);
    else if (key == "labeler.delta_unit") run.labeler.delta_unit = val;
    else if (key == "labeler.torso") run.labeler.no_torso = val != "1";
    else tcn_text += line + "\n";
  }
  run.tcn = nn::TcnConfig::from_text(tcn_text);
  return run;
}

int cmd_eval(const GlobalOptions& g, bool topology_given, const std::string& data, const std::string& checkpoint,
             const std::string& label, std::ostream& out, std::ostream& err) {
  const SavedRun run = read_saved_config(checkpoint + ".cfg");
  const nn::ParameterStore params = nn::load_checkpoint(checkpoint);
  out << "eval: data=" << data << " checkpoint=" << checkpoint << " " << run.labeler.describe()
      << " variant=" << nn::to_string(run.tcn.variant) << " receptive_field=" << run.tcn.receptive_field()
      << " out=" << (g.out.empty() ? "-" : g.out) << "\n";
  const auto seqs = load_checked(data, g, topology_given, err);
  if (seqs.empty()) throw EmptyEvaluation();
  const SkeletonTopology topo = load_topology(seqs.front().topology);
  if (topo.joint_count != run.tcn.joints)
    throw TopologyMismatch("checkpoint expects " + std::to_string(run.tcn.joints) + " joints");
  const auto windows = make_dataset(seqs, run.labeler.resolve(), run.tcn.receptive_field());
  const EvalResult res = evaluate(windows, params, run.tcn, topo);
  out << res.report.to_text();
  out << "occlusion loss " << res.occ_loss << "\n";
  std::set<std::string> actions;
  for (const auto& r : res.report.rows) actions.insert(r.action);
  const std::vector<std::pair<std::string, EvalReport>> runs{{label, res.report}};
  for (const auto& a : actions) out << "\n" << render_action_table(a, runs);
  out << "\n" << render_average_table(runs);
  if (!g.out.empty()) write_file(g.out, res.report.to_csv());
  return kOk;
}

struct GradOptions {
  int joints = 3;
  int channels = 8;
  int blocks = 1;
  int kernel = 3;
  std::size_t max_coords = 0;
};

int cmd_gradcheck(const GlobalOptions& g, const GradOptions& go, std::ostream& out) {
  nn::TcnConfig cfg;
  cfg.joints = go.joints;
  cfg.channels = go.channels;
  cfg.blocks = go.blocks;
  cfg.kernel_w = go.kernel;
  cfg.dropout = 0.0;
  cfg.validate();
  const double step = 1e-5;
  out << "gradcheck: seed=" << g.seed << " step=" << step << " joints=" << cfg.joints
      << " channels=" << cfg.channels << " blocks=" << cfg.blocks << " kernel=" << cfg.kernel_w
      << " max_coords=" << go.max_coords << " dropout=0\n";
  const auto prims = nn::check_primitives(g.seed, step);
  std::vector<nn::GradCheck> nets;
  for (nn::Variant v : {nn::Variant::OneVector, nn::Variant::ManyVectors}) {
    cfg.variant = v;
    nets.push_back(nn::check_network(cfg, g.seed + 1, step, go.max_coords));
  }
  double max_prim = 0.0, max_net = 0.0;
  out << std::scientific << std::setprecision(3);
  for (const auto& c : prims) {
    out << "  " << std::left << std::setw(32) << c.name << c.max_rel_error << "\n";
    max_prim = std::max(max_prim, c.max_rel_error);
  }
  for (const auto& c : nets) {
    out << "  " << std::left << std::setw(32) << c.name << c.max_rel_error << "  (" << c.coords << " coords)\n";
    max_net = std::max(max_net, c.max_rel_error);
  }
  out << "max relative error: primitives " << max_prim << ", network " << max_net << "\n";
  if (max_prim >= kPrimitiveGradTol || max_net >= kNetworkGradTol) {
    out << "FAILED\n";
    return kNumericalError;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Occlusion-aware 2D-to-3D pose lifting toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  auto* topo_opt = app.add_option("--topology", g.topology, "Skeleton preset (h36m17|humaneva15) or topology file");
  app.add_option("--out", g.out, "Output file or directory");

  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Generate synthetic walking sequences");
  synth->add_option("--frames", sc.n_frames, "Frames per sequence");
  synth->add_option("--sequences", sc.sequences, "Number of sequences (subjects)");
  synth->add_option("--fps", sc.fps, "Frame rate");
  synth->add_option("--stride-m", sc.gait.stride_m, "Distance per gait cycle (m)");
  synth->add_option("--cadence", sc.gait.cadence_hz, "Gait cycles per second");
  synth->add_option("--arm-swing", sc.gait.arm_swing_rad, "Arm swing amplitude (rad)");
  synth->add_option("--hip-sway", sc.gait.hip_sway_m, "Lateral pelvis sway (m)");
  synth->add_option("--cam-radius", sc.camera_orbit.radius_m, "Camera distance from the track center (m)");
  synth->add_option("--cam-height", sc.camera_orbit.height_m, "Camera height (m)");
  synth->add_option("--angular-speed", sc.camera_orbit.angular_speed, "Orbit rate around the subject (rad/s)");
  synth->add_option("--action", sc.action, "Action tag");

  std::string label_in;
  LabelerOptions label_lo;
  auto* label = app.add_subcommand("label", "Attach 2D projections and occlusion labels");
  label->add_option("--in", label_in, "POSEQ1 sequence file")->required();
  add_labeler_flags(label, label_lo);

  std::string render_in;
  double sigma = 2.0;
  int size = 128, every = 1, max_frames = 0;
  auto* render = app.add_subcommand("render", "Render cropped heatmaps (PNG + HMS1) from a labeled file");
  render->add_option("--in", render_in, "Labeled POSEQ1 file")->required();
  render->add_option("--sigma", sigma, "Gaussian sigma (pixels, source resolution)");
  render->add_option("--size", size, "Output side length after crop and resize");
  render->add_option("--every", every, "Render every k-th frame");
  render->add_option("--max-frames", max_frames, "Stop after this many stacks (0 = all)");

  TrainConfig tc;
  TrainOptions to;
  LabelerOptions train_lo;
  auto* trn = app.add_subcommand("train", "Train the occlusion-aware TCN");
  trn->add_option("--train", to.train_path, "Training sequences");
  trn->add_option("--val", to.val_path, "Validation sequences");
  trn->add_option("--data", to.data_path, "Single file split by sequence into train/val");
  trn->add_option("--val-fraction", to.val_fraction, "Validation share when using --data");
  trn->add_option("--epochs", tc.epochs, "Training epochs");
  trn->add_option("--batch-size", tc.batch_size, "Windows per step");
  trn->add_option("--lr", tc.lr, "Learning rate");
  trn->add_option("--momentum", tc.momentum, "SGD momentum");
  trn->add_option("--lr-decay", tc.lr_decay, "Per-epoch learning-rate decay");
  trn->add_option("--lambda1", tc.loss_weights.lambda1, "Position loss weight");
  trn->add_option("--lambda2", tc.loss_weights.lambda2, "Occlusion loss weight");
  trn->add_option("--variant", to.variant, "Occlusion branch: one|many")->check(CLI::IsMember({"one", "many"}));
  trn->add_option("--kernel", tc.tcn.kernel_w, "Temporal kernel width W");
  trn->add_option("--channels", tc.tcn.channels, "Hidden channels C");
  trn->add_option("--blocks", tc.tcn.blocks, "Residual blocks B");
  trn->add_option("--dropout", tc.tcn.dropout, "Dropout probability");
  trn->add_option("--tau", tc.tcn.gate_tau, "Occlusion gate threshold");
  add_labeler_flags(trn, train_lo);

  std::string eval_data, eval_ckpt, eval_label = "model";
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint; --out receives the CSV report");
  evl->add_option("--data", eval_data, "POSEQ1 sequences")->required();
  evl->add_option("--checkpoint", eval_ckpt, "TCN1 checkpoint (reads <checkpoint>.cfg)")->required();
  evl->add_option("--label", eval_label, "Row label in the summary tables");

  GradOptions go;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  grad->add_option("--joints", go.joints, "Network joints N");
  grad->add_option("--channels", go.channels, "Network hidden channels C");
  grad->add_option("--blocks", go.blocks, "Network residual blocks B");
  grad->add_option("--kernel", go.kernel, "Network temporal kernel W");
  grad->add_option("--max-coords", go.max_coords, "Sampled coordinates per parameter tensor (0 = all)");

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  const bool topology_given = topo_opt->count() > 0;
  try {
    if (*synth) return cmd_synth(g, sc, out);
    if (*label) return cmd_label(g, topology_given, label_in, label_lo, out, err);
    if (*render) return cmd_render(g, topology_given, render_in, sigma, size, every, max_frames, out, err);
    if (*trn) return cmd_train(g, topology_given, tc, to, train_lo, out, err);
    if (*evl) return cmd_eval(g, topology_given, eval_data, eval_ckpt, eval_label, out, err);
    if (*grad) return cmd_gradcheck(g, go, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Usage: return kUsage;
      case ErrorKind::Data: return kDataError;
      case ErrorKind::Numerical: return kNumericalError;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace occpose::cli
