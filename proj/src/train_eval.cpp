#include "occpose/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "occpose/errors.hpp"

namespace occpose {

namespace {

Pose3D target_from_example(const Example& ex) {
  const auto n = static_cast<Eigen::Index>(ex.target3d.size() / 3);
  Pose3D p(n, 3);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int a = 0; a < 3; ++a) p(j, a) = ex.target3d[static_cast<std::size_t>(3 * j + a)];
  return p;
}

Pose3D pose_from_row(const nn::Tensor& t, std::size_t b) {
  const std::size_t width = t.shape[1];
  const auto n = static_cast<Eigen::Index>(width / 3);
  Pose3D p(n, 3);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int a = 0; a < 3; ++a) p(j, a) = t.values[b * width + static_cast<std::size_t>(3 * j + a)];
  return p;
}

}  // namespace

std::string to_string(Labeler l) { return l == Labeler::Clustered ? "clustered" : "boxedman"; }

Labeler labeler_from_string(const std::string& s) {
  if (s == "clustered") return Labeler::Clustered;
  if (s == "boxedman" || s == "boxed") return Labeler::BoxedMan;
  throw ConfigError("unknown labeler '" + s + "' (expected clustered|boxedman)");
}

OcclusionVector label_frame(const Pose3D& camera_pose, const Pose2D& image_pose,
                            const SkeletonTopology& topo, const LabelerConfig& cfg) {
  if (cfg.kind == Labeler::Clustered) return cluster_occlusions(camera_pose, cfg.cluster);
  return boxed_man_occlusions(image_pose, topo, cfg.boxed);
}

Vec2 normalize_keypoint(const Vec2& px, const CameraModel& cam) {
  const double h = cam.half_extent();
  return {(px.x() - cam.cx) / h, (px.y() - cam.cy) / h};
}

std::vector<Example> make_windows(const MotionSequence& seq, const CameraModel& cam,
                                  const LabelerConfig& labeler, int rf, int stride) {
  if (rf < 1 || stride < 1) throw ConfigError("window length and stride must be >= 1");
  if (seq.size() < static_cast<std::size_t>(rf)) throw SequenceTooShort(seq.size(), static_cast<std::size_t>(rf));
  const SkeletonTopology topo = load_topology(seq.topology);
  const std::size_t n = static_cast<std::size_t>(topo.joint_count);
  const std::size_t t_count = seq.size();

  std::vector<std::vector<double>> norm2d(t_count), labels(t_count), centered(t_count);
  for (std::size_t f = 0; f < t_count; ++f) {
    if (seq.frames[f].rows() != topo.joint_count)
      throw TopologyMismatch("frame " + std::to_string(f) + " joint count");
    const Pose3D cam3d = world_to_camera(seq.frames[f], cam);
    const Pose2D px = project(cam3d, cam, Frame::Camera);
    const OcclusionVector occ = label_frame(cam3d, px, topo, labeler);
    const Pose3D rc = root_center(cam3d, topo);
    norm2d[f].resize(2 * n);
    labels[f].resize(n);
    centered[f].resize(3 * n);
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 u = normalize_keypoint(px.row(static_cast<Eigen::Index>(j)).transpose(), cam);
      norm2d[f][2 * j] = u.x();
      norm2d[f][2 * j + 1] = u.y();
      labels[f][j] = occ[j];
      for (int a = 0; a < 3; ++a) centered[f][3 * j + static_cast<std::size_t>(a)] = rc(static_cast<Eigen::Index>(j), a);
    }
  }

  const std::size_t w = static_cast<std::size_t>(rf);
  std::vector<Example> out;
  for (std::size_t start = 0; start + w <= t_count; start += static_cast<std::size_t>(stride)) {
    Example ex;
    ex.keypoints.resize(2 * n * w);
    ex.occ_window.resize(n * w);
    for (std::size_t i = 0; i < w; ++i) {
      for (std::size_t c = 0; c < 2 * n; ++c) ex.keypoints[c * w + i] = norm2d[start + i][c];
      for (std::size_t j = 0; j < n; ++j) ex.occ_window[j * w + i] = labels[start + i][j];
    }
    const std::size_t center = start + w / 2;
    ex.target3d = centered[center];
    ex.subject = seq.subject;
    ex.action = seq.action;
    ex.center_frame = center < seq.frame_index.size() ? seq.frame_index[center] : static_cast<std::int64_t>(center);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> make_dataset(const std::vector<MotionSequence>& seqs, const LabelerConfig& labeler,
                                  int rf, int stride) {
  std::vector<Example> out;
  for (const auto& s : seqs) {
    if (s.size() < static_cast<std::size_t>(rf)) continue;  // too short for a single window
    auto w = make_windows(s, s.camera, labeler, rf, stride);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0, 1]");
  loss_weights.validate();
  tcn.validate();
  labeler.boxed.validate();
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_mpjpe_mm,val_occ_loss,lr\n";
  for (const auto& r : records)
    os << r.epoch << "," << r.train_loss << "," << r.val_mpjpe_mm << "," << r.val_occ_loss << "," << r.lr << "\n";
  return os.str();
}

Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& indices,
                 const nn::TcnConfig& cfg) {
  const std::size_t nb = indices.size();
  const std::size_t n = static_cast<std::size_t>(cfg.joints);
  const std::size_t rf = static_cast<std::size_t>(cfg.receptive_field());
  const std::size_t t_out = static_cast<std::size_t>(cfg.occ_frames());
  Batch b{nn::Tensor({nb, 2 * n, rf}), nn::Tensor({nb, n, rf}), nn::Tensor({nb, 3 * n}),
          nn::Tensor({nb, n, t_out})};
  for (std::size_t k = 0; k < nb; ++k) {
    const Example& ex = examples[indices[k]];
    if (ex.keypoints.size() != 2 * n * rf || ex.occ_window.size() != n * rf || ex.target3d.size() != 3 * n)
      throw ShapeMismatch("example does not match " + std::to_string(n) + " joints x " +
                          std::to_string(rf) + " frames");
    std::copy(ex.keypoints.begin(), ex.keypoints.end(), b.keypoints.values.begin() + static_cast<std::ptrdiff_t>(k * 2 * n * rf));
    std::copy(ex.occ_window.begin(), ex.occ_window.end(), b.occ_in.values.begin() + static_cast<std::ptrdiff_t>(k * n * rf));
    std::copy(ex.target3d.begin(), ex.target3d.end(), b.target3d.values.begin() + static_cast<std::ptrdiff_t>(k * 3 * n));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < t_out; ++i) {
        const std::size_t src = t_out == 1 ? rf / 2 : i;
        b.occ_target.at(k, j, i) = ex.occ_window[j * rf + src];
      }
  }
  return b;
}

EvalResult evaluate(const std::vector<Example>& dataset, const nn::ParameterStore& params,
                    const nn::TcnConfig& cfg, const SkeletonTopology& topo, int batch_size) {
  if (dataset.empty()) throw EmptyEvaluation();
  EvalResult res;
  double occ_sum = 0.0;
  std::size_t occ_count = 0;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < dataset.size(); start += bs) {
    std::vector<std::size_t> idx;
    for (std::size_t k = start; k < std::min(dataset.size(), start + bs); ++k) idx.push_back(k);
    const Batch b = make_batch(dataset, idx, cfg);
    const nn::TcnOutput out = nn::tcn_forward(b.keypoints, b.occ_in, cfg, params);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Example& ex = dataset[idx[k]];
      const double err = frame_position_error(pose_from_row(out.pose3d, k), target_from_example(ex), topo);
      res.frames.push_back({ex.subject, ex.action, 1000.0 * err});
    }
    for (std::size_t i = 0; i < out.occ_prob.size(); ++i) occ_sum += std::abs(out.occ_prob[i] - b.occ_target[i]);
    occ_count += out.occ_prob.size();
  }
  res.report = build_report(res.frames);
  res.occ_loss = occ_sum / static_cast<double>(occ_count);
  return res;
}

TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& cfg, const SkeletonTopology& topo) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw EmptyEvaluation();
  if (topo.joint_count != cfg.tcn.joints)
    throw TopologyMismatch("network expects " + std::to_string(cfg.tcn.joints) + " joints, topology '" +
                           topo.name + "' has " + std::to_string(topo.joint_count));

  std::mt19937_64 rng(cfg.seed);
  TrainResult res;
  res.params = nn::init_tcn_params(cfg.tcn, rng());
  std::mt19937_64 dropout_rng(rng());
  nn::SgdState sgd;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  double best = INFINITY;
  double lr = cfg.lr;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, pos_sum = 0.0;
    std::size_t seen = 0;
    int step = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      // Batch statistics of a single window are degenerate; skip a trailing
      // singleton unless it is the whole set.
      if (end - start < 2 && order.size() > 1) continue;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch b = make_batch(train_set, idx, cfg.tcn);
      nn::TcnTrace trace;
      // A zero learning rate freezes the model, running statistics included.
      nn::ForwardOptions opts{nn::Mode::Train, &dropout_rng, &trace, lr > 0.0 ? &res.params : nullptr};
      const nn::TcnOutput out = nn::tcn_forward(b.keypoints, b.occ_in, cfg.tcn, res.params, opts);
      const LossValue loss = combined_loss(out.pose3d, b.target3d, out.occ_prob, b.occ_target,
                                           cfg.loss_weights, topo.root_index);
      res.params.zero_grad();
      nn::tcn_backward(trace, loss.d_pred3d, loss.d_occ_pred, cfg.tcn, res.params);
      try {
        nn::sgd_step(res.params, sgd, lr, cfg.momentum);
      } catch (const NonFiniteGradient& e) {
        throw NonFiniteGradient(e.param_name + " (epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(step) + ")");
      }
      loss_sum += loss.total * static_cast<double>(idx.size());
      pos_sum += loss.position_m * static_cast<double>(idx.size());
      seen += idx.size();
      ++step;
    }

    const EvalResult val = evaluate(val_set, res.params, cfg.tcn, topo);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.train_mpjpe_mm = seen ? 1000.0 * pos_sum / static_cast<double>(seen) : 0.0;
    rec.val_mpjpe_mm = val.report.overall_mm;
    rec.val_occ_loss = val.occ_loss;
    rec.lr = lr;
    res.log.records.push_back(rec);

    if (rec.val_mpjpe_mm < best) {
      best = rec.val_mpjpe_mm;
      res.best_params = res.params;
      res.best_epoch = epoch;
      if (!cfg.checkpoint_path.empty()) nn::save_checkpoint(cfg.checkpoint_path, res.params);
    }
    lr *= cfg.lr_decay;
  }
  return res;
}

}  // namespace occpose
