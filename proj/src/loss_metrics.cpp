#include "occpose/loss_metrics.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "occpose/errors.hpp"

namespace occpose {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (lambda1 == 0.0 && lambda2 == 0.0) throw ConfigError("loss weights cannot both be zero");
}

double frame_position_error(const Pose3D& pred, const Pose3D& gt, const SkeletonTopology& topo) {
  if (pred.rows() != gt.rows() || pred.rows() != topo.joint_count)
    throw ShapeMismatch("pose joint counts " + std::to_string(pred.rows()) + " / " +
                        std::to_string(gt.rows()) + " vs topology " + std::to_string(topo.joint_count));
  const Pose3D diff = root_center(pred, topo) - root_center(gt, topo);
  return diff.rowwise().norm().mean();
}

double mpjpe(std::span<const Pose3D> pred, std::span<const Pose3D> gt, const SkeletonTopology& topo) {
  if (pred.size() != gt.size())
    throw ShapeMismatch("batch sizes " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) sum += frame_position_error(pred[k], gt[k], topo);
  return 1000.0 * sum / static_cast<double>(pred.size());
}

double occlusion_loss(const nn::Tensor& occ_pred, const nn::Tensor& occ_gt) {
  if (occ_pred.shape != occ_gt.shape)
    throw ShapeMismatch("occlusion prediction " + occ_pred.shape_string() + " vs target " +
                        occ_gt.shape_string());
  if (occ_pred.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < occ_pred.size(); ++i) sum += std::abs(occ_gt[i] - occ_pred[i]);
  return sum / static_cast<double>(occ_pred.size());
}

LossValue combined_loss(const nn::Tensor& pred3d, const nn::Tensor& gt3d, const nn::Tensor& occ_pred,
                        const nn::Tensor& occ_gt, const LossWeights& w, int root_index) {
  if (pred3d.shape != gt3d.shape || pred3d.rank() != 2 || pred3d.shape[1] % 3 != 0)
    throw ShapeMismatch("3D prediction " + pred3d.shape_string() + " vs target " + gt3d.shape_string());
  if (occ_pred.shape != occ_gt.shape)
    throw ShapeMismatch("occlusion prediction " + occ_pred.shape_string() + " vs target " +
                        occ_gt.shape_string());
  const std::size_t m = pred3d.shape[0];
  const std::size_t n = pred3d.shape[1] / 3;
  if (root_index < 0 || static_cast<std::size_t>(root_index) >= n)
    throw ShapeMismatch("root index out of range");
  const std::size_t r = static_cast<std::size_t>(root_index);

  LossValue out;
  out.d_pred3d = nn::Tensor(pred3d.shape);
  out.d_occ_pred = nn::Tensor(occ_pred.shape);
  const double inv_mn = 1.0 / static_cast<double>(m * n);

  double pos = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double* p = &pred3d.values[k * 3 * n];
    const double* g = &gt3d.values[k * 3 * n];
    double* dp = &out.d_pred3d.values[k * 3 * n];
    for (std::size_t i = 0; i < n; ++i) {
      double e[3];
      for (int a = 0; a < 3; ++a) e[a] = (p[3 * i + a] - p[3 * r + a]) - (g[3 * i + a] - g[3 * r + a]);
      const double norm = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
      pos += norm;
      if (norm == 0.0) continue;
      for (int a = 0; a < 3; ++a) {
        const double gcoef = w.lambda1 * inv_mn * e[a] / norm;
        dp[3 * i + a] += gcoef;
        dp[3 * r + a] -= gcoef;
      }
    }
  }
  out.position_m = pos * inv_mn;

  out.occlusion = occlusion_loss(occ_pred, occ_gt);
  if (occ_pred.size() > 0) {
    const double inv = 1.0 / static_cast<double>(occ_pred.size());
    for (std::size_t i = 0; i < occ_pred.size(); ++i) {
      const double d = occ_pred[i] - occ_gt[i];
      out.d_occ_pred[i] = w.lambda2 * inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
  }
  out.total = w.lambda1 * out.position_m + w.lambda2 * out.occlusion;
  return out;
}

EvalReport build_report(std::span<const FrameError> frames) {
  if (frames.empty()) throw EmptyEvaluation();
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  double total = 0.0;
  for (const auto& f : frames) {
    auto& g = groups[{f.subject, f.action}];
    g.sum += f.error_mm;
    ++g.n;
    total += f.error_mm;
  }
  EvalReport rep;
  for (const auto& [key, acc] : groups)
    rep.rows.push_back({key.first, key.second, acc.n, acc.sum / static_cast<double>(acc.n)});
  rep.total_frames = frames.size();
  rep.overall_mm = total / static_cast<double>(frames.size());
  return rep;
}

std::string EvalReport::to_text() const {
  std::size_t sw = 7, aw = 6;
  for (const auto& r : rows) {
    sw = std::max(sw, r.subject.size());
    aw = std::max(aw, r.action.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(sw)) << "subject" << "  " << std::setw(static_cast<int>(aw))
     << "action" << "  " << std::right << std::setw(8) << "frames" << "  " << std::setw(10) << "MPJPE(mm)"
     << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows)
    os << std::left << std::setw(static_cast<int>(sw)) << r.subject << "  " << std::setw(static_cast<int>(aw))
       << r.action << "  " << std::right << std::setw(8) << r.frames << "  " << std::setw(10) << r.mpjpe_mm
       << "\n";
  os << std::left << std::setw(static_cast<int>(sw + aw + 2)) << "Average" << "  " << std::right
     << std::setw(8) << total_frames << "  " << std::setw(10) << overall_mm << "\n";
  return os.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "subject,action,frames,mpjpe_mm\n";
  os << std::setprecision(10);
  for (const auto& r : rows) os << r.subject << "," << r.action << "," << r.frames << "," << r.mpjpe_mm << "\n";
  return os.str();
}

std::string render_action_table(const std::string& action,
                                const std::vector<std::pair<std::string, EvalReport>>& runs) {
  std::set<std::string> subjects;
  for (const auto& [label, rep] : runs)
    for (const auto& r : rep.rows)
      if (r.action == action) subjects.insert(r.subject);
  std::size_t lw = action.size();
  for (const auto& run : runs) lw = std::max(lw, run.first.size());

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(lw)) << action;
  for (const auto& s : subjects) os << " | " << std::right << std::setw(10) << s;
  os << " | " << std::setw(10) << "Average" << "\n" << std::fixed << std::setprecision(1);
  for (const auto& [label, rep] : runs) {
    os << std::left << std::setw(static_cast<int>(lw)) << label;
    double sum = 0.0;
    int count = 0;
    for (const auto& s : subjects) {
      const EvalReport::Row* row = nullptr;
      for (const auto& r : rep.rows)
        if (r.subject == s && r.action == action) row = &r;
      os << " | " << std::right << std::setw(10);
      if (row) {
        os << row->mpjpe_mm;
        sum += row->mpjpe_mm;
        ++count;
      } else {
        os << "-";
      }
    }
    os << " | " << std::setw(10);
    if (count) os << sum / count;
    else os << "-";
    os << "\n";
  }
  return os.str();
}

std::string render_average_table(const std::vector<std::pair<std::string, EvalReport>>& runs) {
  std::size_t lw = 6;
  for (const auto& run : runs) lw = std::max(lw, run.first.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(lw)) << "Method" << " | " << std::right << std::setw(10)
     << "Average" << "\n"
     << std::fixed << std::setprecision(2);
  for (const auto& [label, rep] : runs)
    os << std::left << std::setw(static_cast<int>(lw)) << label << " | " << std::right << std::setw(10)
       << rep.overall_mm << "\n";
  return os.str();
}

}  // namespace occpose
