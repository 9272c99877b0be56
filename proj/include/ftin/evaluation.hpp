#pragma once

// Trajectory reconstruction from window velocities and the planar error
// metrics used to score it.

#include "ftin/imu_data.hpp"
#include "ftin/training.hpp"

#include <fstream>
#include <functional>
#include <numeric>

namespace ftin {

struct OverlapError : ValidationError {
  using ValidationError::ValidationError;
};

struct DegenerateInputError : ValidationError {
  using ValidationError::ValidationError;
};

// Horizontal positions with timestamps.
struct PlanarTrajectory {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> p;

  Index size() const { return static_cast<Index>(t.size()); }
};

inline PlanarTrajectory ground_truth_of(const ImuSequence& seq) {
  if (!seq.has_pos()) throw PreconditionError("ground truth requires positions");
  PlanarTrajectory g;
  for (const auto& s : seq.samples) {
    g.t.push_back(s.t);
    g.p.push_back(s.pos->head<2>());
  }
  return g;
}

// Maps B windows to B x 2 velocities.
using VelocityPredictor = std::function<Mat<double>(const std::vector<LabeledWindow>&)>;

inline VelocityPredictor oracle_predictor() {
  return [](const std::vector<LabeledWindow>& w) { return labels_of(w); };
}

inline VelocityPredictor zero_predictor() {
  return [](const std::vector<LabeledWindow>& w) { return Mat<double>(Mat<double>::Zero(static_cast<Index>(w.size()), 2)); };
}

template <class T>
VelocityPredictor model_predictor(const FtinParams<T>& params, const FtinConfig& cfg, int threads = 1) {
  return [&params, cfg, threads](const std::vector<LabeledWindow>& w) { return predict(params, cfg, w, threads); };
}

// Window k covers samples [k*s, k*s + L) and its mean velocity advances the
// position over the last s samples of the window:
//
//   p(k*s + L) = p(k*s + L - s) + v_k * s / rate
//
// starting from the ground-truth position at sample L - s. Output timestamps
// are window ends. With s = L the windows tile the sequence exactly.
inline PlanarTrajectory reconstruct_trajectory(const VelocityPredictor& predictor, const ImuSequence& seq, Index window,
                                               Index stride) {
  if (stride < 1 || stride > window) throw ContractError("reconstruct_trajectory: stride must be in [1, window]");
  if (seq.size() <= window) {
    throw SizeError("reconstruct_trajectory: sequence of " + std::to_string(seq.size()) + " samples is shorter than window " +
                    std::to_string(window) + " plus one");
  }
  const auto windows = make_windows(seq, window, stride);
  const Mat<double> v = predictor(windows);
  require(v.rows() == static_cast<Index>(windows.size()) && v.cols() == 2, "reconstruct_trajectory: predictor returned wrong shape");
  const double dt = static_cast<double>(stride) / seq.rate;
  PlanarTrajectory out;
  const Index first = window - stride;
  out.t.push_back(seq.samples[first].t);
  out.p.push_back(seq.samples[first].pos->head<2>());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    out.p.push_back(out.p.back() + v.row(static_cast<Index>(k)).transpose() * dt);
    out.t.push_back(seq.samples[windows[k].offset + window].t);
  }
  return out;
}

namespace detail {

// Time-sorted copy.
inline PlanarTrajectory sorted(const PlanarTrajectory& tr) {
  require(tr.t.size() == tr.p.size(), "trajectory: timestamp and position counts differ");
  std::vector<std::size_t> idx(tr.t.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return tr.t[a] < tr.t[b]; });
  PlanarTrajectory s;
  for (auto i : idx) {
    s.t.push_back(tr.t[i]);
    s.p.push_back(tr.p[i]);
  }
  return s;
}

// Linear interpolation on a time-sorted trajectory; t must lie in range.
inline Eigen::Vector2d interpolate(const PlanarTrajectory& tr, double t) {
  const auto it = std::lower_bound(tr.t.begin(), tr.t.end(), t);
  const auto j = static_cast<std::size_t>(it - tr.t.begin());
  if (j < tr.t.size() && tr.t[j] == t) return tr.p[j];
  require(j > 0 && j < tr.t.size(), "interpolate: time outside trajectory range");
  const double a = (t - tr.t[j - 1]) / (tr.t[j] - tr.t[j - 1]);
  return (1.0 - a) * tr.p[j - 1] + a * tr.p[j];
}

// Prediction samples inside the ground-truth time range, with the matching
// interpolated ground truth.
struct Paired {
  PlanarTrajectory pred, gt;
};

inline Paired pair_on_prediction_times(const PlanarTrajectory& pred_in, const PlanarTrajectory& gt_in) {
  const PlanarTrajectory pred = sorted(pred_in);
  const PlanarTrajectory gt = sorted(gt_in);
  if (pred.t.empty() || gt.t.empty()) throw OverlapError("metric: empty trajectory");
  Paired out;
  for (Index i = 0; i < pred.size(); ++i) {
    const double t = pred.t[i];
    if (t < gt.t.front() || t > gt.t.back()) continue;
    out.pred.t.push_back(t);
    out.pred.p.push_back(pred.p[i]);
    out.gt.t.push_back(t);
    out.gt.p.push_back(interpolate(gt, t));
  }
  if (out.pred.t.empty()) throw OverlapError("metric: predicted and ground-truth time ranges do not overlap");
  return out;
}

}  // namespace detail

// Root mean square position error at the prediction timestamps.
inline double ate(const PlanarTrajectory& pred, const PlanarTrajectory& gt) {
  const auto pr = detail::pair_on_prediction_times(pred, gt);
  double sum = 0.0;
  for (Index i = 0; i < pr.pred.size(); ++i) sum += (pr.pred.p[i] - pr.gt.p[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(pr.pred.size()));
}

// Root mean square displacement error over `interval` seconds, for every start
// time t_i with t_i + interval inside the overlap. When the overlap is shorter
// than the interval, the whole span is used once and the error is scaled by
// interval / span.
inline double rte(const PlanarTrajectory& pred, const PlanarTrajectory& gt, double interval = 60.0) {
  if (!(interval > 0.0)) throw ContractError("rte: interval must be > 0");
  const auto pr = detail::pair_on_prediction_times(pred, gt);
  const PlanarTrajectory gs = detail::sorted(gt);
  const double t_end = pr.pred.t.back();
  const double span = t_end - pr.pred.t.front();
  if (!(span > 0.0)) throw OverlapError("rte: overlap has zero duration");
  if (span < interval) {
    const Eigen::Vector2d dp = pr.pred.p.back() - pr.pred.p.front();
    const Eigen::Vector2d dg = pr.gt.p.back() - pr.gt.p.front();
    return (dp - dg).norm() * interval / span;
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (Index i = 0; i < pr.pred.size(); ++i) {
    const double t1 = pr.pred.t[i] + interval;
    if (t1 > t_end) break;
    const Eigen::Vector2d dp = detail::interpolate(pr.pred, t1) - pr.pred.p[i];
    const Eigen::Vector2d dg = detail::interpolate(gs, t1) - pr.gt.p[i];
    sum += (dp - dg).squaredNorm();
    ++n;
  }
  return std::sqrt(sum / static_cast<double>(n));
}

// Ground-truth path length between two times, with interpolated endpoints.
inline double arc_length(const PlanarTrajectory& gt_in, double t0, double t1) {
  const PlanarTrajectory gt = detail::sorted(gt_in);
  Eigen::Vector2d prev = detail::interpolate(gt, t0);
  double len = 0.0;
  for (Index i = 0; i < gt.size(); ++i) {
    if (gt.t[i] <= t0 || gt.t[i] >= t1) continue;
    len += (gt.p[i] - prev).norm();
    prev = gt.p[i];
  }
  return len + (detail::interpolate(gt, t1) - prev).norm();
}

// Endpoint drift over ground-truth distance travelled in the overlap.
inline double pde(const PlanarTrajectory& pred, const PlanarTrajectory& gt) {
  const auto pr = detail::pair_on_prediction_times(pred, gt);
  const double len = arc_length(gt, pr.pred.t.front(), pr.pred.t.back());
  if (!(len > 0.0)) throw DegenerateInputError("pde: ground-truth path has zero length");
  return (pr.pred.p.back() - pr.gt.p.back()).norm() / len;
}

struct CdfPoint {
  double threshold = 0.0;
  double fraction = 0.0;
};

// Empirical CDF: one point per distinct value, fraction = count(<= value) / n.
inline std::vector<CdfPoint> cdf(std::vector<double> errors) {
  if (errors.empty()) throw SizeError("cdf: empty error list");
  std::sort(errors.begin(), errors.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
    out.push_back({errors[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

struct SequenceMetrics {
  std::string id;
  double ate = 0.0;
  double rte = 0.0;
  double pde = 0.0;
  Index points = 0;
};

struct MetricsReport {
  double ate = 0.0;  // mean over sequences
  double rte = 0.0;
  double pde = 0.0;
  double rte_interval_s = 60.0;
  std::vector<SequenceMetrics> sequences;
  std::vector<CdfPoint> cdf_ate;
  std::vector<CdfPoint> cdf_rte;
};

struct EvaluatedSequence {
  SequenceMetrics metrics;
  PlanarTrajectory pred;
  PlanarTrajectory gt;  // ground truth at the prediction timestamps
};

inline EvaluatedSequence evaluate_sequence(const VelocityPredictor& predictor, const NamedSequence& s, Index window,
                                           Index stride, double rte_interval = 60.0) {
  EvaluatedSequence e;
  const PlanarTrajectory gt = ground_truth_of(s.seq);
  e.pred = reconstruct_trajectory(predictor, s.seq, window, stride);
  e.gt = detail::pair_on_prediction_times(e.pred, gt).gt;
  e.metrics.id = s.name;
  e.metrics.ate = ate(e.pred, gt);
  e.metrics.rte = rte(e.pred, gt, rte_interval);
  e.metrics.pde = pde(e.pred, gt);
  e.metrics.points = e.pred.size();
  return e;
}

inline MetricsReport summarize(std::vector<SequenceMetrics> rows, double rte_interval = 60.0) {
  if (rows.empty()) throw SizeError("metrics: no sequences evaluated");
  MetricsReport r;
  r.rte_interval_s = rte_interval;
  std::vector<double> a, b;
  for (const auto& s : rows) {
    r.ate += s.ate;
    r.rte += s.rte;
    r.pde += s.pde;
    a.push_back(s.ate);
    b.push_back(s.rte);
  }
  const double n = static_cast<double>(rows.size());
  r.ate /= n;
  r.rte /= n;
  r.pde /= n;
  r.cdf_ate = cdf(a);
  r.cdf_rte = cdf(b);
  r.sequences = std::move(rows);
  return r;
}

// Ground-truth-free reference: the zero-velocity predictor's mean ATE.
inline double zero_velocity_ate(const std::vector<NamedSequence>& seqs, Index window, Index stride) {
  std::vector<SequenceMetrics> rows;
  for (const auto& s : seqs) rows.push_back(evaluate_sequence(zero_predictor(), s, window, stride).metrics);
  return summarize(rows).ate;
}

inline nlohmann::json to_json(const std::vector<CdfPoint>& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : c) arr.push_back({{"threshold_m", p.threshold}, {"fraction", p.fraction}});
  return arr;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.sequences) {
    rows.push_back({{"id", s.id}, {"ate_m", s.ate}, {"rte_m", s.rte}, {"pde", s.pde}, {"points", s.points}});
  }
  return {{"ate_m", r.ate},       {"rte_m", r.rte},         {"pde", r.pde},
          {"rte_interval_s", r.rte_interval_s}, {"sequences", rows}, {"cdf_ate", to_json(r.cdf_ate)},
          {"cdf_rte", to_json(r.cdf_rte)}};
}

inline void write_trajectory_csv(const fs::path& path, const EvaluatedSequence& e) {
  std::string out = "t,px_gt,py_gt,px_pred,py_pred\n";
  for (Index i = 0; i < e.pred.size(); ++i) {
    detail::append_number(out, e.pred.t[i]);
    for (double v : {e.gt.p[i].x(), e.gt.p[i].y(), e.pred.p[i].x(), e.pred.p[i].y()}) {
      out += ',';
      detail::append_number(out, v);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << out;
}

}  // namespace ftin
