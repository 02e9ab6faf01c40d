#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>

#include "dcl/sim/episode.hpp"

namespace dcl::sim {

enum class Component { position, orientation };

inline const char* to_string(Component c) { return c == Component::position ? "position" : "orientation"; }

/// sqrt(mean(e^2)).
inline double rmse(std::span<const double> errors) {
  if (errors.empty()) throw Error("rmse: no errors");
  double sum = 0.0;
  for (double e : errors) sum += e * e;
  return std::sqrt(sum / static_cast<double>(errors.size()));
}

/// RMSE of heading errors, each wrapped to (-pi, pi] before squaring.
inline double rmse_heading(std::span<const double> errors) {
  std::vector<double> wrapped;
  wrapped.reserve(errors.size());
  for (double e : errors) wrapped.push_back(wrap_angle(e).radians());
  return rmse(wrapped);
}

/// Dimension-normalized NEES of one pose error against an original-coordinate covariance.
inline double nees(const Vec3& err, const Mat3& P, Component c) {
  if (c == Component::orientation) {
    const double var = P(2, 2);
    if (!(var > 0.0) || !std::isfinite(var)) throw Error("nees: orientation variance is not positive");
    const double th = wrap_angle(err.z()).radians();
    return th * th / var;
  }
  const Mat2 pp = P.topLeftCorner<2, 2>();
  Eigen::LLT<Mat2> llt(pp);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
    throw Error("nees: position block is singular");
  }
  const Vec2 e = err.head<2>();
  return e.dot(llt.solve(e)) / 2.0;
}

/// Per-step sums over robots for one estimator in one run; index 0 is step 1.
struct StepSums {
  std::vector<double> pos_sq;
  std::vector<double> orient_sq;
  std::vector<double> nees_pos;
  std::vector<double> nees_orient;
  std::vector<long> count;
  bool excluded = false;
  std::string reason;

  void resize(std::size_t steps) {
    pos_sq.assign(steps, 0.0);
    orient_sq.assign(steps, 0.0);
    nees_pos.assign(steps, 0.0);
    nees_orient.assign(steps, 0.0);
    count.assign(steps, 0);
  }
};

/// Errors of estimator `e`'s posteriors against the truth, steps 1..K.
inline StepSums accumulate(const RunLog& log, std::size_t e) {
  const auto& el = log.estimators.at(e);
  StepSums s;
  const long steps = log.step_count() - 1;
  s.resize(static_cast<std::size_t>(std::max(0L, steps)));
  if (el.diverged) {
    s.excluded = true;
    s.reason = "diverged at step " + std::to_string(el.divergence_step) + ": " + el.diagnostic;
    return s;
  }
  try {
    for (long k = 1; k <= steps; ++k) {
      const auto idx = static_cast<std::size_t>(k - 1);
      for (int i = 0; i < log.robot_count; ++i) {
        const auto& b = el.posteriors[k][i];
        const Vec3 err = pose_error(log.truth[k][i], b.x);
        s.pos_sq[idx] += err.head<2>().squaredNorm();
        s.orient_sq[idx] += err.z() * err.z();
        s.nees_pos[idx] += nees(err, b.P, Component::position);
        s.nees_orient[idx] += nees(err, b.P, Component::orientation);
        ++s.count[idx];
      }
    }
  } catch (const Error& ex) {
    s.excluded = true;
    s.reason = ex.what();
  }
  return s;
}

struct EstimatorMetrics {
  EstimatorKind kind = EstimatorKind::tsb;
  std::string config_id;
  double rmse_position = 0.0;
  double rmse_orientation = 0.0;
  double nees_position = 0.0;
  double nees_orientation = 0.0;
  /// Per-step values over robots and runs; index 0 is step 1.
  std::vector<double> series_rmse_position;
  std::vector<double> series_rmse_orientation;
  std::vector<double> series_nees_position;
  std::vector<double> series_nees_orientation;
  int runs_used = 0;
  int runs_excluded = 0;
  std::vector<std::string> exclusion_reasons;
};

struct MetricsReport {
  double dt = 0.0;
  std::vector<EstimatorMetrics> rows;

  const EstimatorMetrics& at(EstimatorKind k, const std::string& config_id = {}) const {
    for (const auto& r : rows) {
      if (r.kind == k && (config_id.empty() || r.config_id == config_id)) return r;
    }
    throw Error("metrics report: no row for " + filters::to_string(k) + (config_id.empty() ? "" : " / " + config_id));
  }
};

/// Reduces per-run sums in run order, so the result is independent of how runs were scheduled.
inline EstimatorMetrics summarize(EstimatorKind kind, std::span<const StepSums> runs, std::string config_id = {}) {
  EstimatorMetrics m;
  m.kind = kind;
  m.config_id = std::move(config_id);
  StepSums total;
  for (const auto& r : runs) {
    if (r.excluded) {
      ++m.runs_excluded;
      m.exclusion_reasons.push_back(r.reason);
      continue;
    }
    if (total.count.empty()) total.resize(r.count.size());
    if (r.count.size() != total.count.size()) throw Error("summarize: runs have different lengths");
    for (std::size_t k = 0; k < r.count.size(); ++k) {
      total.pos_sq[k] += r.pos_sq[k];
      total.orient_sq[k] += r.orient_sq[k];
      total.nees_pos[k] += r.nees_pos[k];
      total.nees_orient[k] += r.nees_orient[k];
      total.count[k] += r.count[k];
    }
    ++m.runs_used;
  }
  double pos = 0.0, orient = 0.0, np = 0.0, no = 0.0;
  long n = 0;
  for (std::size_t k = 0; k < total.count.size(); ++k) {
    const auto c = static_cast<double>(total.count[k]);
    if (total.count[k] == 0) continue;
    m.series_rmse_position.push_back(std::sqrt(total.pos_sq[k] / c));
    m.series_rmse_orientation.push_back(std::sqrt(total.orient_sq[k] / c));
    m.series_nees_position.push_back(total.nees_pos[k] / c);
    m.series_nees_orientation.push_back(total.nees_orient[k] / c);
    pos += total.pos_sq[k];
    orient += total.orient_sq[k];
    np += total.nees_pos[k];
    no += total.nees_orient[k];
    n += total.count[k];
  }
  if (n > 0) {
    const auto c = static_cast<double>(n);
    m.rmse_position = std::sqrt(pos / c);
    m.rmse_orientation = std::sqrt(orient / c);
    m.nees_position = np / c;
    m.nees_orientation = no / c;
  }
  return m;
}

/// Metrics of a single episode.
inline MetricsReport metrics_from_log(const RunLog& log, const std::string& config_id = {}) {
  MetricsReport r;
  r.dt = log.dt;
  for (std::size_t e = 0; e < log.estimators.size(); ++e) {
    const StepSums s = accumulate(log, e);
    r.rows.push_back(summarize(log.estimators[e].kind, std::span<const StepSums>(&s, 1), config_id));
  }
  return r;
}

/// Runs episodes with seeds seed + 0 .. seed + n_runs - 1 on up to `threads`
/// workers (0: hardware concurrency) and aggregates per estimator.
inline MetricsReport monte_carlo(const ScenarioConfig& cfg, int n_runs, unsigned threads = 0,
                                 const std::string& config_id = {}) {
  if (n_runs < 1) throw Error("monte_carlo: n_runs must be at least 1");
  validate(cfg);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_runs));

  std::vector<std::vector<StepSums>> results(static_cast<std::size_t>(n_runs));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < n_runs; r = next++) {
      try {
        ScenarioConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(r);
        run_cfg.record_jacobians = false;
        const RunLog log = run_episode(run_cfg, EpisodeOptions{false, {}});
        for (std::size_t e = 0; e < log.estimators.size(); ++e) results[r].push_back(accumulate(log, e));
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const auto& ep : errors) {
    if (ep) std::rethrow_exception(ep);
  }

  MetricsReport report;
  report.dt = cfg.dt;
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    std::vector<StepSums> per_run;
    per_run.reserve(results.size());
    for (auto& r : results) per_run.push_back(std::move(r[e]));
    report.rows.push_back(summarize(cfg.estimators[e], per_run, config_id));
  }
  return report;
}

}  // namespace dcl::sim
