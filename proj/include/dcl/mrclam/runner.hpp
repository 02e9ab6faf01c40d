#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "dcl/mrclam/events.hpp"
#include "dcl/sim/metrics.hpp"

namespace dcl::mrclam {

using filters::EstimatorKind;

/// Filter-side noise for one dataset subset. Odometry sigmas are per grid step.
struct NoiseConfig {
  Vec3 odom_sigma{0.01, 1e-4, 0.01};
  double range_sigma = 0.1;
  double bearing_sigma = 0.05;
  double landmark_range_sigma = 0.1;
  double landmark_bearing_sigma = 0.05;
  /// Initial covariance diag(init_sigma^2); estimates start at the interpolated ground truth.
  Vec3 init_sigma{0.01, 0.01, 0.01};
};

inline void validate(const NoiseConfig& n) {
  if (!(n.odom_sigma.array() > 0.0).all() || !n.odom_sigma.allFinite()) {
    throw Error("noise config: odom_sigma entries must be positive");
  }
  for (double s : {n.range_sigma, n.bearing_sigma, n.landmark_range_sigma, n.landmark_bearing_sigma}) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error("noise config: measurement sigmas must be positive");
  }
  if (!(n.init_sigma.array() >= 0.0).all() || !n.init_sigma.allFinite()) {
    throw Error("noise config: init_sigma must be non-negative");
  }
}

struct DatasetRunOptions {
  double comm_success = 1.0;
  std::uint64_t seed = 1;  // only used for message losses when comm_success < 1
  filters::DropoutPolicy dropout = filters::DropoutPolicy::schmidt;
  filters::UpdateScope scope = filters::UpdateScope::all;
  bool record_jacobians = false;
  bool keep_events = false;
};

struct DatasetResult {
  sim::RunLog log;
  sim::MetricsReport metrics;
  long robot_measurements = 0;
  long landmark_measurements = 0;
  long rejected_measurements = 0;  // non-positive range
};

/// Runs the given estimators over the stream; errors are taken against the
/// interpolated ground truth at every grid step.
inline DatasetResult run_dataset(const EventStream& es, const std::vector<EstimatorKind>& kinds,
                                 const NoiseConfig& noise, const DatasetRunOptions& opt = {},
                                 const std::string& config_id = {}) {
  validate(noise);
  if (kinds.empty()) throw Error("run_dataset: no estimators");
  if (!(opt.comm_success > 0.0 && opt.comm_success <= 1.0)) throw Error("run_dataset: comm_success must lie in (0, 1]");

  DatasetResult res;
  auto& log = res.log;
  log.robot_count = es.robot_count;
  log.dt = es.dt;
  log.seed = opt.seed;
  res.metrics.dt = es.dt;
  if (es.truth.empty()) return res;

  const int n = es.robot_count;
  filters::TeamInit init;
  init.truth0 = es.truth[0];
  init.x0 = es.truth[0];
  init.P0.assign(static_cast<std::size_t>(n), noise.init_sigma.cwiseAbs2().asDiagonal().toDenseMatrix());
  const filters::TeamOptions topt{opt.dropout, opt.scope, opt.record_jacobians};
  const std::vector<ProcessNoise> qs(static_cast<std::size_t>(n),
                                     ProcessNoise::from_sigmas(noise.odom_sigma.x(), noise.odom_sigma.y(),
                                                               noise.odom_sigma.z()));

  std::vector<std::unique_ptr<filters::TeamEstimator>> team;
  for (auto k : kinds) {
    team.push_back(filters::make_team(k, init, topt));
    sim::EstimatorLog el;
    el.kind = k;
    el.priors.push_back(sim::detail::snapshot(*team.back()));
    el.posteriors.push_back(el.priors.back());
    log.estimators.push_back(std::move(el));
  }
  log.truth.push_back(es.truth[0]);

  sim::Rng comm(opt.seed, sim::Stream::comm);
  auto event = [&](long step, std::string type, std::string payload) {
    if (opt.keep_events) log.events.push_back({step, std::move(type), std::move(payload)});
  };

  for (long k = 1; k <= es.step_count(); ++k) {
    const filters::TruthView tv{es.truth[k - 1], es.truth[k]};

    std::vector<RelPosMeasurement> rel;
    for (const auto& e : es.robot_meas[k]) {
      if (!(e.range > 0.0)) {
        ++res.rejected_measurements;
        continue;
      }
      const RelPos z = range_bearing_to_relpos(e.range, e.bearing, noise.range_sigma, noise.bearing_sigma);
      rel.push_back({e.observer, e.target, z.y, z.R, k});
    }
    std::vector<LandmarkMeasurement> lm;
    for (const auto& e : es.landmark_meas[k]) {
      if (!(e.range > 0.0)) {
        ++res.rejected_measurements;
        continue;
      }
      const RelPos z = range_bearing_to_relpos(e.range, e.bearing, noise.landmark_range_sigma,
                                               noise.landmark_bearing_sigma);
      lm.push_back({e.observer, es.landmarks.at(e.target), z.y, z.R, k});
    }
    res.robot_measurements += static_cast<long>(rel.size());
    res.landmark_measurements += static_cast<long>(lm.size());

    std::vector<filters::Delivery> rel_d, lm_d;
    for (const auto& m : rel) {
      rel_d.push_back(opt.comm_success < 1.0 ? sim::detail::sample_delivery(comm, opt.comm_success, n) : filters::Delivery{});
      event(k, "measurement", std::to_string(m.observer_id) + "->" + std::to_string(m.target_id));
    }
    for (const auto& m : lm) {
      lm_d.push_back(opt.comm_success < 1.0 ? sim::detail::sample_delivery(comm, opt.comm_success, n) : filters::Delivery{});
      event(k, "landmark", std::to_string(m.observer_id));
    }

    for (std::size_t e = 0; e < team.size(); ++e) {
      auto& el = log.estimators[e];
      if (el.diverged) continue;
      try {
        team[e]->propagate(es.inputs[k], qs, es.dt, tv);
        el.priors.push_back(sim::detail::snapshot(*team[e]));
        for (std::size_t i = 0; i < rel.size(); ++i) {
          team[e]->update(rel[i], rel_d[i], tv) ? ++el.updates_applied : ++el.updates_skipped;
        }
        for (std::size_t i = 0; i < lm.size(); ++i) {
          team[e]->update_landmark(lm[i], lm_d[i], tv) ? ++el.updates_applied : ++el.updates_skipped;
        }
        el.posteriors.push_back(sim::detail::snapshot(*team[e]));
        if (!sim::detail::finite(el.posteriors.back())) throw Error("non-finite state");
      } catch (const Error& ex) {
        el.priors.resize(static_cast<std::size_t>(k));
        el.posteriors.resize(static_cast<std::size_t>(k));
        el.diverged = true;
        el.divergence_step = k;
        el.diagnostic = ex.what();
        event(k, "diverged", filters::to_string(el.kind) + ": " + ex.what());
      }
    }
    log.truth.push_back(es.truth[k]);
  }
  for (std::size_t e = 0; e < team.size(); ++e) {
    if (const auto* j = team[e]->jacobians()) log.estimators[e].jacobians = *j;
  }
  if (es.step_count() > 0) res.metrics = sim::metrics_from_log(log, config_id);
  return res;
}

struct TuneResult {
  NoiseConfig noise;
  double rmse_position = 0.0;
  bool diverged = false;
};

/// Scores every candidate by the position RMSE of `kind` (default: the
/// ground-truth-linearized baseline) and returns them best first.
inline std::vector<TuneResult> tune_noise(const EventStream& es, const std::vector<NoiseConfig>& candidates,
                                          EstimatorKind kind = EstimatorKind::central) {
  std::vector<TuneResult> out;
  for (const auto& c : candidates) {
    const DatasetResult r = run_dataset(es, {kind}, c);
    TuneResult t{c, 0.0, r.log.estimators[0].diverged};
    t.rmse_position = t.diverged || r.metrics.rows.empty() ? std::numeric_limits<double>::infinity()
                                                           : r.metrics.rows[0].rmse_position;
    out.push_back(t);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TuneResult& a, const TuneResult& b) { return a.rmse_position < b.rmse_position; });
  return out;
}

}  // namespace dcl::mrclam
