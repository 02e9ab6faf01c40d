#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dcl/sim/scenario.hpp"

namespace dcl::sim {

using filters::TeamEstimator;

struct BeliefRecord {
  Pose2 x;
  Mat3 P = Mat3::Zero();  // own covariance, original coordinates
};

struct EstimatorLog {
  EstimatorKind kind = EstimatorKind::tsb;
  /// [step][robot]; step 0 is the initial belief. Shorter than the truth if the estimator diverged.
  std::vector<std::vector<BeliefRecord>> priors;
  std::vector<std::vector<BeliefRecord>> posteriors;
  bool diverged = false;
  long divergence_step = -1;
  std::string diagnostic;
  long updates_applied = 0;
  long updates_skipped = 0;
  std::optional<obscheck::ObsMatrixSeq> jacobians;
};

struct Event {
  long step = 0;
  std::string type;
  std::string payload;
};

struct RunLog {
  int robot_count = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::vector<Pose2>> truth;  // [step][robot]
  std::vector<EstimatorLog> estimators;
  std::vector<Event> events;
  long measurement_count = 0;

  long step_count() const { return static_cast<long>(truth.size()); }
};

using StepHook = std::function<void(long step, const std::vector<Pose2>& truth,
                                    const std::vector<std::unique_ptr<TeamEstimator>>& team)>;

struct EpisodeOptions {
  bool keep_events = true;
  /// Called after every step's measurements, including step 0.
  StepHook on_step;
};

namespace detail {

inline std::vector<BeliefRecord> snapshot(const TeamEstimator& t) {
  std::vector<BeliefRecord> out;
  const auto x = t.estimates();
  for (int i = 0; i < t.robot_count(); ++i) out.push_back({x[i], t.covariance(i)});
  return out;
}

inline bool finite(const std::vector<BeliefRecord>& b) {
  for (const auto& r : b) {
    if (!r.x.position.allFinite() || !std::isfinite(r.x.heading.radians()) || !r.P.allFinite()) return false;
  }
  return true;
}

/// One draw per message in fixed order: observer uplink, target uplink, then every downlink.
inline filters::Delivery sample_delivery(Rng& rng, double success, int n) {
  filters::Delivery d;
  d.uplink_observer = rng.bernoulli(success);
  d.uplink_target = rng.bernoulli(success);
  d.downlink.resize(static_cast<std::size_t>(n));
  for (auto& ok : d.downlink) ok = rng.bernoulli(success) ? 1 : 0;
  return d;
}

}  // namespace detail

/// Runs every configured estimator over one simulated episode. Truth,
/// measurements and message losses depend only on the seed, never on the
/// estimators, so the same seed yields identical logs.
inline RunLog run_episode(const ScenarioConfig& cfg, const EpisodeOptions& opt = {}) {
  validate(cfg);
  const auto plans = generate_trajectories(cfg);
  const int n = cfg.robot_count;
  EpisodeRngs rngs(cfg.seed);

  RunLog log;
  log.robot_count = n;
  log.dt = cfg.dt;
  log.seed = cfg.seed;

  std::vector<Pose2> truth;
  std::vector<MotionInput> commands;
  for (const auto& p : plans) {
    truth.push_back(p.start);
    commands.push_back(p.input);
  }

  filters::TeamInit init;
  init.truth0 = truth;
  for (int i = 0; i < n; ++i) {
    Vec3 e;
    for (int c = 0; c < 3; ++c) e(c) = rngs.init.normal(0.0, cfg.init_sigma(c));
    init.x0.push_back(apply_correction(truth[i], e));
    init.P0.push_back(cfg.init_sigma.cwiseAbs2().asDiagonal().toDenseMatrix());
  }
  filters::TeamOptions topt{cfg.dropout_policy, cfg.update_scope, cfg.record_jacobians};

  std::vector<std::unique_ptr<TeamEstimator>> team;
  for (auto k : cfg.estimators) {
    team.push_back(filters::make_team(k, init, topt));
    EstimatorLog el;
    el.kind = k;
    el.priors.push_back(detail::snapshot(*team.back()));
    el.posteriors.push_back(el.priors.back());
    log.estimators.push_back(std::move(el));
  }
  log.truth.push_back(truth);
  if (opt.on_step) opt.on_step(0, truth, team);

  const std::vector<ProcessNoise> qs(static_cast<std::size_t>(n), cfg.filter_noise());
  auto event = [&](long step, std::string type, std::string payload) {
    if (opt.keep_events) log.events.push_back({step, std::move(type), std::move(payload)});
  };
  auto fail = [&](std::size_t e, long step, const std::string& why) {
    auto& el = log.estimators[e];
    el.diverged = true;
    el.divergence_step = step;
    el.diagnostic = why;
    event(step, "diverged", filters::to_string(el.kind) + ": " + why);
  };

  const long steps = cfg.step_count();
  for (long k = 1; k <= steps; ++k) {
    const std::vector<Pose2> prev = truth;
    StepSample s = simulate_step(prev, commands, cfg, k, rngs);
    truth = std::move(s.truth);
    const filters::TruthView tv{prev, truth};

    std::vector<filters::Delivery> deliveries;
    for (const auto& m : s.measurements) {
      deliveries.push_back(detail::sample_delivery(rngs.comm, cfg.comm_success, n));
      const auto& d = deliveries.back();
      event(k, "measurement", std::to_string(m.observer_id) + "->" + std::to_string(m.target_id));
      if (!d.uplink_observer) event(k, "drop", "uplink " + std::to_string(m.observer_id));
      if (!d.uplink_target) event(k, "drop", "uplink " + std::to_string(m.target_id));
      for (int i = 0; i < n; ++i) {
        if (!d.delivered_to(i)) event(k, "drop", "downlink " + std::to_string(i));
      }
    }
    log.measurement_count += static_cast<long>(s.measurements.size());

    for (std::size_t e = 0; e < team.size(); ++e) {
      auto& el = log.estimators[e];
      if (el.diverged) continue;
      try {
        team[e]->propagate(s.odometry, qs, cfg.dt, tv);
        el.priors.push_back(detail::snapshot(*team[e]));
        for (std::size_t m = 0; m < s.measurements.size(); ++m) {
          if (team[e]->update(s.measurements[m], deliveries[m], tv)) {
            ++el.updates_applied;
          } else {
            ++el.updates_skipped;
          }
        }
        el.posteriors.push_back(detail::snapshot(*team[e]));
        if (!detail::finite(el.posteriors.back()) || !detail::finite(el.priors.back())) {
          el.priors.pop_back();
          el.posteriors.pop_back();
          fail(e, k, "non-finite state");
        }
      } catch (const Error& ex) {
        if (el.priors.size() > el.posteriors.size()) el.priors.pop_back();
        fail(e, k, ex.what());
      }
    }
    log.truth.push_back(truth);
    if (opt.on_step) opt.on_step(k, truth, team);
  }

  for (std::size_t e = 0; e < team.size(); ++e) {
    if (const auto* j = team[e]->jacobians()) log.estimators[e].jacobians = *j;
  }
  return log;
}

}  // namespace dcl::sim
