#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcl/filters/team.hpp"
#include "dcl/sim/rng.hpp"

namespace dcl::sim {

using filters::DropoutPolicy;
using filters::EstimatorKind;
using filters::UpdateScope;

/// One simulated scenario: robots on a square grid, each driving a circle.
struct ScenarioConfig {
  int robot_count = 9;
  double duration_s = 360.0;
  double dt = 0.1;
  double circle_radius_m = 4.0;
  double period_min_s = 20.0;
  double period_max_s = 40.0;
  double grid_spacing_m = 10.0;
  double sensor_range_m = 10.0;
  double meas_rate_hz = 2.0;
  /// Per-step odometry noise (forward m, lateral m, heading rad) applied to the truth.
  Vec3 odom_sigma{0.02, 0.0, 0.005};
  /// Lateral sigma the filters assume; keeps Q positive-definite when the true lateral noise is zero.
  double filter_lateral_sigma = 1e-6;
  double range_sigma = 0.2;
  double bearing_sigma = 0.01;
  /// Std of the initial estimate error; the filters start with P0 = diag(init_sigma^2).
  Vec3 init_sigma{0.0, 0.0, 0.0};
  double comm_success = 1.0;
  DropoutPolicy dropout_policy = DropoutPolicy::schmidt;
  UpdateScope update_scope = UpdateScope::all;
  std::vector<EstimatorKind> estimators{EstimatorKind::tsb};
  std::uint64_t seed = 1;
  bool record_jacobians = false;

  long step_count() const { return std::lround(duration_s / dt); }
  /// Steps between measurement ticks.
  long meas_interval() const { return std::max(1L, std::lround(1.0 / (meas_rate_hz * dt))); }
  ProcessNoise filter_noise() const {
    const double lateral = odom_sigma.y() > 0.0 ? odom_sigma.y() : filter_lateral_sigma;
    return ProcessNoise::from_sigmas(odom_sigma.x(), lateral, odom_sigma.z());
  }
};

inline void validate(const ScenarioConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(std::string("scenario: ") + name + " must be positive");
  };
  if (c.robot_count < 2) throw Error("scenario: robot_count must be at least 2");
  positive(c.duration_s, "duration_s");
  positive(c.dt, "dt");
  positive(c.circle_radius_m, "circle_radius_m");
  positive(c.period_min_s, "period_range_s[0]");
  positive(c.period_max_s, "period_range_s[1]");
  if (c.period_max_s < c.period_min_s) throw Error("scenario: period_range_s must be increasing");
  positive(c.grid_spacing_m, "grid_spacing_m");
  if (!(c.sensor_range_m >= 0.0)) throw Error("scenario: sensor_range_m must be non-negative");
  positive(c.meas_rate_hz, "meas_rate_hz");
  if (!(c.odom_sigma.array() >= 0.0).all() || !c.odom_sigma.allFinite()) {
    throw Error("scenario: odom_sigma must be non-negative");
  }
  if (!(c.odom_sigma.x() > 0.0) || !(c.odom_sigma.z() > 0.0)) {
    throw Error("scenario: odom_sigma forward and heading terms must be positive");
  }
  positive(c.filter_lateral_sigma, "filter_lateral_sigma");
  positive(c.range_sigma, "range_sigma");
  positive(c.bearing_sigma, "bearing_sigma");
  if (!(c.init_sigma.array() >= 0.0).all() || !c.init_sigma.allFinite()) {
    throw Error("scenario: init_sigma must be non-negative");
  }
  if (!(c.comm_success > 0.0 && c.comm_success <= 1.0)) throw Error("scenario: comm_success must lie in (0, 1]");
  if (c.estimators.empty()) throw Error("scenario: at least one estimator required");
  if (c.step_count() < 1) throw Error("scenario: duration shorter than one step");
}

struct RobotPlan {
  Pose2 start;
  MotionInput input;
  double period_s = 0.0;
  Vec2 center = Vec2::Zero();
};

/// v = 2 pi r / T forward, omega = 2 pi / T.
inline MotionInput circle_input(double radius, double period) {
  return {Vec2(2.0 * kPi * radius / period, 0.0), 2.0 * kPi / period};
}

/// Robots on a sqrt(N) x sqrt(N) grid, each starting at the bottom of its
/// circle heading +x so that it turns counter-clockwise around the cell center.
inline std::vector<RobotPlan> generate_trajectories(const ScenarioConfig& cfg) {
  validate(cfg);
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.robot_count))));
  if (side * side != cfg.robot_count) {
    throw Error("generate_trajectories: robot_count " + std::to_string(cfg.robot_count) +
                " is not a perfect square (grid placement)");
  }
  Rng rng(cfg.seed, Stream::trajectory);
  std::vector<RobotPlan> plans;
  for (int i = 0; i < cfg.robot_count; ++i) {
    RobotPlan p;
    p.center = Vec2((i % side) * cfg.grid_spacing_m, (i / side) * cfg.grid_spacing_m);
    p.period_s = rng.uniform(cfg.period_min_s, cfg.period_max_s);
    p.input = circle_input(cfg.circle_radius_m, p.period_s);
    p.start = Pose2(p.center + Vec2(0.0, -cfg.circle_radius_m), Angle(0.0));
    plans.push_back(p);
  }
  return plans;
}

struct StepSample {
  std::vector<Pose2> truth;
  std::vector<MotionInput> odometry;
  std::vector<RelPosMeasurement> measurements;
};

/// Random streams owned by one episode.
struct EpisodeRngs {
  Rng motion;
  Rng measurement;
  Rng comm;
  Rng init;

  explicit EpisodeRngs(std::uint64_t seed)
      : motion(seed, Stream::motion), measurement(seed, Stream::measurement), comm(seed, Stream::comm),
        init(seed, Stream::init) {}
};

inline bool is_measurement_step(const ScenarioConfig& cfg, long step) {
  return step >= 1 && step % cfg.meas_interval() == 0;
}

/// Range-bearing measurements between every ordered pair within sensor range.
inline std::vector<RelPosMeasurement> sense(const ScenarioConfig& cfg, std::span<const Pose2> truth, long step,
                                            Rng& rng) {
  std::vector<RelPosMeasurement> out;
  const int n = static_cast<int>(truth.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec2 rel = rot(truth[i].heading).transpose() * (truth[j].position - truth[i].position);
      const double dist = rel.norm();
      if (dist > cfg.sensor_range_m) continue;
      // Draw both samples before any rejection so the stream layout is fixed.
      const double d = dist + rng.normal(0.0, cfg.range_sigma);
      const double phi = std::atan2(rel.y(), rel.x()) + rng.normal(0.0, cfg.bearing_sigma);
      if (!(d > 0.0)) continue;
      const RelPos z = range_bearing_to_relpos(d, phi, cfg.range_sigma, cfg.bearing_sigma);
      out.push_back({i, j, z.y, z.R, step});
    }
  }
  return out;
}

/// Advances the truth by one step with sampled odometry noise. The emitted
/// odometry is the commanded input; the noise is what the robot fails to measure.
inline StepSample simulate_step(std::span<const Pose2> truth, std::span<const MotionInput> commands,
                                const ScenarioConfig& cfg, long step, EpisodeRngs& rngs) {
  if (truth.size() != commands.size()) throw Error("simulate_step: one command per robot expected");
  StepSample s;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    Vec3 eps;
    for (int c = 0; c < 3; ++c) eps(c) = rngs.motion.normal(0.0, cfg.odom_sigma(c));
    s.truth.push_back(propagate_pose(truth[i], commands[i], cfg.dt, eps));
    s.odometry.push_back(commands[i]);
  }
  if (is_measurement_step(cfg, step)) s.measurements = sense(cfg, s.truth, step, rngs.measurement);
  return s;
}

}  // namespace dcl::sim
