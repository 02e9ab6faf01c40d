#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "dcl/mrclam/dataset.hpp"
#include "dcl/models.hpp"
#include "dcl/sim/rng.hpp"

namespace dcl::mrclam {

struct RangeBearingEvent {
  int observer = 0;  // robot index, 0-based
  int target = 0;    // robot index for robot measurements, landmark subject otherwise
  double range = 0.0;
  double bearing = 0.0;
};

/// Dataset resampled onto a fixed grid t0 + k dt, k = 0..K. Inputs at step k
/// drive the motion from k - 1 to k; measurements at step k are processed after it.
struct EventStream {
  double dt = 0.1;
  double t0 = 0.0;
  int robot_count = 0;
  std::vector<std::vector<MotionInput>> inputs;               // [k][robot]; k = 0 unused
  std::vector<std::vector<RangeBearingEvent>> robot_meas;     // [k]
  std::vector<std::vector<RangeBearingEvent>> landmark_meas;  // [k]
  std::vector<std::vector<Pose2>> truth;                      // [k][robot], interpolated
  std::map<int, Vec2> landmarks;
  long landmark_seen = 0;
  long landmark_kept = 0;
  long outside_grid = 0;

  long step_count() const { return truth.empty() ? 0 : static_cast<long>(truth.size()) - 1; }
};

namespace detail {

/// Latest sample at or before t (zero input before the first sample).
inline MotionInput zoh(const std::vector<OdometrySample>& odo, double t) {
  const auto it = std::upper_bound(odo.begin(), odo.end(), t, [](double x, const OdometrySample& s) { return x < s.t; });
  if (it == odo.begin()) return {};
  const auto& s = *std::prev(it);
  return {Vec2(s.v, 0.0), s.omega};
}

/// Linear interpolation of position, shortest-arc interpolation of heading; clamped at the ends.
inline Pose2 interpolate(const std::vector<GroundTruthSample>& gt, double t) {
  if (gt.empty()) throw Error("interpolate: empty ground truth");
  const auto it = std::lower_bound(gt.begin(), gt.end(), t, [](const GroundTruthSample& s, double x) { return s.t < x; });
  if (it == gt.begin()) return Pose2(gt.front().x, gt.front().y, gt.front().theta);
  if (it == gt.end()) return Pose2(gt.back().x, gt.back().y, gt.back().theta);
  const auto& b = *it;
  const auto& a = *std::prev(it);
  const double span = b.t - a.t;
  const double w = span > 0.0 ? (t - a.t) / span : 1.0;
  const double dth = (Angle(b.theta) - Angle(a.theta)).radians();
  return Pose2(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y), a.theta + w * dth);
}

}  // namespace detail

/// Resamples a parsed subset onto the dt grid. Landmark measurements are kept
/// every floor(1 / landmark_fraction)-th per robot in time order when
/// seedless_decimation is set, otherwise each is kept with probability
/// landmark_fraction drawn from `seed`.
inline EventStream build_event_stream(const DatasetSubset& ds, double dt, double landmark_fraction,
                                      bool seedless_decimation = true, std::uint64_t seed = 0) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("build_event_stream: dt must be positive");
  if (!(landmark_fraction > 0.0 && landmark_fraction <= 1.0)) {
    throw Error("build_event_stream: landmark_fraction must lie in (0, 1]");
  }
  EventStream es;
  es.dt = dt;
  es.robot_count = ds.robot_count();
  es.landmarks = ds.landmarks;

  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  bool any = ds.robot_count() > 0;
  for (const auto& r : ds.robots) {
    if (r.groundtruth.empty() || r.odometry.empty()) {
      any = false;
      break;
    }
    t0 = std::max({t0, r.groundtruth.front().t, r.odometry.front().t});
    t1 = std::min(t1, r.groundtruth.back().t);
  }
  if (!any || t1 < t0) return es;
  es.t0 = t0;
  const long steps = static_cast<long>(std::floor((t1 - t0) / dt + 1e-9));
  const auto grid = [&](long k) { return t0 + static_cast<double>(k) * dt; };

  es.inputs.resize(static_cast<std::size_t>(steps + 1));
  es.truth.resize(static_cast<std::size_t>(steps + 1));
  es.robot_meas.resize(static_cast<std::size_t>(steps + 1));
  es.landmark_meas.resize(static_cast<std::size_t>(steps + 1));
  for (long k = 0; k <= steps; ++k) {
    for (const auto& r : ds.robots) {
      es.truth[k].push_back(detail::interpolate(r.groundtruth, grid(k)));
      es.inputs[k].push_back(k == 0 ? MotionInput{} : detail::zoh(r.odometry, grid(k - 1)));
    }
  }

  const long stride = std::max(1L, static_cast<long>(std::floor(1.0 / landmark_fraction + 1e-9)));
  sim::Rng rng(seed, sim::Stream::measurement);
  for (int r = 0; r < ds.robot_count(); ++r) {
    long landmark_index = 0;
    for (const auto& m : ds.robots[r].measurements) {
      const bool robot_target = ds.is_robot(m.subject);
      const bool landmark_target = ds.landmarks.contains(m.subject);
      if (!robot_target && !landmark_target) continue;
      if (robot_target && m.subject - 1 == r) continue;
      bool keep = true;
      if (landmark_target) {
        ++es.landmark_seen;
        keep = seedless_decimation ? landmark_index % stride == 0 : rng.bernoulli(landmark_fraction);
        ++landmark_index;
      }
      if (!keep) continue;
      const long k = std::lround((m.t - t0) / dt);
      if (k < 1 || k > steps) {
        ++es.outside_grid;
        continue;
      }
      if (robot_target) {
        es.robot_meas[k].push_back({r, m.subject - 1, m.range, m.bearing});
      } else {
        es.landmark_meas[k].push_back({r, m.subject, m.range, m.bearing});
        ++es.landmark_kept;
      }
    }
  }
  return es;
}

}  // namespace dcl::mrclam
