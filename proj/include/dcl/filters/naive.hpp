#pragma once

#include <utility>

#include "dcl/filters/osb.hpp"

// Baseline that ignores inter-robot correlation: each robot holds only its own
// estimate and covariance, and a measurement updates the pair as if their
// errors were independent.

namespace dcl::filters {

inline std::pair<RobotBelief, RobotBelief> naive_update(const RobotBelief& a, const RobotBelief& b,
                                                        const RelPosMeasurement& m) {
  detail::require_frame(a.frame, Frame::original, "naive_update");
  detail::require_frame(b.frame, Frame::original, "naive_update");
  validate(m);
  if (m.observer_id != a.robot_id || m.target_id != b.robot_id) throw Error("naive_update: measurement/robot mismatch");

  const PairJacobians h = meas_jacobians(a.x_hat, b.x_hat);
  const Mat32 ca = a.P_own * h.Hi.transpose();
  const Mat32 cb = b.P_own * h.Hj.transpose();
  const Mat2 S = symmetrized(Mat2(h.Hi * ca + h.Hj * cb + m.R));
  const Mat2 s_inv = detail::inverse_innovation(S);
  const Vec2 nu = m.y - rel_pos_h(a.x_hat, b.x_hat);

  auto apply = [&](const RobotBelief& rb, const Mat32& c) {
    const Mat32 k = c * s_inv;
    RobotBelief out = rb;
    out.x_hat = apply_correction(rb.x_hat, k * nu);
    out.P_own = symmetrized(Mat3(rb.P_own - k * S * k.transpose()));
    return out;
  };
  return {apply(a, ca), apply(b, cb)};
}

inline RobotBelief naive_landmark_update(const RobotBelief& a, const LandmarkMeasurement& m) {
  detail::require_frame(a.frame, Frame::original, "naive_landmark_update");
  validate(m);
  const Mat23 h = landmark_jacobian(a.x_hat, m.landmark);
  const Mat32 c = a.P_own * h.transpose();
  const Mat2 S = symmetrized(Mat2(h * c + m.R));
  const Mat32 k = c * detail::inverse_innovation(S);
  const Vec2 nu = m.y - rot(a.x_hat.heading).transpose() * (m.landmark - a.x_hat.position);
  RobotBelief out = a;
  out.x_hat = apply_correction(a.x_hat, k * nu);
  out.P_own = symmetrized(Mat3(a.P_own - k * S * k.transpose()));
  return out;
}

}  // namespace dcl::filters
