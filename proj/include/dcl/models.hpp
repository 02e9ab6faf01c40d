#pragma once

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dcl/geom.hpp"

namespace dcl {

/// Body-frame linear velocity and yaw rate over one odometry interval.
struct MotionInput {
  Vec2 v = Vec2::Zero();
  double omega = 0.0;
};

/// Per-step covariance of the odometry noise. Symmetric positive-definite.
class ProcessNoise {
 public:
  explicit ProcessNoise(const Mat3& q) : q_(q) {
    if (!q.allFinite()) throw Error("ProcessNoise: non-finite entries");
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw Error("ProcessNoise: Q not symmetric");
    const double min_eig = Eigen::SelfAdjointEigenSolver<Mat3>(q, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (!(min_eig > 0.0)) throw Error("ProcessNoise: Q not positive-definite");
  }

  /// Q = diag(sx^2, sy^2, st^2) from per-step standard deviations.
  static ProcessNoise from_sigmas(double sx, double sy, double st) {
    return ProcessNoise(Vec3(sx * sx, sy * sy, st * st).asDiagonal().toDenseMatrix());
  }

  const Mat3& matrix() const { return q_; }

 private:
  Mat3 q_;
};

/// Relative position of target expressed in the observer's body frame.
struct RelPosMeasurement {
  int observer_id = 0;
  int target_id = 1;
  Vec2 y = Vec2::Zero();
  Mat2 R = Mat2::Identity();
  long time_step = 0;
};

/// Relative position of a landmark with exactly known world position.
struct LandmarkMeasurement {
  int observer_id = 0;
  Vec2 landmark = Vec2::Zero();
  Vec2 y = Vec2::Zero();
  Mat2 R = Mat2::Identity();
  long time_step = 0;
};

inline void check_measurement_noise(const Mat2& r) {
  if (!r.allFinite() || (r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error("measurement noise R must be finite and symmetric");
  }
  if (!(r(0, 0) > 0.0 && r.determinant() > 0.0)) throw Error("measurement noise R must be positive-definite");
}

inline void validate(const RelPosMeasurement& m) {
  if (m.observer_id == m.target_id) throw Error("relative measurement: observer equals target");
  if (m.observer_id < 0 || m.target_id < 0) throw Error("relative measurement: negative robot id");
  if (!m.y.allFinite()) throw Error("relative measurement: non-finite y");
  check_measurement_noise(m.R);
}

inline void validate(const LandmarkMeasurement& m) {
  if (m.observer_id < 0) throw Error("landmark measurement: negative robot id");
  if (!m.y.allFinite() || !m.landmark.allFinite()) throw Error("landmark measurement: non-finite values");
  check_measurement_noise(m.R);
}

/// One step of the unicycle-with-slip motion model:
/// x_k = x_{k-1} + blockdiag(R(theta), 1) (u dt + eps).
inline Pose2 propagate_pose(const Pose2& x, const MotionInput& u, double dt, const Vec3& eps = Vec3::Zero()) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("propagate_pose: dt must be positive");
  if (!u.v.allFinite() || !std::isfinite(u.omega) || !eps.allFinite()) {
    throw Error("propagate_pose: non-finite input");
  }
  const Vec2 step = u.v * dt + eps.head<2>();
  return Pose2(x.position + rot(x.heading) * step, x.heading + (u.omega * dt + eps.z()));
}

struct MotionJacobians {
  Mat3 F;
  Mat3 G;
};

/// Error-state propagation Jacobians linearized at the new prior and the previous posterior.
inline MotionJacobians motion_jacobians(const Pose2& x_prior, const Pose2& x_post) {
  MotionJacobians j{Mat3::Identity(), Mat3::Identity()};
  j.F.topRightCorner<2, 1>() = skew_J() * (x_prior.position - x_post.position);
  j.G.topLeftCorner<2, 2>() = rot(x_post.heading);
  return j;
}

/// h(x_i, x_j) = R(theta_i)^T (p_j - p_i).
inline Vec2 rel_pos_h(const Pose2& xi, const Pose2& xj) {
  return rot(xi.heading).transpose() * (xj.position - xi.position);
}

struct PairJacobians {
  Mat23 Hi;
  Mat23 Hj;
};

inline PairJacobians meas_jacobians(const Pose2& xi_hat, const Pose2& xj_hat) {
  const Mat2 rt = rot(xi_hat.heading).transpose();
  PairJacobians h;
  h.Hi.leftCols<2>() = -rt;
  h.Hi.col(2) = -rt * skew_J() * (xj_hat.position - xi_hat.position);
  h.Hj.leftCols<2>() = rt;
  h.Hj.col(2).setZero();
  return h;
}

/// Jacobian of the landmark observation R(theta_i)^T (p_L - p_i) w.r.t. the observer's error state.
inline Mat23 landmark_jacobian(const Pose2& xi_hat, const Vec2& landmark) {
  const Mat2 rt = rot(xi_hat.heading).transpose();
  Mat23 h;
  h.leftCols<2>() = -rt;
  h.col(2) = -rt * skew_J() * (landmark - xi_hat.position);
  return h;
}

struct RelPos {
  Vec2 y;
  Mat2 R;
};

/// Converts a range/bearing pair to a Cartesian relative position with
/// first-order noise, linearized at the measured values.
inline RelPos range_bearing_to_relpos(double d, double phi, double sigma_d, double sigma_phi) {
  if (!(d > 0.0) || !std::isfinite(d) || !std::isfinite(phi)) throw Error("range_bearing_to_relpos: range must be positive");
  if (!(sigma_d > 0.0) || !(sigma_phi > 0.0)) throw Error("range_bearing_to_relpos: sigmas must be positive");
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  Mat2 jac;
  jac << c, -d * s, s, d * c;
  const Mat2 noise = Vec2(sigma_d * sigma_d, sigma_phi * sigma_phi).asDiagonal();
  Mat2 r = jac * noise * jac.transpose();
  r = (0.5 * (r + r.transpose())).eval();
  return {Vec2(d * c, d * s), r};
}

}  // namespace dcl
