#pragma once

#include <span>

#include <Eigen/Cholesky>

#include "dcl/filters/types.hpp"

// Monolithic filters over the stacked team state. The standard variant is the
// textbook EKF (optionally linearized at ground truth, the Central baseline);
// the transformed variant runs the same EKF on z = T x_tilde and is the oracle
// the server-based TSB pipeline must reproduce.

namespace dcl::filters {

enum class JacobianSource { estimate, ground_truth };

/// Ground-truth poses before and after the current step. Only read when
/// linearizing at ground truth.
struct TruthView {
  std::span<const Pose2> prev;
  std::span<const Pose2> now;
};

namespace detail {

inline void check_inputs(const JointBelief& jb, std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs) {
  const auto n = jb.x_hat.size();
  if (inputs.size() != n || qs.size() != n) throw Error("joint propagate: expected one input and one Q per robot");
  if (jb.P.rows() != 3 * static_cast<Eigen::Index>(n) || jb.P.cols() != jb.P.rows()) {
    throw Error("joint propagate: covariance dimension mismatch");
  }
}

inline void check_truth(const TruthView& truth, std::size_t n, bool need_prev) {
  if (truth.now.size() != n || (need_prev && truth.prev.size() != n)) {
    throw Error("ground-truth linearization requested without ground truth for every robot");
  }
}

inline void check_robot(int id, int n, const char* what) {
  if (id < 0 || id >= n) throw Error(std::string(what) + ": robot id " + std::to_string(id) + " out of range");
}

/// S^-1 via Cholesky; throws when S is not positive-definite.
inline Mat2 inverse_innovation(const Mat2& S) {
  Eigen::LLT<Mat2> llt(symmetrized(S));
  if (llt.info() != Eigen::Success || !S.allFinite()) throw Error("innovation covariance is not invertible");
  return llt.solve(Mat2::Identity());
}

/// Dense EKF correction with a 2-row measurement. Returns the state correction
/// and updates P in place with the subtraction form P - K S K^T.
inline VecN dense_correction(MatN& P, const Eigen::Matrix<double, 2, Eigen::Dynamic>& H, const Vec2& innovation,
                             const Mat2& R) {
  const MatN PHt = P * H.transpose();
  const Mat2 S = H * PHt + R;
  const Mat2 S_inv = inverse_innovation(S);
  const MatN K = PHt * S_inv;
  P -= K * S * K.transpose();
  P = symmetrized(P);
  return K * innovation;
}

}  // namespace detail

/// P <- F P F^T + G Q G^T with block-diagonal F, G; poses by the noise-free motion model.
/// If f_out is given it receives the block-diagonal F used.
inline JointBelief joint_ekf_propagate(const JointBelief& jb, std::span<const MotionInput> inputs,
                                       std::span<const ProcessNoise> qs, double dt,
                                       JacobianSource source = JacobianSource::estimate, TruthView truth = {},
                                       MatN* f_out = nullptr) {
  detail::check_inputs(jb, inputs, qs);
  const std::size_t n = jb.x_hat.size();
  if (source == JacobianSource::ground_truth) detail::check_truth(truth, n, true);

  JointBelief out;
  out.x_hat.reserve(n);
  MatN F = MatN::Identity(3 * n, 3 * n);
  MatN GQGt = MatN::Zero(3 * n, 3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.x_hat.push_back(propagate_pose(jb.x_hat[i], inputs[i], dt));
    const MotionJacobians j = source == JacobianSource::estimate ? motion_jacobians(out.x_hat[i], jb.x_hat[i])
                                                                 : motion_jacobians(truth.now[i], truth.prev[i]);
    F.block<3, 3>(3 * i, 3 * i) = j.F;
    GQGt.block<3, 3>(3 * i, 3 * i) = j.G * qs[i].matrix() * j.G.transpose();
  }
  out.P = symmetrized(MatN(F * jb.P * F.transpose() + GQGt));
  if (f_out) *f_out = std::move(F);
  return out;
}

/// Standard EKF update with one relative-position measurement. If h_out is
/// given it receives the 2 x 3N measurement Jacobian.
inline JointBelief joint_ekf_update(const JointBelief& jb, const RelPosMeasurement& m,
                                    JacobianSource source = JacobianSource::estimate, TruthView truth = {},
                                    MatN* h_out = nullptr) {
  validate(m);
  const int n = jb.robot_count();
  detail::check_robot(m.observer_id, n, "joint_ekf_update");
  detail::check_robot(m.target_id, n, "joint_ekf_update");
  if (source == JacobianSource::ground_truth) detail::check_truth(truth, n, false);

  const auto& xa = jb.x_hat[m.observer_id];
  const auto& xb = jb.x_hat[m.target_id];
  const PairJacobians pj = source == JacobianSource::estimate
                               ? meas_jacobians(xa, xb)
                               : meas_jacobians(truth.now[m.observer_id], truth.now[m.target_id]);
  Eigen::Matrix<double, 2, Eigen::Dynamic> H = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3 * n);
  H.middleCols<3>(3 * m.observer_id) = pj.Hi;
  H.middleCols<3>(3 * m.target_id) = pj.Hj;

  JointBelief out = jb;
  const VecN dx = detail::dense_correction(out.P, H, m.y - rel_pos_h(xa, xb), m.R);
  for (int i = 0; i < n; ++i) out.x_hat[i] = apply_correction(jb.x_hat[i], dx.segment<3>(3 * i));
  if (h_out) *h_out = H;
  return out;
}

inline JointBelief joint_ekf_landmark_update(const JointBelief& jb, const LandmarkMeasurement& m,
                                             JacobianSource source = JacobianSource::estimate, TruthView truth = {},
                                             MatN* h_out = nullptr) {
  validate(m);
  const int n = jb.robot_count();
  detail::check_robot(m.observer_id, n, "joint_ekf_landmark_update");
  if (source == JacobianSource::ground_truth) detail::check_truth(truth, n, false);

  const auto& xa = jb.x_hat[m.observer_id];
  const Pose2& lin = source == JacobianSource::estimate ? xa : truth.now[m.observer_id];
  Eigen::Matrix<double, 2, Eigen::Dynamic> H = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3 * n);
  H.middleCols<3>(3 * m.observer_id) = landmark_jacobian(lin, m.landmark);

  JointBelief out = jb;
  const Vec2 predicted = rot(xa.heading).transpose() * (m.landmark - xa.position);
  const VecN dx = detail::dense_correction(out.P, H, m.y - predicted, m.R);
  for (int i = 0; i < n; ++i) out.x_hat[i] = apply_correction(jb.x_hat[i], dx.segment<3>(3 * i));
  if (h_out) *h_out = H;
  return out;
}

// --- transformed-coordinate joint filter; jb.P holds the transformed covariance ---

/// calP <- calP + calG Q calG^T (calF = I, so no congruence term).
inline JointBelief transformed_joint_propagate(const JointBelief& jb, std::span<const MotionInput> inputs,
                                               std::span<const ProcessNoise> qs, double dt) {
  detail::check_inputs(jb, inputs, qs);
  JointBelief out = jb;
  for (std::size_t i = 0; i < jb.x_hat.size(); ++i) {
    out.x_hat[i] = propagate_pose(jb.x_hat[i], inputs[i], dt);
    const Mat3 g = transformed_motion_jacobians(out.x_hat[i], jb.x_hat[i]).G;
    auto blk = out.P.block<3, 3>(3 * i, 3 * i);
    blk = symmetrized(Mat3(blk + g * qs[i].matrix() * g.transpose()));
  }
  return out;
}

namespace detail {
inline void apply_transformed(JointBelief& out, const JointBelief& prior, const VecN& z) {
  for (int i = 0; i < prior.robot_count(); ++i) {
    const Mat3 t_inv = xform_matrix(prior.x_hat[i].position).inverse();
    out.x_hat[i] = apply_correction(prior.x_hat[i], t_inv * z.segment<3>(3 * i));
  }
}
}  // namespace detail

inline JointBelief transformed_joint_update(const JointBelief& jb, const RelPosMeasurement& m,
                                            MatN* h_out = nullptr) {
  validate(m);
  const int n = jb.robot_count();
  detail::check_robot(m.observer_id, n, "transformed_joint_update");
  detail::check_robot(m.target_id, n, "transformed_joint_update");
  const auto& xa = jb.x_hat[m.observer_id];
  const auto& xb = jb.x_hat[m.target_id];
  const PairJacobians pj = transformed_meas_jacobians(xa, xb);
  Eigen::Matrix<double, 2, Eigen::Dynamic> H = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3 * n);
  H.middleCols<3>(3 * m.observer_id) = pj.Hi;
  H.middleCols<3>(3 * m.target_id) = pj.Hj;

  JointBelief out = jb;
  const VecN z = detail::dense_correction(out.P, H, m.y - rel_pos_h(xa, xb), m.R);
  detail::apply_transformed(out, jb, z);
  if (h_out) *h_out = H;
  return out;
}

inline JointBelief transformed_joint_landmark_update(const JointBelief& jb, const LandmarkMeasurement& m,
                                                     MatN* h_out = nullptr) {
  validate(m);
  const int n = jb.robot_count();
  detail::check_robot(m.observer_id, n, "transformed_joint_landmark_update");
  const auto& xa = jb.x_hat[m.observer_id];
  Eigen::Matrix<double, 2, Eigen::Dynamic> H = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3 * n);
  H.middleCols<3>(3 * m.observer_id) = transformed_landmark_jacobian(xa, m.landmark);

  JointBelief out = jb;
  const Vec2 predicted = rot(xa.heading).transpose() * (m.landmark - xa.position);
  const VecN z = detail::dense_correction(out.P, H, m.y - predicted, m.R);
  detail::apply_transformed(out, jb, z);
  if (h_out) *h_out = H;
  return out;
}

}  // namespace dcl::filters
