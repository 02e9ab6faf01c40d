#pragma once

#include <span>
#include <vector>

#include "dcl/filters/server.hpp"
#include "dcl/filters/tsb.hpp"

// Original-coordinate server-based cooperative localization.
//
// The true cross-covariance between robots i and j evolves as
// P_ij <- F_i P_ij F_j^T at every step. Instead of per-step server traffic each
// robot accumulates Phi_i = F_i,k ... F_i,l+1 since its last upload, and the
// server stores lagged blocks Pi_ij with P_ij = Phi_i Pi_ij Phi_j^T. Uploading
// robots hand their Phi to the server, which folds it into every block touching
// them. Bystanders never upload: the server sends them a lagged pre-gain D_i and
// they recover K_i = Phi_i D_i locally.

namespace dcl::filters {

struct OsbRobot {
  RobotBelief belief;
  Mat3 phi = Mat3::Identity();
};

/// Standard EKF propagation of a robot's own block.
inline RobotBelief original_robot_propagate(const RobotBelief& rb, const MotionInput& u, const ProcessNoise& Q,
                                            double dt, Mat3* f_out = nullptr) {
  detail::require_frame(rb.frame, Frame::original, "original_robot_propagate");
  RobotBelief out = rb;
  out.x_hat = propagate_pose(rb.x_hat, u, dt);
  const MotionJacobians j = motion_jacobians(out.x_hat, rb.x_hat);
  out.P_own = symmetrized(Mat3(j.F * rb.P_own * j.F.transpose() + j.G * Q.matrix() * j.G.transpose()));
  if (f_out) *f_out = j.F;
  return out;
}

inline OsbRobot osb_robot_propagate(const OsbRobot& r, const MotionInput& u, const ProcessNoise& Q, double dt) {
  Mat3 f;
  OsbRobot out{original_robot_propagate(r.belief, u, Q, dt, &f), Mat3::Identity()};
  out.phi = f * r.phi;
  return out;
}

/// Folds an uploaded Phi into every stored block involving `robot`.
inline void osb_server_absorb(CrossCovTable& cross, int robot, const Mat3& phi) {
  detail::require_frame(cross.frame(), Frame::original, "osb_server_absorb");
  detail::check_robot(robot, cross.robot_count(), "osb_server_absorb");
  for (int j = 0; j < cross.robot_count(); ++j) {
    if (j < robot) {
      cross.stored(j, robot) = cross.stored(j, robot) * phi.transpose();
    } else if (j > robot) {
      cross.stored(robot, j) = phi * cross.stored(robot, j);
    }
  }
}

struct OsbCorrection {
  int robot_id = 0;
  Mat32 pre_gain = Mat32::Zero();  // D_i; the robot's gain is Phi_i D_i
  Vec2 innovation = Vec2::Zero();
  Mat2 S = Mat2::Zero();
};

struct OsbServerStep {
  std::vector<OsbCorrection> messages;
  CrossCovTable cross;  // after absorbing the uploaded Phis (and after the update for the partial variant)
  std::vector<Mat32> pre_gains;
  std::vector<Mat32> C;
  Mat2 S = Mat2::Zero();
  Vec2 innovation = Vec2::Zero();
};

namespace detail {

inline std::vector<OsbCorrection> osb_messages(std::span<const Mat32> d, const Mat2& S, const Vec2& nu,
                                               std::span<const int> members) {
  std::vector<OsbCorrection> out;
  if (members.empty()) {
    for (int i = 0; i < static_cast<int>(d.size()); ++i) out.push_back({i, d[i], nu, S});
  } else {
    for (int i : members) out.push_back({i, d[i], nu, S});
  }
  return out;
}

inline OsbServerStep osb_prepare(const UpdateBundleA& a, const UpdateBundleB& b, const CrossCovTable& cross) {
  require_frame(cross.frame(), Frame::original, "osb_server_corrections");
  if (a.robot_id == b.robot_id) throw Error("osb_server_corrections: observer equals target");
  check_measurement_noise(a.R);
  OsbServerStep st;
  st.cross = cross;
  osb_server_absorb(st.cross, a.robot_id, a.phi);
  osb_server_absorb(st.cross, b.robot_id, b.phi);
  const PairJacobians h = meas_jacobians(a.x_hat, b.x_hat);
  const std::vector<Participant> parts{{a.robot_id, a.P, h.Hi}, {b.robot_id, b.P, h.Hj}};
  const CrossTerms t = cross_terms(st.cross, parts, a.R);
  st.C = t.C;
  st.S = t.S;
  st.innovation = a.y - rel_pos_h(a.x_hat, b.x_hat);
  return st;
}

}  // namespace detail

/// Server side of an OSB update. The returned table has absorbed Phi_a and Phi_b
/// but is not yet corrected; pass it to osb_server_update_crosscov.
inline OsbServerStep osb_server_corrections(const UpdateBundleA& a, const UpdateBundleB& b,
                                            const CrossCovTable& cross) {
  OsbServerStep st = detail::osb_prepare(a, b, cross);
  const Mat2 s_inv = detail::inverse_innovation(st.S);
  st.pre_gains.resize(st.C.size());
  for (std::size_t i = 0; i < st.C.size(); ++i) st.pre_gains[i] = st.C[i] * s_inv;
  st.messages = detail::osb_messages(st.pre_gains, st.S, st.innovation, {});
  return st;
}

/// Pi_ij <- Pi_ij - D_i S D_j^T.
inline CrossCovTable osb_server_update_crosscov(CrossCovTable cross, std::span<const Mat32> pre_gains,
                                                const Mat2& S) {
  detail::require_frame(cross.frame(), Frame::original, "osb_server_update_crosscov");
  optimal_table_update(cross, pre_gains, S);
  return cross;
}

/// K_i = Phi_i D_i; x_hat += K_i nu; P <- P - K_i S K_i^T.
inline OsbRobot osb_robot_apply(const OsbRobot& r, const OsbCorrection& c) {
  detail::require_frame(r.belief.frame, Frame::original, "osb_robot_apply");
  if (c.robot_id != r.belief.robot_id) throw Error("osb_robot_apply: message addressed to another robot");
  const Mat32 k = r.phi * c.pre_gain;
  OsbRobot out = r;
  out.belief.x_hat = apply_correction(r.belief.x_hat, k * c.innovation);
  out.belief.P_own = symmetrized(Mat3(r.belief.P_own - k * c.S * k.transpose()));
  if (min_eigenvalue(out.belief.P_own) < -1e-8) {
    throw Error("osb_robot_apply: correction makes robot " + std::to_string(r.belief.robot_id) +
                " covariance indefinite (inconsistent message)");
  }
  return out;
}

/// Schmidt-style OSB update on the lagged table; only `members` get messages.
inline OsbServerStep osb_schmidt_partial_update(const UpdateBundleA& a, const UpdateBundleB& b,
                                                const CrossCovTable& cross, std::span<const int> members) {
  OsbServerStep st = detail::osb_prepare(a, b, cross);
  const auto u = normalize_members(members, cross.robot_count());
  const Mat2 s_inv = detail::inverse_innovation(st.S);
  st.pre_gains.assign(st.C.size(), Mat32::Zero());
  for (int i : u) st.pre_gains[i] = st.C[i] * s_inv;
  joseph_table_update(st.cross, st.pre_gains, st.C, st.S);
  st.messages = detail::osb_messages(st.pre_gains, st.S, st.innovation, u);
  return st;
}

/// Landmark observation by one robot; the table is updated in place of the returned copy.
inline OsbServerStep osb_landmark_update(const LandmarkBundle& a, const CrossCovTable& cross,
                                         std::span<const int> members = {}) {
  detail::require_frame(cross.frame(), Frame::original, "osb_landmark_update");
  check_measurement_noise(a.R);
  OsbServerStep st;
  st.cross = cross;
  osb_server_absorb(st.cross, a.robot_id, a.phi);
  const Participant part{a.robot_id, a.P, landmark_jacobian(a.x_hat, a.landmark)};
  const CrossTerms t = cross_terms(st.cross, std::span<const Participant>(&part, 1), a.R);
  st.C = t.C;
  st.S = t.S;
  st.innovation = a.y - rot(a.x_hat.heading).transpose() * (a.landmark - a.x_hat.position);
  const std::vector<int> u = members.empty() ? std::vector<int>{} : normalize_members(members, cross.robot_count());
  st.pre_gains = gains_for(t, u);
  if (u.empty()) {
    optimal_table_update(st.cross, st.pre_gains, st.S);
  } else {
    joseph_table_update(st.cross, st.pre_gains, st.C, st.S);
  }
  st.messages = detail::osb_messages(st.pre_gains, st.S, st.innovation, u);
  return st;
}

}  // namespace dcl::filters
