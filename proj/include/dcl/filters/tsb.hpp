#pragma once

#include <span>
#include <vector>

#include "dcl/filters/server.hpp"

// Transformed server-based cooperative localization. Robots keep their pose
// estimate and own transformed covariance; the server keeps the transformed
// cross-covariances, which are untouched by propagation because the
// transformed propagation Jacobian is the identity.

namespace dcl::filters {

namespace detail {
inline void require_frame(Frame have, Frame want, const char* what) {
  if (have != want) throw Error(std::string(what) + ": expected " + to_string(want) + " frame");
}
}  // namespace detail

/// x_hat by the noise-free motion model; calP <- calP + calG Q calG^T.
inline RobotBelief tsb_robot_propagate(const RobotBelief& rb, const MotionInput& u, const ProcessNoise& Q, double dt) {
  detail::require_frame(rb.frame, Frame::transformed, "tsb_robot_propagate");
  RobotBelief out = rb;
  out.x_hat = propagate_pose(rb.x_hat, u, dt);
  const Mat3 g = transformed_motion_jacobians(out.x_hat, rb.x_hat).G;
  out.P_own = symmetrized(Mat3(rb.P_own + g * Q.matrix() * g.transpose()));
  return out;
}

struct ServerCorrections {
  std::vector<CorrectionMessage> messages;  // one per robot, indexed by robot id
  std::vector<Mat32> gains;
  Mat2 S = Mat2::Zero();
  Vec2 innovation = Vec2::Zero();
};

namespace detail {

inline std::vector<Participant> tsb_participants(const UpdateBundleA& a, const UpdateBundleB& b) {
  const PairJacobians h = transformed_meas_jacobians(a.x_hat, b.x_hat);
  return {Participant{a.robot_id, a.P, h.Hi}, Participant{b.robot_id, b.P, h.Hj}};
}

inline std::vector<CorrectionMessage> make_messages(std::span<const Mat32> gains, const Mat2& S, const Vec2& nu,
                                                    std::span<const int> members) {
  std::vector<CorrectionMessage> out;
  auto emit = [&](int i) {
    out.push_back(CorrectionMessage{i, gains[i] * nu, symmetrized(Mat3(gains[i] * S * gains[i].transpose()))});
  };
  if (members.empty()) {
    for (int i = 0; i < static_cast<int>(gains.size()); ++i) emit(i);
  } else {
    for (int i : members) emit(i);
  }
  return out;
}

}  // namespace detail

/// Server side of an update: gains, innovation covariance and (r_i, Gamma_i) for every robot.
inline ServerCorrections tsb_server_corrections(const UpdateBundleA& a, const UpdateBundleB& b,
                                                const CrossCovTable& cross) {
  detail::require_frame(cross.frame(), Frame::transformed, "tsb_server_corrections");
  if (a.robot_id == b.robot_id) throw Error("tsb_server_corrections: observer equals target");
  check_measurement_noise(a.R);
  const auto parts = detail::tsb_participants(a, b);
  const CrossTerms t = cross_terms(cross, parts, a.R);

  ServerCorrections sc;
  sc.S = t.S;
  sc.innovation = a.y - rel_pos_h(a.x_hat, b.x_hat);
  sc.gains = gains_for(t, {});
  sc.messages = detail::make_messages(sc.gains, sc.S, sc.innovation, {});
  return sc;
}

/// calP_ij <- calP_ij - K_i S K_j^T for all i != j.
inline CrossCovTable tsb_server_update_crosscov(CrossCovTable cross, std::span<const Mat32> gains, const Mat2& S) {
  detail::require_frame(cross.frame(), Frame::transformed, "tsb_server_update_crosscov");
  optimal_table_update(cross, gains, S);
  return cross;
}

/// x_hat += T(p_hat_prior)^-1 r; calP <- calP - Gamma.
inline RobotBelief tsb_robot_apply(const RobotBelief& rb, const CorrectionMessage& c) {
  detail::require_frame(rb.frame, Frame::transformed, "tsb_robot_apply");
  if (c.robot_id != rb.robot_id) throw Error("tsb_robot_apply: message addressed to another robot");
  RobotBelief out = rb;
  out.x_hat = apply_correction(rb.x_hat, xform_matrix(rb.x_hat.position).inverse() * c.r);
  out.P_own = symmetrized(Mat3(rb.P_own - c.Gamma));
  if (min_eigenvalue(out.P_own) < -1e-8) {
    throw Error("tsb_robot_apply: correction makes robot " + std::to_string(rb.robot_id) +
                " covariance indefinite (inconsistent message)");
  }
  return out;
}

struct PartialUpdate {
  std::vector<CorrectionMessage> messages;  // only for robots in the updating set
  CrossCovTable cross;
  std::vector<Mat32> gains;                 // zero rows outside the updating set
  Mat2 S = Mat2::Zero();
  Vec2 innovation = Vec2::Zero();
};

/// Schmidt-style update: only robots in `members` correct their estimates;
/// every cross block (and implicitly every own block) stays consistent.
inline PartialUpdate schmidt_partial_update(const UpdateBundleA& a, const UpdateBundleB& b,
                                            const CrossCovTable& cross, std::span<const int> members) {
  detail::require_frame(cross.frame(), Frame::transformed, "schmidt_partial_update");
  if (a.robot_id == b.robot_id) throw Error("schmidt_partial_update: observer equals target");
  const auto u = normalize_members(members, cross.robot_count());
  const auto parts = detail::tsb_participants(a, b);
  const CrossTerms t = cross_terms(cross, parts, a.R);

  PartialUpdate pu{{}, cross, gains_for(t, u), t.S, a.y - rel_pos_h(a.x_hat, b.x_hat)};
  joseph_table_update(pu.cross, pu.gains, t.C, t.S);
  pu.messages = detail::make_messages(pu.gains, pu.S, pu.innovation, u);
  return pu;
}

/// Observation of a known landmark by robot `observer`. All robots in `members`
/// (every robot when empty) receive corrections through their correlation with the observer.
struct LandmarkBundle {
  int robot_id = 0;
  Pose2 x_hat;
  Mat3 P = Mat3::Zero();
  Vec2 landmark = Vec2::Zero();
  Vec2 y = Vec2::Zero();
  Mat2 R = Mat2::Identity();
  Mat3 phi = Mat3::Identity();  // OSB only
};

inline PartialUpdate tsb_landmark_update(const LandmarkBundle& a, const CrossCovTable& cross,
                                         std::span<const int> members = {}) {
  detail::require_frame(cross.frame(), Frame::transformed, "tsb_landmark_update");
  check_measurement_noise(a.R);
  const Participant part{a.robot_id, a.P, transformed_landmark_jacobian(a.x_hat, a.landmark)};
  const CrossTerms t = cross_terms(cross, std::span<const Participant>(&part, 1), a.R);
  const Vec2 nu = a.y - rot(a.x_hat.heading).transpose() * (a.landmark - a.x_hat.position);

  const std::vector<int> u = members.empty() ? std::vector<int>{} : normalize_members(members, cross.robot_count());
  PartialUpdate pu{{}, cross, gains_for(t, u), t.S, nu};
  if (u.empty()) {
    optimal_table_update(pu.cross, pu.gains, t.S);
  } else {
    joseph_table_update(pu.cross, pu.gains, t.C, t.S);
  }
  pu.messages = detail::make_messages(pu.gains, pu.S, pu.innovation, u);
  return pu;
}

struct TeamState {
  std::vector<RobotBelief> beliefs;
  CrossCovTable cross;
};

/// Convenience composition for a landmark observation in transformed coordinates:
/// server step followed by every robot applying its correction.
inline TeamState landmark_update(const TeamState& team, int observer, const Vec2& landmark, const Vec2& y,
                                 const Mat2& R) {
  detail::require_frame(team.cross.frame(), Frame::transformed, "landmark_update");
  detail::check_robot(observer, team.cross.robot_count(), "landmark_update");
  const auto& rb = team.beliefs.at(static_cast<std::size_t>(observer));
  const PartialUpdate pu = tsb_landmark_update(LandmarkBundle{observer, rb.x_hat, rb.P_own, landmark, y, R}, team.cross);
  TeamState out{team.beliefs, pu.cross};
  for (const auto& msg : pu.messages) out.beliefs[msg.robot_id] = tsb_robot_apply(out.beliefs[msg.robot_id], msg);
  return out;
}

}  // namespace dcl::filters
