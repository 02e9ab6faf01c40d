#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcl/filters/joint_ekf.hpp"
#include "dcl/filters/naive.hpp"
#include "dcl/filters/osb.hpp"
#include "dcl/filters/tsb.hpp"
#include "dcl/obscheck.hpp"

// Whole-team estimators behind one interface so the simulator and the dataset
// runner can drive every method with identical inputs.

namespace dcl::filters {

enum class EstimatorKind {
  central,  // joint EKF linearized at ground truth
  ekf,      // joint EKF linearized at the estimate
  tekf,     // joint EKF in transformed coordinates
  osb,      // original server-based
  tsb,      // transformed server-based
  naive,    // ignores cross-correlations
};

inline constexpr EstimatorKind kAllEstimators[] = {EstimatorKind::central, EstimatorKind::ekf, EstimatorKind::tekf,
                                                   EstimatorKind::osb,     EstimatorKind::tsb, EstimatorKind::naive};

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::central: return "central";
    case EstimatorKind::ekf: return "ekf";
    case EstimatorKind::tekf: return "tekf";
    case EstimatorKind::osb: return "osb";
    case EstimatorKind::tsb: return "tsb";
    case EstimatorKind::naive: return "naive";
  }
  return "unknown";
}

inline std::optional<EstimatorKind> parse_estimator(std::string_view s) {
  for (auto k : kAllEstimators) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// What to do when messages of a server-based update are lost.
enum class DropoutPolicy {
  abort,    // skip the whole update if any message is lost
  schmidt,  // update only the robots whose correction arrived
};

/// Which robots a server-based update corrects when nothing is lost.
enum class UpdateScope {
  all,   // every robot
  pair,  // only the measuring robots
};

inline const char* to_string(DropoutPolicy p) { return p == DropoutPolicy::abort ? "abort" : "schmidt"; }
inline const char* to_string(UpdateScope s) { return s == UpdateScope::all ? "all" : "pair"; }

/// Fate of the messages of one server-based update. Robot-to-server uploads
/// come from the observer and target; downlink[i] says whether robot i's
/// correction arrived (empty: all arrived). The server learns of losses by
/// acknowledgement before it commits the table update.
struct Delivery {
  bool uplink_observer = true;
  bool uplink_target = true;
  std::vector<char> downlink;

  bool delivered_to(int i) const { return downlink.empty() || downlink.at(static_cast<std::size_t>(i)) != 0; }
};

struct TeamOptions {
  DropoutPolicy dropout = DropoutPolicy::schmidt;
  UpdateScope scope = UpdateScope::all;
  bool record_jacobians = false;
};

struct TeamInit {
  std::vector<Pose2> x0;
  std::vector<Mat3> P0;       // original coordinates, one per robot
  std::vector<Pose2> truth0;  // needed for ground-truth linearization and its audit anchors
};

class TeamEstimator {
 public:
  virtual ~TeamEstimator() = default;

  virtual EstimatorKind kind() const = 0;
  virtual int robot_count() const = 0;
  virtual void propagate(std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs, double dt,
                         TruthView truth) = 0;
  /// Returns true if the measurement was applied.
  virtual bool update(const RelPosMeasurement& m, const Delivery& d, TruthView truth) = 0;
  virtual bool update_landmark(const LandmarkMeasurement& m, const Delivery& d, TruthView truth) = 0;
  virtual std::vector<Pose2> estimates() const = 0;
  /// Own covariance of robot i in original coordinates.
  virtual Mat3 covariance(int i) const = 0;
  /// Team belief in original coordinates (block-diagonal for the naive filter).
  virtual JointBelief joint() const = 0;

  const obscheck::ObsMatrixSeq* jacobians() const { return recorder_ ? &recorder_->sequence() : nullptr; }

 protected:
  void start_recording(const TeamOptions& opt, Frame frame, std::span<const Pose2> anchor_poses) {
    if (!opt.record_jacobians) return;
    std::vector<Vec2> anchors;
    for (const auto& p : anchor_poses) anchors.push_back(p.position);
    recorder_.emplace(static_cast<int>(anchor_poses.size()), frame, std::move(anchors));
  }

  std::optional<obscheck::ObsRecorder> recorder_;
};

namespace detail {

inline MatN joint_covariance(std::span<const Mat3> blocks) {
  const auto n = static_cast<Eigen::Index>(blocks.size());
  MatN P = MatN::Zero(3 * n, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) P.block<3, 3>(3 * i, 3 * i) = blocks[i];
  return P;
}

inline void check_init(const TeamInit& init) {
  if (init.x0.empty()) throw Error("team estimator: no robots");
  if (init.P0.size() != init.x0.size()) throw Error("team estimator: one initial covariance per robot expected");
}

inline Eigen::Matrix<double, 2, Eigen::Dynamic> pair_row(int n, int a, const Mat23& ha, int b, const Mat23& hb) {
  Eigen::Matrix<double, 2, Eigen::Dynamic> H = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3 * n);
  H.middleCols<3>(3 * a) = ha;
  H.middleCols<3>(3 * b) = hb;
  return H;
}

inline Eigen::Matrix<double, 2, Eigen::Dynamic> single_row(int n, int a, const Mat23& ha) {
  Eigen::Matrix<double, 2, Eigen::Dynamic> H = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3 * n);
  H.middleCols<3>(3 * a) = ha;
  return H;
}

}  // namespace detail

/// Standard joint EKF; Central when linearized at ground truth.
class JointTeam final : public TeamEstimator {
 public:
  JointTeam(const TeamInit& init, JacobianSource source, const TeamOptions& opt) : source_(source) {
    detail::check_init(init);
    jb_ = make_joint(init.x0, detail::joint_covariance(init.P0));
    if (source == JacobianSource::ground_truth) {
      if (init.truth0.size() != init.x0.size()) throw Error("central: ground truth required at start");
      start_recording(opt, Frame::original, init.truth0);
    } else {
      start_recording(opt, Frame::original, init.x0);
    }
  }

  EstimatorKind kind() const override {
    return source_ == JacobianSource::ground_truth ? EstimatorKind::central : EstimatorKind::ekf;
  }
  int robot_count() const override { return jb_.robot_count(); }

  void propagate(std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs, double dt,
                 TruthView truth) override {
    MatN F;
    jb_ = joint_ekf_propagate(jb_, inputs, qs, dt, source_, truth, recorder_ ? &F : nullptr);
    if (recorder_) recorder_->end_step(F);
  }

  bool update(const RelPosMeasurement& m, const Delivery&, TruthView truth) override {
    MatN H;
    jb_ = joint_ekf_update(jb_, m, source_, truth, recorder_ ? &H : nullptr);
    if (recorder_) recorder_->add_measurement(H);
    return true;
  }

  bool update_landmark(const LandmarkMeasurement& m, const Delivery&, TruthView truth) override {
    MatN H;
    jb_ = joint_ekf_landmark_update(jb_, m, source_, truth, recorder_ ? &H : nullptr);
    if (recorder_) recorder_->add_measurement(H);
    return true;
  }

  std::vector<Pose2> estimates() const override { return jb_.x_hat; }
  Mat3 covariance(int i) const override { return jb_.P.block<3, 3>(3 * i, 3 * i); }
  JointBelief joint() const override { return jb_; }

 private:
  JacobianSource source_;
  JointBelief jb_;
};

/// Monolithic EKF in transformed coordinates; the reference TSB must reproduce.
class TransformedJointTeam final : public TeamEstimator {
 public:
  TransformedJointTeam(const TeamInit& init, const TeamOptions& opt) {
    detail::check_init(init);
    jb_ = make_joint(init.x0, detail::joint_covariance(init.P0));
    jb_.P = to_transformed_cov(jb_.P, jb_.positions());
    start_recording(opt, Frame::transformed, init.x0);
  }

  EstimatorKind kind() const override { return EstimatorKind::tekf; }
  int robot_count() const override { return jb_.robot_count(); }

  void propagate(std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs, double dt,
                 TruthView) override {
    jb_ = transformed_joint_propagate(jb_, inputs, qs, dt);
    if (recorder_) recorder_->end_step(MatN::Identity(jb_.P.rows(), jb_.P.cols()));
  }

  bool update(const RelPosMeasurement& m, const Delivery&, TruthView) override {
    MatN H;
    jb_ = transformed_joint_update(jb_, m, &H);
    if (recorder_) recorder_->add_measurement(H);
    return true;
  }

  bool update_landmark(const LandmarkMeasurement& m, const Delivery&, TruthView) override {
    MatN H;
    jb_ = transformed_joint_landmark_update(jb_, m, &H);
    if (recorder_) recorder_->add_measurement(H);
    return true;
  }

  std::vector<Pose2> estimates() const override { return jb_.x_hat; }
  Mat3 covariance(int i) const override {
    const Mat3 t_inv = xform_matrix(jb_.x_hat[i].position).inverse();
    return t_inv * jb_.P.block<3, 3>(3 * i, 3 * i) * t_inv.transpose();
  }
  JointBelief joint() const override { return {jb_.x_hat, from_transformed_cov(jb_.P, jb_.positions())}; }

  /// Covariance in transformed coordinates.
  const MatN& transformed_covariance() const { return jb_.P; }

 private:
  JointBelief jb_;
};

namespace detail {

/// Robots a server-based update should correct, or nullopt if it must be skipped.
inline std::optional<std::vector<int>> updating_set(int n, std::span<const int> involved, const Delivery& d,
                                                    const TeamOptions& opt) {
  std::vector<int> intended;
  if (opt.scope == UpdateScope::all) {
    for (int i = 0; i < n; ++i) intended.push_back(i);
  } else {
    intended.assign(involved.begin(), involved.end());
    std::sort(intended.begin(), intended.end());
  }
  std::vector<int> u;
  for (int i : intended) {
    if (d.delivered_to(i)) u.push_back(i);
  }
  if (u.empty()) return std::nullopt;
  if (opt.dropout == DropoutPolicy::abort && u.size() != intended.size()) return std::nullopt;
  return u;
}

}  // namespace detail

/// Transformed server-based DCL: robots hold (x_hat_i, calP_i); the server holds calP_ij.
class TsbTeam final : public TeamEstimator {
 public:
  TsbTeam(const TeamInit& init, const TeamOptions& opt) : opt_(opt) {
    detail::check_init(init);
    const int n = static_cast<int>(init.x0.size());
    for (int i = 0; i < n; ++i) beliefs_.push_back(make_belief(i, init.x0[i], init.P0[i], Frame::transformed));
    cross_ = CrossCovTable(n, Frame::transformed);
    start_recording(opt, Frame::transformed, init.x0);
  }

  EstimatorKind kind() const override { return EstimatorKind::tsb; }
  int robot_count() const override { return static_cast<int>(beliefs_.size()); }

  void propagate(std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs, double dt,
                 TruthView) override {
    if (inputs.size() != beliefs_.size() || qs.size() != beliefs_.size()) {
      throw Error("tsb propagate: one input and one Q per robot expected");
    }
    for (std::size_t i = 0; i < beliefs_.size(); ++i) beliefs_[i] = tsb_robot_propagate(beliefs_[i], inputs[i], qs[i], dt);
    if (recorder_) recorder_->end_step(MatN::Identity(3 * robot_count(), 3 * robot_count()));
  }

  bool update(const RelPosMeasurement& m, const Delivery& d, TruthView) override {
    validate(m);
    const int n = robot_count();
    detail::check_robot(m.observer_id, n, "tsb update");
    detail::check_robot(m.target_id, n, "tsb update");
    if (!d.uplink_observer || !d.uplink_target) return false;
    const int pair[2] = {m.observer_id, m.target_id};
    const auto u = detail::updating_set(n, pair, d, opt_);
    if (!u) return false;

    const auto& ra = beliefs_[m.observer_id];
    const auto& rb = beliefs_[m.target_id];
    const UpdateBundleA a{m.observer_id, ra.x_hat, ra.P_own, m.y, m.R};
    const UpdateBundleB b{m.target_id, rb.x_hat, rb.P_own};
    if (recorder_) {
      const PairJacobians h = transformed_meas_jacobians(ra.x_hat, rb.x_hat);
      recorder_->add_measurement(detail::pair_row(n, m.observer_id, h.Hi, m.target_id, h.Hj));
    }

    std::vector<CorrectionMessage> messages;
    if (static_cast<int>(u->size()) == n) {
      ServerCorrections sc = tsb_server_corrections(a, b, cross_);
      cross_ = tsb_server_update_crosscov(std::move(cross_), sc.gains, sc.S);
      messages = std::move(sc.messages);
    } else {
      PartialUpdate pu = schmidt_partial_update(a, b, cross_, *u);
      cross_ = std::move(pu.cross);
      messages = std::move(pu.messages);
    }
    for (const auto& msg : messages) beliefs_[msg.robot_id] = tsb_robot_apply(beliefs_[msg.robot_id], msg);
    return true;
  }

  bool update_landmark(const LandmarkMeasurement& m, const Delivery& d, TruthView) override {
    validate(m);
    const int n = robot_count();
    detail::check_robot(m.observer_id, n, "tsb landmark update");
    if (!d.uplink_observer) return false;
    const int self[1] = {m.observer_id};
    const auto u = detail::updating_set(n, self, d, opt_);
    if (!u) return false;

    const auto& ra = beliefs_[m.observer_id];
    if (recorder_) {
      recorder_->add_measurement(detail::single_row(n, m.observer_id, transformed_landmark_jacobian(ra.x_hat, m.landmark)));
    }
    const LandmarkBundle a{m.observer_id, ra.x_hat, ra.P_own, m.landmark, m.y, m.R};
    PartialUpdate pu = static_cast<int>(u->size()) == n ? tsb_landmark_update(a, cross_)
                                                       : tsb_landmark_update(a, cross_, *u);
    cross_ = std::move(pu.cross);
    for (const auto& msg : pu.messages) beliefs_[msg.robot_id] = tsb_robot_apply(beliefs_[msg.robot_id], msg);
    return true;
  }

  std::vector<Pose2> estimates() const override {
    std::vector<Pose2> out;
    for (const auto& b : beliefs_) out.push_back(b.x_hat);
    return out;
  }
  Mat3 covariance(int i) const override { return beliefs_.at(static_cast<std::size_t>(i)).original_covariance(); }
  JointBelief joint() const override { return assemble_joint(beliefs_, cross_); }

  const std::vector<RobotBelief>& beliefs() const { return beliefs_; }
  const CrossCovTable& cross() const { return cross_; }

 private:
  TeamOptions opt_;
  std::vector<RobotBelief> beliefs_;
  CrossCovTable cross_;
};

/// Original server-based DCL with lagged cross-covariance blocks on the server.
class OsbTeam final : public TeamEstimator {
 public:
  OsbTeam(const TeamInit& init, const TeamOptions& opt) : opt_(opt) {
    detail::check_init(init);
    const int n = static_cast<int>(init.x0.size());
    for (int i = 0; i < n; ++i) robots_.push_back({make_belief(i, init.x0[i], init.P0[i], Frame::original)});
    cross_ = CrossCovTable(n, Frame::original);
    start_recording(opt, Frame::original, init.x0);
  }

  EstimatorKind kind() const override { return EstimatorKind::osb; }
  int robot_count() const override { return static_cast<int>(robots_.size()); }

  void propagate(std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs, double dt,
                 TruthView) override {
    if (inputs.size() != robots_.size() || qs.size() != robots_.size()) {
      throw Error("osb propagate: one input and one Q per robot expected");
    }
    MatN F;
    if (recorder_) F = MatN::Identity(3 * robot_count(), 3 * robot_count());
    for (std::size_t i = 0; i < robots_.size(); ++i) {
      const Pose2 before = robots_[i].belief.x_hat;
      robots_[i] = osb_robot_propagate(robots_[i], inputs[i], qs[i], dt);
      if (recorder_) F.block<3, 3>(3 * i, 3 * i) = motion_jacobians(robots_[i].belief.x_hat, before).F;
    }
    if (recorder_) recorder_->end_step(F);
  }

  bool update(const RelPosMeasurement& m, const Delivery& d, TruthView) override {
    validate(m);
    const int n = robot_count();
    detail::check_robot(m.observer_id, n, "osb update");
    detail::check_robot(m.target_id, n, "osb update");
    if (!d.uplink_observer || !d.uplink_target) return false;

    auto& ra = robots_[m.observer_id];
    auto& rb = robots_[m.target_id];
    const UpdateBundleA a{m.observer_id, ra.belief.x_hat, ra.belief.P_own, m.y, m.R, ra.phi};
    const UpdateBundleB b{m.target_id, rb.belief.x_hat, rb.belief.P_own, rb.phi};
    const int pair[2] = {m.observer_id, m.target_id};
    const auto u = detail::updating_set(n, pair, d, opt_);

    // Uploads arrived: the server absorbs Phi_a, Phi_b whether or not the update goes ahead.
    OsbServerStep st = (u && static_cast<int>(u->size()) != n) ? osb_schmidt_partial_update(a, b, cross_, *u)
                                                               : osb_server_corrections(a, b, cross_);
    ra.phi.setIdentity();
    rb.phi.setIdentity();
    if (!u) {
      cross_ = std::move(st.cross);
      return false;
    }
    if (recorder_) {
      const PairJacobians h = meas_jacobians(ra.belief.x_hat, rb.belief.x_hat);
      recorder_->add_measurement(detail::pair_row(n, m.observer_id, h.Hi, m.target_id, h.Hj));
    }
    cross_ = static_cast<int>(u->size()) == n ? osb_server_update_crosscov(std::move(st.cross), st.pre_gains, st.S)
                                              : std::move(st.cross);
    for (const auto& msg : st.messages) robots_[msg.robot_id] = osb_robot_apply(robots_[msg.robot_id], msg);
    return true;
  }

  bool update_landmark(const LandmarkMeasurement& m, const Delivery& d, TruthView) override {
    validate(m);
    const int n = robot_count();
    detail::check_robot(m.observer_id, n, "osb landmark update");
    if (!d.uplink_observer) return false;
    const int self[1] = {m.observer_id};
    const auto u = detail::updating_set(n, self, d, opt_);
    auto& ra = robots_[m.observer_id];
    const LandmarkBundle a{m.observer_id, ra.belief.x_hat, ra.belief.P_own, m.landmark, m.y, m.R, ra.phi};
    if (!u) {
      osb_server_absorb(cross_, m.observer_id, ra.phi);
      ra.phi.setIdentity();
      return false;
    }
    if (recorder_) recorder_->add_measurement(detail::single_row(n, m.observer_id, landmark_jacobian(ra.belief.x_hat, m.landmark)));
    OsbServerStep st = static_cast<int>(u->size()) == n ? osb_landmark_update(a, cross_)
                                                        : osb_landmark_update(a, cross_, *u);
    ra.phi.setIdentity();
    cross_ = std::move(st.cross);
    for (const auto& msg : st.messages) robots_[msg.robot_id] = osb_robot_apply(robots_[msg.robot_id], msg);
    return true;
  }

  std::vector<Pose2> estimates() const override {
    std::vector<Pose2> out;
    for (const auto& r : robots_) out.push_back(r.belief.x_hat);
    return out;
  }
  Mat3 covariance(int i) const override { return robots_.at(static_cast<std::size_t>(i)).belief.P_own; }

  /// Current joint covariance P_ij = Phi_i Pi_ij Phi_j^T.
  JointBelief joint() const override {
    const int n = robot_count();
    JointBelief jb;
    jb.P = MatN::Zero(3 * n, 3 * n);
    for (int i = 0; i < n; ++i) {
      jb.x_hat.push_back(robots_[i].belief.x_hat);
      jb.P.block<3, 3>(3 * i, 3 * i) = robots_[i].belief.P_own;
      for (int j = i + 1; j < n; ++j) {
        const Mat3 pij = robots_[i].phi * cross_.stored(i, j) * robots_[j].phi.transpose();
        jb.P.block<3, 3>(3 * i, 3 * j) = pij;
        jb.P.block<3, 3>(3 * j, 3 * i) = pij.transpose();
      }
    }
    return jb;
  }

  const std::vector<OsbRobot>& robots() const { return robots_; }

 private:
  TeamOptions opt_;
  std::vector<OsbRobot> robots_;
  CrossCovTable cross_;
};

class NaiveTeam final : public TeamEstimator {
 public:
  NaiveTeam(const TeamInit& init, const TeamOptions&) {
    detail::check_init(init);
    for (int i = 0; i < static_cast<int>(init.x0.size()); ++i) {
      beliefs_.push_back(make_belief(i, init.x0[i], init.P0[i], Frame::original));
    }
  }

  EstimatorKind kind() const override { return EstimatorKind::naive; }
  int robot_count() const override { return static_cast<int>(beliefs_.size()); }

  void propagate(std::span<const MotionInput> inputs, std::span<const ProcessNoise> qs, double dt,
                 TruthView) override {
    if (inputs.size() != beliefs_.size() || qs.size() != beliefs_.size()) {
      throw Error("naive propagate: one input and one Q per robot expected");
    }
    for (std::size_t i = 0; i < beliefs_.size(); ++i) beliefs_[i] = original_robot_propagate(beliefs_[i], inputs[i], qs[i], dt);
  }

  bool update(const RelPosMeasurement& m, const Delivery&, TruthView) override {
    validate(m);
    detail::check_robot(m.observer_id, robot_count(), "naive update");
    detail::check_robot(m.target_id, robot_count(), "naive update");
    auto [a, b] = naive_update(beliefs_[m.observer_id], beliefs_[m.target_id], m);
    beliefs_[m.observer_id] = a;
    beliefs_[m.target_id] = b;
    return true;
  }

  bool update_landmark(const LandmarkMeasurement& m, const Delivery&, TruthView) override {
    validate(m);
    detail::check_robot(m.observer_id, robot_count(), "naive landmark update");
    beliefs_[m.observer_id] = naive_landmark_update(beliefs_[m.observer_id], m);
    return true;
  }

  std::vector<Pose2> estimates() const override {
    std::vector<Pose2> out;
    for (const auto& b : beliefs_) out.push_back(b.x_hat);
    return out;
  }
  Mat3 covariance(int i) const override { return beliefs_.at(static_cast<std::size_t>(i)).P_own; }
  JointBelief joint() const override {
    std::vector<Mat3> blocks;
    for (const auto& b : beliefs_) blocks.push_back(b.P_own);
    return {estimates(), detail::joint_covariance(blocks)};
  }

 private:
  std::vector<RobotBelief> beliefs_;
};

inline std::unique_ptr<TeamEstimator> make_team(EstimatorKind kind, const TeamInit& init, const TeamOptions& opt) {
  switch (kind) {
    case EstimatorKind::central: return std::make_unique<JointTeam>(init, JacobianSource::ground_truth, opt);
    case EstimatorKind::ekf: return std::make_unique<JointTeam>(init, JacobianSource::estimate, opt);
    case EstimatorKind::tekf: return std::make_unique<TransformedJointTeam>(init, opt);
    case EstimatorKind::osb: return std::make_unique<OsbTeam>(init, opt);
    case EstimatorKind::tsb: return std::make_unique<TsbTeam>(init, opt);
    case EstimatorKind::naive: return std::make_unique<NaiveTeam>(init, opt);
  }
  throw Error("make_team: unknown estimator kind");
}

}  // namespace dcl::filters
