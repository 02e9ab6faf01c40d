#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dcl/geom.hpp"
#include "dcl/models.hpp"
#include "dcl/xform.hpp"

namespace dcl::filters {

/// Which error coordinates a covariance is expressed in.
enum class Frame { original, transformed };

inline const char* to_string(Frame f) { return f == Frame::transformed ? "transformed" : "original"; }

template <typename Derived>
Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime> symmetrized(
    const Eigen::MatrixBase<Derived>& m) {
  return 0.5 * (m + m.transpose());
}

template <typename Derived>
double min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  using Plain = Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>;
  const Plain s = symmetrized(m);
  return Eigen::SelfAdjointEigenSolver<Plain>(s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

/// A robot's own pose estimate and own-block covariance.
struct RobotBelief {
  int robot_id = 0;
  Pose2 x_hat;
  Mat3 P_own = Mat3::Zero();
  Frame frame = Frame::original;

  /// Own covariance in original error coordinates (anchored at the current estimate).
  Mat3 original_covariance() const {
    if (frame == Frame::original) return P_own;
    const Mat3 t_inv = xform_matrix(x_hat.position).inverse();
    return t_inv * P_own * t_inv.transpose();
  }
};

inline RobotBelief make_belief(int id, const Pose2& x, const Mat3& P_original, Frame frame) {
  RobotBelief b{id, x, P_original, frame};
  if (frame == Frame::transformed) {
    const Mat3 t = xform_matrix(x.position).matrix();
    b.P_own = t * P_original * t.transpose();
  }
  return b;
}

/// Server-side table of inter-robot cross-covariance blocks, stored for i < j.
/// block(j, i) is block(i, j)^T.
class CrossCovTable {
 public:
  CrossCovTable() = default;
  CrossCovTable(int robot_count, Frame frame)
      : n_(robot_count), frame_(frame), blocks_(pair_count(robot_count), Mat3::Zero()) {
    if (robot_count < 1) throw Error("CrossCovTable: robot_count must be positive");
  }

  int robot_count() const { return n_; }
  Frame frame() const { return frame_; }

  Mat3 block(int i, int j) const {
    if (i < j) return blocks_[index(i, j)];
    return blocks_[index(j, i)].transpose();
  }

  void set(int i, int j, const Mat3& m) {
    if (i < j) {
      blocks_[index(i, j)] = m;
    } else {
      blocks_[index(j, i)] = m.transpose();
    }
  }

  /// Mutable stored block for i < j.
  Mat3& stored(int i, int j) { return blocks_[index(i, j)]; }
  const Mat3& stored(int i, int j) const { return blocks_[index(i, j)]; }

 private:
  static std::size_t pair_count(int n) { return n < 2 ? 0 : static_cast<std::size_t>(n) * (n - 1) / 2; }

  std::size_t index(int i, int j) const {
    if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_ || i > j) {
      throw Error("CrossCovTable: no cross-covariance block (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    // Row-major upper triangle without the diagonal.
    return static_cast<std::size_t>(i) * (2 * n_ - i - 1) / 2 + (j - i - 1);
  }

  int n_ = 0;
  Frame frame_ = Frame::original;
  std::vector<Mat3> blocks_;
};

/// Server-to-robot correction (r_i, Gamma_i) in transformed coordinates.
struct CorrectionMessage {
  int robot_id = 0;
  Vec3 r = Vec3::Zero();
  Mat3 Gamma = Mat3::Zero();
};

/// Message from the observing robot a.
struct UpdateBundleA {
  int robot_id = 0;
  Pose2 x_hat;
  Mat3 P = Mat3::Zero();
  Vec2 y = Vec2::Zero();
  Mat2 R = Mat2::Identity();
  Mat3 phi = Mat3::Identity();  // OSB only: accumulated propagation Jacobian since last upload
};

/// Message from the observed robot b.
struct UpdateBundleB {
  int robot_id = 1;
  Pose2 x_hat;
  Mat3 P = Mat3::Zero();
  Mat3 phi = Mat3::Identity();  // OSB only
};

/// Stacked team state, used by the centralized filters and for auditing.
struct JointBelief {
  std::vector<Pose2> x_hat;
  MatN P;

  int robot_count() const { return static_cast<int>(x_hat.size()); }

  std::vector<Vec2> positions() const {
    std::vector<Vec2> out;
    out.reserve(x_hat.size());
    for (const auto& x : x_hat) out.push_back(x.position);
    return out;
  }

  VecN stacked() const {
    VecN v(3 * x_hat.size());
    for (std::size_t i = 0; i < x_hat.size(); ++i) v.segment<3>(3 * i) = x_hat[i].vector();
    return v;
  }
};

inline JointBelief make_joint(std::span<const Pose2> x, const MatN& P) {
  if (P.rows() != 3 * static_cast<Eigen::Index>(x.size()) || P.cols() != P.rows()) {
    throw Error("JointBelief: covariance is " + shape_string(P.rows(), P.cols()) + " for " +
                std::to_string(x.size()) + " robots");
  }
  return {std::vector<Pose2>(x.begin(), x.end()), P};
}

/// Stacks own blocks and cross blocks into a joint belief in original coordinates.
/// Transformed tables are mapped back with each robot's current estimate as anchor.
inline JointBelief assemble_joint(std::span<const RobotBelief> beliefs, const CrossCovTable& cross) {
  const int n = static_cast<int>(beliefs.size());
  if (n != cross.robot_count()) throw Error("assemble_joint: belief count does not match cross-covariance table");
  JointBelief jb;
  jb.P = MatN::Zero(3 * n, 3 * n);
  for (int i = 0; i < n; ++i) {
    if (beliefs[i].frame != cross.frame()) throw Error("assemble_joint: mixed frames");
    if (beliefs[i].robot_id != i) throw Error("assemble_joint: beliefs must be ordered by robot id");
    jb.x_hat.push_back(beliefs[i].x_hat);
    jb.P.block<3, 3>(3 * i, 3 * i) = beliefs[i].P_own;
    for (int j = i + 1; j < n; ++j) {
      jb.P.block<3, 3>(3 * i, 3 * j) = cross.stored(i, j);
      jb.P.block<3, 3>(3 * j, 3 * i) = cross.stored(i, j).transpose();
    }
  }
  if (cross.frame() == Frame::transformed) {
    const auto anchors = jb.positions();
    jb.P = from_transformed_cov(jb.P, anchors);
  }
  return jb;
}

}  // namespace dcl::filters
