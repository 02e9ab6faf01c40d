#pragma once

#include <span>
#include <vector>

#include "dcl/geom.hpp"
#include "dcl/models.hpp"

// Per-robot linear time-varying change of error coordinates z = T(p_hat) x_tilde
// with T = [[I2, -J p_hat], [0, 1]]. Under it the propagation Jacobian becomes
// the identity, so cross-covariances between robots stop depending on the
// state estimate between updates.

namespace dcl {

class XformMat {
 public:
  explicit XformMat(const Vec2& anchor) : anchor_(anchor) {
    if (!anchor.allFinite()) throw Error("xform_matrix: non-finite anchor");
  }

  const Vec2& anchor() const { return anchor_; }

  Mat3 matrix() const {
    Mat3 t = Mat3::Identity();
    t.topRightCorner<2, 1>() = -skew_J() * anchor_;
    return t;
  }

  /// Closed form: [[I2, J p_hat], [0, 1]].
  Mat3 inverse() const {
    Mat3 t = Mat3::Identity();
    t.topRightCorner<2, 1>() = skew_J() * anchor_;
    return t;
  }

 private:
  Vec2 anchor_;
};

inline XformMat xform_matrix(const Vec2& p_hat) { return XformMat(p_hat); }

struct FDecomposition {
  Mat3 left;   // T(p_prior)^-1
  Mat3 right;  // T(p_post)
};

/// F_i = T(p_hat_{k|k-1})^-1 T(p_hat_{k-1|k-1}).
inline FDecomposition decompose_F(const Pose2& x_prior, const Pose2& x_post) {
  return {xform_matrix(x_prior.position).inverse(), xform_matrix(x_post.position).matrix()};
}

/// Transformed propagation Jacobians. F is the identity by construction.
inline MotionJacobians transformed_motion_jacobians(const Pose2& x_prior, const Pose2& x_post) {
  MotionJacobians j{Mat3::Identity(), Mat3::Identity()};
  j.G.topLeftCorner<2, 2>() = rot(x_post.heading);
  j.G.topRightCorner<2, 1>() = -skew_J() * x_prior.position;
  return j;
}

/// H T^-1 for the relative-position measurement. Both third columns depend only on p_hat_j.
inline PairJacobians transformed_meas_jacobians(const Pose2& xi_hat, const Pose2& xj_hat) {
  const Mat2 rt = rot(xi_hat.heading).transpose();
  const Vec2 jp = skew_J() * xj_hat.position;
  PairJacobians h;
  h.Hi.leftCols<2>() = -rt;
  h.Hi.col(2) = -rt * jp;
  h.Hj.leftCols<2>() = rt;
  h.Hj.col(2) = rt * jp;
  return h;
}

inline Mat23 transformed_landmark_jacobian(const Pose2& xi_hat, const Vec2& landmark) {
  const Mat2 rt = rot(xi_hat.heading).transpose();
  Mat23 h;
  h.leftCols<2>() = -rt;
  h.col(2) = -rt * skew_J() * landmark;
  return h;
}

namespace detail {
template <bool kForward>
MatN congruence_blocks(const MatN& P, std::span<const Vec2> anchors) {
  const auto n = static_cast<Eigen::Index>(anchors.size());
  if (P.rows() != 3 * n || P.cols() != 3 * n) {
    throw Error("covariance is " + shape_string(P.rows(), P.cols()) + " but " + std::to_string(anchors.size()) +
                " anchors were given");
  }
  std::vector<Mat3> t;
  t.reserve(anchors.size());
  for (const auto& a : anchors) t.push_back(kForward ? xform_matrix(a).matrix() : xform_matrix(a).inverse());
  MatN out(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.block<3, 3>(3 * i, 3 * j) = t[i] * P.block<3, 3>(3 * i, 3 * j) * t[j].transpose();
    }
  }
  return out;
}
}  // namespace detail

/// Block (i,j) -> T_i P_ij T_j^T.
inline MatN to_transformed_cov(const MatN& P, std::span<const Vec2> anchors) {
  return detail::congruence_blocks<true>(P, anchors);
}

/// Block (i,j) -> T_i^-1 P_ij T_j^-T.
inline MatN from_transformed_cov(const MatN& calP, std::span<const Vec2> anchors) {
  return detail::congruence_blocks<false>(calP, anchors);
}

}  // namespace dcl
