#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "dcl/filters/types.hpp"

// Observability audits of recorded linearizations. The local observability
// matrix over a run is [H_1; H_2 F_1; ...; H_k F_{k-1} ... F_1]; a consistent
// estimator for relative-only measurements must leave three directions
// (global translation and yaw) in its null space.

namespace dcl::obscheck {

using filters::Frame;

/// One time step: the measurement Jacobians stacked at that step (possibly zero
/// rows) and the propagation Jacobian taking this step to the next.
struct ObsStep {
  MatN F;
  MatN H;
};

struct ObsMatrixSeq {
  int robot_count = 0;
  Frame frame = Frame::original;
  std::vector<ObsStep> steps;
  /// Robot positions used for linearization at the first step; anchors the
  /// standard unobservable basis.
  std::vector<Vec2> anchors;
};

inline MatN build_obs_matrix(const ObsMatrixSeq& seq) {
  if (seq.steps.empty()) throw Error("build_obs_matrix: empty sequence");
  const Eigen::Index dim = 3 * seq.robot_count;
  Eigen::Index rows = 0;
  for (std::size_t k = 0; k < seq.steps.size(); ++k) {
    const auto& s = seq.steps[k];
    if (s.H.rows() > 0 && s.H.cols() != dim) {
      throw Error("build_obs_matrix: step " + std::to_string(k) + " H is " + shape_string(s.H.rows(), s.H.cols()) +
                  ", expected " + std::to_string(dim) + " columns");
    }
    if (k + 1 < seq.steps.size() && (s.F.rows() != dim || s.F.cols() != dim)) {
      throw Error("build_obs_matrix: step " + std::to_string(k) + " F is " + shape_string(s.F.rows(), s.F.cols()));
    }
    rows += s.H.rows();
  }
  MatN O(rows, dim);
  MatN phi = MatN::Identity(dim, dim);
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < seq.steps.size(); ++k) {
    const auto& s = seq.steps[k];
    if (s.H.rows() > 0) {
      O.middleRows(r, s.H.rows()).noalias() = s.H * phi;
      r += s.H.rows();
    }
    if (k + 1 < seq.steps.size()) phi = s.F * phi;
  }
  return O;
}

/// ||O B||_max / max(1, ||O||_max).
inline double nullspace_residual(const MatN& O, const MatN& B) {
  if (B.cols() == 0 || O.rows() == 0) return 0.0;
  if (O.cols() != B.rows()) throw Error("nullspace_residual: incompatible dimensions");
  const double scale = std::max(1.0, O.cwiseAbs().maxCoeff());
  return (O * B).cwiseAbs().maxCoeff() / scale;
}

struct RankCall {
  int unobs_dim = 0;
  /// False when no clear gap separates the kept and dropped singular values.
  bool determinate = true;
  VecN singular_values;
};

/// Singular values of O in decreasing order (length min(rows, cols)).
inline VecN singular_values(const MatN& O) {
  if (O.rows() == 0 || O.cols() == 0) return VecN();
  if (O.rows() > 2 * O.cols()) {
    // Tall: O and the R factor of its QR share singular values.
    Eigen::HouseholderQR<MatN> qr(O);
    const MatN r = qr.matrixQR().topRows(O.cols()).triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<MatN>(r).singularValues();
  }
  return Eigen::JacobiSVD<MatN>(O).singularValues();
}

/// cols(O) - rank(O), with rank counting singular values above rel_tol * sigma_max.
/// A call is determinate only if sigma_r / sigma_{r+1} > min_gap at the cut.
inline RankCall numerical_unobs_dim(const MatN& O, double rel_tol = 1e-8, double min_gap = 1e4) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw Error("numerical_unobs_dim: rel_tol must lie in (0, 1)");
  RankCall call;
  call.singular_values = singular_values(O);
  const auto& sv = call.singular_values;
  int rank = 0;
  if (sv.size() > 0 && sv(0) > 0.0) {
    const double cut = rel_tol * sv(0);
    while (rank < sv.size() && sv(rank) > cut) ++rank;
    if (rank < sv.size() && sv(rank) > 0.0) call.determinate = sv(rank - 1) / sv(rank) > min_gap;
  }
  call.unobs_dim = static_cast<int>(O.cols()) - rank;
  return call;
}

/// Per robot: [I2, J p_hat_i; 0, 1], stacked.
inline MatN standard_unobs_basis(std::span<const Vec2> positions) {
  MatN b = MatN::Zero(3 * positions.size(), 3);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    b.block<3, 3>(3 * i, 0).setIdentity();
    b.block<2, 1>(3 * i, 2) = skew_J() * positions[i];
  }
  return b;
}

/// N stacked copies of I3.
inline MatN transformed_unobs_basis(int robot_count) {
  if (robot_count < 1) throw Error("transformed_unobs_basis: robot_count must be positive");
  MatN b(3 * robot_count, 3);
  for (int i = 0; i < robot_count; ++i) b.block<3, 3>(3 * i, 0).setIdentity();
  return b;
}

/// The basis a consistent estimator in the sequence's frame should leave unobservable.
inline MatN expected_unobs_basis(const ObsMatrixSeq& seq) {
  return seq.frame == Frame::transformed ? transformed_unobs_basis(seq.robot_count)
                                         : standard_unobs_basis(seq.anchors);
}

/// delta_p_{i,k} = sum_{l<=k} (p_hat_{l|l} - p_hat_{l|l-1}); indexed [step][robot].
inline std::vector<std::vector<Vec2>> delta_p_series(const std::vector<std::vector<Vec2>>& priors,
                                                     const std::vector<std::vector<Vec2>>& posteriors) {
  if (priors.size() != posteriors.size()) throw Error("delta_p_series: prior/posterior step counts differ");
  std::vector<std::vector<Vec2>> out;
  out.reserve(priors.size());
  std::vector<Vec2> acc;
  for (std::size_t k = 0; k < priors.size(); ++k) {
    if (priors[k].size() != posteriors[k].size()) throw Error("delta_p_series: robot counts differ");
    if (acc.empty()) acc.assign(priors[k].size(), Vec2::Zero());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += posteriors[k][i] - priors[k][i];
    out.push_back(acc);
  }
  return out;
}

/// Collects Jacobians step by step while a filter runs.
class ObsRecorder {
 public:
  ObsRecorder(int robot_count, Frame frame, std::vector<Vec2> anchors) {
    seq_.robot_count = robot_count;
    seq_.frame = frame;
    seq_.anchors = std::move(anchors);
    seq_.steps.push_back(blank());
  }

  void add_measurement(const MatN& H) {
    auto& cur = seq_.steps.back().H;
    MatN stacked(cur.rows() + H.rows(), 3 * seq_.robot_count);
    stacked << cur, H;
    cur = std::move(stacked);
  }

  /// Closes the current step with its propagation Jacobian and opens the next.
  void end_step(const MatN& F) {
    seq_.steps.back().F = F;
    seq_.steps.push_back(blank());
  }

  const ObsMatrixSeq& sequence() const { return seq_; }

 private:
  ObsStep blank() const {
    const Eigen::Index dim = 3 * seq_.robot_count;
    return {MatN::Identity(dim, dim), MatN(0, dim)};
  }

  ObsMatrixSeq seq_;
};

}  // namespace dcl::obscheck
