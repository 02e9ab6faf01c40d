#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "dcl/filters/joint_ekf.hpp"
#include "dcl/filters/types.hpp"

// Block algebra shared by the server-based filters. The server sees the own
// blocks of the robots taking part in a measurement (shipped in their bundles)
// plus its cross-covariance table; from these it forms, for every robot i,
// C_i = sum_p P_ip H_p^T over participants p, and the innovation covariance S.

namespace dcl::filters {

struct Participant {
  int robot = 0;
  Mat3 own = Mat3::Zero();  // P_pp as reported by the robot
  Mat23 H = Mat23::Zero();
};

struct CrossTerms {
  std::vector<Mat32> C;
  Mat2 S = Mat2::Zero();
  Mat2 S_inv = Mat2::Zero();
};

inline CrossTerms cross_terms(const CrossCovTable& cross, std::span<const Participant> parts, const Mat2& R) {
  const int n = cross.robot_count();
  if (parts.empty() || parts.size() > 2) throw Error("cross_terms: one or two participants expected");
  for (const auto& p : parts) detail::check_robot(p.robot, n, "cross_terms");
  if (parts.size() == 2 && parts[0].robot == parts[1].robot) throw Error("cross_terms: duplicate participant");

  auto block = [&](int i, const Participant& p) -> Mat3 { return i == p.robot ? p.own : cross.block(i, p.robot); };

  CrossTerms t;
  t.S = R;
  for (const auto& p : parts) {
    for (const auto& q : parts) t.S += p.H * block(p.robot, q) * q.H.transpose();
  }
  t.S = symmetrized(t.S);
  t.S_inv = detail::inverse_innovation(t.S);
  t.C.resize(n);
  for (int i = 0; i < n; ++i) {
    Mat32 c = Mat32::Zero();
    for (const auto& p : parts) c += block(i, p) * p.H.transpose();
    t.C[i] = c;
  }
  return t;
}

/// Optimal gains K_i = C_i S^-1 for robots in `members` (all robots when empty), zero otherwise.
inline std::vector<Mat32> gains_for(const CrossTerms& t, std::span<const int> members) {
  std::vector<Mat32> k(t.C.size(), Mat32::Zero());
  if (members.empty()) {
    for (std::size_t i = 0; i < t.C.size(); ++i) k[i] = t.C[i] * t.S_inv;
  } else {
    for (int i : members) k.at(static_cast<std::size_t>(i)) = t.C[i] * t.S_inv;
  }
  return k;
}

/// P_ij <- P_ij - K_i S K_j^T for every stored pair.
inline void optimal_table_update(CrossCovTable& cross, std::span<const Mat32> gains, const Mat2& S) {
  const int n = cross.robot_count();
  if (static_cast<int>(gains.size()) != n) throw Error("cross-covariance update: one gain per robot expected");
  for (int i = 0; i < n; ++i) {
    const Mat32 ks = gains[i] * S;
    for (int j = i + 1; j < n; ++j) cross.stored(i, j) -= ks * gains[j].transpose();
  }
}

/// Generalized Joseph form for a gain set with some rows forced to zero:
/// P_ij <- P_ij - K_i C_j^T - C_i K_j^T + K_i S K_j^T.
inline void joseph_table_update(CrossCovTable& cross, std::span<const Mat32> gains, std::span<const Mat32> C,
                                const Mat2& S) {
  const int n = cross.robot_count();
  for (int i = 0; i < n; ++i) {
    const Mat32 ks = gains[i] * S;
    for (int j = i + 1; j < n; ++j) {
      cross.stored(i, j) += -gains[i] * C[j].transpose() - C[i] * gains[j].transpose() + ks * gains[j].transpose();
    }
  }
}

/// Sorted, de-duplicated, range-checked updating set.
inline std::vector<int> normalize_members(std::span<const int> members, int n) {
  if (members.empty()) throw Error("partial update: the updating set is empty");
  std::vector<int> u(members.begin(), members.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  for (int i : u) detail::check_robot(i, n, "partial update");
  return u;
}

}  // namespace dcl::filters
