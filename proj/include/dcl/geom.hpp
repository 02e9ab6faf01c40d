#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace dcl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using MatN = Eigen::MatrixXd;
using VecN = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = std::numbers::pi;

namespace detail {
// Anything this close above -pi is treated as the boundary and reported as +pi.
inline constexpr double kBoundarySnap = 4.0 * std::numeric_limits<double>::epsilon() * kPi;
}  // namespace detail

class Angle;
inline Angle wrap_angle(double theta);

/// Heading in radians, always in (-pi, pi].
class Angle {
 public:
  constexpr Angle() = default;
  explicit Angle(double radians);

  constexpr double radians() const { return value_; }
  explicit constexpr operator double() const { return value_; }

  friend Angle operator+(Angle a, double d) { return Angle(a.value_ + d); }
  friend Angle operator-(Angle a, double d) { return Angle(a.value_ - d); }
  /// Wrapped difference a - b.
  friend Angle operator-(Angle a, Angle b) { return Angle(a.value_ - b.value_); }
  friend bool operator==(Angle a, Angle b) { return a.value_ == b.value_; }

 private:
  struct Canonical {};
  constexpr Angle(double radians, Canonical) : value_(radians) {}
  friend Angle wrap_angle(double theta);

  double value_ = 0.0;
};

inline Angle wrap_angle(double theta) {
  if (!std::isfinite(theta)) throw Error("wrap_angle: non-finite input");
  // Already canonical: no arithmetic, so wrap(wrap(x)) == wrap(x) bit for bit.
  if (theta > -kPi && theta <= kPi) return Angle(theta, Angle::Canonical{});
  double r = std::remainder(theta, 2.0 * kPi);
  if (r <= -kPi + detail::kBoundarySnap || r > kPi) r = kPi;
  return Angle(r, Angle::Canonical{});
}

inline Angle::Angle(double radians) : value_(wrap_angle(radians).value_) {}

/// Planar rotation by theta.
inline Mat2 rot(Angle theta) {
  const double c = std::cos(theta.radians());
  const double s = std::sin(theta.radians());
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

/// The 90 degree rotation [[0,-1],[1,0]], i.e. the 2D cross-product matrix.
inline Mat2 skew_J() {
  Mat2 j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

struct Pose2 {
  Vec2 position = Vec2::Zero();
  Angle heading;

  Pose2() = default;
  Pose2(const Vec2& p, Angle h) : position(p), heading(h) {
    if (!position.allFinite()) throw Error("Pose2: non-finite position");
  }
  Pose2(double x, double y, double theta) : Pose2(Vec2(x, y), Angle(theta)) {}

  Vec3 vector() const { return {position.x(), position.y(), heading.radians()}; }
};

/// Error state x - x_hat with the heading residual wrapped.
inline Vec3 pose_error(const Pose2& truth, const Pose2& estimate) {
  const Vec2 dp = truth.position - estimate.position;
  return {dp.x(), dp.y(), (truth.heading - estimate.heading).radians()};
}

/// x_hat + delta, heading wrapped.
inline Pose2 apply_correction(const Pose2& x, const Vec3& delta) {
  return Pose2(x.position + delta.head<2>(), x.heading + delta.z());
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace dcl
