#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <vector>

#include "dcl/dcl.hpp"

namespace dcl::test {

inline Pose2 random_pose(std::mt19937_64& rng, double extent = 20.0) {
  std::uniform_real_distribution<double> pos(-extent, extent);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  return Pose2(pos(rng), pos(rng), ang(rng));
}

/// Random symmetric positive-definite n x n matrix.
inline MatN random_spd(std::mt19937_64& rng, Eigen::Index n, double floor = 0.1) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatN a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = g(rng);
  }
  return a * a.transpose() / static_cast<double>(n) + floor * MatN::Identity(n, n);
}

inline double max_abs(const MatN& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// max|a - b| / max(1, max|b|).
inline double rel_err(const MatN& a, const MatN& b) { return max_abs(a - b) / std::max(1.0, max_abs(b)); }

/// Central-difference Jacobian of f at x.
inline MatN numeric_jacobian(const std::function<VecN(const VecN&)>& f, const VecN& x, double h = 1e-6) {
  const VecN f0 = f(x);
  MatN J(f0.size(), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    VecN xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    J.col(c) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

struct TwoRobotRun {
  std::map<filters::EstimatorKind, obscheck::ObsMatrixSeq> jacobians;
  long measurements = 0;
};

/// Two robots driving arcs with relative-position measurements both ways at
/// every step; records the linearizations of central, ekf and tsb.
inline TwoRobotRun two_robot_run(std::uint64_t seed, int steps, double dt = 0.1) {
  using filters::EstimatorKind;
  sim::Rng rng(seed, sim::Stream::motion);
  sim::Rng meas(seed, sim::Stream::measurement);
  std::vector<Pose2> truth{Pose2(0.0, 0.0, rng.uniform(-kPi, kPi)), Pose2(rng.uniform(2.0, 4.0), rng.uniform(-2.0, 2.0), rng.uniform(-kPi, kPi))};
  const std::vector<MotionInput> u{{Vec2(rng.uniform(0.5, 1.0), 0.0), rng.uniform(0.1, 0.4)},
                                   {Vec2(rng.uniform(0.5, 1.0), 0.0), rng.uniform(-0.4, -0.1)}};
  const Vec3 odom_sigma(0.02, 0.0, 0.005);
  const std::vector<ProcessNoise> q(2, ProcessNoise::from_sigmas(0.02, 1e-6, 0.005));

  filters::TeamInit init{truth, std::vector<Mat3>(2, Mat3::Zero()), truth};
  filters::TeamOptions opt;
  opt.record_jacobians = true;
  const std::vector<EstimatorKind> kinds{EstimatorKind::central, EstimatorKind::ekf, EstimatorKind::tsb};
  std::vector<std::unique_ptr<filters::TeamEstimator>> teams;
  for (auto k : kinds) teams.push_back(filters::make_team(k, init, opt));

  TwoRobotRun out;
  for (int k = 1; k <= steps; ++k) {
    const std::vector<Pose2> prev = truth;
    for (int i = 0; i < 2; ++i) {
      const Vec3 eps(rng.normal(0.0, odom_sigma.x()), 0.0, rng.normal(0.0, odom_sigma.z()));
      truth[i] = propagate_pose(truth[i], u[i], dt, eps);
    }
    const filters::TruthView tv{prev, truth};
    for (auto& t : teams) t->propagate(u, q, dt, tv);
    for (int a = 0; a < 2; ++a) {
      const int b = 1 - a;
      const Vec2 rel = rel_pos_h(truth[a], truth[b]);
      const double d = rel.norm() + meas.normal(0.0, 0.2);
      if (d < 0.1) continue;
      const double phi = std::atan2(rel.y(), rel.x()) + meas.normal(0.0, 0.01);
      const RelPos z = range_bearing_to_relpos(d, phi, 0.2, 0.01);
      const RelPosMeasurement m{a, b, z.y, z.R, k};
      for (auto& t : teams) t->update(m, {}, tv);
      ++out.measurements;
    }
  }
  for (std::size_t e = 0; e < kinds.size(); ++e) out.jacobians[kinds[e]] = *teams[e]->jacobians();
  return out;
}

/// Writes a small MRCLAM-format subset: robots drive +x at 0.5 m/s for 10 s on
/// lines 2 m apart, each ranging its neighbours at 4 Hz and landmark 6 at (5, 5).
/// Subjects 1..n are robots, 6 and 7 landmarks; barcode = 10 * subject.
inline std::filesystem::path write_synthetic_subset(const std::filesystem::path& dir, int robots,
                                                    bool with_unknown_barcode = false) {
  namespace fs = std::filesystem;
  auto put = [](const fs::path& p, const std::string& s) { std::ofstream(p) << s; };
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string barcodes = "# Subject #    Barcode #\n";
  for (int s : {1, 2, 3, 4, 5, 6, 7}) barcodes += std::to_string(s) + " " + std::to_string(10 * s) + "\n";
  put(dir / "Barcodes.dat", barcodes);
  put(dir / "Landmark_Groundtruth.dat",
      "# Subject # x [m] y [m] x std-dev [m] y std-dev [m]\n6 5.0 5.0 0 0\n7 -5.0 5.0 0 0\n");
  for (int r = 1; r <= robots; ++r) {
    const double y0 = (r - 1) * 2.0;
    std::string odo = "# Time [s]    Forward Velocity [m/s]    Angular Velocity [rad/s]\n";
    std::string gt = "# Time [s]    x [m]    y [m]    orientation [rad]\n";
    std::string meas = "# Time [s]    Subject #    range [m]    bearing [rad]\n";
    for (int k = 0; k <= 670; ++k) odo += std::to_string(1000.0 + k / 67.0) + " 0.5 0.0\n";
    for (int k = 0; k <= 1000; ++k) {
      const double t = 1000.0 + k * 0.01;
      gt += std::to_string(t) + " " + std::to_string(0.5 * (t - 1000.0)) + " " + std::to_string(y0) + " 0.0\n";
    }
    for (int k = 1; k <= 40; ++k) {
      const double t = 1000.0 + k * 0.25;
      const double x = 0.5 * (t - 1000.0);
      if (r < robots) meas += std::to_string(t) + " " + std::to_string(10 * (r + 1)) + " 2.0 1.5707963\n";
      if (r > 1) meas += std::to_string(t) + " " + std::to_string(10 * (r - 1)) + " 2.0 -1.5707963\n";
      const double dx = 5.0 - x, dy = 5.0 - y0;
      meas += std::to_string(t) + " 60 " + std::to_string(std::hypot(dx, dy)) + " " +
              std::to_string(std::atan2(dy, dx)) + "\n";
    }
    if (with_unknown_barcode) meas += "1010.5 99 1.0 0.0\n";
    const std::string base = "Robot" + std::to_string(r) + "_";
    put(dir / (base + "Odometry.dat"), odo);
    put(dir / (base + "Groundtruth.dat"), gt);
    put(dir / (base + "Measurement.dat"), meas);
  }
  return dir;
}

}  // namespace dcl::test
