#pragma once

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dcl/geom.hpp"

// Reader for the UTIAS multi-robot cooperative localization and mapping
// (MRCLAM) flat files: whitespace-separated numeric columns with '#' comments.
//
//   Barcodes.dat               subject  barcode
//   Landmark_Groundtruth.dat   subject  x  y  [x_std  y_std]
//   RobotN_Odometry.dat        time  forward_velocity  angular_velocity
//   RobotN_Measurement.dat     time  barcode  range  bearing
//   RobotN_Groundtruth.dat     time  x  y  orientation

namespace dcl::mrclam {

namespace fs = std::filesystem;

struct OdometrySample {
  double t = 0.0;
  double v = 0.0;
  double omega = 0.0;
};

struct MeasurementSample {
  double t = 0.0;
  int barcode = 0;
  int subject = 0;  // resolved through the barcode table
  double range = 0.0;
  double bearing = 0.0;
};

struct GroundTruthSample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct RobotSeries {
  std::vector<OdometrySample> odometry;
  std::vector<MeasurementSample> measurements;
  std::vector<GroundTruthSample> groundtruth;
};

struct DatasetSubset {
  fs::path source;
  std::vector<RobotSeries> robots;  // index 0 is Robot1
  std::map<int, Vec2> landmarks;    // subject -> position
  std::map<int, int> barcodes;      // barcode -> subject
  long unknown_barcodes = 0;        // measurements excluded because the barcode is not in the table

  int robot_count() const { return static_cast<int>(robots.size()); }
  bool is_robot(int subject) const { return subject >= 1 && subject <= robot_count(); }
};

namespace detail {

/// Numeric rows of a '#'-commented file; each row must have between min_cols and max_cols columns.
inline std::vector<std::vector<double>> read_table(const fs::path& path, std::size_t min_cols, std::size_t max_cols) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const char* p = line.c_str();
    std::vector<double> row;
    while (true) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (*p == '\0') break;
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(p, &end);
      if (end == p || errno == ERANGE || !(*end == '\0' || *end == ' ' || *end == '\t' || *end == '\r')) {
        throw Error(path.string() + ":" + std::to_string(n) + ": malformed number in '" + line + "'");
      }
      row.push_back(v);
      p = end;
    }
    if (row.empty()) continue;
    if (row.size() < min_cols || row.size() > max_cols) {
      throw Error(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(min_cols) +
                  (max_cols != min_cols ? "-" + std::to_string(max_cols) : "") + " columns, found " +
                  std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class T>
void check_monotone(const std::vector<T>& series, const fs::path& path) {
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].t < series[i - 1].t) {
      throw Error(path.string() + ": time decreases at data row " + std::to_string(i + 1));
    }
  }
}

inline int as_int(double v, const fs::path& path) {
  const auto i = static_cast<int>(std::lround(v));
  if (std::abs(v - i) > 1e-9) throw Error(path.string() + ": expected an integer id, found " + std::to_string(v));
  return i;
}

}  // namespace detail

inline std::vector<std::string> expected_files(int robot_count) {
  std::vector<std::string> files{"Barcodes.dat", "Landmark_Groundtruth.dat"};
  for (int r = 1; r <= robot_count; ++r) {
    const std::string base = "Robot" + std::to_string(r) + "_";
    for (const char* kind : {"Odometry.dat", "Measurement.dat", "Groundtruth.dat"}) files.push_back(base + kind);
  }
  return files;
}

inline DatasetSubset parse_subset(const fs::path& dir, int robot_count = 5) {
  if (robot_count < 1) throw Error("parse_subset: robot_count must be positive");
  std::string missing;
  for (const auto& f : expected_files(robot_count)) {
    if (!fs::is_regular_file(dir / f)) missing += (missing.empty() ? "" : ", ") + f;
  }
  if (!missing.empty()) throw Error("dataset directory " + dir.string() + " is missing: " + missing);

  DatasetSubset ds;
  ds.source = dir;
  for (const auto& row : detail::read_table(dir / "Barcodes.dat", 2, 2)) {
    ds.barcodes[detail::as_int(row[1], dir / "Barcodes.dat")] = detail::as_int(row[0], dir / "Barcodes.dat");
  }
  for (const auto& row : detail::read_table(dir / "Landmark_Groundtruth.dat", 3, 5)) {
    ds.landmarks[detail::as_int(row[0], dir / "Landmark_Groundtruth.dat")] = Vec2(row[1], row[2]);
  }

  ds.robots.resize(static_cast<std::size_t>(robot_count));
  for (int r = 0; r < robot_count; ++r) {
    auto& rs = ds.robots[r];
    const std::string base = "Robot" + std::to_string(r + 1) + "_";

    const auto odo_path = dir / (base + "Odometry.dat");
    for (const auto& row : detail::read_table(odo_path, 3, 3)) rs.odometry.push_back({row[0], row[1], row[2]});
    detail::check_monotone(rs.odometry, odo_path);

    const auto gt_path = dir / (base + "Groundtruth.dat");
    for (const auto& row : detail::read_table(gt_path, 4, 4)) rs.groundtruth.push_back({row[0], row[1], row[2], row[3]});
    detail::check_monotone(rs.groundtruth, gt_path);

    const auto meas_path = dir / (base + "Measurement.dat");
    for (const auto& row : detail::read_table(meas_path, 4, 4)) {
      MeasurementSample m{row[0], detail::as_int(row[1], meas_path), 0, row[2], row[3]};
      const auto it = ds.barcodes.find(m.barcode);
      if (it == ds.barcodes.end()) {
        ++ds.unknown_barcodes;
        continue;
      }
      m.subject = it->second;
      rs.measurements.push_back(m);
    }
    detail::check_monotone(rs.measurements, meas_path);
  }
  return ds;
}

}  // namespace dcl::mrclam
