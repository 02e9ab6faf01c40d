#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dcl/sim/metrics.hpp"

// CSV export of run logs and metrics, plus readers for the files the
// observability audit consumes. Every file is written to a temporary sibling
// and renamed into place.

namespace dcl::sim::io {

namespace fs = std::filesystem;

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline void append_pose(std::string& s, const Pose2& x) {
  s += num(x.position.x()) + "," + num(x.position.y()) + "," + num(x.heading.radians());
}

inline std::string truth_csv(const RunLog& log) {
  std::string s = "step,robot,x,y,theta\n";
  for (std::size_t k = 0; k < log.truth.size(); ++k) {
    for (int i = 0; i < log.robot_count; ++i) {
      s += std::to_string(k) + "," + std::to_string(i) + ",";
      append_pose(s, log.truth[k][i]);
      s += "\n";
    }
  }
  return s;
}

inline std::string beliefs_csv(const std::vector<std::vector<BeliefRecord>>& beliefs) {
  std::string s = "step,robot,x,y,theta,P00,P01,P02,P10,P11,P12,P20,P21,P22\n";
  for (std::size_t k = 0; k < beliefs.size(); ++k) {
    for (std::size_t i = 0; i < beliefs[k].size(); ++i) {
      const auto& b = beliefs[k][i];
      s += std::to_string(k) + "," + std::to_string(i) + ",";
      append_pose(s, b.x);
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) s += "," + num(b.P(r, c));
      }
      s += "\n";
    }
  }
  return s;
}

inline std::string events_csv(const RunLog& log) {
  std::string s = "step,type,payload\n";
  for (const auto& e : log.events) s += std::to_string(e.step) + "," + e.type + ",\"" + e.payload + "\"\n";
  return s;
}

inline std::string jacobians_csv(const obscheck::ObsMatrixSeq& seq) {
  std::string s = "# robots=" + std::to_string(seq.robot_count) + " frame=" + filters::to_string(seq.frame) + "\n";
  s += "# anchors=";
  for (std::size_t i = 0; i < seq.anchors.size(); ++i) {
    s += (i ? " " : "") + num(seq.anchors[i].x()) + " " + num(seq.anchors[i].y());
  }
  s += "\nstep,block,row";
  for (int c = 0; c < 3 * seq.robot_count; ++c) s += ",c" + std::to_string(c);
  s += "\n";
  auto rows = [&](std::size_t k, const char* block, const MatN& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      s += std::to_string(k) + "," + block + "," + std::to_string(r);
      for (Eigen::Index c = 0; c < m.cols(); ++c) s += "," + num(m(r, c));
      s += "\n";
    }
  };
  for (std::size_t k = 0; k < seq.steps.size(); ++k) {
    rows(k, "H", seq.steps[k].H);
    if (k + 1 < seq.steps.size()) rows(k, "F", seq.steps[k].F);
  }
  return s;
}

/// Writes truth, events and per-estimator posterior/prior/Jacobian files into `dir`.
inline void write_run_log(const fs::path& dir, const RunLog& log) {
  write_atomic(dir / "truth.csv", truth_csv(log));
  write_atomic(dir / "events.csv", events_csv(log));
  for (const auto& el : log.estimators) {
    const std::string name = filters::to_string(el.kind);
    write_atomic(dir / ("estimates_" + name + ".csv"), beliefs_csv(el.posteriors));
    write_atomic(dir / ("priors_" + name + ".csv"), beliefs_csv(el.priors));
    if (el.jacobians) write_atomic(dir / ("jacobians_" + name + ".csv"), jacobians_csv(*el.jacobians));
  }
}

inline std::string metrics_csv(std::span<const EstimatorMetrics> rows) {
  std::string s = "estimator,config_id,metric,component,value\n";
  for (const auto& m : rows) {
    const std::string head = filters::to_string(m.kind) + "," + m.config_id + ",";
    s += head + "rmse,position," + num(m.rmse_position) + "\n";
    s += head + "rmse,orientation," + num(m.rmse_orientation) + "\n";
    s += head + "nees,position," + num(m.nees_position) + "\n";
    s += head + "nees,orientation," + num(m.nees_orientation) + "\n";
  }
  return s;
}

inline std::string series_csv(std::span<const EstimatorMetrics> rows, double dt) {
  std::string s = "estimator,config_id,step,time,rmse_position,rmse_orientation,nees_position,nees_orientation\n";
  for (const auto& m : rows) {
    for (std::size_t k = 0; k < m.series_rmse_position.size(); ++k) {
      s += filters::to_string(m.kind) + "," + m.config_id + "," + std::to_string(k + 1) + "," +
           num(static_cast<double>(k + 1) * dt) + "," + num(m.series_rmse_position[k]) + "," +
           num(m.series_rmse_orientation[k]) + "," + num(m.series_nees_position[k]) + "," +
           num(m.series_nees_orientation[k]) + "\n";
    }
  }
  return s;
}

// ---------------------------------------------------------------- readers

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const fs::path& path, long line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

inline std::ifstream open(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

/// Reads an estimates_/priors_ file back into [step][robot] records.
inline std::vector<std::vector<BeliefRecord>> read_beliefs(const fs::path& path) {
  auto in = detail::open(path);
  std::vector<std::vector<BeliefRecord>> out;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 14) throw Error(path.string() + ":" + std::to_string(n) + ": expected 14 columns");
    const auto step = static_cast<std::size_t>(detail::parse_double(f[0], path, n));
    const auto robot = static_cast<std::size_t>(detail::parse_double(f[1], path, n));
    if (step >= out.size()) out.resize(step + 1);
    if (robot != out[step].size()) throw Error(path.string() + ":" + std::to_string(n) + ": robots out of order");
    BeliefRecord b{Pose2(detail::parse_double(f[2], path, n), detail::parse_double(f[3], path, n),
                         detail::parse_double(f[4], path, n))};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) b.P(r, c) = detail::parse_double(f[5 + 3 * r + c], path, n);
    }
    out[step].push_back(b);
  }
  return out;
}

/// Reads a jacobians_ file back into an observability sequence.
inline obscheck::ObsMatrixSeq read_jacobians(const fs::path& path) {
  auto in = detail::open(path);
  obscheck::ObsMatrixSeq seq;
  seq.robot_count = -1;
  std::map<std::size_t, std::vector<VecN>> h_rows, f_rows;
  std::size_t last_step = 0;
  std::string line;
  long n = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        if (tok.rfind("robots=", 0) == 0) {
          seq.robot_count = static_cast<int>(detail::parse_double(tok.substr(7), path, n));
        } else if (tok.rfind("frame=", 0) == 0) {
          const std::string f = tok.substr(6);
          if (f != "original" && f != "transformed") throw Error(path.string() + ": unknown frame '" + f + "'");
          seq.frame = f == "transformed" ? filters::Frame::transformed : filters::Frame::original;
        } else if (tok.rfind("anchors=", 0) == 0) {
          std::vector<double> vals;
          if (tok.size() > 8) vals.push_back(detail::parse_double(tok.substr(8), path, n));
          while (ss >> tok) vals.push_back(detail::parse_double(tok, path, n));
          if (vals.size() % 2 != 0) throw Error(path.string() + ": odd number of anchor coordinates");
          for (std::size_t i = 0; i < vals.size(); i += 2) seq.anchors.emplace_back(vals[i], vals[i + 1]);
        }
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    if (seq.robot_count < 1) throw Error(path.string() + ": missing '# robots=' header");
    const auto f = detail::split(line, ',');
    const std::size_t dim = 3 * static_cast<std::size_t>(seq.robot_count);
    if (f.size() != dim + 3) throw Error(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(dim + 3) + " columns");
    const auto step = static_cast<std::size_t>(detail::parse_double(f[0], path, n));
    VecN row(static_cast<Eigen::Index>(dim));
    for (std::size_t c = 0; c < dim; ++c) row(static_cast<Eigen::Index>(c)) = detail::parse_double(f[3 + c], path, n);
    if (f[1] == "H") {
      h_rows[step].push_back(row);
    } else if (f[1] == "F") {
      f_rows[step].push_back(row);
    } else {
      throw Error(path.string() + ":" + std::to_string(n) + ": unknown block '" + f[1] + "'");
    }
    last_step = std::max(last_step, step);
  }
  if (seq.robot_count < 1) throw Error(path.string() + ": missing '# robots=' header");
  if (seq.frame == filters::Frame::original && static_cast<int>(seq.anchors.size()) != seq.robot_count) {
    throw Error(path.string() + ": anchors missing for original-frame sequence");
  }
  const Eigen::Index dim = 3 * seq.robot_count;
  auto stack = [&](const std::vector<VecN>& rows) {
    MatN m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    return m;
  };
  for (std::size_t k = 0; k <= last_step; ++k) {
    obscheck::ObsStep st{MatN::Identity(dim, dim), MatN(0, dim)};
    if (auto it = h_rows.find(k); it != h_rows.end()) st.H = stack(it->second);
    if (auto it = f_rows.find(k); it != f_rows.end()) {
      if (static_cast<Eigen::Index>(it->second.size()) != dim) {
        throw Error(path.string() + ": step " + std::to_string(k) + " F has wrong row count");
      }
      st.F = stack(it->second);
    }
    seq.steps.push_back(std::move(st));
  }
  return seq;
}

}  // namespace dcl::sim::io
