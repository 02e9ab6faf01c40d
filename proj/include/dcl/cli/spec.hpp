#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dcl/mrclam/runner.hpp"
#include "dcl/sim/scenario.hpp"

// Experiment files. Every file is YAML; unknown keys are rejected and all
// diagnostics carry the file, line and column of the offending node.

namespace dcl::cli {

namespace fs = std::filesystem;

/// Invalid experiment file; maps to exit code 2.
class SpecError : public Error {
 public:
  using Error::Error;
};

struct SweepAxis {
  std::string key;
  std::vector<YAML::Node> values;
};

struct ScenarioRun {
  std::string config_id;
  sim::ScenarioConfig config;
};

/// Simulation experiment: a base scenario, an optional Cartesian sweep over
/// scenario keys, and Monte Carlo settings.
struct ExperimentSpec {
  fs::path source;
  std::string text;  // raw file content, hashed into the manifest
  fs::path output_dir = "out";
  int runs = 1;
  unsigned threads = 0;
  bool write_run_log = true;
  std::vector<ScenarioRun> scenarios;
};

/// Dataset experiment for one subset.
struct DatasetSpec {
  fs::path source;
  std::string text;
  int subset = 0;
  fs::path output_dir = "out";
  double dt = 0.1;
  double landmark_fraction = 0.05;
  std::vector<filters::EstimatorKind> estimators{filters::EstimatorKind::central, filters::EstimatorKind::ekf,
                                                 filters::EstimatorKind::osb, filters::EstimatorKind::tsb,
                                                 filters::EstimatorKind::naive};
  mrclam::NoiseConfig noise;
  mrclam::DatasetRunOptions run;
};

/// Grid search over dataset noise parameters.
struct TuneSpec {
  fs::path source;
  std::string text;
  fs::path output_dir = "out";
  double dt = 0.1;
  double landmark_fraction = 0.05;
  filters::EstimatorKind estimator = filters::EstimatorKind::central;
  mrclam::NoiseConfig base;
  std::vector<double> odom_forward_sigma, odom_heading_sigma, range_sigma, bearing_sigma;

  std::vector<mrclam::NoiseConfig> candidates() const;
};

namespace detail {

inline std::string where(const fs::path& file, const YAML::Node& n) {
  const auto m = n.Mark();
  if (m.is_null()) return file.string();
  return file.string() + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
}

class Reader {
 public:
  explicit Reader(fs::path file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& field, const std::string& msg) const {
    throw SpecError(where(file_, n) + ": field '" + field + "': " + msg);
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, field, "expected a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, field, "cannot parse '" + n.Scalar() + "'");
    }
  }

  double positive(const YAML::Node& n, const std::string& field) const {
    const double v = scalar<double>(n, field);
    if (!(v > 0.0) || !std::isfinite(v)) fail(n, field, "must be positive");
    return v;
  }

  Vec3 vec3(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence() || n.size() != 3) fail(n, field, "expected a list of 3 numbers");
    return {scalar<double>(n[0], field), scalar<double>(n[1], field), scalar<double>(n[2], field)};
  }

  std::vector<double> doubles(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence() || n.size() == 0) fail(n, field, "expected a non-empty list");
    std::vector<double> out;
    for (const auto& v : n) out.push_back(positive(v, field));
    return out;
  }

  filters::EstimatorKind estimator(const YAML::Node& n, const std::string& field) const {
    const auto name = scalar<std::string>(n, field);
    const auto k = filters::parse_estimator(name);
    if (!k) fail(n, field, "unknown estimator '" + name + "' (expected central, ekf, tekf, osb, tsb or naive)");
    return *k;
  }

  std::vector<filters::EstimatorKind> estimators(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence() || n.size() == 0) fail(n, field, "expected a non-empty list of estimator names");
    std::vector<filters::EstimatorKind> out;
    for (const auto& v : n) {
      const auto k = estimator(v, field);
      if (std::find(out.begin(), out.end(), k) != out.end()) fail(v, field, "duplicate estimator");
      out.push_back(k);
    }
    return out;
  }

  /// Iterates a mapping, dispatching each key to `handlers` and rejecting unknown keys.
  void mapping(const YAML::Node& n, const std::string& prefix,
               const std::map<std::string, std::function<void(const YAML::Node&)>>& handlers) const {
    if (!n.IsMap()) fail(n, prefix.empty() ? "<root>" : prefix, "expected a mapping");
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      const auto it = handlers.find(key);
      if (it == handlers.end()) {
        std::string known;
        for (const auto& [k, _] : handlers) known += (known.empty() ? "" : ", ") + k;
        fail(kv.first, prefix.empty() ? key : prefix + "." + key, "unknown key (allowed: " + known + ")");
      }
      it->second(kv.second);
    }
  }

  const fs::path& file() const { return file_; }

 private:
  fs::path file_;
};

inline std::pair<YAML::Node, std::string> load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot read spec file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return {YAML::Load(text), text};
  } catch (const YAML::ParserException& ex) {
    throw SpecError(path.string() + ":" + std::to_string(ex.mark.line + 1) + ":" + std::to_string(ex.mark.column + 1) +
                    ": YAML syntax error: " + ex.msg);
  }
}

inline filters::DropoutPolicy policy(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  if (s == "abort") return filters::DropoutPolicy::abort;
  if (s == "schmidt") return filters::DropoutPolicy::schmidt;
  r.fail(n, field, "expected 'abort' or 'schmidt'");
}

inline filters::UpdateScope scope(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.scalar<std::string>(n, field);
  if (s == "all") return filters::UpdateScope::all;
  if (s == "pair") return filters::UpdateScope::pair;
  r.fail(n, field, "expected 'all' or 'pair'");
}

using ScenarioSetter = std::function<void(sim::ScenarioConfig&, const YAML::Node&)>;

/// Setters for every scenario key; shared by the base block and the sweep.
inline std::map<std::string, ScenarioSetter> scenario_setters(const Reader& r, const std::string& prefix) {
  auto f = [prefix](const char* k) { return prefix + "." + k; };
  std::map<std::string, ScenarioSetter> s;
  s["robot_count"] = [&r, f](auto& c, const auto& n) {
    c.robot_count = r.scalar<int>(n, f("robot_count"));
    if (c.robot_count < 2) r.fail(n, f("robot_count"), "must be at least 2");
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.robot_count))));
    if (side * side != c.robot_count) r.fail(n, f("robot_count"), "must be a perfect square (grid placement)");
  };
  s["duration_s"] = [&r, f](auto& c, const auto& n) { c.duration_s = r.positive(n, f("duration_s")); };
  s["dt"] = [&r, f](auto& c, const auto& n) { c.dt = r.positive(n, f("dt")); };
  s["circle_radius_m"] = [&r, f](auto& c, const auto& n) { c.circle_radius_m = r.positive(n, f("circle_radius_m")); };
  s["period_range_s"] = [&r, f](auto& c, const auto& n) {
    if (!n.IsSequence() || n.size() != 2) r.fail(n, f("period_range_s"), "expected [min, max]");
    c.period_min_s = r.positive(n[0], f("period_range_s"));
    c.period_max_s = r.positive(n[1], f("period_range_s"));
    if (c.period_max_s < c.period_min_s) r.fail(n, f("period_range_s"), "max must not be below min");
  };
  s["grid_spacing_m"] = [&r, f](auto& c, const auto& n) { c.grid_spacing_m = r.positive(n, f("grid_spacing_m")); };
  s["sensor_range_m"] = [&r, f](auto& c, const auto& n) {
    c.sensor_range_m = r.scalar<double>(n, f("sensor_range_m"));
    if (!(c.sensor_range_m >= 0.0)) r.fail(n, f("sensor_range_m"), "must be non-negative");
  };
  s["meas_rate_hz"] = [&r, f](auto& c, const auto& n) { c.meas_rate_hz = r.positive(n, f("meas_rate_hz")); };
  s["odom_sigma"] = [&r, f](auto& c, const auto& n) {
    c.odom_sigma = r.vec3(n, f("odom_sigma"));
    if (!(c.odom_sigma.array() >= 0.0).all() || !(c.odom_sigma.x() > 0.0) || !(c.odom_sigma.z() > 0.0)) {
      r.fail(n, f("odom_sigma"), "forward and heading sigmas must be positive, lateral non-negative");
    }
  };
  s["filter_lateral_sigma"] = [&r, f](auto& c, const auto& n) {
    c.filter_lateral_sigma = r.positive(n, f("filter_lateral_sigma"));
  };
  s["range_sigma"] = [&r, f](auto& c, const auto& n) { c.range_sigma = r.positive(n, f("range_sigma")); };
  s["bearing_sigma"] = [&r, f](auto& c, const auto& n) { c.bearing_sigma = r.positive(n, f("bearing_sigma")); };
  s["init_sigma"] = [&r, f](auto& c, const auto& n) {
    c.init_sigma = r.vec3(n, f("init_sigma"));
    if (!(c.init_sigma.array() >= 0.0).all()) r.fail(n, f("init_sigma"), "must be non-negative");
  };
  s["comm_success"] = [&r, f](auto& c, const auto& n) {
    c.comm_success = r.scalar<double>(n, f("comm_success"));
    if (!(c.comm_success > 0.0 && c.comm_success <= 1.0)) r.fail(n, f("comm_success"), "must lie in (0, 1]");
  };
  s["dropout_policy"] = [&r, f](auto& c, const auto& n) { c.dropout_policy = policy(r, n, f("dropout_policy")); };
  s["update_scope"] = [&r, f](auto& c, const auto& n) { c.update_scope = scope(r, n, f("update_scope")); };
  return s;
}

inline std::string value_label(const YAML::Node& n) {
  if (n.IsScalar()) return n.Scalar();
  std::string s;
  for (const auto& v : n) s += (s.empty() ? "" : "/") + value_label(v);
  return s;
}

inline void noise_block(const Reader& r, const YAML::Node& n, const std::string& prefix, mrclam::NoiseConfig& out) {
  auto f = [&](const char* k) { return prefix + "." + k; };
  r.mapping(n, prefix,
            {{"odom_sigma",
              [&](const YAML::Node& v) {
                out.odom_sigma = r.vec3(v, f("odom_sigma"));
                if (!(out.odom_sigma.array() > 0.0).all()) r.fail(v, f("odom_sigma"), "entries must be positive");
              }},
             {"range_sigma", [&](const YAML::Node& v) { out.range_sigma = r.positive(v, f("range_sigma")); }},
             {"bearing_sigma", [&](const YAML::Node& v) { out.bearing_sigma = r.positive(v, f("bearing_sigma")); }},
             {"landmark_range_sigma",
              [&](const YAML::Node& v) { out.landmark_range_sigma = r.positive(v, f("landmark_range_sigma")); }},
             {"landmark_bearing_sigma",
              [&](const YAML::Node& v) { out.landmark_bearing_sigma = r.positive(v, f("landmark_bearing_sigma")); }},
             {"init_sigma", [&](const YAML::Node& v) {
                out.init_sigma = r.vec3(v, f("init_sigma"));
                if (!(out.init_sigma.array() >= 0.0).all()) r.fail(v, f("init_sigma"), "must be non-negative");
              }}});
}

}  // namespace detail

inline ExperimentSpec parse_experiment(const fs::path& path) {
  auto [root, text] = detail::load(path);
  const detail::Reader r(path);
  ExperimentSpec spec;
  spec.source = path;
  spec.text = text;

  sim::ScenarioConfig base;
  std::vector<filters::EstimatorKind> estimators{filters::EstimatorKind::tsb};
  std::uint64_t seed = 1;
  bool record = false;
  std::vector<SweepAxis> sweep;
  const auto setters = detail::scenario_setters(r, "scenario");
  const auto sweep_setters = detail::scenario_setters(r, "sweep");

  r.mapping(root, "",
            {{"output_dir", [&](const YAML::Node& n) { spec.output_dir = r.scalar<std::string>(n, "output_dir"); }},
             {"runs",
              [&](const YAML::Node& n) {
                spec.runs = r.scalar<int>(n, "runs");
                if (spec.runs < 1) r.fail(n, "runs", "must be at least 1");
              }},
             {"threads", [&](const YAML::Node& n) { spec.threads = r.scalar<unsigned>(n, "threads"); }},
             {"seed", [&](const YAML::Node& n) { seed = r.scalar<std::uint64_t>(n, "seed"); }},
             {"record_jacobians", [&](const YAML::Node& n) { record = r.scalar<bool>(n, "record_jacobians"); }},
             {"write_run_log", [&](const YAML::Node& n) { spec.write_run_log = r.scalar<bool>(n, "write_run_log"); }},
             {"estimators", [&](const YAML::Node& n) { estimators = r.estimators(n, "estimators"); }},
             {"scenario",
              [&](const YAML::Node& n) {
                std::map<std::string, std::function<void(const YAML::Node&)>> h;
                for (const auto& [k, set] : setters) h[k] = [&, set](const YAML::Node& v) { set(base, v); };
                r.mapping(n, "scenario", h);
              }},
             {"sweep", [&](const YAML::Node& n) {
                std::map<std::string, std::function<void(const YAML::Node&)>> h;
                for (const auto& [k, set] : sweep_setters) {
                  h[k] = [&, k, set](const YAML::Node& v) {
                    if (!v.IsSequence() || v.size() == 0) r.fail(v, "sweep." + k, "expected a non-empty list");
                    SweepAxis axis{k, {}};
                    for (const auto& item : v) {
                      sim::ScenarioConfig probe = base;
                      set(probe, item);  // validates each value up front
                      axis.values.push_back(item);
                    }
                    sweep.push_back(std::move(axis));
                  };
                }
                r.mapping(n, "sweep", h);
              }}});

  base.estimators = estimators;
  base.seed = seed;
  base.record_jacobians = record;

  // Cartesian product in file order; the last axis varies fastest.
  std::vector<std::size_t> idx(sweep.size(), 0);
  while (true) {
    ScenarioRun run{"base", base};
    std::string id;
    for (std::size_t a = 0; a < sweep.size(); ++a) {
      sweep_setters.at(sweep[a].key)(run.config, sweep[a].values[idx[a]]);
      id += (id.empty() ? "" : ";") + sweep[a].key + "=" + detail::value_label(sweep[a].values[idx[a]]);
    }
    if (!id.empty()) run.config_id = id;
    try {
      sim::validate(run.config);
    } catch (const Error& ex) {
      throw SpecError(path.string() + ": configuration '" + run.config_id + "': " + ex.what());
    }
    spec.scenarios.push_back(std::move(run));
    std::size_t a = sweep.size();
    while (a > 0 && ++idx[a - 1] == sweep[a - 1].values.size()) idx[--a] = 0;
    if (a == 0) break;
  }
  return spec;
}

inline DatasetSpec parse_dataset_spec(const fs::path& path) {
  auto [root, text] = detail::load(path);
  const detail::Reader r(path);
  DatasetSpec spec;
  spec.source = path;
  spec.text = text;
  r.mapping(root, "",
            {{"subset",
              [&](const YAML::Node& n) {
                spec.subset = r.scalar<int>(n, "subset");
                if (spec.subset < 1 || spec.subset > 9) r.fail(n, "subset", "must be 1..9");
              }},
             {"output_dir", [&](const YAML::Node& n) { spec.output_dir = r.scalar<std::string>(n, "output_dir"); }},
             {"dt", [&](const YAML::Node& n) { spec.dt = r.positive(n, "dt"); }},
             {"landmark_fraction",
              [&](const YAML::Node& n) {
                spec.landmark_fraction = r.scalar<double>(n, "landmark_fraction");
                if (!(spec.landmark_fraction > 0.0 && spec.landmark_fraction <= 1.0)) {
                  r.fail(n, "landmark_fraction", "must lie in (0, 1]");
                }
              }},
             {"estimators", [&](const YAML::Node& n) { spec.estimators = r.estimators(n, "estimators"); }},
             {"noise", [&](const YAML::Node& n) { detail::noise_block(r, n, "noise", spec.noise); }},
             {"comm_success",
              [&](const YAML::Node& n) {
                spec.run.comm_success = r.scalar<double>(n, "comm_success");
                if (!(spec.run.comm_success > 0.0 && spec.run.comm_success <= 1.0)) {
                  r.fail(n, "comm_success", "must lie in (0, 1]");
                }
              }},
             {"seed", [&](const YAML::Node& n) { spec.run.seed = r.scalar<std::uint64_t>(n, "seed"); }},
             {"dropout_policy", [&](const YAML::Node& n) { spec.run.dropout = detail::policy(r, n, "dropout_policy"); }},
             {"update_scope", [&](const YAML::Node& n) { spec.run.scope = detail::scope(r, n, "update_scope"); }},
             {"record_jacobians",
              [&](const YAML::Node& n) { spec.run.record_jacobians = r.scalar<bool>(n, "record_jacobians"); }}});
  return spec;
}

inline TuneSpec parse_tune_spec(const fs::path& path) {
  auto [root, text] = detail::load(path);
  const detail::Reader r(path);
  TuneSpec spec;
  spec.source = path;
  spec.text = text;
  r.mapping(root, "",
            {{"output_dir", [&](const YAML::Node& n) { spec.output_dir = r.scalar<std::string>(n, "output_dir"); }},
             {"dt", [&](const YAML::Node& n) { spec.dt = r.positive(n, "dt"); }},
             {"landmark_fraction",
              [&](const YAML::Node& n) {
                spec.landmark_fraction = r.scalar<double>(n, "landmark_fraction");
                if (!(spec.landmark_fraction > 0.0 && spec.landmark_fraction <= 1.0)) {
                  r.fail(n, "landmark_fraction", "must lie in (0, 1]");
                }
              }},
             {"estimator", [&](const YAML::Node& n) { spec.estimator = r.estimator(n, "estimator"); }},
             {"base", [&](const YAML::Node& n) { detail::noise_block(r, n, "base", spec.base); }},
             {"grid", [&](const YAML::Node& n) {
                r.mapping(n, "grid",
                          {{"odom_forward_sigma",
                            [&](const YAML::Node& v) { spec.odom_forward_sigma = r.doubles(v, "grid.odom_forward_sigma"); }},
                           {"odom_heading_sigma",
                            [&](const YAML::Node& v) { spec.odom_heading_sigma = r.doubles(v, "grid.odom_heading_sigma"); }},
                           {"range_sigma", [&](const YAML::Node& v) { spec.range_sigma = r.doubles(v, "grid.range_sigma"); }},
                           {"bearing_sigma",
                            [&](const YAML::Node& v) { spec.bearing_sigma = r.doubles(v, "grid.bearing_sigma"); }}});
              }}});
  return spec;
}

inline std::vector<mrclam::NoiseConfig> TuneSpec::candidates() const {
  auto or_base = [](const std::vector<double>& v, double b) { return v.empty() ? std::vector<double>{b} : v; };
  std::vector<mrclam::NoiseConfig> out;
  for (double fw : or_base(odom_forward_sigma, base.odom_sigma.x())) {
    for (double hd : or_base(odom_heading_sigma, base.odom_sigma.z())) {
      for (double rs : or_base(range_sigma, base.range_sigma)) {
        for (double bs : or_base(bearing_sigma, base.bearing_sigma)) {
          mrclam::NoiseConfig c = base;
          c.odom_sigma.x() = fw;
          c.odom_sigma.z() = hd;
          c.range_sigma = rs;
          c.bearing_sigma = bs;
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

}  // namespace dcl::cli
