#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dcl/cli/spec.hpp"
#include "dcl/mrclam/runner.hpp"
#include "dcl/obscheck.hpp"
#include "dcl/sim/io.hpp"

#ifndef DCL_VERSION
#define DCL_VERSION "unknown"
#endif

namespace dcl::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kSpecError = 2 };

inline constexpr const char* kOutputDirEnv = "DCL_OUTPUT_DIR";
inline constexpr const char* kDatasetUrl = "http://asrl.utias.utoronto.ca/datasets/mrclam/";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// The environment variable wins over the spec's output_dir.
inline fs::path resolve_output_dir(const fs::path& from_spec) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return from_spec;
}

struct ManifestEntry {
  std::string key;
  std::string value;
};

inline void write_manifest(const fs::path& dir, const std::string& command, const fs::path& spec_path,
                           const std::string& spec_text, std::uint64_t seed, const std::vector<ManifestEntry>& extra) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "command" << YAML::Value << command;
  e << YAML::Key << "version" << YAML::Value << DCL_VERSION;
  e << YAML::Key << "spec_path" << YAML::Value << spec_path.string();
  e << YAML::Key << "spec_fnv1a64" << YAML::Value << hex(fnv1a(spec_text));
  e << YAML::Key << "seed" << YAML::Value << seed;
  for (const auto& x : extra) e << YAML::Key << x.key << YAML::Value << x.value;
  e << YAML::EndMap;
  sim::io::write_atomic(dir / "manifest.yaml", std::string(e.c_str()) + "\n");
}

namespace detail {

inline std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

/// Rows: estimators; columns: configurations; cells "orientation / position".
inline void print_table(std::ostream& out, const std::string& title, const std::vector<sim::EstimatorMetrics>& rows,
                        bool nees, double orient_scale, int prec) {
  std::vector<std::string> configs;
  std::vector<filters::EstimatorKind> kinds;
  for (const auto& r : rows) {
    if (std::find(configs.begin(), configs.end(), r.config_id) == configs.end()) configs.push_back(r.config_id);
    if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
  }
  std::size_t width = 12;
  for (const auto& c : configs) width = std::max(width, c.size() + 2);
  out << title << "\n" << std::left << std::setw(10) << "estimator";
  for (const auto& c : configs) out << std::setw(static_cast<int>(width)) << c;
  out << "\n";
  for (auto k : kinds) {
    out << std::setw(10) << filters::to_string(k);
    for (const auto& c : configs) {
      std::string cell = "-";
      for (const auto& r : rows) {
        if (r.kind != k || r.config_id != c) continue;
        const double o = nees ? r.nees_orientation : r.rmse_orientation * orient_scale;
        const double p = nees ? r.nees_position : r.rmse_position;
        cell = fixed(o, prec) + " / " + fixed(p, prec);
        if (r.runs_excluded > 0) cell += " (" + std::to_string(r.runs_excluded) + " excl)";
      }
      out << std::setw(static_cast<int>(width)) << cell;
    }
    out << "\n";
  }
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const SpecError& ex) {
    err << "spec error: " << ex.what() << "\n";
    return kSpecError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace detail

/// Runs every configuration of a simulation experiment and writes metrics,
/// per-step series, the first run's log per configuration, and a manifest.
inline int cmd_simulate(const fs::path& spec_path, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ExperimentSpec spec = parse_experiment(spec_path);
    const fs::path dir = resolve_output_dir(spec.output_dir);
    std::vector<sim::EstimatorMetrics> rows;
    std::vector<ManifestEntry> extra{{"runs", std::to_string(spec.runs)},
                                     {"configurations", std::to_string(spec.scenarios.size())}};
    double dt = 0.1;
    int excluded = 0;
    for (std::size_t c = 0; c < spec.scenarios.size(); ++c) {
      const auto& run = spec.scenarios[c];
      out << "[" << c + 1 << "/" << spec.scenarios.size() << "] " << run.config_id << ": " << spec.runs
          << " run(s), N=" << run.config.robot_count << "\n";
      const sim::MetricsReport rep = sim::monte_carlo(run.config, spec.runs, spec.threads, run.config_id);
      dt = rep.dt;
      for (const auto& r : rep.rows) {
        excluded += r.runs_excluded;
        for (const auto& why : r.exclusion_reasons) {
          err << "warning: " << filters::to_string(r.kind) << " [" << run.config_id << "] run excluded: " << why << "\n";
        }
        rows.push_back(r);
      }
      if (spec.write_run_log) {
        const sim::RunLog log = sim::run_episode(run.config);
        const fs::path sub = spec.scenarios.size() == 1 ? dir / "run0" : dir / ("config" + std::to_string(c)) / "run0";
        sim::io::write_run_log(sub, log);
      }
    }
    sim::io::write_atomic(dir / "metrics.csv", sim::io::metrics_csv(rows));
    sim::io::write_atomic(dir / "series.csv", sim::io::series_csv(rows, dt));
    extra.push_back({"excluded_runs", std::to_string(excluded)});
    for (std::size_t c = 0; c < spec.scenarios.size(); ++c) {
      extra.push_back({"config" + std::to_string(c), spec.scenarios[c].config_id});
    }
    write_manifest(dir, "simulate", spec_path, spec.text, spec.scenarios.front().config.seed, extra);

    out << "\n";
    detail::print_table(out, "Average NEES (orientation / position)", rows, true, 1.0, 2);
    out << "\n";
    detail::print_table(out, "RMSE (orientation rad / position m)", rows, false, 1.0, 4);
    out << "\noutputs written to " << dir.string() << "\n";
    return static_cast<int>(kOk);
  });
}

/// Runs the configured estimators over one dataset subset.
inline int cmd_utias(const fs::path& subset_dir, const fs::path& spec_path, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const DatasetSpec spec = parse_dataset_spec(spec_path);
    const std::vector<std::string> files = mrclam::expected_files(5);
    if (!fs::is_directory(subset_dir) || !fs::exists(subset_dir / files.front())) {
      err << "error: no MRCLAM subset found at '" << subset_dir.string() << "'.\n"
          << "  Download it with scripts/fetch_utias.sh (source: " << kDatasetUrl << ")\n"
          << "  and pass the extracted MRCLAM_Dataset<N> directory.\n";
      return static_cast<int>(kRuntimeFailure);
    }
    const mrclam::DatasetSubset ds = mrclam::parse_subset(subset_dir);
    const mrclam::EventStream es = mrclam::build_event_stream(ds, spec.dt, spec.landmark_fraction);
    const std::string id = "subset" + std::to_string(spec.subset);
    auto run = spec.run;
    run.keep_events = true;
    const mrclam::DatasetResult res = mrclam::run_dataset(es, spec.estimators, spec.noise, run, id);

    const fs::path dir = resolve_output_dir(spec.output_dir);
    sim::io::write_run_log(dir, res.log);
    sim::io::write_atomic(dir / "metrics.csv", sim::io::metrics_csv(res.metrics.rows));
    sim::io::write_atomic(dir / "series.csv", sim::io::series_csv(res.metrics.rows, res.metrics.dt));
    write_manifest(dir, "utias", spec_path, spec.text, spec.run.seed,
                   {{"subset_dir", subset_dir.string()},
                    {"steps", std::to_string(es.step_count())},
                    {"robot_measurements", std::to_string(res.robot_measurements)},
                    {"landmark_measurements", std::to_string(res.landmark_measurements)},
                    {"unknown_barcodes", std::to_string(ds.unknown_barcodes)}});

    out << "subset " << spec.subset << ": " << es.step_count() << " steps, " << res.robot_measurements
        << " robot and " << res.landmark_measurements << " landmark measurements (" << ds.unknown_barcodes
        << " unknown barcodes excluded)\n";
    for (const auto& el : res.log.estimators) {
      if (el.diverged) {
        err << "warning: " << filters::to_string(el.kind) << " diverged at step " << el.divergence_step << ": "
            << el.diagnostic << "\n";
      }
    }
    out << "\n";
    detail::print_table(out, "RMSE (orientation deg / position m)", res.metrics.rows, false, 180.0 / kPi, 3);
    out << "\n";
    detail::print_table(out, "Average NEES (orientation / position)", res.metrics.rows, true, 1.0, 2);
    out << "\noutputs written to " << dir.string() << "\n";
    return static_cast<int>(kOk);
  });
}

/// Grid search over noise parameters on one subset, scored by position RMSE.
inline int cmd_tune(const fs::path& subset_dir, const fs::path& spec_path, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const TuneSpec spec = parse_tune_spec(spec_path);
    const mrclam::DatasetSubset ds = mrclam::parse_subset(subset_dir);
    const mrclam::EventStream es = mrclam::build_event_stream(ds, spec.dt, spec.landmark_fraction);
    const auto candidates = spec.candidates();
    out << "scoring " << candidates.size() << " noise configurations with " << filters::to_string(spec.estimator)
        << "\n";
    const auto ranked = mrclam::tune_noise(es, candidates, spec.estimator);

    std::string csv = "rank,odom_forward_sigma,odom_heading_sigma,range_sigma,bearing_sigma,rmse_position\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& n = ranked[i].noise;
      csv += std::to_string(i + 1) + "," + sim::io::num(n.odom_sigma.x()) + "," + sim::io::num(n.odom_sigma.z()) + "," +
             sim::io::num(n.range_sigma) + "," + sim::io::num(n.bearing_sigma) + "," +
             sim::io::num(ranked[i].rmse_position) + "\n";
    }
    const fs::path dir = resolve_output_dir(spec.output_dir);
    sim::io::write_atomic(dir / "tune.csv", csv);

    const auto& best = ranked.front().noise;
    YAML::Emitter e;
    e << YAML::BeginMap << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
    auto seq = [&](const char* key, const Vec3& v) {
      e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << v.x() << v.y() << v.z() << YAML::EndSeq;
    };
    seq("odom_sigma", best.odom_sigma);
    e << YAML::Key << "range_sigma" << YAML::Value << best.range_sigma;
    e << YAML::Key << "bearing_sigma" << YAML::Value << best.bearing_sigma;
    e << YAML::Key << "landmark_range_sigma" << YAML::Value << best.landmark_range_sigma;
    e << YAML::Key << "landmark_bearing_sigma" << YAML::Value << best.landmark_bearing_sigma;
    seq("init_sigma", best.init_sigma);
    e << YAML::EndMap << YAML::EndMap;
    sim::io::write_atomic(dir / "best_noise.yaml", std::string(e.c_str()) + "\n");
    write_manifest(dir, "tune", spec_path, spec.text, 0, {{"subset_dir", subset_dir.string()}});
    out << "best position RMSE " << detail::fixed(ranked.front().rmse_position, 4) << " m; noise block written to "
        << (dir / "best_noise.yaml").string() << "\n";
    return static_cast<int>(kOk);
  });
}

struct ObsReport {
  filters::EstimatorKind kind = filters::EstimatorKind::tsb;
  int robot_count = 0;
  filters::Frame frame = filters::Frame::original;
  obscheck::RankCall rank;
  double nullspace_residual = 0.0;
  long measurement_rows = 0;
  double max_delta_p = 0.0;  // largest accumulated correction |delta_p| at the final step
};

/// Audits every jacobians_<estimator>.csv in a run-log directory.
inline std::vector<ObsReport> audit_run_log(const fs::path& dir) {
  std::vector<ObsReport> out;
  for (auto k : filters::kAllEstimators) {
    const std::string name = filters::to_string(k);
    const fs::path jac = dir / ("jacobians_" + name + ".csv");
    if (!fs::exists(jac)) continue;
    const obscheck::ObsMatrixSeq seq = sim::io::read_jacobians(jac);
    const MatN O = obscheck::build_obs_matrix(seq);
    ObsReport r;
    r.kind = k;
    r.robot_count = seq.robot_count;
    r.frame = seq.frame;
    r.rank = obscheck::numerical_unobs_dim(O);
    r.nullspace_residual = obscheck::nullspace_residual(O, obscheck::expected_unobs_basis(seq));
    r.measurement_rows = static_cast<long>(O.rows());

    const fs::path pri = dir / ("priors_" + name + ".csv");
    const fs::path post = dir / ("estimates_" + name + ".csv");
    if (fs::exists(pri) && fs::exists(post)) {
      const auto priors = sim::io::read_beliefs(pri);
      const auto posts = sim::io::read_beliefs(post);
      std::vector<std::vector<Vec2>> pp, qq;
      for (std::size_t s = 0; s < std::min(priors.size(), posts.size()); ++s) {
        pp.emplace_back();
        qq.emplace_back();
        for (const auto& b : priors[s]) pp.back().push_back(b.x.position);
        for (const auto& b : posts[s]) qq.back().push_back(b.x.position);
      }
      const auto dp = obscheck::delta_p_series(pp, qq);
      if (!dp.empty()) {
        for (const auto& v : dp.back()) r.max_delta_p = std::max(r.max_delta_p, v.norm());
      }
    }
    out.push_back(r);
  }
  return out;
}

inline int cmd_obscheck(const fs::path& dir, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (!fs::is_directory(dir)) {
      err << "error: run-log directory '" << dir.string() << "' does not exist\n";
      return static_cast<int>(kRuntimeFailure);
    }
    const auto reports = audit_run_log(dir);
    if (reports.empty()) {
      err << "error: no jacobians_<estimator>.csv files in '" << dir.string() << "'.\n"
          << "  Re-run the experiment with 'record_jacobians: true' to record linearizations.\n";
      return static_cast<int>(kRuntimeFailure);
    }
    for (const auto& r : reports) {
      out << filters::to_string(r.kind) << " (" << filters::to_string(r.frame) << ", N=" << r.robot_count
          << ", " << r.measurement_rows << " rows): unobs dim = " << r.rank.unobs_dim
          << (r.rank.determinate ? "" : " (indeterminate: no clear singular-value gap)")
          << ", null-space residual = " << std::scientific << std::setprecision(3) << r.nullspace_residual
          << std::defaultfloat << ", max |delta_p| = " << detail::fixed(r.max_delta_p, 4) << " m\n";
    }
    return static_cast<int>(kOk);
  });
}

}  // namespace dcl::cli
