// Command implementations behind the g3m tool: simulate, fit, sweep, report.
//
// Configuration is a single JSON file with one block per command. Parsing is
// strict: unknown keys are rejected with the offending path, every value is
// type-checked, and each command echoes its fully-resolved block (defaults
// filled) to <out>/config.resolved.json so a run can be reproduced from its
// own output directory.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "g3m/evaluate.hpp"
#include "g3m/io.hpp"
#include "g3m/types.hpp"

namespace g3m::cli {

using nlohmann::json;

namespace detail {

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) {
    throw ValidationError(path + ": expected a JSON object");
  }
}

inline void check_keys(const json& j, const std::string& path,
                       const std::set<std::string>& allowed) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ValidationError(path + "." + key + ": unknown key");
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& path, const std::string& key,
         T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(path + "." + key + ": wrong type");
  }
}

template <typename T>
T get_required(const json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) {
    throw ValidationError(path + "." + key + ": missing required field");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(path + "." + key + ": wrong type");
  }
}

inline GeneratorSpec parse_generator(const json& j, const std::string& path) {
  check_keys(j, path, {"kind", "rho", "ar1_toeplitz", "density", "dof", "scale"});
  GeneratorSpec spec;
  const auto kind = get_required<std::string>(j, path, "kind");
  if (kind == "ar1") spec.kind = GeneratorKind::ar1;
  else if (kind == "random") spec.kind = GeneratorKind::random;
  else if (kind == "wishart") spec.kind = GeneratorKind::wishart;
  else if (kind == "iid") spec.kind = GeneratorKind::iid;
  else throw ValidationError(path + ".kind: must be ar1|random|wishart|iid");
  spec.rho = get_or(j, path, "rho", spec.rho);
  spec.ar1_toeplitz = get_or(j, path, "ar1_toeplitz", spec.ar1_toeplitz);
  spec.density = get_or(j, path, "density", spec.density);
  spec.dof = get_or(j, path, "dof", spec.dof);
  spec.scale = get_or(j, path, "scale", spec.scale);
  return spec;
}

inline json generator_echo(const GeneratorSpec& s) {
  const char* kind = s.kind == GeneratorKind::ar1      ? "ar1"
                     : s.kind == GeneratorKind::random ? "random"
                     : s.kind == GeneratorKind::wishart ? "wishart"
                                                        : "iid";
  return json{{"kind", kind},        {"rho", s.rho},
              {"ar1_toeplitz", s.ar1_toeplitz}, {"density", s.density},
              {"dof", s.dof},        {"scale", s.scale}};
}

inline GlassoSettings parse_glasso(const json& j, const std::string& path) {
  check_keys(j, path, {"penalize_diagonal", "max_sweeps", "kkt_tol", "zero_tol"});
  GlassoSettings g;
  g.penalize_diagonal = get_or(j, path, "penalize_diagonal", g.penalize_diagonal);
  g.max_sweeps = get_or(j, path, "max_sweeps", g.max_sweeps);
  g.kkt_tol = get_or(j, path, "kkt_tol", g.kkt_tol);
  g.zero_tol = get_or(j, path, "zero_tol", g.zero_tol);
  return g;
}

inline json glasso_echo(const GlassoSettings& g) {
  return json{{"penalize_diagonal", g.penalize_diagonal},
              {"max_sweeps", g.max_sweeps},
              {"kkt_tol", g.kkt_tol},
              {"zero_tol", g.zero_tol}};
}

struct FitKnobs {
  int max_iters = 200;
  double rel_tol = 1e-6;
  InitKind init = InitKind::diagonal_moment;
  bool center = true;
  GlassoSettings glasso;
};

inline FitKnobs parse_fit_knobs(const json& j, const std::string& path,
                                const std::set<std::string>& extra_allowed) {
  std::set<std::string> allowed = {"max_iters", "rel_tol", "init", "center",
                                   "glasso"};
  allowed.insert(extra_allowed.begin(), extra_allowed.end());
  check_keys(j, path, allowed);
  FitKnobs k;
  k.max_iters = get_or(j, path, "max_iters", k.max_iters);
  k.rel_tol = get_or(j, path, "rel_tol", k.rel_tol);
  const auto init = get_or<std::string>(j, path, "init", "diagonal-moment");
  if (init == "identity") k.init = InitKind::identity;
  else if (init == "diagonal-moment") k.init = InitKind::diagonal_moment;
  else throw ValidationError(path + ".init: must be identity|diagonal-moment");
  k.center = get_or(j, path, "center", k.center);
  if (j.contains("glasso")) k.glasso = parse_glasso(j.at("glasso"), path + ".glasso");
  return k;
}

inline json fit_knobs_echo(const FitKnobs& k) {
  return json{{"max_iters", k.max_iters},
              {"rel_tol", k.rel_tol},
              {"init", k.init == InitKind::identity ? "identity"
                                                    : "diagonal-moment"},
              {"center", k.center},
              {"glasso", glasso_echo(k.glasso)}};
}

inline NoiseModel parse_noise(const json& j, const std::string& path) {
  NoiseModel noise;
  const auto tag = get_required<std::string>(j, path, "noise");
  if (tag == "dense") noise.variant = NoiseVariant::dense;
  else if (tag == "iid") noise.variant = NoiseVariant::iid;
  else if (tag == "sparse") noise.variant = NoiseVariant::sparse;
  else throw ValidationError(path + ".noise: must be dense|iid|sparse");
  noise.gamma = get_or(j, path, "gamma", 0.0);
  if (noise.gamma < 0.0) {
    throw ValidationError(path + ".gamma: must be >= 0");
  }
  return noise;
}

inline std::filesystem::path ensure_out_dir(const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string());
  return out;
}

// Dataset directories under root, sorted by name.
inline std::vector<std::filesystem::path> dataset_dirs(
    const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IoError("dataset root is not a directory: " + root.string());
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() &&
        std::filesystem::exists(entry.path() / "meta.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw IoError("no dataset directories under " + root.string());
  }
  return dirs;
}

}  // namespace detail

struct RunConfig {
  json raw;
  std::uint64_t seed = 0;

  static RunConfig load(const std::filesystem::path& path,
                        std::optional<std::uint64_t> seed_override) {
    RunConfig cfg;
    cfg.raw = read_json(path);
    detail::check_keys(cfg.raw, "config",
                       {"seed", "simulate", "fit", "sweep", "report"});
    cfg.seed = detail::get_or<std::uint64_t>(cfg.raw, "config", "seed", 0);
    if (seed_override) cfg.seed = *seed_override;
    return cfg;
  }

  const json& block(const std::string& name) const {
    if (!raw.contains(name)) {
      throw ValidationError("config." + name + ": missing block for command");
    }
    return raw.at(name);
  }
};

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline int cmd_simulate(const RunConfig& run, const std::filesystem::path& out,
                        int threads) {
  const json& j = run.block("simulate");
  const std::string path = "config.simulate";
  detail::check_keys(j, path,
                     {"n", "p", "n_datasets", "snr", "family_size",
                      "within_family_corr", "structure_on", "c_gen", "d_gen"});
  SimConfig cfg;
  cfg.n = detail::get_required<int>(j, path, "n");
  cfg.p = detail::get_required<int>(j, path, "p");
  cfg.n_datasets = detail::get_required<int>(j, path, "n_datasets");
  cfg.snr = detail::get_or(j, path, "snr", cfg.snr);
  cfg.family_size = detail::get_or(j, path, "family_size", cfg.family_size);
  cfg.within_family_corr =
      detail::get_or(j, path, "within_family_corr", cfg.within_family_corr);
  const auto structure =
      detail::get_or<std::string>(j, path, "structure_on", "covariance");
  if (structure == "covariance") cfg.structure_on = FamilyStructureOn::covariance;
  else if (structure == "precision") cfg.structure_on = FamilyStructureOn::precision;
  else throw ValidationError(path + ".structure_on: must be covariance|precision");
  if (!j.contains("c_gen")) {
    throw ValidationError(path + ".c_gen: missing required block");
  }
  if (!j.contains("d_gen")) {
    throw ValidationError(path + ".d_gen: missing required block");
  }
  cfg.c_gen = detail::parse_generator(j.at("c_gen"), path + ".c_gen");
  cfg.d_gen = detail::parse_generator(j.at("d_gen"), path + ".d_gen");
  cfg.seed = run.seed;

  if (cfg.n < 1 || cfg.p < 1) throw ValidationError(path + ": n and p must be >= 1");
  if (cfg.n_datasets < 0) throw ValidationError(path + ".n_datasets: must be >= 0");
  if (cfg.family_size < 1 || cfg.n % cfg.family_size != 0) {
    throw ValidationError(path + ".family_size: n must be divisible by family_size");
  }

  detail::ensure_out_dir(out);
  json echo{{"seed", cfg.seed},
            {"simulate",
             json{{"n", cfg.n},
                  {"p", cfg.p},
                  {"n_datasets", cfg.n_datasets},
                  {"snr", cfg.snr},
                  {"family_size", cfg.family_size},
                  {"within_family_corr", cfg.within_family_corr},
                  {"structure_on", structure},
                  {"c_gen", detail::generator_echo(cfg.c_gen)},
                  {"d_gen", detail::generator_echo(cfg.d_gen)}}}};
  write_json(out / "config.resolved.json", echo);

  std::vector<std::string> dir_names(cfg.n_datasets);
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex err_mutex;
  auto work = [&]() {
    for (int i = next.fetch_add(1); i < cfg.n_datasets; i = next.fetch_add(1)) {
      if (failed.load()) return;
      try {
        std::vector<std::string> warnings;
        const Dataset ds = generate_dataset(cfg, i, &warnings);
        char name[32];
        std::snprintf(name, sizeof(name), "dataset_%03d", i);
        dir_names[i] = name;
        write_dataset(out / name, ds, echo);
        for (const auto& w : warnings) {
          std::lock_guard<std::mutex> lock(err_mutex);
          std::cerr << "warning: dataset " << i << ": " << w << '\n';
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };
  const int n_workers = std::max(1, std::min(threads, std::max(1, cfg.n_datasets)));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw NumericalError("simulate: " + first_error);

  json manifest;
  manifest["master_seed"] = cfg.seed;
  manifest["n_datasets"] = cfg.n_datasets;
  json entries = json::array();
  for (int i = 0; i < cfg.n_datasets; ++i) {
    entries.push_back({{"dir", dir_names[i]},
                       {"index", i},
                       {"stream_seed", Rng::derive_stream_seed(cfg.seed, i)}});
  }
  manifest["datasets"] = std::move(entries);
  write_json(out / "manifest.json", manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

inline int cmd_fit(const RunConfig& run, const std::filesystem::path& out) {
  const json& j = run.block("fit");
  const std::string path = "config.fit";
  const auto knobs = detail::parse_fit_knobs(
      j, path, {"dataset", "lambda", "noise", "gamma"});
  const auto dataset_path =
      detail::get_required<std::string>(j, path, "dataset");
  FitConfig cfg;
  cfg.lambda = detail::get_required<double>(j, path, "lambda");
  cfg.noise = detail::parse_noise(j, path);
  cfg.max_iters = knobs.max_iters;
  cfg.rel_tol = knobs.rel_tol;
  cfg.init = knobs.init;
  cfg.center_columns = knobs.center;
  cfg.glasso = knobs.glasso;
  if (cfg.lambda < 0.0) throw ValidationError(path + ".lambda: must be >= 0");

  const Dataset ds = read_dataset(dataset_path);
  detail::ensure_out_dir(out);
  json echo{{"seed", run.seed}, {"fit", detail::fit_knobs_echo(knobs)}};
  echo["fit"]["dataset"] = dataset_path;
  echo["fit"]["lambda"] = cfg.lambda;
  echo["fit"]["noise"] = cfg.noise.variant == NoiseVariant::dense ? "dense"
                         : cfg.noise.variant == NoiseVariant::iid ? "iid"
                                                                  : "sparse";
  echo["fit"]["gamma"] = cfg.noise.gamma;
  write_json(out / "config.resolved.json", echo);

  FitResult fit;
  try {
    fit = fit_g3m(ds.y, ds.r, cfg);
  } catch (const NumericalError& e) {
    throw NumericalError("fit failed on " + dataset_path + ": " + e.what());
  }
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';

  write_matrix_csv(out / "C_hat.csv", fit.C_hat.mat());
  write_matrix_csv(out / "D_hat.csv", fit.D_hat.mat());
  {
    std::ofstream trace(out / "objective_trace.csv");
    if (!trace) throw IoError("cannot write objective_trace.csv");
    trace << "iter,objective\n";
    for (std::size_t i = 0; i < fit.objective_trace.size(); ++i) {
      trace << (i + 1) << ',' << format_double(fit.objective_trace[i]) << '\n';
    }
  }
  json summary{{"iterations", fit.iters},
               {"converged", fit.converged},
               {"lambda", cfg.lambda},
               {"noise", echo["fit"]["noise"]},
               {"warnings", fit.warnings}};
  if (fit.tau) summary["tau"] = *fit.tau;
  write_json(out / "fit.json", summary);
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

inline int cmd_sweep(const RunConfig& run, const std::filesystem::path& out,
                     int threads) {
  const json& j = run.block("sweep");
  const std::string path = "config.sweep";
  detail::check_keys(j, path,
                     {"datasets", "methods", "grid", "gamma_grid", "fit",
                      "per_dataset_detail", "zero_tol"});
  const auto root = detail::get_required<std::string>(j, path, "datasets");
  const auto method_names =
      detail::get_required<std::vector<std::string>>(j, path, "methods");
  if (method_names.empty()) {
    throw ValidationError(path + ".methods: must not be empty");
  }
  std::vector<SweepMethod> methods;
  for (const auto& name : method_names) {
    const auto m = parse_sweep_method(name);
    if (!m) throw ValidationError(path + ".methods: unknown method '" + name + "'");
    methods.push_back(*m);
  }

  double x_min = -7.0, x_max = 3.0;
  int grid_n = 50;
  if (j.contains("grid")) {
    detail::check_keys(j.at("grid"), path + ".grid", {"x_min", "x_max", "n"});
    x_min = detail::get_or(j.at("grid"), path + ".grid", "x_min", x_min);
    x_max = detail::get_or(j.at("grid"), path + ".grid", "x_max", x_max);
    grid_n = detail::get_or(j.at("grid"), path + ".grid", "n", grid_n);
  }
  const std::vector<double> grid = lambda_grid(x_min, x_max, grid_n);

  SweepOptions opt;
  opt.threads = threads;
  opt.zero_tol = detail::get_or(j, path, "zero_tol", opt.zero_tol);
  opt.gamma_grid = detail::get_or<std::vector<double>>(j, path, "gamma_grid", {});
  detail::FitKnobs knobs;
  if (j.contains("fit")) {
    knobs = detail::parse_fit_knobs(j.at("fit"), path + ".fit", {});
  }
  opt.glasso = knobs.glasso;
  opt.max_iters = knobs.max_iters;
  opt.rel_tol = knobs.rel_tol;
  opt.center_columns = knobs.center;
  const bool detail_rows = detail::get_or(j, path, "per_dataset_detail", false);

  std::vector<Dataset> datasets;
  for (const auto& dir : detail::dataset_dirs(root)) {
    datasets.push_back(read_dataset(dir));
  }

  detail::ensure_out_dir(out);
  json echo{{"seed", run.seed},
            {"sweep",
             json{{"datasets", root},
                  {"methods", method_names},
                  {"grid", json{{"x_min", x_min}, {"x_max", x_max}, {"n", grid_n}}},
                  {"gamma_grid", opt.gamma_grid},
                  {"zero_tol", opt.zero_tol},
                  {"per_dataset_detail", detail_rows},
                  {"fit", detail::fit_knobs_echo(knobs)}}}};
  write_json(out / "config.resolved.json", echo);

  std::ofstream roc(out / "roc.csv");
  if (!roc) throw IoError("cannot write roc.csv");
  roc << "method,lambda,fpr,tpr,n_edges\n";
  std::ofstream detail_csv;
  if (detail_rows) {
    detail_csv.open(out / "roc_detail.csv");
    if (!detail_csv) throw IoError("cannot write roc_detail.csv");
    detail_csv << "method,dataset,lambda,fpr,tpr,n_edges\n";
  }

  json auc_summary;
  bool any_column_dead = false;
  std::string dead_column;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const SweepResult result = roc_sweep(datasets, methods[m], grid, opt);
    for (const auto& f : result.failures) {
      std::cerr << "warning: " << method_names[m] << " dataset " << f.dataset
                << " lambda " << format_double(f.lambda) << ": " << f.message
                << '\n';
    }
    for (const auto& pt : result.points) {
      roc << method_names[m] << ',' << format_double(pt.lambda) << ','
          << format_double(pt.fpr) << ',' << format_double(pt.tpr) << ','
          << pt.n_edges << '\n';
    }
    if (detail_rows) {
      for (const auto& row : result.details) {
        detail_csv << method_names[m] << ',' << row.dataset << ','
                   << format_double(row.lambda) << ',' << format_double(row.fpr)
                   << ',' << format_double(row.tpr) << ',' << row.n_edges
                   << '\n';
      }
    }
    if (result.points.empty()) {
      any_column_dead = true;
      dead_column = method_names[m];
      auc_summary[method_names[m]] = nullptr;
    } else {
      auc_summary[method_names[m]] = auc(result.points);
    }
  }
  write_json(out / "auc.json", auc_summary);
  if (any_column_dead) {
    throw NumericalError("sweep: method '" + dead_column +
                         "' failed on every (dataset, lambda) cell");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::vector<RocPoint> read_roc_csv(const std::filesystem::path& path,
                                          const std::string& method) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "method,lambda,fpr,tpr,n_edges") {
    throw IoError(path.string() + ": not a roc.csv (bad header)");
  }
  std::vector<RocPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw IoError(path.string() + ": bad row: " + line);
    if (cells[0] != method) continue;
    RocPoint pt;
    pt.lambda = parse_double(cells[1], path.string());
    pt.fpr = parse_double(cells[2], path.string());
    pt.tpr = parse_double(cells[3], path.string());
    pt.n_edges = static_cast<int>(parse_double(cells[4], path.string()));
    points.push_back(pt);
  }
  if (points.empty()) {
    throw IoError(path.string() + ": no rows for method '" + method + "'");
  }
  return points;
}

inline int cmd_report(const RunConfig& run, const std::filesystem::path& out) {
  const json& j = run.block("report");
  const std::string path = "config.report";
  const auto knobs = detail::parse_fit_knobs(
      j, path,
      {"sweep_csv", "method", "dataset", "target_power", "zero_tol", "noise",
       "gamma"});
  const auto sweep_csv = detail::get_required<std::string>(j, path, "sweep_csv");
  const auto method_name = detail::get_required<std::string>(j, path, "method");
  const auto dataset_path = detail::get_required<std::string>(j, path, "dataset");
  const double target = detail::get_or(j, path, "target_power", 0.7);
  const double zero_tol = detail::get_or(j, path, "zero_tol", 1e-8);
  const auto method = parse_sweep_method(method_name);
  if (!method) {
    throw ValidationError(path + ".method: unknown method '" + method_name + "'");
  }

  const auto points = read_roc_csv(sweep_csv, method_name);
  const double lambda_star = threshold_at_power(points, target);
  double achieved = 0.0;
  for (const auto& pt : points) {
    if (pt.lambda == lambda_star) achieved = pt.tpr;
  }

  const Dataset ds = read_dataset(dataset_path);
  detail::ensure_out_dir(out);
  json echo{{"seed", run.seed}, {"report", detail::fit_knobs_echo(knobs)}};
  echo["report"]["sweep_csv"] = sweep_csv;
  echo["report"]["method"] = method_name;
  echo["report"]["dataset"] = dataset_path;
  echo["report"]["target_power"] = target;
  echo["report"]["zero_tol"] = zero_tol;
  write_json(out / "config.resolved.json", echo);

  SpdMatrix c_hat;
  if (*method == SweepMethod::vanilla) {
    DataMatrix y = ds.y;
    if (knobs.center) y.rowwise() -= y.colwise().mean();
    c_hat = vanilla_glasso(y, lambda_star, knobs.glasso).C_hat;
  } else if (*method == SweepMethod::kronglasso) {
    c_hat = kron_glasso_known_r(ds.y, ds.r, lambda_star, knobs.glasso,
                                knobs.max_iters, knobs.rel_tol, knobs.center)
                .C_hat;
  } else {
    FitConfig cfg;
    cfg.lambda = lambda_star;
    cfg.noise.variant = *method == SweepMethod::g3m_iid ? NoiseVariant::iid
                        : *method == SweepMethod::g3m_sparse
                            ? NoiseVariant::sparse
                            : NoiseVariant::dense;
    cfg.noise.gamma = detail::get_or(j, path, "gamma", 0.0);
    cfg.max_iters = knobs.max_iters;
    cfg.rel_tol = knobs.rel_tol;
    cfg.init = knobs.init;
    cfg.center_columns = knobs.center;
    cfg.glasso = knobs.glasso;
    c_hat = fit_g3m(ds.y, ds.r, cfg).C_hat;
  }

  write_json(out / "network.json", export_network(c_hat, zero_tol));
  write_json(out / "truth_network.json", export_network(ds.c_true, zero_tol));
  write_json(out / "report.json", json{{"method", method_name},
                                       {"lambda", lambda_star},
                                       {"target_power", target},
                                       {"achieved_tpr", achieved}});
  return 0;
}

}  // namespace g3m::cli
