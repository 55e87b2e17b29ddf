#pragma once

#include <ceqn/config.hpp>
#include <ceqn/data_io.hpp>
#include <ceqn/driver.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace ceqn::bench {

namespace fs = std::filesystem;
using nlohmann::json;

/// Log-spaced L grid used for a9a-scale tuning.
inline const std::vector<double>& a9a_grid() {
  static const std::vector<double> g = {1e-5, 3.16e-5, 1e-4, 3.16e-4, 1e-3, 3.16e-3, 1e-2, 3.16e-2, 1e-1,
                                        3.16e-1, 1.0, 3.16, 10.0, 3.16e1, 1e2, 3.16e2, 1e3};
  return g;
}

/// Denser, narrower grid used for real-sim-scale tuning.
inline const std::vector<double>& realsim_grid() {
  static const std::vector<double> g = {1e-5,    2.82e-5, 7.95e-5, 2.24e-4, 6.31e-4, 1.78e-3, 5.02e-3, 1.41e-2,
                                        3.99e-2, 1.12e-1, 3.17e-1, 8.93e-1, 2.52,    7.10,    20.0};
  return g;
}

/// Named value lists. A "0" suffix ("a9a-grid0") prepends the value 0, as used
/// for the α axis of non-adaptive CEQN.
inline std::optional<std::vector<double>> grid_preset(const std::string& name) {
  std::string base = name;
  bool with_zero = false;
  if (!base.empty() && base.back() == '0') {
    with_zero = true;
    base.pop_back();
  }
  std::vector<double> out;
  if (base == "a9a-grid") {
    out = a9a_grid();
  } else if (base == "realsim-grid") {
    out = realsim_grid();
  } else {
    return std::nullopt;
  }
  if (with_zero) out.insert(out.begin(), 0.0);
  return out;
}

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

/// Parses `name=preset` or `name=v1,v2,...`.
inline GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw UsageError("grid axis '" + text + "' must look like name=preset or name=v1,v2,...");
  }
  GridAxis axis{text.substr(0, eq), {}};
  const std::string rhs = text.substr(eq + 1);
  if (auto preset = grid_preset(rhs)) {
    axis.values = *preset;
    return axis;
  }
  std::stringstream ss(rhs);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = detail::parse_double(detail::trim(item));
    if (!v || !std::isfinite(*v)) throw UsageError("grid axis '" + axis.name + "': bad value '" + item + "'");
    axis.values.push_back(*v);
  }
  if (axis.values.empty()) throw UsageError("grid axis '" + axis.name + "' is empty");
  return axis;
}

struct RunOutcome {
  std::string run_id;
  std::string status;  // "ok" or "failed"
  std::string error;
  json summary;
  std::vector<TraceRecord> trace;
};

/// Runs `spec` on `problem` and writes `<out_root>/<run_id>/{trace.csv,summary.json}`.
/// A NumericalFailure is recorded in the artifacts, not rethrown.
inline RunOutcome execute_run(const RunSpec& spec, const Problem& problem, const fs::path& out_root) {
  RunOutcome out;
  out.run_id = spec.run_id;
  RunResult result;
  try {
    result = run_solver(problem, spec.solver);
    out.status = "ok";
  } catch (const NumericalFailure& e) {
    result = e.partial();
    out.status = "failed";
    out.error = e.what();
  }
  out.summary = summarize(result, spec.echo, out.status);
  out.summary["run_id"] = spec.run_id;
  if (!out.error.empty()) out.summary["error"] = out.error;
  out.trace = std::move(result.trace);

  const fs::path dir = out_root / spec.run_id;
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "trace.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "trace.csv").string());
    write_trace_csv(out.trace, csv);
  }
  {
    std::ofstream js(dir / "summary.json");
    if (!js) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
    js << out.summary.dump(2) << '\n';
  }
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::isinf(b) ? b : a;
  return 0.5 * (a + b);
}

inline double number_or_inf(const json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::infinity();
}

inline std::string sanitize(std::string s) {
  for (auto& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '+';
    if (!ok) c = '_';
  }
  return s;
}

inline std::string problem_key(const RunSpec& spec) {
  json k;
  k["problem"] = spec.problem;
  if (spec.problem == "logistic") {
    k["dataset"] = spec.dataset_path;
    k["mu"] = spec.mu;
    k["dimension"] = spec.dimension ? json(*spec.dimension) : json(nullptr);
  } else {
    k["matrix"] = spec.echo.at("quadratic_matrix");
    k["linear"] = spec.echo.at("quadratic_linear");
  }
  return k.dump();
}

template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

struct GridOptions {
  std::vector<GridAxis> axes;
  std::vector<std::uint64_t> seeds{0};
  int jobs = 1;
};

/// Best configuration by median final f over seeds; ties go to the lower
/// median ‖∇f‖², then to the smaller L. Failed runs count as f = +∞.
/// Mutates `report["configs"]` to carry the medians and sets `report["winner"]`.
inline void select_winner(json& report) {
  std::map<std::string, std::vector<const json*>> by_config;
  std::vector<std::string> order;
  for (const auto& row : report.at("rows")) {
    const auto id = row.at("config_id").get<std::string>();
    if (!by_config.count(id)) order.push_back(id);
    by_config[id].push_back(&row);
  }
  json configs = json::array();
  std::optional<std::tuple<double, double, double, std::size_t>> best;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& rows = by_config[order[i]];
    std::vector<double> fs, gs;
    int failures = 0;
    for (const auto* r : rows) {
      const bool ok = r->at("status") == "ok";
      failures += ok ? 0 : 1;
      const double f = ok ? detail::number_or_inf(r->at("f_final")) : std::numeric_limits<double>::infinity();
      const double g = ok ? detail::number_or_inf(r->at("grad_norm_sq_final")) : std::numeric_limits<double>::infinity();
      fs.push_back(std::isfinite(f) ? f : std::numeric_limits<double>::infinity());
      gs.push_back(std::isfinite(g) ? g : std::numeric_limits<double>::infinity());
    }
    const double mf = detail::median(fs);
    const double mg = detail::median(gs);
    const auto& params = rows.front()->at("params");
    const double l = params.contains("L") ? params.at("L").get<double>() : 0.0;
    json c;
    c["config_id"] = order[i];
    c["params"] = params;
    c["median_f_final"] = json_number_or_null(mf);
    c["median_grad_norm_sq_final"] = json_number_or_null(mg);
    c["runs"] = rows.size();
    c["failures"] = failures;
    configs.push_back(c);
    const auto key = std::make_tuple(mf, mg, l, i);
    if (!best || key < *best) best = key;
  }
  report["configs"] = configs;
  report["winner"] = best ? configs[std::get<3>(*best)] : json(nullptr);
}

/// Runs every grid point × seed from `base_doc` and writes
/// `<out>/grid-report.json` alongside each run's artifacts.
inline json run_grid(const json& base_doc, const fs::path& base_dir, const GridOptions& options, const fs::path& out) {
  if (options.seeds.empty()) throw UsageError("grid: at least one seed is required");
  for (const auto& axis : options.axes) {
    if (axis.values.empty()) throw UsageError("grid: axis '" + axis.name + "' is empty");
  }

  std::vector<std::vector<double>> points{{}};
  for (const auto& axis : options.axes) {
    std::vector<std::vector<double>> next;
    for (const auto& p : points) {
      for (double v : axis.values) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }

  const std::string prefix =
      base_doc.contains("run_id") && base_doc.at("run_id").is_string() ? base_doc.at("run_id").get<std::string>() + "-" : "";

  struct Job {
    RunSpec spec;
    json params;
    std::string config_id;
    std::uint64_t seed;
    std::shared_ptr<const Problem> problem;
  };
  std::vector<Job> jobs;
  std::map<std::string, std::shared_ptr<const Problem>> problems;
  for (const auto& p : points) {
    json params = json::object();
    std::string config_id, tag;
    for (std::size_t a = 0; a < options.axes.size(); ++a) {
      params[options.axes[a].name] = p[a];
      config_id += (config_id.empty() ? "" : ",") + options.axes[a].name + "=" + format_double(p[a]);
      tag += (tag.empty() ? "" : "_") + options.axes[a].name + format_double(p[a]);
    }
    if (config_id.empty()) config_id = "base";
    for (auto seed : options.seeds) {
      json doc = base_doc;
      for (auto& [k, v] : params.items()) doc[k] = v;
      doc["seed"] = seed;
      doc["run_id"] = detail::sanitize(prefix + (tag.empty() ? "base" : tag) + "-s" + std::to_string(seed));
      Job job{parse_config(doc, base_dir), params, config_id, seed, nullptr};
      const auto key = detail::problem_key(job.spec);
      auto& shared = problems[key];
      if (!shared) shared = make_problem(job.spec);
      job.problem = shared;
      jobs.push_back(std::move(job));
    }
  }

  std::vector<RunOutcome> outcomes(jobs.size());
  detail::parallel_for(jobs.size(), options.jobs,
                       [&](std::size_t i) { outcomes[i] = execute_run(jobs[i].spec, *jobs[i].problem, out); });

  json report;
  json axes = json::array();
  for (const auto& axis : options.axes) axes.push_back({{"name", axis.name}, {"values", axis.values}});
  report["axes"] = axes;
  report["seeds"] = options.seeds;
  report["selection"] = "median f_final over seeds; ties: median grad_norm_sq_final, then smaller L";
  json rows = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& s = outcomes[i].summary;
    json row;
    row["config_id"] = jobs[i].config_id;
    row["params"] = jobs[i].params;
    row["seed"] = jobs[i].seed;
    row["run_id"] = outcomes[i].run_id;
    row["status"] = outcomes[i].status;
    row["termination"] = s.at("termination");
    row["iterations"] = s.at("iterations");
    row["f_final"] = s.at("f_final");
    row["grad_norm_sq_final"] = s.at("grad_norm_sq_final");
    row["iterations_to_target"] = s.at("iterations_to_target");
    row["cap_hits"] = s.at("cap_hits");
    rows.push_back(row);
  }
  report["rows"] = rows;
  select_winner(report);

  fs::create_directories(out);
  std::ofstream js(out / "grid-report.json");
  if (!js) throw std::runtime_error("cannot write " + (out / "grid-report.json").string());
  js << report.dump(2) << '\n';
  return report;
}

struct RunData {
  std::string run_id;
  json summary;
  std::vector<TraceRecord> trace;
};

struct RunSet {
  std::string label;
  std::string best_config;
  std::vector<RunData> runs;
};

inline RunData load_run(const fs::path& dir) {
  const auto sp = dir / "summary.json";
  const auto tp = dir / "trace.csv";
  if (!fs::exists(sp) || !fs::exists(tp)) {
    throw UsageError("run directory '" + dir.string() + "' lacks summary.json or trace.csv");
  }
  RunData rd;
  rd.run_id = dir.filename().string();
  std::ifstream sj(sp);
  rd.summary = json::parse(sj, nullptr, false);
  if (rd.summary.is_discarded()) throw UsageError("'" + sp.string() + "' is not valid JSON");
  std::ifstream tc(tp);
  try {
    rd.trace = read_trace_csv(tc);
  } catch (const ParseError& e) {
    throw UsageError("'" + tp.string() + "': " + e.what());
  }
  return rd;
}

/// A run set is one of: a grid output directory (the winner's runs over all
/// seeds), a single run directory, or a directory of run directories.
inline RunSet load_run_set(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("'" + dir.string() + "' is not a directory");
  RunSet set;
  set.label = fs::path(dir).lexically_normal().filename().string();
  if (set.label.empty()) set.label = fs::path(dir).lexically_normal().parent_path().filename().string();

  if (fs::exists(dir / "grid-report.json")) {
    std::ifstream in(dir / "grid-report.json");
    const json report = json::parse(in, nullptr, false);
    if (report.is_discarded() || !report.contains("winner") || report.at("winner").is_null()) {
      throw UsageError("'" + (dir / "grid-report.json").string() + "' has no winner");
    }
    set.best_config = report.at("winner").at("config_id").get<std::string>();
    for (const auto& row : report.at("rows")) {
      if (row.at("config_id") == set.best_config) set.runs.push_back(load_run(dir / row.at("run_id").get<std::string>()));
    }
  } else if (fs::exists(dir / "summary.json")) {
    set.runs.push_back(load_run(dir));
    set.best_config = set.runs.front().run_id;
  } else {
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) subdirs.push_back(entry.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& p : subdirs) set.runs.push_back(load_run(p));
    set.best_config = set.label;
  }
  if (set.runs.empty()) throw UsageError("'" + dir.string() + "' contains no completed runs");
  return set;
}

inline json problem_signature(const json& summary) {
  const auto& c = summary.at("config");
  json sig;
  for (const char* k : {"problem", "dataset", "mu", "dimension", "quadratic_matrix", "quadratic_linear"}) {
    if (c.contains(k)) sig[k] = c.at(k);
  }
  return sig;
}

/// Per-set medians over seeds of iterations to each ‖∇f‖² target, final f and
/// final ‖∇f‖², plus η extrema. Sets must share the same objective.
inline json compare_run_sets(const std::vector<RunSet>& sets) {
  if (sets.size() < 2) throw UsageError("compare needs at least two run sets");
  const json sig = problem_signature(sets.front().runs.front().summary);
  json methods = json::array();
  for (const auto& set : sets) {
    std::vector<double> ff, gg;
    std::map<double, std::vector<double>> iters;
    double eta_min = std::numeric_limits<double>::infinity();
    double eta_max = -std::numeric_limits<double>::infinity();
    long long inner = 0;
    json seeds = json::array();
    for (const auto& run : set.runs) {
      if (problem_signature(run.summary) != sig) {
        throw UsageError("run '" + run.run_id + "' in set '" + set.label + "' was produced on a different problem");
      }
      seeds.push_back(run.summary.at("seed"));
      ff.push_back(detail::number_or_inf(run.summary.at("f_final")));
      gg.push_back(detail::number_or_inf(run.summary.at("grad_norm_sq_final")));
      const double g0 = detail::number_or_inf(run.summary.at("grad_norm_sq_initial"));
      for (double t : kReportTargets) {
        const auto it = iterations_to_target(g0, run.trace, t);
        iters[t].push_back(it ? static_cast<double>(*it) : std::numeric_limits<double>::infinity());
      }
      for (const auto& r : run.trace) {
        eta_min = std::min(eta_min, r.eta);
        eta_max = std::max(eta_max, r.eta);
        inner += r.inner_count;
      }
    }
    json m;
    m["label"] = set.label;
    m["method"] = set.runs.front().summary.value("method", "?");
    m["best_config"] = set.best_config;
    m["seeds"] = seeds;
    m["median_f_final"] = json_number_or_null(detail::median(ff));
    m["median_grad_norm_sq_final"] = json_number_or_null(detail::median(gg));
    json to_target = json::object();
    for (double t : kReportTargets) to_target[format_double(t)] = json_number_or_null(detail::median(iters[t]));
    m["median_iterations_to_target"] = to_target;
    m["eta_min"] = json_number_or_null(eta_min);
    m["eta_max"] = json_number_or_null(eta_max);
    m["inner_total"] = inner;
    methods.push_back(m);
  }
  json report;
  report["problem"] = sig;
  report["targets"] = std::vector<double>(std::begin(kReportTargets), std::end(kReportTargets));
  report["methods"] = methods;
  return report;
}

inline std::string render_compare_text(const json& report) {
  auto cell = [](const json& v) -> std::string {
    if (v.is_null()) return "-";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
      std::ostringstream os;
      os << std::setprecision(6) << v.get<double>();
      return os.str();
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  std::vector<std::string> head = {"set", "method", "best_config"};
  for (double t : kReportTargets) head.push_back("it@" + format_double(t));
  for (const char* h : {"f_final", "gsq_final", "eta_min", "eta_max", "inner"}) head.emplace_back(h);

  std::vector<std::vector<std::string>> rows{head};
  for (const auto& m : report.at("methods")) {
    std::vector<std::string> r = {cell(m.at("label")), cell(m.at("method")), cell(m.at("best_config"))};
    for (double t : kReportTargets) r.push_back(cell(m.at("median_iterations_to_target").at(format_double(t))));
    for (const char* k : {"median_f_final", "median_grad_norm_sq_final", "eta_min", "eta_max", "inner_total"}) {
      r.push_back(cell(m.at(k)));
    }
    rows.push_back(std::move(r));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      os << std::left << std::setw(static_cast<int>(width[c])) << r[c] << (c + 1 < r.size() ? "  " : "");
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ceqn::bench
