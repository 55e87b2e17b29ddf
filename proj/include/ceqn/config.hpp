#pragma once

#include <ceqn/core.hpp>
#include <ceqn/data_io.hpp>
#include <ceqn/driver.hpp>
#include <ceqn/problem.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ceqn {

/// Contents of a run configuration: a flat JSON object. Recognized keys:
///
///   run_id            string   output directory name (optional)
///   problem           string   "logistic" (default) or "quadratic"
///   dataset           string   LIBSVM file; relative paths resolve against
///                              $CEQN_DATA_DIR, else the config's directory
///   dimension         int      pins d instead of inferring it
///   mu                number   ℓ2 strength (default 1e-4)
///   quadratic_matrix  [[..]]   SPD matrix (problem = quadratic)
///   quadratic_linear  [..]     linear term (problem = quadratic)
///   method            string   fixed | ceqn | adaptive_dual | adaptive_reg
///   approx            string   lsr1 (default) | lbfgs | exact
///   pairs             string   sampled (default) | history
///   memory            int      m (default 10)
///   h0_scale          number   c in H₀ = cI (default 1e-4)
///   sr1_skip_tol, bfgs_curvature_tol   number
///   L                 number   required for every method
///   theta | alpha     number   ceqn only; θ = 1 + α (default θ = 1)
///   stepsize_form     string   standard (default) | quadratic_root
///   alpha0, gamma_inc, gamma_dec, max_inner   adaptive methods
///   max_iters, grad_tol, max_seconds, seed
///   x0                "ones" (default) | "zero" | [..]
struct RunSpec {
  std::string run_id;
  std::string problem = "logistic";
  std::string dataset;  // as written
  std::string dataset_path;  // resolved
  std::optional<Index> dimension;
  double mu = 1e-4;
  Matrix quadratic_matrix;
  Vector quadratic_linear;
  SolverConfig solver;
  nlohmann::json echo;  // normalized document with defaults filled in
};

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "run_id",    "problem",      "dataset",       "dimension",          "mu",
      "quadratic_matrix", "quadratic_linear", "method", "approx",        "pairs",
      "memory",    "h0_scale",     "sr1_skip_tol",  "bfgs_curvature_tol", "L",
      "theta",     "alpha",        "stepsize_form", "alpha0",             "gamma_inc",
      "gamma_dec", "max_inner",    "max_iters",     "grad_tol",           "max_seconds",
      "seed",      "x0"};
  return keys;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& doc) : doc_(doc) {}

  bool has(const char* key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

  double number(const char* key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) return require(key, fallback);
    const auto& v = doc_.at(key);
    if (!v.is_number()) throw ConfigError("key '" + std::string(key) + "' must be a number");
    return v.get<double>();
  }

  long long integer(const char* key, std::optional<long long> fallback = std::nullopt) const {
    if (!has(key)) return require(key, fallback);
    const auto& v = doc_.at(key);
    if (!v.is_number_integer()) throw ConfigError("key '" + std::string(key) + "' must be an integer");
    return v.get<long long>();
  }

  std::string string(const char* key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) return require(key, fallback);
    const auto& v = doc_.at(key);
    if (!v.is_string()) throw ConfigError("key '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
  }

  std::string choice(const char* key, const std::vector<std::string>& allowed,
                     std::optional<std::string> fallback = std::nullopt) const {
    const std::string v = lower(string(key, fallback));
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("key '" + std::string(key) + "' must be one of: " + list + " (got '" + v + "')");
    }
    return v;
  }

  Vector vector(const char* key) const {
    const auto& v = doc_.at(key);
    if (!v.is_array()) throw ConfigError("key '" + std::string(key) + "' must be an array of numbers");
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError("key '" + std::string(key) + "' must be an array of numbers");
      out[static_cast<Index>(i)] = v[i].get<double>();
    }
    return out;
  }

  Matrix matrix(const char* key) const {
    const auto& v = doc_.at(key);
    const auto bad = [&] { return ConfigError("key '" + std::string(key) + "' must be a square array of number arrays"); };
    if (!v.is_array() || v.empty()) throw bad();
    const auto n = static_cast<Index>(v.size());
    Matrix out(n, n);
    for (Index r = 0; r < n; ++r) {
      const auto& row = v[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Index>(row.size()) != n) throw bad();
      for (Index c = 0; c < n; ++c) {
        if (!row[static_cast<std::size_t>(c)].is_number()) throw bad();
        out(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
    }
    return out;
  }

 private:
  template <class T>
  static T require(const char* key, const std::optional<T>& fallback) {
    if (!fallback) throw ConfigError("missing required key '" + std::string(key) + "'");
    return *fallback;
  }

  const nlohmann::json& doc_;
};

}  // namespace detail

/// Validates a flat configuration document. `base_dir` anchors relative
/// dataset paths when CEQN_DATA_DIR is unset.
inline RunSpec parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  const auto& known = detail::config_keys();
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) != known.end()) continue;
    std::string hint;
    std::size_t best = 3;
    for (const auto& k : known) {
      const auto dist = detail::edit_distance(key, k);
      if (dist < best) {
        best = dist;
        hint = k;
      }
    }
    throw ConfigError("unknown key '" + key + "'" + (hint.empty() ? "" : " (did you mean '" + hint + "'?)"));
  }

  const detail::ConfigReader rd(doc);
  RunSpec spec;
  nlohmann::json echo;

  spec.problem = rd.choice("problem", {"logistic", "quadratic"}, "logistic");
  echo["problem"] = spec.problem;
  if (spec.problem == "logistic") {
    spec.dataset = rd.string("dataset");
    std::filesystem::path p(spec.dataset);
    if (p.is_relative()) {
      if (const char* root = std::getenv("CEQN_DATA_DIR"); root && *root) {
        p = std::filesystem::path(root) / p;
      } else if (!base_dir.empty()) {
        p = base_dir / p;
      }
    }
    spec.dataset_path = p.string();
    echo["dataset"] = spec.dataset;
    spec.mu = rd.number("mu", 1e-4);
    if (!(spec.mu >= 0.0)) throw ConfigError("key 'mu' must be >= 0");
    echo["mu"] = spec.mu;
    if (rd.has("dimension")) {
      const auto d = rd.integer("dimension");
      if (d < 1) throw ConfigError("key 'dimension' must be >= 1");
      spec.dimension = static_cast<Index>(d);
      echo["dimension"] = d;
    }
  } else {
    if (!rd.has("quadratic_matrix")) throw ConfigError("missing required key 'quadratic_matrix'");
    if (!rd.has("quadratic_linear")) throw ConfigError("missing required key 'quadratic_linear'");
    spec.quadratic_matrix = rd.matrix("quadratic_matrix");
    spec.quadratic_linear = rd.vector("quadratic_linear");
    if (spec.quadratic_linear.size() != spec.quadratic_matrix.rows()) {
      throw ConfigError("key 'quadratic_linear' length does not match 'quadratic_matrix'");
    }
    echo["quadratic_matrix"] = doc.at("quadratic_matrix");
    echo["quadratic_linear"] = doc.at("quadratic_linear");
  }

  auto& sc = spec.solver;
  const auto method = rd.choice("method", {"fixed", "ceqn", "adaptive_dual", "adaptive_reg"});
  echo["method"] = method;

  const auto approx = rd.choice("approx", {"lsr1", "lbfgs", "exact"}, "lsr1");
  sc.approx.kind = approx == "lsr1" ? ApproxKind::LSR1 : approx == "lbfgs" ? ApproxKind::LBFGS : ApproxKind::EXACT;
  const auto pairs = rd.choice("pairs", {"sampled", "history"}, "sampled");
  sc.approx.pair_strategy = pairs == "sampled" ? PairStrategy::SAMPLED : PairStrategy::HISTORY;
  sc.approx.memory = static_cast<int>(rd.integer("memory", 10));
  sc.approx.h0_scale = rd.number("h0_scale", 1e-4);
  sc.approx.sr1_skip_tol = rd.number("sr1_skip_tol", 1e-8);
  sc.approx.bfgs_curvature_tol = rd.number("bfgs_curvature_tol", 1e-12);
  echo["approx"] = approx;
  echo["pairs"] = pairs;
  echo["memory"] = sc.approx.memory;
  echo["h0_scale"] = sc.approx.h0_scale;
  echo["sr1_skip_tol"] = sc.approx.sr1_skip_tol;
  echo["bfgs_curvature_tol"] = sc.approx.bfgs_curvature_tol;

  const double cubic = rd.number("L");
  echo["L"] = cubic;
  sc.max_iters = static_cast<int>(rd.integer("max_iters", 1000));
  sc.grad_tol = rd.number("grad_tol", 1e-12);
  sc.max_seconds = rd.has("max_seconds") ? rd.number("max_seconds") : std::numeric_limits<double>::infinity();
  const auto seed = rd.integer("seed", 0);
  if (seed < 0) throw ConfigError("key 'seed' must be >= 0");
  sc.seed = static_cast<std::uint64_t>(seed);
  echo["max_iters"] = sc.max_iters;
  echo["grad_tol"] = sc.grad_tol;
  echo["max_seconds"] = json_number_or_null(sc.max_seconds);
  echo["seed"] = seed;

  if (method == "fixed") {
    sc.method = Method::Fixed;
    sc.engine = FixedParams{cubic};
  } else if (method == "ceqn") {
    sc.method = Method::Ceqn;
    CeqnParams p;
    p.cubic = cubic;
    if (rd.has("theta") && rd.has("alpha")) throw ConfigError("keys 'theta' and 'alpha' are mutually exclusive");
    p.theta = rd.has("alpha") ? 1.0 + rd.number("alpha") : rd.number("theta", 1.0);
    const auto form = rd.choice("stepsize_form", {"standard", "quadratic_root"}, "standard");
    p.form = form == "standard" ? StepsizeForm::Standard : StepsizeForm::QuadraticRoot;
    sc.engine = p;
    echo["theta"] = p.theta;
    echo["stepsize_form"] = form;
  } else {
    AdaptiveParams p;
    sc.method = method == "adaptive_dual" ? Method::AdaptiveDual : Method::AdaptiveReg;
    p.mode = method == "adaptive_dual" ? AcceptMode::Dual : AcceptMode::Reg;
    p.cubic = cubic;
    p.alpha0 = rd.number("alpha0", 1.0);
    p.gamma_inc = rd.number("gamma_inc", 2.0);
    p.gamma_dec = rd.number("gamma_dec", 0.5);
    p.max_inner = static_cast<int>(rd.integer("max_inner", 30));
    p.grad_tol = sc.grad_tol;
    sc.engine = p;
    echo["alpha0"] = p.alpha0;
    echo["gamma_inc"] = p.gamma_inc;
    echo["gamma_dec"] = p.gamma_dec;
    echo["max_inner"] = p.max_inner;
  }

  if (!rd.has("x0")) {
    sc.x0.kind = StartKind::AllOnes;
    echo["x0"] = "ones";
  } else if (doc.at("x0").is_array()) {
    sc.x0.kind = StartKind::Explicit;
    sc.x0.point = rd.vector("x0");
    echo["x0"] = doc.at("x0");
  } else {
    const auto x0 = rd.choice("x0", {"ones", "zero"});
    sc.x0.kind = x0 == "ones" ? StartKind::AllOnes : StartKind::Zero;
    echo["x0"] = x0;
  }

  try {
    sc.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }

  if (rd.has("run_id")) {
    spec.run_id = rd.string("run_id");
  } else {
    spec.run_id = method + "-" + approx + "-L" + format_double(cubic) + "-s" + std::to_string(seed);
  }
  echo["run_id"] = spec.run_id;
  spec.echo = std::move(echo);
  return spec;
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  auto parsed = nlohmann::json::parse(text, nullptr, false);
  doc[key] = parsed.is_discarded() ? nlohmann::json(text) : parsed;
}

inline nlohmann::json read_config_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
  return doc;
}

inline RunSpec load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  auto doc = read_config_document(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(doc, path.parent_path());
}

/// Builds the objective described by `spec` (reads the dataset for logistic runs).
inline std::shared_ptr<const Problem> make_problem(const RunSpec& spec) {
  if (spec.problem == "quadratic") {
    try {
      return std::make_shared<QuadraticProblem>(spec.quadratic_matrix, spec.quadratic_linear);
    } catch (const UsageError& e) {
      throw ConfigError(e.what());
    }
  }
  Dataset ds = load_libsvm_file(spec.dataset_path, spec.dimension);
  return std::make_shared<LogisticProblem>(std::move(ds.design), std::move(ds.labels), spec.mu);
}

}  // namespace ceqn
