#pragma once

#include <ceqn/core.hpp>
#include <ceqn/driver.hpp>
#include <ceqn/problem.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ceqn {

struct Dataset {
  SparseDesignMatrix design;
  std::vector<int> labels;  // ±1
  std::string name;
  std::string source;

  Index samples() const { return design.rows(); }
  Index dimension() const { return design.cols(); }
  Index nnz() const { return design.nnz(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return std::nullopt;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

/// Parses `<label> <idx>:<value> ...` lines with 1-based, strictly increasing
/// indices. `#` starts a comment; blank lines are skipped. Labels must be ±1,
/// except files labelled exactly {0,1} (0 → −1) or {1,2} (2 → −1).
/// The dimension is the largest index seen unless `pinned_dimension` is given.
inline Dataset parse_libsvm(std::istream& in, std::string name = {},
                            std::optional<Index> pinned_dimension = std::nullopt) {
  std::vector<std::vector<SparseDesignMatrix::Entry>> rows;
  std::vector<long long> raw_labels;
  std::vector<std::size_t> label_lines;
  Index max_index = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;

    const auto tokens = detail::split_ws(view);
    const auto label = detail::parse_double(tokens[0]);
    if (!label || !std::isfinite(*label) || std::floor(*label) != *label) {
      throw ParseError(lineno, "invalid label '" + std::string(tokens[0]) + "'");
    }

    std::vector<SparseDesignMatrix::Entry> entries;
    entries.reserve(tokens.size() - 1);
    long long prev = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto tok = tokens[t];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(lineno, "expected <index>:<value>, got '" + std::string(tok) + "'");
      }
      const auto idx = detail::parse_int(tok.substr(0, colon));
      const auto val = detail::parse_double(tok.substr(colon + 1));
      if (!idx || *idx < 1) throw ParseError(lineno, "invalid feature index in '" + std::string(tok) + "'");
      if (!val || !std::isfinite(*val)) throw ParseError(lineno, "invalid feature value in '" + std::string(tok) + "'");
      if (*idx <= prev) throw ParseError(lineno, "feature indices must be strictly increasing");
      prev = *idx;
      entries.emplace_back(static_cast<Index>(*idx - 1), *val);
    }
    if (prev > max_index) max_index = static_cast<Index>(prev);
    rows.push_back(std::move(entries));
    raw_labels.push_back(static_cast<long long>(*label));
    label_lines.push_back(lineno);
  }

  const std::set<long long> label_set(raw_labels.begin(), raw_labels.end());
  long long negative_alias = -1;
  if (label_set == std::set<long long>{0, 1}) {
    negative_alias = 0;
  } else if (label_set == std::set<long long>{1, 2}) {
    negative_alias = 2;
  }
  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    const long long b = raw_labels[i];
    if (b == 1) {
      labels.push_back(1);
    } else if (b == -1 || b == negative_alias) {
      labels.push_back(-1);
    } else {
      throw ParseError(label_lines[i], "label " + std::to_string(b) + " cannot be mapped to +1/-1");
    }
  }

  Index dim = max_index;
  if (pinned_dimension) {
    if (*pinned_dimension < max_index) {
      throw ParseError(lineno, "feature index " + std::to_string(max_index) + " exceeds pinned dimension " +
                                   std::to_string(*pinned_dimension));
    }
    dim = *pinned_dimension;
  }

  Dataset ds;
  ds.design = SparseDesignMatrix(dim, rows);
  ds.labels = std::move(labels);
  ds.name = std::move(name);
  return ds;
}

inline Dataset load_libsvm_file(const std::string& path, std::optional<Index> pinned_dimension = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  auto name = path.substr(path.find_last_of('/') + 1);
  Dataset ds = parse_libsvm(in, name, pinned_dimension);
  ds.source = path;
  return ds;
}

inline constexpr std::string_view kTraceHeader =
    "iter,wall_seconds,f,grad_norm_sq,grad_dual_norm,eta,alpha,inner_count,skipped_pairs,fallback,n_value,n_grad,n_hvp";

inline void write_trace_csv(const std::vector<TraceRecord>& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.iter << ',' << format_double(r.wall_seconds) << ',' << format_double(r.f_value) << ','
        << format_double(r.grad_norm_sq) << ',' << format_double(r.grad_dual_norm) << ',' << format_double(r.eta)
        << ',' << format_double(r.alpha) << ',' << r.inner_count << ',' << r.skipped_pairs << ','
        << r.fallback_flags() << ',' << r.counters.value << ',' << r.counters.gradient << ',' << r.counters.hvp
        << '\n';
  }
  if (!out) throw std::runtime_error("write_trace_csv: write failed");
}

inline void write_trace_csv(const RunResult& result, std::ostream& out) { write_trace_csv(result.trace, out); }

inline std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTraceHeader) {
    throw ParseError(1, "trace CSV header mismatch");
  }
  std::vector<TraceRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t b = 0;
    for (std::size_t i = 0; i <= view.size(); ++i) {
      if (i == view.size() || view[i] == ',') {
        cells.push_back(view.substr(b, i - b));
        b = i + 1;
      }
    }
    if (cells.size() != 13) throw ParseError(lineno, "expected 13 columns");
    auto num = [&](std::size_t c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v) throw ParseError(lineno, "bad number '" + std::string(cells[c]) + "'");
      return *v;
    };
    auto integer = [&](std::size_t c) {
      const auto v = detail::parse_int(cells[c]);
      if (!v) throw ParseError(lineno, "bad integer '" + std::string(cells[c]) + "'");
      return *v;
    };
    TraceRecord r;
    r.iter = static_cast<int>(integer(0));
    r.wall_seconds = num(1);
    r.f_value = num(2);
    r.grad_norm_sq = num(3);
    r.grad_dual_norm = num(4);
    r.eta = num(5);
    r.alpha = num(6);
    r.inner_count = static_cast<int>(integer(7));
    r.skipped_pairs = static_cast<int>(integer(8));
    r.set_fallback_flags(static_cast<int>(integer(9)));
    r.counters.value = static_cast<std::uint64_t>(integer(10));
    r.counters.gradient = static_cast<std::uint64_t>(integer(11));
    r.counters.hvp = static_cast<std::uint64_t>(integer(12));
    out.push_back(r);
  }
  return out;
}

/// First completed iteration whose ‖∇f‖² is at or below `target`; 0 if the
/// starting point already qualifies; nullopt if never reached.
inline std::optional<int> iterations_to_target(double grad_norm_sq_initial, const std::vector<TraceRecord>& trace,
                                               double target) {
  if (grad_norm_sq_initial <= target) return 0;
  for (const auto& r : trace) {
    if (r.grad_norm_sq <= target) return r.iter;
  }
  return std::nullopt;
}

inline constexpr double kReportTargets[] = {1e-4, 1e-6, 1e-8};

inline nlohmann::json json_number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

/// Run summary. `config_echo` is the flat configuration document the run was
/// built from.
inline nlohmann::json summarize(const RunResult& result, const nlohmann::json& config_echo,
                                const std::string& status = "ok") {
  using nlohmann::json;
  json s;
  s["status"] = status;
  s["config"] = config_echo;
  s["method"] = to_string(result.config.method);
  s["seed"] = result.seed;
  s["termination"] = status == "ok" ? to_string(result.termination) : "NUMERICAL_FAILURE";
  s["iterations"] = result.iterations();
  s["f_initial"] = json_number_or_null(result.f_initial);
  s["grad_norm_sq_initial"] = json_number_or_null(result.grad_norm_sq_initial);
  s["f_final"] = json_number_or_null(result.f_final);
  s["grad_norm_sq_final"] = json_number_or_null(result.grad_norm_sq_final);
  s["wall_seconds"] = result.wall_seconds;
  s["evaluations"] = {{"value", result.counters.value},
                      {"gradient", result.counters.gradient},
                      {"hvp", result.counters.hvp}};

  int inner_total = 0, cap_hits = 0, indefinite = 0, op_fallback = 0;
  double eta_min = std::numeric_limits<double>::infinity();
  double eta_max = -std::numeric_limits<double>::infinity();
  for (const auto& r : result.trace) {
    inner_total += r.inner_count;
    cap_hits += r.cap_hit ? 1 : 0;
    indefinite += r.indefinite_fallback ? 1 : 0;
    op_fallback += r.operator_fallback ? 1 : 0;
    eta_min = std::min(eta_min, r.eta);
    eta_max = std::max(eta_max, r.eta);
  }
  s["inner_total"] = inner_total;
  s["cap_hits"] = cap_hits;
  s["indefinite_fallbacks"] = indefinite;
  s["operator_fallbacks"] = op_fallback;
  s["eta_min"] = json_number_or_null(eta_min);
  s["eta_max"] = json_number_or_null(eta_max);
  s["alpha_initial"] = result.alpha_initial;
  s["alpha_final"] = result.alpha_final;

  json targets = json::object();
  for (double t : kReportTargets) {
    const auto it = iterations_to_target(result.grad_norm_sq_initial, result.trace, t);
    targets[format_double(t)] = it ? json(*it) : json(nullptr);
  }
  s["iterations_to_target"] = targets;
  return s;
}

inline void write_summary_json(const RunResult& result, const nlohmann::json& config_echo, std::ostream& out,
                               const std::string& status = "ok") {
  out << summarize(result, config_echo, status).dump(2) << '\n';
  if (!out) throw std::runtime_error("write_summary_json: write failed");
}

}  // namespace ceqn
