// ceqn-bench: single runs, grid sweeps, comparisons and dataset fetching.

#include <ceqn/ceqn.hpp>

#include <CLI11.hpp>

#include "fetch_data.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int cmd_run(const std::string& config, const std::string& out, std::optional<long long> seed,
            const std::vector<std::string>& overrides) {
  auto ov = overrides;
  if (seed) ov.push_back("seed=" + std::to_string(*seed));
  const auto spec = ceqn::load_config(config, ov);
  const auto problem = ceqn::make_problem(spec);
  const auto outcome = ceqn::bench::execute_run(spec, *problem, out);
  std::cout << json{{"run_id", outcome.run_id},
                    {"status", outcome.status},
                    {"termination", outcome.summary.at("termination")},
                    {"iterations", outcome.summary.at("iterations")},
                    {"f_final", outcome.summary.at("f_final")},
                    {"grad_norm_sq_final", outcome.summary.at("grad_norm_sq_final")},
                    {"dir", (fs::path(out) / outcome.run_id).string()}}
                   .dump()
            << '\n';
  if (outcome.status != "ok") {
    std::cerr << "error: " << outcome.error << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_grid(const std::string& config, const std::string& out, const std::vector<long long>& seeds,
             const std::vector<std::string>& presets, const std::vector<std::string>& axes,
             const std::vector<std::string>& overrides, int jobs) {
  auto doc = ceqn::read_config_document(config);
  for (const auto& o : overrides) ceqn::apply_override(doc, o);

  ceqn::bench::GridOptions options;
  options.jobs = jobs;
  for (const auto& p : presets) options.axes.push_back(ceqn::bench::parse_grid_axis("L=" + p));
  for (const auto& a : axes) options.axes.push_back(ceqn::bench::parse_grid_axis(a));
  if (options.axes.empty()) options.axes.push_back({"L", ceqn::bench::a9a_grid()});
  options.seeds.clear();
  if (seeds.empty()) {
    for (std::uint64_t s = 0; s < 5; ++s) options.seeds.push_back(s);
  } else {
    for (auto s : seeds) {
      if (s < 0) throw ceqn::ConfigError("seeds must be >= 0");
      options.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }

  const auto report = ceqn::bench::run_grid(doc, fs::path(config).parent_path(), options, out);
  std::size_t failed = 0;
  for (const auto& r : report.at("rows")) failed += r.at("status") == "ok" ? 0 : 1;
  std::cout << json{{"rows", report.at("rows").size()},
                    {"failed", failed},
                    {"winner", report.at("winner")},
                    {"report", (fs::path(out) / "grid-report.json").string()}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<ceqn::bench::RunSet> sets;
  for (const auto& d : dirs) sets.push_back(ceqn::bench::load_run_set(d));
  const auto report = ceqn::bench::compare_run_sets(sets);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream js(fs::path(out) / "compare-report.json");
    js << report.dump(2) << '\n';
    std::ofstream txt(fs::path(out) / "compare-report.txt");
    txt << ceqn::bench::render_compare_text(report);
  }
  std::cout << report.dump(2) << '\n' << ceqn::bench::render_compare_text(report);
  return kExitOk;
}

int cmd_fetch(const std::string& dataset, const std::string& out, const std::optional<std::string>& sha) {
  const auto path = ceqn::fetch::fetch_dataset(dataset, out, sha);
  std::cout << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CEQN quasi-Newton benchmark harness"};
  app.require_subcommand(1);

  std::string config, out = "runs";
  std::vector<std::string> overrides;
  std::optional<long long> run_seed;
  auto* run = app.add_subcommand("run", "execute one configuration");
  run->add_option("--config", config, "flat JSON run configuration")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output root");
  run->add_option("--seed", run_seed, "override the config seed");
  run->add_option("--override", overrides, "key=value override (repeatable)");

  std::vector<long long> grid_seeds;
  std::vector<std::string> presets, axes;
  int jobs = 1;
  auto* grid = app.add_subcommand("grid", "sweep a parameter grid over seeds");
  grid->add_option("--config", config, "base configuration")->required()->check(CLI::ExistingFile);
  grid->add_option("--out", out, "output root");
  grid->add_option("--seed", grid_seeds, "seed (repeatable; default 0..4)");
  grid->add_option("--grid-preset", presets, "L grid preset: a9a-grid, realsim-grid (append 0 to include zero)");
  grid->add_option("--grid", axes, "axis as name=preset or name=v1,v2,... (repeatable, crossed)");
  grid->add_option("--override", overrides, "key=value override (repeatable)");
  grid->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  std::vector<std::string> dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "compare completed run sets");
  compare->add_option("dirs", dirs, "run set directories")->required()->expected(2, -1);
  compare->add_option("--out", compare_out, "write compare-report.{json,txt} here");

  std::string dataset;
  std::optional<std::string> sha;
  auto* fetch = app.add_subcommand("fetch-data", "download a LIBSVM dataset and verify its content hash");
  fetch->add_option("--dataset", dataset, "a9a, a9a.t or real-sim")->required();
  fetch->add_option("--out", out, "destination directory");
  fetch->add_option("--sha256", sha, "expected content hash");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out, run_seed, overrides);
    if (*grid) return cmd_grid(config, out, grid_seeds, presets, axes, overrides, jobs);
    if (*compare) return cmd_compare(dirs, compare_out);
    if (*fetch) return cmd_fetch(dataset, out, sha);
  } catch (const ceqn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ceqn::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ceqn::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
