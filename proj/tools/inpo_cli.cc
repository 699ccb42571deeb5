// Copyright 2026 The INPO Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: solve, plan, learn, compare, verify.
//
// Exit codes: 0 success, 1 configuration or input error, 2 solver
// non-convergence, 3 verification failure.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "inpo/experiment.h"
#include "inpo/game.h"
#include "inpo/verify.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitVerify = 3;

struct Globals {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

// --out wins, then the config's output_dir, then $INPO_OUTPUT_ROOT/<name>,
// then ./runs/<name>.
std::string OutputDir(const Globals& g, const std::string& from_config,
                      const std::string& name) {
  if (!g.out.empty()) return g.out;
  if (!from_config.empty()) return from_config;
  const char* root = std::getenv("INPO_OUTPUT_ROOT");
  return (fs::path(root && *root ? root : "runs") / name).string();
}

inpo::ExperimentConfig LoadConfig(const Globals& g, const std::string& path) {
  inpo::ExperimentConfig c = inpo::ParseConfigFile(path);
  if (g.seed) c.seed = *g.seed;
  c.output_dir = OutputDir(g, c.output_dir, fs::path(path).stem().string());
  return c;
}

const std::string& SingleConfig(const Globals& g) {
  if (g.configs.size() != 1) {
    throw inpo::InvalidArgument("expected exactly one --config");
  }
  return g.configs.front();
}

void Say(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cout << msg << '\n';
}

int RunConfigured(const Globals& g, const std::vector<std::string>& allowed) {
  const inpo::ExperimentConfig c = LoadConfig(g, SingleConfig(g));
  if (std::find(allowed.begin(), allowed.end(), c.algo.kind) == allowed.end()) {
    throw inpo::InvalidArgument("algo.kind '" + c.algo.kind +
                                "' is not handled by this subcommand");
  }
  const inpo::ExperimentResult r = inpo::RunExperiment(c);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  const auto& last = r.metrics.back();
  Say(g, "wrote " + c.output_dir + "; final duality gap " +
             inpo::FormatDouble(last.dual_gap) + ", oracle queries " +
             std::to_string(r.total_oracle_queries));
  return kExitOk;
}

int Solve(const Globals& g, const std::string& matrix, std::optional<double> tau,
          const std::string& ref_path, double tol, long max_iters) {
  std::optional<inpo::GameSpec> spec;
  std::string name = "solve";
  std::optional<std::uint64_t> seed = g.seed;
  std::string config_out;
  if (!matrix.empty()) {
    if (!tau) throw inpo::InvalidArgument("solve --matrix needs --tau");
    inpo::LoadedMatrix m = inpo::LoadPreferenceCsv(matrix);
    inpo::Policy ref = ref_path.empty() ? inpo::Policy::Uniform(m.space.size())
                                        : inpo::LoadPolicyCsv(ref_path, m.space);
    spec.emplace(std::move(m.space), std::move(m.pref), std::move(ref), *tau);
    name = fs::path(matrix).stem().string();
  } else {
    const inpo::ExperimentConfig c = LoadConfig(g, SingleConfig(g));
    spec.emplace(inpo::BuildGame(c));
    if (tau) spec->tau = *tau;
    seed = c.seed;
    config_out = c.output_dir;
  }
  const fs::path dir = OutputDir(g, config_out, name);
  fs::create_directories(dir);

  int code = kExitOk;
  std::optional<inpo::Policy> nash;
  try {
    nash = inpo::NashSolve(*spec, tol, max_iters);
  } catch (const inpo::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    nash = e.best();
    code = kExitNoConvergence;
  }
  std::ofstream out(dir / "nash.csv");
  if (seed) out << "# seed: " << *seed << '\n';
  inpo::WritePolicyCsv(out, spec->space, *nash);
  Say(g, "wrote " + (dir / "nash.csv").string() + "; duality gap " +
             inpo::FormatDouble(inpo::DualityGap(*spec, *nash)));
  return code;
}

int Compare(const Globals& g) {
  if (g.configs.empty()) throw inpo::InvalidArgument("compare needs --config");
  std::vector<inpo::ExperimentConfig> configs;
  for (const auto& path : g.configs) configs.push_back(LoadConfig(g, path));
  const fs::path dir = OutputDir(g, "", "compare");
  fs::create_directories(dir);
  std::ofstream csv(dir / "comparison.csv");
  inpo::CompareAlgorithms(configs, csv);
  Say(g, "wrote " + (dir / "comparison.csv").string());
  return kExitOk;
}

int Verify(const Globals& g, int games) {
  inpo::VerifyOptions o;
  if (g.seed) o.seed = *g.seed;
  o.games = games;
  const auto start = std::chrono::steady_clock::now();
  const auto checks = inpo::RunVerifySuite(o);
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path dir = OutputDir(g, "", "verify");
  fs::create_directories(dir);
  std::ofstream report(dir / "verify_report.json");
  inpo::WriteVerifyReport(report, checks, total);
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.passed;
    Say(g, std::string(c.passed ? "PASS " : "FAIL ") + c.name + ": " + c.detail);
  }
  Say(g, "wrote " + (dir / "verify_report.json").string());
  return all ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"INPO workbench: preference games, mirror descent and INPO"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.configs, "Experiment config file (repeatable for compare)");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string matrix, ref_path;
  std::optional<double> tau;
  double tol = 1e-12;
  long max_iters = 2'000'000;
  auto* solve = app.add_subcommand("solve", "Nash policy of a preference game");
  solve->add_option("--matrix", matrix, "Preference matrix CSV");
  solve->add_option("--tau", tau, "Regularization weight");
  solve->add_option("--ref", ref_path, "Reference policy CSV (default uniform)");
  solve->add_option("--tol", tol, "Duality-gap tolerance");
  solve->add_option("--max-iters", max_iters, "Iteration budget");

  auto* plan = app.add_subcommand("plan", "Exact mirror descent or greedy self-play");
  auto* learn = app.add_subcommand("learn", "Sampled INPO or iterative DPO");
  auto* compare = app.add_subcommand("compare", "Compare configs on a shared game");
  int games = 10;
  auto* verify = app.add_subcommand("verify", "Run the verification suite");
  verify->add_option("--games", games, "Random games per check")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*solve) return Solve(g, matrix, tau, ref_path, tol, max_iters);
    if (*plan) return RunConfigured(g, {"omd_exact", "greedy"});
    if (*learn) return RunConfigured(g, {"inpo_sampled", "iterative_dpo"});
    if (*compare) return Compare(g);
    if (*verify) return Verify(g, games);
  } catch (const inpo::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
