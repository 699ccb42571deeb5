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

#ifndef INPO_EXPERIMENT_H_
#define INPO_EXPERIMENT_H_

// Experiment configuration, orchestration and metric persistence.
//
// A configuration is a flat text file of `key = value` lines with dotted
// sections; `#` starts a comment. Example:
//
//   game.kind = cyclic
//   game.m = 3
//   game.p = 0.9
//   ref.kind = uniform
//   tau = 0.1
//   algo.kind = omd_exact
//   algo.schedule = theorem2
//   T = 500
//   seed = 7

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inpo/game.h"
#include "inpo/oracle.h"

namespace inpo {

struct ExperimentConfig {
  struct Game {
    std::string kind;  // cyclic | bt | random | matrix
    std::size_t m = 3;
    double p = 0.9;
    std::vector<double> rewards;
    std::uint64_t seed = 0;
    std::string path;
    bool operator==(const Game&) const = default;
  };
  struct Ref {
    std::string kind = "uniform";  // uniform | file
    std::string path;
    bool operator==(const Ref&) const = default;
  };
  struct Algo {
    std::string kind;                   // omd_exact | inpo_sampled | greedy | iterative_dpo
    std::string schedule = "theorem2";  // theorem2 | constant | lemma1
    double eta = 1.0;
    double B = 0.0;
    long n = 1000;
    std::string collection = "plain";  // plain | tournament
    std::size_t K = 8;
    double ridge = 1e-6;
    double beta = 0.1;
    bool operator==(const Algo&) const = default;
  };

  Game game;
  Ref ref;
  double tau = 0.0;
  Algo algo;
  long T = 0;
  std::uint64_t seed = 0;
  std::string output_dir;
  bool oracle_hard = false;

  bool operator==(const ExperimentConfig&) const = default;
};

// Parses and validates a configuration. Relative file paths are resolved
// against `base_dir` and every referenced file is loaded once to validate
// it. Throws ParseError naming the first offending line and key.
ExperimentConfig ParseConfig(std::istream& in, const std::string& base_dir);
ExperimentConfig ParseConfigFile(const std::string& path);

// Canonical text form; ParseConfig(SerializeConfig(c)) == c.
std::string SerializeConfig(const ExperimentConfig& config);

GameSpec BuildGame(const ExperimentConfig& config);
PreferenceOracle BuildOracle(const ExperimentConfig& config);

// One record per update t = 1..T describing the iterate it produced.
struct MetricRecord {
  long t = 0;
  double dual_gap = 0.0;
  std::optional<double> mixture_dual_gap;
  std::optional<double> kl_to_nash;
  std::optional<double> regret_partial;
  long oracle_queries_cumulative = 0;
  std::optional<long> wall_ms;
};

struct ExperimentResult {
  explicit ExperimentResult(Policy initial) : final_policy(std::move(initial)) {}

  std::vector<MetricRecord> metrics;
  Policy final_policy;
  std::optional<Policy> nash;
  double nash_gap = 0.0;  // duality gap of the Nash reference
  double measured_B = 0.0;
  long total_oracle_queries = 0;
  std::vector<std::string> warnings;
  // Per-update planner diagnostics (omd_exact and greedy only), JSONL.
  std::string trace_jsonl;
};

struct RunOptions {
  // Adds wall_ms to metric records; outputs are then no longer
  // byte-reproducible.
  bool record_timing = false;
  // Iteration budget of the Nash reference solve.
  long nash_max_iters = 2'000'000;
};

// Runs the configured algorithm without touching the file system.
ExperimentResult Simulate(const ExperimentConfig& config, RunOptions options = {});

// Simulate and write metrics.jsonl, policy.csv, summary.json (and
// trace.jsonl for planners) under config.output_dir. On failure a summary
// with the error is still written before the exception propagates.
ExperimentResult RunExperiment(const ExperimentConfig& config,
                               RunOptions options = {});

void WriteMetricsJsonl(std::ostream& out, std::span<const MetricRecord> metrics);
std::string SummaryJson(const ExperimentConfig& config,
                        const ExperimentResult& result);

// Runs every config on the shared game and writes one CSV row per series
// and update: series,algorithm,t,oracle_queries_cumulative,dual_gap.
// Throws InvalidArgument when the configs describe different games.
void CompareAlgorithms(std::span<const ExperimentConfig> configs,
                       std::ostream& csv, RunOptions options = {});

}  // namespace inpo

#endif  // INPO_EXPERIMENT_H_
