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

#include "inpo/experiment.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "inpo/learner.h"
#include "inpo/planner.h"
#include "json.hpp"

namespace inpo {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

struct Entry {
  std::string value;
  std::size_t line;
};

// Reads typed values out of the raw key map and reports errors with the
// line and key they came from.
class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> entries)
      : entries_(std::move(entries)) {}

  [[noreturn]] void Fail(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    const std::string where =
        it == entries_.end() ? "config" : "config line " + std::to_string(it->second.line);
    throw ParseError(where + ": key '" + key + "': " + msg);
  }

  bool Has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::string& Raw(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) Fail(key, "missing required key");
    used_.insert(key);
    return it->second.value;
  }

  std::string String(const std::string& key, const std::string& fallback) {
    return Has(key) ? Raw(key) : fallback;
  }

  double Double(const std::string& key, std::optional<double> fallback) {
    if (!Has(key)) {
      if (!fallback) Fail(key, "missing required key");
      return *fallback;
    }
    const std::string& s = Raw(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      Fail(key, "expected a finite number, got '" + s + "'");
    }
    return v;
  }

  long Long(const std::string& key, std::optional<long> fallback) {
    if (!Has(key)) {
      if (!fallback) Fail(key, "missing required key");
      return *fallback;
    }
    const std::string& s = Raw(key);
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      Fail(key, "expected an integer, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t Unsigned(const std::string& key, std::optional<std::uint64_t> fallback) {
    if (!Has(key)) {
      if (!fallback) Fail(key, "missing required key");
      return *fallback;
    }
    const std::string& s = Raw(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      Fail(key, "expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool Bool(const std::string& key, bool fallback) {
    if (!Has(key)) return fallback;
    const std::string& s = Raw(key);
    if (s == "true") return true;
    if (s == "false") return false;
    Fail(key, "expected true or false, got '" + s + "'");
  }

  std::string OneOf(const std::string& key, const std::vector<std::string>& options,
                    std::optional<std::string> fallback) {
    if (!Has(key) && fallback) return *fallback;
    const std::string& s = Raw(key);
    if (std::find(options.begin(), options.end(), s) == options.end()) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : "|") + o;
      Fail(key, "expected one of " + list + ", got '" + s + "'");
    }
    return s;
  }

  void Require(bool ok, const std::string& key, const std::string& msg) const {
    if (!ok) Fail(key, msg);
  }

  void RejectUnused() const {
    for (const auto& [key, entry] : entries_) {
      if (!used_.count(key)) {
        throw ParseError("config line " + std::to_string(entry.line) +
                         ": unknown or inapplicable key '" + key + "'");
      }
    }
  }

 private:
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

std::string ResolvePath(const std::string& path, const std::string& base_dir) {
  fs::path p(path);
  if (p.is_relative()) p = fs::path(base_dir) / p;
  return fs::absolute(p).lexically_normal().string();
}

std::string JoinDoubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += FormatDouble(v[i]);
  }
  return out;
}

std::optional<double> At(const std::vector<double>& v, std::size_t i) {
  if (i < v.size()) return v[i];
  return std::nullopt;
}

json Opt(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

StepSchedule MakeSchedule(const ExperimentConfig& c, const Policy& ref) {
  if (c.algo.schedule == "constant") return StepSchedule::Constant(c.algo.eta);
  if (c.algo.schedule == "lemma1") {
    return StepSchedule::Lemma1(c.T, c.algo.B, KappaBound(ref));
  }
  return StepSchedule::Theorem2();
}

CollectionMode MakeCollection(const ExperimentConfig& c) {
  return c.algo.collection == "tournament" ? CollectionMode::Tournament(c.algo.K)
                                           : CollectionMode::Plain();
}

void FromPlanner(const PlannerTrace& trace, ExperimentResult& r) {
  for (long t = 1; t <= trace.iterations(); ++t) {
    const auto k = static_cast<std::size_t>(t - 1);
    MetricRecord rec;
    rec.t = t;
    rec.dual_gap = trace.dual_gaps[k + 1];
    rec.mixture_dual_gap = At(trace.mixture_dual_gaps, k);
    rec.kl_to_nash = At(trace.kl_to_nash, k + 1);
    rec.regret_partial = At(trace.regret_partials, k);
    r.metrics.push_back(rec);
  }
  r.final_policy = trace.policies.back();
  r.measured_B = trace.measured_B;
  r.warnings = trace.warnings;
  std::ostringstream ss;
  WriteTraceJsonl(ss, trace);
  r.trace_jsonl = ss.str();
}

void FromRun(const RunTrace& trace, const Policy& ref, ExperimentResult& r) {
  for (long t = 1; t <= trace.iterations(); ++t) {
    const auto k = static_cast<std::size_t>(t);
    MetricRecord rec;
    rec.t = t;
    rec.dual_gap = trace.dual_gaps[k];
    rec.kl_to_nash = At(trace.kl_to_nash, k);
    rec.oracle_queries_cumulative = trace.oracle_queries_cumulative[k - 1];
    r.metrics.push_back(rec);
  }
  r.final_policy = trace.policies.back();
  r.measured_B = MeasureB(trace.policies, ref);
  r.total_oracle_queries = trace.oracle_queries_cumulative.back();
  r.warnings = trace.warnings;
}

void WriteFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << content;
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

ExperimentConfig ParseConfig(std::istream& in, const std::string& base_dir) {
  std::map<std::string, Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (value.empty()) throw ParseError(where + ": key '" + key + "': empty value");
    if (!entries.emplace(key, Entry{value, line_no}).second) {
      throw ParseError(where + ": key '" + key + "': duplicate key");
    }
  }

  Reader r(std::move(entries));
  ExperimentConfig c;

  c.game.kind = r.OneOf("game.kind", {"cyclic", "bt", "random", "matrix"}, std::nullopt);
  if (c.game.kind == "cyclic") {
    const long m = r.Long("game.m", 3);
    r.Require(m >= 3, "game.m", "cyclic games need m >= 3");
    c.game.m = static_cast<std::size_t>(m);
    c.game.p = r.Double("game.p", 0.9);
    r.Require(c.game.p > 0.5 && c.game.p <= 1.0, "game.p", "must lie in (0.5, 1]");
  } else if (c.game.kind == "bt") {
    const std::string& raw = r.Raw("game.rewards");
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = Trim(item);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      r.Require(ec == std::errc() && ptr == item.data() + item.size() && std::isfinite(v),
                "game.rewards", "bad reward '" + item + "'");
      c.game.rewards.push_back(v);
    }
    r.Require(c.game.rewards.size() >= 2, "game.rewards", "need at least 2 rewards");
    c.game.m = c.game.rewards.size();
  } else if (c.game.kind == "random") {
    const long m = r.Long("game.m", std::nullopt);
    r.Require(m >= 2, "game.m", "must be >= 2");
    c.game.m = static_cast<std::size_t>(m);
    c.game.seed = r.Unsigned("game.seed", 0);
  } else {
    c.game.path = ResolvePath(r.Raw("game.path"), base_dir);
    try {
      c.game.m = LoadPreferenceCsv(c.game.path).space.size();
    } catch (const std::exception& e) {
      r.Fail("game.path", e.what());
    }
  }

  c.ref.kind = r.OneOf("ref.kind", {"uniform", "file"}, "uniform");
  if (c.ref.kind == "file") c.ref.path = ResolvePath(r.Raw("ref.path"), base_dir);

  c.tau = r.Double("tau", std::nullopt);
  r.Require(c.tau >= 0.0, "tau", "must be >= 0");

  c.algo.kind = r.OneOf("algo.kind", {"omd_exact", "inpo_sampled", "greedy", "iterative_dpo"},
                        std::nullopt);
  if (c.algo.kind == "omd_exact") {
    c.algo.schedule = r.OneOf("algo.schedule", {"theorem2", "constant", "lemma1"}, "theorem2");
    if (c.algo.schedule == "constant") {
      c.algo.eta = r.Double("algo.eta", std::nullopt);
      r.Require(c.algo.eta > 0.0, "algo.eta", "must be > 0");
    } else if (c.algo.schedule == "lemma1") {
      c.algo.B = r.Double("algo.B", 0.0);
      r.Require(c.algo.B >= 0.0, "algo.B", "must be >= 0");
    } else {
      r.Require(c.tau > 0.0, "algo.schedule", "theorem2 needs tau > 0");
    }
  } else if (c.algo.kind == "greedy") {
    r.Require(c.tau > 0.0, "algo.kind", "greedy self-play needs tau > 0");
  } else {
    if (c.algo.kind == "inpo_sampled") {
      c.algo.eta = r.Double("algo.eta", std::nullopt);
      r.Require(c.algo.eta > 0.0, "algo.eta", "must be > 0");
    } else {
      c.algo.beta = r.Double("algo.beta", 0.1);
      r.Require(c.algo.beta > 0.0, "algo.beta", "must be > 0");
    }
    c.algo.n = r.Long("algo.n", 1000);
    r.Require(c.algo.n >= 1, "algo.n", "must be >= 1");
    c.algo.collection = r.OneOf("algo.collection", {"plain", "tournament"}, "plain");
    if (c.algo.collection == "tournament") {
      const long K = r.Long("algo.K", 8);
      r.Require(K >= 2 && std::has_single_bit(static_cast<unsigned long>(K)), "algo.K",
                "must be a power of two >= 2");
      c.algo.K = static_cast<std::size_t>(K);
    }
    c.algo.ridge = r.Double("algo.ridge", 1e-6);
    r.Require(c.algo.ridge >= 0.0, "algo.ridge", "must be >= 0");
    if (c.algo.kind == "iterative_dpo") {
      r.Require(c.algo.ridge > 0.0, "algo.ridge", "iterative DPO needs ridge > 0");
    }
  }

  c.T = r.Long("T", std::nullopt);
  r.Require(c.T >= 1, "T", "must be >= 1");
  c.seed = r.Unsigned("seed", std::nullopt);
  c.output_dir = r.String("output_dir", "");
  c.oracle_hard = r.Bool("oracle.hard", false);
  r.RejectUnused();

  // Referenced files and the assembled game must load before any run.
  try {
    BuildGame(c);
  } catch (const std::exception& e) {
    r.Fail(c.ref.kind == "file" ? "ref.path" : "game.kind", e.what());
  }
  return c;
}

ExperimentConfig ParseConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  const fs::path dir = fs::path(path).parent_path();
  return ParseConfig(in, dir.empty() ? "." : dir.string());
}

std::string SerializeConfig(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "game.kind = " << c.game.kind << '\n';
  if (c.game.kind == "cyclic") {
    out << "game.m = " << c.game.m << '\n';
    out << "game.p = " << FormatDouble(c.game.p) << '\n';
  } else if (c.game.kind == "bt") {
    out << "game.rewards = " << JoinDoubles(c.game.rewards) << '\n';
  } else if (c.game.kind == "random") {
    out << "game.m = " << c.game.m << '\n';
    out << "game.seed = " << c.game.seed << '\n';
  } else {
    out << "game.path = " << c.game.path << '\n';
  }
  out << "ref.kind = " << c.ref.kind << '\n';
  if (c.ref.kind == "file") out << "ref.path = " << c.ref.path << '\n';
  out << "tau = " << FormatDouble(c.tau) << '\n';
  out << "algo.kind = " << c.algo.kind << '\n';
  if (c.algo.kind == "omd_exact") {
    out << "algo.schedule = " << c.algo.schedule << '\n';
    if (c.algo.schedule == "constant") out << "algo.eta = " << FormatDouble(c.algo.eta) << '\n';
    if (c.algo.schedule == "lemma1") out << "algo.B = " << FormatDouble(c.algo.B) << '\n';
  } else if (c.algo.kind != "greedy") {
    if (c.algo.kind == "inpo_sampled") {
      out << "algo.eta = " << FormatDouble(c.algo.eta) << '\n';
    } else {
      out << "algo.beta = " << FormatDouble(c.algo.beta) << '\n';
    }
    out << "algo.n = " << c.algo.n << '\n';
    out << "algo.collection = " << c.algo.collection << '\n';
    if (c.algo.collection == "tournament") out << "algo.K = " << c.algo.K << '\n';
    out << "algo.ridge = " << FormatDouble(c.algo.ridge) << '\n';
  }
  out << "T = " << c.T << '\n';
  out << "seed = " << c.seed << '\n';
  if (!c.output_dir.empty()) out << "output_dir = " << c.output_dir << '\n';
  if (c.oracle_hard) out << "oracle.hard = true\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Construction

GameSpec BuildGame(const ExperimentConfig& c) {
  std::optional<ResponseSpace> space;
  std::optional<PreferenceMatrix> pref;
  if (c.game.kind == "cyclic") {
    pref = CyclicMatrix(c.game.m, c.game.p);
  } else if (c.game.kind == "bt") {
    pref = BtMatrix(c.game.rewards);
  } else if (c.game.kind == "random") {
    Rng rng(c.game.seed);
    pref = RandomPreferenceMatrix(c.game.m, rng);
  } else if (c.game.kind == "matrix") {
    LoadedMatrix loaded = LoadPreferenceCsv(c.game.path);
    space = std::move(loaded.space);
    pref = std::move(loaded.pref);
  } else {
    throw InvalidArgument("unknown game kind '" + c.game.kind + "'");
  }
  if (!space) space = ResponseSpace::Indexed(pref->size());
  Policy ref = c.ref.kind == "file" ? LoadPolicyCsv(c.ref.path, *space)
                                    : Policy::Uniform(space->size());
  return GameSpec(std::move(*space), std::move(*pref), std::move(ref), c.tau);
}

PreferenceOracle BuildOracle(const ExperimentConfig& c) {
  OracleSource source = [&]() -> OracleSource {
    if (c.game.kind == "cyclic") return CyclicSource{c.game.m, c.game.p};
    if (c.game.kind == "bt") return BradleyTerrySource{c.game.rewards};
    return MatrixSource{BuildGame(c).pref};
  }();
  return PreferenceOracle(std::move(source), DeriveSeed(c.seed, 0), c.oracle_hard);
}

// ---------------------------------------------------------------------------
// Running

ExperimentResult Simulate(const ExperimentConfig& c, RunOptions options) {
  const GameSpec spec = BuildGame(c);
  ExperimentResult r(spec.ref_policy);

  if (spec.tau > 0.0) {
    try {
      r.nash = NashSolve(spec, 1e-12, options.nash_max_iters);
    } catch (const ConvergenceError& e) {
      r.nash = e.best();
      r.warnings.push_back("Nash reference is approximate (duality gap " +
                           FormatDouble(e.best_gap()) + ")");
    }
    r.nash_gap = DualityGap(spec, *r.nash);
  }
  std::vector<std::string> nash_warnings = r.warnings;

  const auto start = std::chrono::steady_clock::now();
  if (c.algo.kind == "omd_exact") {
    FromPlanner(RunPlanner(spec, MakeSchedule(c, spec.ref_policy), c.T, r.nash), r);
  } else if (c.algo.kind == "greedy") {
    FromPlanner(RunGreedy(spec, c.T, r.nash), r);
  } else {
    PreferenceOracle oracle = BuildOracle(c);
    const std::uint64_t data_seed = DeriveSeed(c.seed, 1);
    RunTrace trace;
    if (c.algo.kind == "inpo_sampled") {
      const LearnConfig lc{c.algo.eta, c.tau, c.algo.ridge,
                           LearnMode::Sampled(c.algo.n, MakeCollection(c))};
      trace = RunInpo(spec, oracle, c.T, lc, r.nash, data_seed);
    } else {
      trace = RunIterativeDpo(spec, oracle, c.T, c.algo.beta, c.algo.n, MakeCollection(c),
                              c.algo.ridge, r.nash, data_seed);
    }
    FromRun(trace, spec.ref_policy, r);
    if (r.total_oracle_queries != oracle.query_count()) {
      throw InvalidArgument("query accounting mismatch between trace and oracle");
    }
  }
  r.warnings.insert(r.warnings.begin(), nash_warnings.begin(), nash_warnings.end());
  if (options.record_timing) {
    // Runs are not instrumented per update; the total is spread evenly.
    const auto total = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    for (auto& rec : r.metrics) {
      rec.wall_ms = static_cast<long>(total * rec.t / static_cast<long>(r.metrics.size()));
    }
  }
  return r;
}

void WriteMetricsJsonl(std::ostream& out, std::span<const MetricRecord> metrics) {
  for (const auto& m : metrics) {
    json rec;
    rec["t"] = m.t;
    rec["dual_gap"] = m.dual_gap;
    rec["mixture_dual_gap"] = Opt(m.mixture_dual_gap);
    rec["kl_to_nash"] = Opt(m.kl_to_nash);
    rec["regret_partial"] = Opt(m.regret_partial);
    rec["oracle_queries_cumulative"] = m.oracle_queries_cumulative;
    if (m.wall_ms) rec["wall_ms"] = *m.wall_ms;
    out << rec.dump() << '\n';
  }
}

std::string SummaryJson(const ExperimentConfig& c, const ExperimentResult& r) {
  json s;
  s["status"] = "ok";
  s["seed"] = c.seed;
  s["algorithm"] = c.algo.kind;
  s["T"] = c.T;
  s["tau"] = c.tau;
  s["final_dual_gap"] = r.metrics.empty() ? json(nullptr) : json(r.metrics.back().dual_gap);
  s["final_kl_to_nash"] =
      r.metrics.empty() ? json(nullptr) : Opt(r.metrics.back().kl_to_nash);
  s["measured_B"] = r.measured_B;
  s["total_oracle_queries"] = r.total_oracle_queries;
  s["nash_duality_gap"] = r.nash ? json(r.nash_gap) : json(nullptr);
  if (c.algo.kind == "omd_exact" && c.algo.schedule == "theorem2") {
    const double C = std::max(r.measured_B * c.tau, 1.0);
    s["theorem2_bound"] = Theorem2Bound(C, c.tau, c.T);
  }
  s["warnings"] = r.warnings;
  return s.dump(2) + "\n";
}

ExperimentResult RunExperiment(const ExperimentConfig& c, RunOptions options) {
  if (c.output_dir.empty()) throw InvalidArgument("RunExperiment: output_dir is empty");
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  std::optional<ExperimentResult> result;
  try {
    result.emplace(Simulate(c, options));
  } catch (const std::exception& e) {
    json s;
    s["status"] = "failed";
    s["seed"] = c.seed;
    s["algorithm"] = c.algo.kind;
    s["error"] = e.what();
    WriteFile(dir / "summary.json", s.dump(2) + "\n");
    throw;
  }
  const ExperimentResult& r = *result;
  std::ostringstream metrics;
  WriteMetricsJsonl(metrics, r.metrics);
  WriteFile(dir / "metrics.jsonl", metrics.str());

  const GameSpec spec = BuildGame(c);
  std::ostringstream policy;
  policy << "# seed: " << c.seed << '\n';
  WritePolicyCsv(policy, spec.space, r.final_policy);
  WriteFile(dir / "policy.csv", policy.str());

  if (!r.trace_jsonl.empty()) WriteFile(dir / "trace.jsonl", r.trace_jsonl);
  WriteFile(dir / "summary.json", SummaryJson(c, r));
  return std::move(*result);
}

void CompareAlgorithms(std::span<const ExperimentConfig> configs, std::ostream& csv,
                       RunOptions options) {
  if (configs.empty()) throw InvalidArgument("CompareAlgorithms: no configs");
  const GameSpec shared = BuildGame(configs.front());
  for (const auto& c : configs) {
    if (!(BuildGame(c) == shared)) {
      throw InvalidArgument("CompareAlgorithms: configs describe different games");
    }
  }
  csv << "series,algorithm,t,oracle_queries_cumulative,dual_gap\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const ExperimentResult r = Simulate(configs[i], options);
    for (const auto& m : r.metrics) {
      csv << i << ',' << configs[i].algo.kind << ',' << m.t << ','
          << m.oracle_queries_cumulative << ',' << FormatDouble(m.dual_gap) << '\n';
    }
  }
}

}  // namespace inpo
