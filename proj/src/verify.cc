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

#include "inpo/verify.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include "inpo/game.h"
#include "inpo/learner.h"
#include "inpo/oracle.h"
#include "inpo/planner.h"
#include "json.hpp"

namespace inpo {

namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Wraps a check body with timing.
CheckResult Timed(const std::string& name, const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.name = name;
  const auto start = Clock::now();
  body(r);
  r.seconds = Since(start);
  return r;
}

constexpr double kTaus[] = {0.1, 0.5, 1.0};
constexpr long kNashIters = 20'000'000;

GameSpec RandomGame(std::size_t m, double tau, Rng& rng) {
  return GameSpec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                  RandomPolicy(m, rng, 2.0), tau);
}

// The suite's random games: m = 8, tau cycling through kTaus.
std::vector<GameSpec> SuiteGames(const VerifyOptions& o, std::uint64_t stream) {
  Rng rng(o.seed, stream);
  std::vector<GameSpec> games;
  for (int g = 0; g < o.games; ++g) games.push_back(RandomGame(8, kTaus[g % 3], rng));
  return games;
}

GameSpec CyclicBenchmark(double tau) {
  return GameSpec::WithUniformRef(CyclicMatrix(3, 0.9), tau);
}

// Runs the fixed-horizon schedule, re-running with the measured B while
// that raises max(B tau, 1), so the step matches the realized iterates.
PlannerTrace RunLemma1Calibrated(const GameSpec& spec, long T,
                                 const std::optional<Policy>& nash) {
  const double kappa = KappaBound(spec.ref_policy);
  double B = 0.0;
  PlannerTrace trace =
      RunPlanner(spec, StepSchedule::Lemma1(T, B, kappa), T, nash, {false});
  for (int round = 0; round < 5; ++round) {
    if (std::max(trace.measured_B * spec.tau, 1.0) <= std::max(B * spec.tau, 1.0)) break;
    B = trace.measured_B;
    trace = RunPlanner(spec, StepSchedule::Lemma1(T, B, kappa), T, nash, {false});
  }
  return trace;
}

std::string Fmt(double x) { return FormatDouble(x); }

}  // namespace

CheckResult CheckNashCorrectness(const VerifyOptions&) {
  return Timed("NashCorrectness", [](CheckResult& r) {
    r.threshold = 1e-6;
    const auto t0 = Clock::now();
    const GameSpec two = GameSpec::WithUniformRef(
        PreferenceMatrix({{0.5, 0.8}, {0.2, 0.5}}), 0.5);
    const Policy a = NashSolve(two, 1e-14, kNashIters);
    const double err_two = std::abs(a[0] - Sigmoid(0.6));
    const double secs_two = Since(t0);

    const auto t1 = Clock::now();
    const Policy b = NashSolve(CyclicBenchmark(0.1), 1e-14, kNashIters);
    const double err_cyc = SupDistance(b, Policy::Uniform(3));
    const double secs_cyc = Since(t1);

    r.measured = std::max(err_two, err_cyc);
    r.passed = r.measured <= r.threshold && secs_two < 1.0 && secs_cyc < 1.0;
    r.detail = "two-response error " + Fmt(err_two) + " in " + Fmt(secs_two) +
               " s; cyclic error " + Fmt(err_cyc) + " in " + Fmt(secs_cyc) + " s";
  });
}

CheckResult CheckTheorem2Rate(const VerifyOptions& o) {
  return Timed("Theorem2-rate", [&](CheckResult& r) {
    r.threshold = 1.0;
    constexpr long kT = 1000;
    std::vector<GameSpec> games = SuiteGames(o, 1);
    games.push_back(CyclicBenchmark(0.1));
    double worst = 0.0;
    double cyclic_kl = 0.0;
    for (const GameSpec& spec : games) {
      const Policy nash = NashSolve(spec, 1e-14, kNashIters);
      const PlannerTrace trace =
          RunPlanner(spec, StepSchedule::Theorem2(), kT, nash, {false});
      const double C = std::max(trace.measured_B * spec.tau, 1.0);
      // policies[T - 1] is pi_T.
      for (long T = 1; T <= kT; ++T) {
        const double kl = trace.kl_to_nash[static_cast<std::size_t>(T - 1)];
        worst = std::max(worst, kl / Theorem2Bound(C, spec.tau, T));
      }
      cyclic_kl = trace.kl_to_nash[kT - 1];
    }
    r.measured = worst;
    r.passed = worst <= 1.0 && cyclic_kl <= 1e-3;
    r.detail = "worst KL/bound " + Fmt(worst) + " over " + std::to_string(games.size()) +
               " games; cyclic KL(nash, pi_1000) = " + Fmt(cyclic_kl) + " (limit 1e-3)";
  });
}

CheckResult CheckTheorem2Recursion(const VerifyOptions& o) {
  return Timed("Theorem2-recursion", [&](CheckResult& r) {
    r.threshold = 0.0;
    long violations = 0;
    long steps = 0;
    for (const GameSpec& spec : SuiteGames(o, 2)) {
      const Policy nash = NashSolve(spec, 1e-14, kNashIters);
      const PlannerTrace trace =
          RunPlanner(spec, StepSchedule::Theorem2(), 200, nash, {false});
      for (bool ok : VerifyKlRecursion(trace, nash, spec.tau, trace.etas)) {
        violations += !ok;
        ++steps;
      }
    }
    r.measured = static_cast<double>(violations);
    r.passed = violations == 0;
    r.detail = std::to_string(violations) + " violations over " + std::to_string(steps) +
               " updates";
  });
}

CheckResult CheckLemma1Bound(const VerifyOptions& o) {
  return Timed("Lemma1-bound", [&](CheckResult& r) {
    r.threshold = 1.0;
    double worst = 0.0;
    for (const GameSpec& spec : SuiteGames(o, 3)) {
      const Policy nash = NashSolve(spec, 1e-14, kNashIters);
      for (long T : {64L, 256L, 1024L}) {
        const PlannerTrace trace = RunLemma1Calibrated(spec, T, nash);
        const double bound =
            Lemma1ExplicitBound(trace.etas.front(), KlDivergence(nash, spec.ref_policy),
                                spec.tau, trace.measured_B, T);
        worst = std::max(worst, Regret(trace, nash) / bound);
      }
    }
    r.measured = worst;
    r.passed = worst <= 1.0;
    r.detail = "worst regret/bound " + Fmt(worst);
  });
}

CheckResult CheckTheorem1Rate(const VerifyOptions& o) {
  return Timed("Theorem1-rate", [&](CheckResult& r) {
    r.threshold = 3.0;
    double worst = 0.0;
    for (const GameSpec& spec : SuiteGames(o, 4)) {
      auto scaled = [&](long T) {
        const PlannerTrace trace = RunLemma1Calibrated(spec, T, std::nullopt);
        return DualityGap(spec, MixturePolicy(trace, T)) * std::sqrt(static_cast<double>(T));
      };
      const double base = scaled(64);
      for (long T : {128L, 256L, 512L, 1024L}) worst = std::max(worst, scaled(T) / base);
    }
    r.measured = worst;
    r.passed = worst <= 3.0;
    r.detail = "worst gap*sqrt(T) relative to T = 64: " + Fmt(worst);
  });
}

CheckResult CheckLemma2Uniqueness(const VerifyOptions& o) {
  return Timed("Lemma2-uniqueness", [&](CheckResult& r) {
    r.threshold = 1e-8;
    Rng rng(o.seed, 5);
    double worst = 0.0;
    long not_strict = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 2 + trial % 9;
      const double tau = 0.05 + rng.Uniform();
      const double eta = tau * (1.0 + 3.0 * rng.Uniform());
      const GameSpec spec = RandomGame(m, tau, rng);
      const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
      const FitResult fit =
          FitNextPolicyExact(spec, pi_t, LearnConfig{eta, tau, 0.0, LearnMode::Exact()});
      worst = std::max(worst, SupDistance(fit.policy, OmdStep(spec, pi_t, eta)));
      if (m <= 6) {
        const double at_fit = ExactLoss(fit.policy, pi_t, spec, eta);
        for (int k = 0; k < 20; ++k) {
          std::vector<double> logits(fit.policy.log_probs().begin(),
                                     fit.policy.log_probs().end());
          for (double& x : logits) x += 1e-3 * (rng.Uniform() - 0.5);
          not_strict += !(ExactLoss(Policy::FromLogits(logits), pi_t, spec, eta) > at_fit);
        }
      }
    }
    r.measured = worst;
    r.passed = worst <= r.threshold && not_strict == 0;
    r.detail = "worst sup-norm gap to closed form " + Fmt(worst) + "; " +
               std::to_string(not_strict) + " perturbations failed to raise the loss";
  });
}

CheckResult CheckEq6Identity(const VerifyOptions& o) {
  return Timed("Eq6-identity", [&](CheckResult& r) {
    r.threshold = 1e-10;
    Rng rng(o.seed, 6);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 2 + trial % 9;
      const double tau = 0.05 + rng.Uniform();
      const double eta = tau * (1.0 + 3.0 * rng.Uniform());
      const GameSpec spec = RandomGame(m, tau, rng);
      const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
      const Policy next = OmdStep(spec, pi_t, eta);
      const auto win = spec.pref.WinAgainst(pi_t);
      for (std::size_t y = 0; y < m; ++y) {
        for (std::size_t y2 = 0; y2 < m; ++y2) {
          const double h = HValue(next, y, y2, pi_t, spec.ref_policy, tau, eta);
          worst = std::max(worst, std::abs(h - (win[y] - win[y2]) / eta));
        }
      }
    }
    r.measured = worst;
    r.passed = worst <= r.threshold;
    r.detail = "worst |h - win-rate difference / eta| " + Fmt(worst);
  });
}

CheckResult CheckProp1Equivalence(const VerifyOptions& o) {
  return Timed("Prop1-equivalence", [&](CheckResult& r) {
    r.threshold = 1e-10;
    Rng rng(o.seed, 7);
    double worst = 0.0;
    for (int g = 0; g < o.games; ++g) {
      const GameSpec spec = RandomGame(5, kTaus[g % 3], rng);
      const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
      std::vector<Policy> probes;
      for (int k = 0; k < 10; ++k) probes.push_back(RandomPolicyLike(spec.ref_policy, rng));
      const double eta = spec.tau * (1.0 + 3.0 * rng.Uniform());
      worst = std::max(worst, VerifyEquivalence(spec, pi_t, eta, probes).max_spread());
    }
    r.measured = worst;
    r.passed = worst <= r.threshold;
    r.detail = "worst spread of loss differences " + Fmt(worst);
  });
}

CheckResult CheckSampledConsistency(const VerifyOptions& o) {
  return Timed("SampledConsistency", [&](CheckResult& r) {
    r.threshold = 0.02;
    Rng game_rng(o.seed);
    const GameSpec spec = RandomGame(10, 1.0 / 3.0, game_rng);
    PreferenceOracle oracle(MatrixSource{spec.pref}, DeriveSeed(o.seed, 8));
    const LearnConfig config =
        LearnConfig::Defaults(1.0, LearnMode::Sampled(50000, CollectionMode::Plain()));
    const RunTrace run = RunInpo(spec, oracle, 5, config, std::nullopt, o.seed);
    const PlannerTrace exact =
        RunPlanner(spec, StepSchedule::Constant(1.0), 5, std::nullopt, {false});
    double worst_tv = 0.0;
    for (std::size_t t = 0; t < run.policies.size(); ++t) {
      worst_tv = std::max(worst_tv, TotalVariation(run.policies[t], exact.policies[t]));
    }

    const GameSpec cyclic = CyclicBenchmark(0.1);
    PreferenceOracle cyc_oracle(CyclicSource{3, 0.9}, DeriveSeed(o.seed, 9));
    const LearnConfig cyc_config{0.3, 0.1, 1e-6,
                                 LearnMode::Sampled(20000, CollectionMode::Plain())};
    const RunTrace cyc = RunInpo(cyclic, cyc_oracle, 10, cyc_config, std::nullopt, o.seed);
    const double gap = cyc.dual_gaps.back();

    r.measured = worst_tv;
    r.passed = worst_tv <= 0.02 && gap < 0.05;
    r.detail = "worst TV to exact iterates " + Fmt(worst_tv) +
               "; cyclic final duality gap " + Fmt(gap) + " (limit 0.05)";
  });
}

CheckResult CheckNashDominance(const VerifyOptions& o) {
  return Timed("NashDominance", [&](CheckResult& r) {
    r.threshold = 0.5 - 1e-6;
    Rng rng(o.seed, 10);
    double worst = 1.0;
    for (int g = 0; g < o.games; ++g) {
      const GameSpec spec = RandomGame(3 + g % 6, kTaus[g % 3], rng);
      const Policy nash = NashSolve(spec, 1e-14, kNashIters);
      for (int k = 0; k < 100; ++k) {
        const Policy other = RandomPolicyLike(spec.ref_policy, rng, 0.5);
        worst = std::min(worst, GameValue(spec, nash, other));
      }
    }
    r.measured = worst;
    r.passed = worst >= r.threshold;
    r.detail = "smallest J(nash, pi) " + Fmt(worst);
  });
}

CheckResult CheckQueryAccounting(const VerifyOptions& o) {
  return Timed("QueryAccounting", [&](CheckResult& r) {
    r.threshold = 0.0;
    long mismatches = 0;
    PreferenceOracle oracle(CyclicSource{16, 0.8}, DeriveSeed(o.seed, 11));
    const std::vector<std::size_t> ids{0, 3, 5, 6, 9, 10, 12, 15};
    for (int k = 0; k < 100; ++k) {
      const long before = oracle.query_count();
      TournamentSelect(oracle, ids);
      mismatches += oracle.query_count() - before != 11;
    }
    const Policy pi = Policy::Uniform(16);
    long before = oracle.query_count();
    const PreferenceDataset plain =
        CollectDataset(oracle, pi, 250, CollectionMode::Plain(), o.seed, 1);
    mismatches += oracle.query_count() - before != 250;
    before = oracle.query_count();
    const PreferenceDataset tour =
        CollectDataset(oracle, pi, 100, CollectionMode::Tournament(8), o.seed, 2);
    mismatches += oracle.query_count() - before != 11 * tour.attempts;
    mismatches += plain.queries != 250 || tour.queries != 11 * tour.attempts;
    r.measured = static_cast<double>(mismatches);
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " mismatches; K = 8 bracket costs 11 queries, " +
               std::to_string(tour.attempts) + " brackets for 100 accepted pairs";
  });
}

CheckResult CheckGreedyInstability(const VerifyOptions&) {
  return Timed("GreedyInstability", [](CheckResult& r) {
    r.threshold = 0.2;
    // A non-uniform reference moves the Nash policy off the uniform fixed
    // point, where both methods would trivially sit at zero gap.
    const GameSpec spec(ResponseSpace::Indexed(3), CyclicMatrix(3, 0.9),
                        Policy::FromProbs({0.8, 0.1, 0.1}), 0.02);
    const PlannerTrace greedy = RunGreedy(spec, 500, std::nullopt, {false});
    const double greedy_min =
        *std::min_element(greedy.dual_gaps.begin(), greedy.dual_gaps.end());
    const PlannerTrace omd =
        RunPlanner(spec, StepSchedule::Theorem2(), 5000, std::nullopt, {false});
    const double omd_final = omd.dual_gaps.back();
    r.measured = greedy_min;
    r.passed = greedy_min > 0.2 && omd_final < 1e-3;
    r.detail = "greedy minimum gap over 500 updates " + Fmt(greedy_min) +
               "; mirror descent gap after 5000 updates " + Fmt(omd_final) +
               " (limit 1e-3)";
  });
}

std::vector<CheckResult> RunVerifySuite(const VerifyOptions& o) {
  using Check = CheckResult (*)(const VerifyOptions&);
  const std::pair<const char*, Check> checks[] = {
      {"NashCorrectness", CheckNashCorrectness},
      {"Theorem2-rate", CheckTheorem2Rate},
      {"Theorem2-recursion", CheckTheorem2Recursion},
      {"Lemma1-bound", CheckLemma1Bound},
      {"Theorem1-rate", CheckTheorem1Rate},
      {"Lemma2-uniqueness", CheckLemma2Uniqueness},
      {"Eq6-identity", CheckEq6Identity},
      {"Prop1-equivalence", CheckProp1Equivalence},
      {"SampledConsistency", CheckSampledConsistency},
      {"NashDominance", CheckNashDominance},
      {"QueryAccounting", CheckQueryAccounting},
      {"GreedyInstability", CheckGreedyInstability},
  };
  std::vector<CheckResult> results;
  for (const auto& [name, check] : checks) {
    try {
      results.push_back(check(o));
    } catch (const std::exception& e) {
      CheckResult failed;
      failed.name = name;
      failed.detail = std::string("internal error: ") + e.what();
      results.push_back(failed);
    }
  }
  return results;
}

void WriteVerifyReport(std::ostream& out, std::span<const CheckResult> checks,
                       double total_seconds) {
  using nlohmann::json;
  json report;
  bool all = true;
  json list = json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"measured", c.measured},
                    {"threshold", c.threshold},
                    {"detail", c.detail},
                    {"seconds", c.seconds}});
  }
  report["passed"] = all;
  report["total_seconds"] = total_seconds;
  report["checks"] = list;
  out << report.dump(2) << '\n';
}

}  // namespace inpo
