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

#include "inpo/learner.h"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "inpo/planner.h"
#include "json.hpp"

namespace inpo {
namespace {

PreferenceMatrix TwoResponse(double p) {
  return PreferenceMatrix({{0.5, p}, {1.0 - p, 0.5}});
}

GameSpec RandomGame(std::size_t m, double tau, Rng& rng) {
  return GameSpec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                  RandomPolicy(m, rng, 2.0), tau);
}

Policy Perturb(const Policy& pi, Rng& rng, double scale) {
  std::vector<double> logits(pi.log_probs().begin(), pi.log_probs().end());
  for (auto& x : logits) x += scale * (rng.Uniform() - 0.5);
  return Policy::FromLogits(logits);
}

PreferenceDataset Pairs(std::vector<PreferencePair> pairs) {
  PreferenceDataset d;
  d.pairs = std::move(pairs);
  return d;
}

TEST_CASE("LearnConfig defaults and validation") {
  const LearnConfig exact = LearnConfig::Defaults(0.9, LearnMode::Exact());
  CHECK(exact.tau == doctest::Approx(0.3));
  CHECK(exact.ridge == 0.0);
  const LearnConfig sampled =
      LearnConfig::Defaults(0.9, LearnMode::Sampled(100, CollectionMode::Plain()));
  CHECK(sampled.ridge == 1e-6);
  LearnConfig c = exact;
  c.tau = 2.0;
  CHECK(c.Validate().size() == 1);
  c.eta = 0.0;
  CHECK_THROWS_AS(c.Validate(), InvalidArgument);
  c = exact;
  c.ridge = -1.0;
  CHECK_THROWS_AS(c.Validate(), InvalidArgument);
  c = LearnConfig::Defaults(1.0, LearnMode::Sampled(0, CollectionMode::Plain()));
  CHECK_THROWS_AS(c.Validate(), InvalidArgument);
}

TEST_CASE("HValue examples") {
  const Policy u = Policy::Uniform(2);
  Rng rng(1);
  const Policy a = RandomPolicy(4, rng), b = RandomPolicy(4, rng),
               c = RandomPolicy(4, rng);
  CHECK(HValue(a, 2, 2, b, c, 0.3, 0.9) == 0.0);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t y2 = 0; y2 < 4; ++y2) {
      CHECK(std::abs(HValue(c, y, y2, c, c, 0.3, 0.9)) <= 1e-15);
      CHECK(HValue(a, y, y2, b, c, 0.3, 0.9) ==
            doctest::Approx(-HValue(a, y2, y, b, c, 0.3, 0.9)));
    }
  }
  const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const Policy next = OmdStep(spec, u, 1.0);
  CHECK(HValue(next, 0, 1, u, u, 0.5, 1.0) == doctest::Approx(0.3).epsilon(1e-13));
  const Policy partial = Policy::FromProbs({0.5, 0.5, 0.0});
  CHECK_THROWS_AS(HValue(partial, 0, 2, partial, partial, 0.5, 1.0), InvalidArgument);
}

TEST_CASE("h at the next iterate reproduces the win-rate differences") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + trial % 9;
    const double tau = 0.05 + rng.Uniform();
    const double eta = tau + 2.0 * rng.Uniform();
    const GameSpec spec = RandomGame(m, tau, rng);
    const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
    const Policy next = OmdStep(spec, pi_t, eta);
    const auto win = spec.pref.WinAgainst(pi_t);
    double worst = 0.0;
    for (std::size_t y = 0; y < m; ++y) {
      for (std::size_t y2 = 0; y2 < m; ++y2) {
        const double h = HValue(next, y, y2, pi_t, spec.ref_policy, tau, eta);
        worst = std::max(worst, std::abs(h - (win[y] - win[y2]) / eta));
      }
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("ExactLoss examples") {
  const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const Policy u = Policy::Uniform(2);
  CHECK(ExactLoss(u, u, spec, 1.0) == doctest::Approx(0.045).epsilon(1e-14));
  CHECK(ExactLoss(u, u, spec, 2.0) == doctest::Approx(0.01125).epsilon(1e-14));
  CHECK(ExactLoss(OmdStep(spec, u, 1.0), u, spec, 1.0) <= 1e-14);
}

TEST_CASE("PopulationLoss examples") {
  const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const Policy u = Policy::Uniform(2);
  CHECK(PopulationLoss(u, u, spec, 1.0) == doctest::Approx(0.25).epsilon(1e-14));
  for (const Policy& pi : {u, Policy::FromProbs({0.7, 0.3}), Policy::FromProbs({0.2, 0.8})}) {
    CHECK(PopulationLoss(pi, u, spec, 1.0) - ExactLoss(pi, u, spec, 1.0) ==
          doctest::Approx(0.205).epsilon(1e-13));
  }
}

TEST_CASE("PopulationLossBernoulli at h = 0") {
  const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const Policy u = Policy::Uniform(2);
  for (double eta : {0.5, 1.0, 3.0}) {
    CHECK(PopulationLossBernoulli(u, u, spec, eta) ==
          doctest::Approx(0.5 / (eta * eta)).epsilon(1e-14));
  }
}

TEST_CASE("loss differences are policy independent") {
  Rng rng(3);
  for (int game = 0; game < 5; ++game) {
    const GameSpec spec = RandomGame(5, 0.1 + rng.Uniform(), rng);
    const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
    const double eta = 0.5 + rng.Uniform();
    std::vector<Policy> probes;
    for (int k = 0; k < 10; ++k) probes.push_back(RandomPolicyLike(spec.ref_policy, rng));
    const EquivalenceReport r = VerifyEquivalence(spec, pi_t, eta, probes);
    CHECK(r.population_spread <= 1e-10);
    CHECK(r.bernoulli_spread <= 1e-10);
    const double d0 = PopulationLossBernoulli(probes[0], pi_t, spec, eta) -
                      PopulationLoss(probes[0], pi_t, spec, eta);
    for (const auto& p : probes) {
      CHECK(std::abs(PopulationLossBernoulli(p, pi_t, spec, eta) -
                     PopulationLoss(p, pi_t, spec, eta) - d0) <= 1e-10);
    }
  }
  const GameSpec two = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const std::vector<Policy> probes{Policy::Uniform(2), Policy::FromProbs({0.7, 0.3}),
                                   Policy::FromProbs({0.2, 0.8})};
  CHECK(VerifyEquivalence(two, Policy::Uniform(2), 1.0, probes).max_spread() <= 1e-14);
  CHECK_THROWS_AS(VerifyEquivalence(two, Policy::Uniform(2), 1.0,
                                    std::span(probes).first(2)),
                  InvalidArgument);
}

TEST_CASE("EmpiricalLoss examples") {
  const Policy u = Policy::Uniform(2);
  const PreferenceDataset one = Pairs({{0, 1, 1}});
  CHECK(EmpiricalLoss(u, one, u, u, 0.5, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
  const PreferenceDataset many = Pairs({{0, 1, 1}, {0, 1, 1}, {0, 1, 1}, {0, 1, 1}});
  Rng rng(4);
  const Policy pi = RandomPolicy(2, rng);
  CHECK(EmpiricalLoss(pi, many, u, u, 0.5, 1.0) ==
        doctest::Approx(EmpiricalLoss(pi, one, u, u, 0.5, 1.0)).epsilon(1e-15));
  CHECK_THROWS_AS(EmpiricalLoss(u, Pairs({}), u, u, 0.5, 1.0), InvalidArgument);
}

TEST_CASE("EmpiricalLoss is an unbiased estimate of the off-diagonal population loss") {
  const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const Policy u = Policy::Uniform(2);
  const Policy next = OmdStep(spec, u, 1.0);
  PreferenceOracle oracle(MatrixSource{spec.pref}, 17);
  const PreferenceDataset d =
      CollectDataset(oracle, u, 100000, CollectionMode::Plain(), 17);
  const double empirical = EmpiricalLoss(next, d, u, u, 0.5, 1.0);
  // Population loss with the diagonal mass (1/2, each term 1/4) removed and
  // the remainder renormalized. Per-pair values are 0.04 (p = 0.8) and
  // 0.64 (p = 0.2), so the standard deviation is 0.24.
  const double off_diagonal = (PopulationLoss(next, u, spec, 1.0) - 0.5 * 0.25) / 0.5;
  CHECK(off_diagonal == doctest::Approx(0.16).epsilon(1e-13));
  const double se = 0.24 / std::sqrt(1e5);
  CHECK(std::abs(empirical - off_diagonal) <= 2 * se);
}

TEST_CASE("empirical loss is gauge invariant and convex in the residuals") {
  Rng rng(5);
  const GameSpec spec = RandomGame(5, 0.3, rng);
  const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
  PreferenceOracle oracle(MatrixSource{spec.pref}, 3);
  const PreferenceDataset d = CollectDataset(oracle, pi_t, 500, CollectionMode::Plain(), 3);
  auto loss = [&](const std::vector<double>& u) {
    return EmpiricalLoss(PolicyFromResiduals({u}, pi_t, spec.ref_policy, 0.3, 0.9), d,
                         pi_t, spec.ref_policy, 0.3, 0.9);
  };
  for (int k = 0; k < 20; ++k) {
    std::vector<double> a(5), b(5), mid(5), shifted(5);
    for (std::size_t i = 0; i < 5; ++i) {
      a[i] = 2 * rng.Uniform() - 1;
      b[i] = 2 * rng.Uniform() - 1;
      mid[i] = 0.5 * (a[i] + b[i]);
      shifted[i] = a[i] + 3.5;
    }
    CHECK(loss(shifted) == doctest::Approx(loss(a)).epsilon(1e-12));
    CHECK(loss(mid) <= 0.5 * (loss(a) + loss(b)) + 1e-12);
  }
}

TEST_CASE("PolicyFromResiduals with u = 0 is the geometric mixture") {
  Rng rng(6);
  const Policy ref = RandomPolicy(4, rng), pi_t = RandomPolicy(4, rng);
  const Policy p = PolicyFromResiduals({std::vector<double>(4, 0.0)}, pi_t, ref, 0.2, 0.8);
  std::vector<double> w(4);
  for (std::size_t i = 0; i < 4; ++i) w[i] = std::pow(ref[i], 0.25) * std::pow(pi_t[i], 0.75);
  CHECK(SupDistance(p, Policy::Normalized(w)) <= 1e-14);
  CHECK_THROWS_AS(PolicyFromResiduals({{0.0, 0.0}}, pi_t, ref, 0.2, 0.8), InvalidArgument);
}

TEST_CASE("FitNextPolicyExact reproduces the closed-form update") {
  const GameSpec two = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  LearnConfig cfg = LearnConfig::Defaults(1.0, LearnMode::Exact());
  cfg.tau = 0.5;
  const FitResult fit = FitNextPolicyExact(two, two.ref_policy, cfg);
  CHECK(fit.policy[0] == doctest::Approx(0.574442516811659).epsilon(1e-12));
  double sum = 0.0;
  for (double x : fit.residual.u) sum += x;
  CHECK(std::abs(sum) <= 1e-14);

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + trial % 5;
    const double tau = 0.05 + rng.Uniform();
    const double eta = tau * (1.0 + 3.0 * rng.Uniform());
    const GameSpec spec = RandomGame(m, tau, rng);
    const Policy pi_t = RandomPolicyLike(spec.ref_policy, rng);
    LearnConfig c{eta, tau, 0.0, LearnMode::Exact()};
    const FitResult f = FitNextPolicyExact(spec, pi_t, c);
    CHECK(SupDistance(f.policy, OmdStep(spec, pi_t, eta)) <= 1e-8);
    CHECK(std::isfinite(f.condition_number));
    // Strict minimality along random tangent directions.
    const double at_fit = ExactLoss(f.policy, pi_t, spec, eta);
    for (int k = 0; k < 20; ++k) {
      CHECK(ExactLoss(Perturb(f.policy, rng, 1e-3), pi_t, spec, eta) > at_fit);
    }
  }
}

TEST_CASE("FitNextPolicy on sampled data") {
  const Policy u = Policy::Uniform(3);
  SUBCASE("no pairs with ridge gives the prior") {
    LearnConfig c{1.0, 0.5, 1e-6, LearnMode::Sampled(1, CollectionMode::Plain())};
    const Policy pi_t = Policy::FromProbs({0.5, 0.3, 0.2});
    const FitResult f = FitNextPolicy(Pairs({}), pi_t, u, c);
    for (double x : f.residual.u) CHECK(x == 0.0);
    CHECK(SupDistance(f.policy, PolicyFromResiduals({{0, 0, 0}}, pi_t, u, 0.5, 1.0)) <=
          1e-15);
  }
  SUBCASE("disconnected pair graph without ridge") {
    LearnConfig c{1.0, 0.5, 0.0, LearnMode::Sampled(1, CollectionMode::Plain())};
    CHECK_THROWS_AS(FitNextPolicy(Pairs({{0, 1, 1}}), u, u, c), InvalidArgument);
    CHECK_THROWS_AS(FitNextPolicy(Pairs({}), u, u, c), InvalidArgument);
    CHECK_NOTHROW(FitNextPolicy(Pairs({{0, 1, 1}, {2, 1, 1}}), u, u, c));
  }
  SUBCASE("single repeated pair hits the target exactly") {
    LearnConfig c{2.0, 0.5, 0.0, LearnMode::Sampled(1, CollectionMode::Plain())};
    const Policy two = Policy::Uniform(2);
    const FitResult f = FitNextPolicy(Pairs({{0, 1, 1}, {0, 1, 1}}), two, two, c);
    CHECK(HValue(f.policy, 0, 1, two, two, 0.5, 2.0) == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("sampled fits approach the exact iterate") {
  Rng game_rng(2024);
  const GameSpec spec = RandomGame(10, 1.0 / 3.0, game_rng);
  const Policy& pi_t = spec.ref_policy;
  const Policy exact = OmdStep(spec, pi_t, 1.0);
  std::vector<double> tvs;
  for (long n : {100L, 1000L, 10000L, 100000L}) {
    PreferenceOracle oracle(MatrixSource{spec.pref}, 99);
    const PreferenceDataset d = CollectDataset(oracle, pi_t, n, CollectionMode::Plain(), 99);
    LearnConfig c = LearnConfig::Defaults(1.0, LearnMode::Sampled(n, CollectionMode::Plain()));
    tvs.push_back(TotalVariation(FitNextPolicy(d, pi_t, spec.ref_policy, c).policy, exact));
  }
  int inversions = 0;
  for (std::size_t k = 1; k < tvs.size(); ++k) inversions += tvs[k] > tvs[k - 1];
  CHECK(inversions <= 1);
  CHECK(tvs.back() < 0.02);
}

TEST_CASE("RunInpo examples") {
  SUBCASE("exact mode matches the planner with a constant step") {
    Rng rng(8);
    const GameSpec spec = RandomGame(6, 0.2, rng);
    PreferenceOracle oracle(MatrixSource{spec.pref}, 1);
    LearnConfig c{0.6, 0.2, 0.0, LearnMode::Exact()};
    const RunTrace run = RunInpo(spec, oracle, 25, c, std::nullopt);
    const PlannerTrace plan =
        RunPlanner(spec, StepSchedule::Constant(0.6), 25, std::nullopt, {false});
    REQUIRE(run.policies.size() == plan.policies.size());
    for (std::size_t t = 0; t < run.policies.size(); ++t) {
      CHECK(SupDistance(run.policies[t], plan.policies[t]) <= 1e-12);
    }
    CHECK(oracle.query_count() == 0);
  }
  SUBCASE("one exact update on an indifferent game") {
    const GameSpec spec = GameSpec::WithUniformRef(PreferenceMatrix::Indifferent(3), 0.1);
    PreferenceOracle oracle(MatrixSource{spec.pref}, 1);
    const RunTrace run =
        RunInpo(spec, oracle, 1, LearnConfig{0.3, 0.1, 0.0, LearnMode::Exact()}, std::nullopt);
    CHECK(SupDistance(run.policies[1], spec.ref_policy) <= 1e-15);
  }
  SUBCASE("sampled mode on the cyclic game") {
    const GameSpec spec = GameSpec::WithUniformRef(CyclicMatrix(3, 0.9), 0.1);
    PreferenceOracle oracle(CyclicSource{3, 0.9}, 11);
    LearnConfig c{0.3, 0.1, 1e-6, LearnMode::Sampled(20000, CollectionMode::Plain())};
    const RunTrace run = RunInpo(spec, oracle, 10, c, std::nullopt, 11);
    CHECK(run.dual_gaps.back() < 0.05);
    CHECK(run.oracle_queries_cumulative.back() == 200000);
    CHECK(run.oracle_queries_cumulative.back() == oracle.query_count());
    for (std::size_t t = 1; t < run.oracle_queries_cumulative.size(); ++t) {
      CHECK(run.oracle_queries_cumulative[t] >= run.oracle_queries_cumulative[t - 1]);
    }
  }
  SUBCASE("argument checks") {
    const GameSpec spec = GameSpec::WithUniformRef(CyclicMatrix(3, 0.9), 0.1);
    PreferenceOracle oracle(CyclicSource{3, 0.9}, 11);
    CHECK_THROWS_AS(RunInpo(spec, oracle, 0, LearnConfig{0.3, 0.1, 0.0, {}}, std::nullopt),
                    InvalidArgument);
    CHECK_THROWS_AS(RunInpo(spec, oracle, 2, LearnConfig{0.3, 0.2, 0.0, {}}, std::nullopt),
                    InvalidArgument);
  }
}

TEST_CASE("sampled INPO tracks exact mirror descent for five updates") {
  Rng game_rng(2024);
  const GameSpec spec = RandomGame(10, 1.0 / 3.0, game_rng);
  PreferenceOracle oracle(MatrixSource{spec.pref}, 5);
  const LearnConfig c =
      LearnConfig::Defaults(1.0, LearnMode::Sampled(50000, CollectionMode::Plain()));
  const RunTrace run = RunInpo(spec, oracle, 5, c, std::nullopt, 5);
  const PlannerTrace plan =
      RunPlanner(spec, StepSchedule::Constant(1.0), 5, std::nullopt, {false});
  for (std::size_t t = 0; t < run.policies.size(); ++t) {
    CHECK(TotalVariation(run.policies[t], plan.policies[t]) <= 0.02);
  }
}

TEST_CASE("WriteFitDiagnosticsJson") {
  const GameSpec two = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const FitResult fit =
      FitNextPolicyExact(two, two.ref_policy, LearnConfig{1.0, 0.5, 0.0, {}});
  std::stringstream ss;
  WriteFitDiagnosticsJson(ss, two.space, fit);
  const auto j = nlohmann::json::parse(ss.str());
  CHECK(j["u"].size() == 2);
  CHECK(j["condition_number"].is_number());
}

TEST_CASE("DPO baseline") {
  const Policy u = Policy::Uniform(3);
  SUBCASE("symmetric data leaves the reference unchanged") {
    const PreferenceDataset d =
        Pairs({{0, 1, 1}, {1, 0, 1}, {1, 2, 1}, {2, 1, 1}, {0, 2, 1}, {2, 0, 1}});
    CHECK(SupDistance(DpoBaselineStep(d, u, u, 0.5), u) <= 1e-10);
  }
  SUBCASE("a single win raises the winner") {
    const PreferenceDataset d = Pairs({{0, 1, 1}});
    const Policy next = DpoBaselineStep(d, u, u, 0.5, 1e-3);
    CHECK(next[0] > u[0]);
    CHECK(DpoObjective(next, d, u, 0.5, 1e-3) < DpoObjective(u, d, u, 0.5, 1e-3));
  }
  SUBCASE("argument checks") {
    const PreferenceDataset d = Pairs({{0, 1, 1}});
    CHECK_THROWS_AS(DpoBaselineStep(d, u, u, 0.0), InvalidArgument);
    CHECK_THROWS_AS(DpoBaselineStep(d, u, u, 0.5, 0.0), InvalidArgument);
    CHECK_THROWS_AS(DpoBaselineStep(Pairs({}), u, u, 0.5), InvalidArgument);
  }
  SUBCASE("iterated runs account queries like INPO") {
    const GameSpec spec = GameSpec::WithUniformRef(CyclicMatrix(3, 0.9), 0.1);
    PreferenceOracle oracle(CyclicSource{3, 0.9}, 2);
    const RunTrace run = RunIterativeDpo(spec, oracle, 3, 0.3, 500, CollectionMode::Plain(),
                                         1e-6, std::nullopt, 2);
    CHECK(run.policies.size() == 4);
    CHECK(run.oracle_queries_cumulative.back() == 1500);
    for (double g : run.dual_gaps) CHECK(g >= -1e-12);
  }
}

}  // namespace
}  // namespace inpo
