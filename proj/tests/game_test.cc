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

#include "inpo/game.h"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.h"

namespace inpo {
namespace {

namespace ot = inpo::testing;

PreferenceMatrix TwoResponse(double p) {
  return PreferenceMatrix({{0.5, p}, {1.0 - p, 0.5}});
}

PreferenceMatrix Rps(double p) {
  return PreferenceMatrix(
      {{0.5, p, 1.0 - p}, {1.0 - p, 0.5, p}, {p, 1.0 - p, 0.5}});
}

ot::Vec ToVec(const Policy& p) { return {p.probs().begin(), p.probs().end()}; }

TEST_CASE("ResponseSpace rejects bad identifier lists") {
  CHECK_THROWS_AS(ResponseSpace({"a"}), InvalidArgument);
  CHECK_THROWS_AS(ResponseSpace({"a", "a"}), InvalidArgument);
  CHECK_THROWS_AS(ResponseSpace({"a", ""}), InvalidArgument);
  ResponseSpace s({"a", "b", "c"});
  CHECK(s.IndexOf("c") == 2);
  CHECK_FALSE(s.Find("d").has_value());
}

TEST_CASE("Policy validation") {
  CHECK_NOTHROW(Policy::FromProbs({0.25, 0.75}));
  CHECK_THROWS_AS(Policy::FromProbs({0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(Policy::FromProbs({-0.1, 1.1}), InvalidArgument);
  CHECK_THROWS_AS(Policy::FromProbs({0.5, 0.5 + 1e-10}), InvalidArgument);
  const Policy soft = Policy::FromLogits(std::vector<double>{0.0, 700.0});
  CHECK(soft[0] > 0.0);
  CHECK(soft.log_prob(0) == doctest::Approx(-700.0));
}

TEST_CASE("PreferenceMatrix validation names the offending cell") {
  try {
    PreferenceMatrix({{0.5, 0.7}, {0.4, 0.5}});
    FAIL("expected an exception");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("cell (0,1)") != std::string::npos);
  }
  CHECK_THROWS_AS(PreferenceMatrix({{0.4, 0.6}, {0.4, 0.5}}), InvalidArgument);
  CHECK_THROWS_AS(PreferenceMatrix({{0.5, 1.2}, {-0.2, 0.5}}), InvalidArgument);
}

TEST_CASE("random preference matrices satisfy the invariants") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + trial % 9;
    const PreferenceMatrix P = RandomPreferenceMatrix(m, rng);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(P(i, i) == 0.5);
      for (std::size_t j = 0; j < m; ++j) {
        CHECK(std::abs(P(i, j) + P(j, i) - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("KL divergence conventions") {
  const Policy a = Policy::FromProbs({0.9, 0.1, 0.0});
  const Policy b = Policy::FromProbs({0.5, 0.25, 0.25});
  const double expected = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.25);
  CHECK(KlDivergence(a, b) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::isinf(KlDivergence(b, a)));
  CHECK(KlDivergence(b, b) == 0.0);
}

TEST_CASE("WinProb examples") {
  const PreferenceMatrix P = TwoResponse(0.8);
  const Policy u = Policy::Uniform(2);
  CHECK(WinProb(P, Policy::FromProbs({0.9, 0.1}), u) ==
        doctest::Approx(0.62).epsilon(1e-14));
  CHECK(WinProb(P, u, u) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(WinProb(P, Policy::Uniform(3), u), InvalidArgument);
}

TEST_CASE("WinProb antisymmetry on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + trial % 9;
    const PreferenceMatrix P = RandomPreferenceMatrix(m, rng);
    const Policy a = RandomPolicy(m, rng);
    const Policy b = RandomPolicy(m, rng);
    CHECK(std::abs(WinProb(P, a, b) + WinProb(P, b, a) - 1.0) <= 1e-12);
    CHECK(std::abs(WinProb(P, a, a) - 0.5) <= 1e-12);
  }
}

TEST_CASE("GameValue examples") {
  const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
  const Policy& ref = spec.ref_policy;
  CHECK(GameValue(spec, ref, ref) == doctest::Approx(0.5).epsilon(1e-15));

  const double q = Sigmoid(0.6);
  const Policy p1 = Policy::FromProbs({q, 1.0 - q});
  const ot::Mat P{{0.5, 0.8}, {0.2, 0.5}};
  const double oracle = ot::Game(P, {0.5, 0.5}, 0.5, ToVec(p1), {0.5, 0.5});
  // Frozen from a 30-digit evaluation of the same expression.
  CHECK(oracle == doctest::Approx(0.522170384962970).epsilon(1e-13));
  CHECK(GameValue(spec, p1, ref) == doctest::Approx(oracle).epsilon(1e-13));
  CHECK(std::abs(GameValue(spec, p1, ref) - 0.5222) < 5e-5);
}

TEST_CASE("GameValue rejects policies outside the reference support") {
  const GameSpec spec(ResponseSpace::Indexed(3), Rps(0.9),
                      Policy::FromProbs({0.5, 0.5, 0.0}), 0.1);
  const Policy leaky = Policy::Uniform(3);
  CHECK_THROWS_AS(GameValue(spec, leaky, spec.ref_policy), InvalidArgument);
}

TEST_CASE("game symmetry and self-play value on random games") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + trial % 9;
    const double tau = 0.05 + rng.Uniform();
    const GameSpec spec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                        RandomPolicy(m, rng), tau);
    const Policy a = RandomPolicy(m, rng);
    const Policy b = RandomPolicy(m, rng);
    CHECK(std::abs(GameValue(spec, a, b) + GameValue(spec, b, a) - 1.0) <= 1e-10);
    CHECK(std::abs(GameValue(spec, a, a) - 0.5) <= 1e-12);
  }
}

TEST_CASE("BestResponse examples") {
  SUBCASE("indifferent preferences return the reference") {
    const GameSpec spec(ResponseSpace::Indexed(3), PreferenceMatrix::Indifferent(3),
                        Policy::FromProbs({0.2, 0.3, 0.5}), 0.7);
    const Policy br = BestResponse(spec, Policy::FromProbs({0.6, 0.3, 0.1}));
    CHECK(SupDistance(br, spec.ref_policy) <= 1e-15);
  }
  SUBCASE("two responses against uniform, checked by grid search") {
    for (double tau : {1.0, 0.5}) {
      const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), tau);
      const Policy br = BestResponse(spec, spec.ref_policy);
      const ot::Mat P{{0.5, 0.8}, {0.2, 0.5}};
      const ot::Vec grid = ot::GridArgmax2([&](const ot::Vec& v) {
        return ot::Game(P, {0.5, 0.5}, tau, v, {0.5, 0.5});
      });
      CHECK(std::abs(br[0] - grid[0]) <= 1e-4);
      CHECK(br[0] == doctest::Approx(Sigmoid(0.3 / tau)).epsilon(1e-14));
    }
    CHECK(BestResponse(GameSpec::WithUniformRef(TwoResponse(0.8), 1.0),
                       Policy::Uniform(2))[0] ==
          doctest::Approx(0.574442516811659).epsilon(1e-13));
  }
  SUBCASE("tau = 0 is rejected") {
    const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.0);
    CHECK_THROWS_AS(BestResponse(spec, spec.ref_policy), InvalidArgument);
  }
}

TEST_CASE("BestResponse optimality against random competitors") {
  Rng rng(21);
  for (int game = 0; game < 5; ++game) {
    const std::size_t m = 2 + game % 3;
    const GameSpec spec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                        RandomPolicy(m, rng), 0.1 + rng.Uniform());
    const Policy opponent = RandomPolicy(m, rng);
    const double best = GameValue(spec, BestResponse(spec, opponent), opponent);
    for (int k = 0; k < 1000; ++k) {
      const Policy other = RandomPolicy(m, rng, 0.5);
      CHECK(best >= GameValue(spec, other, opponent) - 1e-9);
    }
  }
}

TEST_CASE("DualityGap examples") {
  SUBCASE("indifferent game at the reference") {
    for (double tau : {0.0, 0.1, 2.0}) {
      const GameSpec spec(ResponseSpace::Indexed(3), PreferenceMatrix::Indifferent(3),
                          Policy::FromProbs({0.2, 0.3, 0.5}), tau);
      CHECK(std::abs(DualityGap(spec, spec.ref_policy)) <= 1e-15);
    }
  }
  SUBCASE("two responses at uniform, checked by grid search") {
    const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
    const ot::Mat P{{0.5, 0.8}, {0.2, 0.5}};
    const double q = ot::GoldenArgmax(
        [&](double x) {
          return ot::Game(P, {0.5, 0.5}, 0.5, {x, 1 - x}, {0.5, 0.5});
        },
        1e-9, 1 - 1e-9);
    const double oracle =
        2.0 * (ot::Game(P, {0.5, 0.5}, 0.5, {q, 1 - q}, {0.5, 0.5}) - 0.5);
    CHECK(oracle == doctest::Approx(0.0443407699259403).epsilon(1e-10));
    CHECK(DualityGap(spec, spec.ref_policy) ==
          doctest::Approx(0.0443407699259403).epsilon(1e-12));
  }
  SUBCASE("tau = 0 uses the best pure response") {
    const GameSpec spec = GameSpec::WithUniformRef(Rps(0.9), 0.0);
    const Policy pi = Policy::FromProbs({0.6, 0.3, 0.1});
    // P(y > pi) = (0.38, 0.62, 0.50) so the vertex optimum is 0.62.
    CHECK(DualityGap(spec, pi) == doctest::Approx(2 * 0.62 - 1).epsilon(1e-13));
    CHECK(std::abs(DualityGap(spec, Policy::Uniform(3))) <= 1e-15);
  }
}

TEST_CASE("DualityGap is non-negative") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + trial % 9;
    const double tau = trial % 4 == 0 ? 0.0 : rng.Uniform();
    const GameSpec spec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                        RandomPolicy(m, rng), tau);
    CHECK(DualityGap(spec, RandomPolicy(m, rng)) >= -1e-12);
  }
}

TEST_CASE("NashSolve examples") {
  SUBCASE("cyclic game has the uniform Nash policy") {
    const GameSpec spec = GameSpec::WithUniformRef(Rps(0.9), 0.1);
    const Policy nash = NashSolve(spec, 1e-12, 1'000'000);
    CHECK(SupDistance(nash, Policy::Uniform(3)) <= 1e-6);
  }
  SUBCASE("two responses: constant payoff gap gives sigmoid((p - 1/2)/tau)") {
    const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
    const Policy nash = NashSolve(spec, 1e-14, 10'000'000);
    CHECK(std::abs(nash[0] - Sigmoid(0.6)) <= 1e-6);
    CHECK(DualityGap(spec, nash) <= 1e-14);
  }
  SUBCASE("indifferent game returns the reference") {
    const GameSpec spec(ResponseSpace::Indexed(3), PreferenceMatrix::Indifferent(3),
                        Policy::FromProbs({0.2, 0.3, 0.5}), 0.4);
    CHECK(SupDistance(NashSolve(spec, 1e-12, 10), spec.ref_policy) <= 1e-15);
  }
  SUBCASE("budget exhaustion reports the best iterate") {
    const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.5);
    try {
      NashSolve(spec, 1e-14, 3);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.best_gap() > 1e-14);
      CHECK(e.best_gap() == doctest::Approx(DualityGap(spec, e.best())));
    }
  }
  SUBCASE("tau = 0 is rejected") {
    const GameSpec spec = GameSpec::WithUniformRef(TwoResponse(0.8), 0.0);
    CHECK_THROWS_AS(NashSolve(spec, 1e-8, 10), InvalidArgument);
  }
}

TEST_CASE("NashFixedPoint examples") {
  CHECK(SupDistance(NashFixedPoint(GameSpec::WithUniformRef(Rps(0.9), 0.1),
                                   1e-12, 0.1),
                    Policy::Uniform(3)) <= 1e-10);
  const Policy two =
      NashFixedPoint(GameSpec::WithUniformRef(TwoResponse(0.8), 0.5), 1e-14, 1.0);
  CHECK(two[0] == doctest::Approx(0.6456563062257954).epsilon(1e-12));
  const GameSpec flat(ResponseSpace::Indexed(3), PreferenceMatrix::Indifferent(3),
                      Policy::FromProbs({0.2, 0.3, 0.5}), 0.4);
  CHECK(SupDistance(NashFixedPoint(flat, 1e-15, 1.0, 1), flat.ref_policy) <= 1e-15);
  CHECK_THROWS_AS(NashFixedPoint(flat, 1e-12, 0.0), InvalidArgument);
}

TEST_CASE("NashSolve agrees with the fixed-point oracle on random games") {
  Rng rng(41);
  const double taus[] = {0.1, 0.5, 1.0};
  for (int game = 0; game < 20; ++game) {
    const std::size_t m = 2 + game % 7;
    const double tau = taus[game % 3];
    const GameSpec spec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                        RandomPolicy(m, rng, 2.0), tau);
    const Policy a = NashSolve(spec, 1e-14, 20'000'000);
    const Policy b = NashFixedPoint(spec, 1e-13, tau < 0.2 ? 0.05 : 0.5);
    CHECK(SupDistance(a, b) <= 1e-6);
  }
}

TEST_CASE("Nash dominance: the solved Nash wins at least half the time") {
  Rng rng(51);
  for (int game = 0; game < 5; ++game) {
    const std::size_t m = 3 + game;
    const GameSpec spec(ResponseSpace::Indexed(m), RandomPreferenceMatrix(m, rng),
                        Policy::Uniform(m), 0.2 + 0.2 * game);
    const Policy nash = NashSolve(spec, 1e-8, 10'000'000);
    for (int k = 0; k < 100; ++k) {
      CHECK(GameValue(spec, nash, RandomPolicy(m, rng, 0.5)) >= 0.5 - 1e-6);
    }
  }
}

TEST_CASE("preference CSV round trip and errors") {
  const ResponseSpace space({"a", "b", "c"});
  const PreferenceMatrix P = Rps(0.75);
  std::stringstream ss;
  WritePreferenceCsv(ss, space, P);
  const LoadedMatrix loaded = ReadPreferenceCsv(ss);
  CHECK(loaded.space == space);
  CHECK(loaded.pref == P);

  std::stringstream bad("a,b\n0.5,0.7\n0.4,0.5\n");
  try {
    ReadPreferenceCsv(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("cell (0,1)") != std::string::npos);
  }
  std::stringstream ragged("a,b\n0.5,0.7\n0.3\n");
  CHECK_THROWS_AS(ReadPreferenceCsv(ragged), ParseError);
  std::stringstream text("a,b\n0.5,x\n0.3,0.5\n");
  CHECK_THROWS_AS(ReadPreferenceCsv(text), ParseError);
}

TEST_CASE("policy CSV round trip") {
  const ResponseSpace space({"a", "b", "c"});
  const Policy pi = Policy::FromLogits(std::vector<double>{0.1, -2.0, 1.3});
  std::stringstream ss;
  ss << "# comment lines are skipped\n";
  WritePolicyCsv(ss, space, pi);
  const Policy back = ReadPolicyCsv(ss, space);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == pi[i]);
}

}  // namespace
}  // namespace inpo
