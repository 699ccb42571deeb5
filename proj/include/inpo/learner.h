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

#ifndef INPO_LEARNER_H_
#define INPO_LEARNER_H_

// Iterative Nash policy optimization from sampled preferences.
//
// The next mirror-descent iterate is characterized through the log-ratio
// statistic
//
//   h_t(pi, y, y') = log(pi(y)/pi(y')) - (tau/eta) log(ref(y)/ref(y'))
//                    - (1 - tau/eta) log(pi_t(y)/pi_t(y'))
//
// which equals (P(y > pi_t) - P(y' > pi_t)) / eta exactly at pi_{t+1}.
// Writing log pi(y) = g_t(y) + u(y) - const with
// g_t = (tau/eta) log ref + (1 - tau/eta) log pi_t gives h_t = u(y) - u(y'),
// so the squared-loss objective over preference pairs is a convex quadratic
// in the residual vector u and is minimized by one linear solve.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "inpo/game.h"
#include "inpo/oracle.h"

namespace inpo {

struct LearnMode {
  enum class Kind { kExact, kSampled };
  Kind kind = Kind::kExact;
  long n = 0;
  CollectionMode collection = CollectionMode::Plain();

  static LearnMode Exact() { return {}; }
  static LearnMode Sampled(long n, CollectionMode collection) {
    return {Kind::kSampled, n, collection};
  }
};

struct LearnConfig {
  double eta = 1.0;
  double tau = 1.0 / 3.0;
  // Weight of ||u||^2. Zero is allowed when every supported response is
  // linked by the pair graph; the gauge is then pinned explicitly.
  double ridge = 0.0;
  LearnMode mode;

  // Configuration with tau = eta / 3 and the default ridge for the mode
  // (0 for exact fits, 1e-6 for sampled fits).
  static LearnConfig Defaults(double eta, LearnMode mode);
  // Throws on invalid values; returns a warning when eta < tau.
  std::vector<std::string> Validate() const;
};

// u over responses, zero outside the reference support, mean zero on it.
struct ResidualVector {
  std::vector<double> u;
};

double HValue(const Policy& pi, std::size_t y, std::size_t y2,
              const Policy& pi_t, const Policy& ref, double tau, double eta);

// E_{y,y'~pi_t}[(h_t(pi,y,y') - (P(y > pi_t) - P(y' > pi_t)) / eta)^2].
double ExactLoss(const Policy& pi, const Policy& pi_t, const GameSpec& spec,
                 double eta);

// E_{y,y'~pi_t, (y_w,y_l)~lambda_p}[(h_t(pi,y_w,y_l) - 1/(2 eta))^2].
double PopulationLoss(const Policy& pi, const Policy& pi_t,
                      const GameSpec& spec, double eta);

// E_{y,y'~pi_t, I~Ber(P(y > y'))}[(h_t(pi,y,y') - I/eta)^2].
double PopulationLossBernoulli(const Policy& pi, const Policy& pi_t,
                               const GameSpec& spec, double eta);

// Mean of (h_t(pi, y_w, y_l) - 1/(2 eta))^2 over the dataset.
double EmpiricalLoss(const Policy& pi, const PreferenceDataset& dataset,
                     const Policy& pi_t, const Policy& ref, double tau,
                     double eta);

// pi(y) ~ exp(g_t(y) + u(y)).
Policy PolicyFromResiduals(const ResidualVector& residual, const Policy& pi_t,
                           const Policy& ref, double tau, double eta);

struct FitResult {
  Policy policy;
  ResidualVector residual;
  double condition_number;
};

// Least-squares fit of the empirical objective on a sampled dataset.
FitResult FitNextPolicy(const PreferenceDataset& dataset, const Policy& pi_t,
                        const Policy& ref, const LearnConfig& config);

// Fit of the population objective with exact pair weights
// pi_t(y) pi_t(y') P(y > y'); recovers the closed-form update.
FitResult FitNextPolicyExact(const GameSpec& spec, const Policy& pi_t,
                             const LearnConfig& config);

// {"u": [...], "condition_number": c}
void WriteFitDiagnosticsJson(std::ostream& out, const ResponseSpace& space,
                             const FitResult& fit);

struct RunTrace {
  std::vector<Policy> policies;  // pi_1 = ref, ..., pi_{T+1}
  std::vector<double> dual_gaps;
  std::vector<double> kl_to_nash;               // empty without Nash reference
  std::vector<long> oracle_queries_cumulative;  // after each update
  std::vector<long> dataset_sizes;
  std::vector<std::string> warnings;

  long iterations() const { return static_cast<long>(policies.size()) - 1; }
};

// Algorithm loop: pi_1 = ref; collect D_t from pi_t, fit pi_{t+1}. Exact
// mode never touches the oracle. Dataset t uses the seed stream
// (seed, t).
RunTrace RunInpo(const GameSpec& spec, PreferenceOracle& oracle, long T,
                 const LearnConfig& config,
                 const std::optional<Policy>& nash_ref,
                 std::uint64_t seed = 0);

struct EquivalenceReport {
  double population_spread;  // spread of PopulationLoss - ExactLoss
  double bernoulli_spread;   // spread of PopulationLossBernoulli - ExactLoss
  double max_spread() const {
    return population_spread > bernoulli_spread ? population_spread
                                                : bernoulli_spread;
  }
};

// Spread (max - min) of the loss differences over the probe policies; zero
// when the losses differ by a policy-independent constant.
EquivalenceReport VerifyEquivalence(const GameSpec& spec, const Policy& pi_t,
                                    double eta,
                                    std::span<const Policy> probes);

// One iterative-DPO update: minimizes
//   -mean log sigmoid(beta (theta(y_w) - theta(y_l))) + ridge ||theta||^2
// over log-ratios theta = log(pi / ref) by Newton's method, starting from
// log(pi_t / ref), to gradient norm 1e-8.
Policy DpoBaselineStep(const PreferenceDataset& dataset, const Policy& pi_t,
                       const Policy& ref, double beta, double ridge = 1e-6);

double DpoObjective(const Policy& pi, const PreferenceDataset& dataset,
                    const Policy& ref, double beta, double ridge);

// Iterated DPO with fresh data from the current policy each round.
RunTrace RunIterativeDpo(const GameSpec& spec, PreferenceOracle& oracle,
                         long T, double beta, long n, CollectionMode mode,
                         double ridge, const std::optional<Policy>& nash_ref,
                         std::uint64_t seed = 0);

}  // namespace inpo

#endif  // INPO_LEARNER_H_
