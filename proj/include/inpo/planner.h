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

#ifndef INPO_PLANNER_H_
#define INPO_PLANNER_H_

// Exact online mirror descent on the KL-regularized preference game.
//
// At iteration t the min-player's loss is
//   l_t(pi) = -P(pi > pi_t) + tau KL(pi || ref)
// and the mirror-descent step
//   pi_{t+1} = argmin_pi <grad l_t(pi_t), pi> + eta KL(pi || pi_t)
// has the closed form
//   pi_{t+1}(y) ~ exp(P(y > pi_t) / eta) ref(y)^{tau/eta} pi_t(y)^{1 - tau/eta}.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "inpo/game.h"

namespace inpo {

class StepSchedule {
 public:
  enum class Kind { kConstant, kLemma1, kTheorem2 };

  static StepSchedule Constant(double eta);
  // eta = max(B tau, 1) sqrt(T) / sqrt(kappa).
  static StepSchedule Lemma1(long horizon, double B, double kappa);
  // eta_t = tau (t + 2) / 2, t = 1 for the first update.
  static StepSchedule Theorem2();

  Kind kind() const { return kind_; }
  // Step parameter for update t (1-indexed).
  double Eta(long t, double tau) const;
  // Throws InvalidArgument when the schedule cannot drive T updates.
  // Returns warnings for eta < tau, which is allowed but outside the
  // analyzed regime.
  std::vector<std::string> Validate(long T, double tau) const;
  std::string ToString() const;

  double constant_eta() const { return eta_; }
  long horizon() const { return horizon_; }
  double B() const { return B_; }
  double kappa() const { return kappa_; }

 private:
  StepSchedule(Kind kind, double eta, long horizon, double B, double kappa)
      : kind_(kind), eta_(eta), horizon_(horizon), B_(B), kappa_(kappa) {}

  Kind kind_;
  double eta_ = 0.0;
  long horizon_ = 0;
  double B_ = 0.0;
  double kappa_ = 0.0;
};

// Iterates and diagnostics of a planning run with T updates.
//
// policies has T + 1 entries (pi_1 = ref, ..., pi_{T+1}); dual_gaps and
// kl_to_nash are indexed like policies. Per-update series (etas,
// gradients, grad_inf_norms, regret_partials, mixture_dual_gaps,
// B_so_far) have T entries, entry t-1 describing update t.
struct PlannerTrace {
  std::vector<Policy> policies;
  std::vector<double> etas;
  std::vector<std::vector<double>> gradients;
  std::vector<double> grad_inf_norms;
  std::vector<double> regret_partials;    // empty without a Nash reference
  std::vector<double> kl_to_nash;         // empty without a Nash reference
  std::vector<double> dual_gaps;
  std::vector<double> mixture_dual_gaps;  // gap of mean(pi_1..pi_t)
  std::vector<double> B_so_far;
  double measured_B = 0.0;
  std::vector<std::string> warnings;

  long iterations() const { return static_cast<long>(etas.size()); }
};

// l_t(pi) with pi_t as the opponent.
double LossValue(const GameSpec& spec, const Policy& pi, const Policy& pi_t);

// grad_y l_t(pi_t) = -P(y > pi_t) + tau (log(pi_t(y) / ref(y)) + 1); entries
// outside the reference support are zero.
std::vector<double> LossGradient(const GameSpec& spec, const Policy& pi_t);

// Closed-form mirror-descent update, evaluated in log space.
Policy OmdStep(const GameSpec& spec, const Policy& pi_t, double eta);

// The same update driven by an explicit gradient. Adding a constant to every
// gradient entry leaves the result unchanged.
Policy OmdStepFromGradient(const Policy& pi_t, std::span<const double> gradient,
                           double eta);

struct PlannerOptions {
  // Mixture gaps cost an extra best response per update.
  bool track_mixture_gap = true;
};

PlannerTrace RunPlanner(const GameSpec& spec, const StepSchedule& schedule,
                        long T, const std::optional<Policy>& nash_ref,
                        PlannerOptions options = {});

// Greedy self-play pi_{t+1} = BestResponse(pi_t), traced like RunPlanner.
PlannerTrace RunGreedy(const GameSpec& spec, long T,
                       const std::optional<Policy>& nash_ref,
                       PlannerOptions options = {});

// Uniform mixture of pi_1..pi_T in probability space.
Policy MixturePolicy(const PlannerTrace& trace, long T);

// sum_t <grad l_t(pi_t), pi_t - comparator> over all updates in the trace.
double Regret(const PlannerTrace& trace, const Policy& comparator);
double Regret(const PlannerTrace& trace, const Policy& comparator, long T);

// max over iterates and supported responses of |log(pi_t(y) / ref(y))|.
double MeasureB(const PlannerTrace& trace, const Policy& ref);
double MeasureB(std::span<const Policy> policies, const Policy& ref);

// Closure value of max_pi KL(pi || ref) = max_y log(1 / ref(y)).
double KappaBound(const Policy& ref);

Policy GreedyStep(const GameSpec& spec, const Policy& pi_t);

// Per-update check of
//   KL(nash, pi_{t+1}) <= (1 - tau / eta_t) KL(nash, pi_t) + 8 C^2 / eta_t^2
// with C = max(measured_B tau, 1). Requires eta_t >= tau everywhere.
std::vector<bool> VerifyKlRecursion(const PlannerTrace& trace,
                                    const Policy& nash, double tau,
                                    std::span<const double> etas);

// Right-hand side of the last-iterate rate 32 C^2 / (tau^2 (T + 1)).
double Theorem2Bound(double C, double tau, long T);
// eta KL(comparator || pi_1) + (4 tau^2 B^2 + 1) T / eta.
double Lemma1ExplicitBound(double eta, double kl_to_start, double tau,
                           double B, long T);

// One JSON object per update:
// {t, eta, dual_gap, mixture_dual_gap, kl_to_nash, regret_partial,
//  grad_inf_norm, B_so_far}; missing diagnostics are null.
void WriteTraceJsonl(std::ostream& out, const PlannerTrace& trace);

}  // namespace inpo

#endif  // INPO_PLANNER_H_
