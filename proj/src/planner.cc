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

#include "inpo/planner.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace inpo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double Dot(std::span<const double> a, const Policy& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (p.supported(i)) acc += a[i] * p[i];
  }
  return acc;
}

double InfNorm(std::span<const double> v) {
  double n = 0.0;
  for (double x : v) n = std::max(n, std::abs(x));
  return n;
}

double MaxLogRatio(const Policy& pi, const Policy& ref) {
  double b = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!ref.supported(i)) continue;
    b = std::max(b, std::abs(pi.log_prob(i) - ref.log_prob(i)));
  }
  return b;
}

using StepFn = std::function<Policy(const Policy&, long, double)>;

// Shared driver for mirror descent and greedy self-play.
PlannerTrace BuildTrace(const GameSpec& spec, long T,
                        const std::optional<Policy>& nash_ref,
                        const PlannerOptions& options,
                        const std::function<double(long)>& eta_at,
                        const StepFn& step) {
  if (T < 1) throw InvalidArgument("planner: T must be >= 1");
  if (nash_ref) RequireSameSupport(*nash_ref, spec.ref_policy);
  const Policy& ref = spec.ref_policy;

  PlannerTrace trace;
  trace.policies.reserve(T + 1);
  trace.policies.push_back(ref);
  trace.dual_gaps.push_back(DualityGap(spec, ref));
  if (nash_ref) trace.kl_to_nash.push_back(KlDivergence(*nash_ref, ref));

  std::vector<double> mixture_sum(spec.size(), 0.0);
  double regret = 0.0;
  double b_so_far = 0.0;
  for (long t = 1; t <= T; ++t) {
    const Policy& current = trace.policies.back();
    const double eta = eta_at(t);
    std::vector<double> grad = LossGradient(spec, current);

    trace.etas.push_back(eta);
    trace.grad_inf_norms.push_back(InfNorm(grad));
    if (nash_ref) {
      regret += Dot(grad, current) - Dot(grad, *nash_ref);
      trace.regret_partials.push_back(regret);
    }
    if (options.track_mixture_gap) {
      for (std::size_t i = 0; i < mixture_sum.size(); ++i) {
        mixture_sum[i] += current[i];
      }
      trace.mixture_dual_gaps.push_back(
          DualityGap(spec, Policy::Normalized(mixture_sum)));
    }
    b_so_far = std::max(b_so_far, MaxLogRatio(current, ref));

    Policy next = step(current, t, eta);
    b_so_far = std::max(b_so_far, MaxLogRatio(next, ref));
    trace.B_so_far.push_back(b_so_far);
    trace.dual_gaps.push_back(DualityGap(spec, next));
    if (nash_ref) trace.kl_to_nash.push_back(KlDivergence(*nash_ref, next));
    trace.gradients.push_back(std::move(grad));
    trace.policies.push_back(std::move(next));
  }
  trace.measured_B = b_so_far;
  return trace;
}

}  // namespace

// ---------------------------------------------------------------------------
// StepSchedule

StepSchedule StepSchedule::Constant(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw InvalidArgument("constant schedule: eta must be > 0");
  }
  return StepSchedule(Kind::kConstant, eta, 0, 0.0, 0.0);
}

StepSchedule StepSchedule::Lemma1(long horizon, double B, double kappa) {
  if (horizon < 1) throw InvalidArgument("lemma1 schedule: T must be >= 1");
  if (!(B >= 0.0)) throw InvalidArgument("lemma1 schedule: B must be >= 0");
  if (!(kappa > 0.0)) {
    throw InvalidArgument("lemma1 schedule: kappa must be > 0");
  }
  return StepSchedule(Kind::kLemma1, 0.0, horizon, B, kappa);
}

StepSchedule StepSchedule::Theorem2() {
  return StepSchedule(Kind::kTheorem2, 0.0, 0, 0.0, 0.0);
}

double StepSchedule::Eta(long t, double tau) const {
  switch (kind_) {
    case Kind::kConstant:
      return eta_;
    case Kind::kLemma1:
      return std::max(B_ * tau, 1.0) * std::sqrt(static_cast<double>(horizon_)) /
             std::sqrt(kappa_);
    case Kind::kTheorem2:
      return tau * static_cast<double>(t + 2) / 2.0;
  }
  return eta_;
}

std::vector<std::string> StepSchedule::Validate(long T, double tau) const {
  std::vector<std::string> warnings;
  if (T < 1) throw InvalidArgument("schedule: T must be >= 1");
  switch (kind_) {
    case Kind::kConstant:
      if (eta_ < tau) {
        warnings.push_back("eta = " + FormatDouble(eta_) + " < tau = " +
                           FormatDouble(tau) +
                           ": the pi_t exponent 1 - tau/eta is negative");
      }
      break;
    case Kind::kLemma1:
      if (horizon_ != T) {
        throw InvalidArgument("lemma1 schedule built for T = " +
                              std::to_string(horizon_) + " but run for T = " +
                              std::to_string(T));
      }
      if (Eta(1, tau) < tau) {
        warnings.push_back("lemma1 eta below tau");
      }
      break;
    case Kind::kTheorem2:
      if (!(tau > 0.0)) {
        throw InvalidArgument("theorem2 schedule requires tau > 0");
      }
      break;
  }
  return warnings;
}

std::string StepSchedule::ToString() const {
  switch (kind_) {
    case Kind::kConstant:
      return "constant(" + FormatDouble(eta_) + ")";
    case Kind::kLemma1:
      return "lemma1(T=" + std::to_string(horizon_) + ",B=" + FormatDouble(B_) +
             ",kappa=" + FormatDouble(kappa_) + ")";
    case Kind::kTheorem2:
      return "theorem2";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Losses and updates

double LossValue(const GameSpec& spec, const Policy& pi, const Policy& pi_t) {
  RequireWithinSupport(pi, spec.ref_policy);
  RequireWithinSupport(pi_t, spec.ref_policy);
  double value = -WinProb(spec.pref, pi, pi_t);
  if (spec.tau > 0.0) value += spec.tau * KlDivergence(pi, spec.ref_policy);
  return value;
}

std::vector<double> LossGradient(const GameSpec& spec, const Policy& pi_t) {
  RequireSameSupport(pi_t, spec.ref_policy);
  const std::vector<double> wins = spec.pref.WinAgainst(pi_t);
  std::vector<double> grad(spec.size(), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!spec.ref_policy.supported(i)) continue;
    grad[i] = -wins[i] +
              spec.tau * (pi_t.log_prob(i) - spec.ref_policy.log_prob(i) + 1.0);
  }
  return grad;
}

Policy OmdStep(const GameSpec& spec, const Policy& pi_t, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("OmdStep: eta must be > 0");
  RequireSameSupport(pi_t, spec.ref_policy);
  const std::vector<double> wins = spec.pref.WinAgainst(pi_t);
  const double mix = spec.tau / eta;
  std::vector<double> logits(spec.size(), kNegInf);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!spec.ref_policy.supported(i)) continue;
    logits[i] = wins[i] / eta + mix * spec.ref_policy.log_prob(i);
    // With eta == tau the pi_t factor has exponent zero and drops out.
    if (mix != 1.0) logits[i] += (1.0 - mix) * pi_t.log_prob(i);
  }
  return Policy::FromLogits(logits);
}

Policy OmdStepFromGradient(const Policy& pi_t, std::span<const double> gradient,
                           double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("OmdStep: eta must be > 0");
  if (gradient.size() != pi_t.size()) {
    throw InvalidArgument("OmdStepFromGradient: dimension mismatch");
  }
  std::vector<double> logits(pi_t.size(), kNegInf);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (pi_t.supported(i)) logits[i] = pi_t.log_prob(i) - gradient[i] / eta;
  }
  return Policy::FromLogits(logits);
}

Policy GreedyStep(const GameSpec& spec, const Policy& pi_t) {
  return BestResponse(spec, pi_t);
}

// ---------------------------------------------------------------------------
// Runs

PlannerTrace RunPlanner(const GameSpec& spec, const StepSchedule& schedule,
                        long T, const std::optional<Policy>& nash_ref,
                        PlannerOptions options) {
  std::vector<std::string> warnings = schedule.Validate(T, spec.tau);
  PlannerTrace trace = BuildTrace(
      spec, T, nash_ref, options,
      [&](long t) { return schedule.Eta(t, spec.tau); },
      [&](const Policy& pi, long, double eta) {
        return OmdStep(spec, pi, eta);
      });
  trace.warnings = std::move(warnings);
  return trace;
}

PlannerTrace RunGreedy(const GameSpec& spec, long T,
                       const std::optional<Policy>& nash_ref,
                       PlannerOptions options) {
  if (!(spec.tau > 0.0)) throw InvalidArgument("greedy: tau must be > 0");
  // Greedy self-play is the mirror-descent update with eta == tau.
  return BuildTrace(
      spec, T, nash_ref, options, [&](long) { return spec.tau; },
      [&](const Policy& pi, long, double) { return GreedyStep(spec, pi); });
}

Policy MixturePolicy(const PlannerTrace& trace, long T) {
  if (T < 1) throw InvalidArgument("MixturePolicy: T must be >= 1");
  if (T > static_cast<long>(trace.policies.size())) {
    throw InvalidArgument("MixturePolicy: T exceeds the number of iterates");
  }
  const std::size_t m = trace.policies.front().size();
  std::vector<double> sum(m, 0.0);
  for (long t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < m; ++i) sum[i] += trace.policies[t][i];
  }
  for (double& s : sum) s /= static_cast<double>(T);
  return Policy::Normalized(std::move(sum));
}

double Regret(const PlannerTrace& trace, const Policy& comparator) {
  return Regret(trace, comparator, trace.iterations());
}

double Regret(const PlannerTrace& trace, const Policy& comparator, long T) {
  if (T > trace.iterations()) {
    throw InvalidArgument("Regret: T exceeds the number of updates");
  }
  RequireWithinSupport(comparator, trace.policies.front());
  double regret = 0.0;
  for (long t = 0; t < T; ++t) {
    const auto& grad = trace.gradients[t];
    regret += Dot(grad, trace.policies[t]) - Dot(grad, comparator);
  }
  return regret;
}

double MeasureB(const PlannerTrace& trace, const Policy& ref) {
  return MeasureB(trace.policies, ref);
}

double MeasureB(std::span<const Policy> policies, const Policy& ref) {
  double b = 0.0;
  for (const Policy& pi : policies) b = std::max(b, MaxLogRatio(pi, ref));
  return b;
}

double KappaBound(const Policy& ref) {
  double kappa = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref.supported(i)) kappa = std::max(kappa, -ref.log_prob(i));
  }
  return kappa;
}

std::vector<bool> VerifyKlRecursion(const PlannerTrace& trace,
                                    const Policy& nash, double tau,
                                    std::span<const double> etas) {
  const std::size_t updates = trace.policies.size() - 1;
  if (etas.size() != updates) {
    throw InvalidArgument("VerifyKlRecursion: need one eta per update");
  }
  for (double eta : etas) {
    if (eta < tau) {
      throw InvalidArgument("VerifyKlRecursion: eta = " + FormatDouble(eta) +
                            " < tau makes the recursion coefficient negative");
    }
  }
  const double C = std::max(trace.measured_B * tau, 1.0);
  std::vector<bool> ok(updates);
  double kl_prev = KlDivergence(nash, trace.policies[0]);
  for (std::size_t t = 0; t < updates; ++t) {
    const double kl_next = KlDivergence(nash, trace.policies[t + 1]);
    const double eta = etas[t];
    const double rhs = (1.0 - tau / eta) * kl_prev + 8.0 * C * C / (eta * eta);
    ok[t] = kl_next <= rhs + kExactTol;
    kl_prev = kl_next;
  }
  return ok;
}

double Theorem2Bound(double C, double tau, long T) {
  return 32.0 * C * C / (tau * tau * static_cast<double>(T + 1));
}

double Lemma1ExplicitBound(double eta, double kl_to_start, double tau,
                           double B, long T) {
  return eta * kl_to_start +
         (4.0 * tau * tau * B * B + 1.0) * static_cast<double>(T) / eta;
}

void WriteTraceJsonl(std::ostream& out, const PlannerTrace& trace) {
  using nlohmann::json;
  for (long t = 1; t <= trace.iterations(); ++t) {
    const std::size_t k = static_cast<std::size_t>(t - 1);
    json rec;
    rec["t"] = t;
    rec["eta"] = trace.etas[k];
    rec["dual_gap"] = trace.dual_gaps[k + 1];
    rec["mixture_dual_gap"] = k < trace.mixture_dual_gaps.size()
                                  ? json(trace.mixture_dual_gaps[k])
                                  : json(nullptr);
    rec["kl_to_nash"] =
        trace.kl_to_nash.empty() ? json(nullptr) : json(trace.kl_to_nash[k + 1]);
    rec["regret_partial"] = trace.regret_partials.empty()
                                ? json(nullptr)
                                : json(trace.regret_partials[k]);
    rec["grad_inf_norm"] = trace.grad_inf_norms[k];
    rec["B_so_far"] = trace.B_so_far[k];
    out << rec.dump() << '\n';
  }
}

}  // namespace inpo
