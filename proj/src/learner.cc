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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>

#include "inpo/planner.h"
#include "json.hpp"

namespace inpo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::size_t> SupportOf(const Policy& ref) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref.supported(i)) s.push_back(i);
  }
  return s;
}

// Policy-dependent part of h_t: log pi(y) - g_t(y).
std::vector<double> Offsets(const Policy& pi, const Policy& pi_t,
                            const Policy& ref, double tau, double eta) {
  const double mix = tau / eta;
  std::vector<double> a(pi.size(), 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!ref.supported(i)) continue;
    a[i] = pi.log_prob(i) - mix * ref.log_prob(i) -
           (1.0 - mix) * pi_t.log_prob(i);
  }
  return a;
}

void CheckLossArgs(const Policy& pi, const Policy& pi_t, const Policy& ref,
                   double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("loss: eta must be > 0");
  RequireSameSupport(pi, ref);
  RequireSameSupport(pi_t, ref);
}

struct WeightedPair {
  std::size_t winner;
  std::size_t loser;
  double weight;
};

// Union-find connectivity of the supported responses under the pair graph.
bool Connected(const std::vector<std::size_t>& support,
               const std::vector<WeightedPair>& pairs, std::size_t m) {
  std::vector<std::size_t> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& p : pairs) {
    if (p.weight > 0.0) parent[find(p.winner)] = find(p.loser);
  }
  const std::size_t root = find(support.front());
  return std::all_of(support.begin(), support.end(),
                     [&](std::size_t i) { return find(i) == root; });
}

FitResult SolveResiduals(const std::vector<WeightedPair>& pairs,
                         const Policy& pi_t, const Policy& ref,
                         const LearnConfig& config) {
  const std::size_t m = ref.size();
  const std::vector<std::size_t> support = SupportOf(ref);
  const std::size_t k = support.size();
  std::vector<long> slot(m, -1);
  for (std::size_t s = 0; s < k; ++s) slot[support[s]] = static_cast<long>(s);

  const double target = 1.0 / (2.0 * config.eta);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  for (const auto& p : pairs) {
    const long w = slot[p.winner];
    const long l = slot[p.loser];
    if (w < 0 || l < 0) {
      throw InvalidArgument("fit: pair uses a response outside the support");
    }
    A(w, w) += p.weight;
    A(l, l) += p.weight;
    A(w, l) -= p.weight;
    A(l, w) -= p.weight;
    b(w) += p.weight * target;
    b(l) -= p.weight * target;
  }
  if (config.ridge > 0.0) {
    A.diagonal().array() += config.ridge;
  } else {
    if (!Connected(support, pairs, m)) {
      throw InvalidArgument(
          "fit: pair graph does not connect every supported response; the "
          "normal equations are singular with ridge = 0, use ridge > 0");
    }
    // The data term is blind to constant shifts; pinning sum(u) = 0 through
    // a rank-one term leaves the minimizer otherwise unchanged.
    const double scale = std::max(A.diagonal().mean(), 1e-300);
    A.array() += scale / static_cast<double>(k);
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    throw InvalidArgument("fit: normal equations could not be factorized");
  }
  Eigen::VectorXd u = ldlt.solve(b);
  u.array() -= u.mean();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double cond = ev.minCoeff() > 0.0
                          ? ev.maxCoeff() / ev.minCoeff()
                          : std::numeric_limits<double>::infinity();

  ResidualVector residual{std::vector<double>(m, 0.0)};
  for (std::size_t s = 0; s < k; ++s) residual.u[support[s]] = u(s);
  Policy policy =
      PolicyFromResiduals(residual, pi_t, ref, config.tau, config.eta);
  return {std::move(policy), std::move(residual), cond};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

LearnConfig LearnConfig::Defaults(double eta, LearnMode mode) {
  LearnConfig c;
  c.eta = eta;
  c.tau = eta / 3.0;
  c.mode = mode;
  c.ridge = mode.kind == LearnMode::Kind::kExact ? 0.0 : 1e-6;
  return c;
}

std::vector<std::string> LearnConfig::Validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw InvalidArgument("LearnConfig: eta must be > 0");
  }
  if (!(tau >= 0.0)) throw InvalidArgument("LearnConfig: tau must be >= 0");
  if (!(ridge >= 0.0)) throw InvalidArgument("LearnConfig: ridge must be >= 0");
  if (mode.kind == LearnMode::Kind::kSampled && mode.n < 1) {
    throw InvalidArgument("LearnConfig: sampled mode needs n >= 1");
  }
  std::vector<std::string> warnings;
  if (eta < tau) {
    warnings.push_back("eta = " + FormatDouble(eta) + " < tau = " +
                       FormatDouble(tau));
  }
  return warnings;
}

// ---------------------------------------------------------------------------
// Losses

double HValue(const Policy& pi, std::size_t y, std::size_t y2,
              const Policy& pi_t, const Policy& ref, double tau, double eta) {
  if (y >= ref.size() || y2 >= ref.size() || !ref.supported(y) ||
      !ref.supported(y2)) {
    throw InvalidArgument("HValue: response outside the reference support");
  }
  if (y == y2) return 0.0;
  const double mix = tau / eta;
  return (pi.log_prob(y) - pi.log_prob(y2)) -
         mix * (ref.log_prob(y) - ref.log_prob(y2)) -
         (1.0 - mix) * (pi_t.log_prob(y) - pi_t.log_prob(y2));
}

double ExactLoss(const Policy& pi, const Policy& pi_t, const GameSpec& spec,
                 double eta) {
  const Policy& ref = spec.ref_policy;
  CheckLossArgs(pi, pi_t, ref, eta);
  const std::vector<double> a = Offsets(pi, pi_t, ref, spec.tau, eta);
  const std::vector<double> wins = spec.pref.WinAgainst(pi_t);
  const auto support = SupportOf(ref);
  double loss = 0.0;
  for (std::size_t i : support) {
    for (std::size_t j : support) {
      const double r = (a[i] - a[j]) - (wins[i] - wins[j]) / eta;
      loss += pi_t[i] * pi_t[j] * r * r;
    }
  }
  return loss;
}

double PopulationLoss(const Policy& pi, const Policy& pi_t,
                      const GameSpec& spec, double eta) {
  const Policy& ref = spec.ref_policy;
  CheckLossArgs(pi, pi_t, ref, eta);
  const std::vector<double> a = Offsets(pi, pi_t, ref, spec.tau, eta);
  const double c = 1.0 / (2.0 * eta);
  const auto support = SupportOf(ref);
  double loss = 0.0;
  for (std::size_t i : support) {
    for (std::size_t j : support) {
      const double p = spec.pref(i, j);
      const double h = a[i] - a[j];
      const double forward = h - c;    // y wins
      const double backward = -h - c;  // y' wins
      loss += pi_t[i] * pi_t[j] *
              (p * forward * forward + (1.0 - p) * backward * backward);
    }
  }
  return loss;
}

double PopulationLossBernoulli(const Policy& pi, const Policy& pi_t,
                               const GameSpec& spec, double eta) {
  const Policy& ref = spec.ref_policy;
  CheckLossArgs(pi, pi_t, ref, eta);
  const std::vector<double> a = Offsets(pi, pi_t, ref, spec.tau, eta);
  const auto support = SupportOf(ref);
  double loss = 0.0;
  for (std::size_t i : support) {
    for (std::size_t j : support) {
      const double p = spec.pref(i, j);
      const double h = a[i] - a[j];
      const double one = h - 1.0 / eta;
      loss += pi_t[i] * pi_t[j] * (p * one * one + (1.0 - p) * h * h);
    }
  }
  return loss;
}

double EmpiricalLoss(const Policy& pi, const PreferenceDataset& dataset,
                     const Policy& pi_t, const Policy& ref, double tau,
                     double eta) {
  if (dataset.pairs.empty()) {
    throw InvalidArgument("EmpiricalLoss: empty dataset");
  }
  CheckLossArgs(pi, pi_t, ref, eta);
  const double c = 1.0 / (2.0 * eta);
  double loss = 0.0;
  for (const auto& p : dataset.pairs) {
    const double r = HValue(pi, p.winner, p.loser, pi_t, ref, tau, eta) - c;
    loss += r * r;
  }
  return loss / static_cast<double>(dataset.pairs.size());
}

Policy PolicyFromResiduals(const ResidualVector& residual, const Policy& pi_t,
                           const Policy& ref, double tau, double eta) {
  if (residual.u.size() != ref.size()) {
    throw InvalidArgument("PolicyFromResiduals: dimension mismatch");
  }
  RequireSameSupport(pi_t, ref);
  const double mix = tau / eta;
  std::vector<double> logits(ref.size(), kNegInf);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!ref.supported(i)) continue;
    logits[i] = mix * ref.log_prob(i) + residual.u[i];
    if (mix != 1.0) logits[i] += (1.0 - mix) * pi_t.log_prob(i);
  }
  return Policy::FromLogits(logits);
}

// ---------------------------------------------------------------------------
// Fitting

FitResult FitNextPolicy(const PreferenceDataset& dataset, const Policy& pi_t,
                        const Policy& ref, const LearnConfig& config) {
  config.Validate();
  RequireSameSupport(pi_t, ref);
  std::vector<WeightedPair> pairs;
  pairs.reserve(dataset.pairs.size());
  const double w = dataset.pairs.empty()
                       ? 0.0
                       : 1.0 / static_cast<double>(dataset.pairs.size());
  for (const auto& p : dataset.pairs) {
    if (p.winner == p.loser) continue;  // h_t(., y, y) = 0 carries no signal
    pairs.push_back({p.winner, p.loser, w});
  }
  if (pairs.empty() && !(config.ridge > 0.0)) {
    throw InvalidArgument("fit: no informative pairs; use ridge > 0");
  }
  return SolveResiduals(pairs, pi_t, ref, config);
}

FitResult FitNextPolicyExact(const GameSpec& spec, const Policy& pi_t,
                             const LearnConfig& config) {
  config.Validate();
  const Policy& ref = spec.ref_policy;
  RequireSameSupport(pi_t, ref);
  const auto support = SupportOf(ref);
  std::vector<WeightedPair> pairs;
  for (std::size_t i : support) {
    for (std::size_t j : support) {
      if (i == j) continue;
      const double w = pi_t[i] * pi_t[j] * spec.pref(i, j);
      if (w > 0.0) pairs.push_back({i, j, w});
    }
  }
  return SolveResiduals(pairs, pi_t, ref, config);
}

void WriteFitDiagnosticsJson(std::ostream& out, const ResponseSpace& space,
                             const FitResult& fit) {
  nlohmann::json j;
  j["u"] = nlohmann::json::object();
  for (std::size_t i = 0; i < fit.residual.u.size(); ++i) {
    j["u"][space.id(i)] = fit.residual.u[i];
  }
  j["condition_number"] = fit.condition_number;
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Loops

namespace {

void RecordIterate(const GameSpec& spec, const std::optional<Policy>& nash_ref,
                   const Policy& pi, RunTrace& trace) {
  trace.dual_gaps.push_back(DualityGap(spec, pi));
  if (nash_ref) trace.kl_to_nash.push_back(KlDivergence(*nash_ref, pi));
}

}  // namespace

RunTrace RunInpo(const GameSpec& spec, PreferenceOracle& oracle, long T,
                 const LearnConfig& config,
                 const std::optional<Policy>& nash_ref, std::uint64_t seed) {
  if (T < 1) throw InvalidArgument("RunInpo: T must be >= 1");
  if (oracle.size() != spec.size()) {
    throw InvalidArgument("RunInpo: oracle/game dimension mismatch");
  }
  if (config.tau != spec.tau) {
    throw InvalidArgument("RunInpo: config tau differs from the game's tau");
  }
  RunTrace trace;
  trace.warnings = config.Validate();
  trace.policies.push_back(spec.ref_policy);
  RecordIterate(spec, nash_ref, spec.ref_policy, trace);
  const long queries_before = oracle.query_count();
  for (long t = 1; t <= T; ++t) {
    const Policy& current = trace.policies.back();
    FitResult fit = [&] {
      if (config.mode.kind == LearnMode::Kind::kExact) {
        trace.dataset_sizes.push_back(0);
        return FitNextPolicyExact(spec, current, config);
      }
      PreferenceDataset data = CollectDataset(
          oracle, current, config.mode.n, config.mode.collection, seed, t);
      trace.dataset_sizes.push_back(static_cast<long>(data.size()));
      return FitNextPolicy(data, current, spec.ref_policy, config);
    }();
    trace.oracle_queries_cumulative.push_back(oracle.query_count() -
                                              queries_before);
    RecordIterate(spec, nash_ref, fit.policy, trace);
    trace.policies.push_back(std::move(fit.policy));
  }
  return trace;
}

EquivalenceReport VerifyEquivalence(const GameSpec& spec, const Policy& pi_t,
                                    double eta,
                                    std::span<const Policy> probes) {
  if (probes.size() < 3) {
    throw InvalidArgument("VerifyEquivalence: need at least 3 probe policies");
  }
  auto spread = [](const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  std::vector<double> pop;
  std::vector<double> ber;
  for (const Policy& pi : probes) {
    const double exact = ExactLoss(pi, pi_t, spec, eta);
    pop.push_back(PopulationLoss(pi, pi_t, spec, eta) - exact);
    ber.push_back(PopulationLossBernoulli(pi, pi_t, spec, eta) - exact);
  }
  return {spread(pop), spread(ber)};
}

// ---------------------------------------------------------------------------
// Iterative DPO baseline

double DpoObjective(const Policy& pi, const PreferenceDataset& dataset,
                    const Policy& ref, double beta, double ridge) {
  if (dataset.pairs.empty()) throw InvalidArgument("DPO: empty dataset");
  RequireSameSupport(pi, ref);
  const auto support = SupportOf(ref);
  std::vector<double> theta(ref.size(), 0.0);
  double mean = 0.0;
  for (std::size_t i : support) {
    theta[i] = pi.log_prob(i) - ref.log_prob(i);
    mean += theta[i];
  }
  mean /= static_cast<double>(support.size());
  for (std::size_t i : support) theta[i] -= mean;
  double f = 0.0;
  for (const auto& p : dataset.pairs) {
    const double z = beta * (theta[p.winner] - theta[p.loser]);
    // -log sigmoid(z) = log(1 + exp(-z))
    f += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
  }
  f /= static_cast<double>(dataset.pairs.size());
  for (std::size_t i : support) f += ridge * theta[i] * theta[i];
  return f;
}

Policy DpoBaselineStep(const PreferenceDataset& dataset, const Policy& pi_t,
                       const Policy& ref, double beta, double ridge) {
  if (!(beta > 0.0)) throw InvalidArgument("DPO: beta must be > 0");
  if (!(ridge > 0.0)) {
    throw InvalidArgument("DPO: ridge must be > 0 (separable data diverges)");
  }
  if (dataset.pairs.empty()) throw InvalidArgument("DPO: empty dataset");
  RequireSameSupport(pi_t, ref);
  const auto support = SupportOf(ref);
  const std::size_t k = support.size();
  std::vector<long> slot(ref.size(), -1);
  for (std::size_t s = 0; s < k; ++s) slot[support[s]] = static_cast<long>(s);
  for (const auto& p : dataset.pairs) {
    if (slot[p.winner] < 0 || slot[p.loser] < 0) {
      throw InvalidArgument("DPO: pair outside the reference support");
    }
  }
  const double inv_n = 1.0 / static_cast<double>(dataset.pairs.size());

  auto objective = [&](const Eigen::VectorXd& th) {
    double f = 0.0;
    for (const auto& p : dataset.pairs) {
      const double z = beta * (th(slot[p.winner]) - th(slot[p.loser]));
      f += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    }
    return f * inv_n + ridge * th.squaredNorm();
  };

  Eigen::VectorXd theta(k);
  for (std::size_t s = 0; s < k; ++s) {
    theta(s) = pi_t.log_prob(support[s]) - ref.log_prob(support[s]);
  }
  theta.array() -= theta.mean();

  double f = objective(theta);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd grad = 2.0 * ridge * theta;
    Eigen::MatrixXd hess = 2.0 * ridge * Eigen::MatrixXd::Identity(k, k);
    for (const auto& p : dataset.pairs) {
      const long w = slot[p.winner];
      const long l = slot[p.loser];
      const double z = beta * (theta(w) - theta(l));
      const double s = Sigmoid(z);
      const double g = -beta * (1.0 - s) * inv_n;
      grad(w) += g;
      grad(l) -= g;
      const double h = beta * beta * s * (1.0 - s) * inv_n;
      hess(w, w) += h;
      hess(l, l) += h;
      hess(w, l) -= h;
      hess(l, w) -= h;
    }
    if (grad.norm() <= 1e-8) break;
    const Eigen::VectorXd dir = -hess.ldlt().solve(grad);
    double step = 1.0;
    const double slope = grad.dot(dir);
    Eigen::VectorXd next = theta + dir;
    double f_next = objective(next);
    while (f_next > f + 1e-4 * step * slope && step > 1e-12) {
      step *= 0.5;
      next = theta + step * dir;
      f_next = objective(next);
    }
    if (!(f_next <= f)) break;
    theta = std::move(next);
    f = f_next;
  }

  std::vector<double> logits(ref.size(), kNegInf);
  for (std::size_t s = 0; s < k; ++s) {
    logits[support[s]] = ref.log_prob(support[s]) + theta(s);
  }
  return Policy::FromLogits(logits);
}

RunTrace RunIterativeDpo(const GameSpec& spec, PreferenceOracle& oracle,
                         long T, double beta, long n, CollectionMode mode,
                         double ridge, const std::optional<Policy>& nash_ref,
                         std::uint64_t seed) {
  if (T < 1) throw InvalidArgument("RunIterativeDpo: T must be >= 1");
  RunTrace trace;
  trace.policies.push_back(spec.ref_policy);
  RecordIterate(spec, nash_ref, spec.ref_policy, trace);
  const long queries_before = oracle.query_count();
  for (long t = 1; t <= T; ++t) {
    const Policy& current = trace.policies.back();
    PreferenceDataset data = CollectDataset(oracle, current, n, mode, seed, t);
    trace.dataset_sizes.push_back(static_cast<long>(data.size()));
    Policy next = DpoBaselineStep(data, current, spec.ref_policy, beta, ridge);
    trace.oracle_queries_cumulative.push_back(oracle.query_count() -
                                              queries_before);
    RecordIterate(spec, nash_ref, next, trace);
    trace.policies.push_back(std::move(next));
  }
  return trace;
}

}  // namespace inpo
