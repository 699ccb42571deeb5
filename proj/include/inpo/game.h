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

#ifndef INPO_GAME_H_
#define INPO_GAME_H_

// Finite KL-regularized two-player preference games.
//
// Both players pick a policy over the same finite response space. The
// max-player's objective is
//
//   J(p1, p2) = E_{y~p1, y'~p2}[P(y > y')] - tau KL(p1 || ref) + tau KL(p2 || ref)
//
// which is symmetric (J(a, b) + J(b, a) = 1), so the unique Nash policy is
// shared by both players.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "inpo/common.h"

namespace inpo {

// Ordered list of distinct, non-empty response identifiers (m >= 2).
class ResponseSpace {
 public:
  explicit ResponseSpace(std::vector<std::string> ids);
  // Identifiers "y0", "y1", ..., "y{m-1}".
  static ResponseSpace Indexed(std::size_t m);

  std::size_t size() const { return ids_.size(); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const { return ids_; }
  // Throws InvalidArgument for unknown identifiers.
  std::size_t IndexOf(const std::string& id) const;
  std::optional<std::size_t> Find(const std::string& id) const;

  bool operator==(const ResponseSpace& other) const {
    return ids_ == other.ids_;
  }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Probability vector over a response space. Log-probabilities are kept
// alongside the probabilities so that policies built from logits keep full
// precision on tiny entries.
class Policy {
 public:
  // Validates non-negativity and |sum - 1| <= 1e-12.
  static Policy FromProbs(std::vector<double> probs);
  // Renormalizes a non-negative vector with positive mass.
  static Policy Normalized(std::vector<double> weights);
  // Softmax of logits; -inf entries get probability zero.
  static Policy FromLogits(std::span<const double> logits);
  static Policy Uniform(std::size_t m);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  double log_prob(std::size_t i) const { return log_probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> log_probs() const { return log_probs_; }
  bool supported(std::size_t i) const { return probs_[i] > 0.0; }
  std::size_t support_size() const;

 private:
  Policy(std::vector<double> probs, std::vector<double> log_probs);

  std::vector<double> probs_;
  std::vector<double> log_probs_;
};

// Pairwise win probabilities P[i][j] = P(y_i > y_j), antisymmetric about 1/2.
class PreferenceMatrix {
 public:
  // Throws InvalidArgument naming the first violated cell.
  explicit PreferenceMatrix(std::vector<std::vector<double>> rows);
  // Matrix with every entry 1/2.
  static PreferenceMatrix Indifferent(std::size_t m);

  std::size_t size() const { return m_; }
  double operator()(std::size_t i, std::size_t j) const {
    return p_[i * m_ + j];
  }
  std::vector<std::vector<double>> rows() const;
  // Vector of P(y > pi) = sum_y' pi(y') P(y > y').
  std::vector<double> WinAgainst(const Policy& pi) const;

  bool operator==(const PreferenceMatrix& other) const {
    return m_ == other.m_ && p_ == other.p_;
  }

 private:
  std::size_t m_;
  std::vector<double> p_;
};

// Samples the strict upper triangle i.i.d. uniform on [0, 1] and mirrors it.
PreferenceMatrix RandomPreferenceMatrix(std::size_t m, Rng& rng);
// Dirichlet(alpha, ..., alpha) draw; strictly positive entries.
Policy RandomPolicy(std::size_t m, Rng& rng, double alpha = 1.0);
// Random policy with the same support as `ref`.
Policy RandomPolicyLike(const Policy& ref, Rng& rng, double alpha = 1.0);

// The game: preference source, reference policy and regularization weight.
struct GameSpec {
  GameSpec(ResponseSpace space, PreferenceMatrix pref, Policy ref_policy,
           double tau);
  // Indexed response space with a uniform reference policy.
  static GameSpec WithUniformRef(PreferenceMatrix pref, double tau);

  std::size_t size() const { return space.size(); }
  bool operator==(const GameSpec& other) const;

  ResponseSpace space;
  PreferenceMatrix pref;
  Policy ref_policy;
  double tau;
};

// KL(a || b) with natural log and 0 log 0 = 0. Infinite when a puts mass
// where b has none.
double KlDivergence(const Policy& a, const Policy& b);

// Throws unless supp(pi) is contained in supp(ref).
void RequireWithinSupport(const Policy& pi, const Policy& ref);
// Throws unless supp(pi) == supp(ref) (membership in the policy class).
void RequireSameSupport(const Policy& pi, const Policy& ref);

// p1^T P p2.
double WinProb(const PreferenceMatrix& pref, const Policy& p1,
               const Policy& p2);

double GameValue(const GameSpec& spec, const Policy& p1, const Policy& p2);

// Maximizer of J(., opponent): pi(y) ~ ref(y) exp(P(y > opponent) / tau).
// Requires tau > 0.
Policy BestResponse(const GameSpec& spec, const Policy& opponent);

// max_{p1} J(p1, pi) - min_{p2} J(pi, p2). With tau == 0 the maxima are
// taken over the closed simplex, i.e. over pure responses.
double DualityGap(const GameSpec& spec, const Policy& pi);

// Raised when an iterative solver exhausts its budget. Carries the best
// iterate seen and its duality gap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Policy best, double best_gap);
  const Policy& best() const { return best_; }
  double best_gap() const { return best_gap_; }

 private:
  Policy best_;
  double best_gap_;
};

// Exact online mirror descent from the reference policy with step
// eta_t = tau (t + 2) / 2, stopped once the duality gap is <= tol.
Policy NashSolve(const GameSpec& spec, double tol, long max_iters);

// Damped best-response iteration in log space, used to cross-check
// NashSolve. Stops when the sup-norm distance between pi and its best
// response is <= tol. Small tau needs small damping; the undamped map can
// cycle forever.
Policy NashFixedPoint(const GameSpec& spec, double tol, double damping,
                      long max_iters = 2'000'000);

// CSV with a header row of identifiers followed by m rows of m values.
struct LoadedMatrix {
  ResponseSpace space;
  PreferenceMatrix pref;
};
LoadedMatrix ReadPreferenceCsv(std::istream& in);
LoadedMatrix LoadPreferenceCsv(const std::string& path);
void WritePreferenceCsv(std::ostream& out, const ResponseSpace& space,
                        const PreferenceMatrix& pref);

// Two-column CSV `response_id,probability`.
void WritePolicyCsv(std::ostream& out, const ResponseSpace& space,
                    const Policy& pi);
Policy ReadPolicyCsv(std::istream& in, const ResponseSpace& space);
Policy LoadPolicyCsv(const std::string& path, const ResponseSpace& space);

double SupDistance(const Policy& a, const Policy& b);
double TotalVariation(const Policy& a, const Policy& b);

}  // namespace inpo

#endif  // INPO_GAME_H_
