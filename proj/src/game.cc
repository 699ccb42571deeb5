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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "inpo/planner.h"

namespace inpo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(Trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ParseProbability(const std::string& field, const std::string& where) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &consumed);
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + field + "'");
  }
  if (consumed != field.size()) {
    throw ParseError(where + ": trailing characters in '" + field + "'");
  }
  return value;
}

void CheckSameSize(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" +
                          std::to_string(a) + " vs " + std::to_string(b) +
                          ")");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ResponseSpace

ResponseSpace::ResponseSpace(std::vector<std::string> ids)
    : ids_(std::move(ids)) {
  if (ids_.size() < 2) {
    throw InvalidArgument("ResponseSpace: need at least 2 responses");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i].empty()) {
      throw InvalidArgument("ResponseSpace: empty identifier at position " +
                            std::to_string(i));
    }
    if (!index_.emplace(ids_[i], i).second) {
      throw InvalidArgument("ResponseSpace: duplicate identifier '" + ids_[i] +
                            "'");
    }
  }
}

ResponseSpace ResponseSpace::Indexed(std::size_t m) {
  std::vector<std::string> ids;
  ids.reserve(m);
  for (std::size_t i = 0; i < m; ++i) ids.push_back("y" + std::to_string(i));
  return ResponseSpace(std::move(ids));
}

std::optional<std::size_t> ResponseSpace::Find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ResponseSpace::IndexOf(const std::string& id) const {
  auto found = Find(id);
  if (!found) throw InvalidArgument("unknown response id '" + id + "'");
  return *found;
}

// ---------------------------------------------------------------------------
// Policy

Policy::Policy(std::vector<double> probs, std::vector<double> log_probs)
    : probs_(std::move(probs)), log_probs_(std::move(log_probs)) {}

Policy Policy::FromProbs(std::vector<double> probs) {
  if (probs.empty()) throw InvalidArgument("Policy: empty probability vector");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(probs[i])) {
      throw InvalidArgument("Policy: entry " + std::to_string(i) +
                            " is not a finite non-negative number");
    }
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > kExactTol) {
    throw InvalidArgument("Policy: entries sum to " + FormatDouble(sum) +
                          ", not 1");
  }
  std::vector<double> logs(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    logs[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
  }
  return Policy(std::move(probs), std::move(logs));
}

Policy Policy::Normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgument("Policy::Normalized: invalid weight");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw InvalidArgument("Policy::Normalized: zero mass");
  std::vector<double> logs(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    logs[i] = weights[i] > 0.0 ? std::log(weights[i]) : kNegInf;
  }
  return FromLogits(logs);
}

Policy Policy::FromLogits(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("Policy: empty logits");
  for (double v : logits) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw InvalidArgument("Policy::FromLogits: logit is nan or +inf");
    }
  }
  const double norm = LogSumExp(logits);
  if (!std::isfinite(norm)) {
    throw InvalidArgument("Policy::FromLogits: all logits are -inf");
  }
  std::vector<double> logs(logits.size());
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logs[i] = logits[i] == kNegInf ? kNegInf : logits[i] - norm;
    probs[i] = logs[i] == kNegInf ? 0.0 : std::exp(logs[i]);
  }
  return Policy(std::move(probs), std::move(logs));
}

Policy Policy::Uniform(std::size_t m) {
  if (m == 0) throw InvalidArgument("Policy::Uniform: m = 0");
  return Policy(std::vector<double>(m, 1.0 / static_cast<double>(m)),
                std::vector<double>(m, -std::log(static_cast<double>(m))));
}

std::size_t Policy::support_size() const {
  return static_cast<std::size_t>(
      std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0; }));
}

// ---------------------------------------------------------------------------
// PreferenceMatrix

PreferenceMatrix::PreferenceMatrix(std::vector<std::vector<double>> rows)
    : m_(rows.size()) {
  if (m_ < 2) throw InvalidArgument("PreferenceMatrix: need m >= 2");
  p_.resize(m_ * m_);
  for (std::size_t i = 0; i < m_; ++i) {
    if (rows[i].size() != m_) {
      throw InvalidArgument("PreferenceMatrix: row " + std::to_string(i) +
                            " has " + std::to_string(rows[i].size()) +
                            " entries, expected " + std::to_string(m_));
    }
    for (std::size_t j = 0; j < m_; ++j) p_[i * m_ + j] = rows[i][j];
  }
  for (std::size_t i = 0; i < m_; ++i) {
    for (std::size_t j = 0; j < m_; ++j) {
      const double v = p_[i * m_ + j];
      const std::string cell =
          "cell (" + std::to_string(i) + "," + std::to_string(j) + ")";
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidArgument("PreferenceMatrix: " + cell + " = " +
                              FormatDouble(v) + " outside [0,1]");
      }
      if (i == j && v != 0.5) {
        throw InvalidArgument("PreferenceMatrix: diagonal " + cell + " = " +
                              FormatDouble(v) + ", expected 0.5");
      }
      if (j > i && std::abs(v + p_[j * m_ + i] - 1.0) > kExactTol) {
        throw InvalidArgument(
            "PreferenceMatrix: " + cell + " violates antisymmetry: " +
            FormatDouble(v) + " + " + FormatDouble(p_[j * m_ + i]) + " != 1");
      }
    }
  }
}

PreferenceMatrix PreferenceMatrix::Indifferent(std::size_t m) {
  return PreferenceMatrix(
      std::vector<std::vector<double>>(m, std::vector<double>(m, 0.5)));
}

std::vector<std::vector<double>> PreferenceMatrix::rows() const {
  std::vector<std::vector<double>> out(m_, std::vector<double>(m_));
  for (std::size_t i = 0; i < m_; ++i) {
    for (std::size_t j = 0; j < m_; ++j) out[i][j] = p_[i * m_ + j];
  }
  return out;
}

std::vector<double> PreferenceMatrix::WinAgainst(const Policy& pi) const {
  CheckSameSize(m_, pi.size(), "WinAgainst");
  std::vector<double> out(m_, 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m_; ++j) acc += p_[i * m_ + j] * pi[j];
    out[i] = acc;
  }
  return out;
}

PreferenceMatrix RandomPreferenceMatrix(std::size_t m, Rng& rng) {
  std::vector<std::vector<double>> rows(m, std::vector<double>(m, 0.5));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      rows[i][j] = rng.Uniform();
      rows[j][i] = 1.0 - rows[i][j];
    }
  }
  return PreferenceMatrix(std::move(rows));
}

Policy RandomPolicy(std::size_t m, Rng& rng, double alpha) {
  return RandomPolicyLike(Policy::Uniform(m), rng, alpha);
}

Policy RandomPolicyLike(const Policy& ref, Rng& rng, double alpha) {
  std::vector<double> w(ref.size(), 0.0);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!ref.supported(i)) continue;
    // Guard against a zero draw so the support is preserved.
    w[i] = std::max(gamma(rng), 1e-300);
  }
  return Policy::Normalized(std::move(w));
}

// ---------------------------------------------------------------------------
// GameSpec

GameSpec::GameSpec(ResponseSpace space_in, PreferenceMatrix pref_in,
                   Policy ref_in, double tau_in)
    : space(std::move(space_in)),
      pref(std::move(pref_in)),
      ref_policy(std::move(ref_in)),
      tau(tau_in) {
  CheckSameSize(space.size(), pref.size(), "GameSpec preference matrix");
  CheckSameSize(space.size(), ref_policy.size(), "GameSpec reference policy");
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("GameSpec: tau must be a finite value >= 0");
  }
}

GameSpec GameSpec::WithUniformRef(PreferenceMatrix pref, double tau) {
  const std::size_t m = pref.size();
  return GameSpec(ResponseSpace::Indexed(m), std::move(pref),
                  Policy::Uniform(m), tau);
}

bool GameSpec::operator==(const GameSpec& other) const {
  return space == other.space && pref == other.pref && tau == other.tau &&
         std::equal(ref_policy.probs().begin(), ref_policy.probs().end(),
                    other.ref_policy.probs().begin(),
                    other.ref_policy.probs().end());
}

// ---------------------------------------------------------------------------
// Game quantities

double KlDivergence(const Policy& a, const Policy& b) {
  CheckSameSize(a.size(), b.size(), "KlDivergence");
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.supported(i)) continue;
    if (!b.supported(i)) return std::numeric_limits<double>::infinity();
    kl += a[i] * (a.log_prob(i) - b.log_prob(i));
  }
  // Rounding can push an essentially-zero divergence slightly negative.
  return std::max(kl, 0.0);
}

void RequireWithinSupport(const Policy& pi, const Policy& ref) {
  CheckSameSize(pi.size(), ref.size(), "policy vs reference");
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi.supported(i) && !ref.supported(i)) {
      throw InvalidArgument("policy puts mass on response " +
                            std::to_string(i) +
                            " outside the reference support");
    }
  }
}

void RequireSameSupport(const Policy& pi, const Policy& ref) {
  RequireWithinSupport(pi, ref);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (ref.supported(i) && !pi.supported(i)) {
      throw InvalidArgument("policy has zero mass on supported response " +
                            std::to_string(i));
    }
  }
}

double WinProb(const PreferenceMatrix& pref, const Policy& p1,
               const Policy& p2) {
  CheckSameSize(pref.size(), p1.size(), "WinProb first policy");
  CheckSameSize(pref.size(), p2.size(), "WinProb second policy");
  const std::vector<double> wins = pref.WinAgainst(p2);
  double acc = 0.0;
  for (std::size_t i = 0; i < wins.size(); ++i) acc += p1[i] * wins[i];
  return acc;
}

double GameValue(const GameSpec& spec, const Policy& p1, const Policy& p2) {
  RequireWithinSupport(p1, spec.ref_policy);
  RequireWithinSupport(p2, spec.ref_policy);
  double value = WinProb(spec.pref, p1, p2);
  if (spec.tau > 0.0) {
    value += spec.tau * (KlDivergence(p2, spec.ref_policy) -
                         KlDivergence(p1, spec.ref_policy));
  }
  return value;
}

Policy BestResponse(const GameSpec& spec, const Policy& opponent) {
  if (!(spec.tau > 0.0)) {
    throw InvalidArgument(
        "BestResponse: tau must be > 0 (no maximizer inside the policy class)");
  }
  CheckSameSize(spec.size(), opponent.size(), "BestResponse");
  const std::vector<double> wins = spec.pref.WinAgainst(opponent);
  std::vector<double> logits(spec.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = spec.ref_policy.supported(i)
                    ? spec.ref_policy.log_prob(i) + wins[i] / spec.tau
                    : kNegInf;
  }
  return Policy::FromLogits(logits);
}

double DualityGap(const GameSpec& spec, const Policy& pi) {
  RequireWithinSupport(pi, spec.ref_policy);
  double best_value;
  if (spec.tau > 0.0) {
    best_value = GameValue(spec, BestResponse(spec, pi), pi);
  } else {
    const std::vector<double> wins = spec.pref.WinAgainst(pi);
    best_value = kNegInf;
    for (std::size_t i = 0; i < wins.size(); ++i) {
      if (spec.ref_policy.supported(i)) best_value = std::max(best_value, wins[i]);
    }
  }
  // min_{p2} J(pi, p2) = 1 - max_{p2} J(p2, pi) by symmetry of the game.
  return 2.0 * best_value - 1.0;
}

ConvergenceError::ConvergenceError(const std::string& what, Policy best,
                                   double best_gap)
    : std::runtime_error(what), best_(std::move(best)), best_gap_(best_gap) {}

Policy NashSolve(const GameSpec& spec, double tol, long max_iters) {
  if (!(spec.tau > 0.0)) throw InvalidArgument("NashSolve: tau must be > 0");
  if (!(tol > 0.0)) throw InvalidArgument("NashSolve: tol must be > 0");
  Policy pi = spec.ref_policy;
  Policy best = pi;
  double best_gap = DualityGap(spec, pi);
  if (best_gap <= tol) return pi;
  const StepSchedule schedule = StepSchedule::Theorem2();
  for (long t = 1; t <= max_iters; ++t) {
    pi = OmdStep(spec, pi, schedule.Eta(t, spec.tau));
    const double gap = DualityGap(spec, pi);
    if (gap < best_gap) {
      best_gap = gap;
      best = pi;
    }
    if (gap <= tol) return pi;
  }
  throw ConvergenceError("NashSolve: duality gap " + FormatDouble(best_gap) +
                             " above tolerance " + FormatDouble(tol) +
                             " after " + std::to_string(max_iters) +
                             " iterations",
                         std::move(best), best_gap);
}

Policy NashFixedPoint(const GameSpec& spec, double tol, double damping,
                      long max_iters) {
  if (!(spec.tau > 0.0)) {
    throw InvalidArgument("NashFixedPoint: tau must be > 0");
  }
  if (!(damping > 0.0 && damping <= 1.0)) {
    throw InvalidArgument("NashFixedPoint: damping must lie in (0, 1]");
  }
  const std::size_t m = spec.size();
  Policy pi = spec.ref_policy;
  for (long it = 0; it < max_iters; ++it) {
    const Policy br = BestResponse(spec, pi);
    if (SupDistance(pi, br) <= tol) return br;
    std::vector<double> logits(m);
    for (std::size_t i = 0; i < m; ++i) {
      logits[i] = spec.ref_policy.supported(i)
                      ? (1.0 - damping) * pi.log_prob(i) + damping * br.log_prob(i)
                      : kNegInf;
    }
    pi = Policy::FromLogits(logits);
  }
  throw ConvergenceError("NashFixedPoint: no convergence within " +
                             std::to_string(max_iters) + " iterations",
                         pi, DualityGap(spec, pi));
}

// ---------------------------------------------------------------------------
// CSV

LoadedMatrix ReadPreferenceCsv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!Trim(line).empty()) {
      header = SplitCsvLine(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("preference CSV: missing header row");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const auto fields = SplitCsvLine(line);
    if (fields.size() != header.size()) {
      throw ParseError("preference CSV line " + std::to_string(line_no) +
                       ": expected " + std::to_string(header.size()) +
                       " values, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      row.push_back(ParseProbability(
          fields[j], "preference CSV cell (" + std::to_string(rows.size()) +
                         "," + std::to_string(j) + ")"));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() != header.size()) {
    throw ParseError("preference CSV: expected " +
                     std::to_string(header.size()) + " rows, found " +
                     std::to_string(rows.size()));
  }
  try {
    ResponseSpace space(header);
    PreferenceMatrix pref(std::move(rows));
    return {std::move(space), std::move(pref)};
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("preference CSV: ") + e.what());
  }
}

LoadedMatrix LoadPreferenceCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open preference matrix file '" + path + "'");
  return ReadPreferenceCsv(in);
}

void WritePreferenceCsv(std::ostream& out, const ResponseSpace& space,
                        const PreferenceMatrix& pref) {
  for (std::size_t i = 0; i < space.size(); ++i) {
    out << (i ? "," : "") << space.id(i);
  }
  out << '\n';
  for (std::size_t i = 0; i < pref.size(); ++i) {
    for (std::size_t j = 0; j < pref.size(); ++j) {
      out << (j ? "," : "") << FormatDouble(pref(i, j));
    }
    out << '\n';
  }
}

void WritePolicyCsv(std::ostream& out, const ResponseSpace& space,
                    const Policy& pi) {
  CheckSameSize(space.size(), pi.size(), "WritePolicyCsv");
  out << "response_id,probability\n";
  for (std::size_t i = 0; i < pi.size(); ++i) {
    out << space.id(i) << ',' << FormatDouble(pi[i]) << '\n';
  }
}

Policy ReadPolicyCsv(std::istream& in, const ResponseSpace& space) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> probs(space.size(), 0.0);
  std::vector<bool> seen(space.size(), false);
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty() || Trim(line).front() == '#') continue;
    const auto fields = SplitCsvLine(line);
    if (header) {
      header = false;
      if (fields.size() == 2 && fields[0] == "response_id") continue;
    }
    const std::string where = "policy CSV line " + std::to_string(line_no);
    if (fields.size() != 2) throw ParseError(where + ": expected 2 fields");
    auto idx = space.Find(fields[0]);
    if (!idx) throw ParseError(where + ": unknown response '" + fields[0] + "'");
    if (seen[*idx]) throw ParseError(where + ": duplicate response");
    seen[*idx] = true;
    probs[*idx] = ParseProbability(fields[1], where);
  }
  try {
    return Policy::FromProbs(std::move(probs));
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("policy CSV: ") + e.what());
  }
}

Policy LoadPolicyCsv(const std::string& path, const ResponseSpace& space) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open policy file '" + path + "'");
  return ReadPolicyCsv(in, space);
}

double SupDistance(const Policy& a, const Policy& b) {
  CheckSameSize(a.size(), b.size(), "SupDistance");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double TotalVariation(const Policy& a, const Policy& b) {
  CheckSameSize(a.size(), b.size(), "TotalVariation");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return 0.5 * d;
}

}  // namespace inpo
