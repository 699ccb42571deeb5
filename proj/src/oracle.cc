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

#include "inpo/oracle.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace inpo {

namespace {

PreferenceMatrix BuildMatrix(const OracleSource& source) {
  return std::visit(
      [](const auto& s) -> PreferenceMatrix {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, MatrixSource>) {
          return s.pref;
        } else if constexpr (std::is_same_v<S, BradleyTerrySource>) {
          return BtMatrix(s.rewards);
        } else {
          return CyclicMatrix(s.m, s.p);
        }
      },
      source);
}

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

PreferenceMatrix BtMatrix(std::span<const double> rewards) {
  const std::size_t m = rewards.size();
  for (double r : rewards) {
    if (!std::isfinite(r)) throw InvalidArgument("BtMatrix: non-finite reward");
  }
  std::vector<std::vector<double>> rows(m, std::vector<double>(m, 0.5));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      rows[i][j] = Sigmoid(rewards[i] - rewards[j]);
      rows[j][i] = 1.0 - rows[i][j];
    }
  }
  return PreferenceMatrix(std::move(rows));
}

PreferenceMatrix CyclicMatrix(std::size_t m, double p) {
  if (m < 3) throw InvalidArgument("CyclicMatrix: m must be >= 3");
  if (!(p > 0.5 && p <= 1.0)) {
    throw InvalidArgument("CyclicMatrix: p must lie in (0.5, 1]");
  }
  std::vector<std::vector<double>> rows(m, std::vector<double>(m, 0.5));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t next = (i + 1) % m;
    rows[i][next] = p;
    rows[next][i] = 1.0 - p;
  }
  return PreferenceMatrix(std::move(rows));
}

PreferenceMatrix ClipToHard(const PreferenceMatrix& pref) {
  auto rows = pref.rows();
  for (auto& row : rows) {
    for (double& v : row) v = v > 0.5 ? 1.0 : (v < 0.5 ? 0.0 : 0.5);
  }
  return PreferenceMatrix(std::move(rows));
}

// ---------------------------------------------------------------------------
// PreferenceOracle

PreferenceOracle::PreferenceOracle(OracleSource source, std::uint64_t seed,
                                   bool hard_preferences)
    : source_(std::move(source)),
      matrix_(BuildMatrix(source_)),
      seed_(seed),
      hard_(hard_preferences),
      rng_(seed) {
  if (hard_) matrix_ = ClipToHard(matrix_);
}

Outcome PreferenceOracle::Compare(std::size_t y, std::size_t y2) {
  if (y >= size() || y2 >= size()) {
    throw InvalidArgument("PreferenceOracle: response index out of range");
  }
  ++query_count_;
  return rng_.Bernoulli(matrix_(y, y2)) ? Outcome::kFirst : Outcome::kSecond;
}

PreferenceOracle PreferenceOracle::Clone(std::uint64_t seed) const {
  return PreferenceOracle(source_, seed, hard_);
}

std::string CollectionMode::ToString() const {
  return kind == Kind::kPlain ? "plain" : "tournament(" + std::to_string(K) + ")";
}

// ---------------------------------------------------------------------------
// Sampling

PreferencePair SampleLambdaP(PreferenceOracle& oracle, std::size_t y,
                             std::size_t y2, long iteration) {
  if (y == y2) {
    throw InvalidArgument("SampleLambdaP: responses must differ");
  }
  const Outcome o = oracle.Compare(y, y2);
  if (o == Outcome::kSecond) return {y2, y, iteration};
  return {y, y2, iteration};
}

BracketResult RunBracket(std::span<const std::size_t> slots,
                         const Comparator& compare) {
  const std::size_t K = slots.size();
  if (K < 2 || !std::has_single_bit(K)) {
    throw InvalidArgument("tournament: K must be a power of two >= 2");
  }
  // Returns (winner, loser) of one comparison; ties favor the first slot.
  auto play = [&](std::size_t a, std::size_t b) {
    const Outcome o = compare(a, b);
    return o == Outcome::kSecond ? std::pair{b, a} : std::pair{a, b};
  };
  std::vector<std::size_t> winners;
  std::vector<std::size_t> losers;
  for (std::size_t k = 0; k < K; k += 2) {
    auto [w, l] = play(slots[k], slots[k + 1]);
    winners.push_back(w);
    losers.push_back(l);
  }
  while (winners.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k < winners.size(); k += 2) {
      next.push_back(play(winners[k], winners[k + 1]).first);
    }
    winners = std::move(next);
  }
  while (losers.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k < losers.size(); k += 2) {
      next.push_back(play(losers[k], losers[k + 1]).second);
    }
    losers = std::move(next);
  }
  const TournamentPick pick{winners.front(), losers.front()};
  const Outcome final_check = compare(pick.best, pick.worst);
  return {pick, final_check != Outcome::kSecond};
}

std::optional<TournamentPick> TournamentSelect(
    std::span<const std::size_t> responses, const Comparator& compare) {
  std::set<std::size_t> seen(responses.begin(), responses.end());
  if (seen.size() != responses.size()) {
    throw InvalidArgument("tournament: duplicate response ids");
  }
  BracketResult r = RunBracket(responses, compare);
  if (!r.accepted) return std::nullopt;
  return r.pick;
}

std::optional<TournamentPick> TournamentSelect(
    PreferenceOracle& oracle, std::span<const std::size_t> responses) {
  return TournamentSelect(responses, [&oracle](std::size_t a, std::size_t b) {
    return oracle.Compare(a, b);
  });
}

std::uint64_t PolicyHash(const Policy& pi) {
  // FNV-1a over the IEEE-754 bytes.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double p : pi.probs()) {
    std::uint64_t bits;
    std::memcpy(&bits, &p, sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

PreferenceDataset CollectDataset(PreferenceOracle& oracle, const Policy& pi_t,
                                 long n, CollectionMode mode,
                                 std::uint64_t seed, long iteration) {
  if (n < 1) throw InvalidArgument("CollectDataset: n must be >= 1");
  if (pi_t.size() != oracle.size()) {
    throw InvalidArgument("CollectDataset: policy/oracle dimension mismatch");
  }
  if (pi_t.support_size() < 2) {
    throw InvalidArgument(
        "CollectDataset: policy supported on a single response cannot form "
        "distinct pairs");
  }
  Rng rng(seed, static_cast<std::uint64_t>(iteration));
  PreferenceDataset data;
  data.source_policy_hash = PolicyHash(pi_t);
  data.mode = mode;
  data.pairs.reserve(static_cast<std::size_t>(n));
  const long queries_before = oracle.query_count();

  if (mode.kind == CollectionMode::Kind::kPlain) {
    while (static_cast<long>(data.pairs.size()) < n) {
      std::size_t y = rng.Categorical(pi_t.probs());
      std::size_t y2 = rng.Categorical(pi_t.probs());
      while (y == y2) {
        y = rng.Categorical(pi_t.probs());
        y2 = rng.Categorical(pi_t.probs());
      }
      data.pairs.push_back(SampleLambdaP(oracle, y, y2, iteration));
    }
  } else {
    if (mode.K < 2 || !std::has_single_bit(mode.K)) {
      throw InvalidArgument("CollectDataset: tournament K must be a power of two");
    }
    const Comparator compare = [&oracle](std::size_t a, std::size_t b) {
      return oracle.Compare(a, b);
    };
    std::vector<std::size_t> slots(mode.K);
    while (static_cast<long>(data.pairs.size()) < n) {
      for (auto& s : slots) s = rng.Categorical(pi_t.probs());
      ++data.attempts;
      const BracketResult r = RunBracket(slots, compare);
      if (!r.accepted || r.pick.best == r.pick.worst) continue;
      data.pairs.push_back({r.pick.best, r.pick.worst, iteration});
    }
  }
  data.queries = oracle.query_count() - queries_before;
  return data;
}

// ---------------------------------------------------------------------------
// CSV

void WriteDatasetCsv(std::ostream& out, const ResponseSpace& space,
                     const PreferenceDataset& dataset) {
  out << "iteration,winner,loser\n";
  for (const auto& p : dataset.pairs) {
    out << p.iteration << ',' << space.id(p.winner) << ',' << space.id(p.loser)
        << '\n';
  }
}

PreferenceDataset ReadDatasetCsv(std::istream& in, const ResponseSpace& space) {
  PreferenceDataset data;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(Trim(field));
    const std::string where = "dataset CSV line " + std::to_string(line_no);
    if (!header_seen) {
      if (f != std::vector<std::string>{"iteration", "winner", "loser"}) {
        throw ParseError(where + ": expected header iteration,winner,loser");
      }
      header_seen = true;
      continue;
    }
    if (f.size() != 3) throw ParseError(where + ": expected 3 fields");
    long iteration = 0;
    try {
      std::size_t used = 0;
      iteration = std::stol(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(where + ": bad iteration '" + f[0] + "'");
    }
    auto w = space.Find(f[1]);
    auto l = space.Find(f[2]);
    if (!w || !l) throw ParseError(where + ": unknown response id");
    if (*w == *l) throw ParseError(where + ": winner equals loser");
    data.pairs.push_back({*w, *l, iteration});
  }
  if (!header_seen) throw ParseError("dataset CSV: missing header");
  return data;
}

}  // namespace inpo
