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

#ifndef INPO_ORACLE_H_
#define INPO_ORACLE_H_

// Synthetic preference oracles and preference-data collection.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "inpo/common.h"
#include "inpo/game.h"

namespace inpo {

// P[i][j] = sigmoid(r_i - r_j).
PreferenceMatrix BtMatrix(std::span<const double> rewards);

// Intransitive cycle: P[i][(i+1) mod m] = p, mirrored, every other
// off-diagonal entry 1/2. m = 3 is rock-paper-scissors.
PreferenceMatrix CyclicMatrix(std::size_t m, double p);

// Rounds every entry to {0, 1/2, 1}: above 1/2 becomes a sure win.
PreferenceMatrix ClipToHard(const PreferenceMatrix& pref);

struct MatrixSource {
  PreferenceMatrix pref;
};
struct BradleyTerrySource {
  std::vector<double> rewards;
};
struct CyclicSource {
  std::size_t m;
  double p;
};
using OracleSource = std::variant<MatrixSource, BradleyTerrySource, CyclicSource>;

enum class Outcome { kFirst, kSecond, kTie };

// Queryable preference source with a Bernoulli sampler and a query counter.
// An instance owns mutable state (RNG, counter) and belongs to one thread;
// use Clone with a different seed to fan out.
class PreferenceOracle {
 public:
  PreferenceOracle(OracleSource source, std::uint64_t seed,
                   bool hard_preferences = false);

  const PreferenceMatrix& matrix() const { return matrix_; }
  const OracleSource& source() const { return source_; }
  std::size_t size() const { return matrix_.size(); }
  std::uint64_t seed() const { return seed_; }
  bool hard_preferences() const { return hard_; }
  long query_count() const { return query_count_; }

  double Probability(std::size_t y, std::size_t y2) const {
    return matrix_(y, y2);
  }
  // One Bernoulli query z ~ Ber(P(y > y2)); counts exactly one query.
  // Comparing a response with itself is a fair coin flip.
  Outcome Compare(std::size_t y, std::size_t y2);

  PreferenceOracle Clone(std::uint64_t seed) const;

 private:
  OracleSource source_;
  PreferenceMatrix matrix_;
  std::uint64_t seed_;
  bool hard_;
  Rng rng_;
  long query_count_ = 0;
};

struct PreferencePair {
  std::size_t winner;
  std::size_t loser;
  long iteration = 0;

  bool operator==(const PreferencePair&) const = default;
};

struct CollectionMode {
  enum class Kind { kPlain, kTournament };
  Kind kind = Kind::kPlain;
  std::size_t K = 8;

  static CollectionMode Plain() { return {Kind::kPlain, 0}; }
  static CollectionMode Tournament(std::size_t K) {
    return {Kind::kTournament, K};
  }
  std::string ToString() const;
  bool operator==(const CollectionMode&) const = default;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  std::uint64_t source_policy_hash = 0;
  CollectionMode mode;
  long attempts = 0;  // tournament brackets run, including rejections
  long queries = 0;   // oracle queries spent on this dataset

  std::size_t size() const { return pairs.size(); }
};

// Draw from the preference distribution: (y, y2) with probability P(y > y2),
// otherwise (y2, y). Requires y != y2.
PreferencePair SampleLambdaP(PreferenceOracle& oracle, std::size_t y,
                             std::size_t y2, long iteration = 0);

struct TournamentPick {
  std::size_t best;
  std::size_t worst;
};

// Comparator used by the bracket; returns which argument is preferred.
using Comparator = std::function<Outcome(std::size_t, std::size_t)>;

// Best-of-K / worst-of-K bracket over response slots in arrival order:
// slots are paired (1v2, 3v4, ...); first-round winners play a knockout for
// the best and first-round losers play a knockout (the loser advancing) for
// the worst. Ties go to the first argument. A final best-vs-worst comparison
// accepts the pick only when the best wins. Costs 3K/2 - 1 comparisons
// (11 for K = 8). Slots may repeat a response.
struct BracketResult {
  TournamentPick pick;
  bool accepted;
};
BracketResult RunBracket(std::span<const std::size_t> slots,
                         const Comparator& compare);

// Bracket over K distinct responses; nullopt when the final check fails.
std::optional<TournamentPick> TournamentSelect(
    PreferenceOracle& oracle, std::span<const std::size_t> responses);
std::optional<TournamentPick> TournamentSelect(
    std::span<const std::size_t> responses, const Comparator& compare);

// Draws preference pairs from pi_t. Plain mode labels n distinct i.i.d.
// pairs with one query each. Tournament mode runs brackets over K i.i.d.
// draws until n pairs are accepted; brackets whose best and worst coincide
// are rejected as well.
PreferenceDataset CollectDataset(PreferenceOracle& oracle, const Policy& pi_t,
                                 long n, CollectionMode mode,
                                 std::uint64_t seed, long iteration = 0);

std::uint64_t PolicyHash(const Policy& pi);

// CSV with header `iteration,winner,loser` and response identifiers.
void WriteDatasetCsv(std::ostream& out, const ResponseSpace& space,
                     const PreferenceDataset& dataset);
PreferenceDataset ReadDatasetCsv(std::istream& in, const ResponseSpace& space);

}  // namespace inpo

#endif  // INPO_ORACLE_H_
