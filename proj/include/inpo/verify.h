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

#ifndef INPO_VERIFY_H_
#define INPO_VERIFY_H_

// Built-in verification suite. Every check is deterministic for a fixed
// seed, reports the measured quantity next to its threshold, and never
// throws for a failed property (only for internal errors).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace inpo {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 2024;
  // Number of random games used by the per-game checks.
  int games = 10;
};

// Nash policy of the two-response game and of the cyclic game, each solved
// in under a second. measured: worst sup-norm error.
CheckResult CheckNashCorrectness(const VerifyOptions& options);
// KL(nash, pi_T) <= 32 C^2 / (tau^2 (T + 1)) for every T <= 1000 under the
// increasing step schedule, plus KL <= 1e-3 at T = 1000 on the cyclic game.
// measured: worst ratio of KL to bound.
CheckResult CheckTheorem2Rate(const VerifyOptions& options);
// Per-step KL recursion over 200 updates. measured: violation count.
CheckResult CheckTheorem2Recursion(const VerifyOptions& options);
// Regret against the Nash policy under the fixed-horizon step, for
// T in {64, 256, 1024}. measured: worst ratio of regret to bound.
CheckResult CheckLemma1Bound(const VerifyOptions& options);
// Mixture duality gap times sqrt(T) relative to its T = 64 value.
CheckResult CheckTheorem1Rate(const VerifyOptions& options);
// Exact least-squares fit equals the closed-form update and is a strict
// local minimizer of the exact loss. measured: worst sup-norm difference.
CheckResult CheckLemma2Uniqueness(const VerifyOptions& options);
// h at the closed-form update equals the scaled win-rate differences.
CheckResult CheckEq6Identity(const VerifyOptions& options);
// Population and Bernoulli losses differ from the exact loss by constants.
CheckResult CheckProp1Equivalence(const VerifyOptions& options);
// Sampled INPO tracks exact OMD and reaches a small gap on the cyclic game.
CheckResult CheckSampledConsistency(const VerifyOptions& options);
// The Nash policy wins at least half the time against random policies.
CheckResult CheckNashDominance(const VerifyOptions& options);
// Query counters match the analytic counts of every collection mode.
CheckResult CheckQueryAccounting(const VerifyOptions& options);
// Greedy self-play stalls above 0.2 while mirror descent drops below 1e-3.
CheckResult CheckGreedyInstability(const VerifyOptions& options);

std::vector<CheckResult> RunVerifySuite(const VerifyOptions& options);

// {"passed": bool, "total_seconds": s, "checks": [...]}
void WriteVerifyReport(std::ostream& out, std::span<const CheckResult> checks,
                       double total_seconds);

}  // namespace inpo

#endif  // INPO_VERIFY_H_
