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

#ifndef INPO_COMMON_H_
#define INPO_COMMON_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace inpo {

// Equality tolerance for exact identities (antisymmetry, normalization).
inline constexpr double kExactTol = 1e-12;
// Default tolerance for iterative solvers.
inline constexpr double kSolverTol = 1e-6;

// Bad arguments, shape mismatches, violated type invariants.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input files (matrix CSV, dataset CSV, config).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seedable 64-bit generator (xoshiro256**), seeded through splitmix64.
// Streams are derived deterministically from (seed, stream) so that
// independent runs and per-iteration datasets never share state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  // Uniform double in [0, 1) with 53 random bits.
  double Uniform();
  bool Bernoulli(double p) { return Uniform() < p; }
  // Index drawn from a discrete distribution (weights need not sum to 1).
  std::size_t Categorical(std::span<const double> weights);
  double Exponential();

  // A fresh generator on an independent substream.
  Rng Split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

std::uint64_t SplitMix64(std::uint64_t& state);
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

double Sigmoid(double x);
// log(sum(exp(x))) over finite entries; -inf entries are skipped.
double LogSumExp(std::span<const double> x);

// Shortest round-trip decimal representation of a double.
std::string FormatDouble(double x);

}  // namespace inpo

#endif  // INPO_COMMON_H_
