// Copyright 2026 The mlopt-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlopt/ldl.hpp"
#include "mlopt/problem.hpp"

namespace mlopt {

inline constexpr double kKKTRegularization = 1e-8;
inline constexpr int kMaxRefinementSteps = 10;
inline constexpr double kDecodeResidualTol = 1e-6;
inline constexpr double kInfeasibilityTol = 1e-4;

struct OpCounts {
  long factorizations = 0;
  long solves = 0;  // forward-backward substitutions, refinement included
  long decode_calls = 0;
  long refinement_steps = 0;
  long nn_macs = 0;
};

/// Thread-safe operation counter for the online path.
class OpCounter {
 public:
  void add_factorization() { factorizations_.fetch_add(1, std::memory_order_relaxed); }
  void add_solves(long k) { solves_.fetch_add(k, std::memory_order_relaxed); }
  void add_decode() { decodes_.fetch_add(1, std::memory_order_relaxed); }
  void add_refinement(long k) { refinements_.fetch_add(k, std::memory_order_relaxed); }
  void add_macs(long k) { macs_.fetch_add(k, std::memory_order_relaxed); }
  OpCounts snapshot() const;
  void reset();

 private:
  std::atomic<long> factorizations_{0}, solves_{0}, decodes_{0}, refinements_{0}, macs_{0};
};

/// Reduced KKT system of a strategy:
///   [ P    A_T'  I_I' ] [ x  ]   [ -q    ]
///   [ A_T  0     0    ] [ nu ] = [ b_T   ]
///   [ I_I  0     0    ] [ mu ]   [ x_I   ]
struct KKTSystem {
  int n = 0;
  int n_tight = 0;
  int d = 0;
  SparseMatrix K;  // upper triangle, unregularized
  Vector rhs;
  int dim() const { return n + n_tight + d; }
};

KKTSystem assemble(const InstanceData& inst, const Strategy& s,
                   std::span<const int> integer_indices);

/// Only the right-hand side; K stays as cached.
Vector assemble_rhs(const InstanceData& inst, const Strategy& s,
                    std::span<const int> integer_indices);

/// K with +delta on the primal diagonal and -delta on the dual diagonal.
SparseMatrix regularized(const KKTSystem& sys, double delta = kKKTRegularization);
SparseMatrix regularized(const SparseMatrix& K_upper, int n, double delta = kKKTRegularization);

/// AMD ordering followed by the LDL' factorization of the regularized matrix.
/// ok() is false for a degenerate strategy.
SparseLDL factorize(const KKTSystem& sys, OpCounter* counter = nullptr);

struct DecodeResult {
  bool ok = false;
  Vector x;
  Vector nu;  // multipliers of the tight rows, then of the integer fixings
  bool used_cache = false;
  double residual = kInf;
  int refinement_steps = 0;
};

/// Solves with the factors and refines against the unregularized matrix.
DecodeResult solve_refined(const SparseMatrix& K_upper, const SparseLDL& f, const Vector& rhs,
                           int n, OpCounter* counter = nullptr);

class FactorCache {
 public:
  struct Entry {
    int n = 0;
    SparseMatrix K;  // upper triangle, unregularized
    SparseLDL factors;
  };

  FactorCache() = default;

  /// Factorizes every strategy (deduplicated by hash). Does nothing for
  /// problems whose matrices depend on the parameter.
  void build(const ParametricMIQO& problem, std::span<const Strategy> strategies);

  bool enabled() const { return enabled_; }
  /// Factors for one strategy, as build() would compute them.
  void insert(const ParametricMIQO& problem, const Strategy& s);
  std::size_t size() const { return entries_.size(); }
  std::uint64_t problem_hash() const { return problem_hash_; }
  const Entry* find(std::uint64_t strategy_hash) const;
  /// Largest reconstruction error relative to ||K|| over all entries.
  double max_reconstruction_error() const;
  /// Largest normwise backward error over all entries.
  double max_backward_error() const;

  void save(const std::string& path) const;
  /// Returns std::nullopt when the file belongs to a different problem.
  static std::optional<FactorCache> load(const std::string& path, const ParametricMIQO& problem);

 private:
  bool enabled_ = false;
  std::uint64_t problem_hash_ = 0;
  std::unordered_map<std::uint64_t, Entry> entries_;
  std::unordered_map<std::uint64_t, Strategy> strategies_;
  std::vector<std::uint64_t> order_;
  std::shared_ptr<const InstanceData> base_;
};

/// Decodes a strategy by substitution. Uses the cache when it holds the
/// strategy and the matrices are parameter independent; otherwise factorizes.
DecodeResult decode(const InstanceData& inst, const Strategy& s,
                    std::span<const int> integer_indices, const FactorCache* cache,
                    OpCounter* counter = nullptr);

struct CandidateEvaluation {
  int index = 0;  // position in the candidate list
  Strategy strategy;
  bool decoded = false;
  Vector x;
  double objective = kInf;
  double violation = kInf;
  bool feasible() const { return decoded && violation <= kInfeasibilityTol; }
};

struct EvaluationResult {
  /// Feasible candidates by objective, then the rest by violation; ties by
  /// candidate order.
  std::vector<CandidateEvaluation> ranked;
  bool any_feasible = false;
  const CandidateEvaluation& best() const { return ranked.front(); }
};

/// Decodes every candidate independently (on up to `threads` workers) and
/// ranks them. Throws DimensionError on an empty candidate list.
EvaluationResult evaluate_candidates(const InstanceData& inst,
                                     std::span<const Strategy> candidates,
                                     std::span<const int> integer_indices,
                                     const FactorCache* cache, OpCounter* counter = nullptr,
                                     int threads = 1);

}  // namespace mlopt
