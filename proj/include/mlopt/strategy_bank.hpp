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

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mlopt/kkt.hpp"
#include "mlopt/miqo_solver.hpp"
#include "mlopt/problem.hpp"

namespace mlopt {

/// Deduplicated strategies with labels in first-seen order.
class StrategyBank {
 public:
  /// Label of `s`, inserting it when new.
  int add(const Strategy& s);
  std::optional<int> find(const Strategy& s) const;
  int size() const { return static_cast<int>(strategies_.size()); }
  const Strategy& at(int label) const { return strategies_.at(label); }
  const std::vector<Strategy>& strategies() const { return strategies_; }

 private:
  std::vector<Strategy> strategies_;
  std::unordered_map<std::uint64_t, std::vector<int>> by_hash_;
};

struct Sample {
  ParameterInstance param;
  int label = -1;
  double objective = kInf;  // oracle optimum f*
};

inline const double kGoodTuringC = 2.0 * std::sqrt(2.0) + std::sqrt(3.0);

/// G + c sqrt(ln(3 / beta) / N) with G = N1 / N.
double good_turing_bound(long N, long N1, double beta);

/// Smallest N at which a stream with G = 0 can stop.
long good_turing_min_samples(double eps, double beta);

struct ExplorationStep {
  long N = 0;
  long N1 = 0;
  double bound = kInf;
};

enum class StopReason { BoundReached, MaxSamples };
const char* to_string(StopReason r);

struct ExploreOptions {
  double eps = 0.05;
  double beta = 0.05;
  long max_samples = 50'000;
  bool keep_trace = true;
  int threads = 1;  // concurrent oracle calls; the oracle must be thread safe
  MIQOOptions solver;
};

struct ExplorationResult {
  std::vector<Sample> samples;
  StrategyBank bank;
  std::vector<ExplorationStep> trace;
  StopReason stop = StopReason::MaxSamples;
  long final_N = 0;
  long final_N1 = 0;
  double final_bound = kInf;
  long skipped = 0;
  std::vector<std::string> log;
};

/// Draws the sample with the given running index.
using ParameterSource = std::function<ParameterInstance(long)>;
/// Strategy and optimal value for a parameter; std::nullopt when the oracle
/// fails (the sample is skipped, logged and not counted in N).
struct Solved {
  Strategy strategy;
  double objective = kInf;
};
using StrategyOracle = std::function<std::optional<Solved>(const ParameterInstance&)>;

/// Exploration with the Good-Turing stopping rule over an arbitrary oracle.
ExplorationResult explore(const ParameterSource& source, const StrategyOracle& oracle,
                          const ExploreOptions& opts);

/// Exploration with the exact solver as oracle.
ExplorationResult explore(const ParametricMIQO& problem, const ParameterSource& source,
                          const ExploreOptions& opts);

/// The exact-solver oracle used above.
StrategyOracle exact_oracle(const ParametricMIQO& problem, const MIQOOptions& opts = {});

/// Labels whose samples cover more than ceil((1 - alpha) N) samples, most
/// frequent first with ties in label (first-seen) order. Returns every label
/// when no prefix exceeds the threshold.
std::vector<int> select_frequent(std::span<const int> labels, int num_strategies, double alpha);

/// Cost of assigning sample i to strategy label j: objective of the decoded
/// point, or +inf when the decode fails or is infeasible.
using AssignmentCost = std::function<double(int sample, int label)>;

struct PruneOptions {
  double eps = 1e-3;  // +inf disables the tolerance
  double alpha0 = 0.05;
  int max_it = 10;
  int threads = 1;  // workers for the cost evaluations; cost must be thread safe
};

struct PruneResult {
  bool success = false;
  double alpha = 0.0;  // value used by the last iteration
  int iterations = 0;
  std::vector<int> selected;          // old labels kept, in selection order
  std::vector<int> labels;            // per sample: index into `selected` (or old label on failure)
  std::vector<double> reassigned;     // per sample: r_i (f* for retained samples)
  long cost_evaluations = 0;
};

double prune_tolerance(double f_star, double eps);

/// Frequency-based pruning over abstract assignment costs. Success requires
/// every discarded sample to satisfy r_i <= f*_i + eps |f*_i|.
PruneResult prune(std::span<const int> labels, std::span<const double> f_star,
                  int num_strategies, const AssignmentCost& cost, const PruneOptions& opts);

/// Pruning of labeled samples, with costs from KKT decodes. On success the
/// returned bank holds only the selected strategies and `labels` index it.
struct BankPruneResult {
  PruneResult detail;
  StrategyBank bank;
  std::vector<Sample> samples;  // relabeled
};
BankPruneResult prune(const ParametricMIQO& problem, std::span<const Sample> samples,
                      const StrategyBank& bank, const PruneOptions& opts,
                      const FactorCache* cache = nullptr);

struct MiloPruneResult {
  MIQOStatus status = MIQOStatus::Infeasible;
  std::vector<char> selected;   // p_j
  std::vector<int> assignment;  // per sample, chosen j
  int count = 0;
};

/// Exact minimum-cardinality pruning by branch-and-bound on the assignment
/// MILO. Infinite costs remove the corresponding assignment variable.
/// Throws ContractViolation above 5000 assignment binaries.
MiloPruneResult prune_exact_milo(const std::vector<std::vector<double>>& F,
                                 std::span<const double> f_star, double eps);

nlohmann::json bank_to_json(const StrategyBank& bank, std::span<const Sample> samples,
                            std::span<const ExplorationStep> trace, std::uint64_t problem_hash);

struct LoadedBank {
  StrategyBank bank;
  std::vector<Sample> samples;
  std::vector<ExplorationStep> trace;
  std::uint64_t problem_hash = 0;
};
LoadedBank bank_from_json(const nlohmann::json& j);

}  // namespace mlopt
