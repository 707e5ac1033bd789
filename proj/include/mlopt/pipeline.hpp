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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlopt/benchmarks.hpp"
#include "mlopt/classifier.hpp"
#include "mlopt/kkt.hpp"
#include "mlopt/metrics.hpp"
#include "mlopt/strategy_bank.hpp"

namespace mlopt {

/// Everything that determines an offline run and its evaluation.
struct RunConfig {
  Family family = Family::FuelCell;
  int size = 10;  // T, cardinality c or n_obs, by family
  FuelCellConfig fuel;
  PortfolioConfig portfolio;
  MotionConfig motion;
  int base_steps = 200;  // trajectory points the samplers perturb
  double radius = -1.0;  // < 0 selects the family default
  double explore_eps = 0.05;
  double explore_beta = 0.05;
  long max_samples = 5000;
  double prune_eps = 1e-3;
  int prune_max_it = 10;
  Hyperparams hyper;
  int tune_budget = 0;  // 0 trains `hyper` directly
  std::vector<int> k_grid{1, 3, 10, 30};
  int test_size = 500;
  long heuristic_node_limit = 5;
  int timing_repeats = 3;
  std::uint64_t seed = 0;
  int threads = 1;

  /// Throws ContractViolation on non-positive tolerances or sizes.
  void validate() const;
};
nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);

struct GeneratedProblem {
  ParametricMIQO problem;
  SamplerSpec sampler;
};

/// Builds the family's problem at `size` together with its sampler. Fuel-cell
/// base points come from a closed-loop rollout solved with the exact solver.
GeneratedProblem generate_problem(const RunConfig& cfg);

/// FNV-1a over the strategy hashes in label order.
std::uint64_t bank_hash(const StrategyBank& bank);

/// Training parameters: sample i has id "train-<i>".
ParameterSource training_source(const SamplerSpec& spec);
/// Held-out parameters drawn from an independent stream, ids "test-<i>".
std::vector<ParameterInstance> test_parameters(const SamplerSpec& spec, int count,
                                               long first = 0);

struct OfflineArtifacts {
  ExplorationResult exploration;
  BankPruneResult pruned;
  NetworkModel model;
  TrainReport report;
  std::optional<TuneResult> tuning;
  FactorCache cache;
  nlohmann::json manifest;
};

/// Offline stage failure; `stage` names the step that failed.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

/// explore -> prune -> (tune) -> train -> factorize and cache.
struct TrainedModel {
  NetworkModel model;
  TrainReport report;
  std::optional<TuneResult> tuning;
};

/// Tunes (when cfg.tune_budget > 0) and trains on the pruned samples, then
/// links the model to the problem and bank by hash.
TrainedModel train_stage(const ParametricMIQO& problem, const BankPruneResult& pruned,
                         const RunConfig& cfg);

OfflineArtifacts run_offline(const ParametricMIQO& problem, const SamplerSpec& sampler,
                             const RunConfig& cfg);

/// Writes problem.json, sampler.json, bank.json, pruned_bank.json,
/// model.{bin,json}, labels.json, cache.bin (when enabled),
/// train_report.json and manifest.json into `dir`.
void save_artifacts(const std::string& dir, const ParametricMIQO& problem,
                    const SamplerSpec& sampler, const OfflineArtifacts& a);

struct OnlineResult {
  std::vector<int> predicted;  // labels, most likely first
  EvaluationResult evaluation;
  double predict_time = 0.0;
  double decode_time = 0.0;
};

/// Predict-then-decode solver over a consistent set of artifacts.
class OnlineSolver {
 public:
  OnlineSolver(ParametricMIQO problem, StrategyBank bank, NetworkModel model,
               std::optional<FactorCache> cache, int threads = 1);
  /// Loads a saved artifact directory; throws ContractViolation when the
  /// problem, bank, model and cache are not hash-linked.
  static OnlineSolver load(const std::string& dir, int threads = 1);

  OnlineResult solve(const Vector& theta, int k, OpCounter* counter = nullptr) const;

  const ParametricMIQO& problem() const { return problem_; }
  const StrategyBank& bank() const { return bank_; }
  const NetworkModel& model() const { return model_; }
  bool cached() const { return cache_.has_value() && cache_->enabled(); }

 private:
  ParametricMIQO problem_;
  StrategyBank bank_;
  NetworkModel model_;
  std::optional<FactorCache> cache_;
  int threads_;
};

struct EvaluationOptions {
  std::vector<int> k_grid{1, 3, 10, 30};
  long heuristic_node_limit = 5;
  int timing_repeats = 3;
};

/// One test parameter with its oracle and heuristic solves.
struct TestPoint {
  ParameterInstance param;
  double f_star = kInf;
  double oracle_time = 0.0;
  double heuristic_time = 0.0;
  bool heuristic_found = false;
  double heuristic_objective = kInf;
};

/// Solves test parameters with the exact and node-limited solvers; drops
/// parameters the exact solver finds infeasible.
std::vector<TestPoint> solve_test_points(const ParametricMIQO& problem,
                                         const std::vector<ParameterInstance>& params,
                                         long heuristic_node_limit);

/// Records per (k, test point), k-major.
std::vector<std::vector<EvalRecord>> evaluate_online(const OnlineSolver& solver,
                                                     const std::vector<TestPoint>& points,
                                                     const EvaluationOptions& opts);

/// One table row per k from the k-major records of evaluate_online.
std::vector<TableRow> table_rows(const std::string& size_param, const ParametricMIQO& problem,
                                 int M_unpruned, int M,
                                 const std::vector<std::vector<EvalRecord>>& records,
                                 std::span<const int> k_grid);

struct BenchmarkOutcome {
  std::vector<TableRow> rows;
  std::vector<std::string> failures;  // "size: stage: message", one per failed size
};

/// Runs the offline pipeline, the held-out test set and both baselines for
/// each size. A failing size is recorded and skipped. Artifacts go to
/// `artifact_root/<size>` when the root is not empty.
BenchmarkOutcome run_benchmark(const RunConfig& base, std::span<const int> sizes,
                               const std::string& artifact_root = "");

}  // namespace mlopt
