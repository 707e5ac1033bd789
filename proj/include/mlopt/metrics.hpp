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

#include <chrono>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlopt/common.hpp"

namespace mlopt {

inline constexpr double kSubTolerance = 1e-4;
inline constexpr double kFeasTolerance = 1e-4;

/// Relative objective gap max(0, (f_hat - f*) / max(|f*|, 1e-10)). Throws
/// ContractViolation when the prediction's infeasibility exceeds 1e-4.
double suboptimality(double f_hat, double f_star, double infeasibility);

/// One evaluated test parameter.
struct EvalRecord {
  std::string id;
  int k = 0;
  double predict_time = 0.0;  // seconds
  double decode_time = 0.0;
  double oracle_time = 0.0;
  double heuristic_time = 0.0;
  double objective = kInf;  // chosen candidate
  double f_star = kInf;
  double infeasibility = kInf;
  bool feasible() const { return infeasibility <= kFeasTolerance; }
  /// NaN for infeasible predictions.
  double subopt() const;
  double online_time() const { return predict_time + decode_time; }
};

bool accurate(const EvalRecord& r, double eps_inf = kFeasTolerance, double eps_sub = kSubTolerance);
/// Fraction of accurate records. Throws ContractViolation on an empty set.
double accuracy(std::span<const EvalRecord> records, double eps_inf = kFeasTolerance,
                double eps_sub = kSubTolerance);

double mean(std::span<const double> v);
double median(std::vector<double> v);
double max_of(std::span<const double> v);
/// Population standard deviation over the mean.
double coefficient_of_variation(std::span<const double> v);

/// Median wall time of `repeats` runs of `fn`, from a monotonic clock.
double median_time(const std::function<void()>& fn, int repeats = 3);

struct Summary {
  long count = 0;
  long feasible = 0;
  double mean_time_pred = 0.0, max_time_pred = 0.0, median_time_pred = 0.0;
  double mean_time_full = 0.0, max_time_full = 0.0, median_time_full = 0.0;
  double mean_time_heuristic = 0.0, max_time_heuristic = 0.0;
  double cv_time_pred = 0.0, cv_time_full = 0.0;
  /// Mean suboptimality over feasible predictions (0 when none is feasible).
  double avg_subopt = 0.0;
  /// Mean infeasibility over all predictions.
  double avg_infeas = 0.0;
  double accuracy = 0.0;
};
Summary summarize(std::span<const EvalRecord> records);
nlohmann::json to_json(const Summary& s);

/// One CSV row of a benchmark table.
struct TableRow {
  std::string size_param;
  int n_var = 0;
  int n_constr = 0;
  int M_unpruned = 0;
  int M = 0;
  int n_best = 0;
  Summary summary;
};

const std::vector<std::string>& table_columns();
/// RFC 4180 field quoting.
std::string csv_field(const std::string& s);
void write_csv(std::ostream& out, std::span<const TableRow> rows);
nlohmann::json rows_to_json(const std::string& family, std::span<const TableRow> rows);

/// Writes <dir>/<family>.csv and <dir>/<family>.json. Returns one warning per
/// (size, k) pair of the expected grid that has no row.
std::vector<std::string> emit_report(const std::string& dir, const std::string& family,
                                     std::span<const TableRow> rows,
                                     std::span<const std::string> expected_sizes = {},
                                     std::span<const int> expected_k = {});

}  // namespace mlopt
