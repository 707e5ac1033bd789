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

#include <span>
#include <vector>

#include "mlopt/common.hpp"
#include "mlopt/problem.hpp"

namespace mlopt {

enum class QPStatus { Optimal, Infeasible, Unbounded, IterLimit };

const char* to_string(QPStatus s);

/// x_index == value.
struct FixedValue {
  int index = 0;
  double value = 0.0;
};

/// lower <= x_index <= upper; infinite sides are ignored.
struct VarBound {
  int index = 0;
  double lower = -kInf;
  double upper = kInf;
};

struct QPOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  int max_iter = 0;  // 0 selects 50 * (n + rows)
  int bland_after = 10;
};

/// Starting point for a solve. Rows refer to the base constraint rows.
struct QPWarmStart {
  Vector x;
  std::vector<int> active_rows;
};

struct QPResult {
  QPStatus status = QPStatus::Infeasible;
  Vector x;
  /// Nonnegative multipliers of the base rows (zero off the active set).
  Vector duals;
  /// Net multiplier on each coordinate from fixings and variable bounds, so
  /// that Px + q + A'duals + var_duals = 0 at an optimum.
  Vector var_duals;
  std::vector<int> active_rows;
  double objective = kInf;
  int iterations = 0;
};

/// Primal active-set method for convex QPs with a positive semidefinite P.
///
/// Row pairs (a, b), (-a, -b) are detected at construction and eliminated
/// once: iterations run in the null space of those equalities, so the cost per
/// iteration scales with the remaining degrees of freedom. An elastic phase-1
/// LP starting from the warm-start point (or the origin) either produces a
/// feasible point or proves infeasibility. Zero-curvature directions of the
/// reduced Hessian are followed until a constraint blocks them.
class ActiveSetQP {
 public:
  explicit ActiveSetQP(const InstanceData& inst);

  QPResult solve(std::span<const int> equality_rows, std::span<const FixedValue> fixed,
                 std::span<const VarBound> bounds, const QPOptions& opts = {},
                 const QPWarmStart* warm = nullptr) const;

  int n() const { return n_; }
  int m() const { return m_; }
  /// Row index paired with `row` as the opposite inequality, or -1.
  int mirror(int row) const { return mirror_[row]; }

 private:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  const InstanceData* inst_;
  int n_, m_;
  Matrix P_;
  RowMatrix A_;
  std::vector<int> mirror_;
  bool has_quadratic_;

  // Equality elimination x = x_p + Z y.
  std::vector<int> eq_rows_;  // first row of each pair
  Matrix eq_basis_;           // orthonormal basis of the row space of the equalities
  Matrix eq_lsq_;             // maps a gradient to least-squares equality multipliers
  bool eq_consistent_ = true;
  Vector x_p_;
  Matrix Z_;
  Matrix H_r_;
  Vector c_r_;
  std::vector<int> reduced_of_row_;  // -1 for rows handled by the elimination
  std::vector<int> row_of_reduced_;
  RowMatrix C_r_;
  Vector d_r_;
  bool base_infeasible_ = false;
};

QPResult solve_qp(const InstanceData& inst, std::span<const int> equality_rows = {},
                  std::span<const FixedValue> fixed = {}, std::span<const VarBound> bounds = {},
                  const QPOptions& opts = {});

/// Infinity norm of Px + q + A'duals + var_duals.
double stationarity_residual(const InstanceData& inst, const QPResult& res);

}  // namespace mlopt
