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

#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlopt/common.hpp"

namespace mlopt {

/// Concrete problem data for one parameter value:
///   minimize (1/2) x'Px + q'x + r  subject to  Ax <= b,  x_I integral.
/// P keeps only its upper triangle.
struct InstanceData {
  int n = 0;
  int m = 0;
  SparseMatrix P;
  Vector q;
  double r = 0.0;
  SparseRowMatrix A;
  Vector b;

  double objective(const Vector& x) const;
};

struct ParameterInstance {
  Vector theta;
  std::string id;
};

/// Tight constraints plus the integer assignment at an optimum.
class Strategy {
 public:
  Strategy() = default;
  Strategy(std::vector<int> tight_set, std::vector<std::int64_t> integer_values);

  const std::vector<int>& tight_set() const { return tight_set_; }
  const std::vector<std::int64_t>& integer_values() const { return integer_values_; }
  std::uint64_t hash() const { return hash_; }

  friend bool operator==(const Strategy& a, const Strategy& b) {
    return a.hash_ == b.hash_ && a.tight_set_ == b.tight_set_ &&
           a.integer_values_ == b.integer_values_;
  }

 private:
  std::vector<int> tight_set_;
  std::vector<std::int64_t> integer_values_;
  std::uint64_t hash_ = 0;
};

struct StrategyHasher {
  std::size_t operator()(const Strategy& s) const { return static_cast<std::size_t>(s.hash()); }
};

/// Coefficient of a matrix entry on one parameter component.
struct TensorEntry {
  int row = 0;
  int col = 0;
  int param = 0;
  double value = 0.0;
};

/// Affine parameter dependence. q and b always depend on theta; P and A only
/// when `matrices_parametric` is set.
struct ParameterMap {
  SparseMatrix q_map;  // n x p
  SparseMatrix b_map;  // m x p
  std::vector<TensorEntry> P_terms;  // upper triangle only
  std::vector<TensorEntry> A_terms;
  bool matrices_parametric = false;
};

class ParametricMIQO {
 public:
  ParametricMIQO(int n, int m, int p_dim, std::vector<Triplet> P_upper, Vector q, double r,
                 std::vector<Triplet> A, Vector b, std::vector<int> integer_indices,
                 ParameterMap param_map);

  int n() const { return n_; }
  int m() const { return m_; }
  int d() const { return static_cast<int>(integer_indices_.size()); }
  int p_dim() const { return p_dim_; }
  const std::vector<int>& integer_indices() const { return integer_indices_; }
  bool matrices_parametric() const { return map_.matrices_parametric; }
  const ParameterMap& param_map() const { return map_; }
  const std::vector<Triplet>& P_triplets() const { return P_trip_; }
  const std::vector<Triplet>& A_triplets() const { return A_trip_; }
  const Vector& q0() const { return q0_; }
  const Vector& b0() const { return b0_; }
  double r() const { return r_; }

  InstanceData instantiate(const Vector& theta) const;
  InstanceData instantiate(const ParameterInstance& p) const { return instantiate(p.theta); }

  /// Content hash of the canonical JSON serialization.
  std::uint64_t content_hash() const;

  std::string name;

 private:
  int n_, m_, p_dim_;
  std::vector<Triplet> P_trip_;
  std::vector<Triplet> A_trip_;
  Vector q0_, b0_;
  double r_;
  std::vector<int> integer_indices_;
  ParameterMap map_;
  SparseMatrix P_base_;
  SparseRowMatrix A_base_;
};

/// Normalized infeasibility ||(Ax - b)_+||_inf / max(||b||_inf, 1).
double violation(const InstanceData& inst, const Vector& x);

inline constexpr double kTightTolerance = 1e-5;
inline constexpr double kIntegralityTolerance = 1e-4;

/// Reads the strategy off an optimal point. Throws NonIntegralSolution when an
/// integer component is more than 1e-4 away from an integer.
Strategy extract_strategy(const InstanceData& inst, const Vector& x,
                          std::span<const int> integer_indices,
                          double eps_tight = kTightTolerance);

/// Smallest eigenvalue of the symmetric matrix stored as an upper triangle.
double min_eigenvalue(const SparseMatrix& P_upper);

/// Incremental construction of a ParametricMIQO from named rows.
class ProblemBuilder {
 public:
  using Terms = std::vector<std::pair<int, double>>;
  /// (variable, parameter, coefficient)
  using ParamTerms = std::vector<std::tuple<int, int, double>>;

  explicit ProblemBuilder(int p_dim) : p_dim_(p_dim) {}

  int add_variables(int count, bool integer = false);
  int num_variables() const { return n_; }
  int num_rows() const { return m_; }

  void add_quadratic(int i, int j, double v);
  void add_quadratic_param(int i, int j, int param, double v);
  void add_linear(int i, double v) { q_.emplace_back(i, v); }
  void add_linear_param(int i, int param, double v);
  void add_constant(double v) { r_ += v; }

  /// a'x <= rhs + sum_k rhs_params[k] * theta_k, with optionally parametric
  /// coefficients a_j += v * theta_k. Returns the row index.
  int add_le(const Terms& a, double rhs, const Terms& rhs_params = {},
             const ParamTerms& coeff_params = {});
  /// Adds the row pair (a'x <= rhs, -a'x <= -rhs). Returns the first row.
  int add_eq(const Terms& a, double rhs, const Terms& rhs_params = {},
             const ParamTerms& coeff_params = {});
  /// lo <= x_i <= hi as two single-variable rows (infinite sides skipped).
  void add_bounds(int i, double lo, double hi);

  ParametricMIQO build() const;

 private:
  int p_dim_;
  int n_ = 0;
  int m_ = 0;
  std::vector<int> ints_;
  std::vector<Triplet> P_, A_, qmap_, bmap_;
  std::vector<std::pair<int, double>> q_;
  std::vector<std::pair<int, double>> b_;
  std::vector<TensorEntry> P_terms_, A_terms_;
  double r_ = 0.0;
};

nlohmann::json problem_to_json(const ParametricMIQO& problem);
ParametricMIQO problem_from_json(const nlohmann::json& j);
void save_problem(const ParametricMIQO& problem, const std::string& path);
ParametricMIQO load_problem(const std::string& path);

nlohmann::json strategy_to_json(const Strategy& s);
Strategy strategy_from_json(const nlohmann::json& j);

}  // namespace mlopt
