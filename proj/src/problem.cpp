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

#include "mlopt/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace mlopt {

std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t parse_hex_digest(const std::string& s) {
  if (s.empty() || s.size() > 16) throw FormatError("bad hex digest: '" + s + "'");
  std::uint64_t h = 0;
  for (char c : s) {
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw FormatError("bad hex digest: '" + s + "'");
    h = (h << 4) | static_cast<std::uint64_t>(v);
  }
  return h;
}

double InstanceData::objective(const Vector& x) const {
  Vector Px = P.selfadjointView<Eigen::Upper>() * x;
  return 0.5 * x.dot(Px) + q.dot(x) + r;
}

Strategy::Strategy(std::vector<int> tight_set, std::vector<std::int64_t> integer_values)
    : tight_set_(std::move(tight_set)), integer_values_(std::move(integer_values)) {
  std::sort(tight_set_.begin(), tight_set_.end());
  tight_set_.erase(std::unique(tight_set_.begin(), tight_set_.end()), tight_set_.end());
  Fnv1a h;
  h.add(static_cast<std::uint64_t>(tight_set_.size()));
  for (int i : tight_set_) h.add(static_cast<std::int64_t>(i));
  h.add(static_cast<std::uint64_t>(integer_values_.size()));
  for (auto v : integer_values_) h.add(v);
  hash_ = h.digest();
}

namespace {

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw DimensionError(std::string("non-finite entries in ") + what);
}

SparseMatrix build_sparse(int rows, int cols, const std::vector<Triplet>& t) {
  SparseMatrix M(rows, cols);
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

}  // namespace

ParametricMIQO::ParametricMIQO(int n, int m, int p_dim, std::vector<Triplet> P_upper, Vector q,
                               double r, std::vector<Triplet> A, Vector b,
                               std::vector<int> integer_indices, ParameterMap param_map)
    : n_(n),
      m_(m),
      p_dim_(p_dim),
      P_trip_(std::move(P_upper)),
      A_trip_(std::move(A)),
      q0_(std::move(q)),
      b0_(std::move(b)),
      r_(r),
      integer_indices_(std::move(integer_indices)),
      map_(std::move(param_map)) {
  if (n_ <= 0 || m_ < 0 || p_dim_ < 0) throw DimensionError("invalid problem dimensions");
  if (q0_.size() != n_) throw DimensionError("q has wrong length");
  if (b0_.size() != m_) throw DimensionError("b has wrong length");
  check_finite(q0_, "q");
  check_finite(b0_, "b");
  if (!std::isfinite(r_)) throw DimensionError("non-finite r");
  for (const auto& t : P_trip_) {
    if (t.row() < 0 || t.col() >= n_ || t.row() > t.col())
      throw DimensionError("P entries must lie in the upper triangle of an n x n matrix");
    if (!std::isfinite(t.value())) throw DimensionError("non-finite entry in P");
  }
  for (const auto& t : A_trip_) {
    if (t.row() < 0 || t.row() >= m_ || t.col() < 0 || t.col() >= n_)
      throw DimensionError("A entry out of range");
    if (!std::isfinite(t.value())) throw DimensionError("non-finite entry in A");
  }
  std::sort(integer_indices_.begin(), integer_indices_.end());
  if (std::adjacent_find(integer_indices_.begin(), integer_indices_.end()) !=
      integer_indices_.end())
    throw DimensionError("duplicate integer index");
  if (!integer_indices_.empty() &&
      (integer_indices_.front() < 0 || integer_indices_.back() >= n_))
    throw DimensionError("integer index out of range");

  if (map_.q_map.rows() == 0 && map_.q_map.cols() == 0) map_.q_map.resize(n_, p_dim_);
  if (map_.b_map.rows() == 0 && map_.b_map.cols() == 0) map_.b_map.resize(m_, p_dim_);
  if (map_.q_map.rows() != n_ || map_.q_map.cols() != p_dim_)
    throw DimensionError("q parameter map must be n x p");
  if (map_.b_map.rows() != m_ || map_.b_map.cols() != p_dim_)
    throw DimensionError("b parameter map must be m x p");
  for (const auto& e : map_.P_terms) {
    if (e.row < 0 || e.col >= n_ || e.row > e.col || e.param < 0 || e.param >= p_dim_)
      throw DimensionError("P parameter term out of range");
  }
  for (const auto& e : map_.A_terms) {
    if (e.row < 0 || e.row >= m_ || e.col < 0 || e.col >= n_ || e.param < 0 ||
        e.param >= p_dim_)
      throw DimensionError("A parameter term out of range");
  }
  if (!map_.matrices_parametric && (!map_.P_terms.empty() || !map_.A_terms.empty()))
    throw DimensionError("matrix parameter terms require matrices_parametric");

  P_base_ = build_sparse(n_, n_, P_trip_);
  SparseMatrix A_col = build_sparse(m_, n_, A_trip_);
  A_base_ = SparseRowMatrix(A_col);
  A_base_.makeCompressed();
}

InstanceData ParametricMIQO::instantiate(const Vector& theta) const {
  if (theta.size() != p_dim_) throw DimensionError("parameter vector has wrong length");
  if (!theta.allFinite()) throw DimensionError("non-finite parameter");
  InstanceData inst;
  inst.n = n_;
  inst.m = m_;
  inst.r = r_;
  inst.q = q0_ + map_.q_map * theta;
  inst.b = b0_ + map_.b_map * theta;
  if (map_.matrices_parametric) {
    std::vector<Triplet> Pt = P_trip_;
    for (const auto& e : map_.P_terms) Pt.emplace_back(e.row, e.col, e.value * theta[e.param]);
    inst.P = build_sparse(n_, n_, Pt);
    std::vector<Triplet> At = A_trip_;
    for (const auto& e : map_.A_terms) At.emplace_back(e.row, e.col, e.value * theta[e.param]);
    inst.A = SparseRowMatrix(build_sparse(m_, n_, At));
    inst.A.makeCompressed();
  } else {
    inst.P = P_base_;
    inst.A = A_base_;
  }
  if (!inst.q.allFinite() || !inst.b.allFinite())
    throw DimensionError("instantiated problem has non-finite data");
  return inst;
}

double violation(const InstanceData& inst, const Vector& x) {
  if (x.size() != inst.n) throw DimensionError("violation: x has wrong length");
  if (inst.m == 0) return 0.0;
  Vector res = inst.A * x - inst.b;
  double worst = std::max(0.0, res.maxCoeff());
  double scale = std::max(inst.b.lpNorm<Eigen::Infinity>(), 1.0);
  return worst / scale;
}

Strategy extract_strategy(const InstanceData& inst, const Vector& x,
                          std::span<const int> integer_indices, double eps_tight) {
  if (x.size() != inst.n) throw DimensionError("extract_strategy: x has wrong length");
  Vector Ax = inst.A * x;
  std::vector<int> tight;
  for (int i = 0; i < inst.m; ++i) {
    if (inst.b[i] - Ax[i] <= eps_tight * (1.0 + std::abs(inst.b[i]))) tight.push_back(i);
  }
  std::vector<std::int64_t> ints;
  ints.reserve(integer_indices.size());
  for (int j : integer_indices) {
    double v = std::round(x[j]);
    if (std::abs(x[j] - v) > kIntegralityTolerance)
      throw NonIntegralSolution("non-integral solution at variable " + std::to_string(j));
    ints.push_back(static_cast<std::int64_t>(v));
  }
  return Strategy(std::move(tight), std::move(ints));
}

double min_eigenvalue(const SparseMatrix& P_upper) {
  Matrix dense = Matrix(P_upper);
  Matrix full = dense.selfadjointView<Eigen::Upper>();
  if (full.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(full, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------

int ProblemBuilder::add_variables(int count, bool integer) {
  int first = n_;
  n_ += count;
  if (integer)
    for (int i = first; i < n_; ++i) ints_.push_back(i);
  return first;
}

void ProblemBuilder::add_quadratic(int i, int j, double v) {
  if (i > j) std::swap(i, j);
  P_.emplace_back(i, j, v);
}

void ProblemBuilder::add_quadratic_param(int i, int j, int param, double v) {
  if (i > j) std::swap(i, j);
  P_terms_.push_back({i, j, param, v});
}

void ProblemBuilder::add_linear_param(int i, int param, double v) {
  qmap_.emplace_back(i, param, v);
}

int ProblemBuilder::add_le(const Terms& a, double rhs, const Terms& rhs_params,
                           const ParamTerms& coeff_params) {
  int row = m_++;
  for (auto [j, v] : a) A_.emplace_back(row, j, v);
  b_.emplace_back(row, rhs);
  for (auto [k, v] : rhs_params) bmap_.emplace_back(row, k, v);
  for (auto [j, k, v] : coeff_params) A_terms_.push_back({row, j, k, v});
  return row;
}

int ProblemBuilder::add_eq(const Terms& a, double rhs, const Terms& rhs_params,
                           const ParamTerms& coeff_params) {
  int first = add_le(a, rhs, rhs_params, coeff_params);
  Terms na;
  for (auto [j, v] : a) na.emplace_back(j, -v);
  Terms nr;
  for (auto [k, v] : rhs_params) nr.emplace_back(k, -v);
  ParamTerms nc;
  for (auto [j, k, v] : coeff_params) nc.emplace_back(j, k, -v);
  add_le(na, -rhs, nr, nc);
  return first;
}

void ProblemBuilder::add_bounds(int i, double lo, double hi) {
  if (std::isfinite(hi)) add_le({{i, 1.0}}, hi);
  if (std::isfinite(lo)) add_le({{i, -1.0}}, -lo);
}

ParametricMIQO ProblemBuilder::build() const {
  Vector q = Vector::Zero(n_);
  for (auto [i, v] : q_) q[i] += v;
  Vector b = Vector::Zero(m_);
  for (auto [i, v] : b_) b[i] += v;
  ParameterMap map;
  map.q_map = build_sparse(n_, p_dim_, qmap_);
  map.b_map = build_sparse(m_, p_dim_, bmap_);
  map.P_terms = P_terms_;
  map.A_terms = A_terms_;
  map.matrices_parametric = !P_terms_.empty() || !A_terms_.empty();
  return ParametricMIQO(n_, m_, p_dim_, P_, q, r_, A_, b, ints_, std::move(map));
}

// ---------------------------------------------------------------------------
// pmiqo-v1 JSON

namespace {

using nlohmann::json;

json triplets_to_json(const std::vector<Triplet>& t) {
  json rows = json::array(), cols = json::array(), vals = json::array();
  for (const auto& e : t) {
    rows.push_back(e.row());
    cols.push_back(e.col());
    vals.push_back(e.value());
  }
  return json{{"rows", rows}, {"cols", cols}, {"vals", vals}};
}

std::vector<Triplet> triplets_from_json(const json& j) {
  const auto& rows = j.at("rows");
  const auto& cols = j.at("cols");
  const auto& vals = j.at("vals");
  if (rows.size() != cols.size() || rows.size() != vals.size())
    throw FormatError("sparse block has mismatched rows/cols/vals lengths");
  std::vector<Triplet> t;
  t.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    t.emplace_back(rows[k].get<int>(), cols[k].get<int>(), vals[k].get<double>());
  return t;
}

std::vector<Triplet> sparse_to_triplets(const SparseMatrix& M) {
  std::vector<Triplet> t;
  for (int k = 0; k < M.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(M, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  return t;
}

json tensor_to_json(const std::vector<TensorEntry>& t) {
  json rows = json::array(), cols = json::array(), params = json::array(), vals = json::array();
  for (const auto& e : t) {
    rows.push_back(e.row);
    cols.push_back(e.col);
    params.push_back(e.param);
    vals.push_back(e.value);
  }
  return json{{"rows", rows}, {"cols", cols}, {"params", params}, {"vals", vals}};
}

std::vector<TensorEntry> tensor_from_json(const json& j) {
  const auto& rows = j.at("rows");
  const auto& cols = j.at("cols");
  const auto& params = j.at("params");
  const auto& vals = j.at("vals");
  if (rows.size() != cols.size() || rows.size() != params.size() || rows.size() != vals.size())
    throw FormatError("tensor block has mismatched lengths");
  std::vector<TensorEntry> t;
  for (std::size_t k = 0; k < rows.size(); ++k)
    t.push_back({rows[k].get<int>(), cols[k].get<int>(), params[k].get<int>(),
                 vals[k].get<double>()});
  return t;
}

json vec_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vec_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json problem_to_json(const ParametricMIQO& problem) {
  const auto& map = problem.param_map();
  json pm{{"kind", "affine"},
          {"q", triplets_to_json(sparse_to_triplets(map.q_map))},
          {"b", triplets_to_json(sparse_to_triplets(map.b_map))},
          {"matrices_parametric", map.matrices_parametric}};
  if (map.matrices_parametric) {
    pm["P"] = tensor_to_json(map.P_terms);
    pm["A"] = tensor_to_json(map.A_terms);
  }
  return json{{"format", "pmiqo-v1"},
              {"name", problem.name},
              {"n", problem.n()},
              {"m", problem.m()},
              {"d", problem.d()},
              {"p_dim", problem.p_dim()},
              {"P", triplets_to_json(problem.P_triplets())},
              {"q", vec_to_json(problem.q0())},
              {"r", problem.r()},
              {"A", triplets_to_json(problem.A_triplets())},
              {"b", vec_to_json(problem.b0())},
              {"integer_indices", problem.integer_indices()},
              {"param_map", pm}};
}

ParametricMIQO problem_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format") != "pmiqo-v1")
    throw FormatError("unsupported problem format (expected pmiqo-v1)");
  try {
    int n = j.at("n").get<int>();
    int m = j.at("m").get<int>();
    int p = j.at("p_dim").get<int>();
    const auto& pm = j.at("param_map");
    if (pm.value("kind", std::string("affine")) != "affine")
      throw FormatError("only affine parameter maps are supported");
    ParameterMap map;
    {
      auto t = triplets_from_json(pm.at("q"));
      map.q_map.resize(n, p);
      for (const auto& e : t)
        if (e.row() < 0 || e.row() >= n || e.col() < 0 || e.col() >= p)
          throw DimensionError("q parameter map entry out of range");
      map.q_map.setFromTriplets(t.begin(), t.end());
    }
    {
      auto t = triplets_from_json(pm.at("b"));
      map.b_map.resize(m, p);
      for (const auto& e : t)
        if (e.row() < 0 || e.row() >= m || e.col() < 0 || e.col() >= p)
          throw DimensionError("b parameter map entry out of range");
      map.b_map.setFromTriplets(t.begin(), t.end());
    }
    map.matrices_parametric = pm.value("matrices_parametric", false);
    if (pm.contains("P")) map.P_terms = tensor_from_json(pm.at("P"));
    if (pm.contains("A")) map.A_terms = tensor_from_json(pm.at("A"));
    auto ints = j.at("integer_indices").get<std::vector<int>>();
    if (j.contains("d") && j.at("d").get<std::size_t>() != ints.size())
      throw DimensionError("d does not match integer_indices");
    ParametricMIQO problem(n, m, p, triplets_from_json(j.at("P")), vec_from_json(j.at("q")),
                           j.value("r", 0.0), triplets_from_json(j.at("A")),
                           vec_from_json(j.at("b")), std::move(ints), std::move(map));
    problem.name = j.value("name", std::string());
    return problem;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed problem file: ") + e.what());
  }
}

std::uint64_t ParametricMIQO::content_hash() const {
  return hash_bytes(problem_to_json(*this).dump());
}

void save_problem(const ParametricMIQO& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << problem_to_json(problem).dump() << '\n';
}

ParametricMIQO load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid JSON in ") + path + ": " + e.what());
  }
  return problem_from_json(j);
}

nlohmann::json strategy_to_json(const Strategy& s) {
  return json{{"tight_set", s.tight_set()}, {"integer_values", s.integer_values()}};
}

Strategy strategy_from_json(const nlohmann::json& j) {
  return Strategy(j.at("tight_set").get<std::vector<int>>(),
                  j.at("integer_values").get<std::vector<std::int64_t>>());
}

}  // namespace mlopt
