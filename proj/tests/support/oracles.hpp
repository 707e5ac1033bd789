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

// Independent reference solvers and random instance generators for tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mlopt/benchmarks.hpp"
#include "mlopt/problem.hpp"

namespace mlopt::testing {

struct DenseQP {
  Matrix P;
  Vector q;
  double r = 0.0;
  Matrix A;
  Vector b;
};

inline DenseQP to_dense(const InstanceData& inst) {
  DenseQP d;
  d.P = Matrix(inst.P).selfadjointView<Eigen::Upper>();
  d.q = inst.q;
  d.r = inst.r;
  d.A = Matrix(inst.A);
  d.b = inst.b;
  return d;
}

struct BruteResult {
  bool feasible = false;
  Vector x;
  double objective = kInf;
};

/// Exhaustive KKT enumeration for a strictly convex QP: tries every subset of
/// rows as the active set and keeps the best primal-feasible point with
/// nonnegative multipliers. Exponential in m; only for tiny problems.
inline BruteResult brute_force_qp(const DenseQP& qp, double tol = 1e-9) {
  const int n = static_cast<int>(qp.q.size());
  const int m = static_cast<int>(qp.b.size());
  BruteResult best;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int k = static_cast<int>(act.size());
    if (k > n) continue;
    Matrix K = Matrix::Zero(n + k, n + k);
    Vector rhs(n + k);
    K.topLeftCorner(n, n) = qp.P;
    rhs.head(n) = -qp.q;
    for (int j = 0; j < k; ++j) {
      K.block(n + j, 0, 1, n) = qp.A.row(act[j]);
      K.block(0, n + j, n, 1) = qp.A.row(act[j]).transpose();
      rhs[n + j] = qp.b[act[j]];
    }
    Eigen::FullPivLU<Matrix> lu(K);
    if (lu.rank() < n + k) continue;
    Vector sol = lu.solve(rhs);
    Vector x = sol.head(n);
    if (k > 0 && sol.tail(k).minCoeff() < -1e-9) continue;
    if (((qp.A * x - qp.b).array() > tol * (1.0 + qp.b.cwiseAbs().maxCoeff())).any()) continue;
    double f = 0.5 * x.dot(qp.P * x) + qp.q.dot(x) + qp.r;
    if (f < best.objective) {
      best.feasible = true;
      best.x = x;
      best.objective = f;
    }
  }
  return best;
}

/// Brute force over binary assignments wrapped around brute_force_qp on the
/// continuous part. Rows left without continuous terms are checked and
/// dropped after substitution.
inline BruteResult brute_force_miqo(const DenseQP& qp, const std::vector<int>& ints) {
  const int n = static_cast<int>(qp.q.size());
  std::vector<int> cont;
  for (int j = 0; j < n; ++j)
    if (!std::binary_search(ints.begin(), ints.end(), j)) cont.push_back(j);
  const int nc = static_cast<int>(cont.size());
  BruteResult best;
  for (unsigned mask = 0; mask < (1u << ints.size()); ++mask) {
    Vector xi(ints.size());
    for (std::size_t k = 0; k < ints.size(); ++k) xi[k] = (mask >> k) & 1u;
    Vector xfull = Vector::Zero(n);
    for (std::size_t k = 0; k < ints.size(); ++k) xfull[ints[k]] = xi[k];
    // Substitute the integers.
    std::vector<int> keep;
    bool ok = true;
    for (int i = 0; i < qp.A.rows(); ++i) {
      double rest = qp.b[i] - qp.A.row(i).dot(xfull);
      bool has_cont = false;
      for (int j : cont) has_cont = has_cont || qp.A(i, j) != 0.0;
      if (has_cont) {
        keep.push_back(i);
      } else if (rest < -1e-9 * (1.0 + std::abs(qp.b[i]))) {
        ok = false;
      }
    }
    if (!ok) continue;
    double fval = 0.5 * xfull.dot(qp.P * xfull) + qp.q.dot(xfull) + qp.r;
    if (nc == 0) {
      if (fval < best.objective) best = {true, xfull, fval};
      continue;
    }
    DenseQP sub;
    sub.P.resize(nc, nc);
    sub.q.resize(nc);
    for (int a = 0; a < nc; ++a) {
      sub.q[a] = qp.q[cont[a]] + qp.P.row(cont[a]).dot(xfull);
      for (int b = 0; b < nc; ++b) sub.P(a, b) = qp.P(cont[a], cont[b]);
    }
    sub.r = fval;
    sub.A.resize(keep.size(), nc);
    sub.b.resize(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      for (int a = 0; a < nc; ++a) sub.A(r, a) = qp.A(keep[r], cont[a]);
      sub.b[r] = qp.b[keep[r]] - qp.A.row(keep[r]).dot(xfull);
    }
    BruteResult res = brute_force_qp(sub);
    if (res.feasible && res.objective < best.objective) {
      Vector x = xfull;
      for (int a = 0; a < nc; ++a) x[cont[a]] = res.x[a];
      best = {true, x, res.objective};
    }
  }
  return best;
}

struct RandomMIQO {
  InstanceData inst;
  std::vector<int> ints;
};

/// Random strictly convex MIQO with binaries (bounds as rows) and general rows
/// chosen so that a random mixed point is feasible.
inline RandomMIQO random_miqo(std::mt19937_64& rng, int n, int d, int general_rows) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  ProblemBuilder b(0);
  b.add_variables(n - d);
  int first_int = b.add_variables(d, true);
  Matrix L(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) L(i, j) = nd(rng);
  Matrix P = L * L.transpose() / n + 0.1 * Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) b.add_quadratic(i, j, P(i, j));
  for (int i = 0; i < n; ++i) b.add_linear(i, 3.0 * nd(rng));
  Vector x0(n);
  for (int i = 0; i < n; ++i) x0[i] = i >= first_int ? double(ud(rng) < 0.5) : nd(rng);
  for (int i = first_int; i < n; ++i) b.add_bounds(i, 0.0, 1.0);
  for (int r = 0; r < general_rows; ++r) {
    ProblemBuilder::Terms row;
    double ax = 0.0;
    for (int j = 0; j < n; ++j) {
      if (ud(rng) < 0.3) continue;
      double v = nd(rng);
      row.emplace_back(j, v);
      ax += v * x0[j];
    }
    if (row.empty()) row.emplace_back(0, 1.0), ax = x0[0];
    b.add_le(row, ax + 0.5 * ud(rng));
  }
  ParametricMIQO pr = b.build();
  return {pr.instantiate(Vector()), pr.integer_indices()};
}

}  // namespace mlopt::testing
