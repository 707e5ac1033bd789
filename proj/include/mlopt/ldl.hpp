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
#include <iosfwd>
#include <span>
#include <vector>

#include "mlopt/common.hpp"

namespace mlopt {

/// Fill-reducing symmetric ordering of a matrix given by its upper triangle.
/// Entry k is the original index placed at position k.
std::vector<int> amd_ordering(const SparseMatrix& K_upper);

/// AMD ordering of a saddle-point matrix whose first `n_primal` indices are
/// primal, with every dual index postponed until its primal neighbours with
/// a clearly positive diagonal are eliminated. Keeps the pivots of strictly
/// convex systems away from the size of the dual regularization.
std::vector<int> kkt_ordering(const SparseMatrix& K_upper, int n_primal);

/// Sparse LDL' factorization of a symmetric matrix without pivoting, for
/// quasi-definite matrices. Elimination tree, column counts and an
/// up-looking numeric phase; L is unit lower triangular and stored by column
/// without its diagonal.
class SparseLDL {
 public:
  SparseLDL() = default;

  /// Factorizes K(perm, perm). `K_upper` holds the upper triangle in
  /// compressed columns; an empty `perm` selects the identity. Returns false
  /// when a zero pivot appears.
  bool factorize(const SparseMatrix& K_upper, std::vector<int> perm = {});

  bool ok() const { return ok_; }
  int dim() const { return n_; }
  long nnz_L() const { return static_cast<long>(Li_.size()); }

  /// Overwrites b with K^{-1} b.
  void solve_in_place(Vector& b) const;
  Vector solve(const Vector& b) const {
    Vector x = b;
    solve_in_place(x);
    return x;
  }

  const std::vector<int>& perm() const { return perm_; }
  const Vector& D() const { return D_; }
  /// Unit lower triangular factor including the diagonal.
  SparseMatrix L() const;

  /// ||K(perm, perm) - L D L'||_F / ||K||_F.
  double reconstruction_error(const SparseMatrix& K_upper) const;
  /// ||K(perm, perm) - L D L'||_F / || |L| |D| |L'| ||_F, the normwise backward
  /// error of the factorization. Without pivoting, zero primal diagonals give
  /// pivots of the size of the regularization and element growth near
  /// 1/delta; this measure stays at roundoff level while the one above does not.
  double backward_error(const SparseMatrix& K_upper) const;

  void write(std::ostream& out) const;
  void read(std::istream& in);

 private:
  int n_ = 0;
  bool ok_ = false;
  std::vector<int> perm_;
  std::vector<int> Lp_, Li_;
  std::vector<double> Lx_;
  Vector D_, Dinv_;
};

}  // namespace mlopt
