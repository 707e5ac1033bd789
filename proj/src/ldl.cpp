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

#include "mlopt/ldl.hpp"

#include <Eigen/OrderingMethods>
#include <istream>
#include <numeric>
#include <ostream>

namespace mlopt {

namespace {

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated factor data");
}

template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  std::uint64_t n = v.size();
  put(out, n);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void get_vec(std::istream& in, std::vector<T>& v, std::uint64_t max_len) {
  std::uint64_t n = 0;
  get(in, n);
  if (n > max_len) throw FormatError("corrupt factor data");
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw FormatError("truncated factor data");
}

}  // namespace

std::vector<int> amd_ordering(const SparseMatrix& K_upper) {
  const int n = static_cast<int>(K_upper.rows());
  if (n == 0) return {};
  SparseMatrix full = K_upper.selfadjointView<Eigen::Upper>();
  Eigen::AMDOrdering<int> amd;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P;
  amd(full, P);
  return std::vector<int>(P.indices().data(), P.indices().data() + n);
}

std::vector<int> kkt_ordering(const SparseMatrix& K_upper, int n_primal) {
  const int n = static_cast<int>(K_upper.rows());
  std::vector<int> amd = amd_ordering(K_upper);
  // Only primal pivots with real curvature are worth waiting for; a dual
  // eliminated after a zero-curvature primal inherits a 1/delta entry.
  Vector diag = Vector::Zero(n);
  for (int j = 0; j < n; ++j)
    for (SparseMatrix::InnerIterator it(K_upper, j); it; ++it)
      if (it.row() == j) diag[j] = it.value();
  const double scale = std::max(1.0, diag.head(n_primal).cwiseAbs().maxCoeff());
  std::vector<std::vector<int>> duals_of(n_primal);
  std::vector<int> waiting(n, 0);
  for (int j = 0; j < n; ++j)
    for (SparseMatrix::InnerIterator it(K_upper, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      if (i < n_primal && j >= n_primal && diag[i] > 1e-6 * scale) {
        duals_of[i].push_back(j);
        ++waiting[j];
      }
    }
  std::vector<int> out;
  out.reserve(n);
  std::vector<char> pending(n, 0);
  for (int v : amd) {
    if (v >= n_primal) {
      if (waiting[v] == 0) out.push_back(v);
      else pending[v] = 1;
      continue;
    }
    out.push_back(v);
    for (int dual : duals_of[v])
      if (--waiting[dual] == 0 && pending[dual]) {
        pending[dual] = 0;
        out.push_back(dual);
      }
  }
  return out;
}

bool SparseLDL::factorize(const SparseMatrix& K_upper, std::vector<int> perm) {
  const int n = static_cast<int>(K_upper.rows());
  if (K_upper.cols() != n) throw DimensionError("LDL: matrix must be square");
  n_ = n;
  ok_ = false;
  if (perm.empty()) {
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), 0);
  }
  if (static_cast<int>(perm.size()) != n) throw DimensionError("LDL: permutation size");
  perm_ = std::move(perm);
  std::vector<int> pinv(n, -1);
  for (int k = 0; k < n; ++k) {
    if (perm_[k] < 0 || perm_[k] >= n || pinv[perm_[k]] >= 0)
      throw DimensionError("LDL: invalid permutation");
    pinv[perm_[k]] = k;
  }

  // Upper triangle of C = K(perm, perm) in compressed columns.
  std::vector<Triplet> trip;
  trip.reserve(K_upper.nonZeros());
  for (int j = 0; j < n; ++j)
    for (SparseMatrix::InnerIterator it(K_upper, j); it; ++it) {
      if (it.row() > j) throw DimensionError("LDL: expected the upper triangle");
      int a = pinv[it.row()], b = pinv[j];
      if (a > b) std::swap(a, b);
      trip.emplace_back(a, b, it.value());
    }
  SparseMatrix C(n, n);
  C.setFromTriplets(trip.begin(), trip.end());
  C.makeCompressed();
  const int* Ap = C.outerIndexPtr();
  const int* Ai = C.innerIndexPtr();
  const double* Ax = C.valuePtr();

  // Elimination tree and column counts.
  std::vector<int> etree(n, -1), Lnz(n, 0), work(n, 0);
  for (int j = 0; j < n; ++j) {
    work[j] = j;
    for (int p = Ap[j]; p < Ap[j + 1]; ++p) {
      int i = Ai[p];
      while (i < j && work[i] != j) {
        if (etree[i] == -1) etree[i] = j;
        ++Lnz[i];
        work[i] = j;
        i = etree[i];
      }
    }
  }
  Lp_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) Lp_[i + 1] = Lp_[i] + Lnz[i];
  Li_.assign(Lp_[n], 0);
  Lx_.assign(Lp_[n], 0.0);
  D_ = Vector::Zero(n);
  Dinv_ = Vector::Zero(n);

  // Up-looking numeric factorization: row k of L from a sparse triangular solve
  // whose pattern is the reach of column k in the elimination tree.
  std::vector<double> y(n, 0.0);
  std::vector<char> marked(n, 0);
  std::vector<int> y_idx(n), stack(n), next(Lp_.begin(), Lp_.end() - 1);
  for (int k = 0; k < n; ++k) {
    int nnz_y = 0;
    D_[k] = 0.0;
    for (int p = Ap[k]; p < Ap[k + 1]; ++p) {
      int i = Ai[p];
      if (i == k) {
        D_[k] = Ax[p];
        continue;
      }
      y[i] = Ax[p];
      if (marked[i]) continue;
      int depth = 0;
      for (int t = i; t != -1 && t < k && !marked[t]; t = etree[t]) {
        marked[t] = 1;
        stack[depth++] = t;
      }
      while (depth > 0) y_idx[nnz_y++] = stack[--depth];
    }
    for (int s = nnz_y - 1; s >= 0; --s) {
      const int c = y_idx[s];
      const double yc = y[c];
      for (int p = Lp_[c]; p < next[c]; ++p) y[Li_[p]] -= Lx_[p] * yc;
      const int slot = next[c]++;
      Li_[slot] = k;
      Lx_[slot] = yc * Dinv_[c];
      D_[k] -= yc * Lx_[slot];
      y[c] = 0.0;
      marked[c] = 0;
    }
    if (D_[k] == 0.0 || !std::isfinite(D_[k])) return false;
    Dinv_[k] = 1.0 / D_[k];
  }
  ok_ = true;
  return true;
}

void SparseLDL::solve_in_place(Vector& b) const {
  if (!ok_) throw Error("LDL: solve on a failed factorization");
  if (b.size() != n_) throw DimensionError("LDL: rhs size");
  Vector x(n_);
  for (int k = 0; k < n_; ++k) x[k] = b[perm_[k]];
  for (int i = 0; i < n_; ++i) {
    const double xi = x[i];
    for (int p = Lp_[i]; p < Lp_[i + 1]; ++p) x[Li_[p]] -= Lx_[p] * xi;
  }
  for (int i = 0; i < n_; ++i) x[i] *= Dinv_[i];
  for (int i = n_ - 1; i >= 0; --i) {
    double acc = x[i];
    for (int p = Lp_[i]; p < Lp_[i + 1]; ++p) acc -= Lx_[p] * x[Li_[p]];
    x[i] = acc;
  }
  for (int k = 0; k < n_; ++k) b[perm_[k]] = x[k];
}

SparseMatrix SparseLDL::L() const {
  std::vector<Triplet> t;
  t.reserve(Li_.size() + n_);
  for (int j = 0; j < n_; ++j) {
    t.emplace_back(j, j, 1.0);
    for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) t.emplace_back(Li_[p], j, Lx_[p]);
  }
  SparseMatrix L(n_, n_);
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

namespace {

struct Residuals {
  double diff, k_norm, factor_norm;
};

Residuals reconstruction_parts(const SparseLDL& f, const SparseMatrix& K_upper) {
  const int n = f.dim();
  SparseMatrix full = K_upper.selfadjointView<Eigen::Upper>();
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P(n);
  // C = P' K P with P e_k = e_{perm[k]}
  for (int k = 0; k < n; ++k) P.indices()[k] = f.perm()[k];
  SparseMatrix C = SparseMatrix(P.transpose() * full * P);
  SparseMatrix L = f.L();
  SparseMatrix LDLt = SparseMatrix(L * f.D().asDiagonal() * L.transpose());
  SparseMatrix absL = L.cwiseAbs();
  Vector absD = f.D().cwiseAbs();
  SparseMatrix mag = SparseMatrix(absL * absD.asDiagonal() * absL.transpose());
  return {(C - LDLt).norm(), full.norm(), mag.norm()};
}

}  // namespace

double SparseLDL::reconstruction_error(const SparseMatrix& K_upper) const {
  if (!ok_) return kInf;
  auto r = reconstruction_parts(*this, K_upper);
  return r.diff / (r.k_norm > 0 ? r.k_norm : 1.0);
}

double SparseLDL::backward_error(const SparseMatrix& K_upper) const {
  if (!ok_) return kInf;
  auto r = reconstruction_parts(*this, K_upper);
  return r.diff / (r.factor_norm > 0 ? r.factor_norm : 1.0);
}

void SparseLDL::write(std::ostream& out) const {
  std::int32_t n = n_;
  std::uint8_t ok = ok_ ? 1 : 0;
  put(out, n);
  put(out, ok);
  put_vec(out, perm_);
  put_vec(out, Lp_);
  put_vec(out, Li_);
  put_vec(out, Lx_);
  std::vector<double> d(D_.data(), D_.data() + D_.size());
  put_vec(out, d);
}

void SparseLDL::read(std::istream& in) {
  std::int32_t n = 0;
  std::uint8_t ok = 0;
  get(in, n);
  get(in, ok);
  if (n < 0) throw FormatError("corrupt factor data");
  const std::uint64_t big = std::uint64_t(1) << 34;
  get_vec(in, perm_, static_cast<std::uint64_t>(n));
  get_vec(in, Lp_, static_cast<std::uint64_t>(n) + 1);
  get_vec(in, Li_, big);
  get_vec(in, Lx_, big);
  std::vector<double> d;
  get_vec(in, d, static_cast<std::uint64_t>(n));
  n_ = n;
  ok_ = ok != 0;
  if (static_cast<int>(perm_.size()) != n || static_cast<int>(Lp_.size()) != n + 1 ||
      static_cast<int>(d.size()) != n || Li_.size() != Lx_.size() ||
      Lp_[0] != 0 || static_cast<std::size_t>(Lp_[n]) != Li_.size())
    throw FormatError("inconsistent factor data");
  for (int j = 0; j < n; ++j) {
    if (Lp_[j] > Lp_[j + 1]) throw FormatError("inconsistent factor data");
    for (int p = Lp_[j]; p < Lp_[j + 1]; ++p)
      if (Li_[p] <= j || Li_[p] >= n) throw FormatError("inconsistent factor data");
  }
  std::vector<char> seen(n, 0);
  for (int v : perm_) {
    if (v < 0 || v >= n || seen[v]) throw FormatError("inconsistent factor data");
    seen[v] = 1;
  }
  D_ = Eigen::Map<Vector>(d.data(), n);
  Dinv_ = D_.cwiseInverse();
}

}  // namespace mlopt
