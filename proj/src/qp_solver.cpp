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

#include "mlopt/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <tuple>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Jacobi>
#include <Eigen/QR>

namespace mlopt {

const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::Optimal: return "optimal";
    case QPStatus::Infeasible: return "infeasible";
    case QPStatus::Unbounded: return "unbounded";
    case QPStatus::IterLimit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class RowKind : unsigned char { Ineq, Eq, Skip };

struct System {
  RowMatrix C;
  Vector d;
  std::vector<RowKind> kind;
  Vector row_norm;
};

enum class LoopStatus { Optimal, Unbounded, IterLimit, Stopped };

struct LoopState {
  Vector x;
  std::vector<int> W;
  Vector lambda;  // multipliers aligned with W at termination
  int iterations = 0;
};

// Greedy selection of linearly independent rows, in the order given.
std::vector<int> select_independent(const RowMatrix& C, const std::vector<int>& candidates) {
  const Eigen::Index n = C.cols();
  Matrix basis(n, std::min<Eigen::Index>(n, static_cast<Eigen::Index>(candidates.size())));
  int rank = 0;
  std::vector<int> chosen;
  std::vector<char> seen(C.rows(), 0);
  for (int i : candidates) {
    if (seen[i]) continue;
    seen[i] = 1;
    if (rank == n) break;
    Vector v = C.row(i).transpose();
    double nv = v.norm();
    if (nv == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (rank > 0) v -= basis.leftCols(rank) * (basis.leftCols(rank).transpose() * v);
    }
    double nr = v.norm();
    if (nr > 1e-9 * nv) {
      basis.col(rank++) = v / nr;
      chosen.push_back(i);
    }
  }
  return chosen;
}

// QR factorization of the working-set matrix [c_W1 ... c_Ww], kept up to date
// as rows enter and leave: a Householder step per addition, Givens sweeps per
// removal. Refactorized from scratch every kRefresh updates to bound drift.
class WorkingQR {
 public:
  static constexpr int kRefresh = 50;

  void reset(const RowMatrix& C, const std::vector<int>& W) {
    const Eigen::Index n = C.cols();
    const auto w = static_cast<Eigen::Index>(W.size());
    R_.setZero(n, std::max<Eigen::Index>(w, 8));
    updates_ = 0;
    w_ = w;
    if (w == 0) {
      Q_.setIdentity(n, n);
      return;
    }
    Matrix CT(n, w);
    for (Eigen::Index k = 0; k < w; ++k) CT.col(k) = C.row(W[k]).transpose();
    Eigen::HouseholderQR<Matrix> qr(CT);
    Q_ = qr.householderQ();
    R_.leftCols(w) = qr.matrixQR().triangularView<Eigen::Upper>();
  }

  void add(const RowMatrix& C, const std::vector<int>& W) {
    if (++updates_ >= kRefresh) return reset(C, W);
    const Eigen::Index n = Q_.rows(), w = w_;
    if (R_.cols() <= w) R_.conservativeResize(Eigen::NoChange, 2 * (w + 1));
    Vector u = Q_.transpose() * C.row(W.back()).transpose();
    R_.col(w).setZero();
    R_.col(w).head(w) = u.head(w);
    if (w < n) {
      double tau = 0.0, beta = 0.0;
      Vector tail = u.tail(n - w);
      Vector essential(n - w - 1);
      tail.makeHouseholder(essential, tau, beta);
      Vector work(n);
      Q_.rightCols(n - w).applyHouseholderOnTheRight(essential, tau, work.data());
      R_(w, w) = beta;
    }
    ++w_;
  }

  void remove(Eigen::Index k) {
    ++updates_;
    const Eigen::Index w = w_;
    for (Eigen::Index j = k; j + 1 < w; ++j) R_.col(j) = R_.col(j + 1);
    R_.col(w - 1).setZero();
    --w_;
    for (Eigen::Index j = k; j < w_; ++j) {
      Eigen::JacobiRotation<double> G;
      G.makeGivens(R_(j, j), R_(j + 1, j));
      R_.middleCols(j, w_ - j).applyOnTheLeft(j, j + 1, G.adjoint());
      R_(j + 1, j) = 0.0;
      Q_.applyOnTheRight(j, j + 1, G);
    }
  }

  bool stale() const { return updates_ >= kRefresh; }
  const Matrix& Q() const { return Q_; }
  auto R() const { return R_.topLeftCorner(w_, w_); }

 private:
  Matrix Q_, R_;
  Eigen::Index w_ = 0;
  int updates_ = 0;
};

// Primal active-set iterations from a feasible point. H == nullptr means a
// linear objective.
LoopStatus active_set_loop(const System& sys, const Matrix* H, const Vector& c, LoopState& st,
                           int max_iter, const QPOptions& opt,
                           const std::function<bool(const Vector&)>& stop) {
  const Eigen::Index n = sys.C.cols();
  const Eigen::Index rows = sys.C.rows();
  std::vector<char> in_w(rows, 0);
  for (int i : st.W) in_w[i] = 1;
  int degenerate = 0;
  WorkingQR qr;
  qr.reset(sys.C, st.W);
  Vector slack(rows), Cp(rows);

  while (true) {
    if (st.iterations >= max_iter) return LoopStatus::IterLimit;
    ++st.iterations;
    const Eigen::Index w = static_cast<Eigen::Index>(st.W.size());
    Vector g = c;
    if (H) g.noalias() += (*H) * st.x;
    const double gscale = 1.0 + g.lpNorm<Eigen::Infinity>();

    if (qr.stale()) qr.reset(sys.C, st.W);
    const Matrix& Q = qr.Q();
    const Eigen::Index nz = n - w;
    Vector gz = nz > 0 ? Vector(Q.rightCols(nz).transpose() * g) : Vector();
    Vector p_step;
    bool unbounded_step = true;
    bool stationary = nz == 0 || gz.lpNorm<Eigen::Infinity>() <= opt.opt_tol * gscale;

    if (!stationary) {
      const auto Z = Q.rightCols(nz);
      Vector& p = p_step;
      unbounded_step = true;
      if (H) {
        Matrix HZ = (*H) * Z;
        Matrix Hz = Z.transpose() * HZ;
        Eigen::LDLT<Matrix> ldlt(Hz);
        double dmax = std::max(1.0, Hz.diagonal().cwiseAbs().maxCoeff());
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            ldlt.vectorD().minCoeff() > 1e-11 * dmax) {
          p = Z * (-ldlt.solve(gz));
          unbounded_step = false;
        } else {
          Eigen::SelfAdjointEigenSolver<Matrix> es(Hz);
          const Vector& ev = es.eigenvalues();
          const Matrix& V = es.eigenvectors();
          double thr = 1e-10 * std::max(1.0, ev.maxCoeff());
          Vector gv = V.transpose() * gz;
          double null_grad = 0.0;
          for (Eigen::Index k = 0; k < ev.size(); ++k)
            if (ev[k] <= thr) null_grad = std::max(null_grad, std::abs(gv[k]));
          Vector u = Vector::Zero(nz);
          if (null_grad > opt.opt_tol * gscale) {
            for (Eigen::Index k = 0; k < ev.size(); ++k)
              if (ev[k] <= thr) u -= gv[k] * V.col(k);
          } else {
            for (Eigen::Index k = 0; k < ev.size(); ++k)
              if (ev[k] > thr) u -= (gv[k] / ev[k]) * V.col(k);
            unbounded_step = false;
          }
          p = Z * u;
        }
      } else {
        p = -(Z * gz);
      }

      const double pnorm = p.norm();
      if (pnorm == 0.0) stationary = true;
    }
    if (!stationary) {
      const double pnorm = p_step.norm();
      const Vector& p = p_step;
      slack.noalias() = sys.d - sys.C * st.x;
      Cp.noalias() = sys.C * p;
      double alpha = unbounded_step ? kInf : 1.0;
      int block = -1;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (in_w[i] || sys.kind[i] != RowKind::Ineq) continue;
        if (Cp[i] <= 1e-12 * sys.row_norm[i] * pnorm) continue;
        double a = std::max(slack[i], 0.0) / Cp[i];
        if (a < alpha) {
          alpha = a;
          block = static_cast<int>(i);
        }
      }
      if (block < 0 && unbounded_step) return LoopStatus::Unbounded;
      st.x.noalias() += alpha * p;
      if (block >= 0) {
        st.W.push_back(block);
        in_w[block] = 1;
        qr.add(sys.C, st.W);
      }
      degenerate = alpha <= 1e-14 ? degenerate + 1 : 0;
      if (stop && stop(st.x)) return LoopStatus::Stopped;
      continue;
    }

    if (w == 0) {
      st.lambda = Vector();
      return LoopStatus::Optimal;
    }
    Vector rhs = -(Q.leftCols(w).transpose() * g);
    Vector lambda = qr.R().triangularView<Eigen::Upper>().solve(rhs);
    const bool bland = degenerate >= opt.bland_after;
    const double tol = opt.opt_tol * gscale;
    int drop = -1;
    double most_negative = -tol;
    for (Eigen::Index k = 0; k < w; ++k) {
      if (sys.kind[st.W[k]] != RowKind::Ineq) continue;
      if (lambda[k] >= -tol) continue;
      if (bland) {
        if (drop < 0 || st.W[k] < st.W[drop]) drop = static_cast<int>(k);
      } else if (lambda[k] < most_negative) {
        most_negative = lambda[k];
        drop = static_cast<int>(k);
      }
    }
    if (drop < 0) {
      st.lambda = lambda;
      return LoopStatus::Optimal;
    }
    in_w[st.W[drop]] = 0;
    st.W.erase(st.W.begin() + drop);
    qr.remove(drop);
  }
}

}  // namespace

ActiveSetQP::ActiveSetQP(const InstanceData& inst)
    : inst_(&inst), n_(inst.n), m_(inst.m), mirror_(inst.m, -1) {
  Matrix Pu = Matrix(inst.P);
  P_ = Pu.selfadjointView<Eigen::Upper>();
  has_quadratic_ = P_.cwiseAbs().maxCoeff() > 0.0;
  A_ = RowMatrix(inst.A);

  // Detect (a, b), (-a, -b) pairs.
  std::map<std::vector<std::pair<int, double>>, std::vector<int>> by_pattern;
  for (int i = 0; i < m_; ++i) {
    std::vector<std::pair<int, double>> key;
    for (SparseRowMatrix::InnerIterator it(inst.A, i); it; ++it)
      if (it.value() != 0.0) key.emplace_back(it.col(), it.value());
    if (key.empty()) continue;
    double lead = key.front().second;
    double sign = lead > 0 ? 1.0 : -1.0;
    for (auto& kv : key) kv.second *= sign;
    key.emplace_back(-1, sign * inst.b[i]);
    by_pattern[key].push_back(sign > 0 ? i + 1 : -(i + 1));
  }
  // Keys hold the sign-normalized row and rhs, so a row and its negation share
  // a key and differ only in the sign of their leading coefficient.
  for (auto& [key, ids] : by_pattern) {
    std::vector<int> pos, neg;
    for (int id : ids) (id > 0 ? pos : neg).push_back(std::abs(id) - 1);
    std::size_t k = std::min(pos.size(), neg.size());
    for (std::size_t t = 0; t < k; ++t) {
      mirror_[pos[t]] = neg[t];
      mirror_[neg[t]] = pos[t];
    }
  }

  for (int i = 0; i < m_; ++i)
    if (mirror_[i] > i) eq_rows_.push_back(i);
  const int e = static_cast<int>(eq_rows_.size());
  if (e > 0) {
    Matrix E(e, n_);
    Vector eb(e);
    for (int k = 0; k < e; ++k) {
      E.row(k) = A_.row(eq_rows_[k]);
      eb[k] = inst.b[eq_rows_[k]];
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(E.transpose());
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    Matrix Q = qr.householderQ();
    eq_basis_ = Q.leftCols(rank);
    Z_ = Q.rightCols(n_ - rank);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(E);
    cod.setThreshold(1e-10);
    x_p_ = cod.solve(eb);
    eq_consistent_ = (E * x_p_ - eb).lpNorm<Eigen::Infinity>() <=
                     1e-9 * (1.0 + eb.lpNorm<Eigen::Infinity>());
    Eigen::CompleteOrthogonalDecomposition<Matrix> codT(E.transpose());
    codT.setThreshold(1e-10);
    eq_lsq_ = codT.pseudoInverse();
  } else {
    x_p_ = Vector::Zero(n_);
    Z_ = Matrix::Identity(n_, n_);
  }
  const Eigen::Index nr = Z_.cols();
  H_r_ = Z_.transpose() * P_ * Z_;
  c_r_ = Z_.transpose() * (P_ * x_p_ + inst.q);

  reduced_of_row_.assign(m_, -1);
  std::vector<int> keep;
  for (int i = 0; i < m_; ++i) {
    if (mirror_[i] >= 0) continue;
    keep.push_back(i);
  }
  C_r_ = RowMatrix(keep.size(), nr);
  d_r_.resize(keep.size());
  int r = 0;
  for (int i : keep) {
    Vector row = (A_.row(i) * Z_).transpose();
    double slack = inst.b[i] - A_.row(i).dot(x_p_);
    if (row.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + A_.row(i).lpNorm<Eigen::Infinity>())) {
      // Fully determined by the equalities.
      if (slack < -1e-9 * (1.0 + std::abs(inst.b[i]))) base_infeasible_ = true;
      continue;
    }
    C_r_.row(r) = row.transpose();
    d_r_[r] = slack;
    reduced_of_row_[i] = r;
    row_of_reduced_.push_back(i);
    ++r;
  }
  C_r_.conservativeResize(r, nr);
  d_r_.conservativeResize(r);
}

QPResult ActiveSetQP::solve(std::span<const int> equality_rows, std::span<const FixedValue> fixed,
                            std::span<const VarBound> bounds, const QPOptions& opts,
                            const QPWarmStart* warm) const {
  QPResult result;
  result.duals = Vector::Zero(m_);
  result.var_duals = Vector::Zero(n_);
  const Eigen::Index nr = Z_.cols();

  // Extra rows in reduced coordinates: fixings, bounds, requested equalities.
  struct Extra {
    int var;      // coordinate for fixings and bounds, -1 for base rows
    double sign;  // +1 upper side, -1 lower side
    int base_row;
  };
  std::vector<Extra> extras;
  std::vector<RowKind> extra_kind;
  std::vector<double> extra_rhs;
  bool infeasible = base_infeasible_ || !eq_consistent_;
  auto check_tol = [&](double rhs) { return opts.feas_tol * (1.0 + std::abs(rhs)); };
  auto add_unit = [&](int var, double sign, double rhs, RowKind kind) {
    // sign * x_var <= rhs (or == for Eq)
    double slack = rhs - sign * x_p_[var];
    if (Z_.row(var).lpNorm<Eigen::Infinity>() <= 1e-12) {
      if (slack < -check_tol(rhs) || (kind == RowKind::Eq && slack > check_tol(rhs)))
        infeasible = true;
      return;
    }
    extras.push_back({var, sign, -1});
    extra_kind.push_back(kind);
    extra_rhs.push_back(slack);
  };
  for (const auto& f : fixed) {
    if (f.index < 0 || f.index >= n_) throw DimensionError("fixed index out of range");
    add_unit(f.index, 1.0, f.value, RowKind::Eq);
  }
  for (const auto& bd : bounds) {
    if (bd.index < 0 || bd.index >= n_) throw DimensionError("bound index out of range");
    if (std::isfinite(bd.upper)) add_unit(bd.index, 1.0, bd.upper, RowKind::Ineq);
    if (std::isfinite(bd.lower)) add_unit(bd.index, -1.0, -bd.lower, RowKind::Ineq);
  }
  std::vector<char> base_eq(C_r_.rows(), 0);
  for (int i : equality_rows) {
    if (i < 0 || i >= m_) throw DimensionError("equality row out of range");
    if (mirror_[i] >= 0) continue;
    int r = reduced_of_row_[i];
    if (r >= 0) {
      base_eq[r] = 1;
    } else if (std::abs(inst_->b[i] - A_.row(i).dot(x_p_)) > check_tol(inst_->b[i])) {
      infeasible = true;
    }
  }
  if (infeasible) {
    result.status = QPStatus::Infeasible;
    result.x = x_p_;
    return result;
  }

  const int base = static_cast<int>(C_r_.rows());
  const int rows = base + static_cast<int>(extras.size());
  System sys;
  sys.C.resize(rows, nr);
  sys.C.topRows(base) = C_r_;
  sys.d.resize(rows);
  sys.d.head(base) = d_r_;
  sys.kind.assign(rows, RowKind::Ineq);
  for (int r = 0; r < base; ++r)
    if (base_eq[r]) sys.kind[r] = RowKind::Eq;
  for (std::size_t k = 0; k < extras.size(); ++k) {
    sys.C.row(base + k) = extras[k].sign * Z_.row(extras[k].var);
    sys.d[base + k] = extra_rhs[k];
    sys.kind[base + k] = extra_kind[k];
  }
  sys.row_norm = sys.C.rowwise().norm();

  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 50 * (n_ + rows);

  Vector y0 = (warm && warm->x.size() == n_) ? Vector(Z_.transpose() * (warm->x - x_p_))
                                             : Vector(Vector::Zero(nr));
  Vector res0 = sys.C * y0 - sys.d;
  auto row_tol = [&](int i) { return opts.feas_tol * (1.0 + std::abs(sys.d[i])); };
  bool feasible = true;
  for (int i = 0; i < rows; ++i) {
    if (sys.kind[i] == RowKind::Ineq && res0[i] > row_tol(i)) feasible = false;
    if (sys.kind[i] == RowKind::Eq && std::abs(res0[i]) > row_tol(i)) feasible = false;
  }

  std::vector<int> eq_rows;
  for (int i = 0; i < rows; ++i)
    if (sys.kind[i] == RowKind::Eq) eq_rows.push_back(i);
  std::vector<int> tight_candidates;
  if (warm) {
    for (int i : warm->active_rows) {
      if (i < 0 || i >= m_) continue;
      int r = reduced_of_row_[i];
      if (r >= 0 && sys.kind[r] == RowKind::Ineq && std::abs(res0[r]) <= row_tol(r))
        tight_candidates.push_back(r);
    }
  }
  for (int i = base; i < rows; ++i)
    if (sys.kind[i] == RowKind::Ineq && std::abs(res0[i]) <= row_tol(i))
      tight_candidates.push_back(i);

  LoopState st;
  st.x = y0;
  int iterations = 0;

  if (!feasible) {
    System s1;
    s1.C = RowMatrix::Zero(rows + 1, nr + 1);
    s1.C.topLeftCorner(rows, nr) = sys.C;
    s1.d.resize(rows + 1);
    s1.d.head(rows) = sys.d;
    s1.d[rows] = 0.0;
    s1.kind = sys.kind;
    s1.kind.push_back(RowKind::Ineq);
    for (int i = 0; i < rows; ++i) {
      if (sys.kind[i] == RowKind::Ineq && res0[i] > row_tol(i)) s1.C(i, nr) = -res0[i];
      if (sys.kind[i] == RowKind::Eq && std::abs(res0[i]) > row_tol(i)) s1.C(i, nr) = -res0[i];
    }
    s1.C(rows, nr) = -1.0;
    s1.row_norm = s1.C.rowwise().norm();
    std::vector<int> cand = eq_rows;
    cand.insert(cand.end(), tight_candidates.begin(), tight_candidates.end());
    LoopState p1;
    p1.x.resize(nr + 1);
    p1.x.head(nr) = y0;
    p1.x[nr] = 1.0;
    p1.W = select_independent(s1.C, cand);
    Vector c1 = Vector::Zero(nr + 1);
    c1[nr] = 1.0;
    const Eigen::Index t_index = nr;
    auto reached = [t_index](const Vector& x) { return x[t_index] <= 1e-13; };
    LoopStatus s = active_set_loop(s1, nullptr, c1, p1, max_iter, opts, reached);
    iterations = p1.iterations;
    if (s == LoopStatus::IterLimit) {
      result.status = QPStatus::IterLimit;
      result.x = x_p_ + Z_ * p1.x.head(nr);
      result.iterations = iterations;
      return result;
    }
    double worst = res0.cwiseAbs().maxCoeff();
    if (s != LoopStatus::Stopped && p1.x[nr] * worst > opts.feas_tol * 10.0) {
      result.status = QPStatus::Infeasible;
      result.x = x_p_ + Z_ * p1.x.head(nr);
      result.iterations = iterations;
      return result;
    }
    st.x = p1.x.head(nr);
    tight_candidates.clear();
    for (int i : p1.W)
      if (i < rows && sys.kind[i] == RowKind::Ineq) tight_candidates.push_back(i);
  }

  std::vector<int> cand = eq_rows;
  cand.insert(cand.end(), tight_candidates.begin(), tight_candidates.end());
  st.W = select_independent(sys.C, cand);
  st.iterations = iterations;
  LoopStatus s = active_set_loop(sys, has_quadratic_ ? &H_r_ : nullptr, c_r_, st, max_iter, opts, {});
  result.iterations = st.iterations;
  result.x = x_p_ + Z_ * st.x;
  if (s == LoopStatus::IterLimit) {
    result.status = QPStatus::IterLimit;
    return result;
  }
  if (s == LoopStatus::Unbounded) {
    result.status = QPStatus::Unbounded;
    return result;
  }
  result.status = QPStatus::Optimal;
  for (std::size_t k = 0; k < st.W.size(); ++k) {
    int i = st.W[k];
    double lam = st.lambda[k];
    if (i < base) {
      int row = row_of_reduced_[i];
      result.duals[row] += lam;
      result.active_rows.push_back(row);
    } else {
      const auto& e = extras[i - base];
      result.var_duals[e.var] += lam * e.sign;
    }
  }
  // Equality multipliers from the residual of the full stationarity system.
  if (!eq_rows_.empty()) {
    Vector g = P_ * result.x + inst_->q + A_.transpose() * result.duals + result.var_duals;
    Vector lam = -(eq_lsq_ * g);
    for (std::size_t k = 0; k < eq_rows_.size(); ++k) {
      int i = eq_rows_[k];
      if (lam[k] >= 0) {
        result.duals[i] = lam[k];
        result.active_rows.push_back(i);
      } else {
        result.duals[mirror_[i]] = -lam[k];
        result.active_rows.push_back(mirror_[i]);
      }
    }
  }
  std::sort(result.active_rows.begin(), result.active_rows.end());
  result.active_rows.erase(std::unique(result.active_rows.begin(), result.active_rows.end()),
                           result.active_rows.end());
  result.objective = inst_->objective(result.x);
  return result;
}

QPResult solve_qp(const InstanceData& inst, std::span<const int> equality_rows,
                  std::span<const FixedValue> fixed, std::span<const VarBound> bounds,
                  const QPOptions& opts) {
  ActiveSetQP qp(inst);
  return qp.solve(equality_rows, fixed, bounds, opts);
}

double stationarity_residual(const InstanceData& inst, const QPResult& res) {
  Vector r = inst.P.selfadjointView<Eigen::Upper>() * res.x + inst.q;
  r += inst.A.transpose() * res.duals;
  r += res.var_duals;
  return r.lpNorm<Eigen::Infinity>();
}

}  // namespace mlopt
