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

#include "mlopt/benchmarks.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace mlopt {

using Terms = ProblemBuilder::Terms;

// ---------------------------------------------------------------------------
// Fuel cell

ParametricMIQO build_fuel_cell(const FuelCellConfig& c) {
  if (c.T < 1) throw DimensionError("fuel cell: T must be >= 1");
  if (!(c.E_min < c.E_max) || c.P_max <= 0 || c.tau <= 0 || c.n_sw < 0)
    throw DimensionError("fuel cell: inconsistent configuration");
  const int T = c.T;
  const FuelCellLayout L{T};
  ProblemBuilder b(L.p_dim());
  b.add_variables(T + 1);      // E
  b.add_variables(T);          // P
  b.add_variables(T + 1, true);  // z
  b.add_variables(T);            // w
  b.add_variables(T, true);      // d
  b.add_variables(T + 1);        // s
  const int pE = 0, pz = 1, ps = 2, pdp = 3, pload = 3 + T;

  for (int t = 0; t < T; ++t) {
    b.add_quadratic(L.P(t), L.P(t), 2.0 * c.alpha);
    b.add_linear(L.P(t), c.beta);
    b.add_linear(L.z(t), c.gamma);
  }

  b.add_eq({{L.E(0), 1.0}}, 0.0, {{pE, 1.0}});
  b.add_eq({{L.z(0), 1.0}}, 0.0, {{pz, 1.0}});
  b.add_eq({{L.s(0), 1.0}}, 0.0, {{ps, 1.0}});
  for (int t = 0; t < T; ++t)
    b.add_eq({{L.E(t + 1), 1.0}, {L.E(t), -1.0}, {L.P(t), -c.tau}}, 0.0, {{pload + t, -c.tau}});
  for (int t = 0; t <= T; ++t) b.add_bounds(L.E(t), c.E_min, c.E_max);
  for (int t = 0; t < T; ++t) {
    b.add_le({{L.P(t), -1.0}}, 0.0);
    b.add_le({{L.P(t), 1.0}, {L.z(t), -c.P_max}}, 0.0);
  }
  for (int t = 0; t < T; ++t)
    b.add_eq({{L.z(t + 1), 1.0}, {L.z(t), -1.0}, {L.w(t), -1.0}}, 0.0);
  for (int t = 0; t < T; ++t)
    b.add_eq({{L.s(t + 1), 1.0}, {L.s(t), -1.0}, {L.d(t), -1.0}}, 0.0, {{pdp + t, -1.0}});
  for (int t = 0; t <= T; ++t) b.add_le({{L.s(t), 1.0}}, c.n_sw);
  for (int t = 0; t < T; ++t)
    for (int r = 0; r < 4; ++r) {
      Terms row;
      const int vars[3] = {L.w(t), L.z(t), L.d(t)};
      for (int j = 0; j < 3; ++j)
        if (c.G[r][j] != 0.0) row.emplace_back(vars[j], c.G[r][j]);
      b.add_le(row, c.h[r]);
    }
  for (int t = 0; t <= T; ++t) b.add_bounds(L.z(t), 0.0, 1.0);
  for (int t = 0; t < T; ++t) b.add_bounds(L.d(t), 0.0, 1.0);
  for (int t = 0; t < T; ++t) b.add_bounds(L.w(t), -1.0, 1.0);

  ParametricMIQO pr = b.build();
  pr.name = "fuel_cell_T" + std::to_string(T);
  return pr;
}

int FuelCellState::s() const { return std::accumulate(d_past.begin(), d_past.end(), 0); }

Vector fuel_cell_theta(const FuelCellConfig& c, const FuelCellState& st,
                       const std::vector<double>& load) {
  const int T = c.T;
  if (static_cast<int>(st.d_past.size()) != T || static_cast<int>(load.size()) < T)
    throw DimensionError("fuel cell theta: history or load window too short");
  Vector th(2 * T + 3);
  th[0] = st.E;
  th[1] = st.z;
  th[2] = st.s();
  for (int t = 0; t < T; ++t) {
    th[3 + t] = st.d_past[t];
    th[3 + T + t] = load[t];
  }
  return th;
}

Vector fuel_cell_project(const FuelCellConfig& c, const Vector& theta) {
  const int T = c.T;
  if (theta.size() != 2 * T + 3) throw DimensionError("fuel cell theta has wrong size");
  Vector th = theta;
  th[0] = std::clamp(th[0], c.E_min, c.E_max);
  th[1] = std::clamp(std::round(th[1]), 0.0, 1.0);
  // Keep the most recent switch-ons when the window exceeds the limit.
  int count = 0;
  for (int t = T - 1; t >= 0; --t) {
    double v = std::clamp(std::round(th[3 + t]), 0.0, 1.0);
    if (v > 0 && count >= c.n_sw) v = 0;
    count += static_cast<int>(v);
    th[3 + t] = v;
  }
  th[2] = count;
  for (int t = 0; t < T; ++t) th[3 + T + t] = std::clamp(th[3 + T + t], 0.0, c.P_max);
  return th;
}

std::vector<double> fuel_cell_load_profile(const FuelCellConfig& c, int length,
                                           std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, step);
  std::vector<double> out(std::max(length, 0));
  double v = 0.5 * c.P_max;
  for (auto& x : out) {
    x = v;
    v = std::clamp(v + nd(rng), 0.0, c.P_max);
  }
  return out;
}

std::vector<Vector> fuel_cell_rollout(const FuelCellConfig& c, int steps, std::uint64_t seed,
                                      const std::function<Vector(const Vector&)>& solve) {
  const int T = c.T;
  const FuelCellLayout L{T};
  auto load = fuel_cell_load_profile(c, steps + T, seed);
  auto nominal = [&] {
    FuelCellState s;
    s.E = c.E_init;
    s.z = c.z_init;
    s.d_past.assign(T, 0);
    for (int t = 0; t < std::min(c.s_init, T); ++t) s.d_past[T - 1 - t] = 1;
    return s;
  };
  FuelCellState st = nominal();
  std::vector<Vector> out;
  out.reserve(steps);
  for (int k = 0; k < steps; ++k) {
    std::vector<double> window(load.begin() + k, load.begin() + k + T);
    Vector th = fuel_cell_theta(c, st, window);
    out.push_back(th);
    Vector x = solve(th);
    if (x.size() == 0) {
      st = nominal();
      continue;
    }
    st.E = std::clamp(x[L.E(1)], c.E_min, c.E_max);
    st.z = static_cast<int>(std::lround(x[L.z(1)]));
    st.d_past.erase(st.d_past.begin());
    st.d_past.push_back(static_cast<int>(std::lround(x[L.d(0)])));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Portfolio

ParametricMIQO build_portfolio(const PortfolioConfig& c) {
  if (c.n_assets < 1 || c.factors < 1)
    throw DimensionError("portfolio: need at least one asset and one factor");
  if (c.cardinality < 1) throw DimensionError("portfolio: cardinality must be >= 1");
  if (c.big_m <= 0) throw DimensionError("portfolio: big-M must be positive");
  const int N = c.n_assets, k = c.factors;
  const PortfolioLayout L{N, k};
  const int off_wprev = 0, off_r = N + 1, off_D = 2 * (N + 1), off_S = 3 * (N + 1);
  const int off_F = off_S + k * (k + 1) / 2;
  ProblemBuilder b(L.p_dim());
  b.add_variables(N + 1);      // w
  b.add_variables(k);          // f
  b.add_variables(N, true);    // y
  b.add_variables(N + 1);      // u
  b.add_variables(N + 1);      // t

  for (int i = 0; i <= N; ++i) {
    b.add_linear_param(L.w(i), off_r + i, -1.0);
    b.add_quadratic_param(L.w(i), L.w(i), off_D + i, 2.0 * c.gamma);
    b.add_linear(L.u(i), c.borrow);
    b.add_linear(L.t(i), c.trade);
  }
  for (int a = 0, idx = 0; a < k; ++a)
    for (int bb = a; bb < k; ++bb, ++idx)
      b.add_quadratic_param(L.f(a), L.f(bb), off_S + idx, 2.0 * c.gamma);

  Terms budget;
  for (int i = 0; i <= N; ++i) budget.emplace_back(L.w(i), 1.0);
  b.add_eq(budget, 1.0);
  for (int j = 0; j < k; ++j) {
    ProblemBuilder::ParamTerms coeff;
    for (int i = 0; i <= N; ++i) coeff.emplace_back(L.w(i), off_F + i * k + j, -1.0);
    b.add_eq({{L.f(j), 1.0}}, 0.0, {}, coeff);
  }
  for (int i = 0; i < N; ++i) {
    b.add_le({{L.w(i), 1.0}, {L.y(i), -c.big_m}}, 0.0);
    b.add_le({{L.w(i), -1.0}, {L.y(i), -c.big_m}}, 0.0);
  }
  Terms card;
  for (int i = 0; i < N; ++i) card.emplace_back(L.y(i), 1.0);
  b.add_le(card, c.cardinality);
  for (int i = 0; i < N; ++i) b.add_bounds(L.y(i), 0.0, 1.0);
  for (int i = 0; i <= N; ++i) {
    b.add_le({{L.w(i), -1.0}, {L.u(i), -1.0}}, 0.0);
    b.add_le({{L.u(i), -1.0}}, 0.0);
  }
  for (int i = 0; i <= N; ++i) {
    b.add_le({{L.w(i), 1.0}, {L.t(i), -1.0}}, 0.0, {{off_wprev + i, 1.0}});
    b.add_le({{L.w(i), -1.0}, {L.t(i), -1.0}}, 0.0, {{off_wprev + i, -1.0}});
  }
  ParametricMIQO pr = b.build();
  pr.name = "portfolio_N" + std::to_string(N) + "_k" + std::to_string(k) + "_c" +
            std::to_string(c.cardinality);
  return pr;
}

namespace {

struct PortfolioBlocks {
  int N, k;
  int wprev() const { return 0; }
  int r() const { return N + 1; }
  int D() const { return 2 * (N + 1); }
  int S() const { return 3 * (N + 1); }
  int F() const { return S() + k * (k + 1) / 2; }
  int end() const { return F() + (N + 1) * k; }
};

Vector pack_portfolio(const PortfolioBlocks& B, const Vector& wprev, const Vector& r,
                      const Vector& D, const Matrix& S, const Matrix& F) {
  Vector th(B.end());
  th.segment(B.wprev(), B.N + 1) = wprev;
  th.segment(B.r(), B.N + 1) = r;
  th.segment(B.D(), B.N + 1) = D;
  for (int a = 0, idx = 0; a < B.k; ++a)
    for (int b = a; b < B.k; ++b, ++idx) th[B.S() + idx] = S(a, b);
  for (int i = 0; i <= B.N; ++i)
    for (int j = 0; j < B.k; ++j) th[B.F() + i * B.k + j] = F(i, j);
  return th;
}

}  // namespace

std::vector<Vector> portfolio_trajectory(const PortfolioConfig& c, int steps) {
  const int N = c.n_assets, k = c.factors;
  const PortfolioBlocks B{N, k};
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  Matrix F = Matrix::Zero(N + 1, k);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < k; ++j) F(i, j) = nd(rng) / std::sqrt(double(k));
  Matrix Lf(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) Lf(a, b) = 0.003 * nd(rng);
  Matrix S = Lf * Lf.transpose() + 1e-4 * Matrix::Identity(k, k);
  Vector D(N + 1);
  for (int i = 0; i < N; ++i) D[i] = 1e-4 * (1.0 + 3.0 * ud(rng));
  D[N] = 1e-8;
  const double cash_rate = 1e-4;
  const double drift = 3e-4;
  const double alpha = c.info_ratio * c.info_ratio;
  Matrix Lchol = Eigen::LLT<Matrix>(S).matrixL();

  Vector wprev = Vector::Zero(N + 1);
  wprev[N] = 1.0;
  std::vector<Vector> out;
  out.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    // The risk model is re-estimated every 21 steps by drifting the loadings.
    if (t > 0 && t % 21 == 0)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < k; ++j) F(i, j) += 0.05 * nd(rng) / std::sqrt(double(k));
    Vector fret(k);
    for (int j = 0; j < k; ++j) fret[j] = nd(rng);
    fret = Lchol * fret;
    Vector r(N + 1), rhat(N + 1);
    for (int i = 0; i < N; ++i) {
      r[i] = drift + F.row(i).dot(fret) + std::sqrt(D[i]) * nd(rng);
      double sig2 = F.row(i) * S * F.row(i).transpose() + D[i];
      double noise = std::sqrt(sig2 * (1.0 / alpha - 1.0)) * nd(rng);
      rhat[i] = alpha * (r[i] + noise);
    }
    r[N] = rhat[N] = cash_rate;
    out.push_back(pack_portfolio(B, wprev, rhat, D, S, F));

    // Next holdings: half in the best c forecasts, half in cash.
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return rhat[a] > rhat[b]; });
    wprev.setZero();
    const int c_eff = std::min(c.cardinality, N);
    for (int j = 0; j < c_eff; ++j) wprev[idx[j]] = 0.5 / c_eff;
    wprev[N] = 0.5;
  }
  return out;
}

Vector portfolio_project(const PortfolioConfig& c, const Vector& theta) {
  const PortfolioBlocks B{c.n_assets, c.factors};
  if (theta.size() != B.end()) throw DimensionError("portfolio theta has wrong size");
  Vector th = theta;
  for (int i = 0; i <= B.N; ++i) th[B.D() + i] = std::max(th[B.D() + i], 1e-10);
  Matrix S(B.k, B.k);
  for (int a = 0, idx = 0; a < B.k; ++a)
    for (int b = a; b < B.k; ++b, ++idx) S(a, b) = S(b, a) = th[B.S() + idx];
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  Vector ev = es.eigenvalues().cwiseMax(0.0);
  S = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  for (int a = 0, idx = 0; a < B.k; ++a)
    for (int b = a; b < B.k; ++b, ++idx) th[B.S() + idx] = S(a, b);
  return th;
}

// ---------------------------------------------------------------------------
// Motion planning

ParametricMIQO build_motion(const MotionConfig& c) {
  const int dim = c.dim, T = c.T;
  if (dim < 1 || T < 1) throw DimensionError("motion: dim and T must be >= 1");
  auto sized = [&](const std::vector<double>& v) { return static_cast<int>(v.size()) == dim; };
  if (!sized(c.p_des) || !sized(c.p_min) || !sized(c.p_max))
    throw DimensionError("motion: box or target has wrong dimension");
  const int n_obs = static_cast<int>(c.obstacles.size());
  std::vector<double> M(dim);
  for (int j = 0; j < dim; ++j) {
    if (!(c.p_min[j] < c.p_max[j])) throw DimensionError("motion: empty position box");
    M[j] = c.big_m > 0 ? c.big_m : (c.p_max[j] - c.p_min[j]) + 1.0;
  }
  for (const auto& o : c.obstacles) {
    if (!sized(o.lower) || !sized(o.upper)) throw DimensionError("motion: obstacle dimension");
    for (int j = 0; j < dim; ++j) {
      if (!(o.lower[j] < o.upper[j]) || o.lower[j] < c.p_min[j] || o.upper[j] > c.p_max[j])
        throw DimensionError("motion: obstacle outside the position box");
      // Each side must be deactivatable anywhere in the box.
      if (o.upper[j] - M[j] > c.p_min[j] || o.lower[j] + M[j] < c.p_max[j])
        throw ContractViolation("motion: big-M too small to deactivate obstacle rows");
    }
  }
  const MotionLayout L{dim, T, n_obs};
  ProblemBuilder b(dim);
  b.add_variables(2 * (T + 1) * dim + T * dim);
  b.add_variables(2 * dim * n_obs * (T + 1), true);

  double r = 0.0;
  for (int t = 0; t <= T; ++t)
    for (int j = 0; j < dim; ++j) {
      b.add_quadratic(L.p(t, j), L.p(t, j), 2.0);
      b.add_linear(L.p(t, j), -2.0 * c.p_des[j]);
      r += c.p_des[j] * c.p_des[j];
    }
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < dim; ++j) b.add_quadratic(L.u(t, j), L.u(t, j), 2.0 * c.gamma);
  b.add_constant(r);

  for (int j = 0; j < dim; ++j) b.add_eq({{L.p(0, j), 1.0}}, 0.0, {{j, 1.0}});
  for (int j = 0; j < dim; ++j) b.add_eq({{L.v(0, j), 1.0}}, 0.0);
  const double tau = c.tau;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < dim; ++j) {
      b.add_eq({{L.p(t + 1, j), 1.0}, {L.p(t, j), -1.0}, {L.v(t, j), -tau},
                {L.u(t, j), -0.5 * tau * tau}},
               0.0);
      b.add_eq({{L.v(t + 1, j), 1.0}, {L.v(t, j), -1.0}, {L.u(t, j), -tau}}, 0.0);
    }
  for (int t = 0; t <= T; ++t)
    for (int j = 0; j < dim; ++j) {
      b.add_bounds(L.p(t, j), c.p_min[j], c.p_max[j]);
      b.add_bounds(L.v(t, j), -c.v_max, c.v_max);
    }
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < dim; ++j) b.add_bounds(L.u(t, j), -c.u_max, c.u_max);
  for (int t = 0; t <= T; ++t)
    for (int o = 0; o < n_obs; ++o) {
      const auto& ob = c.obstacles[o];
      Terms sum;
      for (int j = 0; j < dim; ++j) {
        // p >= o_upper - M delta_upper
        b.add_le({{L.p(t, j), -1.0}, {L.delta_upper(t, o, j), -M[j]}}, -ob.upper[j]);
        // p <= o_lower + M delta_lower
        b.add_le({{L.p(t, j), 1.0}, {L.delta_lower(t, o, j), -M[j]}}, ob.lower[j]);
        sum.emplace_back(L.delta_upper(t, o, j), 1.0);
        sum.emplace_back(L.delta_lower(t, o, j), 1.0);
      }
      b.add_le(sum, 2.0 * dim - 1.0);
    }
  for (int t = 0; t <= T; ++t)
    for (int o = 0; o < n_obs; ++o)
      for (int j = 0; j < dim; ++j) {
        b.add_bounds(L.delta_upper(t, o, j), 0.0, 1.0);
        b.add_bounds(L.delta_lower(t, o, j), 0.0, 1.0);
      }
  ParametricMIQO pr = b.build();
  pr.name = "motion_T" + std::to_string(T) + "_obs" + std::to_string(n_obs);
  return pr;
}

std::vector<Obstacle> random_obstacles(const MotionConfig& c, int n_obs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Obstacle> out;
  auto overlaps = [&](const Obstacle& a, const Obstacle& b) {
    for (int j = 0; j < c.dim; ++j)
      if (a.upper[j] <= b.lower[j] || b.upper[j] <= a.lower[j]) return false;
    return true;
  };
  for (int attempt = 0; static_cast<int>(out.size()) < n_obs; ++attempt) {
    if (attempt > 10000) throw OracleExhausted("motion: could not place obstacles");
    Obstacle o;
    bool contains_target = true;
    for (int j = 0; j < c.dim; ++j) {
      double span = c.p_max[j] - c.p_min[j];
      std::uniform_real_distribution<double> size(0.08 * span, 0.2 * span);
      double w = size(rng);
      std::uniform_real_distribution<double> lo(c.p_min[j] + 0.05 * span,
                                                c.p_max[j] - 0.05 * span - w);
      double l = lo(rng);
      o.lower.push_back(l);
      o.upper.push_back(l + w);
      if (c.p_des[j] < l - 0.5 || c.p_des[j] > l + w + 0.5) contains_target = false;
    }
    if (contains_target) continue;
    bool ok = true;
    for (const auto& other : out) ok = ok && !overlaps(o, other);
    if (ok) out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

const char* to_string(Family f) {
  switch (f) {
    case Family::FuelCell: return "fuel_cell";
    case Family::Portfolio: return "portfolio";
    case Family::Motion: return "motion";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  if (s == "fuel_cell") return Family::FuelCell;
  if (s == "portfolio") return Family::Portfolio;
  if (s == "motion") return Family::Motion;
  throw FormatError("unknown problem family '" + s + "'");
}

Vector sample_ball(const Vector& center, double radius, std::mt19937_64& rng) {
  const auto n = center.size();
  if (radius <= 0 || n == 0) return center;
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector dir(n);
  for (Eigen::Index i = 0; i < n; ++i) dir[i] = nd(rng);
  double norm = dir.norm();
  if (norm == 0) return center;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double rho = radius * std::pow(ud(rng), 1.0 / double(n));
  return center + (rho / norm) * dir;
}

namespace {

Vector draw_one(const SamplerSpec& spec, std::mt19937_64& rng) {
  switch (spec.family) {
    case Family::FuelCell:
    case Family::Portfolio: {
      if (spec.base_points.empty()) throw DimensionError("sampler: no base points");
      std::uniform_int_distribution<std::size_t> pick(0, spec.base_points.size() - 1);
      const Vector& base = spec.base_points[pick(rng)];
      if (spec.family == Family::FuelCell)
        return fuel_cell_project(spec.fuel, sample_ball(base, spec.radius, rng));
      const PortfolioBlocks B{spec.portfolio.n_assets, spec.portfolio.factors};
      Vector th = base;
      const int starts[6] = {B.wprev(), B.r(), B.D(), B.S(), B.F(), B.end()};
      for (int blk = 0; blk < 5; ++blk) {
        const int len = starts[blk + 1] - starts[blk];
        Vector seg = base.segment(starts[blk], len);
        th.segment(starts[blk], len) = sample_ball(seg, spec.radius * seg.norm(), rng);
      }
      return portfolio_project(spec.portfolio, th);
    }
    case Family::Motion: {
      const auto n = spec.box_lower.size();
      if (n == 0 || spec.box_upper.size() != n) throw DimensionError("sampler: bad box");
      Vector th(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        std::uniform_real_distribution<double> ud(spec.box_lower[i], spec.box_upper[i]);
        th[i] = ud(rng);
      }
      return th;
    }
  }
  throw DimensionError("sampler: unknown family");
}

}  // namespace

std::vector<ParameterInstance> sample_parameters(const SamplerSpec& spec, int count,
                                                 const SampleFilter& filter, long first_index) {
  std::vector<ParameterInstance> out;
  out.reserve(std::max(count, 0));
  for (int i = 0; i < count; ++i) {
    const long index = first_index + i;
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
    bool accepted = false;
    for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
      Vector th = draw_one(spec, rng);
      if (!filter || filter(th)) {
        out.push_back({std::move(th), "s" + std::to_string(index)});
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw OracleExhausted("sampler: retry budget exhausted at sample " + std::to_string(index));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

json to_json(const FuelCellConfig& c) {
  json G = json::array();
  for (const auto& row : c.G) G.push_back(std::vector<double>(row.begin(), row.end()));
  return {{"T", c.T},         {"tau", c.tau},     {"alpha", c.alpha},   {"beta", c.beta},
          {"gamma", c.gamma}, {"E_min", c.E_min}, {"E_max", c.E_max},   {"P_max", c.P_max},
          {"n_sw", c.n_sw},   {"G", G},           {"h", c.h},           {"E_init", c.E_init},
          {"z_init", c.z_init}, {"s_init", c.s_init}};
}

void from_json(const json& j, FuelCellConfig& c) {
  c = FuelCellConfig{};
  c.T = j.value("T", c.T);
  c.tau = j.value("tau", c.tau);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.E_min = j.value("E_min", c.E_min);
  c.E_max = j.value("E_max", c.E_max);
  c.P_max = j.value("P_max", c.P_max);
  c.n_sw = j.value("n_sw", c.n_sw);
  c.E_init = j.value("E_init", c.E_init);
  c.z_init = j.value("z_init", c.z_init);
  c.s_init = j.value("s_init", c.s_init);
  if (j.contains("G")) {
    const auto& G = j.at("G");
    if (G.size() != 4) throw FormatError("fuel cell G must have 4 rows");
    for (int r = 0; r < 4; ++r) {
      if (G[r].size() != 3) throw FormatError("fuel cell G rows must have 3 entries");
      for (int k = 0; k < 3; ++k) c.G[r][k] = G[r][k].get<double>();
    }
  }
  if (j.contains("h")) {
    if (j.at("h").size() != 4) throw FormatError("fuel cell h must have 4 entries");
    for (int r = 0; r < 4; ++r) c.h[r] = j.at("h")[r].get<double>();
  }
}

json to_json(const PortfolioConfig& c) {
  return {{"n_assets", c.n_assets}, {"factors", c.factors},     {"gamma", c.gamma},
          {"borrow", c.borrow},     {"trade", c.trade},         {"cardinality", c.cardinality},
          {"big_m", c.big_m},       {"seed", c.seed},           {"info_ratio", c.info_ratio}};
}

void from_json(const json& j, PortfolioConfig& c) {
  c = PortfolioConfig{};
  c.n_assets = j.value("n_assets", c.n_assets);
  c.factors = j.value("factors", c.factors);
  c.gamma = j.value("gamma", c.gamma);
  c.borrow = j.value("borrow", c.borrow);
  c.trade = j.value("trade", c.trade);
  c.cardinality = j.value("cardinality", c.cardinality);
  c.big_m = j.value("big_m", c.big_m);
  c.seed = j.value("seed", c.seed);
  c.info_ratio = j.value("info_ratio", c.info_ratio);
}

json to_json(const MotionConfig& c) {
  json obs = json::array();
  for (const auto& o : c.obstacles) obs.push_back({{"lower", o.lower}, {"upper", o.upper}});
  return {{"dim", c.dim},       {"T", c.T},         {"tau", c.tau},     {"gamma", c.gamma},
          {"p_des", c.p_des},   {"p_min", c.p_min}, {"p_max", c.p_max}, {"v_max", c.v_max},
          {"u_max", c.u_max},   {"obstacles", obs}, {"big_m", c.big_m}};
}

void from_json(const json& j, MotionConfig& c) {
  c = MotionConfig{};
  c.dim = j.value("dim", c.dim);
  c.T = j.value("T", c.T);
  c.tau = j.value("tau", c.tau);
  c.gamma = j.value("gamma", c.gamma);
  c.p_des = j.value("p_des", c.p_des);
  c.p_min = j.value("p_min", c.p_min);
  c.p_max = j.value("p_max", c.p_max);
  c.v_max = j.value("v_max", c.v_max);
  c.u_max = j.value("u_max", c.u_max);
  c.big_m = j.value("big_m", c.big_m);
  if (j.contains("obstacles"))
    for (const auto& o : j.at("obstacles"))
      c.obstacles.push_back({o.at("lower").get<std::vector<double>>(),
                             o.at("upper").get<std::vector<double>>()});
}

namespace {
json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
Vector json_vec(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

json sampler_to_json(const SamplerSpec& s) {
  json base = json::array();
  for (const auto& p : s.base_points) base.push_back(vec_json(p));
  return {{"format", "sampler-v1"},
          {"family", to_string(s.family)},
          {"radius", s.radius},
          {"base_points", base},
          {"box_lower", vec_json(s.box_lower)},
          {"box_upper", vec_json(s.box_upper)},
          {"fuel", to_json(s.fuel)},
          {"portfolio", to_json(s.portfolio)},
          {"seed", s.seed},
          {"max_retries", s.max_retries}};
}

SamplerSpec sampler_from_json(const json& j) {
  if (j.value("format", "") != "sampler-v1") throw FormatError("not a sampler-v1 document");
  SamplerSpec s;
  s.family = family_from_string(j.at("family").get<std::string>());
  s.radius = j.at("radius").get<double>();
  for (const auto& p : j.at("base_points")) s.base_points.push_back(json_vec(p));
  s.box_lower = json_vec(j.at("box_lower"));
  s.box_upper = json_vec(j.at("box_upper"));
  from_json(j.at("fuel"), s.fuel);
  from_json(j.at("portfolio"), s.portfolio);
  s.seed = j.at("seed").get<std::uint64_t>();
  s.max_retries = j.at("max_retries").get<int>();
  return s;
}

}  // namespace mlopt
