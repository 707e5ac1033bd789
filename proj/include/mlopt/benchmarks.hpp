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

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlopt/problem.hpp"

namespace mlopt {

// ---------------------------------------------------------------------------
// Fuel cell energy management.
//
// Variables (n = 6T + 3), in order:
//   E_0..E_T, P_0..P_{T-1}, z_0..z_T (binary), w_0..w_{T-1}, d_0..d_{T-1}
//   (binary), s_0..s_T.
// Parameters (p = 2T + 3): E_init, z_init, s_init, d_past (T), P_load (T).
// Rows (m = 21T + 11): initial conditions (6), energy dynamics (2T), energy
// box (2T + 2), power box (2T), on/off dynamics (2T), switch counter (2T),
// switch limit (T + 1), logic G(w, z, d) <= h (4T), integer and w boxes
// (6T + 2). Equalities are stored as row pairs.
struct FuelCellConfig {
  int T = 10;
  double tau = 1.0;
  double alpha = 6.7e-4;
  double beta = 0.2;
  double gamma = 80.0;
  double E_min = 5.2;
  double E_max = 10.2;
  double P_max = 1.2;
  int n_sw = 3;
  std::array<std::array<double, 3>, 4> G{{{1, 0, -1}, {-1, 0, -1}, {1, 2, 2}, {-1, -2, 2}}};
  std::array<double, 4> h{0, 0, 3, 1};
  double E_init = 7.7;
  int z_init = 0;
  int s_init = 0;
};

struct FuelCellLayout {
  int T;
  int E(int t) const { return t; }
  int P(int t) const { return (T + 1) + t; }
  int z(int t) const { return (2 * T + 1) + t; }
  int w(int t) const { return (3 * T + 2) + t; }
  int d(int t) const { return (4 * T + 2) + t; }
  int s(int t) const { return (5 * T + 2) + t; }
  int n() const { return 6 * T + 3; }
  int m() const { return 21 * T + 11; }
  int p_dim() const { return 2 * T + 3; }
};

ParametricMIQO build_fuel_cell(const FuelCellConfig& cfg);

/// State of the closed-loop fuel cell system between MPC steps.
struct FuelCellState {
  double E = 7.7;
  int z = 0;
  std::vector<int> d_past;  // d_{-T} .. d_{-1}
  int s() const;
};

Vector fuel_cell_theta(const FuelCellConfig& cfg, const FuelCellState& state,
                       const std::vector<double>& load_window);

/// Projects a perturbed parameter onto the admissible set: clamps E and the
/// loads to their boxes, rounds the binary history and on/off state, caps the
/// switch history at n_sw and recomputes s_init from it.
Vector fuel_cell_project(const FuelCellConfig& cfg, const Vector& theta);

/// Seeded random walk clipped to [0, P_max].
std::vector<double> fuel_cell_load_profile(const FuelCellConfig& cfg, int length,
                                           std::uint64_t seed, double step = 0.1);

// ---------------------------------------------------------------------------
// Sparse portfolio trading with a factor risk model.
//
// Variables (n = 4(N+1) + k - 1 with N risky assets and cash last):
//   w (N+1), f = F'w (k), y (N, binary), u >= (w)_- (N+1), t >= |w - w_prev| (N+1).
// Parameters: w_prev (N+1), r_hat (N+1), diag D (N+1), Sigma_F upper triangle
// (k(k+1)/2, row-major), F (row-major (N+1) x k).
// Rows (m = 8N + 2k + 7): budget pair, factor definition pairs, big-M
// cardinality (2N), cardinality count, y boxes, short part (2N+2), trades
// (2N+2). Cash is never counted against the cardinality.
struct PortfolioConfig {
  int n_assets = 10;  // risky assets; cash is added as the last asset
  int factors = 3;
  double gamma = 100.0;
  double borrow = 1e-4;
  double trade = 0.01;
  int cardinality = 3;
  double big_m = 1.0;
  std::uint64_t seed = 0;
  double info_ratio = 0.15;
};

struct PortfolioLayout {
  int N, k;
  int w(int i) const { return i; }
  int f(int j) const { return N + 1 + j; }
  int y(int i) const { return N + 1 + k + i; }
  int u(int i) const { return 2 * N + 1 + k + i; }
  int t(int i) const { return 3 * N + 2 + k + i; }
  int n() const { return 4 * (N + 1) + k - 1; }
  int p_dim() const { return 3 * (N + 1) + k * (k + 1) / 2 + (N + 1) * k; }
  int m() const { return 8 * N + 2 * k + 7; }
};

ParametricMIQO build_portfolio(const PortfolioConfig& cfg);

/// Synthetic market: a seeded factor model and a trajectory of parameter
/// points (previous weights from a simple rebalancing rule, noisy return
/// forecasts, monthly-updated risk model).
std::vector<Vector> portfolio_trajectory(const PortfolioConfig& cfg, int steps);

// ---------------------------------------------------------------------------
// Motion planning of a planar double integrator with rectangular obstacles.
//
// Variables (n = 2*dim*(T+1) + dim*T + 2*dim*n_obs*(T+1)):
//   p_t, v_t (t = 0..T), u_t (t = 0..T-1), then per (t, obstacle) the binaries
//   delta_upper (dim), delta_lower (dim).
// Parameter: p_init (dim).
struct Obstacle {
  std::vector<double> lower, upper;
};

struct MotionConfig {
  int dim = 2;
  int T = 10;
  double tau = 0.1;
  double gamma = 0.01;
  std::vector<double> p_des{-10.5, -10.0};
  std::vector<double> p_min{-15.0, -15.0}, p_max{15.0, 15.0};
  double v_max = 15.0;
  double u_max = 40.0;
  std::vector<Obstacle> obstacles;
  double big_m = 0.0;  // 0 selects (p_max - p_min) + 1
};

struct MotionLayout {
  int dim, T, n_obs;
  int p(int t, int j) const { return t * dim + j; }
  int v(int t, int j) const { return (T + 1) * dim + t * dim + j; }
  int u(int t, int j) const { return 2 * (T + 1) * dim + t * dim + j; }
  int delta_upper(int t, int o, int j) const {
    return 2 * (T + 1) * dim + T * dim + ((t * n_obs + o) * 2) * dim + j;
  }
  int delta_lower(int t, int o, int j) const { return delta_upper(t, o, j) + dim; }
  int n() const { return 2 * (T + 1) * dim + T * dim + 2 * dim * n_obs * (T + 1); }
};

ParametricMIQO build_motion(const MotionConfig& cfg);

/// n_obs seeded, non-overlapping obstacles inside the position box, away from
/// p_des.
std::vector<Obstacle> random_obstacles(const MotionConfig& cfg, int n_obs, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Parameter sampling.

enum class Family { FuelCell, Portfolio, Motion };

const char* to_string(Family f);
Family family_from_string(const std::string& s);

/// Feasibility filter applied to each candidate sample; return false to reject.
using SampleFilter = std::function<bool(const Vector&)>;

struct SamplerSpec {
  Family family = Family::FuelCell;
  /// Fuel cell: absolute ball radius. Portfolio: ball radius relative to the
  /// magnitude of each parameter block.
  double radius = 0.5;
  std::vector<Vector> base_points;
  Vector box_lower, box_upper;  // motion
  FuelCellConfig fuel;
  PortfolioConfig portfolio;
  std::uint64_t seed = 0;
  int max_retries = 100;
};

/// Draws `count` parameters. Sample i uses its own stream seeded from
/// (spec.seed, first_index + i), so shards reproduce the full sequence.
/// Throws OracleExhausted when a sample exceeds the retry budget.
std::vector<ParameterInstance> sample_parameters(const SamplerSpec& spec, int count,
                                                 const SampleFilter& filter = {},
                                                 long first_index = 0);

/// Uniform point in the Euclidean ball of the given radius around `center`.
Vector sample_ball(const Vector& center, double radius, std::mt19937_64& rng);

/// Portfolio parameter repair after perturbation: D clipped to be positive,
/// Sigma_F projected onto the PSD cone.
Vector portfolio_project(const PortfolioConfig& cfg, const Vector& theta);

nlohmann::json to_json(const FuelCellConfig& c);
nlohmann::json to_json(const PortfolioConfig& c);
nlohmann::json to_json(const MotionConfig& c);
void from_json(const nlohmann::json& j, FuelCellConfig& c);
void from_json(const nlohmann::json& j, PortfolioConfig& c);
void from_json(const nlohmann::json& j, MotionConfig& c);

nlohmann::json sampler_to_json(const SamplerSpec& spec);
SamplerSpec sampler_from_json(const nlohmann::json& j);

/// Closed-loop MPC rollout of the fuel cell system; returns the visited
/// parameter points. `solve` maps a parameter to the optimal x (or empty when
/// infeasible, which resets the state to the nominal initial condition).
std::vector<Vector> fuel_cell_rollout(const FuelCellConfig& cfg, int steps, std::uint64_t seed,
                                      const std::function<Vector(const Vector&)>& solve);

}  // namespace mlopt
