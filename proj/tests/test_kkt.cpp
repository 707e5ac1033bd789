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

#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mlopt/benchmarks.hpp"
#include "mlopt/kkt.hpp"
#include "mlopt/miqo_solver.hpp"
#include "support/oracles.hpp"

using namespace mlopt;
using namespace mlopt::testing;

namespace {

SparseMatrix upper_of(const Matrix& M) {
  std::vector<Triplet> t;
  for (int j = 0; j < M.cols(); ++j)
    for (int i = 0; i <= j; ++i)
      if (M(i, j) != 0.0) t.emplace_back(i, j, M(i, j));
  SparseMatrix S(M.rows(), M.cols());
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

Matrix random_quasi_definite(std::mt19937_64& rng, int n1, int n2) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Matrix B(n1, n1), C(n2, n2), A(n2, n1);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n1; ++j) B(i, j) = ud(rng) < 0.3 ? nd(rng) : 0.0;
  for (int i = 0; i < n2; ++i)
    for (int j = 0; j < n2; ++j) C(i, j) = ud(rng) < 0.3 ? nd(rng) : 0.0;
  for (int i = 0; i < n2; ++i)
    for (int j = 0; j < n1; ++j) A(i, j) = ud(rng) < 0.3 ? nd(rng) : 0.0;
  Matrix K = Matrix::Zero(n1 + n2, n1 + n2);
  K.topLeftCorner(n1, n1) = B * B.transpose() + Matrix::Identity(n1, n1);
  K.bottomRightCorner(n2, n2) = -(C * C.transpose() + Matrix::Identity(n2, n2));
  K.bottomLeftCorner(n2, n1) = A;
  K.topRightCorner(n1, n2) = A.transpose();
  return K;
}

ParametricMIQO small_fuel_cell(int T) {
  FuelCellConfig cfg;
  cfg.T = T;
  return build_fuel_cell(cfg);
}

Vector fuel_theta(const ParametricMIQO& pr, int T, double load) {
  Vector th = Vector::Zero(pr.p_dim());
  th[0] = 7.7;
  for (int t = 0; t < T; ++t) th[3 + T + t] = load;
  return th;
}

}  // namespace

TEST_CASE("LDL of the identity") {
  SparseLDL f;
  REQUIRE(f.factorize(upper_of(Matrix::Identity(4, 4))));
  CHECK((Matrix(f.L()) - Matrix::Identity(4, 4)).norm() == 0.0);
  CHECK((f.D() - Vector::Ones(4)).norm() == 0.0);
}

TEST_CASE("LDL of a 2x2 saddle point matrix") {
  Matrix K(2, 2);
  K << 2, 1, 1, 0;
  SparseLDL f;
  REQUIRE(f.factorize(upper_of(K)));
  CHECK(f.reconstruction_error(upper_of(K)) <= 1e-10);
  CHECK(f.D()[0] == doctest::Approx(2.0));
  CHECK(f.D()[1] == doctest::Approx(-0.5));
  Vector b(2);
  b << 1, 2;
  CHECK((K * f.solve(b) - b).norm() <= 1e-12);
}

TEST_CASE("zero pivot is reported") {
  Matrix K = Matrix::Zero(2, 2);
  K(0, 1) = K(1, 0) = 1.0;
  K(0, 0) = 1e-300 * 0.0;
  SparseLDL f;
  CHECK_FALSE(f.factorize(upper_of(K)));
  CHECK_FALSE(f.ok());
}

TEST_CASE("quasi-definite factorizations under random orderings") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int n1 = 3 + trial % 7, n2 = 1 + trial % 5;
    Matrix K = random_quasi_definite(rng, n1, n2);
    SparseMatrix Ku = upper_of(K);
    std::vector<int> perm(n1 + n2);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (const auto& p : {std::vector<int>{}, perm, amd_ordering(Ku)}) {
      SparseLDL f;
      REQUIRE(f.factorize(Ku, p));
      CHECK(f.reconstruction_error(Ku) <= 1e-10);
      Vector b = Vector::Random(n1 + n2);
      Vector x = f.solve(b);
      Vector ref = K.fullPivLu().solve(b);
      CHECK((x - ref).norm() <= 1e-8 * (1.0 + ref.norm()));
    }
  }
}

TEST_CASE("cached factors of strictly convex problems reconstruct K") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    ProblemBuilder b(1);
    const int n = 5;
    b.add_variables(n - 2);
    b.add_variables(2, true);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix L(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) L(i, j) = nd(rng);
    Matrix P = L * L.transpose() + Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) b.add_quadratic(i, j, P(i, j));
    for (int r = 0; r < 4; ++r) {
      ProblemBuilder::Terms row;
      for (int j = 0; j < n - 2; ++j) row.emplace_back(j, nd(rng));
      b.add_le(row, 1.0, {{0, 1.0}});
    }
    auto pr = b.build();
    std::vector<Strategy> ss{Strategy({0, 2}, {0, 1}), Strategy({1}, {1, 1}), Strategy({}, {0, 0})};
    FactorCache cache;
    cache.build(pr, ss);
    CHECK(cache.size() == 3);
    CHECK(cache.max_reconstruction_error() <= 1e-10);
  }
}

TEST_CASE("factor serialization round trip") {
  std::mt19937_64 rng(2);
  Matrix K = random_quasi_definite(rng, 6, 3);
  SparseMatrix Ku = upper_of(K);
  SparseLDL f;
  REQUIRE(f.factorize(Ku, amd_ordering(Ku)));
  std::stringstream ss;
  f.write(ss);
  SparseLDL g;
  g.read(ss);
  Vector b = Vector::Random(9);
  CHECK((f.solve(b) - g.solve(b)).norm() == 0.0);
  std::stringstream bad("garbage");
  CHECK_THROWS_AS(g.read(bad), FormatError);
}

TEST_CASE("assembled system layout") {
  // n = 1, P = [2], q = [-2], one row x <= 1 tight.
  ProblemBuilder b(0);
  b.add_variables(1);
  b.add_quadratic(0, 0, 2.0);
  b.add_linear(0, -2.0);
  b.add_le({{0, 1.0}}, 1.0);
  auto inst = b.build().instantiate(Vector());
  Strategy s({0}, {});
  auto sys = assemble(inst, s, {});
  CHECK(sys.dim() == 2);
  CHECK(Matrix(sys.K)(0, 1) == 1.0);
  auto r = decode(inst, s, {}, nullptr);
  REQUIRE(r.ok);
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(std::abs(r.nu[0]) <= 1e-9);

  // No tight rows: the unconstrained minimizer.
  auto r0 = decode(inst, Strategy({}, {}), {}, nullptr);
  REQUIRE(r0.ok);
  CHECK(r0.x[0] == doctest::Approx(1.0));
}

TEST_CASE("fully determined strategy decodes to the inverse") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int n = 4;
  ProblemBuilder b(0);
  b.add_variables(n);
  Matrix A(n, n);
  Vector rhs(n);
  for (int i = 0; i < n; ++i) {
    ProblemBuilder::Terms row;
    for (int j = 0; j < n; ++j) {
      A(i, j) = nd(rng) + (i == j ? 3.0 : 0.0);
      row.emplace_back(j, A(i, j));
    }
    rhs[i] = nd(rng);
    b.add_le(row, rhs[i]);
  }
  auto inst = b.build().instantiate(Vector());
  auto r = decode(inst, Strategy({0, 1, 2, 3}, {}), {}, nullptr);
  REQUIRE(r.ok);
  CHECK((r.x - A.lu().solve(rhs)).norm() <= 1e-8);
}

TEST_CASE("oracle strategies decode to the oracle solution") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto prob = random_miqo(rng, 3 + trial % 6, 1 + trial % 3, 3 + trial % 6);
    auto res = solve_miqo(prob.inst, prob.ints);
    REQUIRE(res.status == MIQOStatus::Optimal);
    Strategy s = extract_strategy(prob.inst, res.x, prob.ints);
    auto r = decode(prob.inst, s, prob.ints, nullptr);
    REQUIRE(r.ok);
    CHECK(prob.inst.objective(r.x) == doctest::Approx(res.objective).epsilon(1e-6));
    CHECK(violation(prob.inst, r.x) <= 1e-6);
  }
  auto pr = small_fuel_cell(2);
  auto inst = pr.instantiate(fuel_theta(pr, 2, 0.8));
  auto res = solve_miqo(inst, pr.integer_indices());
  REQUIRE(res.status == MIQOStatus::Optimal);
  Strategy s = extract_strategy(inst, res.x, pr.integer_indices());
  auto r = decode(inst, s, pr.integer_indices(), nullptr);
  REQUIRE(r.ok);
  CHECK((r.x - res.x).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("a flipped integer assignment is not accepted") {
  auto pr = small_fuel_cell(3);
  auto inst = pr.instantiate(fuel_theta(pr, 3, 1.1));
  auto res = solve_miqo(inst, pr.integer_indices());
  REQUIRE(res.status == MIQOStatus::Optimal);
  Strategy good = extract_strategy(inst, res.x, pr.integer_indices());
  auto vals = good.integer_values();
  vals[1] = 1 - vals[1];  // z_1
  Strategy bad(good.tight_set(), vals);
  std::vector<Strategy> cands{bad};
  auto ev = evaluate_candidates(inst, cands, pr.integer_indices(), nullptr);
  CHECK_FALSE(ev.any_feasible);
  CHECK(ev.best().violation > kInfeasibilityTol);
}

TEST_CASE("candidate ranking") {
  std::mt19937_64 rng(5);
  auto prob = random_miqo(rng, 6, 3, 6);
  auto res = solve_miqo(prob.inst, prob.ints);
  REQUIRE(res.status == MIQOStatus::Optimal);
  Strategy good = extract_strategy(prob.inst, res.x, prob.ints);
  // Dropping every tight row gives the unconstrained minimizer for the same
  // integers: lower objective, typically infeasible.
  Strategy loose({}, good.integer_values());
  auto vals = good.integer_values();
  vals[0] = 1 - vals[0];
  Strategy flipped(good.tight_set(), vals);

  SUBCASE("single correct strategy wins") {
    std::vector<Strategy> c{good};
    auto ev = evaluate_candidates(prob.inst, c, prob.ints, nullptr);
    CHECK(ev.any_feasible);
    CHECK(ev.best().objective == doctest::Approx(res.objective).epsilon(1e-6));
  }
  SUBCASE("feasibility comes before objective") {
    std::vector<Strategy> c{loose, flipped, good};
    auto ev = evaluate_candidates(prob.inst, c, prob.ints, nullptr);
    REQUIRE(ev.any_feasible);
    CHECK(ev.best().index == 2);
    CHECK(ev.ranked.size() == 3);
  }
  SUBCASE("ties keep candidate order") {
    std::vector<Strategy> c{good, good, good};
    auto ev = evaluate_candidates(prob.inst, c, prob.ints, nullptr);
    CHECK(ev.ranked[0].index == 0);
    CHECK(ev.ranked[1].index == 1);
    CHECK(ev.ranked[2].index == 2);
  }
  SUBCASE("parallel evaluation matches serial") {
    std::vector<Strategy> c{loose, flipped, good, good, loose};
    auto a = evaluate_candidates(prob.inst, c, prob.ints, nullptr, nullptr, 1);
    auto b = evaluate_candidates(prob.inst, c, prob.ints, nullptr, nullptr, 4);
    REQUIRE(a.ranked.size() == b.ranked.size());
    for (std::size_t i = 0; i < a.ranked.size(); ++i) {
      CHECK(a.ranked[i].index == b.ranked[i].index);
      CHECK(a.ranked[i].objective == b.ranked[i].objective);
    }
  }
  SUBCASE("empty candidate list") {
    std::vector<Strategy> c;
    CHECK_THROWS_AS(evaluate_candidates(prob.inst, c, prob.ints, nullptr), DimensionError);
  }
}

TEST_CASE("best of k never worsens as k grows") {
  auto pr = small_fuel_cell(3);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ud(0.0, 1.2);
  std::vector<Strategy> pool;
  for (int i = 0; i < 12; ++i) {
    auto inst = pr.instantiate(fuel_theta(pr, 3, ud(rng)));
    auto res = solve_miqo(inst, pr.integer_indices());
    if (res.status == MIQOStatus::Optimal)
      pool.push_back(extract_strategy(inst, res.x, pr.integer_indices()));
  }
  REQUIRE(pool.size() >= 4);
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = pr.instantiate(fuel_theta(pr, 3, ud(rng)));
    bool prev_feasible = false;
    double prev_value = kInf;
    for (std::size_t k = 1; k <= pool.size(); ++k) {
      std::span<const Strategy> c(pool.data(), k);
      auto ev = evaluate_candidates(inst, c, pr.integer_indices(), nullptr);
      const auto& b = ev.best();
      double value = b.feasible() ? b.objective : b.violation;
      if (prev_feasible) {
        CHECK(b.feasible());
        CHECK(value <= prev_value);
      } else if (!b.feasible()) {
        CHECK(value <= prev_value);
      }
      prev_feasible = b.feasible();
      prev_value = value;
    }
  }
}

TEST_CASE("factor cache") {
  auto pr = small_fuel_cell(3);
  std::vector<Strategy> strategies;
  std::vector<Vector> thetas;
  for (double load : {0.2, 0.6, 1.0, 1.15}) {
    Vector th = fuel_theta(pr, 3, load);
    auto inst = pr.instantiate(th);
    auto res = solve_miqo(inst, pr.integer_indices());
    REQUIRE(res.status == MIQOStatus::Optimal);
    strategies.push_back(extract_strategy(inst, res.x, pr.integer_indices()));
    thetas.push_back(th);
  }
  FactorCache cache;
  cache.build(pr, strategies);
  REQUIRE(cache.enabled());
  CHECK(cache.size() >= 1);
  // Zero primal diagonals make the pivots as small as the regularization, so
  // the error relative to ||K|| is only bounded by roundoff / delta.
  CHECK(cache.max_backward_error() <= 1e-10);
  CHECK(cache.max_reconstruction_error() <= 1e-6);

  OpCounter ops;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    auto inst = pr.instantiate(thetas[i]);
    auto r = decode(inst, strategies[i], pr.integer_indices(), &cache, &ops);
    REQUIRE(r.ok);
    CHECK(r.used_cache);
  }
  CHECK(ops.snapshot().factorizations == 0);
  CHECK(ops.snapshot().decode_calls == static_cast<long>(strategies.size()));

  auto path = (std::filesystem::temp_directory_path() / "mlopt_cache_test.bin").string();
  cache.save(path);
  auto loaded = FactorCache::load(path, pr);
  REQUIRE(loaded.has_value());
  CHECK(loaded->size() == cache.size());
  auto inst = pr.instantiate(thetas[0]);
  auto a = decode(inst, strategies[0], pr.integer_indices(), &cache);
  auto b = decode(inst, strategies[0], pr.integer_indices(), &*loaded);
  CHECK(b.used_cache);
  CHECK((a.x - b.x).norm() == 0.0);

  // A different problem invalidates the sidecar.
  auto other = small_fuel_cell(4);
  CHECK_FALSE(FactorCache::load(path, other).has_value());
  std::filesystem::remove(path);
}

TEST_CASE("parametric matrices bypass the cache") {
  PortfolioConfig cfg;
  cfg.n_assets = 4;
  cfg.factors = 2;
  cfg.cardinality = 2;
  auto pr = build_portfolio(cfg);
  REQUIRE(pr.matrices_parametric());
  auto traj = portfolio_trajectory(cfg, 2);
  auto inst = pr.instantiate(traj[1]);
  auto res = solve_miqo(inst, pr.integer_indices());
  REQUIRE(res.status == MIQOStatus::Optimal);
  Strategy s = extract_strategy(inst, res.x, pr.integer_indices());
  std::vector<Strategy> ss{s};
  FactorCache cache;
  cache.build(pr, ss);
  CHECK_FALSE(cache.enabled());
  CHECK(cache.size() == 0);
  OpCounter ops;
  auto r = decode(inst, s, pr.integer_indices(), &cache, &ops);
  CHECK_FALSE(r.used_cache);
  CHECK(ops.snapshot().factorizations == 1);
  CHECK(r.ok);
  CHECK(inst.objective(r.x) == doctest::Approx(res.objective).epsilon(1e-6));
}
