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


#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "mlopt/benchmarks.hpp"
#include "mlopt/strategy_bank.hpp"
#include "support/toy_costs.hpp"

using namespace mlopt;
using mlopt::testing::matrix_cost;
using mlopt::testing::random_toy;
using mlopt::testing::ToyCosts;

namespace {

Strategy tagged(int k) { return Strategy({k}, {}); }

ParameterSource dummy_source() {
  return [](long i) { return ParameterInstance{Vector::Constant(1, double(i)), std::to_string(i)}; };
}

// Smallest number of columns such that each row has an entry within tolerance.
int brute_force_cover(const std::vector<std::vector<double>>& F, const std::vector<double>& f,
                      double eps) {
  const int M = static_cast<int>(F[0].size());
  int best = -1;
  for (int mask = 0; mask < (1 << M); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < F.size() && ok; ++i) {
      bool row = false;
      for (int j = 0; j < M; ++j)
        if ((mask >> j & 1) && F[i][j] <= prune_tolerance(f[i], eps)) row = true;
      ok = row;
    }
    const int c = __builtin_popcount(mask);
    if (ok && (best < 0 || c < best)) best = c;
  }
  return best;
}

}  // namespace

TEST_CASE("bank assigns labels in first-seen order") {
  StrategyBank bank;
  CHECK(bank.add(Strategy({3, 1}, {1})) == 0);
  CHECK(bank.add(Strategy({2}, {0})) == 1);
  CHECK(bank.add(Strategy({1, 3}, {1})) == 0);
  CHECK(bank.add(Strategy({1, 3}, {0})) == 2);
  CHECK(bank.size() == 3);
  CHECK(bank.find(Strategy({2}, {0})) == 1);
  CHECK_FALSE(bank.find(Strategy({2}, {1})).has_value());
}

TEST_CASE("Good-Turing bound and sample threshold") {
  const double c = 2.0 * std::sqrt(2.0) + std::sqrt(3.0);
  CHECK(good_turing_bound(100, 7, 0.05) ==
        doctest::Approx(0.07 + c * std::sqrt(std::log(60.0) / 100.0)).epsilon(1e-14));
  CHECK(good_turing_bound(0, 0, 0.05) == kInf);
  const long N = good_turing_min_samples(0.05, 0.05);
  CHECK(good_turing_bound(N, 0, 0.05) <= 0.05);
  CHECK(good_turing_bound(N - 1, 0, 0.05) > 0.05);
  CHECK(N == static_cast<long>(std::ceil(c * c * std::log(60.0) / 0.0025)));
  CHECK_THROWS_AS(good_turing_bound(10, 1, 1.0), ContractViolation);
}

TEST_CASE("single-strategy stream stops as soon as the deviation term allows") {
  ExploreOptions opts;
  opts.eps = 0.2;
  opts.beta = 0.1;
  opts.max_samples = 100000;
  auto oracle = [](const ParameterInstance&) { return std::optional<Solved>(Solved{tagged(0), 1.0}); };
  auto res = explore(dummy_source(), oracle, opts);
  CHECK(res.stop == StopReason::BoundReached);
  CHECK(res.final_N == good_turing_min_samples(0.2, 0.1));
  CHECK(res.final_N1 == 0);
  CHECK(res.bank.size() == 1);
  REQUIRE(res.trace.size() == static_cast<std::size_t>(res.final_N));
  CHECK(res.trace.front().N1 == 1);  // one sample, seen once
  for (const auto& st : res.trace) CHECK(st.bound == good_turing_bound(st.N, st.N1, 0.1));
  CHECK(res.trace.back().bound <= 0.2);
}

TEST_CASE("all-distinct stream never stops early") {
  ExploreOptions opts;
  opts.max_samples = 300;
  auto oracle = [](const ParameterInstance& p) {
    return std::optional<Solved>(Solved{tagged(static_cast<int>(p.theta[0])), 0.0});
  };
  auto res = explore(dummy_source(), oracle, opts);
  CHECK(res.stop == StopReason::MaxSamples);
  CHECK(res.final_N == 300);
  CHECK(res.final_N1 == 300);
  CHECK(res.bank.size() == 300);
  for (const auto& st : res.trace) {
    CHECK(st.N1 <= st.N);
    CHECK(st.bound > 1.0);
  }
}

TEST_CASE("failed oracle calls are skipped and not counted") {
  ExploreOptions opts;
  opts.max_samples = 20;
  auto oracle = [](const ParameterInstance& p) -> std::optional<Solved> {
    const int i = static_cast<int>(p.theta[0]);
    if (i % 3 == 2) return std::nullopt;
    return Solved{tagged(i % 2), double(i)};
  };
  auto res = explore(dummy_source(), oracle, opts);
  CHECK(res.final_N == 20);
  CHECK(res.samples.size() == 20);
  CHECK(res.skipped == 9);  // draws 2, 5, ..., 26 among the first 29
  CHECK(res.log.size() == 9);
  for (const auto& s : res.samples) CHECK(static_cast<int>(s.param.theta[0]) % 3 != 2);

  auto never = [](const ParameterInstance&) -> std::optional<Solved> { return std::nullopt; };
  CHECK_THROWS_AS(explore(dummy_source(), never, opts), OracleExhausted);
}

TEST_CASE("select_frequent examples") {
  SUBCASE("single strategy") {
    for (int N : {1, 5, 10, 1000}) {
      std::vector<int> labels(N, 0);
      for (double a : {0.01, 0.05, 0.5}) CHECK(select_frequent(labels, 1, a).size() == 1);
    }
  }
  SUBCASE("uniform over ten") {
    std::vector<int> labels;
    for (int i = 0; i < 1000; ++i) labels.push_back(i % 10);
    CHECK(select_frequent(labels, 10, 0.05).size() == 10);
  }
  SUBCASE("90/10 split keeps both") {
    std::vector<int> labels(90, 1);
    labels.insert(labels.end(), 10, 0);
    auto s = select_frequent(labels, 2, 0.05);
    CHECK(s == std::vector<int>{1, 0});
  }
  SUBCASE("ties go to the first-seen label") {
    std::vector<int> labels{0, 1, 2, 2, 1, 0, 3};
    auto s = select_frequent(labels, 4, 0.5);  // threshold ceil(3.5) = 4
    CHECK(s == std::vector<int>{0, 1, 2});
    CHECK(select_frequent(labels, 4, 0.6) == std::vector<int>{0, 1});
  }
}

TEST_CASE("select_frequent covers more than the threshold or everything") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = 1 + static_cast<int>(rng() % 15);
    const int N = 1 + static_cast<int>(rng() % 400);
    std::vector<double> w(M);
    for (auto& x : w) x = std::exp(3.0 * std::uniform_real_distribution<double>(0, 1)(rng));
    std::discrete_distribution<int> dist(w.begin(), w.end());
    std::vector<int> labels(N);
    for (auto& l : labels) l = dist(rng);
    const double alpha = std::uniform_real_distribution<double>(0.001, 0.5)(rng);
    auto s = select_frequent(labels, M, alpha);
    std::set<int> sel(s.begin(), s.end());
    std::set<int> present(labels.begin(), labels.end());
    long covered = 0;
    for (int l : labels) covered += sel.count(l);
    const long threshold = static_cast<long>(std::ceil((1.0 - alpha) * N - 1e-9));
    CHECK((covered > threshold || sel == present));
    // Minimal: dropping the last one falls to or below the threshold.
    long without_last = 0;
    for (int l : labels) without_last += (sel.count(l) && l != s.back());
    CHECK(without_last <= threshold);
  }
}

TEST_CASE("prune with tolerance disabled keeps the frequent mass in one pass") {
  std::vector<int> labels(97, 0);
  labels.insert(labels.end(), {1, 1, 2});
  std::vector<double> f(100, 1.0);
  long calls = 0;
  AssignmentCost cost = [&](int, int) { ++calls; return kInf; };
  PruneOptions opts;
  opts.eps = kInf;
  auto r = prune(labels, f, 3, cost, opts);
  CHECK(r.success);
  CHECK(r.iterations == 1);
  CHECK(r.selected == std::vector<int>{0});
  CHECK(calls == 3);  // only the discarded samples, only selected strategies
}

TEST_CASE("prune halves alpha until every discarded sample is within tolerance") {
  // Strategy 2 cannot serve sample 99; 1 serves 97 and 98 within tolerance.
  std::vector<int> labels(94, 0);
  labels.insert(labels.end(), {1, 1, 1, 1, 2, 2});
  std::vector<double> f(100, -2.0);
  std::vector<std::vector<double>> F(100, std::vector<double>(3, kInf));
  for (int i = 0; i < 100; ++i) F[i][labels[i]] = f[i];
  F[98][0] = -2.0 + 1e-3;  // within 1e-3 * |f|
  F[99][0] = -1.9;         // too far
  PruneOptions opts;
  opts.eps = 1e-3;
  auto r = prune(labels, f, 3, matrix_cost(F), opts);
  REQUIRE(r.success);
  // alpha = 0.05 selects {0, 1} and sample 99 fails; at alpha = 0.025 the
  // threshold is 98, which 94 + 4 does not exceed, so all three are kept.
  CHECK(r.iterations == 2);
  CHECK(r.alpha == doctest::Approx(0.025));
  CHECK(r.selected.size() == 3);

  F[99][0] = -2.0;
  r = prune(labels, f, 3, matrix_cost(F), opts);
  REQUIRE(r.success);
  CHECK(r.iterations == 1);
  CHECK(r.selected == std::vector<int>{0, 1});
  CHECK(r.labels[98] == 0);
  CHECK(r.labels[99] == 0);
  for (int i = 0; i < 100; ++i) CHECK(r.reassigned[i] <= prune_tolerance(f[i], 1e-3));
}

TEST_CASE("prune reports failure after max_it") {
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back(i < 990 ? 0 : 1 + (i % 2));
  std::vector<double> f(1000, 1.0);
  AssignmentCost cost = [](int, int) { return kInf; };
  PruneOptions opts;
  opts.max_it = 2;
  auto r = prune(labels, f, 3, cost, opts);
  CHECK_FALSE(r.success);
  CHECK(r.iterations == 2);
  CHECK(r.alpha == doctest::Approx(0.025));
  CHECK(r.labels == labels);
}

TEST_CASE("exact pruning examples") {
  SUBCASE("diagonal-feasible only") {
    const int M = 5;
    std::vector<std::vector<double>> F(M, std::vector<double>(M, kInf));
    std::vector<double> f(M);
    for (int i = 0; i < M; ++i) F[i][i] = f[i] = 1.0 + i;
    auto r = prune_exact_milo(F, f, 1e-3);
    REQUIRE(r.status == MIQOStatus::Optimal);
    CHECK(r.count == M);
    for (int i = 0; i < M; ++i) CHECK(r.assignment[i] == i);
  }
  SUBCASE("interchangeable strategies") {
    std::vector<std::vector<double>> F(8, std::vector<double>{3.0, 3.0});
    std::vector<double> f(8, 3.0);
    auto r = prune_exact_milo(F, f, 0.0);
    REQUIRE(r.status == MIQOStatus::Optimal);
    CHECK(r.count == 1);
  }
  SUBCASE("tolerance too small") {
    std::vector<std::vector<double>> F{{kInf, 2.0}, {1.0, kInf}};
    std::vector<double> f{1.0, 1.0};
    CHECK(prune_exact_milo(F, f, 1e-3).status == MIQOStatus::Infeasible);
  }
  SUBCASE("too large") {
    std::vector<std::vector<double>> F(1001, std::vector<double>(5, 1.0));
    std::vector<double> f(1001, 1.0);
    CHECK_THROWS_AS(prune_exact_milo(F, f, 1e-3), ContractViolation);
  }
}

TEST_CASE("exact pruning matches subset enumeration and bounds the heuristic") {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 10; ++trial) {
    ToyCosts t = random_toy(rng, 20, 6);
    const double eps = 1e-3;
    auto milo = prune_exact_milo(t.F, t.f_star, eps);
    REQUIRE(milo.status == MIQOStatus::Optimal);
    CHECK(milo.count == brute_force_cover(t.F, t.f_star, eps));
    for (int i = 0; i < 20; ++i) {
      const int j = milo.assignment[i];
      REQUIRE(j >= 0);
      CHECK(milo.selected[j]);
      CHECK(t.F[i][j] <= prune_tolerance(t.f_star[i], eps));
    }
    auto heur = prune(t.labels, t.f_star, 6, matrix_cost(t.F), PruneOptions{eps});
    REQUIRE(heur.success);
    CHECK(milo.count <= static_cast<int>(heur.selected.size()));
  }
}

TEST_CASE("pruning a bank with two global optima loses nothing") {
  // (x + y - 1)^2 + (w - theta)^2 with binary x, y: (1,0) and (0,1) tie.
  ProblemBuilder pb(1);
  const int x = pb.add_variables(2, true), y = x + 1;
  const int w = pb.add_variables(1);
  pb.add_quadratic(x, x, 2.0);
  pb.add_quadratic(y, y, 2.0);
  pb.add_quadratic(x, y, 2.0);
  pb.add_quadratic(w, w, 2.0);
  pb.add_linear(x, -2.0);
  pb.add_linear(y, -2.0);
  pb.add_linear_param(w, 0, -2.0);
  pb.add_constant(1.0);
  pb.add_bounds(x, 0, 1);
  pb.add_bounds(y, 0, 1);
  pb.add_bounds(w, -10, 10);
  ParametricMIQO prob = pb.build();

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StrategyBank bank;
  std::vector<Sample> samples;
  for (int i = 0; i < 100; ++i) {
    ParameterInstance p{Vector::Constant(1, u(rng)), ""};
    InstanceData inst = prob.instantiate(p);
    Vector opt(3);
    opt << (i < 96 ? 1.0 : 0.0), (i < 96 ? 0.0 : 1.0), p.theta[0];
    const int label = bank.add(extract_strategy(inst, opt, prob.integer_indices()));
    samples.push_back({p, label, inst.objective(opt)});
  }
  REQUIRE(bank.size() == 2);

  PruneOptions opts;
  opts.eps = 1e-6;
  auto res = prune(prob, samples, bank, opts);
  REQUIRE(res.detail.success);
  CHECK(res.bank.size() == 1);
  for (const auto& s : res.samples) {
    InstanceData inst = prob.instantiate(s.param);
    auto d = decode(inst, res.bank.at(s.label), prob.integer_indices(), nullptr);
    REQUIRE(d.ok);
    CHECK(inst.objective(d.x) == doctest::Approx(s.objective).epsilon(1e-9));
    CHECK(std::abs(inst.objective(d.x) + s.param.theta[0] * s.param.theta[0]) < 1e-8);
  }
}

TEST_CASE("explore and prune on a small fuel cell") {
  FuelCellConfig cfg;
  cfg.T = 3;
  ParametricMIQO prob = build_fuel_cell(cfg);
  SamplerSpec spec;
  spec.family = Family::FuelCell;
  spec.fuel = cfg;
  spec.radius = 0.5;
  spec.seed = 11;
  FuelCellState st;
  st.d_past.assign(cfg.T, 0);
  for (double load : {0.3, 0.8, 1.4})
    spec.base_points.push_back(fuel_cell_theta(cfg, st, std::vector<double>(cfg.T, load)));
  ParameterSource source = [&](long i) { return sample_parameters(spec, 1, {}, i).front(); };

  ExploreOptions eo;
  eo.max_samples = 200;
  auto ex = explore(prob, source, eo);
  CHECK(ex.final_N + ex.skipped >= 200);
  CHECK(ex.samples.size() == static_cast<std::size_t>(ex.final_N));
  REQUIRE(ex.bank.size() >= 2);

  FactorCache cache;
  cache.build(prob, ex.bank.strategies());
  PruneOptions po;
  po.eps = 1e-3;
  auto pr = prune(prob, ex.samples, ex.bank, po, &cache);
  REQUIRE(pr.detail.success);
  CHECK(pr.bank.size() <= ex.bank.size());
  for (const auto& s : pr.samples) {
    InstanceData inst = prob.instantiate(s.param);
    auto d = decode(inst, pr.bank.at(s.label), prob.integer_indices(), &cache);
    REQUIRE(d.ok);
    CHECK(violation(inst, d.x) <= kInfeasibilityTol);
    CHECK(inst.objective(d.x) <= prune_tolerance(s.objective, 1e-3) + 1e-9);
  }

  SUBCASE("bank JSON round trip") {
    auto j = bank_to_json(ex.bank, ex.samples, ex.trace, prob.content_hash());
    auto back = bank_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.problem_hash == prob.content_hash());
    REQUIRE(back.bank.size() == ex.bank.size());
    for (int l = 0; l < back.bank.size(); ++l) CHECK(back.bank.at(l) == ex.bank.at(l));
    REQUIRE(back.samples.size() == ex.samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
      CHECK(back.samples[i].label == ex.samples[i].label);
      CHECK(back.samples[i].objective == ex.samples[i].objective);
      CHECK((back.samples[i].param.theta - ex.samples[i].param.theta).norm() == 0.0);
    }
    REQUIRE(back.trace.size() == ex.trace.size());
    CHECK(back.trace.back().bound == ex.trace.back().bound);
    j["format"] = "bank-v0";
    CHECK_THROWS_AS(bank_from_json(j), FormatError);
  }
}

TEST_CASE("exploration does not depend on the thread count") {
  auto oracle = [](const ParameterInstance& p) -> std::optional<Solved> {
    const int i = static_cast<int>(p.theta[0]);
    if (i % 7 == 3) return std::nullopt;
    return Solved{tagged((i * i) % 11), double(i)};
  };
  ExploreOptions opts;
  opts.eps = 0.9;
  opts.beta = 0.5;
  opts.max_samples = 400;
  auto one = explore(dummy_source(), oracle, opts);
  opts.threads = 3;
  auto three = explore(dummy_source(), oracle, opts);
  CHECK(one.final_N == three.final_N);
  CHECK(one.skipped == three.skipped);
  CHECK(one.stop == three.stop);
  REQUIRE(one.samples.size() == three.samples.size());
  for (std::size_t i = 0; i < one.samples.size(); ++i) {
    CHECK(one.samples[i].param.id == three.samples[i].param.id);
    CHECK(one.samples[i].label == three.samples[i].label);
  }
}
