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

#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mlopt/pipeline.hpp"

using namespace mlopt;
namespace fs = std::filesystem;

namespace {

RunConfig small_fuel() {
  RunConfig c;
  c.family = Family::FuelCell;
  c.size = 3;
  c.base_steps = 20;
  c.max_samples = 300;
  c.hyper.depth = 1;
  c.hyper.width = 16;
  c.hyper.epochs = 10;
  c.k_grid = {1, 3};
  c.test_size = 20;
  c.seed = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mlopt_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("run config validation and JSON round trip") {
  RunConfig c = small_fuel();
  c.k_grid = {2, 7};
  c.prune_eps = 0.5;
  RunConfig back = run_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.k_grid == std::vector<int>{2, 7});

  RunConfig bad = c;
  bad.prune_eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = c;
  bad.k_grid = {0};
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = c;
  bad.explore_beta = 1.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"family", "boat"}}), Error);
}

TEST_CASE("test parameters are disjoint from the training stream") {
  GeneratedProblem g = generate_problem(small_fuel());
  auto train = training_source(g.sampler);
  auto test = test_parameters(g.sampler, 50);
  std::set<std::string> ids;
  for (long i = 0; i < 50; ++i) {
    ParameterInstance p = train(i);
    CHECK(p.id.rfind("train-", 0) == 0);
    ids.insert(p.id);
    for (const auto& t : test) CHECK((t.theta - p.theta).norm() > 0.0);
  }
  for (const auto& t : test) {
    CHECK(t.id.rfind("test-", 0) == 0);
    CHECK(ids.count(t.id) == 0);
  }
  // The stream is indexed, so re-drawing gives the same point.
  CHECK((train(7).theta - train(7).theta).norm() == 0.0);
}

TEST_CASE("generated problems have the configured size") {
  RunConfig c = small_fuel();
  CHECK(generate_problem(c).problem.p_dim() == 2 * c.size + 3);
  c.family = Family::Portfolio;
  c.size = 2;
  c.portfolio.n_assets = 6;
  c.base_steps = 5;
  GeneratedProblem p = generate_problem(c);
  CHECK(p.sampler.base_points.size() == 5u);
  CHECK(p.problem.matrices_parametric());
  c.family = Family::Motion;
  c.size = 1;
  GeneratedProblem m = generate_problem(c);
  CHECK(m.sampler.box_lower.size() == c.motion.dim);
}

TEST_CASE("constant parameters give one strategy and a constant model") {
  RunConfig c = small_fuel();
  c.radius = 0.0;
  c.explore_eps = 0.5;
  c.max_samples = 1000;
  GeneratedProblem g = generate_problem(c);
  g.sampler.base_points.resize(1);
  OfflineArtifacts a = run_offline(g.problem, g.sampler, c);
  CHECK(a.exploration.bank.size() == 1);
  CHECK(a.exploration.stop == StopReason::BoundReached);
  CHECK(a.pruned.bank.size() == 1);
  CHECK(a.model.output_size() == 1);
  OnlineSolver s(g.problem, a.pruned.bank, a.model, a.cache);
  OnlineResult r = s.solve(g.sampler.base_points[0], 10);
  CHECK(r.predicted == std::vector<int>{0});
  CHECK(r.evaluation.best().feasible());
  CHECK(r.evaluation.best().objective == doctest::Approx(a.exploration.samples[0].objective).epsilon(1e-6));
}

TEST_CASE("offline pipeline end to end on a small fuel cell") {
  RunConfig c = small_fuel();
  GeneratedProblem g = generate_problem(c);
  OfflineArtifacts a = run_offline(g.problem, g.sampler, c);
  REQUIRE(a.pruned.detail.success);
  CHECK(a.pruned.bank.size() <= a.exploration.bank.size());
  CHECK(a.model.output_size() == a.pruned.bank.size());
  CHECK(a.cache.enabled());
  CHECK(a.manifest["M"] == a.pruned.bank.size());

  SUBCASE("the run is deterministic") {
    OfflineArtifacts b = run_offline(g.problem, g.sampler, c);
    CHECK(b.model.content_hash() == a.model.content_hash());
    CHECK(bank_hash(b.pruned.bank) == bank_hash(a.pruned.bank));
    CHECK(b.exploration.final_N == a.exploration.final_N);
  }

  SUBCASE("saved artifacts reload and solve") {
    const fs::path dir = scratch("fuel");
    save_artifacts(dir.string(), g.problem, g.sampler, a);
    for (const char* f : {"problem.json", "sampler.json", "bank.json", "pruned_bank.json",
                          "model.bin", "model.json", "labels.json", "cache.bin",
                          "train_report.json", "manifest.json"})
      CHECK(fs::exists(dir / f));
    OnlineSolver s = OnlineSolver::load(dir.string());
    CHECK(s.cached());
    auto pts = solve_test_points(s.problem(), test_parameters(g.sampler, 10), 5);
    REQUIRE(!pts.empty());
    EvaluationOptions eo;
    eo.k_grid = {1, 3};
    eo.timing_repeats = 1;
    auto recs = evaluate_online(s, pts, eo);
    REQUIRE(recs.size() == 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(recs[0][i].k == 1);
      CHECK(recs[1][i].id == pts[i].param.id);
      // More candidates never give a worse best candidate.
      if (recs[0][i].feasible()) {
        REQUIRE(recs[1][i].feasible());
        CHECK(recs[1][i].objective <= recs[0][i].objective + 1e-9);
      }
      if (recs[1][i].feasible()) CHECK(recs[1][i].objective >= pts[i].f_star - 1e-6);
    }
    fs::remove_all(dir);
  }

  SUBCASE("mismatched artifacts are refused") {
    const fs::path dir = scratch("mismatch");
    save_artifacts(dir.string(), g.problem, g.sampler, a);
    RunConfig other = c;
    other.size = 4;
    GeneratedProblem g2 = generate_problem(other);
    save_problem(g2.problem, (dir / "problem.json").string());
    CHECK_THROWS_AS(OnlineSolver::load(dir.string()), ContractViolation);

    save_problem(g.problem, (dir / "problem.json").string());
    CHECK_NOTHROW(OnlineSolver::load(dir.string()));
    // A bank for the same problem that the model was not trained on.
    StrategyBank shuffled;
    for (int i = a.pruned.bank.size() - 1; i >= 0; --i) shuffled.add(a.pruned.bank.at(i));
    std::ofstream(dir / "pruned_bank.json")
        << bank_to_json(shuffled, {}, {}, g.problem.content_hash()).dump();
    if (shuffled.size() > 1) CHECK_THROWS_AS(OnlineSolver::load(dir.string()), ContractViolation);
    fs::remove_all(dir);
  }
}

TEST_CASE("portfolio artifacts have no factor cache") {
  RunConfig c;
  c.family = Family::Portfolio;
  c.size = 2;
  c.portfolio.n_assets = 5;
  c.portfolio.factors = 2;
  c.base_steps = 5;
  c.max_samples = 60;
  c.hyper.depth = 1;
  c.hyper.width = 8;
  c.hyper.epochs = 5;
  GeneratedProblem g = generate_problem(c);
  OfflineArtifacts a = run_offline(g.problem, g.sampler, c);
  CHECK_FALSE(a.cache.enabled());
  const fs::path dir = scratch("portfolio");
  save_artifacts(dir.string(), g.problem, g.sampler, a);
  CHECK_FALSE(fs::exists(dir / "cache.bin"));
  OnlineSolver s = OnlineSolver::load(dir.string());
  CHECK_FALSE(s.cached());
  OnlineResult r = s.solve(g.sampler.base_points[0], 3);
  CHECK(r.evaluation.ranked.size() == r.predicted.size());
  fs::remove_all(dir);
}

TEST_CASE("an unreachable pruning tolerance is a prune stage failure") {
  RunConfig c = small_fuel();
  c.prune_eps = 1e-300;
  c.prune_max_it = 1;
  GeneratedProblem g = generate_problem(c);
  try {
    run_offline(g.problem, g.sampler, c);
    // Possible only if one strategy already covers every sample exactly.
    MESSAGE("pruning succeeded at the tiny tolerance");
  } catch (const StageFailure& e) {
    CHECK(e.stage == "prune");
  }
}
