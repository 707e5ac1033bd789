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

#include "mlopt/strategy_bank.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <thread>

namespace mlopt {

int StrategyBank::add(const Strategy& s) {
  if (auto found = find(s)) return *found;
  const int label = size();
  strategies_.push_back(s);
  by_hash_[s.hash()].push_back(label);
  return label;
}

std::optional<int> StrategyBank::find(const Strategy& s) const {
  auto it = by_hash_.find(s.hash());
  if (it == by_hash_.end()) return std::nullopt;
  for (int label : it->second)
    if (strategies_[label] == s) return label;
  return std::nullopt;
}

double good_turing_bound(long N, long N1, double beta) {
  if (N <= 0) return kInf;
  if (!(beta > 0.0 && beta < 1.0)) throw ContractViolation("beta must lie in (0, 1)");
  const double G = static_cast<double>(N1) / static_cast<double>(N);
  return G + kGoodTuringC * std::sqrt(std::log(3.0 / beta) / static_cast<double>(N));
}

long good_turing_min_samples(double eps, double beta) {
  if (!(eps > 0.0)) throw ContractViolation("eps must be positive");
  const double c = kGoodTuringC * kGoodTuringC * std::log(3.0 / beta) / (eps * eps);
  long N = static_cast<long>(std::ceil(c));
  // Guard against rounding at the boundary.
  while (N > 1 && good_turing_bound(N - 1, 0, beta) <= eps) --N;
  while (good_turing_bound(N, 0, beta) > eps) ++N;
  return N;
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::BoundReached: return "bound_reached";
    case StopReason::MaxSamples: return "max_samples";
  }
  return "?";
}

ExplorationResult explore(const ParameterSource& source, const StrategyOracle& oracle,
                          const ExploreOptions& opts) {
  if (!(opts.eps > 0.0)) throw ContractViolation("eps must be positive");
  if (!(opts.beta > 0.0 && opts.beta < 1.0)) throw ContractViolation("beta must lie in (0, 1)");
  if (opts.max_samples <= 0) throw ContractViolation("max_samples must be positive");
  ExplorationResult out;
  std::vector<long> count;
  long N = 0, N1 = 0;
  double bound = kInf;
  const int threads = std::max(1, opts.threads);
  long draw = 0;
  bool stop = false;
  // Oracle calls run in batches of `threads`; results are consumed in draw
  // order, so the outcome does not depend on the thread count.
  while (!stop && N < opts.max_samples) {
    std::vector<ParameterInstance> params;
    for (int t = 0; t < threads; ++t) params.push_back(source(draw + t));
    std::vector<std::optional<Solved>> solved(params.size());
    if (threads == 1) {
      solved[0] = oracle(params[0]);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] { solved[t] = oracle(params[t]); });
      for (auto& th : pool) th.join();
    }
    for (std::size_t t = 0; t < params.size() && N < opts.max_samples; ++t, ++draw) {
      if (!solved[t]) {
        ++out.skipped;
        out.log.push_back("skipped draw " + std::to_string(draw) +
                          (params[t].id.empty() ? "" : " (" + params[t].id + ")") +
                          ": oracle failed");
        if (out.skipped > opts.max_samples)
          throw OracleExhausted("exploration: oracle failed on " + std::to_string(out.skipped) +
                                " draws");
        continue;
      }
      const int label = out.bank.add(solved[t]->strategy);
      if (label == static_cast<int>(count.size())) count.push_back(0);
      long& c = count[label];
      if (c == 0) ++N1;
      else if (c == 1) --N1;
      ++c;
      ++N;
      out.samples.push_back(Sample{std::move(params[t]), label, solved[t]->objective});
      bound = good_turing_bound(N, N1, opts.beta);
      if (opts.keep_trace) out.trace.push_back({N, N1, bound});
      if (bound <= opts.eps) {
        out.stop = StopReason::BoundReached;
        stop = true;
        break;
      }
    }
  }
  out.final_N = N;
  out.final_N1 = N1;
  out.final_bound = bound;
  return out;
}

StrategyOracle exact_oracle(const ParametricMIQO& problem, const MIQOOptions& opts) {
  return [&problem, opts](const ParameterInstance& p) -> std::optional<Solved> {
    try {
      InstanceData inst = problem.instantiate(p);
      MIQOResult r = solve_miqo(inst, problem.integer_indices(), opts);
      if (r.status != MIQOStatus::Optimal) return std::nullopt;
      return Solved{extract_strategy(inst, r.x, problem.integer_indices()), r.objective};
    } catch (const NonIntegralSolution&) {
      return std::nullopt;
    } catch (const OracleExhausted&) {
      return std::nullopt;
    }
  };
}

ExplorationResult explore(const ParametricMIQO& problem, const ParameterSource& source,
                          const ExploreOptions& opts) {
  return explore(source, exact_oracle(problem, opts.solver), opts);
}

std::vector<int> select_frequent(std::span<const int> labels, int num_strategies, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractViolation("alpha must lie in [0, 1)");
  std::vector<long> count(num_strategies, 0);
  for (int l : labels) {
    if (l < 0 || l >= num_strategies) throw DimensionError("label out of range");
    ++count[l];
  }
  std::vector<int> order(num_strategies);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return count[a] > count[b]; });
  const double N = static_cast<double>(labels.size());
  const long threshold = static_cast<long>(std::ceil((1.0 - alpha) * N - 1e-9));
  std::vector<int> selected;
  long t = 0;
  for (int l : order) {
    if (count[l] == 0) break;
    t += count[l];
    selected.push_back(l);
    if (t > threshold) break;
  }
  return selected;
}

double prune_tolerance(double f_star, double eps) {
  if (std::isinf(eps)) return kInf;
  return f_star + eps * std::abs(f_star);
}

PruneResult prune(std::span<const int> labels, std::span<const double> f_star,
                  int num_strategies, const AssignmentCost& cost, const PruneOptions& opts) {
  if (labels.size() != f_star.size()) throw DimensionError("prune: labels and f* differ in size");
  if (opts.max_it <= 0) throw ContractViolation("prune: max_it must be positive");
  const std::size_t N = labels.size();
  const auto key = [&](int i, int j) {
    return static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(num_strategies) +
           static_cast<std::uint64_t>(j);
  };
  // Costs survive across iterations: halving alpha only grows the selection.
  std::unordered_map<std::uint64_t, double> memo;

  PruneResult res;
  double alpha = opts.alpha0;
  for (int it = 1; it <= opts.max_it; ++it, alpha /= 2.0) {
    res.iterations = it;
    res.alpha = alpha;
    std::vector<int> selected = select_frequent(labels, num_strategies, alpha);
    std::vector<int> position(num_strategies, -1);
    for (std::size_t k = 0; k < selected.size(); ++k) position[selected[k]] = static_cast<int>(k);

    std::vector<std::pair<int, int>> todo;
    for (std::size_t i = 0; i < N; ++i) {
      if (position[labels[i]] >= 0) continue;
      for (int j : selected)
        if (!memo.count(key(static_cast<int>(i), j))) todo.emplace_back(static_cast<int>(i), j);
    }
    std::vector<double> values(todo.size());
    const int workers = std::clamp<int>(opts.threads, 1, std::max<int>(1, static_cast<int>(todo.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t t; (t = next.fetch_add(1)) < todo.size();) {
        const double v = cost(todo[t].first, todo[t].second);
        values[t] = std::isnan(v) ? kInf : v;
      }
    };
    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    }
    for (std::size_t t = 0; t < todo.size(); ++t)
      memo.emplace(key(todo[t].first, todo[t].second), values[t]);

    std::vector<int> new_labels(N);
    std::vector<double> r(N);
    bool ok = true;
    for (std::size_t i = 0; i < N; ++i) {
      if (position[labels[i]] >= 0) {
        new_labels[i] = position[labels[i]];
        r[i] = f_star[i];
        continue;
      }
      // Ties go to the earlier (more frequent) selected strategy.
      double best = kInf;
      int best_k = 0;
      for (std::size_t k = 0; k < selected.size(); ++k) {
        const double v = memo.at(key(static_cast<int>(i), selected[k]));
        if (v < best) {
          best = v;
          best_k = static_cast<int>(k);
        }
      }
      new_labels[i] = best_k;
      r[i] = best;
      if (!(best <= prune_tolerance(f_star[i], opts.eps))) ok = false;
    }
    if (ok) {
      res.success = true;
      res.selected = std::move(selected);
      res.labels = std::move(new_labels);
      res.reassigned = std::move(r);
      break;
    }
  }
  if (!res.success) {
    res.labels.assign(labels.begin(), labels.end());
    res.reassigned.assign(f_star.begin(), f_star.end());
  }
  res.cost_evaluations = static_cast<long>(memo.size());
  return res;
}

BankPruneResult prune(const ParametricMIQO& problem, std::span<const Sample> samples,
                      const StrategyBank& bank, const PruneOptions& opts,
                      const FactorCache* cache) {
  std::vector<int> labels(samples.size());
  std::vector<double> f_star(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels[i] = samples[i].label;
    f_star[i] = samples[i].objective;
  }
  AssignmentCost cost = [&](int i, int j) {
    const InstanceData inst = problem.instantiate(samples[i].param);
    DecodeResult d = decode(inst, bank.at(j), problem.integer_indices(), cache);
    if (!d.ok || violation(inst, d.x) > kInfeasibilityTol) return kInf;
    return inst.objective(d.x);
  };

  BankPruneResult out;
  out.detail = prune(labels, f_star, bank.size(), cost, opts);
  if (!out.detail.success) {
    out.bank = bank;
    out.samples.assign(samples.begin(), samples.end());
    return out;
  }
  for (int old : out.detail.selected) out.bank.add(bank.at(old));
  out.samples.assign(samples.begin(), samples.end());
  for (std::size_t i = 0; i < samples.size(); ++i) out.samples[i].label = out.detail.labels[i];
  return out;
}

MiloPruneResult prune_exact_milo(const std::vector<std::vector<double>>& F,
                                 std::span<const double> f_star, double eps) {
  const int N = static_cast<int>(F.size());
  if (static_cast<std::size_t>(N) != f_star.size())
    throw DimensionError("prune_exact_milo: F and f* differ in size");
  const int M = N == 0 ? 0 : static_cast<int>(F[0].size());
  for (const auto& row : F)
    if (static_cast<int>(row.size()) != M) throw DimensionError("prune_exact_milo: ragged F");
  if (static_cast<long>(N) * M > 5000)
    throw ContractViolation("prune_exact_milo: N*M above 5000");

  MiloPruneResult out;
  out.selected.assign(M, 0);
  out.assignment.assign(N, -1);
  if (N == 0) {
    out.status = MIQOStatus::Optimal;
    return out;
  }

  ProblemBuilder pb(0);
  const int p0 = pb.add_variables(M, true);
  for (int j = 0; j < M; ++j) {
    pb.add_linear(p0 + j, 1.0);
    pb.add_bounds(p0 + j, 0.0, 1.0);
  }
  std::vector<std::vector<std::pair<int, int>>> z(N);  // (j, variable)
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < M; ++j) {
      if (!std::isfinite(F[i][j])) continue;
      const int v = pb.add_variables(1, true);
      pb.add_bounds(v, 0.0, 1.0);
      pb.add_le({{v, 1.0}, {p0 + j, -1.0}}, 0.0);
      z[i].emplace_back(j, v);
    }
    if (z[i].empty()) return out;  // no admissible strategy for sample i
    ProblemBuilder::Terms cover, value;
    for (auto [j, v] : z[i]) {
      cover.emplace_back(v, 1.0);
      value.emplace_back(v, F[i][j]);
    }
    pb.add_eq(cover, 1.0);
    const double tol = prune_tolerance(f_star[i], eps);
    if (std::isfinite(tol)) pb.add_le(value, tol);
  }

  ParametricMIQO milo = pb.build();
  InstanceData inst = milo.instantiate(Vector(0));
  MIQOResult r = solve_miqo(inst, milo.integer_indices());
  out.status = r.status;
  if (r.status != MIQOStatus::Optimal) return out;
  for (int j = 0; j < M; ++j) {
    out.selected[j] = r.x[p0 + j] > 0.5;
    out.count += out.selected[j];
  }
  for (int i = 0; i < N; ++i)
    for (auto [j, v] : z[i])
      if (r.x[v] > 0.5) out.assignment[i] = j;
  return out;
}

nlohmann::json bank_to_json(const StrategyBank& bank, std::span<const Sample> samples,
                            std::span<const ExplorationStep> trace, std::uint64_t problem_hash) {
  nlohmann::json j;
  j["format"] = "bank-v1";
  j["problem_hash"] = hex_digest(problem_hash);
  auto& strategies = j["strategies"] = nlohmann::json::array();
  for (const Strategy& s : bank.strategies()) strategies.push_back(strategy_to_json(s));
  auto& js = j["samples"] = nlohmann::json::array();
  for (const Sample& s : samples) {
    js.push_back({{"id", s.param.id},
                  {"theta", std::vector<double>(s.param.theta.begin(), s.param.theta.end())},
                  {"label", s.label},
                  {"objective", s.objective}});
  }
  std::vector<long> Ns, N1s;
  std::vector<double> bounds;
  for (const auto& st : trace) {
    Ns.push_back(st.N);
    N1s.push_back(st.N1);
    bounds.push_back(st.bound);
  }
  j["trace"] = {{"N", Ns}, {"N1", N1s}, {"bound", bounds}};
  return j;
}

LoadedBank bank_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "bank-v1")
      throw FormatError("bank: unknown format '" + j.at("format").get<std::string>() + "'");
    LoadedBank out;
    out.problem_hash = parse_hex_digest(j.at("problem_hash").get<std::string>());
    for (const auto& s : j.at("strategies")) {
      const int before = out.bank.size();
      if (out.bank.add(strategy_from_json(s)) != before)
        throw FormatError("bank: duplicate strategy");
    }
    for (const auto& s : j.at("samples")) {
      Sample smp;
      smp.param.id = s.at("id").get<std::string>();
      auto theta = s.at("theta").get<std::vector<double>>();
      smp.param.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
      smp.label = s.at("label").get<int>();
      if (smp.label < 0 || smp.label >= out.bank.size()) throw FormatError("bank: label out of range");
      smp.objective = s.at("objective").is_null() ? kInf : s.at("objective").get<double>();
      out.samples.push_back(std::move(smp));
    }
    const auto& t = j.at("trace");
    auto Ns = t.at("N").get<std::vector<long>>();
    auto N1s = t.at("N1").get<std::vector<long>>();
    const auto& bounds = t.at("bound");
    if (N1s.size() != Ns.size() || bounds.size() != Ns.size())
      throw FormatError("bank: trace columns differ in length");
    for (std::size_t k = 0; k < Ns.size(); ++k)
      out.trace.push_back({Ns[k], N1s[k], bounds[k].is_null() ? kInf : bounds[k].get<double>()});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bank: ") + e.what());
  }
}

}  // namespace mlopt
