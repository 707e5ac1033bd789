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

#include "mlopt/miqo_solver.hpp"

#include <chrono>
#include <cmath>
#include <queue>

namespace mlopt {

const char* to_string(MIQOStatus s) {
  switch (s) {
    case MIQOStatus::Optimal: return "optimal";
    case MIQOStatus::Infeasible: return "infeasible";
    case MIQOStatus::NodeLimit: return "node_limit";
  }
  return "unknown";
}

std::vector<VarBound> implied_integer_bounds(const InstanceData& inst,
                                             std::span<const int> integer_indices) {
  std::vector<double> lo(inst.n, -kInf), hi(inst.n, kInf);
  for (int i = 0; i < inst.m; ++i) {
    int nnz = 0, col = -1;
    double a = 0.0;
    for (SparseRowMatrix::InnerIterator it(inst.A, i); it; ++it) {
      if (it.value() == 0.0) continue;
      ++nnz;
      col = it.col();
      a = it.value();
    }
    if (nnz != 1) continue;
    double v = inst.b[i] / a;
    if (a > 0) hi[col] = std::min(hi[col], v);
    else lo[col] = std::max(lo[col], v);
  }
  std::vector<VarBound> out;
  for (int j : integer_indices) {
    if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]))
      throw ContractViolation("integer variable " + std::to_string(j) +
                              " has no explicit bound rows");
    out.push_back({j, std::ceil(lo[j] - 1e-9), std::floor(hi[j] + 1e-9)});
  }
  return out;
}

namespace {

struct Node {
  std::vector<double> lo, hi;
  double bound = 0.0;
  QPWarmStart warm;
  long id = 0;
  int depth = 0;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id < b.id;
  }
};

}  // namespace

MIQOResult solve_miqo(const InstanceData& inst, std::span<const int> integer_indices,
                      const MIQOOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  MIQOResult out;
  ActiveSetQP qp(inst);
  const int d = static_cast<int>(integer_indices.size());
  auto finish = [&]() {
    out.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  };
  if (d == 0) {
    QPResult r = qp.solve({}, {}, {}, opts.qp);
    out.nodes = 1;
    if (r.status == QPStatus::Optimal) {
      out.status = MIQOStatus::Optimal;
      out.x = r.x;
      out.objective = r.objective;
      out.incumbent_trace.push_back(r.objective);
    } else if (r.status != QPStatus::Infeasible) {
      throw OracleExhausted(std::string("continuous relaxation failed: ") + to_string(r.status));
    }
    return finish();
  }

  const auto root_bounds = implied_integer_bounds(inst, integer_indices);
  std::vector<double> root_lo(d), root_hi(d);
  for (int k = 0; k < d; ++k) {
    root_lo[k] = root_bounds[k].lower;
    root_hi[k] = root_bounds[k].upper;
  }

  double incumbent = kInf;
  Vector best_x;
  long next_id = 0;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  bool limit_hit = false;

  auto evaluate = [&](std::vector<double> lo, std::vector<double> hi, const QPWarmStart* warm,
                      int depth) {
    if (out.nodes >= opts.node_limit) {
      limit_hit = true;
      return;
    }
    ++out.nodes;
    std::vector<FixedValue> fixed;
    std::vector<VarBound> bounds;
    for (int k = 0; k < d; ++k) {
      if (lo[k] > hi[k]) return;
      const int j = integer_indices[k];
      if (lo[k] == hi[k]) {
        fixed.push_back({j, lo[k]});
      } else if (lo[k] > root_lo[k] || hi[k] < root_hi[k]) {
        bounds.push_back({j, lo[k] > root_lo[k] ? lo[k] : -kInf,
                          hi[k] < root_hi[k] ? hi[k] : kInf});
      }
    }
    QPResult r = qp.solve({}, fixed, bounds, opts.qp, warm);
    if (r.status == QPStatus::Infeasible) return;
    if (r.status != QPStatus::Optimal)
      throw OracleExhausted(std::string("node relaxation failed: ") + to_string(r.status));
    if (r.objective >= incumbent - opts.abs_gap) return;
    // Most fractional integer variable, ties to the lowest index.
    int branch = -1;
    double best_frac = opts.int_tol;
    for (int k = 0; k < d; ++k) {
      double v = r.x[integer_indices[k]];
      double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > best_frac) {
        best_frac = frac;
        branch = k;
      }
    }
    if (branch < 0) {
      incumbent = r.objective;
      best_x = r.x;
      out.incumbent_trace.push_back(incumbent);
      return;
    }
    Node node;
    node.lo = std::move(lo);
    node.hi = std::move(hi);
    node.bound = r.objective;
    node.warm.x = std::move(r.x);
    node.warm.active_rows = std::move(r.active_rows);
    node.id = next_id++;
    node.depth = depth;
    // Branching variable is found again on expansion from the stored point.
    open.push(std::move(node));
  };

  evaluate(root_lo, root_hi, nullptr, 0);
  while (!open.empty() && !limit_hit) {
    Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - opts.abs_gap) break;
    int branch = -1;
    double best_frac = opts.int_tol;
    for (int k = 0; k < d; ++k) {
      double v = node.warm.x[integer_indices[k]];
      double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > best_frac) {
        best_frac = frac;
        branch = k;
      }
    }
    const double v = node.warm.x[integer_indices[branch]];
    auto down_hi = node.hi;
    down_hi[branch] = std::floor(v);
    auto up_lo = node.lo;
    up_lo[branch] = std::ceil(v);
    evaluate(node.lo, std::move(down_hi), &node.warm, node.depth + 1);
    evaluate(std::move(up_lo), node.hi, &node.warm, node.depth + 1);
  }

  if (limit_hit) {
    if (!opts.return_incumbent_on_limit)
      throw OracleExhausted("branch-and-bound node limit reached");
    out.status = MIQOStatus::NodeLimit;
    if (!std::isfinite(incumbent)) return finish();
  } else if (!std::isfinite(incumbent)) {
    out.status = MIQOStatus::Infeasible;
    return finish();
  } else {
    out.status = MIQOStatus::Optimal;
  }

  // Polish: re-solve with the integer part fixed at its rounded values.
  std::vector<FixedValue> fixed;
  for (int k = 0; k < d; ++k)
    fixed.push_back({integer_indices[k], std::round(best_x[integer_indices[k]])});
  QPWarmStart warm{best_x, {}};
  QPResult polished = qp.solve({}, fixed, {}, opts.qp, &warm);
  if (polished.status == QPStatus::Optimal &&
      polished.objective <= incumbent + std::max(opts.abs_gap, 1e-9 * std::abs(incumbent))) {
    out.x = polished.x;
    out.objective = polished.objective;
  } else {
    out.x = best_x;
    out.objective = incumbent;
  }
  return finish();
}

MIQOResult enumerate_oracle(const InstanceData& inst, std::span<const int> integer_indices,
                            const QPOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = static_cast<int>(integer_indices.size());
  if (d > 12) throw OracleExhausted("enumeration limit exceeded (2^d > 4096)");
  const auto bounds = implied_integer_bounds(inst, integer_indices);
  for (const auto& b : bounds)
    if (b.lower < 0.0 || b.upper > 1.0)
      throw ContractViolation("enumeration requires binary integer variables");
  ActiveSetQP qp(inst);
  MIQOResult out;
  const long combos = 1L << d;
  for (long mask = 0; mask < combos; ++mask) {
    std::vector<FixedValue> fixed;
    for (int k = 0; k < d; ++k) fixed.push_back({integer_indices[k], (mask >> k) & 1L ? 1.0 : 0.0});
    QPResult r = qp.solve({}, fixed, {}, opts);
    ++out.nodes;
    if (r.status == QPStatus::Optimal && r.objective < out.objective) {
      out.objective = r.objective;
      out.x = r.x;
      out.incumbent_trace.push_back(r.objective);
    }
  }
  out.status = std::isfinite(out.objective) ? MIQOStatus::Optimal : MIQOStatus::Infeasible;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace mlopt
