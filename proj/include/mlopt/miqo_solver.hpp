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

#include <span>
#include <vector>

#include "mlopt/problem.hpp"
#include "mlopt/qp_solver.hpp"

namespace mlopt {

struct MIQOOptions {
  double abs_gap = 1e-6;
  double int_tol = 1e-6;
  long node_limit = 1'000'000;
  /// When set, hitting the node limit returns the incumbent (status NodeLimit,
  /// empty x when none was found) instead of throwing OracleExhausted. Used
  /// to emulate a time-limited heuristic baseline.
  bool return_incumbent_on_limit = false;
  QPOptions qp;
};

enum class MIQOStatus { Optimal, Infeasible, NodeLimit };

const char* to_string(MIQOStatus s);

struct MIQOResult {
  MIQOStatus status = MIQOStatus::Infeasible;
  Vector x;
  double objective = kInf;
  long nodes = 0;
  double seconds = 0.0;
  /// Incumbent objective after each improvement, in order.
  std::vector<double> incumbent_trace;
};

/// Finite bounds implied by single-variable rows of A. Throws
/// ContractViolation when an integer variable is unbounded on either side.
std::vector<VarBound> implied_integer_bounds(const InstanceData& inst,
                                             std::span<const int> integer_indices);

/// Best-first branch-and-bound on the integer variables. Branches on the most
/// fractional variable (ties to the lowest index); among equal bounds the most
/// recently created node is expanded first.
MIQOResult solve_miqo(const InstanceData& inst, std::span<const int> integer_indices,
                      const MIQOOptions& opts = {});

inline constexpr int kEnumerationLimit = 4096;

/// Solves the QP for every binary assignment and keeps the best feasible one.
MIQOResult enumerate_oracle(const InstanceData& inst, std::span<const int> integer_indices,
                            const QPOptions& opts = {});

}  // namespace mlopt
