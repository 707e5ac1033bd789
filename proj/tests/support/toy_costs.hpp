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

#include <random>
#include <vector>

#include "mlopt/strategy_bank.hpp"

namespace mlopt::testing {

struct ToyCosts {
  std::vector<std::vector<double>> F;
  std::vector<double> f_star;
  std::vector<int> labels;
};

// Each row gets its optimum at a random column; other entries are random
// degradations or infeasible.
inline ToyCosts random_toy(std::mt19937_64& rng, int N, int M) {
  ToyCosts t;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::discrete_distribution<int> skew({8, 4, 2, 1, 1, 1});
  for (int i = 0; i < N; ++i) {
    const int own = M == 6 ? skew(rng) : static_cast<int>(rng() % M);
    const double f = 1.0 + 9.0 * u(rng);
    std::vector<double> row(M);
    for (int j = 0; j < M; ++j) {
      const double r = u(rng);
      if (j == own) row[j] = f;
      else if (r < 0.4) row[j] = kInf;
      else if (r < 0.7) row[j] = f * (1.0 + 1e-4 * u(rng));
      else row[j] = f * (1.0 + 0.1 * u(rng));
    }
    t.F.push_back(row);
    t.f_star.push_back(f);
    t.labels.push_back(own);
  }
  return t;
}

inline AssignmentCost matrix_cost(const std::vector<std::vector<double>>& F) {
  return [&F](int i, int j) { return F[i][j]; };
}

}  // namespace mlopt::testing
