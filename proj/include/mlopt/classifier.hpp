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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlopt/common.hpp"
#include "mlopt/kkt.hpp"

namespace mlopt {

/// Feedforward ReLU network with raw logits at the output. Inputs are
/// standardized with the stored mean and scale before the first layer.
struct NetworkModel {
  std::vector<Matrix> W;  // W[l] is n_l x n_{l-1}
  std::vector<Vector> b;
  Vector input_mean;
  Vector input_scale;
  /// Output index -> strategy label, and the label's strategy hash (0 when
  /// unknown). Identity labels unless the caller remaps.
  std::vector<int> labels;
  std::vector<std::uint64_t> label_hashes;
  nlohmann::json metadata = nlohmann::json::object();

  int input_size() const { return W.empty() ? 0 : static_cast<int>(W.front().cols()); }
  int output_size() const { return W.empty() ? 0 : static_cast<int>(W.back().rows()); }
  int num_layers() const { return static_cast<int>(W.size()); }
  long macs_per_forward() const;

  /// Throws DimensionError on inconsistent shapes, FormatError on non-finite
  /// weights.
  void validate() const;
  std::uint64_t content_hash() const;
};

/// Plain network with the given layer sizes (input first), Xavier-uniform
/// weights, zero biases and identity standardization.
NetworkModel make_network(const std::vector<int>& sizes, std::uint64_t seed);
/// All-zero network with the given layer sizes.
NetworkModel zero_network(const std::vector<int>& sizes);

Vector forward(const NetworkModel& m, const Vector& theta, OpCounter* counter = nullptr);
/// Columns of `X` are inputs; columns of the result are logits.
Matrix forward_batch(const NetworkModel& m, const Matrix& X);

Vector softmax(const Vector& logits);

/// Output positions sorted by decreasing logit, ties to the lower position.
std::vector<int> topk_positions(const Vector& logits, int k);
/// The k most likely strategy labels.
std::vector<int> predict_topk(const NetworkModel& m, const Vector& theta, int k,
                              OpCounter* counter = nullptr);

struct Gradients {
  std::vector<Matrix> dW;
  std::vector<Vector> db;
};

/// Mean softmax cross-entropy over the columns of X (raw inputs, after the
/// model's standardization), and its gradient when `grad` is given.
double cross_entropy(const NetworkModel& m, const Matrix& X, std::span<const int> targets,
                     Gradients* grad = nullptr);

struct Hyperparams {
  int depth = 3;   // hidden layers
  int width = 32;  // units per hidden layer
  double learning_rate = 1e-2;
  int batch_size = 64;
  int epochs = 20;
  double momentum = 0.9;  // 0 gives plain SGD
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};
nlohmann::json to_json(const Hyperparams& h);
void from_json(const nlohmann::json& j, Hyperparams& h);

struct Dataset {
  std::vector<Vector> inputs;
  std::vector<int> targets;  // output positions in [0, num_classes)
  int num_classes = 0;
};

struct TrainReport {
  std::vector<double> loss;  // full training loss after each epoch
  std::vector<double> train_accuracy;
  std::vector<double> validation_accuracy;
  Hyperparams hyper;
  int train_size = 0;
  int validation_size = 0;
  bool stopped_early = false;
  nlohmann::json to_json() const;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainReport report)
      : Error(what), report(std::move(report)) {}
  TrainReport report;
};

/// Called after every epoch with (epoch index, validation accuracy); returning
/// false stops training.
using EpochCallback = std::function<bool(int, double)>;

struct TrainResult {
  NetworkModel model;
  TrainReport report;
};

/// Minibatch SGD on softmax cross-entropy with a seeded 80/20 split and a
/// seeded shuffle every epoch. A single class yields a constant model.
TrainResult train(const Dataset& data, const Hyperparams& h, const EpochCallback& on_epoch = {});

/// Search space for tune().
struct SearchSpace {
  int depth_lo = 3, depth_hi = 15;
  int width_lo = 4, width_hi = 128;
  double lr_lo = 1e-5, lr_hi = 1e-1;
  int batch_lo = 32, batch_hi = 256;
  int epochs_lo = 5, epochs_hi = 30;
};

struct TrialRecord {
  Hyperparams hyper;
  double validation_accuracy = 0.0;
  bool pruned = false;
  int epochs_run = 0;
};

struct TuneResult {
  Hyperparams best;
  double best_validation_accuracy = 0.0;
  std::vector<TrialRecord> trials;
};

/// Random search with median stopping: a trial stops once its validation
/// accuracy falls below the median of the earlier complete trials at the
/// same epoch (after `warmup_epochs`).
TuneResult tune(const Dataset& data, int budget, std::uint64_t seed, const SearchSpace& space = {},
                int warmup_epochs = 2);

double accuracy(const NetworkModel& m, const Dataset& data, std::span<const int> indices);

/// Binary weights plus JSON metadata plus a label map.
void save_model(const NetworkModel& m, const std::string& bin_path, const std::string& json_path,
                const std::string& labels_path);
NetworkModel load_model(const std::string& bin_path, const std::string& json_path,
                        const std::string& labels_path);

}  // namespace mlopt
