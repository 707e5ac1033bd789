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

#include "mlopt/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mlopt {

namespace {

constexpr char kMagic[8] = {'M', 'L', 'N', 'E', 'T', '0', '0', '1'};

Matrix standardize(const NetworkModel& m, const Matrix& X) {
  return ((X.colwise() - m.input_mean).array().colwise() / m.input_scale.array()).matrix();
}

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
void put_doubles(std::string& out, const double* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n * sizeof(double));
}

std::string serialize(const NetworkModel& m) {
  std::string out(kMagic, sizeof(kMagic));
  put(out, static_cast<std::uint32_t>(m.num_layers()));
  put(out, static_cast<std::uint32_t>(m.input_size()));
  for (const auto& W : m.W) put(out, static_cast<std::uint32_t>(W.rows()));
  put_doubles(out, m.input_mean.data(), m.input_mean.size());
  put_doubles(out, m.input_scale.data(), m.input_scale.size());
  for (int l = 0; l < m.num_layers(); ++l) {
    // Row-major weight block, then the bias.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Wr = m.W[l];
    put_doubles(out, Wr.data(), Wr.size());
    put_doubles(out, m.b[l].data(), m.b[l].size());
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void doubles(double* p, std::size_t n) { take(p, n * sizeof(double)); }
  bool done() const { return pos_ == data_.size(); }

 private:
  void take(void* p, std::size_t n) {
    if (data_.size() - pos_ < n) throw FormatError("model file truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

NetworkModel deserialize(std::string bytes) {
  Reader r(std::move(bytes));
  char magic[8];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError("not a model file");
  const auto L = r.get<std::uint32_t>();
  const auto p = r.get<std::uint32_t>();
  if (L == 0 || L > 1000 || p == 0 || p > 1'000'000) throw FormatError("model header out of range");
  std::vector<int> sizes{static_cast<int>(p)};
  for (std::uint32_t l = 0; l < L; ++l) {
    const auto n = r.get<std::uint32_t>();
    if (n == 0 || n > 10'000'000) throw FormatError("model layer size out of range");
    sizes.push_back(static_cast<int>(n));
  }
  NetworkModel m = zero_network(sizes);
  r.doubles(m.input_mean.data(), p);
  r.doubles(m.input_scale.data(), p);
  for (std::uint32_t l = 0; l < L; ++l) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Wr(sizes[l + 1], sizes[l]);
    r.doubles(Wr.data(), Wr.size());
    m.W[l] = Wr;
    r.doubles(m.b[l].data(), m.b[l].size());
  }
  if (!r.done()) throw FormatError("trailing bytes in model file");
  if (!(m.input_scale.array() > 0.0).all()) throw FormatError("model input scale must be positive");
  m.validate();
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << data;
  if (!out) throw Error("write failed: " + path);
}

Matrix gather(const Dataset& d, std::span<const int> idx) {
  Matrix X(d.inputs.front().size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) X.col(static_cast<Eigen::Index>(k)) = d.inputs[idx[k]];
  return X;
}

std::vector<int> gather_targets(const Dataset& d, std::span<const int> idx) {
  std::vector<int> t(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) t[k] = d.targets[idx[k]];
  return t;
}

// Loss over a large index set, evaluated in chunks.
double dataset_loss(const NetworkModel& m, const Dataset& d, std::span<const int> idx) {
  constexpr std::size_t kChunk = 1024;
  double total = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += kChunk) {
    auto part = idx.subspan(s, std::min(kChunk, idx.size() - s));
    total += cross_entropy(m, gather(d, part), gather_targets(d, part)) * part.size();
  }
  return idx.empty() ? 0.0 : total / idx.size();
}

}  // namespace

long NetworkModel::macs_per_forward() const {
  long macs = 0;
  for (const auto& w : W) macs += static_cast<long>(w.rows()) * w.cols();
  return macs;
}

void NetworkModel::validate() const {
  if (W.empty()) throw DimensionError("network has no layers");
  if (b.size() != W.size()) throw DimensionError("network: bias count differs from layer count");
  for (std::size_t l = 0; l < W.size(); ++l) {
    if (b[l].size() != W[l].rows()) throw DimensionError("network: bias size mismatch");
    if (l > 0 && W[l].cols() != W[l - 1].rows()) throw DimensionError("network: layer chain mismatch");
    if (!W[l].allFinite() || !b[l].allFinite()) throw FormatError("network: non-finite weights");
  }
  if (input_mean.size() != input_size() || input_scale.size() != input_size())
    throw DimensionError("network: standardization size mismatch");
  if (static_cast<int>(labels.size()) != output_size() ||
      labels.size() != label_hashes.size())
    throw DimensionError("network: label map size mismatch");
}

std::uint64_t NetworkModel::content_hash() const { return hash_bytes(serialize(*this)); }

NetworkModel zero_network(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw DimensionError("network needs at least input and output sizes");
  for (int s : sizes)
    if (s <= 0) throw DimensionError("network layer sizes must be positive");
  NetworkModel m;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    m.W.push_back(Matrix::Zero(sizes[l], sizes[l - 1]));
    m.b.push_back(Vector::Zero(sizes[l]));
  }
  m.input_mean = Vector::Zero(sizes.front());
  m.input_scale = Vector::Ones(sizes.front());
  m.labels.resize(sizes.back());
  std::iota(m.labels.begin(), m.labels.end(), 0);
  m.label_hashes.assign(sizes.back(), 0);
  return m;
}

NetworkModel make_network(const std::vector<int>& sizes, std::uint64_t seed) {
  NetworkModel m = zero_network(sizes);
  std::mt19937_64 rng(seed);
  for (auto& W : m.W) {
    const double a = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
  }
  return m;
}

Vector forward(const NetworkModel& m, const Vector& theta, OpCounter* counter) {
  if (theta.size() != m.input_size()) throw DimensionError("forward: input size mismatch");
  Vector y = (theta - m.input_mean).cwiseQuotient(m.input_scale);
  const int L = m.num_layers();
  for (int l = 0; l < L; ++l) {
    Vector z = m.b[l];
    z.noalias() += m.W[l] * y;
    y = l + 1 < L ? Vector(z.cwiseMax(0.0)) : z;
  }
  if (counter) counter->add_macs(m.macs_per_forward());
  return y;
}

Matrix forward_batch(const NetworkModel& m, const Matrix& X) {
  if (X.rows() != m.input_size()) throw DimensionError("forward: input size mismatch");
  Matrix Y = standardize(m, X);
  const int L = m.num_layers();
  for (int l = 0; l < L; ++l) {
    Matrix Z = m.W[l] * Y;
    Z.colwise() += m.b[l];
    Y = l + 1 < L ? Matrix(Z.cwiseMax(0.0)) : Z;
  }
  return Y;
}

Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

std::vector<int> topk_positions(const Vector& logits, int k) {
  const int M = static_cast<int>(logits.size());
  if (k < 1 || k > M) throw ContractViolation("top-k: k must lie in [1, M]");
  std::vector<int> idx(M);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

std::vector<int> predict_topk(const NetworkModel& m, const Vector& theta, int k, OpCounter* counter) {
  std::vector<int> pos = topk_positions(forward(m, theta, counter), k);
  for (int& p : pos) p = m.labels[p];
  return pos;
}

double cross_entropy(const NetworkModel& m, const Matrix& X, std::span<const int> targets,
                     Gradients* grad) {
  const Eigen::Index B = X.cols();
  if (static_cast<Eigen::Index>(targets.size()) != B) throw DimensionError("cross_entropy: target count");
  if (B == 0) throw DimensionError("cross_entropy: empty batch");
  const int L = m.num_layers();
  const int M = m.output_size();
  for (int t : targets)
    if (t < 0 || t >= M) throw DimensionError("cross_entropy: target out of range");

  std::vector<Matrix> act(L + 1);  // act[l] = input of layer l (post-ReLU)
  act[0] = standardize(m, X);
  Matrix Z;
  for (int l = 0; l < L; ++l) {
    Z = m.W[l] * act[l];
    Z.colwise() += m.b[l];
    if (l + 1 < L) act[l + 1] = Z.cwiseMax(0.0);
  }
  // Z holds the logits. Log-sum-exp per column with the max subtracted.
  Eigen::RowVectorXd zmax = Z.colwise().maxCoeff();
  Matrix E = (Z.rowwise() - zmax).array().exp();
  Eigen::RowVectorXd sum = E.colwise().sum();
  double loss = 0.0;
  for (Eigen::Index c = 0; c < B; ++c)
    loss += zmax[c] + std::log(sum[c]) - Z(targets[c], c);
  loss /= static_cast<double>(B);
  if (!grad) return loss;

  Matrix dZ = E.array().rowwise() / sum.array();
  for (Eigen::Index c = 0; c < B; ++c) dZ(targets[c], c) -= 1.0;
  dZ /= static_cast<double>(B);
  grad->dW.resize(L);
  grad->db.resize(L);
  for (int l = L - 1; l >= 0; --l) {
    grad->dW[l].noalias() = dZ * act[l].transpose();
    grad->db[l] = dZ.rowwise().sum();
    if (l == 0) break;
    Matrix dA = m.W[l].transpose() * dZ;
    dZ = (act[l].array() > 0.0).select(dA, 0.0);
  }
  return loss;
}

nlohmann::json to_json(const Hyperparams& h) {
  return {{"depth", h.depth},     {"width", h.width},
          {"learning_rate", h.learning_rate},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},   {"momentum", h.momentum},
          {"validation_fraction", h.validation_fraction},
          {"seed", h.seed}};
}

void from_json(const nlohmann::json& j, Hyperparams& h) {
  Hyperparams d;
  h.depth = j.value("depth", d.depth);
  h.width = j.value("width", d.width);
  h.learning_rate = j.value("learning_rate", d.learning_rate);
  h.batch_size = j.value("batch_size", d.batch_size);
  h.epochs = j.value("epochs", d.epochs);
  h.momentum = j.value("momentum", d.momentum);
  h.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  h.seed = j.value("seed", d.seed);
}

nlohmann::json TrainReport::to_json() const {
  return {{"loss", loss},
          {"train_accuracy", train_accuracy},
          {"validation_accuracy", validation_accuracy},
          {"hyperparams", mlopt::to_json(hyper)},
          {"train_size", train_size},
          {"validation_size", validation_size},
          {"stopped_early", stopped_early}};
}

double accuracy(const NetworkModel& m, const Dataset& d, std::span<const int> idx) {
  if (idx.empty()) return 0.0;
  constexpr std::size_t kChunk = 1024;
  long hits = 0;
  for (std::size_t s = 0; s < idx.size(); s += kChunk) {
    auto part = idx.subspan(s, std::min(kChunk, idx.size() - s));
    Matrix logits = forward_batch(m, gather(d, part));
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      Eigen::Index best;
      logits.col(c).maxCoeff(&best);  // first maximum, i.e. lower index on ties
      hits += best == d.targets[part[c]];
    }
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

TrainResult train(const Dataset& data, const Hyperparams& h, const EpochCallback& on_epoch) {
  const int N = static_cast<int>(data.inputs.size());
  if (N == 0) throw ContractViolation("train: empty dataset");
  if (data.targets.size() != data.inputs.size()) throw DimensionError("train: target count");
  if (data.num_classes < 1) throw ContractViolation("train: need at least one class");
  const int p = static_cast<int>(data.inputs.front().size());
  for (const auto& x : data.inputs)
    if (x.size() != p) throw DimensionError("train: ragged inputs");
  for (int t : data.targets)
    if (t < 0 || t >= data.num_classes) throw DimensionError("train: target out of range");
  if (h.depth < 0 || h.width < 1 || h.batch_size < 1 || h.epochs < 0 || !(h.learning_rate > 0.0))
    throw ContractViolation("train: invalid hyperparameters");

  std::mt19937_64 rng(h.seed);
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  int n_val = static_cast<int>(std::lround(h.validation_fraction * N));
  if (N - n_val < 1) n_val = 0;
  std::vector<int> train_idx(order.begin(), order.end() - n_val);
  std::vector<int> val_idx(order.end() - n_val, order.end());

  TrainResult res;
  res.report.hyper = h;
  res.report.train_size = static_cast<int>(train_idx.size());
  res.report.validation_size = n_val;

  if (data.num_classes == 1) {
    res.model = zero_network({p, 1});
    res.model.metadata["constant"] = true;
    return res;
  }

  std::vector<int> sizes{p};
  for (int l = 0; l < h.depth; ++l) sizes.push_back(h.width);
  sizes.push_back(data.num_classes);
  NetworkModel& m = res.model;
  m = make_network(sizes, derive_seed(h.seed, 1));

  // Standardization from the training portion only.
  Vector mean = Vector::Zero(p), sq = Vector::Zero(p);
  for (int i : train_idx) mean += data.inputs[i];
  mean /= static_cast<double>(train_idx.size());
  for (int i : train_idx) sq += (data.inputs[i] - mean).cwiseAbs2();
  Vector scale = (sq / static_cast<double>(train_idx.size())).cwiseSqrt();
  for (Eigen::Index k = 0; k < p; ++k)
    if (!(scale[k] > 1e-12)) scale[k] = 1.0;
  m.input_mean = mean;
  m.input_scale = scale;

  Gradients g, vel;
  for (int l = 0; l < m.num_layers(); ++l) {
    vel.dW.push_back(Matrix::Zero(m.W[l].rows(), m.W[l].cols()));
    vel.db.push_back(Vector::Zero(m.b[l].size()));
  }
  for (int epoch = 0; epoch < h.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t s = 0; s < train_idx.size(); s += h.batch_size) {
      std::span<const int> batch(train_idx.data() + s,
                                 std::min<std::size_t>(h.batch_size, train_idx.size() - s));
      const double loss = cross_entropy(m, gather(data, batch), gather_targets(data, batch), &g);
      if (!std::isfinite(loss))
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch), res.report);
      for (int l = 0; l < m.num_layers(); ++l) {
        vel.dW[l] = h.momentum * vel.dW[l] - h.learning_rate * g.dW[l];
        vel.db[l] = h.momentum * vel.db[l] - h.learning_rate * g.db[l];
        m.W[l] += vel.dW[l];
        m.b[l] += vel.db[l];
      }
    }
    const double loss = dataset_loss(m, data, train_idx);
    if (!std::isfinite(loss))
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch), res.report);
    res.report.loss.push_back(loss);
    res.report.train_accuracy.push_back(accuracy(m, data, train_idx));
    const double va = val_idx.empty() ? res.report.train_accuracy.back() : accuracy(m, data, val_idx);
    res.report.validation_accuracy.push_back(va);
    if (on_epoch && !on_epoch(epoch, va)) {
      res.report.stopped_early = true;
      break;
    }
  }
  m.metadata["hyperparams"] = to_json(h);
  return res;
}

TuneResult tune(const Dataset& data, int budget, std::uint64_t seed, const SearchSpace& space,
                int warmup_epochs) {
  if (budget < 1) throw ContractViolation("tune: budget must be at least 1");
  std::mt19937_64 rng(seed);
  TuneResult out;
  std::vector<std::vector<double>> complete_curves;
  int best_trial = -1;
  for (int t = 0; t < budget; ++t) {
    Hyperparams h;
    h.depth = std::uniform_int_distribution<int>(space.depth_lo, space.depth_hi)(rng);
    h.width = std::uniform_int_distribution<int>(space.width_lo, space.width_hi)(rng);
    h.learning_rate = std::exp(std::uniform_real_distribution<double>(
        std::log(space.lr_lo), std::log(space.lr_hi))(rng));
    h.batch_size = std::uniform_int_distribution<int>(space.batch_lo, space.batch_hi)(rng);
    h.epochs = std::uniform_int_distribution<int>(space.epochs_lo, space.epochs_hi)(rng);
    // The split seed stays fixed so that trials share one validation set.
    h.seed = seed;

    TrialRecord rec;
    rec.hyper = h;
    auto stop_below_median = [&](int epoch, double va) {
      rec.epochs_run = epoch + 1;
      if (epoch < warmup_epochs) return true;
      std::vector<double> at;
      for (const auto& c : complete_curves)
        if (static_cast<int>(c.size()) > epoch) at.push_back(c[epoch]);
      if (at.empty()) return true;
      std::sort(at.begin(), at.end());
      const std::size_t n = at.size();
      const double median = n % 2 ? at[n / 2] : 0.5 * (at[n / 2 - 1] + at[n / 2]);
      return va >= median;
    };
    try {
      TrainResult r = train(data, h, stop_below_median);
      rec.pruned = r.report.stopped_early;
      rec.validation_accuracy =
          r.report.validation_accuracy.empty() ? 0.0 : r.report.validation_accuracy.back();
      if (!rec.pruned) complete_curves.push_back(r.report.validation_accuracy);
    } catch (const TrainingDiverged&) {
      rec.pruned = true;
      rec.validation_accuracy = 0.0;
    }
    if (!rec.pruned &&
        (best_trial < 0 || rec.validation_accuracy > out.trials[best_trial].validation_accuracy))
      best_trial = t;
    out.trials.push_back(rec);
  }
  if (best_trial < 0) best_trial = 0;  // every trial diverged
  out.best = out.trials[best_trial].hyper;
  out.best_validation_accuracy = out.trials[best_trial].validation_accuracy;
  return out;
}

void save_model(const NetworkModel& m, const std::string& bin_path, const std::string& json_path,
                const std::string& labels_path) {
  m.validate();
  const std::string bytes = serialize(m);
  write_file(bin_path, bytes);

  std::vector<int> sizes{m.input_size()};
  for (const auto& W : m.W) sizes.push_back(static_cast<int>(W.rows()));
  nlohmann::json meta = {{"format", "mlp-v1"},
                         {"layer_sizes", sizes},
                         {"activation", "relu"},
                         {"weights_hash", hex_digest(hash_bytes(bytes))},
                         {"metadata", m.metadata}};
  write_file(json_path, meta.dump(2) + "\n");

  nlohmann::json hashes = nlohmann::json::array();
  for (auto h : m.label_hashes) hashes.push_back(hex_digest(h));
  nlohmann::json lab = {{"format", "labels-v1"}, {"labels", m.labels}, {"strategy_hashes", hashes}};
  write_file(labels_path, lab.dump(2) + "\n");
}

NetworkModel load_model(const std::string& bin_path, const std::string& json_path,
                        const std::string& labels_path) {
  const std::string bytes = read_file(bin_path);
  nlohmann::json meta, lab;
  try {
    meta = nlohmann::json::parse(read_file(json_path));
    lab = nlohmann::json::parse(read_file(labels_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model metadata: ") + e.what());
  }
  if (meta.value("format", "") != "mlp-v1") throw FormatError("model metadata: unknown format");
  if (meta.value("weights_hash", "") != hex_digest(hash_bytes(bytes)))
    throw FormatError("model metadata does not match the weight file");
  NetworkModel m = deserialize(bytes);
  try {
    if (meta.at("layer_sizes").get<std::vector<int>>().back() != m.output_size())
      throw FormatError("model metadata: layer sizes differ from the weight file");
    if (lab.value("format", "") != "labels-v1") throw FormatError("label map: unknown format");
    m.labels = lab.at("labels").get<std::vector<int>>();
    m.label_hashes.clear();
    for (const auto& h : lab.at("strategy_hashes"))
      m.label_hashes.push_back(parse_hex_digest(h.get<std::string>()));
    m.metadata = meta.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model metadata: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace mlopt
