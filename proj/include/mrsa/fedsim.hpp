#pragma once

// Desk-scale FedAvg with partial participation: data partitioning, local
// mini-batch SGD, averaging of the selected local models, and the round
// loop tying selection, metrics and training together.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrsa/core.hpp"
#include "mrsa/csv.hpp"
#include "mrsa/errors.hpp"
#include "mrsa/metrics.hpp"
#include "mrsa/record.hpp"
#include "mrsa/selection.hpp"

namespace mrsa {

using Vector = Eigen::VectorXd;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  RealMatrix features;  // M x f
  std::vector<int> labels;
  int n_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t n_features() const noexcept { return static_cast<std::size_t>(features.cols()); }

  void validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw ParameterError("dataset: feature rows and label count differ");
    if (n_classes <= 0) throw ParameterError("dataset: n_classes must be positive");
    for (int l : labels)
      if (l < 0 || l >= n_classes) throw ParameterError("dataset: label out of range");
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{RealMatrix(static_cast<Eigen::Index>(idx.size()), features.cols()), {}, n_classes};
    out.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
      out.labels.push_back(labels[idx[i]]);
    }
    return out;
  }

  static Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.features.cols() != b.features.cols() || a.n_classes != b.n_classes)
      throw ParameterError("dataset concat: incompatible shapes");
    Dataset out{RealMatrix(a.features.rows() + b.features.rows(), a.features.cols()), a.labels, a.n_classes};
    out.features << a.features, b.features;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
  }
};

// Gaussian mixture: class means drawn N(0, separation^2 I), unit-variance
// isotropic noise around them. Feature j is then scaled by
// conditioning^(-j/(f-1)); the Bayes accuracy is unchanged but gradient
// descent slows down as the ratio grows.
inline Dataset make_gaussian_mixture(std::size_t samples, std::size_t features, int classes,
                                     double separation, std::uint64_t seed, double conditioning = 1.0) {
  if (samples == 0 || features == 0 || classes <= 0)
    throw ParameterError("gaussian mixture: sizes must be positive");
  if (!(conditioning >= 1.0)) throw ParameterError("gaussian mixture: conditioning must be >= 1");
  Rng rng = derive_stream(seed, {stream_tag::kData});
  std::normal_distribution<double> normal(0.0, 1.0);
  RealMatrix means(classes, static_cast<Eigen::Index>(features));
  for (Eigen::Index c = 0; c < means.rows(); ++c)
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = separation * normal(rng);
  Dataset d{RealMatrix(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(features)), {}, classes};
  std::uniform_int_distribution<int> label(0, classes - 1);
  for (std::size_t i = 0; i < samples; ++i) {
    int l = label(rng);
    d.labels.push_back(l);
    for (Eigen::Index j = 0; j < means.cols(); ++j)
      d.features(static_cast<Eigen::Index>(i), j) = means(l, j) + normal(rng);
  }
  if (features > 1 && conditioning != 1.0)
    for (Eigen::Index j = 0; j < d.features.cols(); ++j)
      d.features.col(j) *= std::pow(conditioning, -static_cast<double>(j) / static_cast<double>(features - 1));
  return d;
}

// Random split into (train, test) with round(test_fraction * M) test samples.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction, Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ParameterError("test_fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, data.size() - 1);
  std::span<const std::size_t> all(idx);
  return {data.subset(all.subspan(n_test)), data.subset(all.first(n_test))};
}

// CSV with header `label,f0,f1,...`.
inline std::string dataset_to_csv(const Dataset& d) {
  std::string out = "label";
  for (std::size_t j = 0; j < d.n_features(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out += std::to_string(d.labels[i]);
    for (Eigen::Index j = 0; j < d.features.cols(); ++j)
      out += "," + csv::format_double(d.features(static_cast<Eigen::Index>(i), j));
    out += '\n';
  }
  return out;
}

inline Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParameterError("dataset csv: empty input");
  auto header = csv::split_line(line);
  if (header.empty() || header[0] != "label") throw ParameterError("dataset csv: first column must be 'label'");
  const std::size_t f = header.size() - 1;
  if (f == 0) throw ParameterError("dataset csv: no feature columns");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = csv::split_line(line);
    if (cells.size() != f + 1)
      throw ParameterError("dataset csv line " + std::to_string(lineno) + ": expected " +
                           std::to_string(f + 1) + " fields");
    try {
      labels.push_back(static_cast<int>(csv::parse_int(cells[0])));
      std::vector<double> r(f);
      for (std::size_t j = 0; j < f; ++j) r[j] = csv::parse_double(cells[j + 1]);
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw ParameterError("dataset csv line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  Dataset d{RealMatrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f)), labels, 0};
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < f; ++j) d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  for (int l : labels) d.n_classes = std::max(d.n_classes, l + 1);
  d.validate();
  return d;
}

namespace detail {
inline std::vector<std::pair<std::size_t, std::size_t>> near_equal_blocks(std::size_t m, std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t base = m / n, extra = m % n, start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t len = base + (i < extra ? 1 : 0);
    out.emplace_back(start, len);
    start += len;
  }
  return out;
}
}  // namespace detail

// Shuffle and split into N shards whose sizes differ by at most one.
inline std::vector<Dataset> partition_iid(const Dataset& data, std::size_t n_users, Rng& rng) {
  if (n_users == 0) throw ParameterError("partition_iid: n_users must be positive");
  if (data.size() < n_users)
    throw ParameterError("partition_iid: " + std::to_string(data.size()) + " samples for " +
                         std::to_string(n_users) + " users");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Dataset> shards;
  std::span<const std::size_t> all(idx);
  for (auto [start, len] : detail::near_equal_blocks(data.size(), n_users))
    shards.push_back(data.subset(all.subspan(start, len)));
  return shards;
}

struct NonIidPartition {
  std::vector<Dataset> shards;     // shared subset + private shard, per user
  std::vector<int> private_label;  // majority label of each user's private shard
  std::size_t shared_size = 0;
};

// Data-sharing non-IID split: a class-stratified shared subset goes to every
// user; the rest is sorted by label and cut into N contiguous shards.
inline NonIidPartition partition_noniid_shared(const Dataset& data, std::size_t n_users,
                                               std::size_t shared_size, Rng& rng) {
  if (n_users == 0) throw ParameterError("partition_noniid_shared: n_users must be positive");
  if (shared_size >= data.size())
    throw ParameterError("partition_noniid_shared: shared_size must be smaller than the dataset");
  if (data.size() - shared_size < n_users)
    throw ParameterError("partition_noniid_shared: fewer private samples than users");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.n_classes));
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  for (auto& c : by_class) std::shuffle(c.begin(), c.end(), rng);

  // Largest-remainder allocation of the shared quota across classes.
  const std::size_t m = data.size();
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    double exact = static_cast<double>(shared_size) * static_cast<double>(by_class[c].size()) / static_cast<double>(m);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    rema.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < shared_size; ++i, ++assigned) ++quota[rema[i % rema.size()].second];

  std::vector<std::size_t> shared, rest;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::size_t q = std::min(quota[c], by_class[c].size());
    shared.insert(shared.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(q));
    rest.insert(rest.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(q), by_class[c].end());
  }
  // `rest` is already grouped by ascending label.
  NonIidPartition out;
  out.shared_size = shared.size();
  Dataset shared_set = data.subset(shared);
  std::span<const std::size_t> all(rest);
  for (auto [start, len] : detail::near_equal_blocks(rest.size(), n_users)) {
    Dataset priv = data.subset(all.subspan(start, len));
    std::vector<std::size_t> counts(static_cast<std::size_t>(data.n_classes), 0);
    for (int l : priv.labels) ++counts[static_cast<std::size_t>(l)];
    out.private_label.push_back(static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
    out.shards.push_back(Dataset::concat(shared_set, priv));
  }
  return out;
}

// p(label) = low + (high - low) * label / (n_classes - 1)
inline std::vector<double> label_linked_dropout(const std::vector<int>& user_labels, int n_classes,
                                                double low = 0.1, double high = 0.5) {
  std::vector<double> p;
  for (int l : user_labels) {
    double frac = n_classes > 1 ? static_cast<double>(l) / static_cast<double>(n_classes - 1) : 0.0;
    p.push_back(low + (high - low) * frac);
  }
  return p;
}

enum class ModelKind { Softmax, Perceptron, LeastSquares };

// Parameter vectors are flat; layouts are row-major weight blocks followed
// by biases.
struct Model {
  ModelKind kind = ModelKind::Softmax;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t hidden = 0;

  static Model softmax(std::size_t f, std::size_t c) { return {ModelKind::Softmax, f, c, 0}; }
  static Model perceptron(std::size_t f, std::size_t h, std::size_t c) { return {ModelKind::Perceptron, f, c, h}; }
  static Model least_squares(std::size_t f) { return {ModelKind::LeastSquares, f, 1, 0}; }

  std::size_t dim() const {
    switch (kind) {
      case ModelKind::Softmax: return classes * (features + 1);
      case ModelKind::Perceptron: return hidden * (features + 1) + classes * (hidden + 1);
      case ModelKind::LeastSquares: return features;
    }
    return 0;
  }

  Vector initial(std::uint64_t seed) const {
    Vector w = Vector::Zero(static_cast<Eigen::Index>(dim()));
    if (kind == ModelKind::Perceptron) {
      Rng rng = derive_stream(seed, {stream_tag::kModels});
      std::uniform_real_distribution<double> u(-0.1, 0.1);
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = u(rng);
    }
    return w;
  }

  // Mean loss over the rows `idx`; fills `grad` when non-null.
  double loss(const Vector& w, const Dataset& data, std::span<const std::size_t> idx, Vector* grad = nullptr) const {
    if (static_cast<std::size_t>(w.size()) != dim()) throw ParameterError("model: parameter size mismatch");
    if (idx.empty()) throw ParameterError("model: empty batch");
    const auto b = static_cast<Eigen::Index>(idx.size());
    RealMatrix x(b, static_cast<Eigen::Index>(features));
    for (Eigen::Index i = 0; i < b; ++i) x.row(i) = data.features.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
    const double inv_b = 1.0 / static_cast<double>(b);

    if (kind == ModelKind::LeastSquares) {
      Vector y(b);
      for (Eigen::Index i = 0; i < b; ++i) y(i) = data.labels[idx[static_cast<std::size_t>(i)]];
      Vector r = x * w - y;
      if (grad) *grad = x.transpose() * r * inv_b;
      return 0.5 * r.squaredNorm() * inv_b;
    }

    const auto c = static_cast<Eigen::Index>(classes);
    const auto f = static_cast<Eigen::Index>(features);
    const auto h = static_cast<Eigen::Index>(hidden);
    RealMatrix input = x;
    RealMatrix act;
    Eigen::Index off = 0;
    if (kind == ModelKind::Perceptron) {
      Eigen::Map<const RowMajor> w1(w.data(), h, f);
      Eigen::Map<const Vector> b1(w.data() + h * f, h);
      act = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
      input = act;
      off = h * (f + 1);
    }
    const Eigen::Index in = input.cols();
    Eigen::Map<const RowMajor> wo(w.data() + off, c, in);
    Eigen::Map<const Vector> bo(w.data() + off + c * in, c);
    RealMatrix logits = (input * wo.transpose()).rowwise() + bo.transpose();
    double total = 0.0;
    RealMatrix delta(b, c);
    for (Eigen::Index i = 0; i < b; ++i) {
      const double mx = logits.row(i).maxCoeff();
      Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
      const double z = e.sum();
      const int y = data.labels[idx[static_cast<std::size_t>(i)]];
      total += std::log(z) + mx - logits(i, y);
      delta.row(i) = e / z;
      delta(i, y) -= 1.0;
    }
    if (grad) {
      grad->setZero(static_cast<Eigen::Index>(dim()));
      delta *= inv_b;
      Eigen::Map<RowMajor> gwo(grad->data() + off, c, in);
      Eigen::Map<Vector> gbo(grad->data() + off + c * in, c);
      gwo = delta.transpose() * input;
      gbo = delta.colwise().sum().transpose();
      if (kind == ModelKind::Perceptron) {
        RealMatrix dz = ((delta * wo).array() * (1.0 - act.array().square())).matrix();
        Eigen::Map<RowMajor> gw1(grad->data(), h, f);
        Eigen::Map<Vector> gb1(grad->data() + h * f, h);
        gw1 = dz.transpose() * x;
        gb1 = dz.colwise().sum().transpose();
      }
    }
    return total * inv_b;
  }

  double loss_all(const Vector& w, const Dataset& data) const {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    return loss(w, data, idx);
  }

  int predict(const Vector& w, const Eigen::RowVectorXd& x) const {
    if (kind == ModelKind::LeastSquares) return static_cast<int>(std::lround(x.dot(w)));
    const auto c = static_cast<Eigen::Index>(classes);
    const auto f = static_cast<Eigen::Index>(features);
    const auto h = static_cast<Eigen::Index>(hidden);
    Eigen::RowVectorXd input = x;
    Eigen::Index off = 0;
    if (kind == ModelKind::Perceptron) {
      Eigen::Map<const RowMajor> w1(w.data(), h, f);
      Eigen::Map<const Vector> b1(w.data() + h * f, h);
      input = ((x * w1.transpose()) + b1.transpose()).array().tanh().matrix();
      off = h * (f + 1);
    }
    const Eigen::Index in = input.size();
    Eigen::Map<const RowMajor> wo(w.data() + off, c, in);
    Eigen::Map<const Vector> bo(w.data() + off + c * in, c);
    Eigen::RowVectorXd logits = input * wo.transpose() + bo.transpose();
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }

  double accuracy(const Vector& w, const Dataset& data) const {
    if (data.size() == 0) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
      hit += predict(w, data.features.row(static_cast<Eigen::Index>(i))) == data.labels[i];
    return static_cast<double>(hit) / static_cast<double>(data.size());
  }
};

struct LocalUpdateConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 50;
  double learning_rate = 0.1;
  double lr_decay_factor = 1.0;             // multiplicative decay ...
  std::vector<std::size_t> lr_decay_rounds;  // ... applied at each of these rounds

  void validate() const {
    if (epochs == 0) throw ParameterError("epochs must be >= 1");
    if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning_rate must be >= 0");
    if (!(lr_decay_factor > 0.0)) throw ParameterError("lr_decay_factor must be > 0");
  }

  double lr_at(std::size_t round) const {
    double lr = learning_rate;
    for (std::size_t r : lr_decay_rounds)
      if (round >= r) lr *= lr_decay_factor;
    return lr;
  }
};

struct GlobalModel {
  Vector weights;
  std::size_t round = 0;
};

// E epochs of mini-batch SGD on the shard, starting from the global weights.
inline Vector local_update(const Model& model, const GlobalModel& global, const Dataset& shard,
                           const LocalUpdateConfig& cfg, Rng& rng) {
  if (shard.size() == 0) throw ParameterError("local_update: empty shard");
  const double lr = cfg.lr_at(global.round);
  Vector w = global.weights;
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0);
  Vector grad;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t len = std::min(cfg.batch_size, order.size() - start);
      double l = model.loss(w, shard, std::span<const std::size_t>(order).subspan(start, len), &grad);
      if (!std::isfinite(l) || !grad.allFinite())
        throw DivergenceError("local loss became non-finite (learning rate too high?)", global.round);
      w -= lr * grad;
    }
  }
  return w;
}

// (1/K) sum of the selected local models; a skipped round carries the
// previous global model over. Locals are expected in ascending user order.
inline GlobalModel aggregate(const GlobalModel& previous, const std::vector<Vector>& locals,
                             const ParticipationVector& participation) {
  const std::size_t k = participation.weight();
  if (locals.size() != k)
    throw ParameterError("aggregate: " + std::to_string(locals.size()) + " local models for " +
                         std::to_string(k) + " participants");
  if (k == 0) return {previous.weights, previous.round + 1};
  Vector sum = Vector::Zero(previous.weights.size());
  for (const auto& l : locals) {
    if (l.size() != sum.size()) throw ParameterError("aggregate: model dimension mismatch");
    sum += l;
  }
  return {sum / static_cast<double>(k), previous.round + 1};
}

struct TrainingRun {
  std::vector<RoundRecord> records;
  ParticipationMatrix ledger;
  GlobalModel final_model;
  std::vector<Vector> models_history;  // global weights entering each round
};

struct TrainingData {
  std::vector<Dataset> shards;  // one per user
  Dataset train;                // evaluation set for the training loss
  Dataset test;
};

// Sample availability, select, train the selected users locally, average,
// evaluate, record metrics. Availability and selection draw from one run
// stream; user i's local SGD at round t draws from stream (seed, t, i).
inline TrainingRun run_training(const SelectionStrategy& strategy, UserPool pool, const TrainingData& data,
                                const Model& model, const LocalUpdateConfig& cfg, std::size_t rounds,
                                std::uint64_t seed, MetricsOptions metrics = {}) {
  const std::size_t n = strategy.n_users();
  if (pool.size() != n || data.shards.size() != n)
    throw ParameterError("run_training: strategy, pool and shard counts differ");
  cfg.validate();
  Rng run = derive_stream(seed, {stream_tag::kRun});
  TrainingRun out{{}, ParticipationMatrix(n), {model.initial(seed), 0}, {}};
  MetricsTracker tracker(n, metrics);
  for (std::size_t t = 0; t < rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    rec.availability = sample_availability(pool, run);
    rec.selected = select(strategy, rec.availability, pool.frequencies(), run, t);
    rec.skipped = rec.selected.skipped();
    append_round(out.ledger, pool, rec.selected, strategy.k());
    out.models_history.push_back(out.final_model.weights);

    std::vector<Vector> locals;
    for (std::size_t u = 0; u < n; ++u) {
      if (!rec.selected.bits[u]) continue;
      Rng local = derive_stream(seed, {stream_tag::kLocal, t, u});
      locals.push_back(local_update(model, out.final_model, data.shards[u], cfg, local));
    }
    out.final_model = aggregate(out.final_model, locals, rec.selected);
    rec.train_loss = model.loss_all(out.final_model.weights, data.train);
    if (!std::isfinite(*rec.train_loss)) throw DivergenceError("training loss became non-finite", t);
    rec.test_accuracy = model.accuracy(out.final_model.weights, data.test);
    rec.metrics = tracker.observe(out.ledger, t + 1 == rounds);
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline std::string training_to_csv(const std::vector<RoundRecord>& records) {
  std::string out = std::string("round,skipped,loss,accuracy,") + kMetricsColumns + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.round) + "," + (r.skipped ? "1" : "0") + ",";
    out += r.train_loss ? csv::format_double(*r.train_loss) : "NA";
    out += ",";
    out += r.test_accuracy ? csv::format_double(*r.test_accuracy) : "NA";
    out += "," + metrics_fields(r.metrics) + "\n";
  }
  return out;
}

}  // namespace mrsa
