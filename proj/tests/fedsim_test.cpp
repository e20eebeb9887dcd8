#include <gtest/gtest.h>

#include <map>

#include "mrsa/fedsim.hpp"

using namespace mrsa;

namespace {

Dataset indexed(std::size_t m, int classes) {
  Dataset d{RealMatrix(static_cast<Eigen::Index>(m), 2), {}, classes};
  for (std::size_t i = 0; i < m; ++i) {
    d.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    d.features(static_cast<Eigen::Index>(i), 1) = -static_cast<double>(i);
    d.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  }
  return d;
}

std::multiset<double> ids(const Dataset& d) {
  std::multiset<double> out;
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) out.insert(d.features(i, 0));
  return out;
}

// Central finite-difference check of the analytic gradient.
void check_gradient(const Model& model, const Dataset& data, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  Vector w(static_cast<Eigen::Index>(model.dim()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = g(rng);
  std::vector<std::size_t> batch(10);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (auto& b : batch) b = pick(rng);
  Vector grad;
  model.loss(w, data, batch, &grad);
  const double h = 1e-6;
  Vector fd(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vector wp = w, wm = w;
    wp(i) += h;
    wm(i) -= h;
    fd(i) = (model.loss(wp, data, batch) - model.loss(wm, data, batch)) / (2 * h);
  }
  EXPECT_LE((grad - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
}

TrainingData iid_data(std::size_t n, std::uint64_t seed, std::size_t samples = 2400) {
  auto all = make_gaussian_mixture(samples, 20, 10, 1.5, seed);
  Rng split = derive_stream(seed, {stream_tag::kData, 1});
  auto [train, test] = split_train_test(all, 0.2, split);
  auto shards = partition_iid(train, n, split);
  return {std::move(shards), std::move(train), std::move(test)};
}

}  // namespace

TEST(PartitionIid, ShardSizes) {
  Rng rng(1);
  auto shards = partition_iid(indexed(50000, 10), 120, rng);
  ASSERT_EQ(shards.size(), 120u);
  std::map<std::size_t, int> sizes;
  for (const auto& s : shards) ++sizes[s.size()];
  EXPECT_EQ(sizes.size(), 2u);
  EXPECT_EQ(sizes[417] * 417 + sizes[416] * 416, 50000);
  for (const auto& s : partition_iid(indexed(100, 10), 100, rng)) EXPECT_EQ(s.size(), 1u);
  EXPECT_THROW(partition_iid(indexed(99, 10), 100, rng), ParameterError);
}

TEST(PartitionIid, UnionIsOriginalMultiset) {
  Rng rng(2);
  auto data = indexed(1001, 7);
  std::multiset<double> seen;
  for (const auto& s : partition_iid(data, 13, rng)) {
    auto part = ids(s);
    seen.insert(part.begin(), part.end());
    for (std::size_t i = 0; i < s.size(); ++i)
      EXPECT_EQ(s.labels[i], static_cast<int>(s.features(static_cast<Eigen::Index>(i), 0)) % 7);
  }
  EXPECT_EQ(seen, ids(data));
}

TEST(PartitionNonIid, SharedSubsetAndShardSizes) {
  Rng rng(3);
  auto data = indexed(50000, 10);
  auto part = partition_noniid_shared(data, 120, 200, rng);
  ASSERT_EQ(part.shards.size(), 120u);
  EXPECT_EQ(part.shared_size, 200u);
  std::multiset<double> first200;
  for (std::size_t i = 0; i < 200; ++i) first200.insert(part.shards[0].features(static_cast<Eigen::Index>(i), 0));
  std::map<int, int> shared_labels;
  for (std::size_t i = 0; i < 200; ++i) ++shared_labels[part.shards[0].labels[i]];
  for (int c = 0; c < 10; ++c) EXPECT_EQ(shared_labels[c], 20);
  std::multiset<double> all;
  for (const auto& s : part.shards) {
    EXPECT_EQ(s.size(), 615u);
    std::multiset<double> head;
    for (std::size_t i = 0; i < 200; ++i) head.insert(s.features(static_cast<Eigen::Index>(i), 0));
    EXPECT_EQ(head, first200);
    for (std::size_t i = 200; i < s.size(); ++i) all.insert(s.features(static_cast<Eigen::Index>(i), 0));
  }
  all.insert(first200.begin(), first200.end());
  EXPECT_EQ(all, ids(data));
}

TEST(PartitionNonIid, OneClassPerUser) {
  Dataset d{RealMatrix(40, 1), {}, 4};
  for (int i = 0; i < 40; ++i) {
    d.features(i, 0) = i;
    d.labels.push_back(i / 10);
  }
  Rng rng(4);
  auto part = partition_noniid_shared(d, 4, 0, rng);
  for (std::size_t u = 0; u < 4; ++u) {
    ASSERT_EQ(part.shards[u].size(), 10u);
    for (int l : part.shards[u].labels) EXPECT_EQ(l, static_cast<int>(u));
    EXPECT_EQ(part.private_label[u], static_cast<int>(u));
  }
  EXPECT_THROW(partition_noniid_shared(d, 4, 40, rng), ParameterError);
  EXPECT_THROW(partition_noniid_shared(d, 39, 5, rng), ParameterError);
}

TEST(LabelLinkedDropout, LinearInLabel) {
  auto p = label_linked_dropout({0, 9, 4}, 10);
  EXPECT_DOUBLE_EQ(p[0], 0.1);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_NEAR(p[2], 0.1 + 0.4 * 4.0 / 9.0, 1e-15);
}

TEST(DatasetCsv, RoundTrip) {
  auto d = make_gaussian_mixture(30, 3, 4, 1.0, 5);
  auto text = dataset_to_csv(d);
  EXPECT_EQ(text.substr(0, text.find('\n')), "label,f0,f1,f2");
  auto back = dataset_from_csv(text);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.features, d.features);
  EXPECT_THROW(dataset_from_csv("label,f0\n1,2,3\n"), ParameterError);
}

TEST(LocalUpdate, ZeroLearningRateKeepsWeights) {
  auto data = make_gaussian_mixture(100, 4, 3, 1.0, 6);
  auto model = Model::softmax(4, 3);
  GlobalModel g{Vector::LinSpaced(static_cast<Eigen::Index>(model.dim()), -1, 1), 3};
  LocalUpdateConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 7;
  Rng rng(1);
  EXPECT_EQ(local_update(model, g, data, cfg, rng), g.weights);
}

TEST(LocalUpdate, HandComputedLeastSquaresStep) {
  Dataset d{RealMatrix(1, 2), {1}, 2};
  d.features << 1, 0;
  LocalUpdateConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.batch_size = 1;
  Rng rng(1);
  auto w = local_update(Model::least_squares(2), {Vector::Zero(2), 0}, d, cfg, rng);
  EXPECT_DOUBLE_EQ(w(0), 0.5);
  EXPECT_DOUBLE_EQ(w(1), 0.0);
}

TEST(LocalUpdate, DivergenceIsReported) {
  Dataset d{RealMatrix(2, 1), {1, 0}, 2};
  d.features << 1e200, 1e200;
  LocalUpdateConfig cfg;
  cfg.learning_rate = 1e10;
  Rng rng(1);
  try {
    local_update(Model::least_squares(1), {Vector::Ones(1), 7}, d, cfg, rng);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.round(), 7u);
  }
}

TEST(Gradient, FiniteDifferences) {
  auto data = make_gaussian_mixture(200, 5, 4, 1.0, 7);
  check_gradient(Model::softmax(5, 4), data, 1);
  check_gradient(Model::perceptron(5, 6, 4), data, 2);
  check_gradient(Model::least_squares(5), data, 3);
}

TEST(LearningRate, DecaySchedule) {
  LocalUpdateConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.lr_decay_factor = 0.4;
  cfg.lr_decay_rounds = {400, 800};
  EXPECT_DOUBLE_EQ(cfg.lr_at(399), 1.0);
  EXPECT_DOUBLE_EQ(cfg.lr_at(400), 0.4);
  EXPECT_NEAR(cfg.lr_at(900), 0.16, 1e-15);
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Aggregate, Examples) {
  GlobalModel prev{Vector::Zero(2), 4};
  Vector v(2);
  v << 3, -1;
  auto same = aggregate(prev, {v, v, v}, {BitRow{1, 1, 1, 0}, 4});
  EXPECT_EQ(same.weights, v);
  EXPECT_EQ(same.round, 5u);
  Vector a = Vector::Zero(2), b(2);
  b << 2, 4;
  auto mean = aggregate(prev, {a, b}, {BitRow{0, 1, 1, 0}, 4});
  EXPECT_DOUBLE_EQ(mean.weights(0), 1.0);
  EXPECT_DOUBLE_EQ(mean.weights(1), 2.0);
  Vector w0(2);
  w0 << 9, 9;
  auto skip = aggregate({w0, 4}, {}, ParticipationVector::zeros(4, 4));
  EXPECT_EQ(skip.weights, w0);
  EXPECT_EQ(skip.round, 5u);
  EXPECT_THROW(aggregate(prev, {a}, {BitRow{0, 1, 1, 0}, 4}), ParameterError);
}

TEST(Aggregate, PermutationInvariant) {
  Rng rng(8);
  std::normal_distribution<double> g;
  std::vector<Vector> locals(5, Vector(6));
  for (auto& l : locals)
    for (Eigen::Index i = 0; i < 6; ++i) l(i) = g(rng);
  ParticipationVector p{BitRow(5, 1), 0};
  auto base = aggregate({Vector::Zero(6), 0}, locals, p).weights;
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(locals.begin(), locals.end(), rng);
    EXPECT_LE((aggregate({Vector::Zero(6), 0}, locals, p).weights - base).norm(), 1e-14);
  }
}

TEST(RunTraining, ZeroRounds) {
  auto data = iid_data(4, 1, 200);
  auto run = run_training(SelectionStrategy::random(4, 2), UserPool::uniform(4, 0.1), data,
                          Model::softmax(20, 10), {}, 0, 1);
  EXPECT_TRUE(run.records.empty());
  EXPECT_EQ(run.ledger.rounds(), 0u);
}

TEST(RunTraining, NearCertainDropoutSkipsRounds) {
  auto data = iid_data(4, 2, 200);
  auto model = Model::softmax(20, 10);
  auto run = run_training(SelectionStrategy::random(4, 4), UserPool::uniform(4, 0.999), data, model, {}, 50, 2);
  std::size_t skipped = 0;
  for (const auto& r : run.records) skipped += r.skipped;
  EXPECT_EQ(skipped, 50u);
  EXPECT_EQ(run.final_model.weights, model.initial(2));
  EXPECT_EQ(run.final_model.round, 50u);
}

TEST(RunTraining, ZeroLearningRateKeepsModelConstant) {
  auto data = iid_data(6, 3, 300);
  auto model = Model::perceptron(20, 4, 10);
  LocalUpdateConfig cfg;
  cfg.learning_rate = 0.0;
  auto run = run_training(SelectionStrategy::random(6, 3), UserPool::uniform(6, 0.2), data, model, cfg, 20, 3);
  const Vector w0 = model.initial(3);
  for (const auto& w : run.models_history) EXPECT_LE((w - w0).lpNorm<Eigen::Infinity>(), 1e-15);
  EXPECT_LE((run.final_model.weights - w0).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(RunTraining, SingleUserIsCentralizedSgd) {
  auto data = iid_data(1, 4, 300);
  LocalUpdateConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.learning_rate = 0.05;
  auto model = Model::softmax(20, 10);
  auto run = run_training(SelectionStrategy::random(1, 1), UserPool::uniform(1, 0.0), data, model, cfg, 5, 4);

  // Plain mini-batch SGD on the one shard, reusing the per-round shuffle streams.
  const Dataset& shard = data.shards[0];
  Vector w = model.initial(4);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(run.models_history[t], w);
    Rng rng = derive_stream(4, {stream_tag::kLocal, t, 0});
    std::vector<std::size_t> order(shard.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(s),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(s + cfg.batch_size, order.size())));
        Vector g;
        model.loss(w, shard, batch, &g);
        w -= cfg.learning_rate * g;
      }
    }
  }
  EXPECT_LE((run.final_model.weights - w).norm(), 1e-12 * std::max(1.0, w.norm()));
}

TEST(RunTraining, DeterministicAndLogged) {
  auto data = iid_data(8, 5, 400);
  auto go = [&] {
    return run_training(SelectionStrategy::random(8, 4), UserPool::uniform(8, 0.3), data, Model::softmax(20, 10), {},
                        12, 9);
  };
  auto a = go(), b = go();
  EXPECT_EQ(training_to_csv(a.records), training_to_csv(b.records));
  EXPECT_EQ(a.ledger, b.ledger);
  auto csv = training_to_csv(a.records);
  EXPECT_EQ(csv.rfind("round,skipped,loss,accuracy,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(RunTraining, DivergenceCarriesRound) {
  auto data = iid_data(2, 6, 200);
  LocalUpdateConfig cfg;
  cfg.learning_rate = 1e300;
  try {
    run_training(SelectionStrategy::random(2, 2), UserPool::uniform(2, 0.0), data, Model::least_squares(20), cfg, 5, 6);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.round(), 5u);
  }
}

TEST(RunTraining, SyntheticBaselineAccuracy) {
  const std::size_t n = 120;
  auto data = iid_data(n, 10, 12000);
  auto run = run_training(SelectionStrategy::random(n, 12), UserPool::uniform(n, 0.1), data, Model::softmax(20, 10), {},
                          300, 10, {.weak_every = 1000000});
  EXPECT_GE(*run.records.back().test_accuracy, 0.9);
}
