#pragma once

// Experiment configuration and the pipelines behind the CLI verbs.
//
// Config files are YAML (JSON is accepted too, being a YAML subset). Unknown
// keys are rejected; every diagnostic carries the line of the offending node.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "mrsa/attack.hpp"
#include "mrsa/core.hpp"
#include "mrsa/csv.hpp"
#include "mrsa/errors.hpp"
#include "mrsa/family.hpp"
#include "mrsa/fedsim.hpp"
#include "mrsa/metrics.hpp"
#include "mrsa/random.hpp"
#include "mrsa/selection.hpp"

namespace mrsa {

class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

enum class DropoutMode { Uniform, PerUser, Choice, LabelLinked };

struct DropoutConfig {
  DropoutMode mode = DropoutMode::Uniform;
  double p = 0.1;
  std::vector<double> values;  // per_user
  std::vector<double> choices{0.1, 0.2, 0.3, 0.4, 0.5};  // choice: p_i drawn uniformly from these
  double low = 0.1;            // label_linked endpoints
  double high = 0.5;
  int classes = 10;  // label_linked without a non-IID partition: user i has label floor(i*classes/N)
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string path;
  std::size_t samples = 12000;
  std::size_t features = 20;
  int classes = 10;
  double separation = 1.0;
  double conditioning = 1.0;
  double test_fraction = 0.2;
  std::string partition = "iid";  // iid | noniid_shared
  std::size_t shared_size = 200;
};

struct TrainingConfig {
  bool enabled = false;
  std::string model = "softmax";  // softmax | perceptron
  std::size_t hidden = 32;
  DataConfig data;
  LocalUpdateConfig local;
};

struct AttackConfig {
  bool enabled = false;
  std::size_t model_dim = 16;  // static Gaussian models (attack verb)
  double drift_sigma = 0.0;
  std::optional<std::size_t> window_begin;
  std::optional<std::size_t> window_end;
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Random;
  std::optional<std::size_t> privacy_target;
  bool fairness = false;
};

struct ExperimentConfig {
  std::string name;
  std::size_t n_users = 120;
  std::size_t row_weight = 12;
  StrategyConfig strategy;
  DropoutConfig dropout;
  std::size_t rounds = 1000;
  std::uint64_t seed = 0;
  MetricsOptions metrics;
  std::uint64_t family_cap = kDefaultMaterializeCap;
  TrainingConfig training;
  AttackConfig attack;
  std::string output_dir = "out";

  std::map<std::string, int> lines;  // dotted key -> 1-based source line
  std::string source = "<config>";
};

namespace detail {

class NodeReader {
 public:
  NodeReader(const YAML::Node& node, std::string prefix, ExperimentConfig& cfg)
      : node_(node), prefix_(std::move(prefix)), cfg_(cfg) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      fail(node_, prefix_.empty() ? "top level must be a mapping" : "expected a mapping");
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    int line = n.Mark().line >= 0 ? n.Mark().line + 1 : 0;
    throw ConfigError(cfg_.source + ":" + std::to_string(line) + ": " + msg);
  }

  std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

  YAML::Node child(const std::string& k) {
    seen_.insert(k);
    if (!node_ || !node_.IsMap()) return YAML::Node();
    YAML::Node c = node_[k];
    if (c && !c.IsNull() && c.Mark().line >= 0) cfg_.lines[key(k)] = c.Mark().line + 1;
    return c;
  }

  template <class T>
  void get(const std::string& k, T& out) {
    YAML::Node c = child(k);
    if (!c || c.IsNull()) return;
    if (!c.IsScalar()) fail(c, key(k) + ": expected a scalar");
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        auto s = c.Scalar();
        if (!s.empty() && s[0] == '-') fail(c, key(k) + ": must be non-negative");
      }
      out = c.as<T>();
    } catch (const YAML::Exception&) {
      fail(c, key(k) + ": cannot parse '" + c.Scalar() + "'");
    }
  }

  template <class T>
  void get(const std::string& k, std::optional<T>& out) {
    YAML::Node c = child(k);
    if (!c || c.IsNull()) return;
    T v{};
    get(k, v);
    out = v;
  }

  template <class T>
  void get_list(const std::string& k, std::vector<T>& out) {
    YAML::Node c = child(k);
    if (!c || c.IsNull()) return;
    if (!c.IsSequence()) fail(c, key(k) + ": expected a list");
    out.clear();
    for (const auto& e : c) {
      try {
        out.push_back(e.as<T>());
      } catch (const YAML::Exception&) {
        fail(e, key(k) + ": cannot parse list entry");
      }
    }
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      auto k = kv.first.as<std::string>();
      if (!seen_.count(k)) fail(kv.first, "unknown key '" + key(k) + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string prefix_;
  ExperimentConfig& cfg_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void validate(const ExperimentConfig& c);

inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  ExperimentConfig cfg;
  cfg.source = source;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  using detail::NodeReader;
  NodeReader top(root, "", cfg);
  top.get("name", cfg.name);
  top.get("n_users", cfg.n_users);
  top.get("row_weight", cfg.row_weight);
  top.get("rounds", cfg.rounds);
  top.get("seed", cfg.seed);
  top.get("family_cap", cfg.family_cap);
  top.get("output_dir", cfg.output_dir);

  {
    YAML::Node n = top.child("strategy");
    NodeReader r(n, "strategy", cfg);
    std::string kind = std::string(to_string(cfg.strategy.kind));
    r.get("kind", kind);
    auto parsed = parse_strategy_kind(kind);
    if (!parsed) r.fail(n["kind"], "strategy.kind: unknown strategy '" + kind + "'");
    cfg.strategy.kind = *parsed;
    r.get("privacy_target", cfg.strategy.privacy_target);
    r.get("fairness", cfg.strategy.fairness);
    r.finish();
  }
  {
    YAML::Node n = top.child("dropout");
    NodeReader r(n, "dropout", cfg);
    std::string mode = "uniform";
    r.get("mode", mode);
    if (mode == "uniform") cfg.dropout.mode = DropoutMode::Uniform;
    else if (mode == "per_user") cfg.dropout.mode = DropoutMode::PerUser;
    else if (mode == "choice") cfg.dropout.mode = DropoutMode::Choice;
    else if (mode == "label_linked") cfg.dropout.mode = DropoutMode::LabelLinked;
    else r.fail(n["mode"], "dropout.mode: unknown mode '" + mode + "'");
    r.get("p", cfg.dropout.p);
    r.get_list("values", cfg.dropout.values);
    r.get_list("choices", cfg.dropout.choices);
    r.get("low", cfg.dropout.low);
    r.get("high", cfg.dropout.high);
    r.get("classes", cfg.dropout.classes);
    r.finish();
  }
  {
    YAML::Node n = top.child("metrics");
    NodeReader r(n, "metrics", cfg);
    r.get("weak_search_cap", cfg.metrics.weak_search_cap);
    r.get("weak_every", cfg.metrics.weak_every);
    r.finish();
  }
  {
    YAML::Node n = top.child("training");
    NodeReader r(n, "training", cfg);
    auto& t = cfg.training;
    r.get("enabled", t.enabled);
    r.get("model", t.model);
    r.get("hidden", t.hidden);
    {
      YAML::Node dn = r.child("data");
      NodeReader d(dn, "training.data", cfg);
      d.get("source", t.data.source);
      d.get("path", t.data.path);
      d.get("samples", t.data.samples);
      d.get("features", t.data.features);
      d.get("classes", t.data.classes);
      d.get("separation", t.data.separation);
      d.get("conditioning", t.data.conditioning);
      d.get("test_fraction", t.data.test_fraction);
      d.get("partition", t.data.partition);
      d.get("shared_size", t.data.shared_size);
      d.finish();
    }
    {
      YAML::Node ln = r.child("local");
      NodeReader l(ln, "training.local", cfg);
      l.get("epochs", t.local.epochs);
      l.get("batch_size", t.local.batch_size);
      l.get("learning_rate", t.local.learning_rate);
      l.get("lr_decay_factor", t.local.lr_decay_factor);
      l.get_list("lr_decay_rounds", t.local.lr_decay_rounds);
      l.finish();
    }
    r.finish();
  }
  {
    YAML::Node n = top.child("attack");
    NodeReader r(n, "attack", cfg);
    r.get("enabled", cfg.attack.enabled);
    r.get("model_dim", cfg.attack.model_dim);
    r.get("drift_sigma", cfg.attack.drift_sigma);
    r.get("window_begin", cfg.attack.window_begin);
    r.get("window_end", cfg.attack.window_end);
    r.finish();
  }
  top.finish();
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = csv::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(text, path);
}

// Raises ConfigError naming the field (and its line when known).
inline void validate(const ExperimentConfig& c) {
  auto fail = [&](const std::string& field, const std::string& msg) {
    auto it = c.lines.find(field);
    std::string where = c.source + (it != c.lines.end() ? ":" + std::to_string(it->second) : "");
    throw ConfigError(where + ": " + field + ": " + msg);
  };
  if (c.n_users == 0) fail("n_users", "must be positive");
  if (c.row_weight == 0 || c.row_weight > c.n_users)
    fail("row_weight", "must satisfy 0 < K <= N (K = " + std::to_string(c.row_weight) +
                           ", N = " + std::to_string(c.n_users) + ")");
  if (c.strategy.kind == StrategyKind::Partition && c.n_users % c.row_weight != 0)
    fail("row_weight", "partition strategy needs K to divide N");
  if (c.strategy.kind == StrategyKind::BatchSecAgg) {
    if (!c.strategy.privacy_target) fail("strategy.privacy_target", "required for batch_secagg");
    const std::size_t t = *c.strategy.privacy_target;
    if (t == 0) fail("strategy.privacy_target", "must be positive");
    if (c.n_users % t != 0)
      fail("strategy.privacy_target", "T = " + std::to_string(t) + " does not divide N = " + std::to_string(c.n_users));
    if (c.row_weight % t != 0)
      fail("strategy.privacy_target", "T = " + std::to_string(t) + " does not divide K = " + std::to_string(c.row_weight));
  } else if (c.strategy.privacy_target) {
    fail("strategy.privacy_target", "only valid for batch_secagg");
  }
  if (c.strategy.fairness && c.strategy.kind != StrategyKind::BatchSecAgg)
    fail("strategy.fairness", "only valid for batch_secagg");
  auto prob = [](double p) { return p >= 0.0 && p < 1.0; };
  switch (c.dropout.mode) {
    case DropoutMode::Uniform:
      if (!prob(c.dropout.p)) fail("dropout.p", "must lie in [0, 1)");
      break;
    case DropoutMode::PerUser:
      if (c.dropout.values.size() != c.n_users)
        fail("dropout.values", "needs exactly N = " + std::to_string(c.n_users) + " entries");
      for (double p : c.dropout.values)
        if (!prob(p)) fail("dropout.values", "entries must lie in [0, 1)");
      break;
    case DropoutMode::Choice:
      if (c.dropout.choices.empty()) fail("dropout.choices", "must not be empty");
      for (double p : c.dropout.choices)
        if (!prob(p)) fail("dropout.choices", "entries must lie in [0, 1)");
      break;
    case DropoutMode::LabelLinked:
      if (!prob(c.dropout.low)) fail("dropout.low", "must lie in [0, 1)");
      if (!prob(c.dropout.high)) fail("dropout.high", "must lie in [0, 1)");
      if (c.dropout.classes <= 0) fail("dropout.classes", "must be positive");
      break;
  }
  if (c.metrics.weak_every == 0) fail("metrics.weak_every", "must be positive");
  if (c.family_cap == 0) fail("family_cap", "must be positive");

  const auto& t = c.training;
  if (t.model != "softmax" && t.model != "perceptron") fail("training.model", "must be softmax or perceptron");
  if (t.model == "perceptron" && t.hidden == 0) fail("training.hidden", "must be positive");
  if (t.data.source != "synthetic" && t.data.source != "csv") fail("training.data.source", "must be synthetic or csv");
  if (t.data.source == "csv" && t.data.path.empty()) fail("training.data.path", "required for csv data");
  if (t.data.source == "synthetic") {
    if (t.data.samples < c.n_users) fail("training.data.samples", "must be at least N");
    if (t.data.features == 0) fail("training.data.features", "must be positive");
    if (t.data.classes < 2) fail("training.data.classes", "must be at least 2");
    if (!(t.data.conditioning >= 1.0)) fail("training.data.conditioning", "must be >= 1");
  }
  if (!(t.data.test_fraction > 0.0 && t.data.test_fraction < 1.0)) fail("training.data.test_fraction", "must lie in (0, 1)");
  if (t.data.partition != "iid" && t.data.partition != "noniid_shared")
    fail("training.data.partition", "must be iid or noniid_shared");
  if (t.local.epochs == 0) fail("training.local.epochs", "must be >= 1");
  if (t.local.batch_size == 0) fail("training.local.batch_size", "must be >= 1");
  if (!(t.local.learning_rate >= 0.0)) fail("training.local.learning_rate", "must be >= 0");
  if (!(t.local.lr_decay_factor > 0.0)) fail("training.local.lr_decay_factor", "must be > 0");

  const auto& a = c.attack;
  if (a.model_dim == 0) fail("attack.model_dim", "must be positive");
  if (!(a.drift_sigma >= 0.0)) fail("attack.drift_sigma", "must be >= 0");
  if (a.window_begin && a.window_end && *a.window_begin >= *a.window_end)
    fail("attack.window_end", "must exceed window_begin");
  if (a.window_end && *a.window_end > c.rounds) fail("attack.window_end", "exceeds rounds");
  if (a.window_begin && *a.window_begin >= c.rounds) fail("attack.window_begin", "must be below rounds");
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  using J = nlohmann::ordered_json;
  auto opt = [](const auto& o) { return o ? J(*o) : J(nullptr); };
  J j;
  j["name"] = c.name;
  j["n_users"] = c.n_users;
  j["row_weight"] = c.row_weight;
  j["rounds"] = c.rounds;
  j["seed"] = c.seed;
  j["family_cap"] = c.family_cap;
  j["output_dir"] = c.output_dir;
  j["strategy"] = {{"kind", std::string(to_string(c.strategy.kind))},
                   {"privacy_target", opt(c.strategy.privacy_target)},
                   {"fairness", c.strategy.fairness}};
  const char* mode = c.dropout.mode == DropoutMode::Uniform   ? "uniform"
                     : c.dropout.mode == DropoutMode::PerUser ? "per_user"
                     : c.dropout.mode == DropoutMode::Choice  ? "choice"
                                                              : "label_linked";
  j["dropout"] = {{"mode", mode}, {"p", c.dropout.p},     {"values", c.dropout.values}, {"choices", c.dropout.choices},
                  {"low", c.dropout.low}, {"high", c.dropout.high}, {"classes", c.dropout.classes}};
  j["metrics"] = {{"weak_search_cap", c.metrics.weak_search_cap}, {"weak_every", c.metrics.weak_every}};
  const auto& t = c.training;
  j["training"] = {{"enabled", t.enabled},
                   {"model", t.model},
                   {"hidden", t.hidden},
                   {"data",
                    {{"source", t.data.source},
                     {"path", t.data.path},
                     {"samples", t.data.samples},
                     {"features", t.data.features},
                     {"classes", t.data.classes},
                     {"separation", t.data.separation},
                     {"conditioning", t.data.conditioning},
                     {"test_fraction", t.data.test_fraction},
                     {"partition", t.data.partition},
                     {"shared_size", t.data.shared_size}}},
                   {"local",
                    {{"epochs", t.local.epochs},
                     {"batch_size", t.local.batch_size},
                     {"learning_rate", t.local.learning_rate},
                     {"lr_decay_factor", t.local.lr_decay_factor},
                     {"lr_decay_rounds", t.local.lr_decay_rounds}}}};
  j["attack"] = {{"enabled", c.attack.enabled},
                 {"model_dim", c.attack.model_dim},
                 {"drift_sigma", c.attack.drift_sigma},
                 {"window_begin", opt(c.attack.window_begin)},
                 {"window_end", opt(c.attack.window_end)}};
  return j;
}

inline SelectionStrategy make_strategy(const ExperimentConfig& c) {
  switch (c.strategy.kind) {
    case StrategyKind::Random: return SelectionStrategy::random(c.n_users, c.row_weight);
    case StrategyKind::WeightedRandom: return SelectionStrategy::weighted_random(c.n_users, c.row_weight);
    case StrategyKind::Partition: return SelectionStrategy::partition(c.n_users, c.row_weight);
    case StrategyKind::BatchSecAgg:
      return SelectionStrategy::batch_secagg(
          generate_bp_family(c.n_users, c.row_weight, *c.strategy.privacy_target, c.family_cap),
          c.strategy.fairness);
  }
  throw ParameterError("unknown strategy");
}

// `user_labels` (when non-empty) overrides the block label mapping.
inline UserPool make_pool(const ExperimentConfig& c, const std::vector<int>& user_labels = {}) {
  switch (c.dropout.mode) {
    case DropoutMode::Uniform: return UserPool::uniform(c.n_users, c.dropout.p);
    case DropoutMode::PerUser: return UserPool(c.dropout.values);
    case DropoutMode::Choice: {
      Rng rng = derive_stream(c.seed, {stream_tag::kDropout});
      std::uniform_int_distribution<std::size_t> pick(0, c.dropout.choices.size() - 1);
      std::vector<double> p;
      for (std::size_t i = 0; i < c.n_users; ++i) p.push_back(c.dropout.choices[pick(rng)]);
      return UserPool(std::move(p));
    }
    case DropoutMode::LabelLinked: {
      int classes = c.dropout.classes;
      std::vector<int> labels = user_labels;
      if (labels.empty()) {
        for (std::size_t i = 0; i < c.n_users; ++i)
          labels.push_back(static_cast<int>(i * static_cast<std::size_t>(classes) / c.n_users));
      } else {
        classes = c.training.data.classes;
      }
      return UserPool(label_linked_dropout(labels, classes, c.dropout.low, c.dropout.high));
    }
  }
  throw ParameterError("unknown dropout mode");
}

struct PreparedData {
  TrainingData data;
  std::vector<int> user_labels;  // set for non-IID partitions
};

inline PreparedData prepare_data(const ExperimentConfig& c) {
  const auto& d = c.training.data;
  Dataset all = d.source == "csv" ? dataset_from_csv(csv::read_file(d.path))
                                  : make_gaussian_mixture(d.samples, d.features, d.classes, d.separation, c.seed, d.conditioning);
  Rng rng = derive_stream(c.seed, {stream_tag::kData, 1});
  auto [train, test] = split_train_test(all, d.test_fraction, rng);
  PreparedData out;
  if (d.partition == "iid") {
    out.data.shards = partition_iid(train, c.n_users, rng);
  } else {
    auto part = partition_noniid_shared(train, c.n_users, d.shared_size, rng);
    out.data.shards = std::move(part.shards);
    out.user_labels = std::move(part.private_label);
  }
  out.data.train = std::move(train);
  out.data.test = std::move(test);
  return out;
}

inline Model make_model(const ExperimentConfig& c, const Dataset& train) {
  const std::size_t classes = static_cast<std::size_t>(train.n_classes);
  if (c.training.model == "perceptron") return Model::perceptron(train.n_features(), c.training.hidden, classes);
  return Model::softmax(train.n_features(), classes);
}

struct SimulationResult {
  ParticipationMatrix ledger;
  std::vector<MetricsSnapshot> metrics;
};

inline SimulationResult run_simulation(const ExperimentConfig& c) {
  auto strategy = make_strategy(c);
  auto pool = make_pool(c);
  Rng run = derive_stream(c.seed, {stream_tag::kRun});
  SimulationResult out{ParticipationMatrix(c.n_users), {}};
  MetricsTracker tracker(c.n_users, c.metrics);
  for (std::size_t t = 0; t < c.rounds; ++t) {
    auto a = sample_availability(pool, run);
    auto p = select(strategy, a, pool.frequencies(), run, t);
    append_round(out.ledger, pool, p, strategy.k());
    out.metrics.push_back(tracker.observe(out.ledger, t + 1 == c.rounds));
  }
  return out;
}

struct TrainResult {
  TrainingRun run;
  std::optional<ReconstructionReport> attack;
};

// Training run; with the attack enabled every user also computes its local
// model inside the attack window (the server still only sees aggregates),
// and the attack target is each user's mean local model over the window.
inline TrainResult run_train(const ExperimentConfig& c) {
  auto prepared = prepare_data(c);
  auto strategy = make_strategy(c);
  auto pool = make_pool(c, prepared.user_labels);
  Model model = make_model(c, prepared.data.train);
  TrainResult out{run_training(strategy, pool, prepared.data, model, c.training.local, c.rounds, c.seed, c.metrics), {}};
  if (!c.attack.enabled || c.rounds == 0) return out;

  const std::size_t quarter = c.rounds / 4;
  const std::size_t begin = c.attack.window_begin.value_or(quarter == 0 ? 0 : c.rounds - quarter);
  const std::size_t end = c.attack.window_end.value_or(c.rounds);
  if (begin >= end) throw ParameterError("attack window is empty");
  const auto d = static_cast<Eigen::Index>(model.dim());
  const auto n = static_cast<Eigen::Index>(c.n_users);
  RealMatrix truth = RealMatrix::Zero(n, d);
  RealMatrix globals = RealMatrix::Zero(static_cast<Eigen::Index>(end - begin), d);
  for (std::size_t t = begin; t < end; ++t) {
    GlobalModel g{out.run.models_history[t], t};
    const auto& sel = out.run.records[t].selected.bits;
    for (std::size_t u = 0; u < c.n_users; ++u) {
      Rng local = derive_stream(c.seed, {stream_tag::kLocal, t, u});
      Vector x = local_update(model, g, prepared.data.shards[u], c.training.local, local);
      truth.row(static_cast<Eigen::Index>(u)) += x.transpose();
      if (sel[u]) globals.row(static_cast<Eigen::Index>(t - begin)) += x.transpose();
    }
  }
  truth /= static_cast<double>(end - begin);
  AggregateTrace trace{globals, out.run.ledger.window(begin, end)};
  out.attack = score(reconstruct(trace), truth);
  return out;
}

inline AttackOutcome run_attack(const ExperimentConfig& c) {
  if (c.rounds == 0) throw ParameterError("attack needs at least one round");
  auto strategy = make_strategy(c);
  auto pool = make_pool(c);
  auto source = ModelSource::gaussian(c.n_users, c.attack.model_dim, c.seed, c.attack.drift_sigma);
  Rng run = derive_stream(c.seed, {stream_tag::kRun});
  AttackWindow w{c.attack.window_begin.value_or(0), c.attack.window_end};
  return attack_experiment(strategy, pool, c.rounds, source, run, w);
}

struct CompareRow {
  std::string label;
  std::size_t seeds = 0;
  std::optional<double> mean_final_accuracy;
  double mean_weak = 0.0;  // over seeds where weak privacy resolved
  double mean_strong = 0.0;
  double mean_fairness_gap = 0.0;
  double mean_cardinality = 0.0;
};

inline std::vector<std::uint64_t> trial_seeds(std::uint64_t master, std::size_t count) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(derive_seed(master, {stream_tag::kTrial, i}));
  return s;
}

inline std::string config_label(const ExperimentConfig& c) {
  if (!c.name.empty()) return c.name;
  std::string l(to_string(c.strategy.kind));
  if (c.strategy.privacy_target) l += "_T" + std::to_string(*c.strategy.privacy_target);
  if (c.strategy.fairness) l += "_fair";
  return l;
}

// Runs each config over the same derived seed set; training-enabled configs
// report accuracy, all report final-round metrics averaged over seeds.
inline std::vector<CompareRow> compare(const std::vector<ExperimentConfig>& configs, std::uint64_t master_seed,
                                       std::size_t n_seeds = 5) {
  std::vector<CompareRow> rows;
  if (configs.empty()) return rows;
  for (const auto& c : configs)
    if (c.n_users != configs[0].n_users || c.row_weight != configs[0].row_weight || c.rounds != configs[0].rounds)
      throw ConfigError(c.source + ": compare needs shared n_users, row_weight and rounds");
  const auto seeds = trial_seeds(master_seed, n_seeds);
  for (const auto& base : configs) {
    CompareRow row{config_label(base), n_seeds, std::nullopt};
    double acc = 0.0;
    std::size_t weak_n = 0, strong_n = 0;
    for (auto seed : seeds) {
      ExperimentConfig c = base;
      c.seed = seed;
      MetricsSnapshot last;
      if (c.training.enabled) {
        auto r = run_train(c);
        if (r.run.records.empty()) continue;
        acc += r.run.records.back().test_accuracy.value_or(0.0);
        last = r.run.records.back().metrics;
      } else {
        auto r = run_simulation(c);
        if (r.metrics.empty()) continue;
        last = r.metrics.back();
      }
      if (last.weak && last.weak->value) {
        row.mean_weak += static_cast<double>(*last.weak->value);
        ++weak_n;
      }
      if (last.strong) {
        row.mean_strong += static_cast<double>(*last.strong);
        ++strong_n;
      }
      row.mean_fairness_gap += last.fairness_gap;
      row.mean_cardinality += last.cardinality;
    }
    const double k = static_cast<double>(n_seeds);
    if (base.training.enabled && base.rounds > 0) row.mean_final_accuracy = acc / k;
    row.mean_weak = weak_n ? row.mean_weak / static_cast<double>(weak_n) : std::nan("");
    row.mean_strong = strong_n ? row.mean_strong / static_cast<double>(strong_n) : std::nan("");
    row.mean_fairness_gap /= k;
    row.mean_cardinality /= k;
    rows.push_back(row);
  }
  return rows;
}

inline std::string compare_to_csv(const std::vector<CompareRow>& rows) {
  std::string out = "config,seeds,mean_final_accuracy,T_weak,T_strong,F_inst,C_inst\n";
  for (const auto& r : rows) {
    out += r.label + "," + std::to_string(r.seeds) + ",";
    out += r.mean_final_accuracy ? csv::format_double(*r.mean_final_accuracy) : "NA";
    auto f = [](double v) { return std::isnan(v) ? std::string("NA") : csv::format_double(v); };
    out += "," + f(r.mean_weak) + "," + f(r.mean_strong) + "," + csv::format_double(r.mean_fairness_gap) + "," +
           csv::format_double(r.mean_cardinality) + "\n";
  }
  return out;
}

// Writes the standard artifacts of a verb into `dir`.
inline void write_outputs(const std::string& dir, const ExperimentConfig& c, const ParticipationMatrix& ledger,
                          const std::vector<MetricsSnapshot>& metrics) {
  std::filesystem::create_directories(dir);
  csv::write_file(dir + "/metrics.csv", metrics_to_csv(metrics));
  csv::write_file(dir + "/trace.csv", to_csv(ledger));
  csv::write_file(dir + "/config_resolved.json", to_json(c).dump(2) + "\n");
}

inline void write_attack(const std::string& dir, const ReconstructionReport& r) {
  std::filesystem::create_directories(dir);
  csv::write_file(dir + "/attack.csv", attack_to_csv(r));
  csv::write_file(dir + "/attack_summary.json", attack_summary(r).dump(2) + "\n");
}

}  // namespace mrsa
