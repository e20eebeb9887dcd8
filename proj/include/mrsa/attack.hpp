#pragma once

// Honest-but-curious server attack: recover individual models from the
// history of aggregates by minimum-norm least squares, then score the
// estimate against ground truth.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrsa/core.hpp"
#include "mrsa/csv.hpp"
#include "mrsa/metrics.hpp"
#include "mrsa/numkit.hpp"
#include "mrsa/selection.hpp"

namespace mrsa {

enum class Identifiability { Unique, BatchAmbiguous, Unobserved };

inline std::string_view to_string(Identifiability id) {
  switch (id) {
    case Identifiability::Unique: return "unique";
    case Identifiability::BatchAmbiguous: return "batch_ambiguous";
    case Identifiability::Unobserved: return "unobserved";
  }
  return "?";
}

struct AggregateTrace {
  RealMatrix globals;                 // rounds x d
  ParticipationMatrix participation;  // rounds x N
};

struct Reconstruction {
  RealMatrix estimates;  // N x d
  std::vector<Identifiability> identifiability;
};

// Per-user identifiability: unique iff e_i lies in the row space of P.
inline std::vector<Identifiability> identifiability(const ParticipationMatrix& p) {
  std::vector<Identifiability> out(p.n_users(), Identifiability::Unobserved);
  auto classes = column_classes(p);
  if (classes.count() == 0) return out;
  auto space = detail::ledger_row_space(p, classes.count());
  const bool full = space.rank() == classes.count();
  for (std::size_t u = 0; u < p.n_users(); ++u) {
    std::size_t c = classes.class_of[u];
    if (c == ColumnClasses::kNone) continue;
    bool unique = classes.size(c) == 1 && (full || space.contains_unit_vector(u));
    out[u] = unique ? Identifiability::Unique : Identifiability::BatchAmbiguous;
  }
  return out;
}

// X_hat = P^+ X_global. Identical columns of P are merged first: with E the
// N x D class-indicator matrix and W = diag(class sizes), P = (Q W^1/2)(W^-1/2 E^T)
// and the second factor has orthonormal rows, so P^+ = E W^-1/2 (Q W^1/2)^+.
// Users of one class therefore receive bit-identical estimates.
inline Reconstruction reconstruct(const AggregateTrace& trace) {
  const auto& p = trace.participation;
  if (p.empty()) throw ParameterError("reconstruct: empty trace");
  if (static_cast<std::size_t>(trace.globals.rows()) != p.rounds())
    throw ParameterError("reconstruct: aggregate rows do not match participation rows");
  if (trace.globals.cols() < 1) throw ParameterError("reconstruct: model dimension must be >= 1");

  const std::size_t n = p.n_users();
  const auto d = trace.globals.cols();
  auto classes = column_classes(p);
  Reconstruction out{RealMatrix::Zero(static_cast<Eigen::Index>(n), d), identifiability(p)};
  if (classes.count() == 0) return out;

  RealMatrix a(static_cast<Eigen::Index>(p.rounds()), static_cast<Eigen::Index>(classes.count()));
  for (std::size_t c = 0; c < classes.count(); ++c) {
    const std::size_t rep = classes.members[c].front();
    const double scale = std::sqrt(static_cast<double>(classes.size(c)));
    for (std::size_t t = 0; t < p.rounds(); ++t)
      a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = p.row(t)[rep] ? scale : 0.0;
  }
  RealMatrix y = solve_min_norm_lsq(a, trace.globals);
  for (std::size_t c = 0; c < classes.count(); ++c) {
    const double scale = std::sqrt(static_cast<double>(classes.size(c)));
    Eigen::RowVectorXd est = y.row(static_cast<Eigen::Index>(c)) / scale;
    for (std::size_t u : classes.members[c]) out.estimates.row(static_cast<Eigen::Index>(u)) = est;
  }
  return out;
}

// e_i = ||x_i - x_hat_i||^2 / ||x_i||^2; empty for zero-norm truth rows.
inline std::vector<std::optional<double>> reconstruction_error(const RealMatrix& truth,
                                                               const RealMatrix& estimates) {
  if (truth.rows() != estimates.rows() || truth.cols() != estimates.cols())
    throw ParameterError("reconstruction_error: shape mismatch");
  std::vector<std::optional<double>> out(static_cast<std::size_t>(truth.rows()));
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    const double denom = truth.row(i).squaredNorm();
    if (denom == 0.0) continue;
    out[static_cast<std::size_t>(i)] = (truth.row(i) - estimates.row(i)).squaredNorm() / denom;
  }
  return out;
}

struct ReconstructionReport {
  RealMatrix estimates;
  std::vector<std::optional<double>> per_user_error;  // empty: undefined (unobserved or zero truth)
  std::vector<Identifiability> identifiability;

  std::vector<double> defined_errors() const {
    std::vector<double> v;
    for (const auto& e : per_user_error)
      if (e) v.push_back(*e);
    return v;
  }

  std::optional<double> mean_error() const {
    auto v = defined_errors();
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double e : v) s += e;
    return s / static_cast<double>(v.size());
  }

  std::optional<double> median_error() const {
    auto v = defined_errors();
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  }

  std::size_t count(Identifiability id) const {
    return static_cast<std::size_t>(std::count(identifiability.begin(), identifiability.end(), id));
  }
};

inline ReconstructionReport score(const Reconstruction& rec, const RealMatrix& truth) {
  ReconstructionReport r{rec.estimates, reconstruction_error(truth, rec.estimates), rec.identifiability};
  for (std::size_t u = 0; u < r.per_user_error.size(); ++u)
    if (r.identifiability[u] == Identifiability::Unobserved) r.per_user_error[u].reset();
  return r;
}

// Ground-truth local models: static (the worst case, models frozen across
// rounds) plus optional i.i.d. Gaussian perturbation of every aggregate.
struct ModelSource {
  RealMatrix models;  // N x d
  double drift_sigma = 0.0;

  static ModelSource gaussian(std::size_t n_users, std::size_t dim, std::uint64_t seed,
                              double drift_sigma = 0.0) {
    Rng rng = derive_stream(seed, {stream_tag::kModels});
    std::normal_distribution<double> normal(0.0, 1.0);
    ModelSource src{RealMatrix(static_cast<Eigen::Index>(n_users), static_cast<Eigen::Index>(dim)),
                    drift_sigma};
    for (Eigen::Index i = 0; i < src.models.rows(); ++i)
      for (Eigen::Index j = 0; j < src.models.cols(); ++j) src.models(i, j) = normal(rng);
    return src;
  }
};

struct AttackWindow {
  std::size_t begin = 0;
  std::optional<std::size_t> end;  // exclusive; default: end of trace
};

struct AttackOutcome {
  ParticipationMatrix ledger;
  AggregateTrace trace;  // the attacked window
  ReconstructionReport report;
};

// Runs the selection strategy, forms per-round aggregates P X (+ Z), and
// attacks the configured window. Skipped rounds contribute a zero row and
// a zero aggregate.
inline AttackOutcome attack_experiment(const SelectionStrategy& strategy, UserPool pool,
                                       std::size_t rounds, const ModelSource& source, Rng& rng,
                                       AttackWindow window = {}) {
  const std::size_t n = strategy.n_users();
  if (pool.size() != n || static_cast<std::size_t>(source.models.rows()) != n)
    throw ParameterError("attack_experiment: pool/model/strategy user counts differ");
  if (rounds == 0) throw ParameterError("attack_experiment: need at least one round");
  const auto d = source.models.cols();

  ParticipationMatrix ledger(n);
  RealMatrix globals = RealMatrix::Zero(static_cast<Eigen::Index>(rounds), d);
  std::normal_distribution<double> noise(0.0, source.drift_sigma > 0 ? source.drift_sigma : 1.0);
  for (std::size_t t = 0; t < rounds; ++t) {
    auto u = sample_availability(pool, rng);
    auto p = select(strategy, u, pool.frequencies(), rng, t);
    append_round(ledger, pool, p, strategy.k());
    if (p.skipped()) continue;
    for (std::size_t i = 0; i < n; ++i)
      if (p.bits[i]) globals.row(static_cast<Eigen::Index>(t)) += source.models.row(static_cast<Eigen::Index>(i));
    if (source.drift_sigma > 0)
      for (Eigen::Index j = 0; j < d; ++j) globals(static_cast<Eigen::Index>(t), j) += noise(rng);
  }

  const std::size_t end = window.end.value_or(rounds);
  if (window.begin >= end || end > rounds) throw ParameterError("attack window out of range");
  AggregateTrace trace{globals.middleRows(static_cast<Eigen::Index>(window.begin),
                                          static_cast<Eigen::Index>(end - window.begin)),
                       ledger.window(window.begin, end)};
  auto rec = reconstruct(trace);
  auto report = score(rec, source.models);
  return {std::move(ledger), std::move(trace), std::move(report)};
}

inline std::string attack_to_csv(const ReconstructionReport& r) {
  std::string out = "user,identifiability,error\n";
  for (std::size_t u = 0; u < r.per_user_error.size(); ++u) {
    out += std::to_string(u) + "," + std::string(to_string(r.identifiability[u])) + ",";
    out += r.per_user_error[u] ? csv::format_double(*r.per_user_error[u]) : "NA";
    out += "\n";
  }
  return out;
}

// Summary with decade-wide histogram bins of the per-user error.
inline nlohmann::ordered_json attack_summary(const ReconstructionReport& r) {
  nlohmann::ordered_json j;
  auto mean = r.mean_error();
  auto median = r.median_error();
  j["users"] = r.per_user_error.size();
  j["mean_error"] = mean ? nlohmann::ordered_json(*mean) : nlohmann::ordered_json(nullptr);
  j["median_error"] = median ? nlohmann::ordered_json(*median) : nlohmann::ordered_json(nullptr);
  j["unique"] = r.count(Identifiability::Unique);
  j["batch_ambiguous"] = r.count(Identifiability::BatchAmbiguous);
  j["unobserved"] = r.count(Identifiability::Unobserved);

  constexpr int kLowestDecade = -16;
  std::vector<std::size_t> counts(static_cast<std::size_t>(1 - kLowestDecade + 1), 0);
  std::size_t undefined = 0;
  for (const auto& e : r.per_user_error) {
    if (!e) {
      ++undefined;
      continue;
    }
    int decade = *e > 0 ? static_cast<int>(std::floor(std::log10(*e))) : kLowestDecade;
    decade = std::clamp(decade, kLowestDecade, 1);
    ++counts[static_cast<std::size_t>(decade - kLowestDecade)];
  }
  auto bins = nlohmann::ordered_json::array();
  for (int k = kLowestDecade; k <= 1; ++k) {
    nlohmann::ordered_json b;
    b["lower"] = k == kLowestDecade ? 0.0 : std::pow(10.0, k);
    b["upper"] = k == 1 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(std::pow(10.0, k + 1));
    b["count"] = counts[static_cast<std::size_t>(k - kLowestDecade)];
    bins.push_back(b);
  }
  j["histogram"] = bins;
  j["undefined"] = undefined;
  return j;
}

}  // namespace mrsa
