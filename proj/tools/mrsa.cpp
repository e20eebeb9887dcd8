// mrsa: experiment runner.
//
//   mrsa family   --n 120 --k 12 --t 3,4,6,12 [--export DIR]
//   mrsa simulate --config FILE [--seed S] [--out DIR] [--rounds J]
//   mrsa train    --config FILE [...]
//   mrsa attack   --config FILE [...]
//   mrsa compare  FILE... [--seed S] [--seeds 5] [--out DIR]
//
// Exit status: 0 success, 2 configuration error, 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrsa/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> rounds;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config (YAML or JSON)")->required();
  cmd->add_option("--seed", o.seed, "master seed (overrides config)");
  cmd->add_option("--out", o.out, "output directory (overrides config)");
  cmd->add_option("--rounds", o.rounds, "number of rounds J (overrides config)");
}

mrsa::ExperimentConfig resolve(const Overrides& o) {
  auto cfg = mrsa::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.rounds) cfg.rounds = *o.rounds;
  mrsa::validate(cfg);
  return cfg;
}

void print_record_summary(const mrsa::MetricsSnapshot& m) {
  std::cout << "final round " << m.round << ": T_strong="
            << (m.strong ? std::to_string(*m.strong) : "NA") << " T_weak="
            << (m.weak && m.weak->value ? std::to_string(*m.weak->value) : "NA")
            << " F=" << mrsa::csv::format_double(m.fairness_gap)
            << " C=" << mrsa::csv::format_double(m.cardinality) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-round secure aggregation experiment runner"};
  app.require_subcommand(1);

  std::size_t fam_n = 120, fam_k = 12;
  std::vector<std::size_t> fam_t{3, 4, 6, 12};
  std::optional<std::string> fam_export;
  auto* family = app.add_subcommand("family", "privacy-preserving family sizes and export");
  family->add_option("--n", fam_n, "number of users N");
  family->add_option("--k", fam_k, "users per round K");
  family->add_option("--t", fam_t, "privacy targets T")->delimiter(',');
  family->add_option("--export", fam_export, "write family.csv and family.json per T into this directory");

  Overrides sim_o, train_o, attack_o;
  auto* simulate = app.add_subcommand("simulate", "selection-only simulation with metrics");
  add_common(simulate, sim_o);
  auto* train = app.add_subcommand("train", "federated training with metrics");
  add_common(train, train_o);
  auto* attack = app.add_subcommand("attack", "reconstruction attack on static or drifting models");
  add_common(attack, attack_o);

  std::vector<std::string> cmp_configs;
  std::uint64_t cmp_seed = 0;
  std::size_t cmp_seeds = 5;
  std::optional<std::string> cmp_out;
  auto* cmp = app.add_subcommand("compare", "multi-seed comparison of configs");
  cmp->add_option("configs", cmp_configs, "config files");
  cmp->add_option("--seed", cmp_seed, "master seed for the trial seeds");
  cmp->add_option("--seeds", cmp_seeds, "number of trial seeds")->check(CLI::PositiveNumber);
  cmp->add_option("--out", cmp_out, "write summary.csv into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*family) {
      for (std::size_t t : fam_t) {
        auto rows = mrsa::family_size(fam_n, fam_k, t);
        std::cout << "N=" << fam_n << " K=" << fam_k << " T=" << t << " rows=" << rows << "\n";
        if (fam_export) {
          auto f = mrsa::generate_bp_family(fam_n, fam_k, t);
          if (!f.materialized()) {
            std::cerr << "T=" << t << ": family of " << rows << " rows is implicit; skipping export\n";
            continue;
          }
          std::filesystem::create_directories(*fam_export);
          std::string stem = *fam_export + "/family_T" + std::to_string(t);
          mrsa::csv::write_file(stem + ".csv", mrsa::family_to_csv(f));
          mrsa::csv::write_file(stem + ".json", mrsa::family_sidecar(f).dump(2) + "\n");
        }
      }
    } else if (*simulate) {
      auto cfg = resolve(sim_o);
      auto r = mrsa::run_simulation(cfg);
      mrsa::write_outputs(cfg.output_dir, cfg, r.ledger, r.metrics);
      if (!r.metrics.empty()) print_record_summary(r.metrics.back());
    } else if (*train) {
      auto cfg = resolve(train_o);
      cfg.training.enabled = true;
      auto r = mrsa::run_train(cfg);
      std::vector<mrsa::MetricsSnapshot> metrics;
      for (const auto& rec : r.run.records) metrics.push_back(rec.metrics);
      mrsa::write_outputs(cfg.output_dir, cfg, r.run.ledger, metrics);
      mrsa::csv::write_file(cfg.output_dir + "/training.csv", mrsa::training_to_csv(r.run.records));
      if (r.attack) mrsa::write_attack(cfg.output_dir, *r.attack);
      if (!r.run.records.empty()) {
        print_record_summary(r.run.records.back().metrics);
        std::cout << "test accuracy " << mrsa::csv::format_double(*r.run.records.back().test_accuracy) << "\n";
      }
    } else if (*attack) {
      auto cfg = resolve(attack_o);
      cfg.attack.enabled = true;
      auto r = mrsa::run_attack(cfg);
      mrsa::MetricsTracker tracker(cfg.n_users, cfg.metrics);
      std::vector<mrsa::MetricsSnapshot> metrics;
      mrsa::ParticipationMatrix grow(cfg.n_users);
      for (std::size_t t = 0; t < r.ledger.rounds(); ++t) {
        grow.append(r.ledger.row(t));
        metrics.push_back(tracker.observe(grow, t + 1 == r.ledger.rounds()));
      }
      mrsa::write_outputs(cfg.output_dir, cfg, r.ledger, metrics);
      mrsa::write_attack(cfg.output_dir, r.report);
      auto mean = r.report.mean_error();
      std::cout << "mean relative error " << (mean ? mrsa::csv::format_double(*mean) : "NA") << ", unique "
                << r.report.count(mrsa::Identifiability::Unique) << "/" << cfg.n_users << "\n";
    } else if (*cmp) {
      std::vector<mrsa::ExperimentConfig> configs;
      for (const auto& path : cmp_configs) configs.push_back(mrsa::load_config(path));
      auto rows = mrsa::compare(configs, cmp_seed, cmp_seeds);
      auto table = mrsa::compare_to_csv(rows);
      std::cout << table;
      if (cmp_out) {
        std::filesystem::create_directories(*cmp_out);
        mrsa::csv::write_file(*cmp_out + "/summary.csv", table);
      }
    }
  } catch (const mrsa::ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const mrsa::DivergenceError& e) {
    std::cerr << "runtime error at round " << e.round() << ": " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
