// rfprune command-line front end.
//
//   rfprune generate --config exp.json [--pgm 12]
//   rfprune train    --config exp.json
//   rfprune saliency --config exp.json --metric apoz
//   rfprune prune    --config exp.json --metric l1 --strategy setup-a --p 30
//   rfprune matrix   --config exp.json [--workers 2]
//   rfprune report   --dir runs/desk

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rfprune/harness.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> per_class;
  std::optional<std::vector<double>> snr_db;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> train_epochs;
  std::optional<std::vector<std::string>> metrics;
  std::optional<std::vector<std::string>> strategies;
  std::optional<std::vector<double>> prune_pcts;
};

void add_spec_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Experiment JSON file (defaults apply when omitted)");
  cmd->add_option("-o,--output-dir", o.output_dir, "Output directory");
  cmd->add_option("--seed", o.seed, "Experiment seed");
  cmd->add_option("--per-class", o.per_class, "Examples per class");
  cmd->add_option("--snr-db", o.snr_db, "SNR values (dB) to draw from");
  cmd->add_option("--workers", o.workers, "Concurrent matrix cells");
  cmd->add_option("--train-epochs", o.train_epochs, "Baseline training epochs");
  cmd->add_option("--metrics", o.metrics, "Saliency metrics (l1, apoz, kmeans)");
  cmd->add_option("--strategies", o.strategies, "Schedules (setup-a, setup-b-seq, setup-b-greedy)");
  cmd->add_option("--p-list", o.prune_pcts, "Per-layer pruning percentages");
}

rfprune::ExperimentSpec resolve(const Overrides& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) j = rfprune::read_json(o.config);
  if (o.output_dir) j["output_dir"] = *o.output_dir;
  if (o.seed) j["seed"] = *o.seed;
  if (o.per_class) j["dataset"]["per_class"] = *o.per_class;
  if (o.snr_db) j["dataset"]["snr_db"] = *o.snr_db;
  if (o.workers) j["workers"] = *o.workers;
  if (o.train_epochs) j["train"]["epochs"] = *o.train_epochs;
  if (o.metrics) j["metrics"] = *o.metrics;
  if (o.strategies) j["strategies"] = *o.strategies;
  if (o.prune_pcts) j["prune_pcts"] = *o.prune_pcts;
  return rfprune::spec_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured filter pruning experiments on synthetic radar TF maps"};
  app.require_subcommand(1);

  Overrides o;
  std::size_t pgm = 0;
  std::string metric, strategy, report_dir;
  double p = 0.0;

  auto* gen = app.add_subcommand("generate", "Synthesize the dataset");
  add_spec_flags(gen, o);
  gen->add_option("--pgm", pgm, "Dump this many training maps as PGM images");

  auto* tr = app.add_subcommand("train", "Train and save the baseline model");
  add_spec_flags(tr, o);

  auto* sal = app.add_subcommand("saliency", "Score baseline filters and write table + histogram");
  add_spec_flags(sal, o);
  sal->add_option("--metric", metric, "l1, apoz or kmeans")->required();

  auto* pr = app.add_subcommand("prune", "Run one (metric, strategy, p) cell");
  add_spec_flags(pr, o);
  pr->add_option("--metric", metric, "l1, apoz or kmeans")->required();
  pr->add_option("--strategy", strategy, "setup-a, setup-b-seq or setup-b-greedy")->required();
  pr->add_option("--p", p, "Per-layer pruning percentage")->required();

  auto* mx = app.add_subcommand("matrix", "Run every metric x strategy x p cell");
  add_spec_flags(mx, o);

  auto* rep = app.add_subcommand("report", "Validate and print an experiment table");
  rep->add_option("-d,--dir", report_dir, "Experiment output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rep) {
      rfprune::cmd_report(report_dir, std::cout);
      return 0;
    }
    const auto spec = resolve(o);
    if (*gen) {
      const auto r = rfprune::cmd_generate(spec, pgm);
      std::cout << "wrote " << r.train << " train, " << r.val << " val, " << r.test << " test examples to "
                << rfprune::RunPaths{spec.output_dir}.dataset().string() << "\n";
    } else if (*tr) {
      const auto r = rfprune::cmd_train_baseline(spec);
      std::cout << "baseline test accuracy " << 100.0 * r.test_accuracy << "% (val " << 100.0 * r.val_accuracy
                << "%)\n";
    } else if (*sal) {
      const auto t = rfprune::cmd_saliency(spec, rfprune::parse_metric(metric));
      std::size_t n = 0;
      for (const auto& [_, v] : t.per_layer) n += v.size();
      std::cout << "scored " << n << " filters in " << t.per_layer.size() << " layers\n";
    } else if (*pr) {
      const auto c = rfprune::cmd_prune(spec, rfprune::parse_metric(metric), rfprune::parse_strategy(strategy), p);
      if (c.status != rfprune::CellResult::Status::Done) {
        std::cerr << "cell failed: " << c.error << "\n";
        return 1;
      }
      std::cout << rfprune::kReportCsvHeader << "\n" << rfprune::report_csv_row(c.report) << "\n";
    } else if (*mx) {
      const auto r = rfprune::cmd_run_matrix(spec, &std::cout);
      std::cout << r.done() << "/" << r.cells.size() << " cells done\n";
      return r.all_done() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
