#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rfprune/experiment.hpp"

namespace rfprune {

/// Files an experiment writes under its output directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path baseline_model() const { return root / "baseline.rfm"; }
  std::filesystem::path baseline_record() const { return root / "baseline.json"; }
  std::filesystem::path saliency_dir() const { return root / "saliency"; }
  std::filesystem::path cell_dir(Metric m, Strategy s, double p) const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s_%s_p%g", metric_name(m), strategy_name(s), p);
    return root / "cells" / buf;
  }
  std::filesystem::path experiment_csv() const { return root / "experiment.csv"; }
  std::filesystem::path plot_data() const { return root / "plot_data.json"; }
  std::filesystem::path matrix_status() const { return root / "matrix_status.json"; }
  std::filesystem::path config_copy() const { return root / "config.json"; }
};

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(is);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateResult {
  std::size_t train = 0, val = 0, test = 0;
};

/// Synthesizes the dataset and writes it under <output_dir>/dataset, with
/// `pgm_dumps` graymaps of the first training examples for inspection.
inline GenerateResult cmd_generate(const ExperimentSpec& spec, std::size_t pgm_dumps = 0) {
  const RunPaths paths{spec.output_dir};
  std::filesystem::create_directories(paths.root);
  const Dataset ds = build_dataset(spec.dataset);
  write_dataset(ds, paths.dataset());
  write_json(spec_to_json(spec), paths.config_copy());
  if (pgm_dumps > 0) {
    const auto dir = paths.dataset() / "pgm";
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < std::min(pgm_dumps, ds.train.size()); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%06zu_%s.pgm", i, class_name(ds.train.meta[i].spec.class_label));
      std::string file = name;
      std::replace(file.begin(), file.end(), '#', '-');
      write_pgm(ds.train.examples[i].tensor, 0, dir / file);
    }
  }
  return {ds.train.size(), ds.val.size(), ds.test.size()};
}

// ---------------------------------------------------------------------------
// train

struct BaselineResult {
  NetworkGraph model;
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> loss_history;
};

inline BaselineResult train_baseline(const ExperimentSpec& spec, const Dataset& ds) {
  BaselineResult r;
  r.model = spec.initial_model();
  r.loss_history = train(r.model, ds.train.examples, spec.train).loss_history;
  r.test_accuracy = evaluate(r.model, ds.test.examples);
  r.val_accuracy = ds.val.size() ? evaluate(r.model, ds.val.examples) : 0.0;
  return r;
}

inline CompressionReport baseline_report(const NetworkGraph& model, double accuracy) {
  auto r = compression_report(model, model, accuracy, 0.0);
  r.approach = "baseline";
  r.strategy = "none";
  return r;
}

/// Trains the baseline on the generated dataset, saves it and its accuracy record.
inline BaselineResult cmd_train_baseline(const ExperimentSpec& spec) {
  const RunPaths paths{spec.output_dir};
  const Dataset ds = read_dataset(paths.dataset());
  auto r = train_baseline(spec, ds);
  save_model(r.model, paths.baseline_model());
  write_json({{"test_accuracy", r.test_accuracy},
              {"val_accuracy", r.val_accuracy},
              {"loss_history", r.loss_history},
              {"params", param_count(r.model)},
              {"flops", model_flops(r.model)},
              {"fingerprint", hex64(fingerprint(r.model))}},
             paths.baseline_record());
  return r;
}

inline double recorded_baseline_accuracy(const RunPaths& paths) {
  return read_json(paths.baseline_record()).at("test_accuracy").get<double>();
}

inline NetworkGraph load_baseline(const RunPaths& paths) {
  if (!std::filesystem::exists(paths.baseline_model()))
    throw std::runtime_error("no baseline model at " + paths.baseline_model().string() + "; run train first");
  return load_model(paths.baseline_model());
}

// ---------------------------------------------------------------------------
// saliency

inline SaliencyTable cmd_saliency(const ExperimentSpec& spec, Metric metric) {
  const RunPaths paths{spec.output_dir};
  const NetworkGraph model = load_baseline(paths);
  Split val;
  if (metric == Metric::APoZ) val = read_split(paths.dataset() / "val");
  SaliencyOptions opts;
  opts.kmeans_k = spec.kmeans_k;
  opts.apoz_samples = spec.apoz_samples;
  opts.seed = spec.seed;
  const auto table = compute_saliency(model, metric, val.examples, opts);
  std::filesystem::create_directories(paths.saliency_dir());
  write_saliency_csv(table, paths.saliency_dir() / (std::string(metric_name(metric)) + ".csv"));
  write_json(histogram_json(table, spec.histogram_bins),
             paths.saliency_dir() / (std::string(metric_name(metric)) + "_hist.json"));
  return table;
}

// ---------------------------------------------------------------------------
// prune (one cell) and matrix

struct CellResult {
  Metric metric = Metric::L1Norm;
  Strategy strategy = Strategy::IterativeMultiLayer;
  double p = 0.0;
  enum class Status { Pending, Done, Failed } status = Status::Pending;
  CompressionReport report;
  std::string error;
};

inline const char* status_name(CellResult::Status s) {
  switch (s) {
    case CellResult::Status::Pending: return "pending";
    case CellResult::Status::Done: return "done";
    case CellResult::Status::Failed: return "failed";
  }
  return "?";
}

/// Runs one (metric, strategy, p) cell against an in-memory baseline and
/// dataset, writing its trace and pruned model.
inline CellResult run_cell(const ExperimentSpec& spec, const NetworkGraph& baseline, const Dataset& ds, Metric m,
                           Strategy s, double p) {
  CellResult cell;
  cell.metric = m;
  cell.strategy = s;
  cell.p = p;
  try {
    const auto cfg = spec.schedule_config(m, s, p);
    const ScheduleData data{ds.train.examples, ds.val.examples, ds.test.examples};
    auto result = run_schedule(baseline, data, cfg);
    const RunPaths paths{spec.output_dir};
    const auto dir = paths.cell_dir(m, s, p);
    std::filesystem::create_directories(dir);
    write_json(to_json(result.trace), dir / "trace.json");
    save_model(result.model, dir / "model.rfm");
    if (!result.trace.completed) throw std::runtime_error(result.trace.message);
    cell.report = compression_report(baseline, result.model, result.trace.final_accuracy, p);
    cell.report.approach = metric_name(m);
    cell.report.strategy = strategy_name(s);
    cell.status = CellResult::Status::Done;
  } catch (const std::exception& e) {
    cell.status = CellResult::Status::Failed;
    cell.error = e.what();
  }
  return cell;
}

inline CellResult cmd_prune(const ExperimentSpec& spec, Metric m, Strategy s, double p) {
  const RunPaths paths{spec.output_dir};
  const Dataset ds = read_dataset(paths.dataset());
  return run_cell(spec, load_baseline(paths), ds, m, s, p);
}

struct MatrixResult {
  std::vector<CellResult> cells;
  CompressionReport baseline;

  bool all_done() const {
    return std::all_of(cells.begin(), cells.end(),
                       [](const CellResult& c) { return c.status == CellResult::Status::Done; });
  }
  std::size_t done() const {
    return std::size_t(std::count_if(cells.begin(), cells.end(),
                                     [](const CellResult& c) { return c.status == CellResult::Status::Done; }));
  }
};

/// Cells in (metric, strategy, p) order: the cartesian product of the spec lists.
inline std::vector<CellResult> matrix_cells(const ExperimentSpec& spec) {
  std::vector<CellResult> cells;
  for (auto m : spec.metrics)
    for (auto s : spec.strategies)
      for (double p : spec.prune_pcts) {
        CellResult c;
        c.metric = m;
        c.strategy = s;
        c.p = p;
        cells.push_back(std::move(c));
      }
  return cells;
}

inline void write_experiment_csv(const MatrixResult& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << kReportCsvHeader << '\n' << report_csv_row(r.baseline) << '\n';
  for (const auto& c : r.cells)
    if (c.status == CellResult::Status::Done) os << report_csv_row(c.report) << '\n';
}

/// (p, accuracy %) series per metric and strategy, plus the baseline level.
inline nlohmann::json plot_data_json(const MatrixResult& r) {
  using nlohmann::json;
  std::map<std::pair<std::string, std::string>, json> series;
  for (const auto& c : r.cells) {
    if (c.status != CellResult::Status::Done) continue;
    auto& s = series[{metric_name(c.metric), strategy_name(c.strategy)}];
    if (s.is_null()) s = json::array();
    s.push_back({{"p", c.p}, {"accuracy_pct", 100.0 * c.report.top1_accuracy}});
  }
  json out = {{"baseline_accuracy_pct", 100.0 * r.baseline.top1_accuracy}, {"series", json::array()}};
  for (auto& [key, points] : series)
    out["series"].push_back({{"metric", key.first}, {"strategy", key.second}, {"points", points}});
  return out;
}

inline nlohmann::json matrix_status_json(const MatrixResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"metric", metric_name(c.metric)},
                     {"strategy", strategy_name(c.strategy)},
                     {"p", c.p},
                     {"status", status_name(c.status)},
                     {"error", c.error}});
  return {{"total", r.cells.size()}, {"done", r.done()}, {"cells", cells}};
}

/// Runs every cell of the matrix against an in-memory baseline and dataset.
/// Cells run on up to spec.workers threads, each on its own model copy; a
/// failing cell is recorded and the rest continue. Output files are written
/// once, in cell order, after all cells finish.
inline MatrixResult run_matrix(const ExperimentSpec& spec, const NetworkGraph& baseline, double baseline_accuracy,
                               const Dataset& ds, std::ostream* log = nullptr) {
  const RunPaths paths{spec.output_dir};
  std::filesystem::create_directories(paths.root);
  MatrixResult r;
  r.baseline = baseline_report(baseline, baseline_accuracy);
  r.cells = matrix_cells(spec);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < r.cells.size(); i = next++) {
      auto& c = r.cells[i];
      c = run_cell(spec, baseline, ds, c.metric, c.strategy, c.p);
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << "[" << (i + 1) << "/" << r.cells.size() << "] " << metric_name(c.metric) << ' '
             << strategy_name(c.strategy) << " p=" << c.p << ": " << status_name(c.status);
        if (c.status == CellResult::Status::Done) *log << " acc=" << 100.0 * c.report.top1_accuracy << '%';
        else *log << " (" << c.error << ')';
        *log << std::endl;
      }
    }
  };
  const std::size_t n = std::min(spec.workers, std::max<std::size_t>(1, r.cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  write_experiment_csv(r, paths.experiment_csv());
  write_json(plot_data_json(r), paths.plot_data());
  write_json(matrix_status_json(r), paths.matrix_status());
  return r;
}

inline MatrixResult cmd_run_matrix(const ExperimentSpec& spec, std::ostream* log = nullptr) {
  const RunPaths paths{spec.output_dir};
  const Dataset ds = read_dataset(paths.dataset());
  const NetworkGraph baseline = load_baseline(paths);
  return run_matrix(spec, baseline, recorded_baseline_accuracy(paths), ds, log);
}

// ---------------------------------------------------------------------------
// report

struct ReportRow {
  std::string approach;
  double layer_pruning_pct = 0.0;
  double compression_pct = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  double speedup = 0.0;
  double accuracy_pct = 0.0;
  std::string strategy;
};

/// Parses an experiment CSV and checks it: the schema, a leading baseline row,
/// every row's speedup and compression against the baseline counts, and equal
/// FLOPs/parameters for all rows sharing a pruning percentage.
inline std::vector<ReportRow> load_experiment_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kReportCsvHeader) throw std::runtime_error("unexpected experiment CSV header: " + line);
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 8) throw std::runtime_error("malformed experiment row: " + line);
    rows.push_back({c[0], std::stod(c[1]), std::stod(c[2]), std::stoull(c[3]), std::stoull(c[4]), std::stod(c[5]),
                    std::stod(c[6]), c[7]});
  }
  if (rows.empty() || rows.front().approach != "baseline") throw std::runtime_error("missing baseline row");
  const auto& base = rows.front();
  std::map<double, std::pair<std::uint64_t, std::uint64_t>> shape_at_p;
  for (const auto& r : rows) {
    CompressionReport cr;
    cr.flops_base = base.flops;
    cr.flops_pruned = r.flops;
    cr.params_base = base.params;
    cr.params_pruned = r.params;
    cr.speedup = r.speedup;
    cr.compression_pct = r.compression_pct;
    cr.top1_accuracy = r.accuracy_pct / 100.0;
    try {
      cr.validate();
    } catch (const std::exception& e) {
      throw std::runtime_error("row '" + r.approach + "," + r.strategy + "' invalid: " + e.what());
    }
    auto [it, fresh] = shape_at_p.try_emplace(r.layer_pruning_pct, r.flops, r.params);
    if (!fresh && it->second != std::pair(r.flops, r.params))
      throw std::runtime_error("rows at p = " + std::to_string(r.layer_pruning_pct) + " disagree on FLOPs/params");
  }
  return rows;
}

/// Validates an experiment directory and prints its table grouped by strategy.
inline std::vector<ReportRow> cmd_report(const std::filesystem::path& dir, std::ostream& out) {
  const RunPaths paths{dir};
  const auto rows = load_experiment_csv(paths.experiment_csv());
  if (std::filesystem::exists(paths.matrix_status())) {
    const auto status = read_json(paths.matrix_status());
    if (status.at("done").get<std::size_t>() + 1 != rows.size())
      throw std::runtime_error("experiment CSV row count does not match the matrix status");
  }
  const auto& base = rows.front();
  out << std::fixed;
  out << "baseline: " << std::setprecision(3) << base.flops / 1e6 << " M FLOPs, " << base.params / 1e6
      << " M params, top-1 " << std::setprecision(2) << base.accuracy_pct << "%\n";
  std::map<std::string, std::vector<const ReportRow*>> by_strategy;
  for (std::size_t i = 1; i < rows.size(); ++i) by_strategy[rows[i].strategy].push_back(&rows[i]);
  for (const auto& [strategy, rs] : by_strategy) {
    out << "\n" << strategy << "\n";
    out << std::left << std::setw(10) << "approach" << std::right << std::setw(8) << "p%" << std::setw(14)
        << "compress%" << std::setw(12) << "MFLOPs" << std::setw(12) << "Mparams" << std::setw(10) << "speedup"
        << std::setw(10) << "top-1%" << "\n";
    for (const auto* r : rs) {
      out << std::left << std::setw(10) << r->approach << std::right << std::setprecision(0) << std::setw(8)
          << r->layer_pruning_pct << std::setprecision(3) << std::setw(14) << r->compression_pct << std::setw(12)
          << r->flops / 1e6 << std::setprecision(4) << std::setw(12) << r->params / 1e6 << std::setprecision(2)
          << std::setw(9) << r->speedup << "x" << std::setw(10) << r->accuracy_pct << "\n";
    }
  }
  return rows;
}

}  // namespace rfprune
