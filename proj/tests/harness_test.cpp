#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "rfprune/rfprune.hpp"

using namespace rfprune;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rfprune_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<LayerSpec> tiny_layers() {
  return {LayerSpec::conv(4, 3, 4), LayerSpec::relu(),       LayerSpec::maxpool(4, 4),
          LayerSpec::conv(6, 3),    LayerSpec::relu(),       LayerSpec::maxpool(4, 4),
          LayerSpec::flatten(),     LayerSpec::dense(6),     LayerSpec::softmax()};
}

ExperimentSpec tiny_spec(const fs::path& dir) {
  ExperimentSpec s;
  s.output_dir = dir;
  s.dataset.per_class = 6;
  s.layers = tiny_layers();
  s.train = TrainConfig{3, 2, 0.01, 1};
  s.retrain_epochs_low = 1;
  s.retrain_epochs_high = 1;
  s.prune_pcts = {30, 50};
  return s;
}

}  // namespace

TEST(Generate, WritesBalancedDeterministicDataset) {
  const auto dir = temp_dir("gen");
  ExperimentSpec spec;
  spec.output_dir = dir;
  spec.dataset.per_class = 60;
  const auto r = cmd_generate(spec, 3);
  EXPECT_EQ(r.train + r.val + r.test, 360u);
  std::size_t tensors = 0, pgms = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "dataset")) {
    tensors += e.path().extension() == ".fmap";
    pgms += e.path().extension() == ".pgm";
  }
  EXPECT_EQ(tensors, 360u);
  EXPECT_EQ(pgms, 3u);
  std::size_t rows = 0;
  for (const char* split : {"train", "val", "test"}) {
    std::ifstream is(dir / "dataset" / split / "index.csv");
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) rows += !line.empty();
  }
  EXPECT_EQ(rows, 360u);
  const auto index = slurp(dir / "dataset" / "train" / "index.csv");
  const auto tensor = slurp(dir / "dataset" / "test" / "000007.fmap");
  cmd_generate(spec);
  EXPECT_EQ(slurp(dir / "dataset" / "train" / "index.csv"), index);
  EXPECT_EQ(slurp(dir / "dataset" / "test" / "000007.fmap"), tensor);
  const auto ds = read_dataset(dir / "dataset");
  std::array<std::size_t, 6> hist{};
  for (const auto& ex : ds.train.examples) ++hist[ex.label];
  EXPECT_LE(*std::max_element(hist.begin(), hist.end()) - *std::min_element(hist.begin(), hist.end()), 1u);
  fs::remove_all(dir);
}

TEST(ExperimentSpecJson, RoundTripsAndValidates) {
  ExperimentSpec s = tiny_spec("runs/x");
  s.metrics = {Metric::APoZ};
  s.strategies = {Strategy::LayerSequential};
  s.dataset.snr_set = {10, 20};
  s.train.momentum = 0.5;
  const auto j = spec_to_json(s);
  const auto back = spec_from_json(j);
  EXPECT_EQ(spec_to_json(back), j);
  EXPECT_EQ(back.layers.size(), tiny_layers().size());
  EXPECT_EQ(back.train.momentum, 0.5);
  EXPECT_NO_THROW(back.validate());

  const auto defaults = spec_from_json(nlohmann::json::object());
  EXPECT_EQ(defaults.prune_pcts, (std::vector<double>{5, 15, 30, 50, 70, 95}));
  EXPECT_EQ(defaults.metrics.size(), 3u);
  EXPECT_EQ(defaults.strategies.size(), 2u);

  for (double p : {0.0, 100.0, -5.0}) {
    auto bad = s;
    bad.prune_pcts = {p};
    EXPECT_THROW(bad.validate(), std::invalid_argument) << p;
  }
  auto no_metric = s;
  no_metric.metrics.clear();
  EXPECT_THROW(no_metric.validate(), std::invalid_argument);
  auto no_strategy = s;
  no_strategy.strategies.clear();
  EXPECT_THROW(no_strategy.validate(), std::invalid_argument);
  EXPECT_THROW(spec_from_json(nlohmann::json{{"metrics", {"taylor"}}}), std::invalid_argument);
}

TEST(TrainBaseline, SeparableDataAndPersistence) {
  const auto dir = temp_dir("base");
  auto spec = tiny_spec(dir);
  spec.train = TrainConfig{8, 2, 0.02, 1};
  Dataset ds;
  const auto all = oracle::quadrant_dataset(12, 4, kTFMapShape, 3);
  for (std::size_t i = 0; i < all.size(); ++i) {
    Split& s = i % 3 == 2 ? ds.test : ds.train;
    s.examples.push_back(all[i]);
  }
  for (std::size_t i = 0; i < all.size(); i += 7) ds.val.examples.push_back(all[i]);
  const auto r = train_baseline(spec, ds);
  EXPECT_GE(r.test_accuracy, 0.9);
  save_model(r.model, dir / "m.rfm");
  EXPECT_EQ(evaluate(load_model(dir / "m.rfm"), ds.test.examples), r.test_accuracy);
  const auto again = train_baseline(spec, ds);
  EXPECT_EQ(again.model, r.model);

  const auto row = baseline_report(r.model, r.test_accuracy);
  EXPECT_EQ(row.compression_pct, 0.0);
  EXPECT_EQ(row.speedup, 1.0);
  EXPECT_EQ(report_csv_row(row).rfind("baseline,0,0,", 0), 0u);
  fs::remove_all(dir);
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(temp_dir("pipe"));
    spec_ = new ExperimentSpec(tiny_spec(*dir_));
    cmd_generate(*spec_);
    cmd_train_baseline(*spec_);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete spec_;
    delete dir_;
  }
  static fs::path* dir_;
  static ExperimentSpec* spec_;
};
fs::path* Pipeline::dir_ = nullptr;
ExperimentSpec* Pipeline::spec_ = nullptr;

TEST_F(Pipeline, BaselineRecordMatchesModel) {
  const RunPaths paths{*dir_};
  const auto model = load_baseline(paths);
  const auto ds = read_dataset(paths.dataset());
  EXPECT_EQ(evaluate(model, ds.test.examples), recorded_baseline_accuracy(paths));
  EXPECT_THROW(load_baseline(RunPaths{*dir_ / "missing"}), std::runtime_error);
}

TEST_F(Pipeline, SaliencyTablesAndHistograms) {
  const RunPaths paths{*dir_};
  const auto model = load_baseline(paths);
  const auto val = read_split(paths.dataset() / "val");
  for (auto m : {Metric::L1Norm, Metric::APoZ, Metric::KMeansDist}) {
    const auto t = cmd_saliency(*spec_, m);
    std::ifstream is(paths.saliency_dir() / (std::string(metric_name(m)) + ".csv"));
    std::string line;
    std::size_t rows = 0;
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto c = detail::split_csv_line(line);
      const double score = std::stod(c[3]);
      if (m == Metric::APoZ) {
        EXPECT_GE(score, 0.0);
        EXPECT_LE(score, 1.0);
      }
      ++rows;
    }
    EXPECT_EQ(rows, 10u);
    SaliencyOptions opts;
    opts.seed = spec_->seed;
    const auto direct = compute_saliency(model, m, val.examples, opts);
    for (std::size_t id : model.conv_layer_ids()) EXPECT_EQ(t.prune_order(id), direct.prune_order(id));
    const auto hist = read_json(paths.saliency_dir() / (std::string(metric_name(m)) + "_hist.json"));
    EXPECT_EQ(hist["layers"].size(), 2u);
  }
}

TEST_F(Pipeline, MatrixRowsShapesAndDeterminism) {
  const RunPaths paths{*dir_};
  const auto r = cmd_run_matrix(*spec_);
  EXPECT_EQ(r.cells.size(), 12u);
  EXPECT_TRUE(r.all_done());
  const auto rows = load_experiment_csv(paths.experiment_csv());
  ASSERT_EQ(rows.size(), 13u);
  for (const auto& a : rows)
    for (const auto& b : rows)
      if (a.layer_pruning_pct == b.layer_pruning_pct) {
        EXPECT_EQ(a.flops, b.flops);
        EXPECT_EQ(a.params, b.params);
        EXPECT_EQ(a.compression_pct, b.compression_pct);
        EXPECT_EQ(a.speedup, b.speedup);
      }
  const auto csv = slurp(paths.experiment_csv());
  const auto plot = read_json(paths.plot_data());
  EXPECT_EQ(plot["series"].size(), 6u);
  EXPECT_EQ(plot["series"][0]["points"].size(), 2u);

  auto parallel = *spec_;
  parallel.workers = 3;
  cmd_run_matrix(parallel);
  EXPECT_EQ(slurp(paths.experiment_csv()), csv);

  std::ostringstream out;
  EXPECT_EQ(cmd_report(*dir_, out).size(), 13u);
  EXPECT_NE(out.str().find("setup-a"), std::string::npos);
}

TEST_F(Pipeline, FailedCellsAreRecordedAndSkipped) {
  auto spec = *spec_;
  spec.output_dir = *dir_ / "failing";
  fs::create_directories(spec.output_dir);
  spec.metrics = {Metric::L1Norm};
  spec.prune_pcts = {50};
  spec.max_iters = 1;  // setup-a needs two steps at p = 50 ({2, 3} filters)
  const RunPaths src{*dir_};
  const auto r = run_matrix(spec, load_baseline(src), recorded_baseline_accuracy(src), read_dataset(src.dataset()));
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[0].status, CellResult::Status::Failed);
  EXPECT_FALSE(r.cells[0].error.empty());
  EXPECT_EQ(r.cells[1].status, CellResult::Status::Done);
  const RunPaths paths{spec.output_dir};
  EXPECT_EQ(load_experiment_csv(paths.experiment_csv()).size(), 2u);
  const auto status = read_json(paths.matrix_status());
  EXPECT_EQ(status["done"], 1);
  EXPECT_EQ(status["cells"][0]["status"], "failed");
}

TEST(Report, RejectsInconsistentTables) {
  const auto dir = temp_dir("report");
  const std::string header = std::string(kReportCsvHeader) + "\n";
  const auto write = [&](const std::string& body) {
    std::ofstream(dir / "experiment.csv", std::ios::trunc) << header << body;
  };
  std::ostringstream out;
  write("baseline,0,0,200,100,1,90,none\napoz,50,50,100,50,2,80,setup-a\n");
  EXPECT_EQ(cmd_report(dir, out).size(), 2u);
  write("baseline,0,0,200,100,1,90,none\napoz,50,50,100,50,3,80,setup-a\n");
  EXPECT_THROW(load_experiment_csv(dir / "experiment.csv"), std::runtime_error);
  write("baseline,0,0,200,100,1,90,none\napoz,50,40,100,50,2,80,setup-a\n");
  EXPECT_THROW(load_experiment_csv(dir / "experiment.csv"), std::runtime_error);
  write("apoz,50,50,100,50,2,80,setup-a\n");
  EXPECT_THROW(load_experiment_csv(dir / "experiment.csv"), std::runtime_error);
  write("baseline,0,0,200,100,1,90,none\napoz,50,50,100,50,2,80,setup-a\nl1,50,52,100,48,2,80,setup-a\n");
  EXPECT_THROW(load_experiment_csv(dir / "experiment.csv"), std::runtime_error);
  std::ofstream(dir / "experiment.csv", std::ios::trunc) << "a,b\n";
  EXPECT_THROW(load_experiment_csv(dir / "experiment.csv"), std::runtime_error);
  fs::remove_all(dir);
}
