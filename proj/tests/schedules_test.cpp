#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rfprune/rfprune.hpp"

using namespace rfprune;

namespace {

struct Fixture {
  NetworkGraph model;
  std::vector<TFExample> train, val, test;
  ScheduleData data() const { return {train, val, test}; }
};

// Two conv layers with 10 and 17 filters: p = 30 marks {3, 5}.
Fixture toy(std::uint64_t seed = 1) {
  Fixture f;
  f.model = oracle::toy_two_conv(seed, 10, 17, 3);
  f.train = oracle::quadrant_dataset(4, 3, {2, 12, 12}, seed + 10);
  f.val = oracle::quadrant_dataset(2, 3, {2, 12, 12}, seed + 20);
  f.test = oracle::quadrant_dataset(3, 3, {2, 12, 12}, seed + 30);
  return f;
}

ScheduleConfig config(Strategy s, double p, double lr = 0.05) {
  ScheduleConfig c;
  c.strategy = s;
  c.metric = Metric::L1Norm;
  c.target_pct = p;
  c.retrain_epochs_low = 2;
  c.retrain_epochs_high = 3;
  c.train.batch_size = 4;
  c.train.learning_rate = lr;
  c.seed = 99;
  return c;
}

std::vector<std::size_t> filter_counts(const NetworkGraph& m) {
  std::vector<std::size_t> v;
  for (auto id : m.conv_layer_ids()) v.push_back(m.conv(id).filters.size());
  return v;
}

// Indices of the `count` smallest-L1 filters of a conv layer, ties to the lower index.
std::set<std::size_t> lowest_l1(const Conv& conv, std::size_t count) {
  std::vector<std::pair<double, std::size_t>> s;
  for (std::size_t f = 0; f < conv.filters.size(); ++f) {
    double a = 0;
    for (float w : conv.filters[f].weights) a += std::abs(double(w));
    s.push_back({a, f});
  }
  std::sort(s.begin(), s.end());
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) out.insert(s[i].second);
  return out;
}

}  // namespace

TEST(SetupA, MatchesHandSimulation) {
  const auto fx = toy();
  // lr 0 makes retraining the identity, so the oracle can replay every step.
  const auto r = run_setup_a(fx.model, fx.data(), config(Strategy::IterativeMultiLayer, 30, 0.0));
  ASSERT_EQ(r.trace.targets, (std::map<std::size_t, std::size_t>{{0, 3}, {3, 5}}));
  ASSERT_EQ(r.trace.steps.size(), 2u);
  EXPECT_TRUE(r.trace.completed);

  NetworkGraph m = fx.model;
  // step 1: delta = min(3, 5) = 3 from both layers
  PrunePlan p1;
  p1.per_layer[0] = lowest_l1(m.conv(0), 3);
  p1.per_layer[3] = lowest_l1(m.conv(3), 3);
  EXPECT_EQ(r.trace.steps[0].delta, 3u);
  EXPECT_EQ(r.trace.steps[0].plan.per_layer, p1.per_layer);
  m = apply_prune(m, p1);
  // step 2: layer 0 is done; the remaining 2 of layer 3 come from a fresh ranking
  PrunePlan p2;
  p2.per_layer[3] = lowest_l1(m.conv(3), 2);
  EXPECT_EQ(r.trace.steps[1].plan.per_layer, p2.per_layer);
  m = apply_prune(m, p2);
  EXPECT_EQ(r.model, m);
  EXPECT_EQ(filter_counts(r.model), (std::vector<std::size_t>{7, 12}));
}

TEST(SetupA, SingleFilterTargetsTakeOneStep) {
  const auto fx = toy();
  // 10% of 10 -> 1 and of 17 -> 1
  const auto r = run_setup_a(fx.model, fx.data(), config(Strategy::IterativeMultiLayer, 10));
  EXPECT_EQ(r.trace.steps.size(), 1u);
  EXPECT_EQ(r.trace.steps[0].delta, 1u);
  EXPECT_EQ(r.trace.retrain_events(), 1u);
}

TEST(SetupA, SaliencyRecomputedFromRetrainedModel) {
  const auto fx = toy();
  const auto cfg = config(Strategy::IterativeMultiLayer, 30);
  const auto r = run_setup_a(fx.model, fx.data(), cfg);
  ASSERT_EQ(r.trace.steps.size(), 2u);
  const auto& s = r.trace.steps;
  EXPECT_EQ(s[0].saliency_source, r.trace.baseline);
  EXPECT_NE(s[0].retrained, s[0].pruned);
  EXPECT_EQ(s[1].saliency_source, s[0].retrained);
  EXPECT_NE(s[1].saliency_source, r.trace.baseline);
  EXPECT_EQ(s[1].retrained, fingerprint(r.model));
  // replaying only the first step yields the model the second step ranked
  auto one = cfg;
  one.max_iters = 1;
  const auto first = run_setup_a(fx.model, fx.data(), one);
  EXPECT_FALSE(first.trace.completed);
  EXPECT_EQ(fingerprint(first.model), s[0].retrained);
  EXPECT_EQ(s[1].plan.per_layer.at(3), lowest_l1(first.model.conv(3), 2));
}

TEST(SetupA, RetrainEpochRuleAroundFifty) {
  const auto fx = toy();
  for (double p : {10.0, 30.0, 49.0, 50.0, 60.0}) {
    auto cfg = config(Strategy::IterativeMultiLayer, p);
    cfg.retrain_epochs_low = 10;
    cfg.retrain_epochs_high = 30;
    cfg.train.learning_rate = 0.0;
    const auto r = run_setup_a(fx.model, fx.data(), cfg);
    ASSERT_FALSE(r.trace.steps.empty());
    for (const auto& s : r.trace.steps) EXPECT_EQ(s.retrain_epochs, p < 50 ? 10u : 30u) << "p " << p;
  }
}

TEST(SetupA, MaxItersBoundIsReported) {
  const auto fx = toy();
  auto cfg = config(Strategy::IterativeMultiLayer, 30);
  cfg.max_iters = 1;
  const auto r = run_setup_a(fx.model, fx.data(), cfg);
  EXPECT_EQ(r.trace.steps.size(), 1u);
  EXPECT_FALSE(r.trace.completed);
  EXPECT_FALSE(r.trace.message.empty());
}

TEST(LayerSequential, UnitCapStepsOncePerFilter) {
  const auto fx = toy();
  auto cfg = config(Strategy::LayerSequential, 30);
  cfg.step_cap = 1;
  const auto r = run_layer_sequential(fx.model, fx.data(), cfg);
  ASSERT_EQ(r.trace.steps.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(r.trace.steps[i].layer, i < 3 ? 0u : 3u);
    EXPECT_EQ(r.trace.steps[i].delta, 1u);
    EXPECT_EQ(r.trace.steps[i].plan.total(), 1u);
  }
  EXPECT_EQ(r.trace.retrain_events(), 8u);
  EXPECT_EQ(filter_counts(r.model), (std::vector<std::size_t>{7, 12}));
}

TEST(LayerSequential, LargeCapTakesOneStepPerLayer) {
  const auto fx = toy();
  auto cfg = config(Strategy::LayerSequential, 30);
  cfg.step_cap = 100;
  const auto r = run_layer_sequential(fx.model, fx.data(), cfg);
  ASSERT_EQ(r.trace.steps.size(), 2u);
  EXPECT_EQ(r.trace.steps[0].delta, 3u);
  EXPECT_EQ(r.trace.steps[1].delta, 5u);
  EXPECT_EQ(r.trace.steps[1].plan.step_cap, 100u);
}

TEST(LayerSequential, PermutedOrderGivesSameShape) {
  const auto fx = toy();
  auto cfg = config(Strategy::LayerSequential, 30);
  cfg.step_cap = 2;
  const auto forward_order = run_layer_sequential(fx.model, fx.data(), cfg);
  cfg.layer_order = {3, 0};
  const auto reversed = run_layer_sequential(fx.model, fx.data(), cfg);
  EXPECT_EQ(reversed.trace.steps.front().layer, 3u);
  EXPECT_EQ(forward_order.trace.steps.front().layer, 0u);
  EXPECT_EQ(reversed.model.shapes(), forward_order.model.shapes());
  cfg.layer_order = {0};
  EXPECT_THROW(run_layer_sequential(fx.model, fx.data(), cfg), std::invalid_argument);
}

TEST(OneShot, OnePruneAndOneRetrain) {
  const auto fx = toy();
  const auto r = run_oneshot(fx.model, fx.data(), config(Strategy::OneShot, 30));
  EXPECT_EQ(r.trace.prune_events(), 1u);
  EXPECT_EQ(r.trace.retrain_events(), 1u);
  EXPECT_EQ(r.trace.steps[0].saliency_source, r.trace.baseline);
  EXPECT_EQ(r.trace.steps[0].plan.per_layer.at(0), lowest_l1(fx.model.conv(0), 3));
  EXPECT_EQ(r.trace.steps[0].plan.per_layer.at(3), lowest_l1(fx.model.conv(3), 5));
}

TEST(OneShot, ZeroPercentIsNoOp) {
  const auto fx = toy();
  const auto r = run_oneshot(fx.model, fx.data(), config(Strategy::OneShot, 0));
  EXPECT_EQ(r.model, fx.model);
  EXPECT_EQ(r.trace.prune_events(), 0u);
  EXPECT_TRUE(r.trace.completed);
  EXPECT_EQ(r.trace.final_accuracy, evaluate(fx.model, fx.test));
}

TEST(Strategies, AllEndWithTheSameShape) {
  const auto fx = toy();
  for (auto metric : {Metric::L1Norm, Metric::APoZ, Metric::KMeansDist}) {
    for (double p : {10.0, 30.0, 50.0}) {
      std::vector<std::vector<Shape>> shapes;
      for (auto s : {Strategy::IterativeMultiLayer, Strategy::LayerSequential, Strategy::OneShot}) {
        auto cfg = config(s, p);
        cfg.metric = metric;
        cfg.step_cap = 2;
        const auto r = run_schedule(fx.model, fx.data(), cfg);
        EXPECT_TRUE(r.trace.completed);
        shapes.push_back(r.model.shapes());
        std::uint64_t last = param_count(fx.model);
        for (const auto& st : r.trace.steps) {
          EXPECT_LT(st.params, last);
          last = st.params;
          ASSERT_TRUE(st.accuracy.has_value());
        }
      }
      EXPECT_EQ(shapes[0], shapes[1]);
      EXPECT_EQ(shapes[0], shapes[2]);
    }
  }
}

TEST(Strategies, DeterministicUnderSeed) {
  const auto fx = toy();
  auto cfg = config(Strategy::IterativeMultiLayer, 30);
  cfg.metric = Metric::KMeansDist;
  const auto a = run_schedule(fx.model, fx.data(), cfg);
  const auto b = run_schedule(fx.model, fx.data(), cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(to_json(a.trace), to_json(b.trace));
}

TEST(Strategies, ConfigErrors) {
  const auto fx = toy();
  EXPECT_THROW(run_setup_a(fx.model, fx.data(), config(Strategy::OneShot, 30)), std::invalid_argument);
  EXPECT_THROW(run_oneshot(fx.model, fx.data(), config(Strategy::OneShot, 100)), std::invalid_argument);
  auto cfg = config(Strategy::IterativeMultiLayer, 30);
  cfg.max_iters = 0;
  EXPECT_THROW(run_setup_a(fx.model, fx.data(), cfg), std::invalid_argument);
  EXPECT_THROW(run_setup_a(fx.model, ScheduleData{fx.train, fx.val, {}}, config(Strategy::IterativeMultiLayer, 30)),
               std::invalid_argument);
  EXPECT_EQ(parse_strategy("setup-b-seq"), Strategy::LayerSequential);
  EXPECT_THROW(parse_strategy("setup-c"), std::invalid_argument);
}

TEST(TraceJson, CarriesProvenance) {
  const auto fx = toy();
  const auto r = run_setup_a(fx.model, fx.data(), config(Strategy::IterativeMultiLayer, 30));
  const auto j = to_json(r.trace);
  EXPECT_EQ(j["strategy"], "setup-a");
  EXPECT_EQ(j["steps"].size(), 2u);
  EXPECT_EQ(j["steps"][1]["saliency_source"], j["steps"][0]["retrained"]);
  EXPECT_EQ(j["targets"]["3"], 5);
}

TEST(Evaluate, ConstantPredictorOnBalancedSplit) {
  auto net = build_network({1, 4, 4}, {LayerSpec::flatten(), LayerSpec::dense(6), LayerSpec::softmax()}, 0, false);
  std::get<Dense>(net.layers[1]).bias[0] = 1.0f;
  std::vector<TFExample> split;
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < 60; ++i) split.push_back({oracle::random_map(1, 4, 4, rng), i % 6});
  EXPECT_NEAR(evaluate(net, split), 1.0 / 6.0, 1e-12);
  EXPECT_EQ(evaluate(net, split), evaluate(net, split));
  EXPECT_THROW(evaluate(net, std::span<const TFExample>{}), std::invalid_argument);
}

TEST(Evaluate, MemorizesTenExamples) {
  std::mt19937_64 rng(3);
  std::vector<TFExample> data;
  for (std::size_t i = 0; i < 10; ++i) data.push_back({oracle::random_map(1, 6, 6, rng), i % 5});
  auto net = build_network({1, 6, 6}, {LayerSpec::conv(8, 3), LayerSpec::relu(), LayerSpec::flatten(),
                                       LayerSpec::dense(5), LayerSpec::softmax()},
                           2);
  train(net, data, TrainConfig{200, 2, 0.05, 1});
  EXPECT_EQ(evaluate(net, data), 1.0);
}
