#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "rfprune/engine.hpp"

namespace rfprune {

struct GradCheckOptions {
  std::size_t samples_per_tensor = 16;  // weights sampled per conv/dense weight tensor (biases too)
  bool include_input = false;           // also probe dLoss/dInput entries
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
};

namespace detail {

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

inline double loss_of(const BasicNetwork<double>& model, const BasicFeatureMap<double>& input,
                      std::size_t label) {
  return cross_entropy(forward_cached(model, input).logits, label);
}

}  // namespace detail

/// Compares backprop gradients with central differences on a sampled subset of
/// parameters. Runs on a double-precision copy of the model so the finite
/// difference is not swamped by float rounding.
template <typename T>
GradCheckResult gradient_check(const BasicNetwork<T>& model, const BasicFeatureMap<T>& input,
                               std::size_t label, double epsilon, const GradCheckOptions& opts = {}) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw std::invalid_argument("epsilon must be in (0, 1e-2]");
  BasicNetwork<double> net = model.template cast<double>();
  const BasicFeatureMap<double> x = input.template cast<double>();

  Gradients grads = Gradients::zeros_like(net);
  std::vector<double> dinput;
  {
    const auto cache = forward_cached(net, x);
    backward(net, cache, label, grads, opts.include_input ? &dinput : nullptr);
  }

  GradCheckResult result;
  std::mt19937_64 rng(opts.seed);
  auto pick = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > opts.samples_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.samples_per_tensor);
    }
    return idx;
  };
  auto probe = [&](double& param, double analytic, const BasicFeatureMap<double>& in) {
    const double saved = param;
    param = saved + epsilon;
    const double up = detail::loss_of(net, in, label);
    param = saved - epsilon;
    const double down = detail::loss_of(net, in, label);
    param = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    result.max_relative_error = std::max(result.max_relative_error, detail::relative_error(analytic, numeric));
    ++result.probes;
  };

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (auto* c = std::get_if<BasicConv<double>>(&net.layers[li])) {
      const std::size_t K = c->depth() * c->kernel_h() * c->kernel_w();
      for (std::size_t flat : pick(c->filters.size() * K))
        probe(c->filters[flat / K].weights[flat % K], grads.weights[li][flat], x);
      for (std::size_t f : pick(c->filters.size())) probe(c->filters[f].bias, grads.biases[li][f], x);
    } else if (auto* d = std::get_if<BasicDense<double>>(&net.layers[li])) {
      for (std::size_t i : pick(d->weights.size())) probe(d->weights[i], grads.weights[li][i], x);
      for (std::size_t o : pick(d->bias.size())) probe(d->bias[o], grads.biases[li][o], x);
    }
  }
  if (opts.include_input) {
    BasicFeatureMap<double> xin = x;
    for (std::size_t i : pick(xin.size())) probe(xin.data[i], dinput[i], xin);
  }
  return result;
}

}  // namespace rfprune
