#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfprune/activations.hpp"
#include "rfprune/plan.hpp"
#include "rfprune/rng.hpp"
#include "rfprune/train.hpp"

namespace rfprune {

enum class Metric { L1Norm, APoZ, KMeansDist };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::L1Norm: return "l1";
    case Metric::APoZ: return "apoz";
    case Metric::KMeansDist: return "kmeans";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "l1" || s == "l1norm" || s == "L1Norm") return Metric::L1Norm;
  if (s == "apoz" || s == "APoZ") return Metric::APoZ;
  if (s == "kmeans" || s == "kmeans-dist" || s == "KMeansDist") return Metric::KMeansDist;
  throw std::invalid_argument("unknown metric '" + s + "'");
}

/// L1 keeps large filters; APoZ and k-means distance prune high scores.
inline bool prune_highest_first(Metric m) { return m != Metric::L1Norm; }

struct FilterScore {
  std::size_t filter = 0;
  double score = 0.0;
};

struct SaliencyTable {
  Metric metric = Metric::L1Norm;
  std::map<std::size_t, std::vector<FilterScore>> per_layer;  // sorted by filter index

  /// Filter indices of `layer`, most prunable first; ties go to the lower index.
  std::vector<std::size_t> prune_order(std::size_t layer) const {
    const auto& scores = per_layer.at(layer);
    std::vector<FilterScore> sorted = scores;
    const bool high = prune_highest_first(metric);
    std::stable_sort(sorted.begin(), sorted.end(), [&](const FilterScore& a, const FilterScore& b) {
      if (a.score != b.score) return high ? a.score > b.score : a.score < b.score;
      return a.filter < b.filter;
    });
    std::vector<std::size_t> out;
    out.reserve(sorted.size());
    for (const auto& s : sorted) out.push_back(s.filter);
    return out;
  }
};

template <typename T>
double l1_score(const BasicFilter<T>& filter) {
  double s = 0.0;
  for (T w : filter.weights) s += std::abs(double(w));
  return s;
}

// ---------------------------------------------------------------------------
// APoZ

struct ActivationStats {
  std::size_t layer = 0;
  std::size_t filter = 0;
  std::size_t batch_size = 0;  // examples seen
  std::size_t map_size = 0;    // activation entries per filter per example
  std::size_t zero_count = 0;
};

inline constexpr double kZeroActivation = 1e-12;

/// Layer whose output holds conv layer `id`'s activations: the ReLU right
/// after it if there is one, otherwise the conv itself.
inline std::size_t activation_layer_of(const NetworkGraph& model, std::size_t id) {
  if (id + 1 < model.layers.size() && std::holds_alternative<ReLU>(model.layers[id + 1])) return id + 1;
  return id;
}

/// Streams `batch` through the model counting zero activations per filter of
/// each layer in `layers` (all conv layers when empty).
inline std::vector<ActivationStats> collect_activation_stats(const NetworkGraph& model,
                                                             std::span<const TFExample> batch,
                                                             std::vector<std::size_t> layers = {}) {
  if (batch.empty()) throw std::invalid_argument("activation statistics need a non-empty batch");
  if (layers.empty()) layers = model.conv_layer_ids();
  const auto shapes = model.shapes();
  std::map<std::size_t, std::size_t> watch;  // activation layer -> offset into stats
  std::vector<ActivationStats> stats;
  for (std::size_t id : layers) {
    const std::size_t filters = model.conv(id).filters.size();
    const Shape out = shapes[id + 1];
    watch[activation_layer_of(model, id)] = stats.size();
    for (std::size_t f = 0; f < filters; ++f) stats.push_back({id, f, 0, out.spatial(), 0});
  }
  for (const auto& ex : batch) {
    forward_visit(model, ex.tensor, [&](std::size_t layer, const FeatureMap& y) {
      auto it = watch.find(layer);
      if (it == watch.end()) return;
      for (std::size_t c = 0; c < y.channels; ++c) {
        auto& st = stats[it->second + c];
        std::size_t zeros = 0;
        for (float v : y.channel(c)) zeros += std::abs(double(v)) <= kZeroActivation ? 1 : 0;
        st.zero_count += zeros;
        st.batch_size += 1;
      }
    });
  }
  return stats;
}

/// APoZ per filter: zero_count / (batch_size * map_size), grouped by layer.
inline std::map<std::size_t, std::vector<FilterScore>> apoz_scores(std::span<const ActivationStats> stats) {
  std::map<std::size_t, std::vector<FilterScore>> out;
  for (const auto& s : stats) {
    if (s.batch_size < 1) throw std::invalid_argument("APoZ needs batch_size >= 1");
    if (s.map_size < 1) throw std::invalid_argument("APoZ needs a non-empty activation map");
    if (s.zero_count > s.batch_size * s.map_size) throw std::invalid_argument("zero_count exceeds M*N");
    out[s.layer].push_back({s.filter, double(s.zero_count) / (double(s.batch_size) * double(s.map_size))});
  }
  for (auto& [_, v] : out)
    std::sort(v.begin(), v.end(), [](const FilterScore& a, const FilterScore& b) { return a.filter < b.filter; });
  return out;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;  // per input point
  std::size_t iterations = 0;
};

inline std::size_t default_kmeans_k(std::size_t n) {
  if (n == 0) return 0;
  return std::min(n, std::max<std::size_t>(2, std::size_t(std::llround(std::sqrt(double(n))))));
}

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline std::size_t nearest(const std::vector<std::vector<double>>& centroids, const std::vector<double>& p) {
  std::size_t best = 0;
  double best_d = sq_dist(centroids[0], p);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = sq_dist(centroids[c], p);
    if (d < best_d) best_d = d, best = c;
  }
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with farthest-point initialization. Points are processed
/// in lexicographic order, so the result does not depend on input order; the
/// seed picks the first center. Stops when no centroid moves more than `tol`
/// or after `max_iters` updates. An emptied cluster keeps its centroid.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iters = 300, double tol = 1e-8) {
  const std::size_t n = points.size();
  if (k < 1) throw std::invalid_argument("k-means needs k >= 1");
  if (k > n) throw std::invalid_argument("k = " + std::to_string(k) + " exceeds point count " + std::to_string(n));
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("k-means points differ in dimension");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });

  KMeansResult r;
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t pick = order[mix_seed(seed, n) % n];
  for (std::size_t c = 0; c < k; ++c) {
    r.centroids.push_back(points[pick]);
    double far = -1.0;
    for (std::size_t idx : order) {
      min_d[idx] = std::min(min_d[idx], detail::sq_dist(points[idx], r.centroids.back()));
      if (min_d[idx] > far) far = min_d[idx], pick = idx;
    }
  }

  r.assignment.assign(n, 0);
  for (r.iterations = 0; r.iterations < max_iters;) {
    for (std::size_t idx : order) r.assignment[idx] = detail::nearest(r.centroids, points[idx]);
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t idx : order) {
      auto& s = sums[r.assignment[idx]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[idx][d];
      counts[r.assignment[idx]] += 1;
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (auto& v : sums[c]) v /= double(counts[c]);
      shift = std::max(shift, std::sqrt(detail::sq_dist(sums[c], r.centroids[c])));
      r.centroids[c] = std::move(sums[c]);
    }
    ++r.iterations;
    if (shift < tol) break;
  }
  for (std::size_t idx : order) r.assignment[idx] = detail::nearest(r.centroids, points[idx]);
  return r;
}

/// Distance of each filter (flattened weights) to its cluster centroid. A
/// filter alone in its cluster sits on its centroid, so it is scored by the
/// distance to the nearest other centroid instead: isolated outliers rank as
/// the most prunable rather than the least.
template <typename T>
std::vector<FilterScore> kmeans_scores(const std::vector<BasicFilter<T>>& filters, std::size_t k,
                                       std::uint64_t seed) {
  std::vector<std::vector<double>> pts;
  pts.reserve(filters.size());
  for (const auto& f : filters) pts.emplace_back(f.weights.begin(), f.weights.end());
  const auto km = kmeans(pts, k, seed);
  std::vector<std::size_t> members(k, 0);
  for (auto a : km.assignment) members[a] += 1;
  std::vector<FilterScore> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::size_t a = km.assignment[i];
    double d = std::sqrt(detail::sq_dist(pts[i], km.centroids[a]));
    if (members[a] == 1 && k > 1) {
      d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c)
        if (c != a) d = std::min(d, std::sqrt(detail::sq_dist(pts[i], km.centroids[c])));
    }
    out.push_back({i, d});
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SaliencyOptions {
  std::size_t kmeans_k = 0;       // 0: default_kmeans_k(filter count)
  std::uint64_t seed = 0;
  std::size_t apoz_samples = 0;   // 0: the whole sample split
  std::vector<std::size_t> layers;  // empty: every conv layer
};

/// Scores every filter of the target layers. `sample` is only read for APoZ.
inline SaliencyTable compute_saliency(const NetworkGraph& model, Metric metric, std::span<const TFExample> sample,
                                      const SaliencyOptions& opts = {}) {
  SaliencyTable t;
  t.metric = metric;
  const auto layers = opts.layers.empty() ? model.conv_layer_ids() : opts.layers;
  switch (metric) {
    case Metric::L1Norm:
      for (std::size_t id : layers) {
        auto& v = t.per_layer[id];
        const auto& conv = model.conv(id);
        for (std::size_t f = 0; f < conv.filters.size(); ++f) v.push_back({f, l1_score(conv.filters[f])});
      }
      break;
    case Metric::APoZ: {
      auto batch = sample;
      if (opts.apoz_samples > 0 && opts.apoz_samples < batch.size()) batch = batch.first(opts.apoz_samples);
      const auto stats = collect_activation_stats(model, batch, layers);
      t.per_layer = apoz_scores(stats);
      break;
    }
    case Metric::KMeansDist:
      for (std::size_t id : layers) {
        const auto& conv = model.conv(id);
        const std::size_t k = opts.kmeans_k ? std::min(opts.kmeans_k, conv.filters.size())
                                            : default_kmeans_k(conv.filters.size());
        t.per_layer[id] = kmeans_scores(conv.filters, k, mix_seed(opts.seed, id));
      }
      break;
  }
  for (const auto& [id, v] : t.per_layer)
    for (const auto& s : v)
      if (!std::isfinite(s.score)) throw std::runtime_error("non-finite saliency in layer " + std::to_string(id));
  return t;
}

/// Marks the `count` most prunable filters of `layer`.
inline std::set<std::size_t> most_prunable(const SaliencyTable& table, std::size_t layer, std::size_t count) {
  const auto order = table.prune_order(layer);
  if (count >= order.size())
    throw PlanError("removing " + std::to_string(count) + " of " + std::to_string(order.size()) +
                    " filters would empty layer " + std::to_string(layer));
  return {order.begin(), order.begin() + std::ptrdiff_t(count)};
}

/// Per layer, floor(p n / 100) filters in the metric's prune order.
inline PrunePlan select_prunable(const SaliencyTable& table, double p) {
  PrunePlan plan;
  plan.pruning_percentage = p;
  for (const auto& [id, scores] : table.per_layer) {
    const std::size_t count = prune_count(scores.size(), p);
    if (count == 0) continue;
    plan.per_layer[id] = most_prunable(table, id, count);
  }
  return plan;
}

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max] of each layer's scores; the top edge is
/// closed. A layer whose scores are all equal lands entirely in bin 0.
inline std::map<std::size_t, Histogram> saliency_histogram(const SaliencyTable& table, std::size_t bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  std::map<std::size_t, Histogram> out;
  for (const auto& [id, scores] : table.per_layer) {
    Histogram h;
    h.counts.assign(bins, 0);
    if (scores.empty()) {
      out[id] = h;
      continue;
    }
    const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end(),
                                              [](const auto& a, const auto& b) { return a.score < b.score; });
    h.lo = mn->score;
    h.hi = mx->score;
    const double width = h.hi - h.lo;
    for (const auto& s : scores) {
      std::size_t b = 0;
      if (width > 0.0) b = std::min(bins - 1, std::size_t((s.score - h.lo) / width * double(bins)));
      h.counts[b] += 1;
    }
    out[id] = std::move(h);
  }
  return out;
}

inline void write_saliency_csv(const SaliencyTable& table, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "layer,filter,metric,score,rank\n";
  char buf[64];
  for (const auto& [id, scores] : table.per_layer) {
    const auto order = table.prune_order(id);
    std::vector<std::size_t> rank(scores.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    for (const auto& s : scores) {
      std::snprintf(buf, sizeof buf, "%.17g", s.score);
      os << id << ',' << s.filter << ',' << metric_name(table.metric) << ',' << buf << ',' << rank[s.filter] << '\n';
    }
  }
}

inline nlohmann::json histogram_json(const SaliencyTable& table, std::size_t bins) {
  nlohmann::json j;
  j["metric"] = metric_name(table.metric);
  j["bins"] = bins;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& [id, h] : saliency_histogram(table, bins))
    layers.push_back({{"layer", id}, {"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}});
  return j;
}

}  // namespace rfprune
