#include "drumloop/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "drumloop/random.hpp"
#include "drumloop/stats.hpp"

namespace drumloop {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::Snare: return "snare";
    case Role::Kick: return "kick";
    case Role::OtherPercussion: return "other";
    case Role::Hihat: return "hihat";
  }
  return "unknown";
}

std::optional<Role> parse_role(std::string_view name) {
  if (name == "snare") return Role::Snare;
  if (name == "kick") return Role::Kick;
  if (name == "other" || name == "other_percussion") return Role::OtherPercussion;
  if (name == "hihat") return Role::Hihat;
  return std::nullopt;
}

}  // namespace drumloop

namespace drumloop::clustering {
namespace {

using Points = std::vector<std::vector<double>>;

struct Fit {
  std::vector<int> labels;
  Points centroids;
  double inertia = std::numeric_limits<double>::infinity();
  std::vector<double> history;
};

Points seed_plus_plus(const Points& points, int k, Rng& rng) {
  Points centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(points.size());
    } else {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < points.size(); ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

// Assigns each point to its nearest centroid (lowest index on ties) and
// returns the inertia.
double assign(const Points& points, const Points& centroids, std::vector<int>& labels) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = squared_distance(points[i], centroids[c]);
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    labels[i] = best_c;
    inertia += best;
  }
  return inertia;
}

Fit lloyd(const Points& points, Points centroids, int max_iterations) {
  const std::size_t dim = points.front().size();
  const std::size_t k = centroids.size();
  Fit fit;
  fit.labels.assign(points.size(), 0);

  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iterations; ++iter) {
    const double inertia = assign(points, centroids, fit.labels);
    fit.history.push_back(inertia);
    if (inertia > previous * (1.0 + 1e-12) + 1e-15) {
      throw std::logic_error("k-means inertia increased between iterations");
    }
    if (inertia >= previous) break;
    previous = inertia;

    Points sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(fit.labels[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // an empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
  }
  fit.inertia = assign(points, centroids, fit.labels);
  fit.centroids = std::move(centroids);
  return fit;
}

}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

KMeansResult kmeans(const Points& points, int k, const KMeansOptions& options) {
  if (points.empty()) throw std::invalid_argument("k-means needs at least one point");
  if (k < 1) throw std::invalid_argument("k-means needs k >= 1");
  k = std::min<int>(k, static_cast<int>(points.size()));

  Fit best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(r)));
    Fit fit = lloyd(points, seed_plus_plus(points, k, rng), options.max_iterations);
    if (fit.inertia < best.inertia) best = std::move(fit);
  }

  KMeansResult result;
  result.labels = std::move(best.labels);
  result.centroids = std::move(best.centroids);
  result.inertia = best.inertia;
  result.inertia_history = std::move(best.history);
  return result;
}

ClusteringResult cluster_onsets(std::span<const rhythm::QuantizedOnset> onsets, const ClusterOptions& options) {
  ClusteringResult result;
  if (onsets.empty()) return result;

  // Sorting by time first makes the result independent of input order.
  std::vector<std::size_t> order(onsets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (onsets[a].event.time != onsets[b].event.time) return onsets[a].event.time < onsets[b].event.time;
    return onsets[a].step < onsets[b].step;
  });

  Points features;
  features.reserve(onsets.size());
  for (std::size_t idx : order) {
    std::vector<double> f = onsets[idx].event.spectrum;
    const double norm = std::sqrt(std::inner_product(f.begin(), f.end(), f.begin(), 0.0));
    if (norm > 0.0) {
      for (double& v : f) v /= norm;
    }
    features.push_back(std::move(f));
  }

  result.degenerate = std::all_of(features.begin(), features.end(),
                                  [&](const std::vector<double>& f) { return f == features.front(); });
  const int k = result.degenerate ? 1 : std::min<int>(options.k, static_cast<int>(features.size()));
  result.k_used = k;

  const KMeansResult fit = kmeans(features, k, options.kmeans);
  result.inertia = fit.inertia;

  for (int c = 0; c < k; ++c) {
    InstrumentTrack track;
    track.cluster_id = c;
    track.centroid = fit.centroids[static_cast<std::size_t>(c)];
    std::vector<double> strengths;
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (fit.labels[i] != c) continue;
      const auto& q = onsets[order[i]];
      track.steps.insert(q.step);
      strengths.push_back(q.event.strength);
    }
    track.onset_count = strengths.size();
    if (static_cast<int>(strengths.size()) < options.min_population) {
      result.discarded_clusters.push_back(c);
      continue;
    }
    track.median_strength = median(strengths);
    result.tracks.push_back(std::move(track));
  }
  return result;
}

std::vector<InstrumentTrack> assign_roles(std::vector<InstrumentTrack> tracks, std::span<const Role> order) {
  if (tracks.size() > order.size()) {
    throw std::invalid_argument("more tracks than available roles");
  }
  std::sort(tracks.begin(), tracks.end(), [](const InstrumentTrack& a, const InstrumentTrack& b) {
    if (a.median_strength != b.median_strength) return a.median_strength < b.median_strength;
    return a.cluster_id < b.cluster_id;
  });
  for (std::size_t i = 0; i < tracks.size(); ++i) tracks[i].role = order[i];
  return tracks;
}

}  // namespace drumloop::clustering
