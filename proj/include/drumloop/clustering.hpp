#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "drumloop/rhythm.hpp"

namespace drumloop {

// Instrument roles, in the order they are handed out by increasing median
// onset strength.
enum class Role { Snare = 0, Kick = 1, OtherPercussion = 2, Hihat = 3 };

inline constexpr std::array<Role, 4> kRoleOrder = {Role::Snare, Role::Kick, Role::OtherPercussion, Role::Hihat};

std::string_view role_name(Role role);  // "snare", "kick", "other", "hihat"
std::optional<Role> parse_role(std::string_view name);

}  // namespace drumloop

namespace drumloop::clustering {

inline constexpr std::uint64_t kDefaultSeed = 7067265;

struct KMeansOptions {
  std::uint64_t seed = kDefaultSeed;
  int max_iterations = 100;
  int restarts = 10;
};

struct KMeansResult {
  std::vector<int> labels;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
  // Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_history;
};

// Lloyd's algorithm with k-means++ seeding, keeping the restart with the
// lowest inertia (earliest restart on ties). Throws std::logic_error if
// inertia ever increases between iterations.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, const KMeansOptions& options = {});

double squared_distance(std::span<const double> a, std::span<const double> b);

struct InstrumentTrack {
  int cluster_id = 0;
  std::optional<Role> role;
  std::set<int> steps;
  double median_strength = 0.0;
  std::vector<double> centroid;
  std::size_t onset_count = 0;
};

struct ClusterOptions {
  int k = 4;
  int min_population = 4;
  KMeansOptions kmeans;
};

struct ClusteringResult {
  std::vector<InstrumentTrack> tracks;  // surviving clusters, by cluster_id
  double inertia = 0.0;                 // of the k-means fit, before discarding
  int k_used = 0;
  bool degenerate = false;  // all feature vectors identical
  std::vector<int> discarded_clusters;
};

// Clusters the L2-normalised onset spectra. k shrinks to the onset count when
// there are fewer onsets; clusters below min_population are discarded.
ClusteringResult cluster_onsets(std::span<const rhythm::QuantizedOnset> onsets, const ClusterOptions& options = {});

// Roles in kRoleOrder by increasing median strength; equal medians go to the
// lower cluster_id first. `order` overrides the role sequence.
std::vector<InstrumentTrack> assign_roles(std::vector<InstrumentTrack> tracks,
                                          std::span<const Role> order = kRoleOrder);

}  // namespace drumloop::clustering
