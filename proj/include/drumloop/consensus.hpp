#pragma once

#include <array>
#include <bitset>
#include <set>
#include <span>
#include <string>

#include "json.hpp"

#include "drumloop/clustering.hpp"

namespace drumloop {

inline constexpr int kPatternSteps = 32;  // 2 bars of 16th notes
inline constexpr int kStepsPerBar = 16;
inline constexpr int kTracks = 4;
inline constexpr std::size_t kRhythmDim = 1 + kTracks * kPatternSteps;  // 129

using TrackBits = std::bitset<kPatternSteps>;

// Tempo plus four 32-step tracks indexed by Role (snare, kick, other, hihat).
struct ConsensusPattern {
  int tempo_bpm = 120;
  std::array<TrackBits, kTracks> tracks{};
  int source_window = 0;  // first step of the winning window

  TrackBits& track(Role role) { return tracks[static_cast<std::size_t>(role)]; }
  const TrackBits& track(Role role) const { return tracks[static_cast<std::size_t>(role)]; }
  int beat_count() const;
  int instruments_with_beats() const;

  bool operator==(const ConsensusPattern&) const = default;
};

// [tempo, snare[0..31], kick[0..31], other[0..31], hihat[0..31]]
struct RhythmVector {
  std::array<double, kRhythmDim> values{};

  double tempo() const { return values[0]; }
  double& at(Role role, int step) { return values[1 + static_cast<std::size_t>(role) * kPatternSteps + static_cast<std::size_t>(step)]; }
  double at(Role role, int step) const { return values[1 + static_cast<std::size_t>(role) * kPatternSteps + static_cast<std::size_t>(step)]; }

  bool operator==(const RhythmVector&) const = default;
};

}  // namespace drumloop

namespace drumloop::consensus {

using StepSets = std::array<std::set<int>, kTracks>;  // indexed by Role

// Step sets of role-assigned tracks; roles with no track stay empty.
StepSets steps_by_role(std::span<const clustering::InstrumentTrack> tracks);

// Most common 32-step window over all four tracks, windows starting on
// every bar (stride 16). Ties: more instruments with beats, then earlier.
// Throws WindowTooShort when n_steps < 32.
ConsensusPattern find_consensus(const StepSets& tracks, int n_steps, int tempo_bpm = 120);

RhythmVector to_vector(const ConsensusPattern& pattern);

// Inverse of to_vector on binary vectors: tempo rounded, nonzero -> beat.
ConsensusPattern from_vector(const RhythmVector& vector);

inline constexpr int kPatternSchemaVersion = 1;

nlohmann::json to_json(const ConsensusPattern& pattern);
ConsensusPattern pattern_from_json(const nlohmann::json& j);

}  // namespace drumloop::consensus
