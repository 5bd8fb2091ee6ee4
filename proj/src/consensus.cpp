#include "drumloop/consensus.hpp"

#include <cmath>
#include <map>

#include "drumloop/errors.hpp"

namespace drumloop {

int ConsensusPattern::beat_count() const {
  int n = 0;
  for (const auto& t : tracks) n += static_cast<int>(t.count());
  return n;
}

int ConsensusPattern::instruments_with_beats() const {
  int n = 0;
  for (const auto& t : tracks) n += t.any() ? 1 : 0;
  return n;
}

}  // namespace drumloop

namespace drumloop::consensus {
namespace {

using WindowKey = std::array<unsigned long, kTracks>;

struct WindowStats {
  int count = 0;
  int first_start = 0;
  std::array<TrackBits, kTracks> tracks{};
};

}  // namespace

StepSets steps_by_role(std::span<const clustering::InstrumentTrack> tracks) {
  StepSets sets;
  for (const auto& t : tracks) {
    if (!t.role) continue;
    auto& dst = sets[static_cast<std::size_t>(*t.role)];
    dst.insert(t.steps.begin(), t.steps.end());
  }
  return sets;
}

ConsensusPattern find_consensus(const StepSets& tracks, int n_steps, int tempo_bpm) {
  if (n_steps < kPatternSteps) {
    throw WindowTooShort("need at least " + std::to_string(kPatternSteps) + " grid steps, got " +
                         std::to_string(n_steps));
  }

  std::map<WindowKey, WindowStats> windows;
  for (int start = 0; start + kPatternSteps <= n_steps; start += kStepsPerBar) {
    std::array<TrackBits, kTracks> content{};
    for (std::size_t r = 0; r < kTracks; ++r) {
      for (auto it = tracks[r].lower_bound(start); it != tracks[r].end() && *it < start + kPatternSteps; ++it) {
        content[r].set(static_cast<std::size_t>(*it - start));
      }
    }
    WindowKey key;
    for (std::size_t r = 0; r < kTracks; ++r) key[r] = content[r].to_ulong();
    auto [it, inserted] = windows.try_emplace(key);
    if (inserted) {
      it->second.first_start = start;
      it->second.tracks = content;
    }
    ++it->second.count;
  }

  const WindowStats* best = nullptr;
  int best_instruments = -1;
  for (const auto& [key, stats] : windows) {
    int instruments = 0;
    for (const auto& t : stats.tracks) instruments += t.any() ? 1 : 0;
    const bool better = best == nullptr || stats.count > best->count ||
                        (stats.count == best->count &&
                         (instruments > best_instruments ||
                          (instruments == best_instruments && stats.first_start < best->first_start)));
    if (better) {
      best = &stats;
      best_instruments = instruments;
    }
  }

  ConsensusPattern pattern;
  pattern.tempo_bpm = tempo_bpm;
  pattern.tracks = best->tracks;
  pattern.source_window = best->first_start;
  return pattern;
}

RhythmVector to_vector(const ConsensusPattern& pattern) {
  RhythmVector v;
  v.values[0] = pattern.tempo_bpm;
  for (Role role : kRoleOrder) {
    for (int s = 0; s < kPatternSteps; ++s) v.at(role, s) = pattern.track(role).test(static_cast<std::size_t>(s)) ? 1.0 : 0.0;
  }
  return v;
}

ConsensusPattern from_vector(const RhythmVector& vector) {
  ConsensusPattern pattern;
  pattern.tempo_bpm = static_cast<int>(std::lround(vector.tempo()));
  for (Role role : kRoleOrder) {
    for (int s = 0; s < kPatternSteps; ++s) {
      pattern.track(role).set(static_cast<std::size_t>(s), vector.at(role, s) != 0.0);
    }
  }
  return pattern;
}

nlohmann::json to_json(const ConsensusPattern& pattern) {
  nlohmann::json tracks = nlohmann::json::object();
  for (Role role : kRoleOrder) {
    std::vector<int> bits(kPatternSteps);
    for (int s = 0; s < kPatternSteps; ++s) bits[static_cast<std::size_t>(s)] = pattern.track(role).test(static_cast<std::size_t>(s));
    tracks[std::string(role_name(role))] = bits;
  }
  return {{"schema_version", kPatternSchemaVersion},
          {"tempo", pattern.tempo_bpm},
          {"tracks", tracks},
          {"source_window", pattern.source_window}};
}

ConsensusPattern pattern_from_json(const nlohmann::json& j) {
  try {
    ConsensusPattern pattern;
    pattern.tempo_bpm = j.at("tempo").get<int>();
    pattern.source_window = j.value("source_window", 0);
    const auto& tracks = j.at("tracks");
    for (Role role : kRoleOrder) {
      const auto bits = tracks.at(std::string(role_name(role))).get<std::vector<int>>();
      if (bits.size() != kPatternSteps) {
        throw ParseError("track '" + std::string(role_name(role)) + "' must have 32 entries");
      }
      for (int s = 0; s < kPatternSteps; ++s) {
        const int b = bits[static_cast<std::size_t>(s)];
        if (b != 0 && b != 1) throw ParseError("track entries must be 0 or 1");
        pattern.track(role).set(static_cast<std::size_t>(s), b == 1);
      }
    }
    return pattern;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed pattern JSON: ") + e.what());
  }
}

}  // namespace drumloop::consensus
