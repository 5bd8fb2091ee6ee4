#pragma once

#include <vector>

#include "drumloop/audio_io.hpp"
#include "drumloop/clustering.hpp"
#include "drumloop/consensus.hpp"
#include "drumloop/rhythm.hpp"
#include "drumloop/spectral.hpp"

namespace drumloop {

struct ExtractOptions {
  int n_fft = spectral::kDefaultFftSize;
  int hop = spectral::kDefaultHop;
  int kernel_time = spectral::kDefaultKernel;
  int kernel_freq = spectral::kDefaultKernel;
  double window_start = audio::kWindowStartSeconds;
  double window_length = audio::kWindowSeconds;
  clustering::ClusterOptions clustering;
  std::array<Role, kTracks> role_order = kRoleOrder;
};

// Everything the extraction computed, for debugging dumps.
struct Extraction {
  ConsensusPattern pattern;
  rhythm::TempoEstimate raw_tempo;  // before octave folding
  rhythm::TempoEstimate tempo;
  rhythm::RhythmGrid grid;
  std::vector<rhythm::OnsetEvent> onsets;
  double strong_threshold = 0.0;
  audio::AudioClip clicks;
  clustering::ClusteringResult clusters;
  std::vector<clustering::InstrumentTrack> tracks;  // role-assigned
};

// Full consensus drum loop extraction from a decoded song.
// Throws ClipTooShort, NoOnsets or WindowTooShort.
Extraction extract_pattern(const audio::AudioClip& song, const ExtractOptions& options = {});

}  // namespace drumloop
