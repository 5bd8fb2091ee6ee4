#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "drumloop/audio_io.hpp"

namespace drumloop::rhythm {

inline constexpr double kStrongPercentile = 98.0;
inline constexpr double kMinBpm = 30.0;
inline constexpr double kMaxBpm = 300.0;
inline constexpr double kPriorCenterBpm = 120.0;
inline constexpr double kFoldLowBpm = 70.0;
inline constexpr double kFoldHighBpm = 180.0;

// Converts STFT frame indices to seconds.
struct FrameClock {
  int hop = 512;
  int sample_rate = audio::kPipelineRate;

  double seconds(std::size_t frame) const {
    return static_cast<double>(frame) * hop / sample_rate;
  }
};

struct OnsetEvent {
  std::size_t frame = 0;
  double time = 0.0;      // seconds from the start of the analysed clip
  double strength = 0.0;  // onset envelope value at `frame`
  std::vector<double> spectrum;  // mean percussive magnitude over frame-1..frame+1
  bool strong = false;
};

struct TempoEstimate {
  double bpm = kPriorCenterBpm;
  int rounded_bpm = static_cast<int>(kPriorCenterBpm);
  bool fallback = false;  // no periodicity found, prior centre returned
};

struct RhythmGrid {
  double origin = 0.0;  // seconds into the window of the first downbeat
  double step = 0.125;  // one 16th note
  int n_steps = 0;
};

struct QuantizedOnset {
  int step = 0;
  OnsetEvent event;
};

struct PeakPickParams {
  int max_radius = 3;           // frames either side for the local maximum
  int mean_radius = 3;          // frames either side for the local mean
  double delta_scale = 0.07;    // threshold = delta_scale * envelope p95
  double min_gap_seconds = 0.03;
};

// Spectral flux: sum over bins of max(0, |S|[f,t] - |S|[f,t-1]); frame 0 is 0.
std::vector<double> onset_envelope(const Eigen::MatrixXd& magnitude);

// Peak-picks the envelope and attaches a percussive spectrum to each onset.
// Every detected onset is returned; use mark_strong for the strong subset.
std::vector<OnsetEvent> detect_onsets(std::span<const double> envelope,
                                      const Eigen::MatrixXd& percussive,
                                      const FrameClock& clock = {},
                                      const PeakPickParams& params = {});

// Flags onsets with strength >= the given percentile of onset strengths and
// returns that threshold (0 for an empty list).
double mark_strong(std::vector<OnsetEvent>& onsets, double percentile = kStrongPercentile);

std::vector<double> strong_onset_times(std::span<const OnsetEvent> onsets);

// Exponentially decaying 1 kHz burst, 30 ms long.
std::vector<float> click_waveform(int sample_rate);

audio::AudioClip synthesize_clicks(std::span<const double> times, double duration_seconds,
                                   int sample_rate = audio::kPipelineRate);

// Autocorrelation tempo estimate of a click track, weighted by a log-normal
// prior (120 BPM centre, one octave deviation) over 30..300 BPM.
TempoEstimate estimate_tempo(const audio::AudioClip& clicks);

// Doubles or halves the tempo until it lies within [low, high].
TempoEstimate fold_tempo(TempoEstimate tempo, double low = kFoldLowBpm, double high = kFoldHighBpm);

// Places a 16th-note grid on the window. Onset times are window relative;
// window_start is the window's offset into the song. The 16th phase is the
// one collecting the most onset strength within a quarter step, refined to
// the earliest strong onset on that phase. Bars are counted from the song
// start, so `origin` is the first 2-bar phrase downbeat inside the window.
RhythmGrid fit_grid(std::span<const OnsetEvent> onsets, const TempoEstimate& tempo,
                    double window_start, double window_duration = audio::kWindowSeconds);

// Nearest step, ties toward the earlier step; onsets outside [0, n_steps)
// are dropped.
std::vector<QuantizedOnset> quantize(std::span<const OnsetEvent> onsets, const RhythmGrid& grid);

int nearest_step(double time, const RhythmGrid& grid);

}  // namespace drumloop::rhythm
