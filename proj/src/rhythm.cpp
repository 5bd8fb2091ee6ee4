#include "drumloop/rhythm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "drumloop/errors.hpp"
#include "drumloop/spectral.hpp"
#include "drumloop/stats.hpp"

namespace drumloop::rhythm {
namespace {

constexpr double kClickSeconds = 0.030;
constexpr double kClickFrequency = 1000.0;
constexpr double kClickDecaySeconds = 0.006;
constexpr double kTempoResolutionBpm = 0.01;
constexpr double kMaxLagSeconds = 30.0;
constexpr int kPhaseCandidates = 400;

double circular_distance(double x, double period) {
  return std::abs(x - period * std::round(x / period));
}

double prior_weight(double bpm) {
  const double octaves = std::log2(bpm / kPriorCenterBpm);
  return std::exp(-0.5 * octaves * octaves);
}

// Autocorrelation sampled at a fractional lag by linear interpolation.
double sample_lag(const std::vector<double>& acf, double lag) {
  const auto i = static_cast<std::size_t>(lag);
  if (i + 1 >= acf.size()) return 0.0;
  const double frac = lag - static_cast<double>(i);
  return acf[i] + frac * (acf[i + 1] - acf[i]);
}

}  // namespace

std::vector<double> onset_envelope(const Eigen::MatrixXd& magnitude) {
  std::vector<double> env(static_cast<std::size_t>(magnitude.cols()), 0.0);
  for (Eigen::Index t = 1; t < magnitude.cols(); ++t) {
    env[static_cast<std::size_t>(t)] = (magnitude.col(t) - magnitude.col(t - 1)).cwiseMax(0.0).sum();
  }
  return env;
}

std::vector<OnsetEvent> detect_onsets(std::span<const double> envelope, const Eigen::MatrixXd& percussive,
                                      const FrameClock& clock, const PeakPickParams& params) {
  std::vector<OnsetEvent> onsets;
  if (envelope.empty()) return onsets;

  const auto n = static_cast<std::ptrdiff_t>(envelope.size());
  const double delta = params.delta_scale * percentile(envelope, 95.0);
  double last_time = -1e300;

  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double v = envelope[static_cast<std::size_t>(i)];
    if (v <= 0.0) continue;

    bool is_max = true;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - params.max_radius);
         j <= std::min(n - 1, i + params.max_radius); ++j) {
      if (envelope[static_cast<std::size_t>(j)] > v) {
        is_max = false;
        break;
      }
    }
    if (!is_max) continue;

    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - params.mean_radius);
    const std::ptrdiff_t hi = std::min(n - 1, i + params.mean_radius);
    double mean = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) mean += envelope[static_cast<std::size_t>(j)];
    mean /= static_cast<double>(hi - lo + 1);
    if (v < mean + delta) continue;

    const double time = clock.seconds(static_cast<std::size_t>(i));
    if (time - last_time < params.min_gap_seconds) continue;
    last_time = time;

    OnsetEvent onset;
    onset.frame = static_cast<std::size_t>(i);
    onset.time = time;
    onset.strength = v;
    if (percussive.cols() > 0) {
      const Eigen::Index c0 = std::max<Eigen::Index>(0, i - 1);
      const Eigen::Index c1 = std::min<Eigen::Index>(percussive.cols() - 1, i + 1);
      const Eigen::VectorXd mean_col = percussive.middleCols(c0, c1 - c0 + 1).rowwise().mean();
      onset.spectrum.assign(mean_col.data(), mean_col.data() + mean_col.size());
    }
    onsets.push_back(std::move(onset));
  }
  return onsets;
}

double mark_strong(std::vector<OnsetEvent>& onsets, double p) {
  if (onsets.empty()) return 0.0;
  std::vector<double> strengths;
  strengths.reserve(onsets.size());
  for (const auto& o : onsets) strengths.push_back(o.strength);
  const double threshold = percentile(strengths, p);
  for (auto& o : onsets) o.strong = o.strength >= threshold;
  return threshold;
}

std::vector<double> strong_onset_times(std::span<const OnsetEvent> onsets) {
  std::vector<double> times;
  for (const auto& o : onsets) {
    if (o.strong) times.push_back(o.time);
  }
  return times;
}

std::vector<float> click_waveform(int sample_rate) {
  const auto length = static_cast<std::size_t>(std::lround(kClickSeconds * sample_rate));
  std::vector<float> click(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    click[i] = static_cast<float>(std::sin(2.0 * std::numbers::pi * kClickFrequency * t) *
                                  std::exp(-t / kClickDecaySeconds));
  }
  return click;
}

audio::AudioClip synthesize_clicks(std::span<const double> times, double duration_seconds, int sample_rate) {
  audio::AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(static_cast<std::size_t>(std::lround(duration_seconds * sample_rate)), 0.0F);
  const std::vector<float> click = click_waveform(sample_rate);
  for (double t : times) {
    if (t < 0.0 || t >= duration_seconds) continue;
    const auto start = static_cast<std::size_t>(std::lround(t * sample_rate));
    for (std::size_t i = 0; i < click.size() && start + i < clip.samples.size(); ++i) {
      clip.samples[start + i] += click[i];
    }
  }
  for (float& s : clip.samples) s = std::clamp(s, -1.0F, 1.0F);
  return clip;
}

TempoEstimate estimate_tempo(const audio::AudioClip& clicks) {
  if (clicks.samples.empty()) throw Error("tempo estimation of an empty clip");

  const spectral::Spectrogram spec = spectral::stft(clicks);
  const std::vector<double> env = onset_envelope(spec.magnitude());
  const double frame_rate = static_cast<double>(clicks.sample_rate) / spec.hop;

  const std::size_t max_lag = std::min<std::size_t>(
      env.size() > 1 ? env.size() - 1 : 0, static_cast<std::size_t>(std::ceil(kMaxLagSeconds * frame_rate)));
  std::vector<double> acf(max_lag + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    double sum = 0.0;
    for (std::size_t t = 0; t + lag < env.size(); ++t) sum += env[t] * env[t + lag];
    acf[lag] = sum;
  }

  TempoEstimate fallback;
  fallback.fallback = true;
  if (acf.empty() || acf[0] <= 0.0) return fallback;
  for (double& a : acf) a /= acf.front();

  // A candidate period is scored by how well its multiples line up with the
  // autocorrelation peaks: (sum of hits)^2 / (number of multiples). The square
  // rewards periods that explain every peak; the division penalises periods
  // that predict peaks which are not there, so neither the half nor the
  // double period of a click train ties with the true one.
  double best_score = 0.0;
  double best_bpm = 0.0;
  const auto candidates = static_cast<int>(std::round((kMaxBpm - kMinBpm) / kTempoResolutionBpm));
  for (int c = 0; c <= candidates; ++c) {
    const double bpm = kMinBpm + c * kTempoResolutionBpm;
    const double period = 60.0 * frame_rate / bpm;
    const auto multiples = static_cast<int>(std::floor(static_cast<double>(max_lag - 1) / period));
    if (multiples < 1) continue;
    double hits = 0.0;
    for (int m = 1; m <= multiples; ++m) hits += std::max(0.0, sample_lag(acf, m * period));
    const double score = hits * hits / multiples * prior_weight(bpm);
    if (score > best_score) {
      best_score = score;
      best_bpm = bpm;
    }
  }
  if (best_score <= 1e-12) return fallback;

  TempoEstimate tempo;
  tempo.bpm = best_bpm;
  tempo.rounded_bpm = static_cast<int>(std::clamp(std::lround(best_bpm), 30L, 300L));
  return tempo;
}

TempoEstimate fold_tempo(TempoEstimate tempo, double low, double high) {
  while (tempo.bpm < low && tempo.bpm * 2.0 <= kMaxBpm) tempo.bpm *= 2.0;
  while (tempo.bpm > high && tempo.bpm / 2.0 >= kMinBpm) tempo.bpm /= 2.0;
  tempo.rounded_bpm = static_cast<int>(std::lround(tempo.bpm));
  return tempo;
}

RhythmGrid fit_grid(std::span<const OnsetEvent> onsets, const TempoEstimate& tempo, double window_start,
                    double window_duration) {
  if (onsets.empty()) throw GridUndefined("no onsets to fit a rhythm grid to");
  if (tempo.rounded_bpm <= 0) throw GridUndefined("tempo must be positive");

  RhythmGrid grid;
  grid.step = 15.0 / tempo.rounded_bpm;
  const double step = grid.step;
  const double tolerance = step / 4.0;

  double best_score = -1.0;
  double best_phase = 0.0;
  for (int k = 0; k < kPhaseCandidates; ++k) {
    const double phase = step * k / kPhaseCandidates;
    double score = 0.0;
    for (const auto& o : onsets) {
      if (circular_distance(window_start + o.time - phase, step) <= tolerance) score += o.strength;
    }
    if (score > best_score) {
      best_score = score;
      best_phase = phase;
    }
  }

  std::vector<double> strengths;
  for (const auto& o : onsets) strengths.push_back(o.strength);
  const double strong = percentile(strengths, kStrongPercentile);

  const OnsetEvent* anchor = nullptr;
  const OnsetEvent* fallback_anchor = nullptr;
  for (const auto& o : onsets) {
    if (circular_distance(window_start + o.time - best_phase, step) > tolerance) continue;
    if (fallback_anchor == nullptr || o.time < fallback_anchor->time) fallback_anchor = &o;
    if (o.strength >= strong && (anchor == nullptr || o.time < anchor->time)) anchor = &o;
  }
  if (anchor == nullptr) anchor = fallback_anchor;
  if (anchor == nullptr) anchor = &onsets.front();

  // Phase of the 16th lattice in song time, in [-step/2, step/2): the song's
  // first downbeat is taken as the lattice point nearest t = 0.
  const double abs_anchor = window_start + anchor->time;
  const double phase = abs_anchor - step * std::round(abs_anchor / step);

  // Origin on a 2-bar phrase boundary so that consensus windows, which slide
  // a bar at a time, start with the phrase's first bar at least as often as
  // with its second.
  const double phrase = 32.0 * step;
  const double phrases = std::ceil((window_start - phase) / phrase - 1e-9);
  grid.origin = phase + phrases * phrase - window_start;
  grid.n_steps = std::max(0, static_cast<int>(std::ceil((window_duration - grid.origin) / step - 1e-9)));
  return grid;
}

int nearest_step(double time, const RhythmGrid& grid) {
  const double x = (time - grid.origin) / grid.step;
  return static_cast<int>(std::ceil(x - 0.5 - 1e-9));
}

std::vector<QuantizedOnset> quantize(std::span<const OnsetEvent> onsets, const RhythmGrid& grid) {
  std::vector<QuantizedOnset> out;
  for (const auto& o : onsets) {
    const int step = nearest_step(o.time, grid);
    if (step < 0 || step >= grid.n_steps) continue;
    out.push_back({step, o});
  }
  return out;
}

}  // namespace drumloop::rhythm
