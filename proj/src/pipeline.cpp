#include "drumloop/pipeline.hpp"

#include "drumloop/errors.hpp"

namespace drumloop {

Extraction extract_pattern(const audio::AudioClip& song, const ExtractOptions& options) {
  const audio::AudioClip window = audio::sample_window(song, options.window_start, options.window_length);

  const spectral::Spectrogram spec = spectral::stft(window, options.n_fft, options.hop);
  const spectral::HpssResult separated = spectral::hpss(spec, options.kernel_time, options.kernel_freq);
  const std::vector<double> envelope = rhythm::onset_envelope(separated.percussive);

  Extraction out;
  const rhythm::FrameClock clock{options.hop, window.sample_rate};
  out.onsets = rhythm::detect_onsets(envelope, separated.percussive, clock);
  if (out.onsets.empty()) throw NoOnsets("no percussive onsets detected in the analysis window");
  out.strong_threshold = rhythm::mark_strong(out.onsets);

  out.clicks = rhythm::synthesize_clicks(rhythm::strong_onset_times(out.onsets), window.duration(),
                                         window.sample_rate);
  out.raw_tempo = rhythm::estimate_tempo(out.clicks);
  out.tempo = rhythm::fold_tempo(out.raw_tempo);

  out.grid = rhythm::fit_grid(out.onsets, out.tempo, options.window_start, window.duration());
  const std::vector<rhythm::QuantizedOnset> quantized = rhythm::quantize(out.onsets, out.grid);

  out.clusters = clustering::cluster_onsets(quantized, options.clustering);
  out.tracks = clustering::assign_roles(out.clusters.tracks, options.role_order);

  out.pattern = consensus::find_consensus(consensus::steps_by_role(out.tracks), out.grid.n_steps,
                                          out.tempo.rounded_bpm);
  return out;
}

}  // namespace drumloop
