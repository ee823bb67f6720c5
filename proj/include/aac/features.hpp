#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "aac/numerics.hpp"

namespace aac {

inline constexpr double kTargetSampleRate = 16000.0;

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  double sample_rate = kTargetSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Magnitude-squared STFT, frames x (window_size / 2 + 1).
struct PowerSpectrum {
  Matrix power;
  double sample_rate = kTargetSampleRate;
  std::size_t window_size = 0;
  std::size_t hop = 0;
};

/// Log-mel energies, frames x mel_bins.
struct Spectrogram {
  Matrix values;
  double frame_hop = 0.0;  // seconds

  std::size_t frames() const { return values.rows(); }
  std::size_t mel_bins() const { return values.cols(); }
};

struct AugmentConfig {
  std::size_t max_time_mask = 192;  // frames
  std::size_t max_freq_mask = 48;   // bins
  double apply_probability = 0.4;
  std::uint64_t rng_seed = 0;
};

/// Front-end defaults: 16 kHz, 512-sample window, 10 ms hop, 64 bands in
/// [125, 7500] Hz.
struct FrontEndConfig {
  std::size_t window_size = 512;
  std::size_t hop = 160;
  std::size_t mel_bins = 64;
  double f_min = 125.0;
  double f_max = 7500.0;
};

/// Reads a mono 16-bit PCM WAV file. Throws FormatError on anything else.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Linear-interpolation resampling.
Waveform resample(const Waveform& w, double target_rate);

PowerSpectrum stft_power(const Waveform& w, std::size_t window_size, std::size_t hop);

/// Triangular HTK-mel filterbank, mel_bins x (window_size / 2 + 1).
Matrix mel_filterbank(std::size_t mel_bins, std::size_t window_size, double sample_rate,
                      double f_min, double f_max);

Spectrogram log_mel(const PowerSpectrum& power, std::size_t mel_bins, double f_min,
                    double f_max);

/// Resample to 16 kHz (if needed), STFT, log-mel.
Spectrogram compute_log_mel(const Waveform& w, const FrontEndConfig& cfg = {});

/// Half-open [begin, begin + length) span chosen by spec_augment.
struct MaskSpan {
  bool applied = false;
  std::size_t begin = 0;
  std::size_t length = 0;
};

struct AugmentResult {
  Spectrogram spectrogram;
  MaskSpan time_mask;
  MaskSpan freq_mask;
};

/// One time mask and one frequency mask, each drawn with probability
/// cfg.apply_probability; masked cells take the input mean.
AugmentResult spec_augment_traced(const Spectrogram& s, const AugmentConfig& cfg);
Spectrogram spec_augment(const Spectrogram& s, const AugmentConfig& cfg);

struct PaddedBatch {
  std::vector<Matrix> items;          // all items share rows() == max length
  std::vector<std::size_t> lengths;   // valid rows per item
};

/// Zero-pads every item along the time (row) axis to the longest in the batch.
PaddedBatch bucket_pad(const std::vector<Matrix>& batch);

} // namespace aac
