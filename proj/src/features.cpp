#include "aac/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <numbers>
#include <random>
#include <string>

#include "aac/errors.hpp"

namespace aac {

namespace {

std::uint32_t read_u32(const std::vector<char>& b, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[off])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 3])) << 24;
}

std::uint16_t read_u16(const std::vector<char>& b, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[off]) |
                                    static_cast<unsigned char>(b[off + 1]) << 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8 & 0xff),
                                     static_cast<char>(v >> 16 & 0xff),
                                     static_cast<char>(v >> 24 & 0xff)};
  os.write(bytes.data(), bytes.size());
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const std::array<char, 2> bytes = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(bytes.data(), bytes.size());
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

} // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open WAV file " + path.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.data(), 4) != "RIFF" ||
      std::string(bytes.data() + 8, 4) != "WAVE") {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint16_t format = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const std::string id(bytes.data() + off, 4);
    const std::uint32_t size = read_u32(bytes, off + 4);
    const std::size_t body = off + 8;
    if (body + size > bytes.size()) {
      throw CorruptionError(path.string() + ": chunk '" + id + "' runs past end of file");
    }
    if (id == "fmt ") {
      if (size < 16) {
        throw FormatError(path.string() + ": short fmt chunk");
      }
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) {
        throw FormatError(path.string() + ": data chunk before fmt chunk");
      }
      if (format != 1 || bits != 16 || channels != 1) {
        throw FormatError(path.string() + ": only mono 16-bit PCM is supported");
      }
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
        w.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return w;
    }
    off = body + size + (size & 1);
  }
  throw FormatError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write WAV file " + path.string());
  }
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
}

Waveform resample(const Waveform& w, double target_rate) {
  if (target_rate <= 0.0 || w.sample_rate <= 0.0) {
    throw ConfigError("resample: sample rates must be positive");
  }
  if (w.sample_rate == target_rate || w.samples.empty()) {
    Waveform out = w;
    out.sample_rate = target_rate;
    return out;
  }
  const double ratio = w.sample_rate / target_rate;
  // Duration-preserving length; the tail interpolates against the last sample.
  const auto n_out = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(w.samples.size()) / ratio)));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos =
        std::min(static_cast<double>(i) * ratio, static_cast<double>(w.samples.size() - 1));
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, w.samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = (1.0 - frac) * w.samples[lo] + frac * w.samples[hi];
  }
  return out;
}

PowerSpectrum stft_power(const Waveform& w, std::size_t window_size, std::size_t hop) {
  if (window_size == 0 || !std::has_single_bit(window_size)) {
    throw ConfigError("stft_power: window size " + std::to_string(window_size) +
                      " is not a power of two");
  }
  if (hop == 0 || hop > window_size) {
    throw ConfigError("stft_power: hop must lie in [1, window_size]");
  }
  if (w.samples.size() < window_size) {
    throw DataError("stft_power: waveform of " + std::to_string(w.samples.size()) +
                    " samples is shorter than the " + std::to_string(window_size) +
                    "-sample window; empty grid");
  }

  const std::size_t frames = (w.samples.size() - window_size) / hop + 1;
  const std::size_t bins = window_size / 2 + 1;
  PowerSpectrum out;
  out.power = Matrix(frames, bins);
  out.sample_rate = w.sample_rate;
  out.window_size = window_size;
  out.hop = hop;

  // Periodic Hann window.
  std::vector<double> window(window_size);
  for (std::size_t n = 0; n < window_size; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                     static_cast<double>(window_size));
  }

  std::vector<double> frame(window_size);
  std::unique_ptr<fftw_complex[], decltype(&fftw_free)> spectrum(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)), &fftw_free);
  std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(fftw_plan_dft_r2c_1d(
      static_cast<int>(window_size), frame.data(), spectrum.get(), FFTW_ESTIMATE));

  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t n = 0; n < window_size; ++n) {
      frame[n] = w.samples[start + n] * window[n];
    }
    fftw_execute(plan.get());
    auto row = out.power.row(f);
    for (std::size_t k = 0; k < bins; ++k) {
      row[k] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    }
  }
  return out;
}

Matrix mel_filterbank(std::size_t mel_bins, std::size_t window_size, double sample_rate,
                      double f_min, double f_max) {
  if (mel_bins < 2) {
    throw ConfigError("log_mel: need at least 2 mel bins");
  }
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw ConfigError("log_mel: require 0 <= f_min < f_max <= sample_rate / 2");
  }
  const std::size_t bins = window_size / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(mel_bins + 1));
  }

  Matrix bank(mel_bins, bins);
  const double bin_hz = sample_rate / static_cast<double>(window_size);
  for (std::size_t m = 0; m < mel_bins; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double weight = 0.0;
      if (f > left && f <= center) {
        weight = (f - left) / (center - left);
      } else if (f > center && f < right) {
        weight = (right - f) / (right - center);
      }
      bank(m, k) = weight;
    }
  }
  return bank;
}

Spectrogram log_mel(const PowerSpectrum& power, std::size_t mel_bins, double f_min,
                    double f_max) {
  const Matrix bank =
      mel_filterbank(mel_bins, power.window_size, power.sample_rate, f_min, f_max);
  if (power.power.cols() != bank.cols()) {
    throw DimensionError("log_mel: power grid has " + std::to_string(power.power.cols()) +
                         " bins, filterbank expects " + std::to_string(bank.cols()));
  }
  Spectrogram s;
  s.frame_hop = static_cast<double>(power.hop) / power.sample_rate;
  s.values = Matrix(power.power.rows(), mel_bins);
  for (std::size_t f = 0; f < power.power.rows(); ++f) {
    auto out = s.values.row(f);
    add_mat_vec(bank, power.power.row(f), out);
    for (double& v : out) {
      v = std::log(v + 1e-6);
    }
  }
  return s;
}

Spectrogram compute_log_mel(const Waveform& w, const FrontEndConfig& cfg) {
  const Waveform at_rate =
      w.sample_rate == kTargetSampleRate ? w : resample(w, kTargetSampleRate);
  return log_mel(stft_power(at_rate, cfg.window_size, cfg.hop), cfg.mel_bins, cfg.f_min,
                 cfg.f_max);
}

AugmentResult spec_augment_traced(const Spectrogram& s, const AugmentConfig& cfg) {
  if (!(cfg.apply_probability >= 0.0 && cfg.apply_probability <= 1.0)) {
    throw ConfigError("spec_augment: probability must lie in [0, 1]");
  }
  if (cfg.max_freq_mask > s.mel_bins()) {
    throw ConfigError("spec_augment: max frequency mask " + std::to_string(cfg.max_freq_mask) +
                      " exceeds " + std::to_string(s.mel_bins()) + " mel bins");
  }

  AugmentResult result{s, {}, {}};
  if (s.values.empty()) {
    return result;
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  auto draw_span = [&](std::size_t max_len, std::size_t extent) {
    MaskSpan span;
    // Always consume the coin so the frequency draw does not depend on the
    // time draw's outcome.
    const double u = coin(rng);
    if (u >= cfg.apply_probability) {
      return span;
    }
    span.applied = true;
    const std::size_t cap = std::min(max_len, extent);
    span.length = std::uniform_int_distribution<std::size_t>(0, cap)(rng);
    span.begin = std::uniform_int_distribution<std::size_t>(0, extent - span.length)(rng);
    return span;
  };

  result.time_mask = draw_span(cfg.max_time_mask, s.frames());
  result.freq_mask = draw_span(cfg.max_freq_mask, s.mel_bins());
  if (!result.time_mask.applied && !result.freq_mask.applied) {
    return result;
  }

  double mean = 0.0;
  for (double v : s.values.values()) {
    mean += v;
  }
  mean /= static_cast<double>(s.values.size());

  Matrix& out = result.spectrogram.values;
  const MaskSpan& tm = result.time_mask;
  const MaskSpan& fm = result.freq_mask;
  for (std::size_t t = tm.begin; t < tm.begin + tm.length; ++t) {
    for (std::size_t b = 0; b < out.cols(); ++b) {
      out(t, b) = mean;
    }
  }
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t b = fm.begin; b < fm.begin + fm.length; ++b) {
      out(t, b) = mean;
    }
  }
  return result;
}

Spectrogram spec_augment(const Spectrogram& s, const AugmentConfig& cfg) {
  return spec_augment_traced(s, cfg).spectrogram;
}

PaddedBatch bucket_pad(const std::vector<Matrix>& batch) {
  if (batch.empty()) {
    throw ContractViolation("bucket_pad: empty batch");
  }
  const std::size_t dim = batch.front().cols();
  std::size_t longest = 0;
  for (const Matrix& m : batch) {
    if (m.cols() != dim) {
      throw DimensionError("bucket_pad: mixed feature dims " + std::to_string(dim) + " and " +
                           std::to_string(m.cols()));
    }
    longest = std::max(longest, m.rows());
  }
  PaddedBatch out;
  out.items.reserve(batch.size());
  for (const Matrix& m : batch) {
    Matrix padded(longest, dim);
    std::copy(m.values().begin(), m.values().end(), padded.values().begin());
    out.items.push_back(std::move(padded));
    out.lengths.push_back(m.rows());
  }
  return out;
}

} // namespace aac
