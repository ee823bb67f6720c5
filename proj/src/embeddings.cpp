#include "aac/embeddings.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "aac/errors.hpp"

namespace aac {

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'A', 'C', 'E'};
constexpr std::size_t kHeaderBytes = 16;
// Slack for start + window <= duration comparisons on decimal inputs.
constexpr double kTimeTolerance = 1e-9;

std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | static_cast<std::uint32_t>(b[off + 1]) << 8 |
         static_cast<std::uint32_t>(b[off + 2]) << 16 |
         static_cast<std::uint32_t>(b[off + 3]) << 24;
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    b.push_back(static_cast<unsigned char>(v >> shift & 0xff));
  }
}

} // namespace

SegmentPlan plan_segments(double duration, double window) {
  if (!(window > 0.0)) {
    throw ConfigError("plan_segments: window must be positive");
  }
  if (duration + kTimeTolerance < window) {
    throw DataError("plan_segments: audio of " + std::to_string(duration) +
                    " s is shorter than the " + std::to_string(window) +
                    " s segment window; pad the audio to at least one window");
  }
  SegmentPlan plan;
  plan.window = window;
  plan.hop = window / 2.0;
  for (std::size_t k = 0;; ++k) {
    const double start = static_cast<double>(k) * plan.hop;
    if (start + window > duration + kTimeTolerance) {
      break;
    }
    plan.starts.push_back(start);
  }
  return plan;
}

EmbeddingMatrix load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open embedding file " + path.string());
  }
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin(),
                  [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; })) {
    throw FormatError(path.string() + ": missing AACE header");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kEmbeddingFileVersion) {
    throw FormatError(path.string() + ": unsupported embedding file version " +
                      std::to_string(version));
  }
  const std::uint32_t t = get_u32(bytes, 8);
  const std::uint32_t f = get_u32(bytes, 12);
  const std::size_t expected = kHeaderBytes + std::size_t{t} * f * 4;
  if (bytes.size() != expected) {
    throw CorruptionError(path.string() + ": expected " + std::to_string(expected) +
                          " bytes for " + std::to_string(t) + "x" + std::to_string(f) +
                          " embeddings, found " + std::to_string(bytes.size()));
  }
  if (t == 0 || f == 0) {
    throw FormatError(path.string() + ": empty embedding matrix");
  }

  EmbeddingMatrix m(t, f);
  auto values = m.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t bits = get_u32(bytes, kHeaderBytes + 4 * i);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return m;
}

void save_embedding_file(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw ContractViolation("save_embedding_file: empty matrix");
  }
  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(kHeaderBytes + m.size() * 4);
  put_u32(bytes, kEmbeddingFileVersion);
  put_u32(bytes, static_cast<std::uint32_t>(m.rows()));
  put_u32(bytes, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) {
    put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write embedding file " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

EmbeddingMatrix mock_extract(const Spectrogram& s, const SegmentPlan& plan, std::size_t dim,
                             std::uint64_t seed) {
  if (dim == 0) {
    throw ConfigError("mock_extract: embedding dim must be positive");
  }
  if (s.frames() == 0 || s.frame_hop <= 0.0) {
    throw DataError("mock_extract: empty spectrogram");
  }
  const std::size_t bands = s.mel_bins();
  const std::size_t stats_dim = 2 * bands;

  Matrix projection(stats_dim, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(stats_dim)));
  for (double& v : projection.values()) {
    v = gauss(rng);
  }

  EmbeddingMatrix out(plan.count(), dim);
  Vector stats(stats_dim);
  for (std::size_t seg = 0; seg < plan.count(); ++seg) {
    auto first = static_cast<std::size_t>(std::lround(plan.starts[seg] / s.frame_hop));
    auto last = static_cast<std::size_t>(
        std::lround((plan.starts[seg] + plan.window) / s.frame_hop));
    first = std::min(first, s.frames() - 1);
    last = std::clamp(last, first + 1, s.frames());

    std::fill(stats.begin(), stats.end(), 0.0);
    const auto n = static_cast<double>(last - first);
    for (std::size_t t = first; t < last; ++t) {
      for (std::size_t b = 0; b < bands; ++b) {
        stats[b] += s.values(t, b) / n;
      }
    }
    for (std::size_t t = first; t < last; ++t) {
      for (std::size_t b = 0; b < bands; ++b) {
        const double d = s.values(t, b) - stats[b];
        stats[bands + b] += d * d / n;
      }
    }
    add_vec_mat(stats, projection, out.row(seg));
  }
  return out;
}

} // namespace aac
