#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "aac/features.hpp"
#include "aac/numerics.hpp"

namespace aac {

/// T x F_e grid; row i is the embedding of the i-th audio segment.
using EmbeddingMatrix = Matrix;

inline constexpr std::size_t kYamnetDim = 1024;
inline constexpr std::size_t kAstDim = 768;
inline constexpr double kDefaultSegmentWindow = 0.96;  // seconds

/// Segments of `window` seconds overlapping by half.
struct SegmentPlan {
  double window = kDefaultSegmentWindow;
  double hop = kDefaultSegmentWindow / 2.0;
  std::vector<double> starts;

  std::size_t count() const { return starts.size(); }
};

SegmentPlan plan_segments(double duration, double window = kDefaultSegmentWindow);

// File layout: "AACE", u32 version (1), u32 T, u32 F, then T*F float32
// values, row-major; all little-endian.
inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

EmbeddingMatrix load_embedding_file(const std::filesystem::path& path);
void save_embedding_file(const std::filesystem::path& path, const EmbeddingMatrix& m);

/// Stand-in for a frozen pretrained extractor: each row is a seeded random
/// projection of the segment's per-band mean and variance.
EmbeddingMatrix mock_extract(const Spectrogram& s, const SegmentPlan& plan, std::size_t dim,
                             std::uint64_t seed);

} // namespace aac
