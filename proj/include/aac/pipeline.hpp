#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aac/decoding.hpp"
#include "aac/embeddings.hpp"
#include "aac/features.hpp"
#include "aac/metrics.hpp"
#include "aac/model.hpp"
#include "aac/text.hpp"

namespace aac {

inline constexpr std::size_t kCaptionsPerItem = 5;

// ----------------------------------------------------------------- manifest

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;  // .aace embeddings, or .wav for the spectrogram baseline
  std::vector<std::string> captions;
  std::string split;           // dev, val or eval
  /// Optional: gold segment index of each event word (alignment probe data).
  std::map<std::string, std::size_t> alignment;

  bool is_waveform() const;
};

/// JSON Lines, one entry per line:
///   {"id": ..., "path": ..., "captions": [...], "split": ..., "alignment": {...}}
/// Relative paths resolve against the manifest's directory.
struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Embedding file as-is, or log-mel frames for a WAV input.
EmbeddingMatrix load_input(const ManifestEntry& entry, const FrontEndConfig& front_end = {});

// ------------------------------------------------------------------- config

struct TrainConfig {
  std::size_t batch_size = 32;
  double initial_lr = 1e-4;
  std::size_t plateau_patience = 3;
  double lr_factor = 0.5;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;

  AugmentConfig augment;
  bool augment_enabled = true;  // only affects spectrogram (WAV) inputs

  std::size_t encoder_units = 256;
  std::size_t attention_dim = 256;
  std::size_t decoder_units = 256;
  std::size_t embedding_dim = 128;

  std::size_t min_count = kDefaultMinCount;
  bool vocab_all_splits = false;
  std::size_t max_tokens = kMaxTokens;
  std::string validation_split = "val";
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  std::filesystem::path checkpoint_path;  // best validation BLEU-4; empty = don't write
  std::filesystem::path log_path;         // empty = don't write

  /// Throws ConfigError.
  void validate() const;
};

/// Halves (by `factor`) the learning rate once the best validation score has
/// not improved by more than min_delta for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, std::size_t patience, double factor,
                   double min_delta = 1e-6);

  double lr() const { return lr_; }
  double best() const { return best_; }

  /// Feeds one epoch's score; returns true if it is a new best.
  bool observe(double score);

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double min_delta_;
  double best_;
  bool has_best_ = false;
  std::size_t stale_ = 0;
};

// ----------------------------------------------------------------- training

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_bleu4 = 0.0;
  double val_bleu1 = 0.0;
  double lr = 0.0;
};

/// Tab-separated: epoch, loss, val_bleu4, val_bleu1, lr.
std::string format_log_header();
std::string format_log_line(const EpochLog& e);

struct TrainHooks {
  /// Replaces the measured validation BLEU-4 fed to the scheduler.
  std::function<double(std::size_t epoch, double measured)> validation_score;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  CaptionModel best_model;   // highest validation BLEU-4
  CaptionModel final_model;
  Vocabulary vocab;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Teacher-forced loss of a padded batch, accumulating gradients of the batch
/// mean into the model. Returns the mean of the per-item losses.
double accumulate_batch(CaptionModel& model, const std::vector<Matrix>& inputs,
                        const std::vector<TokenSequence>& targets);

TrainResult train(const TrainConfig& config, const Manifest& manifest,
                  const TrainHooks& hooks = {});

// --------------------------------------------------------------- inference

struct TrainedModel {
  CaptionModel model;
  Vocabulary vocab;
};

void save_trained(const std::filesystem::path& path, const CaptionModel& model,
                  const Vocabulary& vocab);
TrainedModel load_trained(const std::filesystem::path& path);

enum class DecodeMode { greedy, beam };

struct CaptionOptions {
  DecodeMode mode = DecodeMode::beam;
  BeamOptions beam;
};

/// Decoded words; "<unk>" marks UNK.
std::string caption(const TrainedModel& trained, const EmbeddingMatrix& m,
                    const CaptionOptions& options = {});

struct EvaluationResult {
  MetricReport report;
  std::vector<std::pair<std::string, std::string>> captions;  // id, caption
};

EvaluationResult evaluate(const TrainedModel& trained, const Manifest& manifest,
                          const std::string& split, const BeamOptions& beam = {},
                          const EvalOptions& eval = {});

struct AttentionTrace {
  std::string id;
  std::vector<std::string> tokens;   // decoded words, END excluded
  std::size_t frames = 0;
  std::vector<Vector> weights;       // one length-frames row per token
};

/// Greedy decode with per-token attention weights.
AttentionTrace trace_attention(const TrainedModel& trained, const EmbeddingMatrix& m,
                               const std::string& id, std::size_t max_tokens = kMaxTokens);
void write_attention_trace(const std::filesystem::path& path, const AttentionTrace& trace);
AttentionTrace read_attention_trace(const std::filesystem::path& path);

struct AlignmentScore {
  std::size_t event_tokens = 0;
  std::size_t aligned = 0;
  double rate() const {
    return event_tokens == 0 ? 0.0 : static_cast<double>(aligned) / static_cast<double>(event_tokens);
  }
};

/// Fraction of decoded event words whose attention argmax is their gold segment.
AlignmentScore alignment_probe(const TrainedModel& trained, const Manifest& manifest,
                               const std::string& split);

// ---------------------------------------------------------------- toy data

struct ToyOptions {
  std::size_t dim = 16;
  double noise = 0.1;
  std::size_t min_events = 2;
  std::size_t max_events = 4;
  std::string split = "dev";
};

/// Words used as event names by make_toy_dataset.
const std::vector<std::string>& toy_event_words();

/// Writes <dir>/manifest.jsonl and <dir>/emb/<id>.aace. Item i holds a random
/// sequence of distinct events, event k in segment k; its five captions are
/// the event names joined by "then".
Manifest make_toy_dataset(const std::filesystem::path& dir, std::uint64_t seed,
                          std::size_t n_items, const ToyOptions& options = {});

} // namespace aac
