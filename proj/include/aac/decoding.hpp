#pragma once

#include <cstddef>
#include <vector>

#include "aac/model.hpp"
#include "aac/text.hpp"

namespace aac {

struct StepOutput {
  Vector log_probs;      // over the vocabulary
  DecoderState state;
  Vector attention;      // weights over encoder frames (may be empty)
};

/// What the decoders need from a model: one autoregressive step at a time.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual DecoderState initial_state() const = 0;
  virtual StepOutput step(TokenId prev_token, const DecoderState& state) const = 0;
};

/// Adapts a CaptionModel to one input: the encoder runs once, in the constructor.
class ModelStepper : public StepModel {
 public:
  ModelStepper(const CaptionModel& model, const EmbeddingMatrix& m);
  ModelStepper(const CaptionModel& model, const EmbeddingMatrix& m, std::size_t valid_length);

  std::size_t vocab_size() const override { return model_.config.vocab_size; }
  DecoderState initial_state() const override { return model_.initial_state(); }
  StepOutput step(TokenId prev_token, const DecoderState& state) const override;

  std::size_t frames() const { return encoded_.states.rows(); }

 private:
  const CaptionModel& model_;
  EncoderOutput encoded_;
  Matrix projected_;
};

/// A (possibly partial) caption. tokens starts with START.
struct Hypothesis {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
  DecoderState state;
  bool finished = false;
  std::vector<Vector> attention;  // one weight vector per emitted token

  /// Tokens after START (END included when present).
  std::size_t generated() const { return tokens.empty() ? 0 : tokens.size() - 1; }
};

/// Argmax at every step, lowest index on ties. Stops at END or when the
/// sequence (START included) reaches max_tokens.
Hypothesis greedy_decode(const StepModel& model, std::size_t max_tokens = kMaxTokens);

struct BeamOptions {
  std::size_t beam = 3;
  std::size_t max_tokens = kMaxTokens;
  bool length_normalize = true;
};

/// Final ranking score: log_prob, or log_prob / generated() when normalizing.
double hypothesis_score(const Hypothesis& h, bool length_normalize);

Hypothesis beam_search(const StepModel& model, const BeamOptions& options = {});

} // namespace aac
