#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aac/embeddings.hpp"
#include "aac/numerics.hpp"
#include "aac/text.hpp"

namespace aac {

struct ModelConfig {
  std::size_t input_dim = kYamnetDim;
  std::size_t encoder_units = 256;  // per direction
  std::size_t attention_dim = 256;
  std::size_t decoder_units = 256;
  std::size_t embedding_dim = 128;
  std::size_t vocab_size = 0;

  std::size_t encoder_dim() const { return 2 * encoder_units; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// ---------------------------------------------------------------- LSTM cell

/// Gate blocks are laid out [input, forget, output, candidate] along the
/// columns of `weight`; rows are [x ; h_prev].
struct LstmCellParams {
  ParameterGroup weight;  // (input_dim + hidden_dim) x 4*hidden_dim
  ParameterGroup bias;    // 1 x 4*hidden_dim

  std::size_t input_dim() const { return weight.value.rows() - hidden_dim(); }
  std::size_t hidden_dim() const { return bias.value.cols() / 4; }

  /// Glorot-uniform weights, zero bias except +1 on the forget gate.
  static LstmCellParams create(const std::string& name, std::size_t input_dim,
                               std::size_t hidden_dim, std::mt19937_64& rng);
};

struct LstmState {
  Vector h;
  Vector c;
};

struct LstmCache {
  Vector input;  // [x ; h_prev]
  Vector c_prev;
  Vector gates;  // activated i, f, o, g
  Vector c;
  Vector tanh_c;
};

LstmState lstm_cell(const LstmCellParams& params, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev,
                    LstmCache* cache = nullptr);

/// Accumulates parameter gradients. dx is accumulated into; dh_prev and
/// dc_prev are overwritten.
void lstm_cell_backward(LstmCellParams& params, const LstmCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        std::span<double> dx, std::span<double> dh_prev,
                        std::span<double> dc_prev);

// ------------------------------------------------------------------ encoder

struct BiLstmLayer {
  LstmCellParams forward;
  LstmCellParams backward;
};

/// Two stacked bidirectional layers; output width is 2 * encoder_units.
struct EncoderParams {
  std::array<BiLstmLayer, 2> layers;
};

struct EncoderOutput {
  Matrix states;  // T x d_e, rows >= valid_length are zero
  std::size_t valid_length = 0;
};

struct EncoderCache {
  struct Layer {
    Matrix input;
    std::vector<LstmCache> forward;   // indexed by time step
    std::vector<LstmCache> backward;  // indexed by time step
  };
  std::array<Layer, 2> layers;
};

EncoderOutput encode(const EncoderParams& params, const EmbeddingMatrix& m,
                     std::size_t valid_length, EncoderCache* cache = nullptr);

/// d_input (optional) receives dLoss/dM, zero on padded rows.
void encode_backward(EncoderParams& params, const EncoderCache& cache,
                     const Matrix& d_states, std::size_t valid_length,
                     Matrix* d_input = nullptr);

// ---------------------------------------------------------------- attention

struct AttentionParams {
  ParameterGroup w_e;  // d_e x d_a
  ParameterGroup w_h;  // d_h x d_a
  ParameterGroup w_a;  // d_a x 1
};

struct AttentionStep {
  Matrix alpha;    // T x d_a, ReLU(E W_e + h_prev W_h); zero on padded rows
  Vector weights;  // length T, softmax over valid frames, 0 on padded frames
  Vector context;  // length d_e, sum_t weights[t] * E[t]
};

/// E W_e, shared by every decoding step over the same encoder output.
Matrix project_encoder(const AttentionParams& att, const EncoderOutput& enc);

AttentionStep attention(const AttentionParams& att, const EncoderOutput& enc,
                        const Matrix& projected, std::span<const double> h_prev);
AttentionStep attention(const AttentionParams& att, const EncoderOutput& enc,
                        std::span<const double> h_prev);

/// Accumulates into W_h and W_a gradients, d_projected (T x d_a), d_states
/// (T x d_e) and dh_prev. W_e's gradient comes later from d_projected.
void attention_backward(AttentionParams& att, const EncoderOutput& enc, const AttentionStep& step,
                        std::span<const double> h_prev, std::span<const double> d_context,
                        Matrix& d_projected, Matrix& d_states, std::span<double> dh_prev);

// ------------------------------------------------------------------ decoder

struct DecoderParams {
  ParameterGroup embedding;  // |V| x d_w
  LstmCellParams cell;       // input d_w + d_e, hidden d_h
  ParameterGroup out_weight; // d_h x |V|
  ParameterGroup out_bias;   // 1 x |V|
  AttentionParams attention;
};

using DecoderState = LstmState;

struct DecoderStepResult {
  Vector logits;
  DecoderState state;
  AttentionStep attention;
};

struct DecoderStepCache {
  TokenId prev_token = 0;
  Vector h_prev;
  LstmCache lstm;
};

DecoderStepResult decoder_step(const DecoderParams& dec, TokenId prev_token,
                               const DecoderState& prev, const EncoderOutput& enc,
                               const Matrix& projected, DecoderStepCache* cache = nullptr);

// -------------------------------------------------------------------- model

struct CaptionModel {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;

  static CaptionModel initialize(const ModelConfig& config, std::uint64_t seed);

  std::vector<ParameterGroup*> parameters();
  std::vector<const ParameterGroup*> parameters() const;
  ParameterGroup& parameter(const std::string& name);

  void zero_grad();
  DecoderState initial_state() const;
};

/// Everything backward() needs from a teacher-forced pass.
struct ForwardPass {
  double loss = 0.0;       // mean cross-entropy over predicted positions
  std::size_t steps = 0;   // number of predicted positions
  std::vector<AttentionStep> attention;

  bool has_cache = false;
  EncoderCache encoder_cache;
  EncoderOutput encoded;
  Matrix projected;
  std::vector<DecoderStepCache> step_caches;
  std::vector<Vector> probabilities;
  std::vector<TokenId> targets;
};

/// Teacher forcing from START; position s predicts target[s + 1] until the
/// first PAD (END is predicted, nothing after it). Decoder state starts at 0.
ForwardPass forward_teacher_forced(const CaptionModel& model, const EmbeddingMatrix& m,
                                   std::size_t valid_length, const TokenSequence& target);

/// Accumulates scale * dLoss/dtheta into every parameter gradient.
void backward(CaptionModel& model, const ForwardPass& pass, double scale = 1.0,
              Matrix* d_input = nullptr);

// Checkpoint layout: "AACM" 0x01, u32 config length, config JSON, u32 group
// count, then per group u32 name length, name, u32 rows, u32 cols and
// rows*cols float64 values; integers and floats little-endian.
void save_checkpoint(const std::filesystem::path& path, const CaptionModel& model,
                     const std::string& metadata_json = "{}");

struct LoadedCheckpoint {
  CaptionModel model;
  std::string metadata_json;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace aac
