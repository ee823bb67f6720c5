#include "aac/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "aac/errors.hpp"
#include "json.hpp"

namespace aac {

namespace {

void glorot_uniform(Matrix& m, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : m.values()) {
    v = dist(rng);
  }
}

ParameterGroup glorot_group(const std::string& name, std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng) {
  Matrix m(rows, cols);
  glorot_uniform(m, rng);
  return ParameterGroup(name, std::move(m));
}

void check_size(std::span<const double> v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(v.size()));
  }
}

} // namespace

// ---------------------------------------------------------------- LSTM cell

LstmCellParams LstmCellParams::create(const std::string& name, std::size_t input_dim,
                                      std::size_t hidden_dim, std::mt19937_64& rng) {
  LstmCellParams p;
  p.weight = glorot_group(name + ".weight", input_dim + hidden_dim, 4 * hidden_dim, rng);
  Matrix bias(1, 4 * hidden_dim);
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) {
    bias(0, j) = 1.0;
  }
  p.bias = ParameterGroup(name + ".bias", std::move(bias));
  return p;
}

LstmState lstm_cell(const LstmCellParams& params, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev,
                    LstmCache* cache) {
  const std::size_t hidden = params.hidden_dim();
  const std::size_t in = params.input_dim();
  check_size(x, in, "lstm_cell input");
  check_size(h_prev, hidden, "lstm_cell h_prev");
  check_size(c_prev, hidden, "lstm_cell c_prev");

  Vector input(in + hidden);
  std::copy(x.begin(), x.end(), input.begin());
  std::copy(h_prev.begin(), h_prev.end(), input.begin() + static_cast<std::ptrdiff_t>(in));

  Vector z(params.bias.value.values().begin(), params.bias.value.values().end());
  add_vec_mat(input, params.weight.value, z);

  LstmState out{Vector(hidden), Vector(hidden)};
  Vector tanh_c(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    z[j] = sigmoid(z[j]);
    z[hidden + j] = sigmoid(z[hidden + j]);
    z[2 * hidden + j] = sigmoid(z[2 * hidden + j]);
    z[3 * hidden + j] = std::tanh(z[3 * hidden + j]);
    out.c[j] = z[hidden + j] * c_prev[j] + z[j] * z[3 * hidden + j];
    tanh_c[j] = std::tanh(out.c[j]);
    out.h[j] = z[2 * hidden + j] * tanh_c[j];
  }

  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->gates = std::move(z);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

void lstm_cell_backward(LstmCellParams& params, const LstmCache& cache,
                        std::span<const double> dh, std::span<const double> dc,
                        std::span<double> dx, std::span<double> dh_prev,
                        std::span<double> dc_prev) {
  const std::size_t hidden = params.hidden_dim();
  const std::size_t in = params.input_dim();
  const Vector& g = cache.gates;

  Vector dz(4 * hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double gi = g[j];
    const double gf = g[hidden + j];
    const double go = g[2 * hidden + j];
    const double gg = g[3 * hidden + j];
    const double tc = cache.tanh_c[j];
    const double d_out = dh[j] * tc;
    const double dc_total = dc[j] + dh[j] * go * (1.0 - tc * tc);
    dz[j] = dc_total * gg * gi * (1.0 - gi);
    dz[hidden + j] = dc_total * cache.c_prev[j] * gf * (1.0 - gf);
    dz[2 * hidden + j] = d_out * go * (1.0 - go);
    dz[3 * hidden + j] = dc_total * gi * (1.0 - gg * gg);
    dc_prev[j] = dc_total * gf;
  }

  add_outer(cache.input, dz, params.weight.gradient);
  auto db = params.bias.gradient.values();
  for (std::size_t k = 0; k < dz.size(); ++k) {
    db[k] += dz[k];
  }

  Vector d_input(in + hidden);
  add_mat_vec(params.weight.value, dz, d_input);
  for (std::size_t k = 0; k < in; ++k) {
    dx[k] += d_input[k];
  }
  std::copy(d_input.begin() + static_cast<std::ptrdiff_t>(in), d_input.end(), dh_prev.begin());
}

// ------------------------------------------------------------------ encoder

EncoderOutput encode(const EncoderParams& params, const EmbeddingMatrix& m,
                     std::size_t valid_length, EncoderCache* cache) {
  if (valid_length > m.rows()) {
    throw ContractViolation("encode: valid length " + std::to_string(valid_length) +
                            " exceeds " + std::to_string(m.rows()) + " frames");
  }
  if (valid_length == 0) {
    throw ContractViolation("encode: need at least one valid frame");
  }
  if (m.cols() != params.layers[0].forward.input_dim()) {
    throw DimensionError("encode: embedding dim " + std::to_string(m.cols()) +
                         " does not match encoder input dim " +
                         std::to_string(params.layers[0].forward.input_dim()));
  }

  Matrix input = m;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const BiLstmLayer& layer = params.layers[l];
    const std::size_t hidden = layer.forward.hidden_dim();
    Matrix out(m.rows(), 2 * hidden);

    EncoderCache::Layer* lc = cache != nullptr ? &cache->layers[l] : nullptr;
    if (lc != nullptr) {
      lc->forward.assign(valid_length, {});
      lc->backward.assign(valid_length, {});
    }

    LstmState state{Vector(hidden), Vector(hidden)};
    for (std::size_t t = 0; t < valid_length; ++t) {
      state = lstm_cell(layer.forward, input.row(t), state.h, state.c,
                        lc != nullptr ? &lc->forward[t] : nullptr);
      std::copy(state.h.begin(), state.h.end(), out.row(t).begin());
    }
    state = {Vector(hidden), Vector(hidden)};
    for (std::size_t t = valid_length; t-- > 0;) {
      state = lstm_cell(layer.backward, input.row(t), state.h, state.c,
                        lc != nullptr ? &lc->backward[t] : nullptr);
      std::copy(state.h.begin(), state.h.end(),
                out.row(t).begin() + static_cast<std::ptrdiff_t>(hidden));
    }

    if (lc != nullptr) {
      lc->input = std::move(input);
    }
    input = std::move(out);
  }
  return {std::move(input), valid_length};
}

void encode_backward(EncoderParams& params, const EncoderCache& cache,
                     const Matrix& d_states, std::size_t valid_length, Matrix* d_input) {
  Matrix d_out = d_states;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    BiLstmLayer& layer = params.layers[l];
    const EncoderCache::Layer& lc = cache.layers[l];
    if (lc.forward.size() != valid_length || lc.backward.size() != valid_length) {
      throw ContractViolation("encode_backward: cache does not match valid length");
    }
    const std::size_t hidden = layer.forward.hidden_dim();
    Matrix d_in(lc.input.rows(), lc.input.cols());

    Vector dh(hidden);
    Vector dh_next(hidden);
    Vector dc_next(hidden);
    Vector dh_prev(hidden);
    Vector dc_prev(hidden);

    for (std::size_t t = valid_length; t-- > 0;) {
      const auto row = d_out.row(t);
      for (std::size_t j = 0; j < hidden; ++j) {
        dh[j] = row[j] + dh_next[j];
      }
      lstm_cell_backward(layer.forward, lc.forward[t], dh, dc_next, d_in.row(t), dh_prev,
                         dc_prev);
      dh_next.swap(dh_prev);
      dc_next.swap(dc_prev);
    }

    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    std::fill(dc_next.begin(), dc_next.end(), 0.0);
    for (std::size_t t = 0; t < valid_length; ++t) {
      const auto row = d_out.row(t);
      for (std::size_t j = 0; j < hidden; ++j) {
        dh[j] = row[hidden + j] + dh_next[j];
      }
      lstm_cell_backward(layer.backward, lc.backward[t], dh, dc_next, d_in.row(t), dh_prev,
                         dc_prev);
      dh_next.swap(dh_prev);
      dc_next.swap(dc_prev);
    }
    d_out = std::move(d_in);
  }
  if (d_input != nullptr) {
    *d_input = std::move(d_out);
  }
}

// ---------------------------------------------------------------- attention

Matrix project_encoder(const AttentionParams& att, const EncoderOutput& enc) {
  if (enc.states.cols() != att.w_e.value.rows()) {
    throw DimensionError("attention: encoder width " + std::to_string(enc.states.cols()) +
                         " does not match W_e " + att.w_e.value.shape_string());
  }
  Matrix projected(enc.states.rows(), att.w_e.value.cols());
  for (std::size_t t = 0; t < enc.valid_length; ++t) {
    add_vec_mat(enc.states.row(t), att.w_e.value, projected.row(t));
  }
  return projected;
}

AttentionStep attention(const AttentionParams& att, const EncoderOutput& enc,
                        const Matrix& projected, std::span<const double> h_prev) {
  const std::size_t frames = enc.states.rows();
  const std::size_t valid = enc.valid_length;
  const std::size_t d_a = att.w_a.value.rows();
  if (valid == 0 || valid > frames) {
    throw ContractViolation("attention: invalid valid length");
  }
  if (projected.rows() != frames || projected.cols() != d_a) {
    throw DimensionError("attention: projected encoder is " + projected.shape_string() +
                         ", expected " + std::to_string(frames) + "x" + std::to_string(d_a));
  }

  Vector query(d_a);
  add_vec_mat(h_prev, att.w_h.value, query);

  AttentionStep step;
  step.alpha = Matrix(frames, d_a);
  Vector logits(valid);
  for (std::size_t t = 0; t < valid; ++t) {
    const auto proj = projected.row(t);
    auto alpha = step.alpha.row(t);
    double logit = 0.0;
    for (std::size_t k = 0; k < d_a; ++k) {
      alpha[k] = std::max(proj[k] + query[k], 0.0);
      logit += alpha[k] * att.w_a.value(k, 0);
    }
    logits[t] = logit;
  }
  // Padded frames are excluded from the softmax, i.e. their logits are -inf.
  step.weights = softmax(logits);
  step.weights.resize(frames, 0.0);

  step.context.assign(enc.states.cols(), 0.0);
  for (std::size_t t = 0; t < valid; ++t) {
    const double w = step.weights[t];
    const auto row = enc.states.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) {
      step.context[j] += w * row[j];
    }
  }
  return step;
}

AttentionStep attention(const AttentionParams& att, const EncoderOutput& enc,
                        std::span<const double> h_prev) {
  return attention(att, enc, project_encoder(att, enc), h_prev);
}

void attention_backward(AttentionParams& att, const EncoderOutput& enc, const AttentionStep& step,
                        std::span<const double> h_prev, std::span<const double> d_context,
                        Matrix& d_projected, Matrix& d_states, std::span<double> dh_prev) {
  const std::size_t valid = enc.valid_length;
  const std::size_t d_a = att.w_a.value.rows();

  Vector d_weights(valid);
  double weighted = 0.0;
  for (std::size_t t = 0; t < valid; ++t) {
    const auto row = enc.states.row(t);
    auto d_row = d_states.row(t);
    double dot = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      dot += d_context[j] * row[j];
      d_row[j] += step.weights[t] * d_context[j];
    }
    d_weights[t] = dot;
    weighted += step.weights[t] * dot;
  }

  Vector d_query(d_a);
  for (std::size_t t = 0; t < valid; ++t) {
    const double d_logit = step.weights[t] * (d_weights[t] - weighted);
    if (d_logit == 0.0) {
      continue;
    }
    const auto alpha = step.alpha.row(t);
    auto d_proj = d_projected.row(t);
    for (std::size_t k = 0; k < d_a; ++k) {
      att.w_a.gradient(k, 0) += alpha[k] * d_logit;
      if (alpha[k] > 0.0) {
        const double d_pre = d_logit * att.w_a.value(k, 0);
        d_proj[k] += d_pre;
        d_query[k] += d_pre;
      }
    }
  }

  add_outer(h_prev, d_query, att.w_h.gradient);
  add_mat_vec(att.w_h.value, d_query, dh_prev);
}

// ------------------------------------------------------------------ decoder

DecoderStepResult decoder_step(const DecoderParams& dec, TokenId prev_token,
                               const DecoderState& prev, const EncoderOutput& enc,
                               const Matrix& projected, DecoderStepCache* cache) {
  const std::size_t vocab = dec.embedding.value.rows();
  if (prev_token >= vocab) {
    throw ContractViolation("decoder_step: token " + std::to_string(prev_token) +
                            " outside vocabulary of " + std::to_string(vocab));
  }
  DecoderStepResult result;
  result.attention = attention(dec.attention, enc, projected, prev.h);

  const auto embedded = dec.embedding.value.row(prev_token);
  Vector x(embedded.begin(), embedded.end());
  x.insert(x.end(), result.attention.context.begin(), result.attention.context.end());

  result.state = lstm_cell(dec.cell, x, prev.h, prev.c, cache != nullptr ? &cache->lstm : nullptr);

  result.logits.assign(dec.out_bias.value.values().begin(), dec.out_bias.value.values().end());
  add_vec_mat(result.state.h, dec.out_weight.value, result.logits);

  if (cache != nullptr) {
    cache->prev_token = prev_token;
    cache->h_prev = prev.h;
  }
  return result;
}

// -------------------------------------------------------------------- model

CaptionModel CaptionModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.encoder_units == 0 || config.attention_dim == 0 ||
      config.decoder_units == 0 || config.embedding_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (config.vocab_size <= kUnk) {
    throw ConfigError("vocabulary must hold more than the reserved tokens");
  }
  std::mt19937_64 rng(seed);
  CaptionModel model;
  model.config = config;

  const std::size_t h = config.encoder_units;
  model.encoder.layers[0].forward = LstmCellParams::create("encoder.0.fwd", config.input_dim, h, rng);
  model.encoder.layers[0].backward = LstmCellParams::create("encoder.0.bwd", config.input_dim, h, rng);
  model.encoder.layers[1].forward = LstmCellParams::create("encoder.1.fwd", 2 * h, h, rng);
  model.encoder.layers[1].backward = LstmCellParams::create("encoder.1.bwd", 2 * h, h, rng);

  DecoderParams& dec = model.decoder;
  const std::size_t d_e = config.encoder_dim();
  dec.attention.w_e = glorot_group("attention.w_e", d_e, config.attention_dim, rng);
  dec.attention.w_h = glorot_group("attention.w_h", config.decoder_units, config.attention_dim, rng);
  dec.attention.w_a = glorot_group("attention.w_a", config.attention_dim, 1, rng);
  dec.embedding = glorot_group("decoder.embedding", config.vocab_size, config.embedding_dim, rng);
  dec.cell = LstmCellParams::create("decoder.lstm", config.embedding_dim + d_e,
                                    config.decoder_units, rng);
  dec.out_weight = glorot_group("decoder.out.weight", config.decoder_units, config.vocab_size, rng);
  dec.out_bias = ParameterGroup("decoder.out.bias", Matrix(1, config.vocab_size));
  return model;
}

std::vector<ParameterGroup*> CaptionModel::parameters() {
  std::vector<ParameterGroup*> out;
  for (auto& layer : encoder.layers) {
    for (LstmCellParams* cell : {&layer.forward, &layer.backward}) {
      out.push_back(&cell->weight);
      out.push_back(&cell->bias);
    }
  }
  out.push_back(&decoder.attention.w_e);
  out.push_back(&decoder.attention.w_h);
  out.push_back(&decoder.attention.w_a);
  out.push_back(&decoder.embedding);
  out.push_back(&decoder.cell.weight);
  out.push_back(&decoder.cell.bias);
  out.push_back(&decoder.out_weight);
  out.push_back(&decoder.out_bias);
  return out;
}

std::vector<const ParameterGroup*> CaptionModel::parameters() const {
  auto mutable_params = const_cast<CaptionModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

ParameterGroup& CaptionModel::parameter(const std::string& name) {
  for (ParameterGroup* p : parameters()) {
    if (p->name == name) {
      return *p;
    }
  }
  throw ContractViolation("no parameter group named '" + name + "'");
}

void CaptionModel::zero_grad() {
  for (ParameterGroup* p : parameters()) {
    p->zero_grad();
  }
}

DecoderState CaptionModel::initial_state() const {
  return {Vector(config.decoder_units), Vector(config.decoder_units)};
}

ForwardPass forward_teacher_forced(const CaptionModel& model, const EmbeddingMatrix& m,
                                   std::size_t valid_length, const TokenSequence& target) {
  if (target.ids.empty() || target.ids.front() != kStart) {
    throw ContractViolation("forward_teacher_forced: target must begin with START");
  }
  for (TokenId id : target.ids) {
    if (id >= model.config.vocab_size) {
      throw ContractViolation("forward_teacher_forced: target token " + std::to_string(id) +
                              " outside vocabulary");
    }
  }

  ForwardPass pass;
  pass.has_cache = true;
  pass.encoded = encode(model.encoder, m, valid_length, &pass.encoder_cache);
  pass.projected = project_encoder(model.decoder.attention, pass.encoded);

  DecoderState state = model.initial_state();
  for (std::size_t s = 0; s + 1 < target.ids.size(); ++s) {
    const TokenId next = target.ids[s + 1];
    if (next == kPad || target.ids[s] == kEnd) {
      break;
    }
    DecoderStepCache cache;
    DecoderStepResult res =
        decoder_step(model.decoder, target.ids[s], state, pass.encoded, pass.projected, &cache);
    Vector probs = softmax(res.logits);
    pass.loss += cross_entropy(probs, next);
    pass.attention.push_back(std::move(res.attention));
    pass.step_caches.push_back(std::move(cache));
    pass.probabilities.push_back(std::move(probs));
    pass.targets.push_back(next);
    state = std::move(res.state);
  }
  pass.steps = pass.targets.size();
  if (pass.steps > 0) {
    pass.loss /= static_cast<double>(pass.steps);
  }
  if (!std::isfinite(pass.loss)) {
    throw NumericError("forward_teacher_forced: non-finite loss");
  }
  return pass;
}

void backward(CaptionModel& model, const ForwardPass& pass, double scale, Matrix* d_input) {
  if (!pass.has_cache) {
    throw ContractViolation("backward: no cached forward pass");
  }
  const EncoderOutput& enc = pass.encoded;
  const std::size_t frames = enc.states.rows();
  if (pass.steps == 0) {
    if (d_input != nullptr) {
      *d_input = Matrix(frames, model.config.input_dim);
    }
    return;
  }

  DecoderParams& dec = model.decoder;
  const std::size_t d_h = model.config.decoder_units;
  const std::size_t d_w = model.config.embedding_dim;
  const std::size_t d_e = model.config.encoder_dim();
  const std::size_t vocab = model.config.vocab_size;
  const double step_scale = scale / static_cast<double>(pass.steps);

  Matrix d_states(frames, d_e);
  Matrix d_projected(frames, model.config.attention_dim);
  Vector dh_next(d_h);
  Vector dc_next(d_h);
  Vector dh(d_h);
  Vector dh_prev(d_h);
  Vector dc_prev(d_h);
  Vector d_logits(vocab);
  Vector dx(d_w + d_e);

  for (std::size_t s = pass.steps; s-- > 0;) {
    const DecoderStepCache& cache = pass.step_caches[s];
    const Vector& probs = pass.probabilities[s];
    for (std::size_t v = 0; v < vocab; ++v) {
      d_logits[v] = probs[v] * step_scale;
    }
    d_logits[pass.targets[s]] -= step_scale;

    // h of this step is the LSTM output cached as the next step's h_prev; it
    // is not stored separately, so recompute it from the gates.
    Vector h(d_h);
    const Vector& gates = cache.lstm.gates;
    for (std::size_t j = 0; j < d_h; ++j) {
      h[j] = gates[2 * d_h + j] * cache.lstm.tanh_c[j];
    }
    add_outer(h, d_logits, dec.out_weight.gradient);
    auto d_bias = dec.out_bias.gradient.values();
    for (std::size_t v = 0; v < vocab; ++v) {
      d_bias[v] += d_logits[v];
    }

    dh = dh_next;
    add_mat_vec(dec.out_weight.value, d_logits, dh);

    std::fill(dx.begin(), dx.end(), 0.0);
    lstm_cell_backward(dec.cell, cache.lstm, dh, dc_next, dx, dh_prev, dc_prev);

    auto d_embed = dec.embedding.gradient.row(cache.prev_token);
    for (std::size_t k = 0; k < d_w; ++k) {
      d_embed[k] += dx[k];
    }
    attention_backward(dec.attention, enc, pass.attention[s], cache.h_prev,
                       std::span<const double>(dx).subspan(d_w), d_projected, d_states, dh_prev);

    dh_next.swap(dh_prev);
    dc_next.swap(dc_prev);
  }

  for (std::size_t t = 0; t < enc.valid_length; ++t) {
    add_outer(enc.states.row(t), d_projected.row(t), dec.attention.w_e.gradient);
    add_mat_vec(dec.attention.w_e.value, d_projected.row(t), d_states.row(t));
  }
  encode_backward(model.encoder, pass.encoder_cache, d_states, enc.valid_length, d_input);
}

// --------------------------------------------------------------- checkpoint

namespace {

constexpr std::array<char, 5> kCheckpointMagic = {'A', 'A', 'C', 'M', '\x01'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>(v >> shift & 0xff));
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int shift = 0; shift < 64; shift += 8) {
    out.push_back(static_cast<char>(v >> shift & 0xff));
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw CorruptionError(source_ + ": truncated checkpoint (needed " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos_) + ", file has " +
                            std::to_string(bytes_.size()) + ")");
    }
  }

  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},         {"encoder_units", c.encoder_units},
          {"attention_dim", c.attention_dim}, {"decoder_units", c.decoder_units},
          {"embedding_dim", c.embedding_dim}, {"vocab_size", c.vocab_size}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.encoder_units = j.at("encoder_units").get<std::size_t>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.decoder_units = j.at("decoder_units").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  return c;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const CaptionModel& model,
                     const std::string& metadata_json) {
  nlohmann::json header;
  header["model"] = config_to_json(model.config);
  header["metadata"] = nlohmann::json::parse(metadata_json);
  const std::string config_text = header.dump();

  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_u32(out, static_cast<std::uint32_t>(config_text.size()));
  out += config_text;
  const auto groups = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(groups.size()));
  for (const ParameterGroup* g : groups) {
    put_u32(out, static_cast<std::uint32_t>(g->name.size()));
    out += g->name;
    put_u32(out, static_cast<std::uint32_t>(g->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(g->value.cols()));
    for (double v : g->value.values()) {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw DataError("cannot write checkpoint " + path.string());
  }
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw DataError("cannot open checkpoint " + path.string());
  }
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader reader(bytes, path.string());
  if (reader.str(kCheckpointMagic.size()) !=
      std::string(kCheckpointMagic.begin(), kCheckpointMagic.end())) {
    throw FormatError(path.string() + ": not an AACM v1 checkpoint");
  }
  const auto config_len = static_cast<std::size_t>(reader.uint(4));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(reader.str(config_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint config block: " + e.what());
  }

  LoadedCheckpoint loaded;
  try {
    loaded.model = CaptionModel::initialize(config_from_json(header.at("model")), 0);
    loaded.metadata_json = header.value("metadata", nlohmann::json::object()).dump();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint config block: " + e.what());
  }

  const auto count = static_cast<std::size_t>(reader.uint(4));
  const auto groups = loaded.model.parameters();
  if (count != groups.size()) {
    throw FormatError(path.string() + ": expected " + std::to_string(groups.size()) +
                      " parameter groups, found " + std::to_string(count));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = reader.str(static_cast<std::size_t>(reader.uint(4)));
    const auto rows = static_cast<std::size_t>(reader.uint(4));
    const auto cols = static_cast<std::size_t>(reader.uint(4));
    const auto it = std::find_if(groups.begin(), groups.end(),
                                 [&](const ParameterGroup* g) { return g->name == name; });
    if (it == groups.end()) {
      throw FormatError(path.string() + ": unknown parameter group '" + name + "'");
    }
    ParameterGroup& g = **it;
    if (g.value.rows() != rows || g.value.cols() != cols) {
      throw FormatError(path.string() + ": group '" + name + "' is " + std::to_string(rows) +
                        "x" + std::to_string(cols) + ", config implies " +
                        g.value.shape_string());
    }
    for (double& v : g.value.values()) {
      v = std::bit_cast<double>(reader.uint(8));
    }
  }
  if (!reader.done()) {
    throw CorruptionError(path.string() + ": trailing bytes after parameter groups");
  }
  return loaded;
}

} // namespace aac
