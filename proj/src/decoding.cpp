#include "aac/decoding.hpp"

#include <algorithm>

#include "aac/errors.hpp"

namespace aac {

ModelStepper::ModelStepper(const CaptionModel& model, const EmbeddingMatrix& m)
    : ModelStepper(model, m, m.rows()) {}

ModelStepper::ModelStepper(const CaptionModel& model, const EmbeddingMatrix& m,
                           std::size_t valid_length)
    : model_(model),
      encoded_(encode(model.encoder, m, valid_length)),
      projected_(project_encoder(model.decoder.attention, encoded_)) {}

StepOutput ModelStepper::step(TokenId prev_token, const DecoderState& state) const {
  DecoderStepResult r = decoder_step(model_.decoder, prev_token, state, encoded_, projected_);
  return {log_softmax(r.logits), std::move(r.state), std::move(r.attention.weights)};
}

Hypothesis greedy_decode(const StepModel& model, std::size_t max_tokens) {
  if (max_tokens < 2) {
    throw ConfigError("greedy_decode: max_tokens must be at least 2");
  }
  Hypothesis hyp;
  hyp.tokens.push_back(kStart);
  hyp.state = model.initial_state();
  while (!hyp.finished) {
    StepOutput out = model.step(hyp.tokens.back(), hyp.state);
    // max_element returns the first maximum, i.e. the lowest index on ties.
    const auto best = std::max_element(out.log_probs.begin(), out.log_probs.end());
    const auto token = static_cast<TokenId>(best - out.log_probs.begin());
    hyp.tokens.push_back(token);
    hyp.log_prob += *best;
    hyp.state = std::move(out.state);
    hyp.attention.push_back(std::move(out.attention));
    hyp.finished = token == kEnd || hyp.tokens.size() >= max_tokens;
  }
  return hyp;
}

double hypothesis_score(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize || h.generated() == 0) {
    return h.log_prob;
  }
  return h.log_prob / static_cast<double>(h.generated());
}

namespace {

struct Candidate {
  double log_prob;
  std::size_t parent;
  TokenId token;
};

} // namespace

Hypothesis beam_search(const StepModel& model, const BeamOptions& options) {
  if (options.beam < 1) {
    throw ConfigError("beam_search: beam width must be at least 1");
  }
  if (options.max_tokens < 2) {
    throw ConfigError("beam_search: max_tokens must be at least 2");
  }

  std::vector<Hypothesis> live(1);
  live[0].tokens.push_back(kStart);
  live[0].state = model.initial_state();
  std::vector<Hypothesis> completed;

  while (!live.empty()) {
    std::vector<StepOutput> outputs;
    outputs.reserve(live.size());
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < live.size(); ++p) {
      outputs.push_back(model.step(live[p].tokens.back(), live[p].state));
      const Vector& lp = outputs.back().log_probs;
      for (TokenId v = 0; v < lp.size(); ++v) {
        candidates.push_back({live[p].log_prob + lp[v], p, v});
      }
    }

    // Higher score first; ties go to the lexicographically smaller sequence.
    // All candidates have the same length here, so raw and length-normalized
    // scores rank them identically.
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) {
        return a.log_prob > b.log_prob;
      }
      if (a.parent != b.parent) {
        return live[a.parent].tokens < live[b.parent].tokens;
      }
      return a.token < b.token;
    };
    const std::size_t keep = std::min(options.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);

    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = candidates[k];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      h.state = outputs[c.parent].state;
      h.attention = live[c.parent].attention;
      h.attention.push_back(outputs[c.parent].attention);
      h.finished = c.token == kEnd || h.tokens.size() >= options.max_tokens;
      (h.finished ? completed : next).push_back(std::move(h));
    }
    live = std::move(next);
  }

  const auto best = std::min_element(
      completed.begin(), completed.end(), [&](const Hypothesis& a, const Hypothesis& b) {
        const double sa = hypothesis_score(a, options.length_normalize);
        const double sb = hypothesis_score(b, options.length_normalize);
        if (sa != sb) {
          return sa > sb;
        }
        if (a.tokens.size() != b.tokens.size()) {
          return a.tokens.size() < b.tokens.size();
        }
        return a.tokens < b.tokens;
      });
  return *best;
}

} // namespace aac
