// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aac/decoding.hpp"
#include "aac/errors.hpp"
#include "aac/features.hpp"
#include "aac/metrics.hpp"
#include "aac/model.hpp"
#include "aac/pipeline.hpp"

namespace fs = std::filesystem;
using namespace aac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aac_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) {
    v = gauss(rng);
  }
  return m;
}

// ------------------------------------------------------------------ 1

// Largest |analytic - numeric| using a fourth-order stencil at h = 1e-4.
// Diagnostic only: separates finite-difference noise from gradient bugs.
double five_point_discrepancy(const std::function<double()>& loss, ParameterGroup& g) {
  constexpr double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.value.size(); ++i) {
    double& v = g.value.values()[i];
    const double saved = v;
    const auto at = [&](double offset) {
      v = saved + offset;
      const double l = loss();
      v = saved;
      return l;
    };
    const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    worst = std::max(worst, std::abs(g.gradient.values()[i] - numeric));
  }
  return worst;
}

Outcome gradient_check() {
  const auto start = Clock::now();
  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.encoder_units = 4;
  cfg.attention_dim = 4;
  cfg.decoder_units = 8;
  cfg.embedding_dim = 4;
  cfg.vocab_size = 6;
  TokenSequence target;
  target.ids = {kStart, 4, 5, 4, kEnd, kPad};

  double worst = 0.0;
  double worst_abs = 0.0;
  std::string worst_group;
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    CaptionModel model = CaptionModel::initialize(cfg, seed);
    std::mt19937_64 rng(seed);
    const Matrix input = random_matrix(3, cfg.input_dim, rng);
    model.zero_grad();
    backward(model, forward_teacher_forced(model, input, 3, target));
    const auto loss = [&] { return forward_teacher_forced(model, input, 3, target).loss; };
    for (ParameterGroup* g : model.parameters()) {
      const double err = finite_diff_check(loss, *g, 1e-5);
      if (err > worst) {
        worst = err;
        worst_group = g->name + " (seed " + std::to_string(seed) + ")";
      }
      worst_abs = std::max(worst_abs, five_point_discrepancy(loss, *g));
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream ss;
  ss << "max rel err " << worst << " at " << worst_group << "; five-point stencil agrees to "
     << worst_abs << " absolute; " << elapsed << " s";
  return {worst < 1e-4 && elapsed < 60.0, ss.str()};
}

// ------------------------------------------------------------------ 2

Outcome attention_invariants() {
  std::mt19937_64 rng(2024);
  std::size_t violations = 0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    AttentionParams att;
    const std::size_t d_e = 2 + rng() % 6;
    const std::size_t d_a = 1 + rng() % 5;
    const std::size_t d_h = 1 + rng() % 6;
    att.w_e.value = random_matrix(d_e, d_a, rng);
    att.w_h.value = random_matrix(d_h, d_a, rng);
    att.w_a.value = random_matrix(d_a, 1, rng, 3.0);

    const std::size_t frames = 1 + rng() % 10;
    EncoderOutput enc;
    enc.valid_length = 1 + rng() % frames;
    enc.states = random_matrix(frames, d_e, rng, 2.0);
    for (std::size_t t = enc.valid_length; t < frames; ++t) {
      std::fill(enc.states.row(t).begin(), enc.states.row(t).end(), 0.0);
    }
    const Matrix h = random_matrix(1, d_h, rng);
    const AttentionStep step = attention(att, enc, h.row(0));

    double sum = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double w = step.weights[t];
      if (w < 0.0 || (t >= enc.valid_length && w != 0.0)) {
        ++violations;
      }
      if (t < enc.valid_length) {
        sum += w;
      }
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    if (std::abs(sum - 1.0) > 1e-9) {
      ++violations;
    }
    for (std::size_t j = 0; j < d_e; ++j) {
      double lo = enc.states(0, j);
      double hi = lo;
      for (std::size_t t = 1; t < enc.valid_length; ++t) {
        lo = std::min(lo, enc.states(t, j));
        hi = std::max(hi, enc.states(t, j));
      }
      const double slack = 1e-12 * (1.0 + std::abs(lo) + std::abs(hi));
      if (step.context[j] < lo - slack || step.context[j] > hi + slack) {
        ++violations;
      }
    }
  }
  std::ostringstream ss;
  ss << violations << " violations, max |sum - 1| = " << worst_sum;
  return {violations == 0, ss.str()};
}

// ------------------------------------------------------------------ 3

struct Best {
  std::vector<TokenId> tokens;
  double log_prob = -INFINITY;
};

void enumerate(const StepModel& model, std::vector<TokenId>& prefix, double log_prob,
               const DecoderState& state, std::size_t max_tokens, Best& best) {
  const StepOutput out = model.step(prefix.back(), state);
  for (TokenId t = 0; t < model.vocab_size(); ++t) {
    prefix.push_back(t);
    const double lp = log_prob + out.log_probs[t];
    if (t == kEnd || prefix.size() == max_tokens) {
      if (lp > best.log_prob) {
        best = {prefix, lp};
      }
    } else {
      enumerate(model, prefix, lp, out.state, max_tokens, best);
    }
    prefix.pop_back();
  }
}

Outcome beam_oracle() {
  const auto start = Clock::now();
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.encoder_units = 4;
  cfg.attention_dim = 4;
  cfg.decoder_units = 6;
  cfg.embedding_dim = 4;
  cfg.vocab_size = 5;
  std::size_t mismatches = 0;
  std::size_t greedy_mismatches = 0;
  double worst = 0.0;
  const int models = 20;
  for (int seed = 0; seed < models; ++seed) {
    CaptionModel model = CaptionModel::initialize(cfg, 100 + seed);
    // Larger output weights give peaked, well-separated distributions.
    for (double& v : model.decoder.out_weight.value.values()) {
      v *= 8.0;
    }
    std::mt19937_64 rng(seed);
    const Matrix input = random_matrix(4, cfg.input_dim, rng);
    const ModelStepper stepper(model, input);

    Best best;
    std::vector<TokenId> prefix = {kStart};
    enumerate(stepper, prefix, 0.0, stepper.initial_state(), 4, best);
    const Hypothesis beam = beam_search(stepper, {5, 4, false});
    worst = std::max(worst, std::abs(beam.log_prob - best.log_prob));
    if (beam.tokens != best.tokens || std::abs(beam.log_prob - best.log_prob) > 1e-9) {
      ++mismatches;
    }
    const Hypothesis one = beam_search(stepper, {1, 4, false});
    const Hypothesis greedy = greedy_decode(stepper, 4);
    if (one.tokens != greedy.tokens || std::abs(one.log_prob - greedy.log_prob) > 1e-9) {
      ++greedy_mismatches;
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream ss;
  ss << models << " models: " << mismatches << " beam/exhaustive mismatches (max score gap "
     << worst << "), " << greedy_mismatches << " beam-1/greedy mismatches, " << elapsed << " s";
  return {mismatches == 0 && greedy_mismatches == 0 && elapsed < 10.0, ss.str()};
}

// ------------------------------------------------------------------ 4

std::size_t brute_force_lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        sub.push_back(a[i]);
      }
    }
    // Greedy leftmost matching decides whether sub is a subsequence of b.
    std::size_t j = 0;
    for (const auto& w : b) {
      if (j < sub.size() && sub[j] == w) {
        ++j;
      }
    }
    if (j == sub.size()) {
      best = std::max(best, sub.size());
    }
  }
  return best;
}

Outcome metric_oracles() {
  std::vector<std::string> failures;
  const double b1 = bleu({{{"a", "a"}, {{"a", "b"}}}}, 1);
  if (std::abs(b1 - 0.5) > 1e-12) {
    failures.push_back("bleu-1 " + std::to_string(b1));
  }
  const double rl = rouge_l({{"a", "b", "c", "d"}, {{"a", "c", "d"}}});
  if (std::abs(rl - 0.8798) > 1e-4) {
    failures.push_back("rouge-l " + std::to_string(rl));
  }
  const Tokens same = {"a", "dog", "barks", "at", "the", "door"};
  const std::vector<EvalInstance> identical = {{same, {same}}};
  for (int n = 1; n <= 4; ++n) {
    if (std::abs(bleu(identical, n) - 1.0) > 1e-12) {
      failures.push_back("identical bleu-" + std::to_string(n));
    }
  }
  if (std::abs(rouge_l(identical[0]) - 1.0) > 1e-12) {
    failures.push_back("identical rouge-l");
  }
  std::mt19937_64 rng(404);
  const std::vector<std::string> alphabet = {"a", "b", "c"};
  std::size_t lcs_bad = 0;
  for (int i = 0; i < 200; ++i) {
    Tokens x(rng() % 9);
    Tokens y(rng() % 9);
    for (auto& w : x) w = alphabet[rng() % alphabet.size()];
    for (auto& w : y) w = alphabet[rng() % alphabet.size()];
    if (lcs_length(x, y) != brute_force_lcs(x, y)) {
      ++lcs_bad;
    }
  }
  if (lcs_bad != 0) {
    failures.push_back(std::to_string(lcs_bad) + " lcs mismatches");
  }
  std::ostringstream ss;
  ss << "bleu-1 " << b1 << ", rouge-l " << rl << ", 200 lcs pairs";
  for (const auto& f : failures) {
    ss << "; " << f;
  }
  return {failures.empty(), ss.str()};
}

// ------------------------------------------------------------------ 5

TrainConfig toy_train_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.initial_lr = 1e-2;
  c.max_epochs = 200;
  c.seed = 7;
  c.encoder_units = 16;
  c.attention_dim = 16;
  c.decoder_units = 32;
  c.embedding_dim = 16;
  c.min_count = 1;
  c.validation_split = "dev";
  c.clip_norm = 5.0;
  // Training BLEU saturates early; a plateau rule on it would stall the lr.
  c.plateau_patience = c.max_epochs + 1;
  return c;
}

Outcome overfit() {
  const auto start = Clock::now();
  const Manifest manifest = make_toy_dataset(scratch_dir("toy"), 5, 8);
  const TrainResult result = train(toy_train_config(), manifest);
  const TrainedModel trained{result.final_model, result.vocab};
  const double elapsed = seconds_since(start);
  const double loss = result.log.back().mean_loss;
  const EvaluationResult eval = evaluate(trained, manifest, "dev");
  std::ostringstream ss;
  ss << "final loss " << loss << ", training BLEU-1 " << eval.report.bleu_1 << ", "
     << result.log.size() << " epochs, " << elapsed << " s";
  return {loss < 0.05 && eval.report.bleu_1 >= 0.95 && result.log.size() <= 200 &&
              elapsed < 300.0,
          ss.str()};
}

// ------------------------------------------------------------------ 6

Outcome lr_schedule() {
  const Manifest manifest = make_toy_dataset(scratch_dir("lr"), 9, 4);
  TrainConfig c;
  c.batch_size = 4;
  c.max_epochs = 9;
  c.encoder_units = 4;
  c.attention_dim = 4;
  c.decoder_units = 4;
  c.embedding_dim = 4;
  c.min_count = 1;
  c.validation_split = "dev";
  TrainHooks hooks;
  hooks.validation_score = [](std::size_t, double) { return 0.25; };
  const TrainResult result = train(c, manifest, hooks);

  const std::vector<double> expected = {1e-4,   1e-4,   1e-4,   1e-4,  5e-5,
                                        5e-5,   5e-5,   2.5e-5, 2.5e-5};
  bool match = result.log.size() == expected.size();
  std::ostringstream ss;
  ss << "lr sequence [";
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    ss << (i ? ", " : "") << result.log[i].lr;
    if (match && std::abs(result.log[i].lr - expected[i]) > 1e-18) {
      match = false;
    }
  }
  ss << "]";
  return {match, ss.str()};
}

// ------------------------------------------------------------------ 7

Outcome spec_augment_statistics() {
  std::mt19937_64 rng(77);
  Spectrogram s{random_matrix(1000, 64, rng), 0.01};
  AugmentConfig cfg;
  std::size_t time_applied = 0;
  std::size_t freq_applied = 0;
  std::size_t oversize = 0;
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) {
    cfg.rng_seed = static_cast<std::uint64_t>(seed);
    const AugmentResult r = spec_augment_traced(s, cfg);
    time_applied += r.time_mask.applied;
    freq_applied += r.freq_mask.applied;
    if (r.time_mask.length > 192 || r.freq_mask.length > 48) {
      ++oversize;
    }
  }
  AugmentConfig off;
  off.apply_probability = 0.0;
  bool identity = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    off.rng_seed = seed;
    identity = identity && spec_augment(s, off).values == s.values;
  }
  const double time_rate = static_cast<double>(time_applied) / trials;
  const double freq_rate = static_cast<double>(freq_applied) / trials;
  std::ostringstream ss;
  ss << "time-mask rate " << time_rate << ", freq-mask rate " << freq_rate << ", " << oversize
     << " oversize masks, p=0 identity " << (identity ? "yes" : "no");
  return {std::abs(time_rate - 0.4) <= 0.02 && oversize == 0 && identity, ss.str()};
}

// ------------------------------------------------------------------ 8

Outcome alignment() {
  Manifest manifest = make_toy_dataset(scratch_dir("align"), 21, 120);
  // The last 20 items are held out: validation only, then probed.
  for (std::size_t i = 100; i < manifest.entries.size(); ++i) {
    manifest.entries[i].split = "eval";
  }
  TrainConfig c = toy_train_config();
  c.batch_size = 16;
  c.initial_lr = 5e-3;
  c.max_epochs = 20;
  c.validation_split = "eval";
  const TrainResult result = train(c, manifest);
  const TrainedModel trained{result.final_model, result.vocab};
  const AlignmentScore held_out = alignment_probe(trained, manifest, "eval");
  const AlignmentScore seen = alignment_probe(trained, manifest, "dev");
  std::ostringstream ss;
  ss << "held-out " << held_out.aligned << " / " << held_out.event_tokens << " event tokens ("
     << held_out.rate() << "), training items " << seen.rate();
  return {held_out.event_tokens > 0 && held_out.rate() >= 0.8, ss.str()};
}

// ------------------------------------------------------------------ 9

Outcome clotho_shaped_manifest() {
  const fs::path dir = scratch_dir("clotho");
  fs::create_directories(dir / "embeddings");
  std::mt19937_64 rng(99);
  const std::vector<std::string> phrases = {
      "A dog barks loudly while cars pass by on a wet road.",
      "Rain falls steadily on a tin roof as thunder rumbles.",
      "Birds chirp in the distance and leaves rustle in the wind.",
      "A door creaks open and footsteps walk across a wooden floor.",
      "People are talking in a busy room, and dishes clatter."};
  std::ostringstream jsonl;
  int index = 0;
  for (const char* split : {"dev", "val", "eval"}) {
    for (int i = 0; i < 3; ++i, ++index) {
      const std::string file = "clip_" + std::to_string(index) + ".aace";
      save_embedding_file(dir / "embeddings" / file,
                          random_matrix(10 + index % 5, kYamnetDim, rng, 0.1));
      jsonl << R"({"id": "clip_)" << index << R"(.wav", "path": "embeddings/)" << file
            << R"(", "split": ")" << split << R"(", "captions": [)";
      for (int c = 0; c < 5; ++c) {
        jsonl << (c ? ", " : "") << '"' << phrases[(index + c) % phrases.size()] << '"';
      }
      jsonl << "]}\n";
    }
  }
  {
    std::ofstream(dir / "manifest.jsonl") << jsonl.str();
  }
  try {
    const Manifest manifest = load_manifest(dir / "manifest.jsonl");
    TrainConfig c;
    c.batch_size = 5;
    c.max_epochs = 1;
    c.encoder_units = 8;
    c.attention_dim = 8;
    c.decoder_units = 8;
    c.embedding_dim = 8;
    c.min_count = 1;
    const TrainResult result = train(c, manifest);
    const TrainedModel trained{result.best_model, result.vocab};
    save_trained(dir / "model.aacm", trained.model, trained.vocab);
    const EvaluationResult eval = evaluate(load_trained(dir / "model.aacm"), manifest, "eval");
    std::ostringstream ss;
    ss << manifest.entries.size() << " entries over dev/val/eval, input dim "
       << trained.model.config.input_dim << ", eval BLEU-1 " << eval.report.bleu_1
       << " (not a reproduction target)";
    return {eval.captions.size() == 3 && std::isfinite(eval.report.cider), ss.str()};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gradient check", gradient_check},
      {"2 attention invariants", attention_invariants},
      {"3 beam search oracle", beam_oracle},
      {"4 metric oracles", metric_oracles},
      {"5 toy overfit", overfit},
      {"6 lr schedule", lr_schedule},
      {"7 specaugment statistics", spec_augment_statistics},
      {"8 attention alignment probe", alignment},
      {"9 clotho-shaped manifest", clotho_shaped_manifest},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
