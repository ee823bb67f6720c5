#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "aac/errors.hpp"
#include "aac/pipeline.hpp"
#include "doctest.h"

using namespace aac;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aac_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.initial_lr = 1e-2;
  c.max_epochs = 3;
  c.seed = 3;
  c.encoder_units = 8;
  c.attention_dim = 8;
  c.decoder_units = 16;
  c.embedding_dim = 8;
  c.min_count = 1;
  c.validation_split = "dev";
  c.clip_norm = 5.0;
  return c;
}

// Memorizes an 8-item toy set once; shared by the tests below.
struct Overfit {
  Manifest manifest;
  TrainedModel trained;
};

const Overfit& overfit() {
  static const Overfit o = [] {
    Overfit r;
    r.manifest = make_toy_dataset(fresh_dir("overfit"), 5, 8);
    TrainConfig c = small_config();
    c.encoder_units = 16;
    c.attention_dim = 16;
    c.decoder_units = 32;
    c.embedding_dim = 16;
    c.max_epochs = 150;
    c.plateau_patience = 1000;
    const TrainResult t = train(c, r.manifest);
    r.trained = {t.final_model, t.vocab};
    return r;
  }();
  return o;
}

} // namespace

TEST_CASE("toy dataset construction") {
  const fs::path dir = fresh_dir("toy");
  const Manifest a = make_toy_dataset(dir, 42, 8);
  REQUIRE(a.entries.size() == 8);
  std::set<std::string> event_words;
  for (const auto& e : a.entries) {
    CHECK(e.captions.size() == 5);
    CHECK(fs::exists(e.path));
    CHECK(e.split == "dev");
    CHECK(load_input(e).rows() == e.alignment.size());
    for (const auto& [word, segment] : e.alignment) event_words.insert(word);
  }
  CHECK(toy_event_words().size() >= 6);
  CHECK(event_words.size() >= 2);

  const Manifest reloaded = load_manifest(dir / "manifest.jsonl");
  REQUIRE(reloaded.entries.size() == 8);
  CHECK(reloaded.entries[3].captions == a.entries[3].captions);
  CHECK(reloaded.entries[3].alignment == a.entries[3].alignment);
  CHECK(load_input(reloaded.entries[3]) == load_input(a.entries[3]));

  const Manifest b = make_toy_dataset(fresh_dir("toy_again"), 42, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(b.entries[i].captions == a.entries[i].captions);
    CHECK(load_input(b.entries[i]) == load_input(a.entries[i]));
  }
  CHECK_THROWS_AS(make_toy_dataset(dir, 1, 1), ConfigError);
}

TEST_CASE("manifest validation") {
  const fs::path dir = fresh_dir("manifest");
  save_embedding_file(dir / "x.aace", Matrix(2, 3, 0.5));
  const auto write = [&](const std::string& body) {
    std::ofstream(dir / "m.jsonl") << body;
    return dir / "m.jsonl";
  };
  CHECK(load_manifest(write(R"({"id":"x","path":"x.aace","captions":["a","b"],"split":"eval"})"
                            "\n\n"))
            .entries.size() == 1);
  CHECK_THROWS_AS(load_manifest(write(R"({"id":"x","path":"x.aace","captions":["a"],"split":"test"})")),
                  FormatError);
  CHECK_THROWS_AS(load_manifest(write(R"({"id":"x","path":"y.aace","captions":["a"],"split":"dev"})")),
                  DataError);
  CHECK_THROWS_AS(load_manifest(write(R"({"id":"x","path":"x.aace","captions":[],"split":"dev"})")),
                  FormatError);
  CHECK_THROWS_AS(load_manifest(write("{not json")), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), DataError);
}

TEST_CASE("plateau scheduler") {
  SUBCASE("stagnant trace") {
    PlateauScheduler s(1e-4, 3, 0.5);
    std::vector<double> lrs;
    for (int epoch = 0; epoch < 8; ++epoch) {
      lrs.push_back(s.lr());
      s.observe(0.2);
    }
    CHECK(lrs == std::vector<double>{1e-4, 1e-4, 1e-4, 1e-4, 5e-5, 5e-5, 5e-5, 2.5e-5});
  }
  SUBCASE("improvements reset the counter") {
    PlateauScheduler s(1.0, 3, 0.5);
    CHECK(s.observe(0.1));
    CHECK_FALSE(s.observe(0.1));
    CHECK_FALSE(s.observe(0.1 + 5e-7));  // within min_delta
    CHECK(s.observe(0.2));
    s.observe(0.2);
    s.observe(0.2);
    CHECK(s.lr() == 1.0);
    s.observe(0.2);
    CHECK(s.lr() == 0.5);
    CHECK(s.best() == 0.2);
  }
  CHECK_THROWS_AS(PlateauScheduler(1.0, 0, 0.5), ConfigError);
}

TEST_CASE("training log lines are tab-separated") {
  const std::string line = format_log_line({4, 0.25, 0.1, 0.5, 5e-5});
  std::istringstream in(line);
  std::size_t epoch = 0;
  double loss = 0, b4 = 0, b1 = 0, lr = 0;
  in >> epoch >> loss >> b4 >> b1 >> lr;
  CHECK(epoch == 4);
  CHECK(loss == 0.25);
  CHECK(lr == 5e-5);
  CHECK(std::count(line.begin(), line.end(), '\t') == 4);
  CHECK(format_log_header() == "epoch\tloss\tval_bleu4\tval_bleu1\tlr");
}

TEST_CASE("batch loss equals the mean of per-item losses") {
  const Manifest m = make_toy_dataset(fresh_dir("batch"), 8, 4, {.max_events = 4});
  ModelConfig cfg;
  cfg.input_dim = 16;
  cfg.encoder_units = 4;
  cfg.attention_dim = 4;
  cfg.decoder_units = 4;
  cfg.embedding_dim = 4;
  std::vector<std::string> corpus;
  for (const auto& e : m.entries) corpus.push_back(e.captions[0]);
  const Vocabulary v = build_vocab(corpus, 1);
  cfg.vocab_size = v.size();
  CaptionModel model = CaptionModel::initialize(cfg, 2);
  std::vector<Matrix> inputs;
  std::vector<TokenSequence> targets;
  for (const auto& e : m.entries) {
    inputs.push_back(load_input(e));
    targets.push_back(encode(e.captions[0], v));
  }
  model.zero_grad();
  const double batch = accumulate_batch(model, inputs, targets);
  const std::vector<Matrix> batch_grads = [&] {
    std::vector<Matrix> g;
    for (const ParameterGroup* p : model.parameters()) g.push_back(p->gradient);
    return g;
  }();

  double mean = 0.0;
  model.zero_grad();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ForwardPass pass = forward_teacher_forced(model, inputs[i], inputs[i].rows(), targets[i]);
    mean += pass.loss / static_cast<double>(inputs.size());
    backward(model, pass, 1.0 / static_cast<double>(inputs.size()));
  }
  CHECK(batch == doctest::Approx(mean).epsilon(1e-12));
  const auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < batch_grads[k].size(); ++i) {
      CHECK(batch_grads[k].values()[i] ==
            doctest::Approx(params[k]->gradient.values()[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("training is reproducible") {
  const Manifest m = make_toy_dataset(fresh_dir("repro"), 4, 6);
  const TrainResult a = train(small_config(), m);
  const TrainResult b = train(small_config(), m);
  REQUIRE(a.log.size() == 3);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
    CHECK(a.log[i].val_bleu4 == b.log[i].val_bleu4);
  }
  CHECK(a.final_model.parameters()[3]->value == b.final_model.parameters()[3]->value);
}

TEST_CASE("train writes its log and best checkpoint") {
  const fs::path dir = fresh_dir("artifacts");
  const Manifest m = make_toy_dataset(dir, 4, 6);
  TrainConfig c = small_config();
  c.checkpoint_path = dir / "best.aacm";
  c.log_path = dir / "log.tsv";
  const TrainResult r = train(c, m);
  std::ifstream log(c.log_path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 1 + c.max_epochs);
  const TrainedModel loaded = load_trained(c.checkpoint_path);
  CHECK(loaded.vocab == r.vocab);
  CHECK(loaded.model.parameters()[0]->value == r.best_model.parameters()[0]->value);
}

TEST_CASE("train rejects bad configuration and data") {
  const Manifest m = make_toy_dataset(fresh_dir("bad"), 4, 4);
  TrainConfig c = small_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(train(c, m), ConfigError);
  c = small_config();
  c.validation_split = "val";
  CHECK_THROWS_AS(train(c, m), DataError);
}

TEST_CASE("untrained model scores near zero BLEU-4") {
  const Manifest m = make_toy_dataset(fresh_dir("untrained"), 6, 8);
  ModelConfig cfg;
  cfg.input_dim = 16;
  cfg.encoder_units = 8;
  cfg.attention_dim = 8;
  cfg.decoder_units = 8;
  cfg.embedding_dim = 8;
  std::vector<std::string> corpus;
  for (const auto& e : m.entries) corpus.push_back(e.captions[0]);
  const Vocabulary v = build_vocab(corpus, 1);
  cfg.vocab_size = v.size();
  const TrainedModel random{CaptionModel::initialize(cfg, 1), v};
  const EvaluationResult r = evaluate(random, m, "dev");
  CHECK(r.report.bleu_4 < 0.05);
  CHECK(evaluate(random, m, "dev").report == r.report);
  CHECK_THROWS_AS(evaluate(random, m, "eval"), DataError);
}

TEST_CASE("overfit toy model reproduces its training captions") {
  const Overfit& o = overfit();
  const EvaluationResult r = evaluate(o.trained, o.manifest, "dev");
  CHECK(r.report.bleu_1 >= 0.95);
  for (const auto& e : o.manifest.entries) {
    CHECK(caption(o.trained, load_input(e)) == e.captions[0]);
  }
}

TEST_CASE("checkpoint round trip preserves evaluation") {
  const Overfit& o = overfit();
  const fs::path path = fresh_dir("roundtrip") / "model.aacm";
  save_trained(path, o.trained.model, o.trained.vocab);
  const TrainedModel loaded = load_trained(path);
  CHECK(evaluate(loaded, o.manifest, "dev").report ==
        evaluate(o.trained, o.manifest, "dev").report);
}

TEST_CASE("caption modes") {
  const Overfit& o = overfit();
  for (const auto& e : o.manifest.entries) {
    const Matrix input = load_input(e);
    CaptionOptions beam_one;
    beam_one.beam = {1, kMaxTokens, false};
    CaptionOptions greedy;
    greedy.mode = DecodeMode::greedy;
    CHECK(caption(o.trained, input, beam_one) == caption(o.trained, input, greedy));
    CHECK(caption(o.trained, input) == caption(o.trained, input));
  }
}

TEST_CASE("attention export") {
  const Overfit& o = overfit();
  const ManifestEntry& e = o.manifest.entries[2];
  const AttentionTrace t = trace_attention(o.trained, load_input(e), e.id);
  const std::string text = caption(o.trained, load_input(e), {DecodeMode::greedy, {}});
  CHECK(t.tokens.size() == normalize_caption(text).size());
  CHECK(t.frames == load_input(e).rows());
  for (const Vector& row : t.weights) {
    double sum = 0.0;
    for (double w : row) sum += w;
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(row.size() == t.frames);
  }
  const fs::path path = fresh_dir("trace") / "trace.json";
  write_attention_trace(path, t);
  const AttentionTrace r = read_attention_trace(path);
  CHECK(r.id == t.id);
  CHECK(r.tokens == t.tokens);
  CHECK(r.weights == t.weights);
}

TEST_CASE("waveform inputs train through the spectrogram path") {
  const fs::path dir = fresh_dir("wav");
  for (int i = 0; i < 2; ++i) {
    Waveform w;
    w.samples.resize(8000);
    for (std::size_t n = 0; n < w.samples.size(); ++n) {
      w.samples[n] = 0.3 * std::sin(2 * std::numbers::pi * (300.0 + 400.0 * i) *
                                    static_cast<double>(n) / w.sample_rate);
    }
    write_wav(dir / ("clip" + std::to_string(i) + ".wav"), w);
  }
  std::ofstream(dir / "m.jsonl")
      << R"({"id":"c0","path":"clip0.wav","captions":["low hum","low hum"],"split":"dev"})" << '\n'
      << R"({"id":"c1","path":"clip1.wav","captions":["high tone","high tone"],"split":"dev"})"
      << '\n';
  const Manifest m = load_manifest(dir / "m.jsonl");
  CHECK(m.entries[0].is_waveform());
  const Matrix features = load_input(m.entries[0]);
  CHECK(features.cols() == 64);
  TrainConfig c = small_config();
  c.max_epochs = 2;
  c.augment.max_time_mask = 10;
  const TrainResult r = train(c, m);
  CHECK(r.final_model.config.input_dim == 64);
  CHECK(std::isfinite(r.log.back().mean_loss));
}
