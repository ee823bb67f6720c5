#include "aac/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "aac/errors.hpp"
#include "json.hpp"

namespace aac {

namespace fs = std::filesystem;
using nlohmann::json;

// ----------------------------------------------------------------- manifest

bool ManifestEntry::is_waveform() const {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".wav";
}

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) {
      out.push_back(&e);
    }
  }
  return out;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open manifest " + path.string());
  }
  const fs::path base = path.parent_path();
  Manifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ManifestEntry e;
    try {
      const json j = json::parse(line);
      e.id = j.at("id").get<std::string>();
      e.path = j.at("path").get<std::string>();
      e.captions = j.at("captions").get<std::vector<std::string>>();
      e.split = j.at("split").get<std::string>();
      if (j.contains("alignment")) {
        e.alignment = j.at("alignment").get<std::map<std::string, std::size_t>>();
      }
    } catch (const json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
    if (e.split != "dev" && e.split != "val" && e.split != "eval") {
      throw FormatError(where + ": split must be dev, val or eval, got '" + e.split + "'");
    }
    if (e.captions.empty()) {
      throw FormatError(where + ": entry '" + e.id + "' has no captions");
    }
    if (e.captions.size() != kCaptionsPerItem) {
      std::cerr << "warning: " << where << ": entry '" << e.id << "' has " << e.captions.size()
                << " captions, expected " << kCaptionsPerItem << '\n';
    }
    if (e.path.is_relative()) {
      e.path = base / e.path;
    }
    if (!fs::exists(e.path)) {
      throw DataError(where + ": missing input file " + e.path.string());
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write manifest " + path.string());
  }
  const fs::path base = fs::absolute(path).parent_path();
  for (const auto& e : manifest.entries) {
    fs::path p = e.path;
    if (p.is_absolute()) {
      const fs::path rel = p.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") {
        p = rel;
      }
    }
    json j = {{"id", e.id}, {"path", p.generic_string()}, {"captions", e.captions},
              {"split", e.split}};
    if (!e.alignment.empty()) {
      j["alignment"] = e.alignment;
    }
    out << j.dump() << '\n';
  }
}

EmbeddingMatrix load_input(const ManifestEntry& entry, const FrontEndConfig& front_end) {
  if (entry.is_waveform()) {
    return compute_log_mel(read_wav(entry.path), front_end).values;
  }
  return load_embedding_file(entry.path);
}

// ------------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (batch_size == 0) {
    throw ConfigError("batch size must be positive");
  }
  if (!(initial_lr > 0.0)) {
    throw ConfigError("initial learning rate must be positive");
  }
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) {
    throw ConfigError("lr factor must lie in (0, 1)");
  }
  if (plateau_patience < 1) {
    throw ConfigError("plateau patience must be at least 1");
  }
  if (max_tokens < 2) {
    throw ConfigError("max tokens must be at least 2");
  }
  if (!(augment.apply_probability >= 0.0 && augment.apply_probability <= 1.0)) {
    throw ConfigError("augmentation probability must lie in [0, 1]");
  }
  if (clip_norm < 0.0) {
    throw ConfigError("clip norm must be non-negative");
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, std::size_t patience, double factor,
                                   double min_delta)
    : lr_(initial_lr), patience_(patience), factor_(factor), min_delta_(min_delta), best_(0.0) {
  if (patience == 0 || !(factor > 0.0 && factor < 1.0)) {
    throw ConfigError("plateau scheduler: need patience >= 1 and factor in (0, 1)");
  }
}

bool PlateauScheduler::observe(double score) {
  if (!has_best_ || score > best_ + min_delta_) {
    best_ = has_best_ ? std::max(best_, score) : score;
    has_best_ = true;
    stale_ = 0;
    return true;
  }
  if (++stale_ >= patience_) {
    lr_ *= factor_;
    stale_ = 0;
  }
  return false;
}

std::string format_log_header() { return "epoch\tloss\tval_bleu4\tval_bleu1\tlr"; }

std::string format_log_line(const EpochLog& e) {
  std::ostringstream ss;
  ss << e.epoch << '\t' << std::setprecision(17) << e.mean_loss << '\t' << e.val_bleu4 << '\t'
     << e.val_bleu1 << '\t' << e.lr;
  return ss.str();
}

// ----------------------------------------------------------------- training

namespace {

Tokens hypothesis_words(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  Tokens words;
  for (TokenId id : ids) {
    if (id == kEnd) {
      break;
    }
    if (id == kStart || id == kPad) {
      continue;
    }
    words.push_back(vocab.word(id));
  }
  return words;
}

std::vector<Tokens> reference_words(const ManifestEntry& e) {
  std::vector<Tokens> refs;
  for (const auto& c : e.captions) {
    refs.push_back(normalize_caption(c));
  }
  return refs;
}

std::string metadata_for(const Vocabulary& vocab) {
  return json{{"vocab", vocab.tokens()}, {"min_count", vocab.min_count()}}.dump();
}

double global_grad_norm(CaptionModel& model) {
  double sq = 0.0;
  for (const ParameterGroup* g : model.parameters()) {
    for (double v : g->gradient.values()) {
      sq += v * v;
    }
  }
  return std::sqrt(sq);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace

double accumulate_batch(CaptionModel& model, const std::vector<Matrix>& inputs,
                        const std::vector<TokenSequence>& targets) {
  if (inputs.size() != targets.size()) {
    throw ContractViolation("accumulate_batch: inputs and targets differ in count");
  }
  const PaddedBatch batch = bucket_pad(inputs);
  const double scale = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ForwardPass pass =
        forward_teacher_forced(model, batch.items[i], batch.lengths[i], targets[i]);
    loss += pass.loss * scale;
    backward(model, pass, scale);
  }
  return loss;
}

TrainResult train(const TrainConfig& config, const Manifest& manifest, const TrainHooks& hooks) {
  config.validate();
  const auto dev = manifest.split("dev");
  const auto val = manifest.split(config.validation_split);
  if (dev.empty()) {
    throw DataError("train: manifest has no dev items");
  }
  if (val.empty()) {
    throw DataError("train: manifest has no '" + config.validation_split + "' items");
  }

  std::vector<std::string> corpus;
  for (const auto& e : manifest.entries) {
    if (config.vocab_all_splits || e.split == "dev") {
      corpus.insert(corpus.end(), e.captions.begin(), e.captions.end());
    }
  }
  TrainResult result;
  result.vocab = build_vocab(corpus, config.min_count);

  std::vector<Matrix> dev_inputs;
  for (const ManifestEntry* e : dev) {
    dev_inputs.push_back(load_input(*e));
  }
  std::vector<Matrix> val_inputs;
  for (const ManifestEntry* e : val) {
    val_inputs.push_back(load_input(*e));
  }
  const std::size_t input_dim = dev_inputs.front().cols();
  for (const auto* inputs : {&dev_inputs, &val_inputs}) {
    for (const Matrix& m : *inputs) {
      if (m.cols() != input_dim) {
        throw DimensionError("train: inputs mix feature dims " + std::to_string(input_dim) +
                             " and " + std::to_string(m.cols()));
      }
    }
  }

  struct Example {
    std::size_t item;
    TokenSequence target;
  };
  std::vector<Example> examples;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    for (const auto& c : dev[i]->captions) {
      examples.push_back({i, encode(c, result.vocab, config.max_tokens)});
    }
  }

  ModelConfig mc;
  mc.input_dim = input_dim;
  mc.encoder_units = config.encoder_units;
  mc.attention_dim = config.attention_dim;
  mc.decoder_units = config.decoder_units;
  mc.embedding_dim = config.embedding_dim;
  mc.vocab_size = result.vocab.size();
  CaptionModel model = CaptionModel::initialize(mc, config.seed);
  result.best_model = model;

  std::ofstream log_file;
  if (!config.log_path.empty()) {
    log_file.open(config.log_path);
    if (!log_file) {
      throw DataError("cannot write training log " + config.log_path.string());
    }
    log_file << format_log_header() << '\n';
  }

  PlateauScheduler scheduler(config.initial_lr, config.plateau_patience, config.lr_factor);
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 1));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  bool have_best = false;
  double best_bleu = 0.0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = scheduler.lr();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<Matrix> inputs;
      std::vector<TokenSequence> targets;
      for (std::size_t k = start; k < stop; ++k) {
        const Example& ex = examples[order[k]];
        Matrix input = dev_inputs[ex.item];
        if (config.augment_enabled && dev[ex.item]->is_waveform()) {
          AugmentConfig aug = config.augment;
          aug.rng_seed = mix_seed(config.augment.rng_seed, epoch * examples.size() + order[k]);
          Spectrogram s{std::move(input), 0.0};
          input = spec_augment(s, aug).values;
        }
        inputs.push_back(std::move(input));
        targets.push_back(ex.target);
      }

      model.zero_grad();
      double batch_loss = 0.0;
      try {
        batch_loss = accumulate_batch(model, inputs, targets);
      } catch (const NumericError& err) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batches) + ": " + err.what());
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batches));
      }
      if (config.clip_norm > 0.0) {
        const double norm = global_grad_norm(model);
        if (norm > config.clip_norm) {
          const double s = config.clip_norm / norm;
          for (ParameterGroup* g : model.parameters()) {
            for (double& v : g->gradient.values()) {
              v *= s;
            }
          }
        }
      }
      for (ParameterGroup* g : model.parameters()) {
        adam_step(*g, lr);
      }
      loss_sum += batch_loss;
      ++batches;
    }

    std::vector<EvalInstance> val_corpus;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const ModelStepper stepper(model, val_inputs[i]);
      const Hypothesis h = greedy_decode(stepper, config.max_tokens);
      val_corpus.push_back({hypothesis_words(h.tokens, result.vocab), reference_words(*val[i])});
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(batches);
    entry.val_bleu4 = bleu(val_corpus, 4);
    entry.val_bleu1 = bleu(val_corpus, 1);
    entry.lr = lr;

    const double score =
        hooks.validation_score ? hooks.validation_score(epoch, entry.val_bleu4) : entry.val_bleu4;
    scheduler.observe(score);
    if (!have_best || score > best_bleu + 1e-6) {
      have_best = true;
      best_bleu = score;
      result.best_model = model;
      result.best_epoch = epoch;
      if (!config.checkpoint_path.empty()) {
        save_checkpoint(config.checkpoint_path, model, metadata_for(result.vocab));
      }
    }

    result.log.push_back(entry);
    if (log_file.is_open()) {
      log_file << format_log_line(entry) << '\n' << std::flush;
    }
    if (hooks.on_epoch) {
      hooks.on_epoch(entry);
    }
  }
  result.final_model = std::move(model);
  return result;
}

// --------------------------------------------------------------- inference

void save_trained(const fs::path& path, const CaptionModel& model, const Vocabulary& vocab) {
  save_checkpoint(path, model, metadata_for(vocab));
}

TrainedModel load_trained(const fs::path& path) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  Vocabulary vocab;
  try {
    const json meta = json::parse(loaded.metadata_json);
    vocab = Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>(),
                                    meta.value("min_count", std::size_t{1}));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": checkpoint metadata lacks a vocabulary: " + e.what());
  }
  if (vocab.size() != loaded.model.config.vocab_size) {
    throw FormatError(path.string() + ": vocabulary size does not match the model");
  }
  return {std::move(loaded.model), std::move(vocab)};
}

std::string caption(const TrainedModel& trained, const EmbeddingMatrix& m,
                    const CaptionOptions& options) {
  const ModelStepper stepper(trained.model, m);
  const Hypothesis h = options.mode == DecodeMode::greedy
                           ? greedy_decode(stepper, options.beam.max_tokens)
                           : beam_search(stepper, options.beam);
  return decode(h.tokens, trained.vocab);
}

EvaluationResult evaluate(const TrainedModel& trained, const Manifest& manifest,
                          const std::string& split, const BeamOptions& beam,
                          const EvalOptions& eval) {
  const auto items = manifest.split(split);
  if (items.empty()) {
    throw DataError("evaluate: manifest has no '" + split + "' items");
  }
  EvaluationResult result;
  std::vector<EvalInstance> corpus;
  for (const ManifestEntry* e : items) {
    const Matrix input = load_input(*e);
    const ModelStepper stepper(trained.model, input);
    const Hypothesis h = beam_search(stepper, beam);
    corpus.push_back({hypothesis_words(h.tokens, trained.vocab), reference_words(*e)});
    result.captions.emplace_back(e->id, decode(h.tokens, trained.vocab));
  }
  result.report = evaluate_corpus(corpus, eval);
  return result;
}

AttentionTrace trace_attention(const TrainedModel& trained, const EmbeddingMatrix& m,
                               const std::string& id, std::size_t max_tokens) {
  const ModelStepper stepper(trained.model, m);
  const Hypothesis h = greedy_decode(stepper, max_tokens);
  AttentionTrace trace;
  trace.id = id;
  trace.frames = m.rows();
  for (std::size_t k = 1; k < h.tokens.size(); ++k) {
    const TokenId t = h.tokens[k];
    if (t == kEnd) {
      break;
    }
    if (t == kStart || t == kPad) {
      continue;
    }
    trace.tokens.push_back(trained.vocab.word(t));
    trace.weights.push_back(h.attention[k - 1]);
  }
  return trace;
}

void write_attention_trace(const fs::path& path, const AttentionTrace& trace) {
  const json j = {{"id", trace.id},
                  {"tokens", trace.tokens},
                  {"frames", trace.frames},
                  {"weights", trace.weights}};
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write attention trace " + path.string());
  }
  out << j.dump(2) << '\n';
}

AttentionTrace read_attention_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open attention trace " + path.string());
  }
  try {
    const json j = json::parse(in);
    AttentionTrace t;
    t.id = j.at("id").get<std::string>();
    t.tokens = j.at("tokens").get<std::vector<std::string>>();
    t.frames = j.at("frames").get<std::size_t>();
    t.weights = j.at("weights").get<std::vector<Vector>>();
    return t;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

AlignmentScore alignment_probe(const TrainedModel& trained, const Manifest& manifest,
                               const std::string& split) {
  AlignmentScore score;
  for (const ManifestEntry* e : manifest.split(split)) {
    if (e->alignment.empty()) {
      continue;
    }
    const AttentionTrace trace = trace_attention(trained, load_input(*e), e->id);
    for (std::size_t k = 0; k < trace.tokens.size(); ++k) {
      const auto gold = e->alignment.find(trace.tokens[k]);
      if (gold == e->alignment.end()) {
        continue;
      }
      const Vector& w = trace.weights[k];
      const auto argmax = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
      ++score.event_tokens;
      if (argmax == gold->second) {
        ++score.aligned;
      }
    }
  }
  return score;
}

// ---------------------------------------------------------------- toy data

const std::vector<std::string>& toy_event_words() {
  static const std::vector<std::string> words = {"dog",  "bell", "rain",  "car",
                                                 "bird", "door", "siren", "water"};
  return words;
}

Manifest make_toy_dataset(const fs::path& dir, std::uint64_t seed, std::size_t n_items,
                          const ToyOptions& options) {
  if (n_items < 2) {
    throw ConfigError("make_toy_dataset: need at least 2 items");
  }
  const auto& events = toy_event_words();
  if (options.min_events < 1 || options.min_events > options.max_events ||
      options.max_events > events.size()) {
    throw ConfigError("make_toy_dataset: bad event count range");
  }
  if (options.dim == 0) {
    throw ConfigError("make_toy_dataset: embedding dim must be positive");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix patterns(events.size(), options.dim);
  for (double& v : patterns.values()) {
    v = gauss(rng);
  }

  fs::create_directories(dir / "emb");
  Manifest manifest;
  std::uniform_int_distribution<std::size_t> count_dist(options.min_events, options.max_events);
  for (std::size_t i = 0; i < n_items; ++i) {
    const std::size_t k = count_dist(rng);
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(k);

    ManifestEntry e;
    std::ostringstream id;
    id << "toy" << std::setw(4) << std::setfill('0') << i;
    e.id = id.str();
    e.split = options.split;
    e.path = fs::absolute(dir / "emb" / (e.id + ".aace"));

    Matrix m(k, options.dim);
    std::string caption;
    for (std::size_t s = 0; s < k; ++s) {
      const auto pattern = patterns.row(order[s]);
      for (std::size_t d = 0; d < options.dim; ++d) {
        m(s, d) = pattern[d] + options.noise * gauss(rng);
      }
      caption += (s == 0 ? "" : " then ") + events[order[s]];
      e.alignment[events[order[s]]] = s;
    }
    save_embedding_file(e.path, m);
    e.captions.assign(kCaptionsPerItem, caption);
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(dir / "manifest.jsonl", manifest);
  return manifest;
}

} // namespace aac
