// Command-line front end: make-toy, vocab-build, train, evaluate, caption, attn-export.
//
// Exit codes: 0 success, 2 bad configuration or arguments, 3 bad input data,
// 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "aac/errors.hpp"
#include "aac/pipeline.hpp"

namespace fs = std::filesystem;
using namespace aac;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

EmbeddingMatrix read_input(const fs::path& path) {
  ManifestEntry e;
  e.path = path;
  return load_input(e);
}

void print_report(const MetricReport& r) {
  std::cout << std::fixed << std::setprecision(1) << "B-1 " << 100 * r.bleu_1 << "  B-2 "
            << 100 * r.bleu_2 << "  B-3 " << 100 * r.bleu_3 << "  B-4 " << 100 * r.bleu_4
            << "  ROUGE-L " << 100 * r.rouge_l << "  CIDEr " << 100 * r.cider << "  METEOR "
            << 100 * r.meteor << '\n';
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automated audio captioning: training, decoding and evaluation"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  // make-toy
  auto* toy = app.add_subcommand("make-toy", "Write a synthetic event-sequence dataset");
  fs::path toy_dir;
  std::size_t toy_items = 8;
  ToyOptions toy_options;
  toy->add_option("--out", toy_dir, "Output directory")->required();
  toy->add_option("--items", toy_items, "Number of items")->capture_default_str();
  toy->add_option("--dim", toy_options.dim, "Embedding dimension")->capture_default_str();
  toy->add_option("--noise", toy_options.noise, "Gaussian noise scale")->capture_default_str();
  toy->add_option("--split", toy_options.split, "Split assigned to every item")
      ->capture_default_str();
  toy->add_option("--seed", seed, "Random seed")->capture_default_str();

  // vocab-build
  auto* vocab_cmd = app.add_subcommand("vocab-build", "Build a vocabulary from a manifest");
  fs::path vocab_manifest;
  fs::path vocab_out;
  std::size_t vocab_min_count = kDefaultMinCount;
  bool vocab_all = false;
  vocab_cmd->add_option("--manifest", vocab_manifest, "Manifest (JSON Lines)")->required();
  vocab_cmd->add_option("--out", vocab_out, "Vocabulary file")->required();
  vocab_cmd->add_option("--min-count", vocab_min_count, "Minimum word count")
      ->capture_default_str();
  vocab_cmd->add_flag("--all-splits", vocab_all, "Count captions of every split, not just dev");
  vocab_cmd->add_option("--seed", seed, "Random seed (unused; accepted for uniformity)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a captioning model");
  fs::path train_manifest;
  TrainConfig cfg;
  bool no_augment = false;
  train_cmd->add_option("--manifest", train_manifest, "Manifest (JSON Lines)")->required();
  train_cmd->add_option("--out", cfg.checkpoint_path, "Checkpoint of the best epoch")->required();
  train_cmd->add_option("--log", cfg.log_path, "Per-epoch TSV log");
  train_cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", cfg.initial_lr, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--patience", cfg.plateau_patience, "Stale epochs before the lr drops")
      ->capture_default_str();
  train_cmd->add_option("--lr-factor", cfg.lr_factor)->capture_default_str();
  train_cmd->add_option("--epochs", cfg.max_epochs)->capture_default_str();
  train_cmd->add_option("--encoder-units", cfg.encoder_units, "Units per direction")
      ->capture_default_str();
  train_cmd->add_option("--attention-dim", cfg.attention_dim)->capture_default_str();
  train_cmd->add_option("--decoder-units", cfg.decoder_units)->capture_default_str();
  train_cmd->add_option("--embedding-dim", cfg.embedding_dim)->capture_default_str();
  train_cmd->add_option("--min-count", cfg.min_count)->capture_default_str();
  train_cmd->add_flag("--all-splits-vocab", cfg.vocab_all_splits);
  train_cmd->add_option("--max-tokens", cfg.max_tokens)->capture_default_str();
  train_cmd->add_option("--val-split", cfg.validation_split)->capture_default_str();
  train_cmd->add_option("--clip-norm", cfg.clip_norm, "Global gradient-norm clip, 0 = off")
      ->capture_default_str();
  train_cmd->add_flag("--no-augment", no_augment, "Disable SpecAugment on WAV inputs");
  train_cmd->add_option("--time-mask", cfg.augment.max_time_mask)->capture_default_str();
  train_cmd->add_option("--freq-mask", cfg.augment.max_freq_mask)->capture_default_str();
  train_cmd->add_option("--augment-prob", cfg.augment.apply_probability)->capture_default_str();
  train_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();

  // Shared decoding options.
  fs::path model_path;
  BeamOptions beam;
  bool no_norm = false;
  const auto add_decoding = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_path, "Checkpoint")->required();
    cmd->add_option("--beam", beam.beam, "Beam width")->capture_default_str();
    cmd->add_option("--max-tokens", beam.max_tokens)->capture_default_str();
    cmd->add_flag("--no-length-norm", no_norm, "Rank finished beams by raw log-probability");
    cmd->add_option("--seed", seed, "Random seed (decoding is deterministic)");
  };

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Decode a split and score it");
  fs::path eval_manifest;
  std::string eval_split = "eval";
  fs::path report_path;
  fs::path captions_path;
  fs::path synonyms_path;
  bool cider_d = false;
  add_decoding(eval_cmd);
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--split", eval_split)->capture_default_str();
  eval_cmd->add_option("--report", report_path, "Write raw scores as JSON");
  eval_cmd->add_option("--captions", captions_path, "Write id<TAB>caption lines");
  eval_cmd->add_option("--synonyms", synonyms_path, "word<TAB>synonym table for METEOR");
  eval_cmd->add_flag("--cider-d", cider_d, "Use the CIDEr-D variant");

  // caption
  auto* caption_cmd = app.add_subcommand("caption", "Caption one embedding or WAV file");
  fs::path input_path;
  bool greedy = false;
  add_decoding(caption_cmd);
  caption_cmd->add_option("--input", input_path, ".aace embeddings or .wav audio")->required();
  caption_cmd->add_flag("--greedy", greedy, "Greedy decoding instead of beam search");

  // attn-export
  auto* attn_cmd = app.add_subcommand("attn-export", "Export per-token attention weights");
  fs::path attn_model;
  fs::path attn_input;
  fs::path attn_out;
  std::string attn_id;
  std::size_t attn_max_tokens = kMaxTokens;
  attn_cmd->add_option("--model", attn_model)->required();
  attn_cmd->add_option("--input", attn_input)->required();
  attn_cmd->add_option("--out", attn_out, "JSON trace")->required();
  attn_cmd->add_option("--id", attn_id, "Item id stored in the trace");
  attn_cmd->add_option("--max-tokens", attn_max_tokens)->capture_default_str();
  attn_cmd->add_option("--seed", seed, "Random seed (decoding is deterministic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    beam.length_normalize = !no_norm;
    if (toy->parsed()) {
      const Manifest m = make_toy_dataset(toy_dir, seed, toy_items, toy_options);
      std::cout << "wrote " << m.entries.size() << " items to "
                << (toy_dir / "manifest.jsonl").string() << '\n';
    } else if (vocab_cmd->parsed()) {
      const Manifest m = load_manifest(vocab_manifest);
      std::vector<std::string> corpus;
      for (const auto& e : m.entries) {
        if (vocab_all || e.split == "dev") {
          corpus.insert(corpus.end(), e.captions.begin(), e.captions.end());
        }
      }
      const Vocabulary v = build_vocab(corpus, vocab_min_count);
      v.save(vocab_out);
      std::cout << v.size() << " tokens written to " << vocab_out.string() << '\n';
    } else if (train_cmd->parsed()) {
      cfg.seed = seed;
      cfg.augment.rng_seed = seed;
      cfg.augment_enabled = !no_augment;
      cfg.validate();
      const Manifest m = load_manifest(train_manifest);
      TrainHooks hooks;
      std::cout << format_log_header() << '\n';
      hooks.on_epoch = [](const EpochLog& e) { std::cout << format_log_line(e) << std::endl; };
      const TrainResult r = train(cfg, m, hooks);
      std::cout << "best epoch " << r.best_epoch << ", checkpoint " << cfg.checkpoint_path.string()
                << '\n';
    } else if (eval_cmd->parsed()) {
      const TrainedModel trained = load_trained(model_path);
      const Manifest m = load_manifest(eval_manifest);
      SynonymTable synonyms;
      EvalOptions options;
      options.cider.cider_d = cider_d;
      if (!synonyms_path.empty()) {
        synonyms = SynonymTable::load(synonyms_path);
        options.synonyms = &synonyms;
      }
      const EvaluationResult r = evaluate(trained, m, eval_split, beam, options);
      print_report(r.report);
      if (!report_path.empty()) {
        std::ofstream(report_path) << report_to_json(r.report) << '\n';
      }
      if (!captions_path.empty()) {
        std::ofstream out(captions_path);
        for (const auto& [id, text] : r.captions) {
          out << id << '\t' << text << '\n';
        }
      }
    } else if (caption_cmd->parsed()) {
      const TrainedModel trained = load_trained(model_path);
      CaptionOptions options;
      options.mode = greedy ? DecodeMode::greedy : DecodeMode::beam;
      options.beam = beam;
      std::cout << caption(trained, read_input(input_path), options) << '\n';
    } else if (attn_cmd->parsed()) {
      const TrainedModel trained = load_trained(attn_model);
      const std::string id = attn_id.empty() ? attn_input.stem().string() : attn_id;
      const AttentionTrace t = trace_attention(trained, read_input(attn_input), id, attn_max_tokens);
      write_attention_trace(attn_out, t);
      std::cout << t.tokens.size() << " tokens over " << t.frames << " frames written to "
                << attn_out.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
