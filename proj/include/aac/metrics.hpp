#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace aac {

using Tokens = std::vector<std::string>;

struct EvalInstance {
  Tokens candidate;
  std::vector<Tokens> references;
};

/// Raw scores; BLEU, ROUGE-L and METEOR lie in [0, 1]. CIDEr is not scaled by 10.
struct MetricReport {
  double bleu_1 = 0.0;
  double bleu_2 = 0.0;
  double bleu_3 = 0.0;
  double bleu_4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  double meteor = 0.0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Corpus-level BLEU-n: clipped n-gram counts summed over the corpus, uniform
/// geometric mean of orders 1..n, brevity penalty against the closest
/// reference length of each instance.
double bleu(const std::vector<EvalInstance>& corpus, int n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

inline constexpr double kRougeBeta = 1.2;

/// Best F-measure over references.
double rouge_l(const EvalInstance& instance, double beta = kRougeBeta);

struct CiderOptions {
  bool cider_d = false;  // clipped tf-idf and a gaussian length penalty
  double sigma = 6.0;
};

/// Mean over instances of the per-order average of tf-idf cosine
/// similarities, orders 1..4. Document frequencies come from the reference sets.
double cider(const std::vector<EvalInstance>& corpus, const CiderOptions& options = {});

/// Porter (1980) suffix-stripping stemmer.
std::string porter_stem(const std::string& word);

/// Symmetric word-pair table; file format is "word<TAB>synonym" per line.
class SynonymTable {
 public:
  void add(const std::string& a, const std::string& b);
  bool related(const std::string& a, const std::string& b) const;
  bool empty() const { return pairs_.empty(); }

  static SynonymTable load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, std::unordered_set<std::string>> pairs_;
};

/// Exact, then stem, then (optional) synonym unigram matching;
/// Fmean = 10PR / (R + 9P), penalty 0.5 (chunks / matches)^3. Best over references.
double meteor(const EvalInstance& instance, const SynonymTable* synonyms = nullptr);

struct EvalOptions {
  CiderOptions cider;
  const SynonymTable* synonyms = nullptr;
};

MetricReport evaluate_corpus(const std::vector<EvalInstance>& corpus,
                             const EvalOptions& options = {});

/// Tokenizes with normalize_caption and scores. Sizes must match.
MetricReport evaluate_corpus(const std::vector<std::string>& candidates,
                             const std::vector<std::vector<std::string>>& references,
                             const EvalOptions& options = {});

/// "bleu_1 0.5000"-style lines.
std::string report_to_text(const MetricReport& r);
std::string report_to_json(const MetricReport& r);

} // namespace aac
