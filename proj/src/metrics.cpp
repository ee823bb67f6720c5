#include "aac/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "aac/errors.hpp"
#include "aac/text.hpp"
#include "json.hpp"

namespace aac {

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) {
    return counts;
  }
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[Tokens(words.begin() + static_cast<std::ptrdiff_t>(i),
                    words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

} // namespace

// ---------------------------------------------------------------------- BLEU

double bleu(const std::vector<EvalInstance>& corpus, int n) {
  if (n < 1 || n > 4) {
    throw ConfigError("bleu: order must lie in 1..4");
  }
  if (corpus.empty()) {
    throw DataError("bleu: empty candidate set");
  }
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;

  for (const EvalInstance& inst : corpus) {
    if (inst.references.empty()) {
      throw DataError("bleu: instance without references");
    }
    const std::size_t c = inst.candidate.size();
    cand_len += static_cast<double>(c);
    // Closest reference length, shorter one on ties.
    std::size_t best = inst.references.front().size();
    for (const Tokens& ref : inst.references) {
      const auto d = std::abs(static_cast<long>(ref.size()) - static_cast<long>(c));
      const auto best_d = std::abs(static_cast<long>(best) - static_cast<long>(c));
      if (d < best_d || (d == best_d && ref.size() < best)) {
        best = ref.size();
      }
    }
    ref_len += static_cast<double>(best);

    for (std::size_t k = 1; k <= static_cast<std::size_t>(n); ++k) {
      const NgramCounts cand = ngrams(inst.candidate, k);
      NgramCounts max_ref;
      for (const Tokens& ref : inst.references) {
        for (const auto& [g, cnt] : ngrams(ref, k)) {
          max_ref[g] = std::max(max_ref[g], cnt);
        }
      }
      for (const auto& [g, cnt] : cand) {
        const auto it = max_ref.find(g);
        matched[k - 1] += static_cast<double>(std::min(cnt, it == max_ref.end() ? 0 : it->second));
        total[k - 1] += static_cast<double>(cnt);
      }
    }
  }

  if (cand_len == 0.0) {
    return 0.0;
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
    if (matched[k] == 0.0) {
      return 0.0;
    }
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / n);
}

// ------------------------------------------------------------------- ROUGE-L

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const EvalInstance& instance, double beta) {
  if (instance.candidate.empty()) {
    return 0.0;
  }
  double best = 0.0;
  for (const Tokens& ref : instance.references) {
    if (ref.empty()) {
      continue;
    }
    const auto lcs = static_cast<double>(lcs_length(instance.candidate, ref));
    if (lcs == 0.0) {
      continue;
    }
    const double p = lcs / static_cast<double>(instance.candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
  }
  return best;
}

// --------------------------------------------------------------------- CIDEr

namespace {

struct TfIdf {
  std::array<std::map<Tokens, double>, 4> vec;
  std::array<double, 4> norm{};
  double length = 0.0;
};

TfIdf tf_idf(const Tokens& words, const std::map<Tokens, std::size_t>& doc_freq,
             double log_docs) {
  TfIdf out;
  out.length = static_cast<double>(words.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    for (const auto& [g, tf] : ngrams(words, n)) {
      const auto it = doc_freq.find(g);
      const double df = it == doc_freq.end() ? 1.0 : static_cast<double>(it->second);
      const double w = static_cast<double>(tf) * (log_docs - std::log(std::max(1.0, df)));
      out.vec[n - 1][g] = w;
      out.norm[n - 1] += w * w;
    }
    out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
  }
  return out;
}

double cider_similarity(const TfIdf& hyp, const TfIdf& ref, std::size_t n,
                        const CiderOptions& options) {
  if (hyp.norm[n] == 0.0 || ref.norm[n] == 0.0) {
    return 0.0;
  }
  double dot = 0.0;
  for (const auto& [g, w] : hyp.vec[n]) {
    const auto it = ref.vec[n].find(g);
    if (it == ref.vec[n].end()) {
      continue;
    }
    dot += options.cider_d ? std::min(w, it->second) * it->second : w * it->second;
  }
  double sim = dot / (hyp.norm[n] * ref.norm[n]);
  if (options.cider_d) {
    const double delta = hyp.length - ref.length;
    sim *= std::exp(-(delta * delta) / (2.0 * options.sigma * options.sigma));
  }
  return sim;
}

} // namespace

double cider(const std::vector<EvalInstance>& corpus, const CiderOptions& options) {
  if (corpus.empty()) {
    throw DataError("cider: empty corpus");
  }
  if (corpus.size() < 2) {
    std::cerr << "warning: CIDEr over a single item; every reference n-gram has idf 0\n";
  }
  std::map<Tokens, std::size_t> doc_freq;
  for (const EvalInstance& inst : corpus) {
    std::set<Tokens> seen;
    for (const Tokens& ref : inst.references) {
      for (std::size_t n = 1; n <= 4; ++n) {
        for (const auto& [g, cnt] : ngrams(ref, n)) {
          seen.insert(g);
        }
      }
    }
    for (const Tokens& g : seen) {
      ++doc_freq[g];
    }
  }
  const double log_docs = std::log(static_cast<double>(corpus.size()));

  double total = 0.0;
  for (const EvalInstance& inst : corpus) {
    if (inst.references.empty()) {
      continue;
    }
    const TfIdf hyp = tf_idf(inst.candidate, doc_freq, log_docs);
    double item = 0.0;
    for (const Tokens& ref : inst.references) {
      const TfIdf r = tf_idf(ref, doc_freq, log_docs);
      for (std::size_t n = 0; n < 4; ++n) {
        item += cider_similarity(hyp, r, n, options);
      }
    }
    total += item / (4.0 * static_cast<double>(inst.references.size()));
  }
  return total / static_cast<double>(corpus.size());
}

// -------------------------------------------------------------------- METEOR

void SynonymTable::add(const std::string& a, const std::string& b) {
  pairs_[a].insert(b);
  pairs_[b].insert(a);
}

bool SynonymTable::related(const std::string& a, const std::string& b) const {
  const auto it = pairs_.find(a);
  return it != pairs_.end() && it->second.count(b) > 0;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open synonym table " + path.string());
  }
  SynonymTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected word<TAB>synonym");
    }
    table.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return table;
}

namespace {

double meteor_single(const Tokens& cand, const Tokens& ref, const SynonymTable* synonyms) {
  if (cand.empty() || ref.empty()) {
    return 0.0;
  }
  std::vector<std::string> cand_stems;
  std::vector<std::string> ref_stems;
  for (const auto& w : cand) {
    cand_stems.push_back(porter_stem(w));
  }
  for (const auto& w : ref) {
    ref_stems.push_back(porter_stem(w));
  }

  constexpr long kUnaligned = -1;
  std::vector<long> align(cand.size(), kUnaligned);
  std::vector<bool> ref_used(ref.size(), false);

  auto run_stage = [&](auto&& matches) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (align[i] != kUnaligned) {
        continue;
      }
      // Continue the previous chunk when possible, else take the first match.
      long chosen = kUnaligned;
      if (i > 0 && align[i - 1] != kUnaligned) {
        const auto next = static_cast<std::size_t>(align[i - 1] + 1);
        if (next < ref.size() && !ref_used[next] && matches(i, next)) {
          chosen = static_cast<long>(next);
        }
      }
      for (std::size_t j = 0; chosen == kUnaligned && j < ref.size(); ++j) {
        if (!ref_used[j] && matches(i, j)) {
          chosen = static_cast<long>(j);
        }
      }
      if (chosen != kUnaligned) {
        align[i] = chosen;
        ref_used[static_cast<std::size_t>(chosen)] = true;
      }
    }
  };

  run_stage([&](std::size_t i, std::size_t j) { return cand[i] == ref[j]; });
  run_stage([&](std::size_t i, std::size_t j) { return cand_stems[i] == ref_stems[j]; });
  if (synonyms != nullptr && !synonyms->empty()) {
    run_stage([&](std::size_t i, std::size_t j) { return synonyms->related(cand[i], ref[j]); });
  }

  double matches = 0.0;
  double chunks = 0.0;
  long prev_ref = kUnaligned;
  bool prev_aligned = false;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (align[i] == kUnaligned) {
      prev_aligned = false;
      continue;
    }
    matches += 1.0;
    if (!prev_aligned || align[i] != prev_ref + 1) {
      chunks += 1.0;
    }
    prev_aligned = true;
    prev_ref = align[i];
  }
  if (matches == 0.0) {
    return 0.0;
  }
  const double p = matches / static_cast<double>(cand.size());
  const double r = matches / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(chunks / matches, 3.0);
  return f_mean * (1.0 - penalty);
}

} // namespace

double meteor(const EvalInstance& instance, const SynonymTable* synonyms) {
  double best = 0.0;
  for (const Tokens& ref : instance.references) {
    best = std::max(best, meteor_single(instance.candidate, ref, synonyms));
  }
  return best;
}

// ------------------------------------------------------------------- corpus

MetricReport evaluate_corpus(const std::vector<EvalInstance>& corpus, const EvalOptions& options) {
  if (corpus.empty()) {
    throw DataError("evaluate_corpus: empty corpus");
  }
  MetricReport r;
  r.bleu_1 = bleu(corpus, 1);
  r.bleu_2 = bleu(corpus, 2);
  r.bleu_3 = bleu(corpus, 3);
  r.bleu_4 = bleu(corpus, 4);
  double rouge = 0.0;
  double met = 0.0;
  for (const EvalInstance& inst : corpus) {
    rouge += rouge_l(inst);
    met += meteor(inst, options.synonyms);
  }
  r.rouge_l = rouge / static_cast<double>(corpus.size());
  r.meteor = met / static_cast<double>(corpus.size());
  r.cider = cider(corpus, options.cider);
  return r;
}

MetricReport evaluate_corpus(const std::vector<std::string>& candidates,
                             const std::vector<std::vector<std::string>>& references,
                             const EvalOptions& options) {
  if (candidates.size() != references.size()) {
    throw DataError("evaluate_corpus: " + std::to_string(candidates.size()) +
                    " candidates for " + std::to_string(references.size()) + " reference sets");
  }
  std::vector<EvalInstance> corpus;
  corpus.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    EvalInstance inst;
    inst.candidate = normalize_caption(candidates[i]);
    for (const auto& ref : references[i]) {
      inst.references.push_back(normalize_caption(ref));
    }
    corpus.push_back(std::move(inst));
  }
  return evaluate_corpus(corpus, options);
}

std::string report_to_text(const MetricReport& r) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4);
  ss << "bleu_1 " << r.bleu_1 << '\n'
     << "bleu_2 " << r.bleu_2 << '\n'
     << "bleu_3 " << r.bleu_3 << '\n'
     << "bleu_4 " << r.bleu_4 << '\n'
     << "rouge_l " << r.rouge_l << '\n'
     << "cider " << r.cider << '\n'
     << "meteor " << r.meteor << '\n';
  return ss.str();
}

std::string report_to_json(const MetricReport& r) {
  const nlohmann::json j = {{"bleu_1", r.bleu_1}, {"bleu_2", r.bleu_2}, {"bleu_3", r.bleu_3},
                            {"bleu_4", r.bleu_4}, {"rouge_l", r.rouge_l}, {"cider", r.cider},
                            {"meteor", r.meteor}};
  return j.dump(2);
}

} // namespace aac
