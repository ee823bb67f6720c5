#include "aac/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "aac/errors.hpp"

namespace aac {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {"<pad>", "<start>", "<end>", "<unk>"};
  return tokens;
}

} // namespace

std::vector<std::string> normalize_caption(std::string_view caption) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : caption) {
    const auto uc = static_cast<unsigned char>(ch);
    const bool separator =
        std::isspace(uc) != 0 || (uc < 0x80 && std::ispunct(uc) != 0 && ch != '\'');
    if (separator) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
      continue;
    }
    current.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : ch);
  }
  if (!current.empty()) {
    words.push_back(std::move(current));
  }
  return words;
}

Vocabulary::Vocabulary() : words_(reserved_tokens()) {
  for (TokenId i = 0; i < words_.size(); ++i) {
    index_.emplace(words_[i], i);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::size_t min_count) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw FormatError("vocabulary must start with <pad>, <start>, <end>, <unk>");
  }
  Vocabulary v;
  v.words_ = std::move(tokens);
  v.index_.clear();
  for (TokenId i = 0; i < v.words_.size(); ++i) {
    if (!v.index_.emplace(v.words_[i], i).second) {
      throw FormatError("duplicate vocabulary entry '" + v.words_[i] + "'");
    }
  }
  v.min_count_ = min_count;
  return v;
}

TokenId Vocabulary::id(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id >= words_.size()) {
    throw ContractViolation("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(words_.size()));
  }
  return words_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write vocabulary " + path.string());
  }
  for (const auto& w : words_) {
    out << w << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open vocabulary " + path.string());
  }
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

std::size_t TokenSequence::content_length() const {
  const auto it = std::find(ids.begin(), ids.end(), kEnd);
  return it == ids.end() ? ids.size() : static_cast<std::size_t>(it - ids.begin()) + 1;
}

Vocabulary build_vocab(const std::vector<std::string>& captions, std::size_t min_count) {
  if (captions.empty()) {
    throw DataError("build_vocab: empty caption corpus");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    for (auto& w : normalize_caption(c)) {
      ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  const auto& reserved = reserved_tokens();
  for (auto& [word, n] : counts) {
    if (n >= min_count &&
        std::find(reserved.begin(), reserved.end(), word) == reserved.end()) {
      kept.emplace_back(word, n);
    }
  }
  // std::map iteration is already lexicographic, so a stable sort on count
  // leaves ties in lexicographic order.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens = reserved;
  for (auto& [word, n] : kept) {
    tokens.push_back(word);
  }
  return Vocabulary::from_tokens(std::move(tokens), min_count);
}

TokenSequence encode(std::string_view caption, const Vocabulary& v, std::size_t max_tokens) {
  if (max_tokens < 2) {
    throw ConfigError("encode: max_tokens must leave room for START and END");
  }
  const auto words = normalize_caption(caption);
  const std::size_t room = max_tokens - 2;
  TokenSequence seq;
  seq.ids.reserve(max_tokens);
  seq.ids.push_back(kStart);
  for (std::size_t i = 0; i < words.size() && i < room; ++i) {
    seq.ids.push_back(v.id(words[i]));
  }
  seq.ids.push_back(kEnd);
  seq.ids.resize(max_tokens, kPad);
  return seq;
}

std::string decode(const std::vector<TokenId>& ids, const Vocabulary& v) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& w = v.word(id);
    if (id == kEnd) {
      break;
    }
    if (id == kStart || id == kPad) {
      continue;
    }
    if (!out.empty()) {
      out.push_back(' ');
    }
    out += w;
  }
  return out;
}

} // namespace aac
