#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aac {

using TokenId = std::size_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kStart = 1;
inline constexpr TokenId kEnd = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kMaxTokens = 20;
inline constexpr std::size_t kDefaultMinCount = 10;

/// Lowercases ASCII, turns punctuation other than apostrophes into spaces,
/// and splits on whitespace.
std::vector<std::string> normalize_caption(std::string_view caption);

class Vocabulary {
 public:
  /// Reserved tokens only.
  Vocabulary();

  /// tokens[0..3] must be the reserved tokens in order.
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::size_t min_count = 1);

  std::size_t size() const { return words_.size(); }
  std::size_t min_count() const { return min_count_; }

  /// kUnk for unknown words.
  TokenId id(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  const std::string& word(TokenId id) const;
  const std::vector<std::string>& tokens() const { return words_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t min_count_ = 1;
};

/// START, words, END, then PAD up to a fixed length.
struct TokenSequence {
  std::vector<TokenId> ids;

  /// Positions up to and including END (or the whole sequence if no END).
  std::size_t content_length() const;
};

Vocabulary build_vocab(const std::vector<std::string>& captions,
                       std::size_t min_count = kDefaultMinCount);

TokenSequence encode(std::string_view caption, const Vocabulary& v,
                     std::size_t max_tokens = kMaxTokens);

/// Words joined by single spaces; START/END/PAD dropped, UNK shown as "<unk>".
std::string decode(const std::vector<TokenId>& ids, const Vocabulary& v);
inline std::string decode(const TokenSequence& seq, const Vocabulary& v) {
  return decode(seq.ids, v);
}

} // namespace aac
