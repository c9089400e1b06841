#pragma once

#include "llara/core/tensor.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace llara::lm {

/// Word-level vocabulary with four reserved tokens. Ids are dense; the
/// specials always occupy ids 0..3.
class Vocab {
 public:
  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kPlaceholder = "[PH]";

  Vocab();

  /// Adds a token if absent; returns its id.
  int add(const std::string& token);
  /// Adds every word of `text` as produced by `split_words`.
  void add_text(std::string_view text);

  int id(const std::string& token) const;  // UNK when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  int bos() const { return 0; }
  int eos() const { return 1; }
  int unk() const { return 2; }
  int placeholder() const { return 3; }
  bool is_special(int id) const { return id >= 0 && id < 4; }

  /// Words are maximal runs of letters, digits, apostrophes, hyphens and
  /// non-ASCII bytes; every other non-space character is its own token. The
  /// placeholder can never be produced this way.
  static std::vector<std::string> split_words(std::string_view text);

  std::vector<int> tokenize(std::string_view text) const;

  /// Inverse of `tokenize` up to whitespace normalization. Specials other than
  /// the placeholder are dropped.
  std::string detokenize(std::span<const int> ids) const;

  /// First line: JSON header with the specials; then one token per line.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace llara::lm
