#pragma once

// Interaction logs, item catalogs, chronological splits, windowed prediction
// examples and candidate sampling.

#include "llara/core/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace llara::corpus {

using ItemId = std::int64_t;

inline constexpr int kHistoryLength = 10;
inline constexpr int kNegativeCount = 20;

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};
class SplitError : public Error {
 public:
  using Error::Error;
};
class WindowError : public Error {
 public:
  using Error::Error;
};
class SamplingError : public Error {
 public:
  using Error::Error;
};

struct Interaction {
  std::int64_t user_id = 0;
  ItemId item_id = 0;
  std::int64_t timestamp = 0;
};

/// One user's interactions in ascending timestamp order.
struct UserSequence {
  std::int64_t user_id = 0;
  std::vector<ItemId> items;
  std::vector<std::int64_t> timestamps;

  std::size_t size() const { return items.size(); }
  std::int64_t final_timestamp() const { return timestamps.back(); }
  bool operator==(const UserSequence&) const = default;
};

struct InteractionLog {
  std::vector<UserSequence> sequences;  // sorted by user id
  std::int64_t n_items = 0;             // dense ids 0..n_items-1
  std::vector<std::int64_t> raw_item_ids;  // dense id -> id in the source file

  std::size_t n_interactions() const;
  bool operator==(const InteractionLog&) const = default;
};

struct ItemCatalog {
  std::int64_t n_items = 0;
  std::vector<std::string> titles;

  ItemId pad_id() const { return n_items; }
  const std::string& title(ItemId id) const;
  bool operator==(const ItemCatalog&) const = default;
};

struct SplitCorpus {
  std::vector<UserSequence> train, val, test;
  std::vector<std::string> warnings;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SequenceExample {
  std::vector<ItemId> history;  // kHistoryLength slots, left-padded with pad_id
  int history_len = 0;
  std::vector<ItemId> candidates;  // target plus negatives, in presentation order
  ItemId target = 0;
  int target_pos = -1;

  bool operator==(const SequenceExample&) const = default;
};

enum class LogFormat { MovielensUdata, TsvTriples };

LogFormat parse_log_format(const std::string& name);

/// Reads a tab/whitespace separated log. Items are densified in ascending raw
/// id order; each user's interactions are sorted by timestamp (stable).
InteractionLog load_interactions(const std::string& path, LogFormat format);

/// Catalog TSV `item_id<TAB>title`, where item_id is the raw id from the log.
/// Items without a title receive "item <raw id>".
ItemCatalog load_catalog(const std::string& path, const InteractionLog& log);
void save_catalog(const std::string& path, const ItemCatalog& catalog);
ItemCatalog load_dense_catalog(const std::string& path);

/// Orders sequences by final timestamp (ties by user id) and cuts
/// floor(train*N), floor(val*N), remainder.
SplitCorpus chronological_split(const InteractionLog& log, SplitRatios ratios = {});

/// One example per sequence (last item is the target). With `sliding`, every
/// position after the first also becomes a target.
std::vector<SequenceExample> window_examples(const std::vector<UserSequence>& part, ItemId pad_id,
                                             int history_len = kHistoryLength, bool sliding = false);

/// Fills `candidates` with `m` uniformly drawn never-interacted items plus the
/// target at a uniformly random position.
SequenceExample sample_candidates(SequenceExample example, std::int64_t n_items,
                                  const std::vector<ItemId>& user_full_history, std::mt19937_64& rng,
                                  int m = kNegativeCount);

/// Windows + candidates for a whole split part.
std::vector<SequenceExample> build_examples(const std::vector<UserSequence>& part, std::int64_t n_items,
                                            std::mt19937_64& rng, bool sliding = false);

// Line-delimited JSON.
std::string example_to_json(const SequenceExample& ex);
SequenceExample example_from_json(const std::string& line);
void save_examples(const std::string& path, const std::vector<SequenceExample>& examples);
std::vector<SequenceExample> load_examples(const std::string& path);
void save_split_manifest(const std::string& path, const SplitCorpus& split);
SplitCorpus load_split_manifest(const std::string& path);

/// Throws unless every SequenceExample invariant holds against the user's
/// full history.
void check_example(const SequenceExample& ex, std::int64_t n_items, const std::vector<ItemId>& user_full_history);

}  // namespace llara::corpus
