#include "llara/corpus/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace llara::corpus {

std::size_t InteractionLog::n_interactions() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

const std::string& ItemCatalog::title(ItemId id) const {
  if (id < 0 || id >= n_items) throw IndexError("item id " + std::to_string(id) + " outside catalog");
  return titles[static_cast<std::size_t>(id)];
}

LogFormat parse_log_format(const std::string& name) {
  if (name == "movielens_udata") return LogFormat::MovielensUdata;
  if (name == "tsv_triples") return LogFormat::TsvTriples;
  throw Error("unknown log format '" + name + "' (expected movielens_udata or tsv_triples)");
}

namespace {

bool parse_int(const std::string& tok, std::int64_t& out) {
  if (tok.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(tok, &pos);
  } catch (...) {
    return false;
  }
  return pos == tok.size();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

InteractionLog load_interactions(const std::string& path, LogFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interaction file '" + path + "'");
  const std::size_t want = format == LogFormat::MovielensUdata ? 4 : 3;
  std::vector<Interaction> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto f = split_fields(line);
    if (f.size() != want)
      throw ParseError("expected " + std::to_string(want) + " fields, found " + std::to_string(f.size()), lineno);
    Interaction it;
    std::int64_t rating = 0;
    const std::string& ts = f[want - 1];
    if (!parse_int(f[0], it.user_id) || !parse_int(f[1], it.item_id) || !parse_int(ts, it.timestamp) ||
        (want == 4 && !parse_int(f[2], rating)))
      throw ParseError("non-integer field", lineno);
    if (it.user_id < 0 || it.item_id < 0 || it.timestamp < 0) throw ParseError("negative id or timestamp", lineno);
    rows.push_back(it);
  }
  if (rows.empty()) throw EmptyCorpusError("interaction file '" + path + "' contains no rows");

  std::set<std::int64_t> raw_items;
  for (const auto& r : rows) raw_items.insert(r.item_id);
  InteractionLog log;
  log.raw_item_ids.assign(raw_items.begin(), raw_items.end());
  log.n_items = static_cast<std::int64_t>(log.raw_item_ids.size());
  std::unordered_map<std::int64_t, ItemId> dense;
  for (std::size_t i = 0; i < log.raw_item_ids.size(); ++i) dense[log.raw_item_ids[i]] = static_cast<ItemId>(i);

  std::map<std::int64_t, std::vector<std::pair<std::int64_t, ItemId>>> per_user;
  for (const auto& r : rows) per_user[r.user_id].emplace_back(r.timestamp, dense.at(r.item_id));
  for (auto& [user, events] : per_user) {
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    UserSequence s;
    s.user_id = user;
    for (const auto& [t, item] : events) {
      s.items.push_back(item);
      s.timestamps.push_back(t);
    }
    log.sequences.push_back(std::move(s));
  }
  return log;
}

ItemCatalog load_catalog(const std::string& path, const InteractionLog& log) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open catalog '" + path + "'");
  std::unordered_map<std::int64_t, ItemId> dense;
  for (std::size_t i = 0; i < log.raw_item_ids.size(); ++i) dense[log.raw_item_ids[i]] = static_cast<ItemId>(i);
  ItemCatalog cat;
  cat.n_items = log.n_items;
  cat.titles.resize(static_cast<std::size_t>(log.n_items));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    std::int64_t raw = 0;
    if (tab == std::string::npos || !parse_int(line.substr(0, tab), raw)) throw ParseError("expected item_id<TAB>title", lineno);
    std::string title = line.substr(tab + 1);
    if (title.empty()) throw ParseError("empty title", lineno);
    auto it = dense.find(raw);
    if (it != dense.end()) cat.titles[static_cast<std::size_t>(it->second)] = std::move(title);
  }
  for (std::size_t i = 0; i < cat.titles.size(); ++i)
    if (cat.titles[i].empty()) cat.titles[i] = "item " + std::to_string(log.raw_item_ids[i]);
  return cat;
}

void save_catalog(const std::string& path, const ItemCatalog& catalog) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write catalog '" + path + "'");
  for (std::int64_t i = 0; i < catalog.n_items; ++i) os << i << '\t' << catalog.titles[static_cast<std::size_t>(i)] << '\n';
}

ItemCatalog load_dense_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open catalog '" + path + "'");
  ItemCatalog cat;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    std::int64_t id = 0;
    if (tab == std::string::npos || !parse_int(line.substr(0, tab), id)) throw ParseError("expected item_id<TAB>title", lineno);
    if (id != static_cast<std::int64_t>(cat.titles.size())) throw ParseError("catalog ids must be dense and ordered", lineno);
    cat.titles.push_back(line.substr(tab + 1));
  }
  cat.n_items = static_cast<std::int64_t>(cat.titles.size());
  if (cat.n_items == 0) throw EmptyCorpusError("catalog '" + path + "' is empty");
  return cat;
}

SplitCorpus chronological_split(const InteractionLog& log, SplitRatios ratios) {
  const std::size_t n = log.sequences.size();
  if (n < 3) throw SplitError("need at least 3 sequences to split, got " + std::to_string(n));
  for (const auto& s : log.sequences)
    if (s.items.empty()) throw SplitError("user " + std::to_string(s.user_id) + " has an empty sequence");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = log.sequences[a];
    const auto& sb = log.sequences[b];
    if (sa.final_timestamp() != sb.final_timestamp()) return sa.final_timestamp() < sb.final_timestamp();
    return sa.user_id < sb.user_id;
  });
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n) + 1e-9));
  SplitCorpus out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = log.sequences[order[i]];
    if (i < n_train) out.train.push_back(s);
    else if (i < n_train + n_val) out.val.push_back(s);
    else out.test.push_back(s);
  }
  if (out.val.empty()) out.warnings.push_back("validation split is empty");
  if (out.test.empty()) out.warnings.push_back("test split is empty");
  return out;
}

std::vector<SequenceExample> window_examples(const std::vector<UserSequence>& part, ItemId pad_id, int history_len,
                                             bool sliding) {
  if (history_len < 1) throw WindowError("history length must be at least 1");
  std::vector<SequenceExample> out;
  auto make = [&](const UserSequence& s, std::size_t target_idx) {
    SequenceExample ex;
    const std::size_t real = std::min<std::size_t>(target_idx, static_cast<std::size_t>(history_len));
    ex.history.assign(static_cast<std::size_t>(history_len) - real, pad_id);
    ex.history.insert(ex.history.end(), s.items.begin() + static_cast<std::ptrdiff_t>(target_idx - real),
                      s.items.begin() + static_cast<std::ptrdiff_t>(target_idx));
    ex.history_len = static_cast<int>(real);
    ex.target = s.items[target_idx];
    return ex;
  };
  for (const auto& s : part) {
    if (s.items.size() < 2)
      throw WindowError("user " + std::to_string(s.user_id) + ": a sequence needs at least one history item");
    if (sliding)
      for (std::size_t t = 1; t + 1 < s.items.size(); ++t) out.push_back(make(s, t));
    out.push_back(make(s, s.items.size() - 1));
  }
  return out;
}

SequenceExample sample_candidates(SequenceExample example, std::int64_t n_items,
                                  const std::vector<ItemId>& user_full_history, std::mt19937_64& rng, int m) {
  std::vector<char> excluded(static_cast<std::size_t>(n_items), 0);
  for (ItemId i : user_full_history)
    if (i >= 0 && i < n_items) excluded[static_cast<std::size_t>(i)] = 1;
  if (example.target < 0 || example.target >= n_items) throw SamplingError("target outside catalog");
  excluded[static_cast<std::size_t>(example.target)] = 1;
  std::vector<ItemId> pool;
  for (std::int64_t i = 0; i < n_items; ++i)
    if (!excluded[static_cast<std::size_t>(i)]) pool.push_back(i);
  if (static_cast<int>(pool.size()) < m)
    throw SamplingError("only " + std::to_string(pool.size()) + " non-interacted items available, need " + std::to_string(m));
  // Partial Fisher-Yates: the first m slots become a uniform random ordered sample.
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::uniform_int_distribution<int> pos(0, m);
  example.target_pos = pos(rng);
  pool.insert(pool.begin() + example.target_pos, example.target);
  example.candidates = std::move(pool);
  return example;
}

std::vector<SequenceExample> build_examples(const std::vector<UserSequence>& part, std::int64_t n_items,
                                            std::mt19937_64& rng, bool sliding) {
  std::vector<SequenceExample> out;
  for (const auto& s : part) {
    auto windows = window_examples({s}, n_items, kHistoryLength, sliding);
    for (auto& w : windows) out.push_back(sample_candidates(std::move(w), n_items, s.items, rng));
  }
  return out;
}

std::string example_to_json(const SequenceExample& ex) {
  nlohmann::json j;
  j["history"] = ex.history;
  j["history_len"] = ex.history_len;
  j["candidates"] = ex.candidates;
  j["target"] = ex.target;
  j["target_pos"] = ex.target_pos;
  return j.dump();
}

SequenceExample example_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  SequenceExample ex;
  ex.history = j.at("history").get<std::vector<ItemId>>();
  ex.history_len = j.at("history_len").get<int>();
  ex.candidates = j.at("candidates").get<std::vector<ItemId>>();
  ex.target = j.at("target").get<ItemId>();
  ex.target_pos = j.at("target_pos").get<int>();
  return ex;
}

void save_examples(const std::string& path, const std::vector<SequenceExample>& examples) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write '" + path + "'");
  for (const auto& ex : examples) os << example_to_json(ex) << '\n';
}

std::vector<SequenceExample> load_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<SequenceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

void save_split_manifest(const std::string& path, const SplitCorpus& split) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write '" + path + "'");
  auto emit = [&](const char* name, const std::vector<UserSequence>& part) {
    for (const auto& s : part) {
      nlohmann::json j;
      j["split"] = name;
      j["user"] = s.user_id;
      j["items"] = s.items;
      j["timestamps"] = s.timestamps;
      os << j.dump() << '\n';
    }
  };
  emit("train", split.train);
  emit("val", split.val);
  emit("test", split.test);
}

SplitCorpus load_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  SplitCorpus out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    UserSequence s;
    s.user_id = j.at("user").get<std::int64_t>();
    s.items = j.at("items").get<std::vector<ItemId>>();
    s.timestamps = j.at("timestamps").get<std::vector<std::int64_t>>();
    const auto name = j.at("split").get<std::string>();
    if (name == "train") out.train.push_back(std::move(s));
    else if (name == "val") out.val.push_back(std::move(s));
    else if (name == "test") out.test.push_back(std::move(s));
    else throw ParseError("unknown split '" + name + "'", lineno);
  }
  return out;
}

void check_example(const SequenceExample& ex, std::int64_t n_items, const std::vector<ItemId>& user_full_history) {
  const ItemId pad = n_items;
  if (ex.history.size() != static_cast<std::size_t>(kHistoryLength)) throw Error("history must have 10 slots");
  if (ex.history_len < 1 || ex.history_len > kHistoryLength) throw Error("history_len out of range");
  for (std::size_t i = 0; i < ex.history.size(); ++i) {
    const bool is_pad = i < ex.history.size() - static_cast<std::size_t>(ex.history_len);
    if (is_pad != (ex.history[i] == pad)) throw Error("history padding inconsistent with history_len");
  }
  if (ex.candidates.size() != static_cast<std::size_t>(kNegativeCount + 1)) throw Error("candidate set must have 21 items");
  if (ex.target_pos < 0 || ex.target_pos >= static_cast<int>(ex.candidates.size()) ||
      ex.candidates[static_cast<std::size_t>(ex.target_pos)] != ex.target)
    throw Error("target_pos does not point at the target");
  std::unordered_set<ItemId> seen, hist(user_full_history.begin(), user_full_history.end());
  for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
    const ItemId c = ex.candidates[i];
    if (c < 0 || c >= n_items) throw Error("candidate outside catalog (or pad)");
    if (!seen.insert(c).second) throw Error("duplicate candidate");
    if (static_cast<int>(i) != ex.target_pos && hist.count(c)) throw Error("negative candidate was interacted with");
  }
}

}  // namespace llara::corpus
