#include "llara/lm/vocab.hpp"

#include <json.hpp>

#include <fstream>

namespace llara::lm {

namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c == '\'' || c == '-' || c >= 0x80;
}

bool no_space_before(const std::string& t) {
  return t == "," || t == "." || t == ":" || t == ";" || t == "!" || t == "?" || t == ")" || t == "]" || t == "}" ||
         t == "%";
}

bool no_space_after(const std::string& t) { return t == "(" || t == "[" || t == "{" || t == "$"; }

}  // namespace

Vocab::Vocab() {
  for (auto s : {kBos, kEos, kUnk, kPlaceholder}) add(std::string(s));
}

int Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

void Vocab::add_text(std::string_view text) {
  for (const auto& w : split_words(text)) add(w);
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk() : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocab::split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocab::detokenize(std::span<const int> ids) const {
  std::string out;
  bool glue = true;
  for (int id : ids) {
    if (id == bos() || id == eos()) continue;
    const std::string& t = token(id);
    if (!out.empty() && !glue && !no_space_before(t)) out += ' ';
    out += t;
    glue = no_space_after(t);
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write vocabulary '" + path + "'");
  nlohmann::json header = {{"size", size()},
                           {"specials",
                            {{"bos", bos()}, {"eos", eos()}, {"unk", unk()}, {"placeholder", placeholder()}}}};
  os << header.dump() << '\n';
  for (const auto& t : tokens_) os << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("vocabulary '" + path + "' is empty");
  const auto header = nlohmann::json::parse(line);
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  while (std::getline(in, line)) {
    v.index_.emplace(line, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(line);
  }
  if (v.size() != header.at("size").get<int>()) throw Error("vocabulary size does not match its header");
  if (v.size() < 4 || v.tokens_[0] != kBos || v.tokens_[1] != kEos || v.tokens_[2] != kUnk || v.tokens_[3] != kPlaceholder)
    throw Error("vocabulary specials are not in their reserved slots");
  return v;
}

}  // namespace llara::lm
