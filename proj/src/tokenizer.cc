// Copyright 2026 The entailtune Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "entail/tokenizer.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

namespace entail {

namespace {

constexpr std::size_t kMaxWordBytes = 100;

constexpr std::array<std::string_view, 5> kSpecials = {
    Tokenizer::kPad, Tokenizer::kUnk, Tokenizer::kCls, Tokenizer::kSep,
    Tokenizer::kMask};

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Length of the special-token literal starting at `pos`, or 0.
std::size_t special_at(std::string_view text, std::size_t pos) {
  if (text[pos] != '[') return 0;
  for (auto s : kSpecials) {
    if (text.substr(pos, s.size()) == s) return s.size();
  }
  return 0;
}

struct Piece {
  std::string_view text;
  std::size_t offset;
  bool special;
};

std::vector<Piece> pre_tokenize(std::string_view text) {
  std::vector<Piece> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (std::size_t n = special_at(text, i)) {
      out.push_back({text.substr(i, n), i, true});
      i += n;
      continue;
    }
    if (is_punct(c)) {
      out.push_back({text.substr(i, 1), i, false});
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < text.size()) {
      const auto d = static_cast<unsigned char>(text[i]);
      if (is_space(d) || is_punct(d)) break;
      ++i;
    }
    out.push_back({text.substr(start, i - start), start, false});
  }
  return out;
}

// Byte length of the UTF-8 sequence introduced by `lead`.
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> vocabulary, bool lowercase)
    : vocabulary_(std::move(vocabulary)), lowercase_(lowercase) {
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!index_.emplace(vocabulary_[i], static_cast<int>(i)).second) {
      throw Error(ErrorKind::kInvalidArgument,
                  "duplicate vocabulary entry \"" + vocabulary_[i] + "\"");
    }
  }
  auto require = [&](std::string_view name) {
    const int id = id_of(name);
    if (id < 0) {
      throw Error(ErrorKind::kInvalidArgument,
                  "vocabulary lacks special token " + std::string(name));
    }
    return id;
  };
  pad_ = require(kPad);
  unk_ = require(kUnk);
  cls_ = require(kCls);
  sep_ = require(kSep);
  mask_ = require(kMask);
}

Tokenizer Tokenizer::load(const std::filesystem::path& path, bool lowercase) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open vocabulary \"" + path.string() + "\"");
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return Tokenizer(std::move(vocab), lowercase);
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write vocabulary \"" + path.string() + "\"");
  for (const auto& t : vocabulary_) out << t << '\n';
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts,
                           std::size_t max_size, std::size_t min_count) {
  std::map<std::string, std::size_t> word_counts;
  std::set<std::string> chars;
  for (const auto& text : texts) {
    for (const Piece& p : pre_tokenize(text)) {
      if (p.special) continue;
      const std::string word = to_lower_ascii(p.text);
      ++word_counts[word];
      for (std::size_t i = 0; i < word.size();) {
        const std::size_t n = std::min(utf8_length(word[i]), word.size() - i);
        chars.insert(word.substr(i, n));
        i += n;
      }
    }
  }
  std::vector<std::string> vocab(kSpecials.begin(), kSpecials.end());
  std::set<std::string> present(vocab.begin(), vocab.end());
  auto add = [&](const std::string& t) {
    if (present.insert(t).second) vocab.push_back(t);
  };
  for (const auto& c : chars) add(c);
  for (const auto& c : chars) add("##" + c);

  std::vector<std::pair<std::string, std::size_t>> words(word_counts.begin(),
                                                         word_counts.end());
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  for (const auto& [word, count] : words) {
    if (vocab.size() >= max_size) break;
    if (count < min_count) break;
    add(word);
  }
  return Tokenizer(std::move(vocab), true);
}

int Tokenizer::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

bool Tokenizer::is_special(int id) const {
  return id == pad_ || id == unk_ || id == cls_ || id == sep_ || id == mask_;
}

void Tokenizer::word_pieces(std::string_view word, std::size_t offset,
                            std::vector<Token>& out) const {
  const std::string lowered = lowercase_ ? to_lower_ascii(word) : std::string(word);
  if (lowered.size() > kMaxWordBytes) {
    out.push_back({unk_, {offset, offset + word.size()}});
    return;
  }
  std::vector<Token> pieces;
  std::size_t start = 0;
  while (start < lowered.size()) {
    std::size_t end = lowered.size();
    int found = -1;
    while (end > start) {
      std::string candidate = lowered.substr(start, end - start);
      if (start > 0) candidate = "##" + candidate;
      found = id_of(candidate);
      if (found >= 0) break;
      --end;
    }
    if (found < 0) {
      out.push_back({unk_, {offset, offset + word.size()}});
      return;
    }
    pieces.push_back({found, {offset + start, offset + end}});
    start = end;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

std::vector<Token> Tokenizer::tokenize(std::string_view text) const {
  std::vector<Token> out;
  for (const Piece& p : pre_tokenize(text)) {
    if (p.special) {
      out.push_back({id_of(p.text), {p.offset, p.offset + p.text.size()}});
    } else {
      word_pieces(p.text, p.offset, out);
    }
  }
  return out;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const Token& t : tokenize(text)) ids.push_back(t.id);
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    const std::string& t = token(id);
    if (t.size() > 2 && t.starts_with("##") && !out.empty()) {
      out += t.substr(2);
      continue;
    }
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::vector<int> Tokenizer::encode_for_model(std::string_view text,
                                             std::size_t max_len) const {
  if (max_len < 2) throw Error(ErrorKind::kInvalidArgument, "max_len must be >= 2");
  std::vector<int> ids{cls_};
  for (const Token& t : tokenize(text)) {
    if (ids.size() + 1 >= max_len) break;
    ids.push_back(t.id);
  }
  ids.push_back(sep_);
  return ids;
}

}  // namespace entail
