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

// WordPiece tokenizer with character offsets.
//
// Pre-tokenization splits on whitespace and isolates ASCII punctuation;
// bracketed special-token literals such as "[SEP]" are recognized in the
// input text. Words are then split greedily into the longest matching
// vocabulary pieces, continuation pieces carrying a "##" prefix.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entail/common.h"

namespace entail {

struct Token {
  int id = 0;
  Span chars;  // byte extent in the source text
};

class Tokenizer {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kCls = "[CLS]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::string_view kMask = "[MASK]";

  // `vocabulary[i]` is the token with id i. All five special tokens must be
  // present.
  explicit Tokenizer(std::vector<std::string> vocabulary, bool lowercase = true);

  // One token per line; the line index is the id.
  static Tokenizer load(const std::filesystem::path& path, bool lowercase = true);
  void save(const std::filesystem::path& path) const;

  // Specials first, then every observed character as a word-initial and a
  // "##" continuation piece, then whole words by descending frequency
  // (ties broken lexicographically) while the vocabulary has room.
  static Tokenizer build(const std::vector<std::string>& texts,
                         std::size_t max_size, std::size_t min_count = 1);

  std::vector<Token> tokenize(std::string_view text) const;
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  // [CLS] text [SEP], truncated from the right to at most `max_len` ids.
  std::vector<int> encode_for_model(std::string_view text,
                                    std::size_t max_len) const;

  std::size_t size() const { return vocabulary_.size(); }
  const std::string& token(int id) const { return vocabulary_.at(id); }
  // -1 when absent.
  int id_of(std::string_view token) const;
  bool is_special(int id) const;

  int pad_id() const { return pad_; }
  int unk_id() const { return unk_; }
  int cls_id() const { return cls_; }
  int sep_id() const { return sep_; }
  int mask_id() const { return mask_; }

 private:
  void word_pieces(std::string_view word, std::size_t offset,
                   std::vector<Token>& out) const;

  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, int> index_;
  bool lowercase_;
  int pad_ = 0, unk_ = 0, cls_ = 0, sep_ = 0, mask_ = 0;
};

}  // namespace entail
