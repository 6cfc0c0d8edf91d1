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

#include "entail/masking.h"

#include <string>

namespace entail {

using nlohmann::json;

const char* scope_name(MaskScope scope) {
  return scope == MaskScope::kHypothesisOnly ? "hypothesis_only" : "full_prompt";
}

std::optional<MaskScope> parse_scope(std::string_view name) {
  if (name == "hypothesis_only") return MaskScope::kHypothesisOnly;
  if (name == "full_prompt") return MaskScope::kFullPrompt;
  return std::nullopt;
}

void MaskConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw Error(ErrorKind::kConfig, "beta must lie in [0,1]");
  }
}

TokenizedPrompt tokenize_with_span(const PromptedText& prompted,
                                   const Tokenizer& tokenizer,
                                   std::size_t max_len,
                                   TruncationPolicy policy) {
  std::vector<int> premise, connective, hypothesis;
  for (const Token& t : tokenizer.tokenize(prompted.text)) {
    if (prompted.hypothesis.intersects(t.chars.begin, t.chars.end)) {
      hypothesis.push_back(t.id);
    } else if (prompted.premise.intersects(t.chars.begin, t.chars.end)) {
      premise.push_back(t.id);
    } else {
      connective.push_back(t.id);
    }
  }
  if (hypothesis.empty()) {
    throw InstanceRejected(InstanceRejected::Reason::kHypothesisTruncated,
                           "hypothesis encodes to no tokens");
  }

  const std::size_t frame = 2 + connective.size();
  std::size_t keep_premise = premise.size();
  std::size_t keep_hypothesis = hypothesis.size();
  if (frame + premise.size() + hypothesis.size() > max_len) {
    if (policy == TruncationPolicy::kPremiseTail) {
      if (frame + hypothesis.size() + 1 > max_len) {
        throw InstanceRejected(
            InstanceRejected::Reason::kHypothesisTruncated,
            "hypothesis of " + std::to_string(hypothesis.size()) +
                " tokens does not fit in " + std::to_string(max_len));
      }
      keep_premise = max_len - frame - hypothesis.size();
    } else {
      // Everything after position max_len - 1 is cut; the [SEP] is re-added.
      const std::size_t room = max_len - 2;
      keep_premise = std::min(premise.size(), room);
      const std::size_t after_premise = room - keep_premise;
      if (after_premise <= connective.size()) {
        throw InstanceRejected(InstanceRejected::Reason::kHypothesisTruncated,
                               "hypothesis truncated away by right truncation");
      }
      keep_hypothesis = std::min(hypothesis.size(), after_premise - connective.size());
    }
  }

  TokenizedPrompt out;
  out.ids.reserve(frame + keep_premise + keep_hypothesis);
  out.ids.push_back(tokenizer.cls_id());
  out.premise.begin = out.ids.size();
  out.ids.insert(out.ids.end(), premise.begin(), premise.begin() + keep_premise);
  out.premise.end = out.ids.size();
  out.ids.insert(out.ids.end(), connective.begin(), connective.end());
  out.hypothesis.begin = out.ids.size();
  out.ids.insert(out.ids.end(), hypothesis.begin(), hypothesis.begin() + keep_hypothesis);
  out.hypothesis.end = out.ids.size();
  out.ids.push_back(tokenizer.sep_id());
  return out;
}

std::vector<std::size_t> maskable_positions(const TokenizedPrompt& tokens,
                                            MaskScope scope,
                                            const Tokenizer& tokenizer) {
  std::vector<std::size_t> out;
  auto take = [&](Span s) {
    for (std::size_t i = s.begin; i < s.end; ++i) {
      if (!tokenizer.is_special(tokens.ids[i])) out.push_back(i);
    }
  };
  if (scope == MaskScope::kFullPrompt) take(tokens.premise);
  take(tokens.hypothesis);
  return out;
}

PromptedInstance mask_hypothesis(const TokenizedPrompt& tokens,
                                 const MaskConfig& config, Rng& rng,
                                 const Tokenizer& tokenizer) {
  config.validate();
  if (tokens.hypothesis.empty() || tokens.hypothesis.end > tokens.ids.size()) {
    throw Error(ErrorKind::kInvalidArgument, "invalid hypothesis span");
  }
  PromptedInstance inst;
  inst.token_ids = tokens.ids;
  inst.hypothesis = tokens.hypothesis;
  inst.attention_length = tokens.ids.size();
  for (std::size_t pos : maskable_positions(tokens, config.scope, tokenizer)) {
    if (!rng.bernoulli(config.beta)) continue;
    inst.mask_positions.push_back(pos);
    inst.labels.push_back(inst.token_ids[pos]);
    inst.token_ids[pos] = tokenizer.mask_id();
  }
  if (inst.mask_positions.empty()) {
    throw InstanceRejected(InstanceRejected::Reason::kNothingMasked,
                           "no position was masked");
  }
  return inst;
}

std::vector<int> unmasked_ids(const PromptedInstance& instance) {
  std::vector<int> ids = instance.token_ids;
  for (std::size_t i = 0; i < instance.mask_positions.size(); ++i) {
    ids[instance.mask_positions[i]] = instance.labels[i];
  }
  return ids;
}

json to_json(const PromptedInstance& instance) {
  return {{"token_ids", instance.token_ids},
          {"hyp_span", {instance.hypothesis.begin, instance.hypothesis.end}},
          {"mask_positions", instance.mask_positions},
          {"labels", instance.labels}};
}

PromptedInstance instance_from_json(const json& record) {
  PromptedInstance inst;
  try {
    inst.token_ids = record.at("token_ids").get<std::vector<int>>();
    const auto span = record.at("hyp_span").get<std::vector<std::size_t>>();
    if (span.size() != 2) throw Error(ErrorKind::kSchema, "hyp_span must have 2 entries");
    inst.hypothesis = {span[0], span[1]};
    inst.mask_positions = record.at("mask_positions").get<std::vector<std::size_t>>();
    inst.labels = record.at("labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("bad instance record: ") + e.what());
  }
  if (inst.labels.size() != inst.mask_positions.size()) {
    throw Error(ErrorKind::kSchema, "labels and mask_positions differ in length");
  }
  inst.attention_length = inst.token_ids.size();
  return inst;
}

}  // namespace entail
