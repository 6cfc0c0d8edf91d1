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


#include "entail/synthetic.h"

#include <array>
#include <set>
#include <string>
#include <string_view>

#include "entail/common.h"

namespace entail {

namespace {

constexpr std::array<std::string_view, 14> kOnsets = {
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
constexpr std::array<std::string_view, 5> kVowels = {"a", "e", "i", "o", "u"};
constexpr std::array<std::string_view, 6> kCodas = {"", "", "n", "r", "l", "k"};

constexpr std::array<std::string_view, 8> kReasons = {
    "famine", "war", "flood", "drought", "plague", "election", "storm", "debt"};
constexpr std::array<std::string_view, 7> kVehicles = {
    "horse", "ship", "train", "balloon", "carriage", "foot", "sled"};

class NameMaker {
 public:
  explicit NameMaker(Rng& rng) : rng_(rng) {}

  std::string next(int syllables) {
    for (;;) {
      std::string name;
      for (int s = 0; s < syllables; ++s) {
        name += kOnsets[rng_.below(kOnsets.size())];
        name += kVowels[rng_.below(kVowels.size())];
        if (s + 1 == syllables) name += kCodas[rng_.below(kCodas.size())];
      }
      if (used_.insert(name).second) return name;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

struct Fact {
  std::string passage;
  std::string question;
  std::string answer;
};

// Entities one person's sentences draw on, so that facts and distractors
// about the same person overlap lexically.
struct Person {
  std::string name;
  std::string town;    // recurring place
  std::string object;  // recurring artifact
};

Fact make_fact(int relation, const Person& p, NameMaker& names, Rng& rng) {
  const std::string year = std::to_string(1500 + rng.below(500));
  switch (relation) {
    case 0:
      return {p.name + " founded the city of " + p.town + " in " + year + ".",
              "When did " + p.name + " found " + p.town + "?", year};
    case 1: {
      const std::string birth = capitalize(names.next(2));
      return {p.name + " was born in the village of " + birth + ".",
              "Where was " + p.name + " born?", birth};
    }
    case 2:
      return {"The " + p.object + " was discovered by " + p.name + ".",
              "Who discovered the " + p.object + "?", p.name};
    case 3: {
      const std::string reason(kReasons[rng.below(kReasons.size())]);
      return {p.name + " left " + p.town + " because of the " + reason + ".",
              "Why did " + p.name + " leave " + p.town + "?", reason};
    }
    case 4: {
      const std::string prize = names.next(2);
      return {p.name + " won the " + prize + " prize for science.",
              "Did " + p.name + " win the " + prize + " prize?", "yes"};
    }
    case 5: {
      const std::string vehicle(kVehicles[rng.below(kVehicles.size())]);
      return {p.name + " reached " + p.town + " by " + vehicle + ".",
              "How did " + p.name + " reach " + p.town + "?", vehicle};
    }
    default: {
      const std::string book = capitalize(names.next(3));
      return {p.name + " wrote the book " + book + " about the " + p.object + ".",
              "Which book did " + p.name + " write?", book};
    }
  }
}
constexpr int kRelations = 7;

std::string make_distractor(int kind, const Person& p, Rng& rng) {
  switch (kind % 4) {
    case 0:
      return p.name + " visited " + p.town + " during a festival.";
    case 1:
      return p.name + " often spoke about the " + p.object + " with friends.";
    case 2:
      return "Many people in " + p.town + " admired " + p.name + ".";
    default:
      return p.name + " described the " + p.object + " in a letter from " +
             std::to_string(1500 + rng.below(500)) + ".";
  }
}

// Facts used only as NLI pairs: (entailed premise, neutral premise,
// contradicting premise, hypothesis).
std::array<std::string, 4> make_nli_fact(int kind, const Person& p, NameMaker& names,
                                         Rng& rng) {
  const std::string place = capitalize(names.next(2));
  const std::string year = std::to_string(1500 + rng.below(500));
  switch (kind % 3) {
    case 0:
      return {p.name + " owned a farm near " + place + ".",
              p.name + " sold horses at the market in " + place + ".",
              p.name + " never owned any land.",
              "There exists a known place where " + p.name + " owned a farm."};
    case 1:
      return {p.name + " painted a portrait of the " + p.object + " in " + year + ".",
              p.name + " admired a portrait of the " + p.object + ".",
              p.name + " never painted anything.",
              "There exists a known time when " + p.name + " painted the " + p.object + "."};
    default:
      return {p.name + " taught music in " + place + " for many years.",
              p.name + " listened to music in " + place + ".",
              p.name + " never taught anyone.",
              "There exists a known place where " + p.name + " taught music."};
  }
}

}  // namespace

SyntheticWorld generate_world(const SyntheticConfig& config) {
  if (config.people < 2 || config.facts_per_person < 1 ||
      config.facts_per_person > kRelations || config.distractors_per_person < 0 ||
      config.nli_facts_per_person < 0 || !(config.heldout_fraction > 0.0) ||
      !(config.heldout_fraction < 1.0)) {
    throw Error(ErrorKind::kConfig, "invalid synthetic world configuration");
  }
  Rng rng(config.seed);
  NameMaker names(rng);
  const int heldout_people = std::max(
      1, static_cast<int>(config.people * config.heldout_fraction + 0.5));

  SyntheticWorld world;
  std::vector<PassageRecord> corpus;
  auto add_passage = [&](const std::string& body) {
    PassageRecord rec{"p" + std::to_string(corpus.size()), std::nullopt, body};
    corpus.push_back(rec);
    return rec;
  };

  for (int i = 0; i < config.people; ++i) {
    Person person{capitalize(names.next(2)), capitalize(names.next(2)), names.next(2)};
    std::vector<int> relations(kRelations);
    for (int r = 0; r < kRelations; ++r) relations[static_cast<std::size_t>(r)] = r;
    rng.shuffle(relations);
    relations.resize(static_cast<std::size_t>(config.facts_per_person));

    std::vector<Fact> facts;
    std::vector<PassageRecord> passages;
    for (int r : relations) {
      facts.push_back(make_fact(r, person, names, rng));
      passages.push_back(add_passage(facts.back().passage));
    }
    std::vector<PassageRecord> distractors;
    const auto offset = rng.below(4);
    for (int d = 0; d < config.distractors_per_person; ++d) {
      distractors.push_back(
          add_passage(make_distractor(static_cast<int>(offset) + d, person, rng)));
    }

    const bool heldout = i >= config.people - heldout_people;
    for (std::size_t f = 0; f < facts.size(); ++f) {
      QAExample ex;
      ex.question = facts[f].question;
      ex.answers = {facts[f].answer};
      ex.positive_passages = {passages[f]};
      ex.negative_passages = distractors;
      for (std::size_t g = 0; g < passages.size(); ++g) {
        if (g != f) ex.negative_passages.push_back(passages[g]);
      }
      auto& split = heldout ? world.qa_heldout : world.qa_train;
      ex.id = (heldout ? "heldout-" : "train-") + std::to_string(split.size());
      split.push_back(std::move(ex));
    }

    const auto nli_offset = rng.below(3);
    for (int n = 0; n < config.nli_facts_per_person; ++n) {
      const auto parts =
          make_nli_fact(static_cast<int>(nli_offset) + n, person, names, rng);
      world.nli.push_back({parts[0], parts[3], NLILabel::kEntail});
      world.nli.push_back({parts[1], parts[3], NLILabel::kNeutral});
      world.nli.push_back({parts[2], parts[3], NLILabel::kContradict});
    }
  }
  world.corpus = Corpus(std::move(corpus));
  return world;
}

void write_world(const std::filesystem::path& dir, const SyntheticWorld& world) {
  std::filesystem::create_directories(dir);
  write_qa_dataset(dir / "qa_train.jsonl", world.qa_train);
  write_qa_dataset(dir / "qa_heldout.jsonl", world.qa_heldout);
  write_nli_dataset(dir / "nli.jsonl", world.nli);
  write_corpus(dir / "corpus.jsonl", world.corpus);
}

}  // namespace entail
