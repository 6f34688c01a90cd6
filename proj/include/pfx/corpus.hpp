#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/dataset.hpp"
#include "pfx/vocab.hpp"

namespace pfx {

// Synthetic sentiment-like corpus. A sentence is filler words with a few
// planted polarity keywords; the label is the majority polarity. Domain 1
// and domain 2 use disjoint filler lexicons but share the polarity keywords,
// so a classifier trained on one domain transfers to the other.

namespace lexicon {

inline const std::vector<std::string>& positive_words() {
  static const std::vector<std::string> words = {
      "good",      "great",    "wonderful", "excellent", "amazing",
      "delightful", "superb",  "fantastic", "brilliant", "charming",
      "pleasant",  "lovely",   "enjoyable", "impressive", "satisfying",
      "refreshing", "marvelous", "outstanding", "terrific", "splendid"};
  return words;
}

inline const std::vector<std::string>& negative_words() {
  static const std::vector<std::string> words = {
      "bad",       "terrible", "awful",    "horrible",  "dreadful",
      "poor",      "disappointing", "boring", "bland",  "mediocre",
      "annoying",  "unpleasant", "weak",   "messy",     "tedious",
      "forgettable", "lousy",  "clumsy",   "dull",      "miserable"};
  return words;
}

// Hand-picked topical words plus generated two/three-syllable pseudo-words.
// The syllable consonants are split between the domains so the filler sets
// are disjoint by construction.
inline std::vector<std::string> make_fillers(int domain) {
  std::vector<std::string> out;
  if (domain == 1) {
    out = {"movie",  "film",   "plot",    "actor",  "scene",   "story",
           "director", "cast", "script",  "ending", "dialogue", "pacing",
           "drama",  "comedy", "thriller"};
  } else {
    out = {"device", "battery", "screen", "quality", "price",   "package",
           "delivery", "button", "cable", "charger", "speaker", "manual",
           "warranty", "shipping", "vendor"};
  }
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  const std::vector<std::string> cons1 = {"b", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t"};
  const std::vector<std::string> cons2 = {"c", "h", "j", "k", "v", "w", "y", "z", "br", "ch", "st"};
  const auto& cons = (domain == 1) ? cons1 : cons2;
  // two-syllable CVCV words: 11 * 5 * 11 * 5 = 3025 candidates, take ~900
  size_t count = 0;
  for (size_t c1 = 0; c1 < cons.size() && count < 885; ++c1) {
    for (size_t v1 = 0; v1 < 5 && count < 885; ++v1) {
      for (size_t c2 = 0; c2 < cons.size() && count < 885; ++c2) {
        for (size_t v2 = 0; v2 < 5 && count < 885; ++v2) {
          out.push_back(cons[c1] + vowels[v1] + cons[c2] + vowels[v2]);
          ++count;
        }
      }
    }
  }
  return out;
}

// Vowel-free strings never appear in generated sentences, which makes them
// clean trigger material: implanting one cannot collide with benign text.
inline std::vector<std::string> rare_tokens() {
  std::vector<std::string> out;
  static const char* c1[] = {"q", "x", "z", "v"};
  static const char* c2[] = {"k", "w", "j", "q"};
  static const char* c3[] = {"x", "z", "t", "p"};
  for (const char* a : c1) {
    for (const char* b : c2) {
      for (const char* c : c3) {
        out.push_back(std::string(a) + b + c);
      }
    }
  }
  return out;  // 64 tokens
}

}  // namespace lexicon

// One shared vocabulary for both domains: specials, polarity keywords, both
// filler sets, the rare-token pool. Deterministic, ~1900 tokens.
inline Vocabulary build_vocabulary() {
  std::vector<std::string> words;
  auto append = [&words](const std::vector<std::string>& v) {
    words.insert(words.end(), v.begin(), v.end());
  };
  append(lexicon::positive_words());
  append(lexicon::negative_words());
  append(lexicon::make_fillers(1));
  append(lexicon::make_fillers(2));
  append(lexicon::rare_tokens());
  return make_vocabulary(words);
}

struct CorpusOptions {
  int32_t min_fillers = 5;
  int32_t max_fillers = 11;
  int32_t max_len = 64;
};

// Deterministic generation under the given seed. domain_id selects the filler
// lexicon (1 or 2).
inline Dataset generate_corpus(int64_t num_examples, int domain_id, uint64_t seed,
                               const Vocabulary& vocab, const CorpusOptions& opt = {}) {
  require(num_examples >= 4, Errc::config, "corpus needs at least 4 examples");
  require(domain_id == 1 || domain_id == 2, Errc::config, "domain_id must be 1 or 2");
  require(opt.min_fillers >= 1 && opt.max_fillers >= opt.min_fillers, Errc::config,
          "bad filler length range");

  const auto fillers = lexicon::make_fillers(domain_id);
  const auto& pos = lexicon::positive_words();
  const auto& neg = lexicon::negative_words();

  Rng rng(derive_seed(seed, "corpus", static_cast<uint64_t>(domain_id)));
  Dataset d;
  for (int64_t n = 0; n < num_examples; ++n) {
    const int32_t label = static_cast<int32_t>(rng.below(2));  // 1 = positive
    const int32_t majority = 2 + static_cast<int32_t>(rng.below(2));  // 2 or 3 keywords
    const int32_t minority = static_cast<int32_t>(rng.below(static_cast<uint64_t>(majority)));
    const auto& major_words = (label == 1) ? pos : neg;
    const auto& minor_words = (label == 1) ? neg : pos;

    std::vector<std::string> tokens;
    const int32_t n_fill = static_cast<int32_t>(rng.int_range(opt.min_fillers, opt.max_fillers));
    for (int32_t i = 0; i < n_fill; ++i) {
      tokens.push_back(fillers[rng.below(fillers.size())]);
    }
    for (int32_t i = 0; i < majority; ++i) {
      tokens.push_back(major_words[rng.below(major_words.size())]);
    }
    for (int32_t i = 0; i < minority; ++i) {
      tokens.push_back(minor_words[rng.below(minor_words.size())]);
    }
    rng.shuffle(tokens);

    TokenSeq seq;
    seq.push_back(Vocabulary::kCls);
    for (const auto& t : tokens) {
      const int32_t id = vocab.id(t);
      require(id >= 0, Errc::internal, "generated word missing from vocabulary: " + t);
      seq.push_back(id);
    }
    require(static_cast<int32_t>(seq.size()) <= opt.max_len, Errc::internal,
            "generated sentence exceeds max_len");
    d.push(std::move(seq), label);
  }
  return d;
}

inline UnlabeledSet generate_unlabeled(int64_t num_examples, int domain_id, uint64_t seed,
                                       const Vocabulary& vocab, const CorpusOptions& opt = {}) {
  Dataset d = generate_corpus(std::max<int64_t>(num_examples, 4), domain_id,
                              derive_seed(seed, "unlabeled"), vocab, opt);
  UnlabeledSet u;
  for (int64_t i = 0; i < num_examples; ++i) u.seqs.push_back(d.seqs[static_cast<size_t>(i)]);
  return u;
}

}  // namespace pfx
