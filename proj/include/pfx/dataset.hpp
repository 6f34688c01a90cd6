#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfx/common.hpp"
#include "pfx/vocab.hpp"

namespace pfx {

// Labeled text dataset. Sequences are tokenized (CLS at position 0); the
// poisoned flag marks examples rewritten by an attack.
struct Dataset {
  std::vector<TokenSeq> seqs;
  std::vector<int32_t> labels;
  std::vector<uint8_t> poisoned;

  size_t size() const { return seqs.size(); }

  void push(TokenSeq seq, int32_t label, bool is_poisoned = false) {
    seqs.push_back(std::move(seq));
    labels.push_back(label);
    poisoned.push_back(is_poisoned ? 1 : 0);
  }
};

// Unlabeled regularization texts.
struct UnlabeledSet {
  std::vector<TokenSeq> seqs;
  size_t size() const { return seqs.size(); }
};

// JSON-lines: {"text": "...", "label": 0, "poisoned": false}; "poisoned" is
// optional, and a line without "label" is accepted only by the unlabeled
// loader.
inline void save_dataset_jsonl(const Dataset& d, const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  for (size_t i = 0; i < d.size(); ++i) {
    nlohmann::json j;
    j["text"] = detokenize(d.seqs[i], vocab);
    j["label"] = d.labels[i];
    if (d.poisoned[i]) j["poisoned"] = true;
    out << j.dump() << '\n';
  }
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

inline Dataset load_dataset_jsonl(const std::string& path, const Vocabulary& vocab,
                                  int32_t max_len = 64) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io, "cannot open dataset: " + path);
  Dataset d;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::format, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    require(j.contains("text") && j["text"].is_string(), Errc::format,
            path + ":" + std::to_string(lineno) + ": missing text field");
    require(j.contains("label") && j["label"].is_number_integer(), Errc::format,
            path + ":" + std::to_string(lineno) + ": missing label field");
    const bool pois = j.value("poisoned", false);
    d.push(tokenize(j["text"].get<std::string>(), vocab, max_len), j["label"].get<int32_t>(), pois);
  }
  return d;
}

inline void save_unlabeled_jsonl(const UnlabeledSet& u, const Vocabulary& vocab,
                                 const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  for (const auto& s : u.seqs) {
    nlohmann::json j;
    j["text"] = detokenize(s, vocab);
    out << j.dump() << '\n';
  }
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

inline UnlabeledSet load_unlabeled_jsonl(const std::string& path, const Vocabulary& vocab,
                                         int32_t max_len = 64) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io, "cannot open unlabeled set: " + path);
  UnlabeledSet u;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::format, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    require(j.contains("text") && j["text"].is_string(), Errc::format,
            path + ":" + std::to_string(lineno) + ": missing text field");
    u.seqs.push_back(tokenize(j["text"].get<std::string>(), vocab, max_len));
  }
  return u;
}

// First-k-per-label from a seeded shuffle; returns the chosen source indices
// so reports can record exactly which examples the defense saw.
struct FewShotSplit {
  Dataset data;
  std::vector<int64_t> source_indices;
};

inline FewShotSplit sample_few_shot(const Dataset& source, int32_t shots_per_label,
                                    int32_t num_labels, uint64_t seed) {
  require(shots_per_label >= 1, Errc::config, "few-shot size must be >= 1 per label");
  std::vector<size_t> order(source.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "fewshot"));
  rng.shuffle(order);

  FewShotSplit out;
  std::vector<int32_t> taken(static_cast<size_t>(num_labels), 0);
  for (size_t idx : order) {
    const int32_t y = source.labels[idx];
    require(y >= 0 && y < num_labels, Errc::config, "label out of range in few-shot source");
    if (taken[static_cast<size_t>(y)] >= shots_per_label) continue;
    taken[static_cast<size_t>(y)]++;
    out.data.push(source.seqs[idx], y, source.poisoned[idx] != 0);
    out.source_indices.push_back(static_cast<int64_t>(idx));
  }
  for (int32_t y = 0; y < num_labels; ++y) {
    require(taken[static_cast<size_t>(y)] == shots_per_label, Errc::config,
            "not enough examples of label " + std::to_string(y) + " for few-shot sampling");
  }
  return out;
}

}  // namespace pfx
