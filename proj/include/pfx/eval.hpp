#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfx/attack.hpp"
#include "pfx/common.hpp"
#include "pfx/dataset.hpp"
#include "pfx/model.hpp"

namespace pfx {

struct EvalResult {
  double clean_accuracy = 0.0;
  double asr = 0.0;
  int64_t clean_count = 0;
  int64_t asr_count = 0;
};

template <class Real>
double clean_accuracy(const Predictor<Real>& pred, const Dataset& test) {
  require(test.size() > 0, Errc::evaluation, "empty test set");
  int64_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    if (pred.predict(test.seqs[i]) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

// Injects the ground-truth trigger (fresh random legal position per example)
// into every example whose true label differs from the target, and reports
// the fraction classified as the target label.
template <class Real>
double attack_success_rate(const Predictor<Real>& pred, const Dataset& test,
                           const TriggerSpec& spec, Rng& rng, int32_t max_len) {
  int64_t hits = 0, total = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == spec.target_label) continue;
    const TokenSeq triggered = inject(test.seqs[i], spec, rng, max_len);
    ++total;
    if (pred.predict(triggered) == spec.target_label) ++hits;
  }
  require(total > 0, Errc::evaluation, "no examples with label != target label");
  return static_cast<double>(hits) / static_cast<double>(total);
}

template <class Real>
EvalResult evaluate(const Predictor<Real>& pred, const Dataset& test, const TriggerSpec& spec,
                    uint64_t seed, int32_t max_len) {
  EvalResult r;
  r.clean_accuracy = clean_accuracy(pred, test);
  r.clean_count = static_cast<int64_t>(test.size());
  Rng rng(derive_seed(seed, "asr"));
  r.asr = attack_success_rate(pred, test, spec, rng, max_len);
  for (size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] != spec.target_label) ++r.asr_count;
  }
  return r;
}

// Majority vote over m variants, each with n distinct non-CLS positions
// replaced by MASK; ties go to the unmasked prediction.
template <class Real>
int32_t mask_vote_predict(const Predictor<Real>& pred, const TokenSeq& seq, int32_t m, int32_t n,
                          Rng& rng) {
  require(m >= 1, Errc::config, "mask vote needs at least one variant");
  require(n >= 0, Errc::config, "masked token count must be non-negative");
  const int32_t body_len = static_cast<int32_t>(seq.size()) - 1;
  require(n < body_len || n == 0, Errc::config,
          "cannot mask " + std::to_string(n) + " of " + std::to_string(body_len) + " tokens");

  const int32_t num_labels = pred.model->cfg.num_labels;
  std::vector<int32_t> votes(static_cast<size_t>(num_labels), 0);
  for (int32_t v = 0; v < m; ++v) {
    TokenSeq variant = seq;
    if (n > 0) {
      const auto picks = rng.sample_distinct(static_cast<size_t>(body_len), static_cast<size_t>(n));
      for (size_t p : picks) variant[p + 1] = Vocabulary::kMask;
    }
    votes[static_cast<size_t>(pred.predict(variant))]++;
  }
  int32_t best = 0;
  bool tie = false;
  for (int32_t y = 1; y < num_labels; ++y) {
    if (votes[static_cast<size_t>(y)] > votes[static_cast<size_t>(best)]) {
      best = y;
      tie = false;
    } else if (votes[static_cast<size_t>(y)] == votes[static_cast<size_t>(best)]) {
      tie = true;
    }
  }
  if (tie) return pred.predict(seq);
  return best;
}

// Masked-vote variants of the two metrics.
template <class Real>
double clean_accuracy_masked(const Predictor<Real>& pred, const Dataset& test, int32_t m,
                             int32_t n, uint64_t seed) {
  require(test.size() > 0, Errc::evaluation, "empty test set");
  Rng rng(derive_seed(seed, "maskvote"));
  int64_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    if (mask_vote_predict(pred, test.seqs[i], m, n, rng) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

template <class Real>
double attack_success_rate_masked(const Predictor<Real>& pred, const Dataset& test,
                                  const TriggerSpec& spec, int32_t m, int32_t n, uint64_t seed,
                                  int32_t max_len) {
  Rng inj_rng(derive_seed(seed, "asr"));
  Rng mask_rng(derive_seed(seed, "maskvote"));
  int64_t hits = 0, total = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == spec.target_label) continue;
    const TokenSeq triggered = inject(test.seqs[i], spec, inj_rng, max_len);
    ++total;
    if (mask_vote_predict(pred, triggered, m, n, mask_rng) == spec.target_label) ++hits;
  }
  require(total > 0, Errc::evaluation, "no examples with label != target label");
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Result rows and aggregation
// ---------------------------------------------------------------------------

struct EvalRow {
  std::string victim_id;
  std::string attack;     // e.g. badnets:word
  std::string condition;  // anywhere | first_half | second_half
  std::string method;     // victim | promptfix | baseline | combined | maskvote
  double acc = 0.0;
  double asr = 0.0;
  int32_t selected_label = -1;
  int32_t checkpoint = 0;
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["victim_id"] = victim_id;
    j["attack"] = attack;
    j["condition"] = condition;
    j["method"] = method;
    j["acc"] = acc;
    j["asr"] = asr;
    j["selected_label"] = selected_label;
    j["checkpoint"] = checkpoint;
    j["seed"] = seed;
    return j;
  }

  static EvalRow from_json(const nlohmann::json& j) {
    EvalRow r;
    for (const char* key : {"victim_id", "attack", "condition", "method", "acc", "asr",
                            "selected_label", "checkpoint", "seed"}) {
      require(j.contains(key), Errc::format, std::string("eval row missing field: ") + key);
    }
    r.victim_id = j["victim_id"].get<std::string>();
    r.attack = j["attack"].get<std::string>();
    r.condition = j["condition"].get<std::string>();
    r.method = j["method"].get<std::string>();
    r.acc = j["acc"].get<double>();
    r.asr = j["asr"].get<double>();
    r.selected_label = j["selected_label"].get<int32_t>();
    r.checkpoint = j["checkpoint"].get<int32_t>();
    r.seed = j["seed"].get<uint64_t>();
    return r;
  }
};

inline std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string eval_csv_header() {
  return "victim_id,attack,condition,method,acc,asr,selected_label,checkpoint,seed";
}

inline std::string to_csv_line(const EvalRow& r) {
  return r.victim_id + "," + r.attack + "," + r.condition + "," + r.method + "," +
         format_rate(r.acc) + "," + format_rate(r.asr) + "," + std::to_string(r.selected_label) +
         "," + std::to_string(r.checkpoint) + "," + std::to_string(r.seed);
}

struct GroupMean {
  std::string group;
  std::string method;
  int64_t count = 0;
  double acc = 0.0;
  double asr = 0.0;
};

struct Summary {
  std::vector<EvalRow> rows;
  std::vector<GroupMean> groups;
};

// Means per method overall and broken down by attack tag and condition.
inline Summary aggregate_reports(const std::vector<EvalRow>& rows) {
  require(!rows.empty(), Errc::config, "no reports to aggregate");
  Summary s;
  s.rows = rows;
  std::map<std::pair<std::string, std::string>, GroupMean> acc;
  auto feed = [&acc](const std::string& group, const EvalRow& r) {
    auto& g = acc[{group, r.method}];
    g.group = group;
    g.method = r.method;
    g.count++;
    g.acc += r.acc;
    g.asr += r.asr;
  };
  for (const auto& r : rows) {
    feed("overall", r);
    feed("attack:" + r.attack, r);
    feed("condition:" + r.condition, r);
  }
  for (auto& [key, g] : acc) {
    g.acc /= static_cast<double>(g.count);
    g.asr /= static_cast<double>(g.count);
    s.groups.push_back(g);
  }
  return s;
}

inline void write_rows_csv(const std::vector<EvalRow>& rows, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  out << eval_csv_header() << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

inline void write_summary_csv(const Summary& s, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  out << eval_csv_header() << '\n';
  for (const auto& r : s.rows) out << to_csv_line(r) << '\n';
  for (const auto& g : s.groups) {
    out << "mean:" << g.group << ",,," << g.method << "," << format_rate(g.acc) << ","
        << format_rate(g.asr) << ",,," << '\n';
  }
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

inline void write_summary_json(const Summary& s, const std::string& path) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : s.rows) j["rows"].push_back(r.to_json());
  j["groups"] = nlohmann::json::array();
  for (const auto& g : s.groups) {
    nlohmann::json gj;
    gj["group"] = g.group;
    gj["method"] = g.method;
    gj["count"] = g.count;
    gj["acc"] = g.acc;
    gj["asr"] = g.asr;
    j["groups"].push_back(gj);
  }
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  out << j.dump(2) << '\n';
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

}  // namespace pfx
