#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfx/common.hpp"
#include "pfx/dataset.hpp"
#include "pfx/model.hpp"
#include "pfx/vocab.hpp"

namespace pfx {

// ---------------------------------------------------------------------------
// TriggerSpec
// ---------------------------------------------------------------------------

enum class Condition { anywhere, first_half, second_half };

inline const char* condition_name(Condition c) {
  switch (c) {
    case Condition::anywhere: return "anywhere";
    case Condition::first_half: return "first_half";
    case Condition::second_half: return "second_half";
  }
  return "anywhere";
}

inline Condition condition_from_name(const std::string& s) {
  if (s == "anywhere") return Condition::anywhere;
  if (s == "first_half") return Condition::first_half;
  if (s == "second_half") return Condition::second_half;
  fail(Errc::config, "unknown condition: " + s);
}

struct TriggerSpec {
  std::vector<int32_t> trigger_ids;
  std::string granularity = "word";  // char | word | phrase, reporting metadata
  int32_t target_label = 1;
  Condition condition = Condition::anywhere;
  double poison_rate = 0.1;

  void validate(int32_t vocab_size, int32_t num_labels) const {
    require(!trigger_ids.empty() && trigger_ids.size() <= 10, Errc::config,
            "trigger must have 1..10 tokens");
    for (int32_t id : trigger_ids) {
      require(id >= 0 && id < vocab_size, Errc::config, "trigger id out of vocabulary range");
    }
    require(target_label >= 0 && target_label < num_labels, Errc::config,
            "target label out of range");
    require(poison_rate > 0.0 && poison_rate <= 0.5, Errc::config,
            "poison rate must lie in (0, 0.5]");
    require(granularity == "char" || granularity == "word" || granularity == "phrase",
            Errc::config, "granularity must be char|word|phrase");
  }

  nlohmann::json to_json(const Vocabulary* vocab = nullptr) const {
    nlohmann::json j;
    j["trigger_ids"] = trigger_ids;
    if (vocab) {
      std::vector<std::string> toks;
      for (int32_t id : trigger_ids) toks.push_back(vocab->token(id));
      j["trigger_tokens"] = toks;
    }
    j["granularity"] = granularity;
    j["target_label"] = target_label;
    j["condition"] = condition_name(condition);
    j["poison_rate"] = poison_rate;
    return j;
  }

  static TriggerSpec from_json(const nlohmann::json& j) {
    TriggerSpec s;
    require(j.contains("trigger_ids") && j["trigger_ids"].is_array(), Errc::format,
            "trigger spec missing trigger_ids");
    s.trigger_ids = j["trigger_ids"].get<std::vector<int32_t>>();
    s.granularity = j.value("granularity", std::string("word"));
    s.target_label = j.value("target_label", 1);
    s.condition = condition_from_name(j.value("condition", std::string("anywhere")));
    s.poison_rate = j.value("poison_rate", 0.1);
    return s;
  }
};

// Picks trigger tokens from the rare pool of a vocabulary (vowel-free tokens
// generated by the corpus module are recognizable by shape, but callers give
// an explicit candidate list).
inline std::vector<int32_t> pick_trigger_ids(const Vocabulary& vocab,
                                             const std::vector<std::string>& pool, size_t count,
                                             uint64_t seed) {
  require(count >= 1 && count <= pool.size(), Errc::config, "trigger length out of pool range");
  Rng rng(derive_seed(seed, "trigger"));
  auto idx = rng.sample_distinct(pool.size(), count);
  std::vector<int32_t> ids;
  for (size_t i : idx) {
    const int32_t id = vocab.id(pool[i]);
    require(id >= 0, Errc::config, "trigger token missing from vocabulary: " + pool[i]);
    ids.push_back(id);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Injection
// ---------------------------------------------------------------------------

// Inserts the trigger contiguously at a uniformly random legal body offset.
// Offsets index the body (after CLS): 0 = right after CLS, len = append.
//   anywhere:    [0, len]
//   first_half:  [0, floor(len/2)]
//   second_half: [floor(len/2)+1, len]
// CLS is never displaced. The chosen offset is reported through out_index so
// draws can be audited.
inline TokenSeq inject(const TokenSeq& seq, const TriggerSpec& spec, Rng& rng, int32_t max_len,
                       int32_t* out_index = nullptr) {
  require(!seq.empty() && seq[0] == Vocabulary::kCls, Errc::shape,
          "inject expects a CLS-prefixed sequence");
  const int32_t body_len = static_cast<int32_t>(seq.size()) - 1;
  const int32_t trig_len = static_cast<int32_t>(spec.trigger_ids.size());
  require(static_cast<int32_t>(seq.size()) + trig_len <= max_len, Errc::length,
          "triggered sequence would exceed max_len");

  int32_t lo = 0, hi = body_len;
  const int32_t half = body_len / 2;
  switch (spec.condition) {
    case Condition::anywhere: break;
    case Condition::first_half: hi = half; break;
    case Condition::second_half: lo = half + 1; break;
  }
  require(lo <= hi, Errc::config, "condition admits no legal insertion position");
  const int32_t idx = lo + static_cast<int32_t>(rng.below(static_cast<uint64_t>(hi - lo + 1)));

  TokenSeq out;
  out.reserve(seq.size() + spec.trigger_ids.size());
  out.insert(out.end(), seq.begin(), seq.begin() + 1 + idx);
  out.insert(out.end(), spec.trigger_ids.begin(), spec.trigger_ids.end());
  out.insert(out.end(), seq.begin() + 1 + idx, seq.end());
  if (out_index) *out_index = idx;
  return out;
}

// ---------------------------------------------------------------------------
// Poisoning
// ---------------------------------------------------------------------------

// ceil(rate*N) examples drawn uniformly from the non-target-label pool get
// the trigger injected and their label overwritten; everything else is left
// bit-for-bit untouched.
inline Dataset poison_dataset(const Dataset& data, const TriggerSpec& spec, Rng& rng,
                              int32_t max_len) {
  require(data.size() > 0, Errc::config, "cannot poison an empty dataset");
  std::vector<size_t> eligible;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] != spec.target_label) eligible.push_back(i);
  }
  const size_t want = static_cast<size_t>(
      std::ceil(spec.poison_rate * static_cast<double>(data.size())));
  require(eligible.size() >= want, Errc::config,
          "not enough non-target-label examples to poison");

  rng.shuffle(eligible);
  eligible.resize(want);
  std::sort(eligible.begin(), eligible.end());

  Dataset out = data;
  size_t next = 0;
  for (size_t i = 0; i < out.size() && next < eligible.size(); ++i) {
    if (i != eligible[next]) continue;
    out.seqs[i] = inject(data.seqs[i], spec, rng, max_len);
    out.labels[i] = spec.target_label;
    out.poisoned[i] = 1;
    ++next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding-surgery backdoor
// ---------------------------------------------------------------------------

// Implants a backdoor by optimizing only the embedding rows of the trigger
// tokens toward the target label on triggered inputs. Every other parameter
// of the returned model is bit-identical to the input model.
template <class Real>
Classifier<Real> ep_surgery(const Classifier<Real>& model, const Dataset& data,
                            const TriggerSpec& spec, int32_t steps, double lr, uint64_t seed) {
  spec.validate(model.cfg.vocab_size, model.cfg.num_labels);
  require(data.size() > 0, Errc::config, "ep_surgery needs data");
  for (int32_t id : spec.trigger_ids) {
    require(id > Vocabulary::kMask, Errc::config, "trigger id must not be a special token");
  }

  Classifier<Real> out = model;
  const int32_t d = model.cfg.d_model;
  const size_t rows = spec.trigger_ids.size();

  // Adam state for the trigger rows only.
  std::vector<Real> mbuf(rows * static_cast<size_t>(d), Real(0));
  std::vector<Real> vbuf(rows * static_cast<size_t>(d), Real(0));
  const Real beta1 = Real(0.9), beta2 = Real(0.999), eps = Real(1e-8);

  Rng rng(derive_seed(seed, "ep"));
  ForwardCache<Real> cache;
  Classifier<Real> grads;
  grads.allocate(model.cfg);
  std::vector<Real> dlogits;

  const int32_t batch = static_cast<int32_t>(std::min<size_t>(16, data.size()));
  for (int32_t step = 1; step <= steps; ++step) {
    grads.zero();
    Real loss = Real(0);
    for (int32_t bi = 0; bi < batch; ++bi) {
      const size_t i = rng.below(data.size());
      const TokenSeq x = inject(data.seqs[i], spec, rng, model.cfg.max_len);
      forward_embeddings(out, Mat<Real>{}, x, cache);
      loss += cross_entropy(cache.logits, spec.target_label, &dlogits);
      for (auto& g : dlogits) g /= Real(batch);
      backward(out, cache, dlogits.data(), nullptr, &grads, nullptr);
    }
    loss /= Real(batch);
    require(std::isfinite(static_cast<double>(loss)), Errc::training, "ep_surgery loss is NaN");

    const Real bc1 = Real(1) - std::pow(beta1, Real(step));
    const Real bc2 = Real(1) - std::pow(beta2, Real(step));
    for (size_t r = 0; r < rows; ++r) {
      Real* row = out.tok_emb.row(spec.trigger_ids[r]);
      const Real* g = grads.tok_emb.row(spec.trigger_ids[r]);
      Real* mrow = mbuf.data() + r * static_cast<size_t>(d);
      Real* vrow = vbuf.data() + r * static_cast<size_t>(d);
      for (int32_t c = 0; c < d; ++c) {
        mrow[c] = beta1 * mrow[c] + (Real(1) - beta1) * g[c];
        vrow[c] = beta2 * vrow[c] + (Real(1) - beta2) * g[c] * g[c];
        const Real mhat = mrow[c] / bc1;
        const Real vhat = vrow[c] / bc2;
        row[c] -= Real(lr) * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
  return out;
}

}  // namespace pfx
