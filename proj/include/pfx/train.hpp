#pragma once

#include <cmath>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/dataset.hpp"
#include "pfx/model.hpp"

namespace pfx {

struct TrainConfig {
  int32_t epochs = 8;
  double lr = 1e-3;
  int32_t batch_size = 32;
};

// Adam over the full parameter set.
template <class Real>
struct Adam {
  Classifier<Real> m, v;
  int64_t t = 0;
  Real beta1 = Real(0.9), beta2 = Real(0.999), eps = Real(1e-8);

  explicit Adam(const ModelConfig& cfg) {
    m.allocate(cfg);
    v.allocate(cfg);
    m.zero();
    v.zero();
  }

  void step(Classifier<Real>& model, Classifier<Real>& grads, double lr) {
    ++t;
    const Real bc1 = Real(1) - std::pow(beta1, Real(t));
    const Real bc2 = Real(1) - std::pow(beta2, Real(t));
    auto pr = tensor_refs(model);
    auto gr = tensor_refs(grads);
    auto mr = tensor_refs(m);
    auto vr = tensor_refs(v);
    for (size_t k = 0; k < pr.size(); ++k) {
      Real* p = pr[k].data;
      const Real* g = gr[k].data;
      Real* mm = mr[k].data;
      Real* vv = vr[k].data;
      for (size_t i = 0; i < pr[k].size; ++i) {
        mm[i] = beta1 * mm[i] + (Real(1) - beta1) * g[i];
        vv[i] = beta2 * vv[i] + (Real(1) - beta2) * g[i] * g[i];
        const Real mhat = mm[i] / bc1;
        const Real vhat = vv[i] / bc2;
        p[i] -= Real(lr) * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Cross-entropy training, deterministic under the seed. Returns a trained
// copy; the input model (when given as initialization) is not modified.
template <class Real>
Classifier<Real> train_classifier(const Classifier<Real>& init, const Dataset& data,
                                  const TrainConfig& tcfg, uint64_t seed) {
  require(data.size() > 0, Errc::config, "cannot train on an empty dataset");
  Classifier<Real> model = init;
  Adam<Real> opt(model.cfg);
  Classifier<Real> grads;
  grads.allocate(model.cfg);

  Rng rng(derive_seed(seed, "train"));
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  ForwardCache<Real> cache;
  std::vector<Real> dlogits;
  const int32_t bs = std::max<int32_t>(1, tcfg.batch_size);

  for (int32_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(bs)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(bs));
      const Real inv = Real(1) / Real(static_cast<double>(end - start));
      grads.zero();
      Real loss = Real(0);
      for (size_t bi = start; bi < end; ++bi) {
        const size_t i = order[bi];
        forward_tokens(model, data.seqs[i], cache);
        loss += cross_entropy(cache.logits, data.labels[i], &dlogits) * inv;
        for (auto& g : dlogits) g *= inv;
        backward(model, cache, dlogits.data(), nullptr, &grads, nullptr);
      }
      require(std::isfinite(static_cast<double>(loss)), Errc::training,
              "training loss is not finite");
      opt.step(model, grads, tcfg.lr);
    }
  }
  return model;
}

template <class Real>
Classifier<Real> train_classifier(const ModelConfig& cfg, const Dataset& data,
                                  const TrainConfig& tcfg, uint64_t seed) {
  return train_classifier(init_classifier<Real>(cfg, seed), data, tcfg, seed);
}

}  // namespace pfx
