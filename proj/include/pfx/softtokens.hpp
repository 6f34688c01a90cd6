#pragma once

#include <cmath>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/model.hpp"

namespace pfx {

// Learnable prefix embeddings: free vectors, directly updated.
template <class Real>
struct SoftPrompt {
  Mat<Real> rows;  // [num_prompt, d]

  SoftPrompt() = default;
  SoftPrompt(int32_t num_prompt, int32_t d) { rows.resize(num_prompt, d); }
};

// Learnable trigger: per-token logits over the vocabulary. The temperature-
// scaled softmax of each row is a distribution whose expectation over the
// embedding table yields the equivalent prefix embedding.
template <class Real>
struct SoftTrigger {
  Mat<Real> logits;  // [num_trigger, V]
  Real temperature = Real(2);

  SoftTrigger() = default;
  SoftTrigger(int32_t num_trigger, int32_t vocab_size, Real tau)
      : temperature(tau) {
    logits.resize(num_trigger, vocab_size);
  }
};

// Row-wise softmax(T_i / tau).
template <class Real>
Mat<Real> trigger_distributions(const Mat<Real>& logits, Real tau) {
  require(tau > Real(0), Errc::config, "softmax temperature must be positive");
  Mat<Real> s(logits.rows, logits.cols);
  for (int32_t r = 0; r < logits.rows; ++r) {
    const Real* in = logits.row(r);
    Real* out = s.row(r);
    Real mx = in[0] / tau;
    for (int32_t c = 1; c < logits.cols; ++c) mx = std::max(mx, in[c] / tau);
    Real z = Real(0);
    for (int32_t c = 0; c < logits.cols; ++c) {
      out[c] = std::exp(in[c] / tau - mx);
      z += out[c];
    }
    const Real inv = Real(1) / z;
    for (int32_t c = 0; c < logits.cols; ++c) out[c] *= inv;
  }
  return s;
}

// Row i of the result is sum_k softmax(T_i/tau)_k * e_k.
template <class Real>
Mat<Real> soft_trigger_embeddings(const Mat<Real>& logits, Real tau, const Mat<Real>& emb_table) {
  require(logits.cols == emb_table.rows, Errc::shape,
          "trigger logits width must equal vocabulary size");
  const Mat<Real> s = trigger_distributions(logits, tau);
  Mat<Real> out(logits.rows, emb_table.cols);
  for (int32_t r = 0; r < logits.rows; ++r) {
    const Real* w = s.row(r);
    Real* o = out.row(r);
    for (int32_t k = 0; k < emb_table.rows; ++k) {
      const Real wk = w[k];
      if (wk == Real(0)) continue;
      const Real* e = emb_table.row(k);
      for (int32_t c = 0; c < emb_table.cols; ++c) o[c] += wk * e[c];
    }
  }
  return out;
}

template <class Real>
Mat<Real> soft_trigger_embeddings(const SoftTrigger<Real>& t, const Mat<Real>& emb_table) {
  return soft_trigger_embeddings(t.logits, t.temperature, emb_table);
}

// Chain rule from d(loss)/d(equivalent embeddings) back to the trigger
// logits: with s = softmax(T_i/tau) and a_k = e_k . g_i,
//   dT_{i,k} = s_k (a_k - sum_j s_j a_j) / tau.
template <class Real>
Mat<Real> soft_trigger_grad(const Mat<Real>& logits, Real tau, const Mat<Real>& emb_table,
                            const Mat<Real>& d_embeddings) {
  require(d_embeddings.rows == logits.rows && d_embeddings.cols == emb_table.cols, Errc::shape,
          "d_embeddings shape mismatch");
  const Mat<Real> s = trigger_distributions(logits, tau);
  Mat<Real> grad(logits.rows, logits.cols);
  std::vector<Real> a(static_cast<size_t>(emb_table.rows));
  for (int32_t r = 0; r < logits.rows; ++r) {
    const Real* g = d_embeddings.row(r);
    const Real* w = s.row(r);
    Real inner = Real(0);
    for (int32_t k = 0; k < emb_table.rows; ++k) {
      const Real* e = emb_table.row(k);
      Real dot = Real(0);
      for (int32_t c = 0; c < emb_table.cols; ++c) dot += e[c] * g[c];
      a[static_cast<size_t>(k)] = dot;
      inner += w[k] * dot;
    }
    Real* out = grad.row(r);
    for (int32_t k = 0; k < emb_table.rows; ++k) {
      out[k] = w[k] * (a[static_cast<size_t>(k)] - inner) / tau;
    }
  }
  return grad;
}

// Stacks prompt rows above trigger-equivalent embeddings into one prefix.
template <class Real>
Mat<Real> stack_prefix(const Mat<Real>& top, const Mat<Real>& bottom) {
  if (top.rows == 0) return bottom;
  if (bottom.rows == 0) return top;
  require(top.cols == bottom.cols, Errc::shape, "prefix widths differ");
  Mat<Real> out(top.rows + bottom.rows, top.cols);
  for (int32_t r = 0; r < top.rows; ++r) {
    std::copy(top.row(r), top.row(r) + top.cols, out.row(r));
  }
  for (int32_t r = 0; r < bottom.rows; ++r) {
    std::copy(bottom.row(r), bottom.row(r) + bottom.cols, out.row(top.rows + r));
  }
  return out;
}

}  // namespace pfx
