#ifndef SLUJ_HEADS_H_
#define SLUJ_HEADS_H_

#include <span>
#include <vector>

#include "sluj/corpus.h"
#include "sluj/random.h"
#include "sluj/tensor.h"

namespace sluj {

struct DenseLayer {
  Tensor weights;  // in x out
  Tensor bias;     // 1 x out

  static DenseLayer init(size_t in, size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const {
    return add(matmul(x, weights), bias);
  }
};

// Fully connected classifier: tanh hidden layers, then a softmax output.
struct IntentHead {
  std::vector<DenseLayer> hidden;
  DenseLayer output;

  size_t input_dim() const {
    return hidden.empty() ? output.weights.rows() : hidden.front().weights.rows();
  }
  size_t num_intents() const { return output.weights.cols(); }

  static IntentHead init(size_t input_dim, const std::vector<size_t>& hidden_dims,
                         size_t num_intents, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Sentence summary of a BiLSTM output (n x 2d): the last forward state
// joined with the backward state at the first position.
Tensor sentence_summary(const Tensor& encoded);

// Probability row over intents (1 x |intents|).
Tensor intent_forward(const Tensor& summary, const IntentHead& head);

// -ln probs[gold]. Throws ContractError when gold is out of range.
Tensor intent_loss(const Tensor& probs, size_t gold);

// P(slot | intent) estimated from token-level label counts of the training
// sentences of each intent, additively smoothed:
//   M[s][i] = (count(s, i) + eps) / (sum_s' count(s', i) + eps * |slots|)
struct PriorMask {
  Tensor matrix;  // |slots| x |intents|, constant
  double eps = 1e-3;

  size_t num_slots() const { return matrix.rows(); }
  size_t num_intents() const { return matrix.cols(); }
  double at(size_t slot, size_t intent) const { return matrix.at(slot, intent); }
};

PriorMask build_prior_mask(std::span<const Example> train,
                           const Vocabulary& intents, const Vocabulary& slots,
                           double eps);

// m = M y (a distribution over slots); row k of the result is [m, context_k].
// Gradient flows into `intent_probs` and `context`; M stays fixed.
Tensor mask_gate(const Tensor& intent_probs, const PriorMask& mask,
                 const Tensor& context);

}  // namespace sluj

#endif  // SLUJ_HEADS_H_
