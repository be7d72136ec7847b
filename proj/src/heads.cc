#include "sluj/heads.h"

#include "sluj/errors.h"
#include "sluj/layers.h"

namespace sluj {

DenseLayer DenseLayer::init(size_t in, size_t out, Rng& rng) {
  return {glorot(in, out, rng),
          Tensor::parameter(1, out, std::vector<double>(out, 0.0))};
}

IntentHead IntentHead::init(size_t input_dim,
                            const std::vector<size_t>& hidden_dims,
                            size_t num_intents, Rng& rng) {
  IntentHead head;
  size_t in = input_dim;
  for (size_t width : hidden_dims) {
    head.hidden.push_back(DenseLayer::init(in, width, rng));
    in = width;
  }
  head.output = DenseLayer::init(in, num_intents, rng);
  return head;
}

std::vector<Tensor> IntentHead::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : hidden) {
    out.push_back(layer.weights);
    out.push_back(layer.bias);
  }
  out.push_back(output.weights);
  out.push_back(output.bias);
  return out;
}

Tensor sentence_summary(const Tensor& encoded) {
  if (!encoded.defined() || encoded.cols() % 2 != 0) {
    throw DimensionError("sentence_summary: expected n x 2d, got " +
                         encoded.shape().str());
  }
  const size_t d = encoded.cols() / 2;
  Tensor last_forward = slice_cols(slice_rows(encoded, encoded.rows() - 1, 1), 0, d);
  Tensor first_backward = slice_cols(slice_rows(encoded, 0, 1), d, d);
  return concat_cols({last_forward, first_backward});
}

Tensor intent_forward(const Tensor& summary, const IntentHead& head) {
  if (summary.rows() != 1 || summary.cols() != head.input_dim()) {
    throw DimensionError("intent_forward: summary " + summary.shape().str() +
                         " but head expects 1 x " +
                         std::to_string(head.input_dim()));
  }
  Tensor x = summary;
  for (const auto& layer : head.hidden) x = tanh(layer(x));
  return softmax_row(head.output(x));
}

Tensor intent_loss(const Tensor& probs, size_t gold) {
  if (probs.rows() != 1 || gold >= probs.cols()) {
    throw ContractError("intent_loss: gold id " + std::to_string(gold) +
                        " outside " + probs.shape().str());
  }
  return scale(log(pick(probs, 0, gold)), -1.0);
}

PriorMask build_prior_mask(std::span<const Example> train,
                           const Vocabulary& intents, const Vocabulary& slots,
                           double eps) {
  if (train.empty()) throw ContractError("build_prior_mask: empty training set");
  if (eps < 0) throw ContractError("build_prior_mask: negative eps");
  const size_t S = slots.size(), C = intents.size();
  std::vector<double> counts(S * C, 0.0);
  for (const Example& ex : train) {
    const size_t i = intents.encode(ex.intent);
    for (const auto& s : ex.slots) counts[slots.encode(s) * C + i] += 1.0;
  }
  std::vector<double> m(S * C);
  for (size_t i = 0; i < C; ++i) {
    double total = 0.0;
    for (size_t s = 0; s < S; ++s) total += counts[s * C + i];
    const double denom = total + eps * static_cast<double>(S);
    for (size_t s = 0; s < S; ++s) {
      // An intent with no tokens and no smoothing has no evidence at all.
      m[s * C + i] = denom > 0 ? (counts[s * C + i] + eps) / denom
                               : 1.0 / static_cast<double>(S);
    }
  }
  return {Tensor::constant(S, C, std::move(m)), eps};
}

Tensor mask_gate(const Tensor& intent_probs, const PriorMask& mask,
                 const Tensor& context) {
  if (intent_probs.rows() != 1 || intent_probs.cols() != mask.num_intents()) {
    throw DimensionError("mask_gate: intent distribution " +
                         intent_probs.shape().str() + " vs mask " +
                         mask.matrix.shape().str());
  }
  if (!context.defined()) throw DimensionError("mask_gate: empty context");
  Tensor m = matmul(intent_probs, transpose(mask.matrix));
  Tensor repeated = matmul(Tensor::filled(context.rows(), 1, 1.0), m);
  return concat_cols({repeated, context});
}

}  // namespace sluj
