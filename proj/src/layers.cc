#include "sluj/layers.h"

#include <cmath>

#include "sluj/errors.h"

namespace sluj {

Tensor glorot(size_t rows, size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> data(rows * cols);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::parameter(rows, cols, std::move(data));
}

// --- LSTM ----------------------------------------------------------------

namespace {

// Glorot per gate block, so each block sees fan_in + d.
Tensor gate_blocks(size_t rows, size_t d, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + d));
  std::vector<double> data(rows * 4 * d);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::parameter(rows, 4 * d, std::move(data));
}

LstmState step_projected(const LstmCell& cell, const Tensor& projected,
                         const LstmState& prev) {
  const size_t d = cell.hidden_dim();
  Tensor z = add(projected, matmul(prev.h, cell.recurrent_weights));
  Tensor i = sigmoid(slice_cols(z, 0, d));
  Tensor f = sigmoid(slice_cols(z, d, d));
  Tensor o = sigmoid(slice_cols(z, 2 * d, d));
  Tensor g = tanh(slice_cols(z, 3 * d, d));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

// Hidden states of one direction, in sequence order.
std::vector<Tensor> run_direction(const LstmCell& cell, const Tensor& seq,
                                  bool reverse) {
  if (seq.cols() != cell.input_dim()) {
    throw DimensionError("lstm: input " + seq.shape().str() +
                         " does not match cell input width " +
                         std::to_string(cell.input_dim()));
  }
  const size_t n = seq.rows();
  Tensor projected = add(matmul(seq, cell.input_weights), cell.bias);
  std::vector<Tensor> hidden(n);
  LstmState state = lstm_zero_state(cell.hidden_dim());
  for (size_t step = 0; step < n; ++step) {
    const size_t t = reverse ? n - 1 - step : step;
    state = step_projected(cell, slice_rows(projected, t, 1), state);
    hidden[t] = state.h;
  }
  return hidden;
}

}  // namespace

LstmCell LstmCell::init(size_t input_dim, size_t hidden_dim, Rng& rng) {
  LstmCell cell;
  cell.input_weights = gate_blocks(input_dim, hidden_dim, rng);
  cell.recurrent_weights = gate_blocks(hidden_dim, hidden_dim, rng);
  std::vector<double> bias(4 * hidden_dim, 0.0);
  for (size_t j = hidden_dim; j < 2 * hidden_dim; ++j) bias[j] = 1.0;
  cell.bias = Tensor::parameter(1, 4 * hidden_dim, std::move(bias));
  return cell;
}

LstmCell LstmCell::zeros(size_t input_dim, size_t hidden_dim) {
  LstmCell cell;
  cell.input_weights = Tensor::parameter(
      input_dim, 4 * hidden_dim, std::vector<double>(input_dim * 4 * hidden_dim));
  cell.recurrent_weights = Tensor::parameter(
      hidden_dim, 4 * hidden_dim,
      std::vector<double>(hidden_dim * 4 * hidden_dim));
  cell.bias = Tensor::parameter(1, 4 * hidden_dim,
                                std::vector<double>(4 * hidden_dim));
  return cell;
}

LstmState lstm_zero_state(size_t hidden_dim) {
  return {Tensor::zeros(1, hidden_dim), Tensor::zeros(1, hidden_dim)};
}

LstmState lstm_step(const LstmCell& cell, const Tensor& x,
                    const LstmState& prev) {
  Tensor projected = add(matmul(x, cell.input_weights), cell.bias);
  return step_projected(cell, projected, prev);
}

Tensor bilstm(const Tensor& seq, const LstmCell& forward,
              const LstmCell& backward) {
  if (!seq.defined()) throw DimensionError("bilstm: empty sequence");
  auto fwd = run_direction(forward, seq, false);
  auto bwd = run_direction(backward, seq, true);
  std::vector<Tensor> rows;
  rows.reserve(seq.rows());
  for (size_t t = 0; t < seq.rows(); ++t) {
    rows.push_back(concat_cols({fwd[t], bwd[t]}));
  }
  return concat_rows(rows);
}

// --- Embeddings ----------------------------------------------------------

CharEncoder CharEncoder::init(size_t vocab_size, size_t embedding_dim,
                              size_t hidden_dim, Rng& rng) {
  CharEncoder enc;
  enc.table = glorot(vocab_size, embedding_dim, rng);
  enc.forward = LstmCell::init(embedding_dim, hidden_dim, rng);
  enc.backward = LstmCell::init(embedding_dim, hidden_dim, rng);
  return enc;
}

Tensor char_embed(std::string_view word, const Vocabulary& chars,
                  const CharEncoder& encoder) {
  if (word.empty()) throw ContractError("char_embed: empty word");
  std::vector<size_t> ids;
  for (const auto& c : split_chars(word)) ids.push_back(chars.encode(c));
  Tensor seq = gather_rows(encoder.table, ids);
  auto fwd = run_direction(encoder.forward, seq, false);
  auto bwd = run_direction(encoder.backward, seq, true);
  return concat_cols({fwd.back(), bwd.front()});
}

Tensor embed_tokens(const Example& example, const Vocabulary& words,
                    const Vocabulary& chars, const Tensor& word_table,
                    const CharEncoder& encoder) {
  const size_t n = example.tokens.size();
  if (n == 0) throw ContractError("embed_tokens: no tokens");
  const auto& raw = example.raw_tokens.empty() ? example.tokens
                                               : example.raw_tokens;
  std::vector<size_t> ids;
  ids.reserve(n);
  for (const auto& t : example.tokens) ids.push_back(words.encode(t));
  Tensor word_rows = gather_rows(word_table, ids);
  std::vector<Tensor> char_rows;
  char_rows.reserve(n);
  for (const auto& w : raw) char_rows.push_back(char_embed(w, chars, encoder));
  return concat_cols({word_rows, concat_rows(char_rows)});
}

// --- Local attention -----------------------------------------------------

Tensor local_window(const Tensor& seq, size_t k, size_t w) {
  if (!seq.defined()) throw DimensionError("local_window: empty sequence");
  if (k >= seq.rows()) {
    throw ContractError("local_window: position " + std::to_string(k) +
                        " outside sequence of " + std::to_string(seq.rows()));
  }
  return slice_rows(pad_rows(seq, w), k, 2 * w + 1);
}

LocalAttentionHead LocalAttentionHead::init(size_t input_dim,
                                            size_t attention_dim,
                                            size_t half_width, Rng& rng,
                                            double score_scale) {
  LocalAttentionHead head;
  head.score = glorot(1, attention_dim, rng);
  for (double& v : head.score.mutable_values()) v *= score_scale;
  head.projection = glorot(attention_dim, input_dim, rng);
  head.half_width = half_width;
  return head;
}

Tensor attend(const Tensor& window, const Tensor& scores) {
  if (scores.rows() != 1 || scores.cols() != window.rows()) {
    throw DimensionError("attend: scores " + scores.shape().str() +
                         " do not match window " + window.shape().str());
  }
  return matmul(softmax_row(scores), window);
}

namespace {

// Scores of every padded position as a single row (1 x (n + 2w)). Row j of
// the padded sequence only ever touches row j of the projection, so a
// position's score depends on that position alone.
Tensor padded_scores(const Tensor& padded, const LocalAttentionHead& head) {
  if (padded.cols() != head.input_dim()) {
    throw DimensionError("attention: input " + padded.shape().str() +
                         " does not match projection " +
                         head.projection.shape().str());
  }
  Tensor hidden = tanh(matmul(padded, transpose(head.projection)));
  return transpose(matmul(hidden, transpose(head.score)));
}

}  // namespace

Tensor attention_weights(const Tensor& seq, const LocalAttentionHead& head) {
  const size_t w = head.half_width;
  Tensor padded = pad_rows(seq, w);
  Tensor scores = padded_scores(padded, head);
  std::vector<Tensor> rows;
  for (size_t k = 0; k < seq.rows(); ++k) {
    rows.push_back(softmax_row(slice_cols(scores, k, 2 * w + 1)));
  }
  return concat_rows(rows);
}

Tensor mh_local_attention(const Tensor& seq,
                          const std::vector<LocalAttentionHead>& heads) {
  if (!seq.defined()) throw DimensionError("attention: empty sequence");
  if (heads.empty()) throw DimensionError("attention: no heads");
  const size_t w = heads.front().half_width;
  for (const auto& h : heads) {
    if (h.half_width != w) {
      throw DimensionError("attention: heads disagree on window width");
    }
  }
  Tensor padded = pad_rows(seq, w);
  std::vector<Tensor> outputs;
  outputs.reserve(heads.size());
  for (const auto& head : heads) {
    Tensor scores = padded_scores(padded, head);
    std::vector<Tensor> rows;
    rows.reserve(seq.rows());
    for (size_t k = 0; k < seq.rows(); ++k) {
      rows.push_back(attend(slice_rows(padded, k, 2 * w + 1),
                            slice_cols(scores, k, 2 * w + 1)));
    }
    outputs.push_back(concat_rows(rows));
  }
  return concat_cols(outputs);
}

}  // namespace sluj
