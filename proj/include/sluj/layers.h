#ifndef SLUJ_LAYERS_H_
#define SLUJ_LAYERS_H_

// Feature stack of the joint model: word + character embeddings, local
// multi-head self-attention, and bidirectional LSTMs.
//
// Row-vector convention throughout: a sequence of n positions with d
// features is an n x d tensor.

#include <string_view>
#include <vector>

#include "sluj/corpus.h"
#include "sluj/random.h"
#include "sluj/tensor.h"

namespace sluj {

// Glorot-uniform matrix.
Tensor glorot(size_t rows, size_t cols, Rng& rng);

// Standard LSTM cell. The four gate blocks are stored side by side in the
// order input, forget, output, candidate:
//   z = x Wx + h Wh + b,  i,f,o = sigmoid(.), g = tanh(.)
//   c' = f * c + i * g,   h' = o * tanh(c')
struct LstmCell {
  Tensor input_weights;      // input_dim x 4d
  Tensor recurrent_weights;  // d x 4d
  Tensor bias;               // 1 x 4d

  size_t input_dim() const { return input_weights.rows(); }
  size_t hidden_dim() const { return recurrent_weights.rows(); }

  // Glorot weights, zero bias except forget gate = 1.
  static LstmCell init(size_t input_dim, size_t hidden_dim, Rng& rng);
  static LstmCell zeros(size_t input_dim, size_t hidden_dim);

  std::vector<Tensor> parameters() const {
    return {input_weights, recurrent_weights, bias};
  }
};

struct LstmState {
  Tensor h;  // 1 x d
  Tensor c;  // 1 x d
};

LstmState lstm_zero_state(size_t hidden_dim);
LstmState lstm_step(const LstmCell& cell, const Tensor& x,
                    const LstmState& prev);

// Row k = [forward hidden at k, backward hidden at k]; zero initial states.
Tensor bilstm(const Tensor& seq, const LstmCell& forward,
              const LstmCell& backward);

// Character BiLSTM over one word.
struct CharEncoder {
  Tensor table;  // |chars| x char_embedding_dim
  LstmCell forward;
  LstmCell backward;

  size_t output_dim() const { return 2 * forward.hidden_dim(); }

  static CharEncoder init(size_t vocab_size, size_t embedding_dim,
                          size_t hidden_dim, Rng& rng);
};

// [final forward hidden, final backward hidden] for `word` (1 x 2d).
// Unknown characters use the UNK row. Throws ContractError on empty words.
Tensor char_embed(std::string_view word, const Vocabulary& chars,
                  const CharEncoder& encoder);

// Row k = [word embedding of token k, char_embed(raw token k)].
Tensor embed_tokens(const Example& example, const Vocabulary& words,
                    const Vocabulary& chars, const Tensor& word_table,
                    const CharEncoder& encoder);

// Rows k-w .. k+w of `seq`, zero rows where the window leaves the sequence.
Tensor local_window(const Tensor& seq, size_t k, size_t w);

// One attention head over windows of 2w+1 positions:
//   a = softmax(score * tanh(projection * H^T)),  c = a H
struct LocalAttentionHead {
  Tensor score;       // 1 x d_a
  Tensor projection;  // d_a x d_in
  size_t half_width = 2;

  size_t input_dim() const { return projection.cols(); }

  // Glorot weights; the score vector is additionally multiplied by
  // `score_scale` (small values start close to uniform attention).
  static LocalAttentionHead init(size_t input_dim, size_t attention_dim,
                                 size_t half_width, Rng& rng,
                                 double score_scale = 1.0);
  std::vector<Tensor> parameters() const { return {score, projection}; }
};

// softmax(scores) H for one window: scores 1 x m, window m x d.
Tensor attend(const Tensor& window, const Tensor& scores);

// n x (2w+1) attention weights of one head (row k belongs to position k).
Tensor attention_weights(const Tensor& seq, const LocalAttentionHead& head);

// Concatenation of every head's context vectors: n x (heads * d).
Tensor mh_local_attention(const Tensor& seq,
                          const std::vector<LocalAttentionHead>& heads);

}  // namespace sluj

#endif  // SLUJ_LAYERS_H_
