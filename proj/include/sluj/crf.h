#ifndef SLUJ_CRF_H_
#define SLUJ_CRF_H_

// Linear-chain CRF over T tags. A path y_1..y_n scores
//
//   A[START, y_1] + sum_k P[k, y_k] + sum_k A[y_k, y_k+1] + A[y_n, STOP]
//
// where START = T and STOP = T + 1 index two extra rows/columns of A.
// Entries of A leading into START or out of STOP are never read; they behave
// as -inf.

#include <span>
#include <vector>

#include "sluj/tensor.h"

namespace sluj {

struct Lattice {
  Tensor emissions;    // n x T
  Tensor transitions;  // (T + 2) x (T + 2), row = from, column = to

  size_t length() const { return emissions.rows(); }
  size_t num_tags() const { return emissions.cols(); }
  size_t start_state() const { return num_tags(); }
  size_t stop_state() const { return num_tags() + 1; }
};

struct TagPath {
  std::vector<size_t> tags;
  double score = 0.0;
};

// Throws DimensionError unless emissions are n x T and transitions are
// (T+2) x (T+2) with n, T >= 1.
void validate_lattice(const Lattice& lattice);

// Score of one tag path (1 x 1, differentiable in P and A).
Tensor sequence_score(const Lattice& lattice, std::span<const size_t> tags);

// log of the summed exp-scores of all T^n paths, by the forward algorithm.
// The gradient is the posterior marginals, from a forward-backward pass.
Tensor log_partition(const Lattice& lattice);

// log_partition - sequence_score(gold); never negative.
Tensor crf_nll(const Lattice& lattice, std::span<const size_t> gold);

// Highest-scoring path. Ties go to the lowest tag id at every backtrack step.
TagPath viterbi(const Lattice& lattice);

}  // namespace sluj

#endif  // SLUJ_CRF_H_
