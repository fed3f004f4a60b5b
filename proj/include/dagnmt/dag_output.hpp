#pragma once

// Per-sentence decoder output: word log-probabilities over the vocabulary at
// each of the S generation steps, and link log-probabilities from each step
// to its successors (support strictly above the diagonal, last row empty).

#include "dagnmt/tensor.hpp"

namespace dagnmt {

struct DagOutput {
  int S = 0;            // number of generation steps, >= 2
  int V = 0;            // vocabulary size
  Tensor word_logp;     // [S x V], rows normalize
  Tensor link_logp;     // [S x S], row s normalizes over cols s+1..S-1
};

// Non-autodiff view used by decoding and test oracles.
struct DagTables {
  int S = 0;
  int V = 0;
  const double* word = nullptr;
  const double* link = nullptr;

  double word_at(int s, int v) const { return word[static_cast<size_t>(s) * V + v]; }
  double link_at(int s, int s2) const { return link[static_cast<size_t>(s) * S + s2]; }
};

inline DagTables tables(const DagOutput& d) {
  return {d.S, d.V, d.word_logp.data(), d.link_logp.data()};
}

}  // namespace dagnmt
