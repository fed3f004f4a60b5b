#pragma once

// Training objective over the generation lattice: the joint probability of a
// token sequence with one step selection, and its exact marginal over all
// selections via a log-space dynamic program, differentiable end to end.
//
// Steps are 0-based here: a path for a length-T target is a strictly
// increasing index sequence a with a[0] = 0 and a[T-1] = S-1.

#include <vector>

#include "dagnmt/dag_output.hpp"
#include "dagnmt/tensor.hpp"

namespace dagnmt {

using Path = std::vector<int>;

// log p(y, a) = sum_t link[a_{t-1}][a_t] + sum_t word[a_t][y_t]
double path_log_prob(const DagTables& dag, const std::vector<int>& y, const Path& a);

// log p(y) = logsumexp over all paths; O(T * S^2) forward DP, O(S) per cell.
double dag_log_likelihood_value(const DagTables& dag, const std::vector<int>& y);

// Differentiable version; gradients flow into word_logp / link_logp via the
// forward-backward recurrences.
Tensor dag_log_likelihood(const DagOutput& dag, const std::vector<int>& y);

// All paths for (S, T), lexicographic. Test oracle; refuses S > 12.
std::vector<Path> enumerate_paths(int S, int T);

// Forward table alpha, row-major T x S: alpha[t][s] = log P(y[0..t], a_t = s).
// Infeasible cells hold the kNegInf sentinel.
std::vector<double> dag_forward_table(const DagTables& dag, const std::vector<int>& y);

struct BatchLoss {
  Tensor loss;      // mean negative log-likelihood over usable pairs
  int used = 0;
  int skipped = 0;  // pairs with T > S (caller re-upsamples or drops upstream)
  double token_nll = 0.0;  // per-token value, reporting only
};

struct BatchItem {
  const DagOutput* dag;
  const std::vector<int>* target;
};

BatchLoss batch_dag_loss(const std::vector<BatchItem>& batch);

}  // namespace dagnmt
