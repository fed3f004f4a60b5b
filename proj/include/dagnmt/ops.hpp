#pragma once

// Differentiable ops over Tensor. All 2-D ops are shape-strict: no implicit
// broadcasting, row-vector adds are a separate op. Every op here is covered
// by the finite-difference checks in tests/test_tensor.cpp.

#include <vector>

#include "dagnmt/rng.hpp"
#include "dagnmt/tensor.hpp"

namespace dagnmt {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// a: [m x n], v: [n]; adds v to every row
Tensor add_row_vector(const Tensor& a, const Tensor& v);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);

// table: [r x c], ids into rows; out: [ids.size() x c]. Embedding lookup.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// per-row normalization over the last dim; gamma/beta: [n]
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int begin, int len);
Tensor slice_cols(const Tensor& x, int begin, int len);

// axis 0: normalize down columns; axis 1: along rows. 1-D tensors use axis 0.
Tensor log_softmax(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);

// probability-space row softmax for attention; causal masks j > i to zero
Tensor attn_softmax(const Tensor& scores, bool causal);

// link-head normalization: row s is log-softmaxed over columns s+1..S-1,
// everything else (including the whole last row) is the kNegInf sentinel
Tensor link_log_softmax(const Tensor& scores);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// out[i] = x[i][ids[i]], shape [m]
Tensor select_per_row(const Tensor& x, const std::vector<int>& ids);

// inverted dropout; identity when rate == 0
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace dagnmt
