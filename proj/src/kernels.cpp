#include "dagnmt/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dagnmt::kernels {

// Forking threads only pays off for fairly large shapes on few cores.
static constexpr long long kOmpFlopThreshold = 1 << 21;
static constexpr long long kOmpRowThreshold = 1 << 20;

namespace detail {

__attribute__((noinline)) void matmul_row(int i, int k, int n, const double* a, const double* b, double* c) {
  double* ci = c + static_cast<size_t>(i) * n;
  std::fill(ci, ci + n, 0.0);
  const double* ai = a + static_cast<size_t>(i) * k;
  for (int p = 0; p < k; ++p) {
    const double av = ai[p];
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

__attribute__((noinline)) void matmul_nt_row(int i, int k, int n, const double* g, const double* b, double* a_grad) {
  const double* gi = g + static_cast<size_t>(i) * n;
  double* agi = a_grad + static_cast<size_t>(i) * k;
  for (int p = 0; p < k; ++p) {
    const double* bp = b + static_cast<size_t>(p) * n;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += gi[j] * bp[j];
    agi[p] += acc;
  }
}

__attribute__((noinline)) void matmul_tn_row(int p, int m, int k, int n, const double* a, const double* g,
                          double* b_grad) {
  double* bgp = b_grad + static_cast<size_t>(p) * n;
  for (int i = 0; i < m; ++i) {
    const double av = a[static_cast<size_t>(i) * k + p];
    const double* gi = g + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) bgp[j] += av * gi[j];
  }
}

__attribute__((noinline)) void log_softmax_row(int r, int cols, const double* x, double* out) {
  const double* xr = x + static_cast<size_t>(r) * cols;
  double* or_ = out + static_cast<size_t>(r) * cols;
  double mx = xr[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
  const double lse = mx + std::log(sum);
  for (int j = 0; j < cols; ++j) or_[j] = xr[j] - lse;
}

__attribute__((noinline)) void softmax_row(int r, int cols, const double* x, double* out) {
  const double* xr = x + static_cast<size_t>(r) * cols;
  double* or_ = out + static_cast<size_t>(r) * cols;
  double mx = xr[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    or_[j] = std::exp(xr[j] - mx);
    sum += or_[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) or_[j] *= inv;
}

}  // namespace detail

void matmul(int m, int k, int n, const double* a, const double* b, double* c) {
  const long long work = 1LL * m * k * n;
#pragma omp parallel for schedule(static) if (work > kOmpFlopThreshold)
  for (int i = 0; i < m; ++i) detail::matmul_row(i, k, n, a, b, c);
}

void matmul_nt_acc(int m, int k, int n, const double* g, const double* b, double* a_grad) {
  const long long work = 1LL * m * k * n;
#pragma omp parallel for schedule(static) if (work > kOmpFlopThreshold)
  for (int i = 0; i < m; ++i) detail::matmul_nt_row(i, k, n, g, b, a_grad);
}

void matmul_tn_acc(int m, int k, int n, const double* a, const double* g, double* b_grad) {
  const long long work = 1LL * m * k * n;
#pragma omp parallel for schedule(static) if (work > kOmpFlopThreshold)
  for (int p = 0; p < k; ++p) detail::matmul_tn_row(p, m, k, n, a, g, b_grad);
}

void log_softmax_rows(int rows, int cols, const double* x, double* out) {
  const long long work = 1LL * rows * cols;
#pragma omp parallel for schedule(static) if (work > kOmpRowThreshold)
  for (int r = 0; r < rows; ++r) detail::log_softmax_row(r, cols, x, out);
}

void softmax_rows(int rows, int cols, const double* x, double* out) {
  const long long work = 1LL * rows * cols;
#pragma omp parallel for schedule(static) if (work > kOmpRowThreshold)
  for (int r = 0; r < rows; ++r) detail::softmax_row(r, cols, x, out);
}

namespace serial {

void matmul(int m, int k, int n, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) detail::matmul_row(i, k, n, a, b, c);
}

void matmul_nt_acc(int m, int k, int n, const double* g, const double* b, double* a_grad) {
  for (int i = 0; i < m; ++i) detail::matmul_nt_row(i, k, n, g, b, a_grad);
}

void matmul_tn_acc(int m, int k, int n, const double* a, const double* g, double* b_grad) {
  for (int p = 0; p < k; ++p) detail::matmul_tn_row(p, m, k, n, a, g, b_grad);
}

void log_softmax_rows(int rows, int cols, const double* x, double* out) {
  for (int r = 0; r < rows; ++r) detail::log_softmax_row(r, cols, x, out);
}

void softmax_rows(int rows, int cols, const double* x, double* out) {
  for (int r = 0; r < rows; ++r) detail::softmax_row(r, cols, x, out);
}

}  // namespace serial

}  // namespace dagnmt::kernels
