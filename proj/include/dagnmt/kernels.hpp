#pragma once

// Dense kernels used by the tensor ops. Each kernel has an OpenMP-parallel
// entry point and a serial reference twin in kernels::serial. Both call the
// same per-row inner routine, so their outputs are bit-identical; tests and
// the kernel_bench tool rely on that.

#include <cstddef>

namespace dagnmt::kernels {

// C[m x n] = A[m x k] * B[k x n], row-major. C is overwritten.
void matmul(int m, int k, int n, const double* a, const double* b, double* c);

// A_grad[m x k] += G[m x n] * B[k x n]^T      (dC/dA given C = A*B)
void matmul_nt_acc(int m, int k, int n, const double* g, const double* b, double* a_grad);

// B_grad[k x n] += A[m x k]^T * G[m x n]      (dC/dB given C = A*B)
void matmul_tn_acc(int m, int k, int n, const double* a, const double* g, double* b_grad);

// out[r] = y[r] with y = log_softmax(x[r]) per row
void log_softmax_rows(int rows, int cols, const double* x, double* out);

// out[r] = softmax(x[r]) per row
void softmax_rows(int rows, int cols, const double* x, double* out);

namespace serial {
void matmul(int m, int k, int n, const double* a, const double* b, double* c);
void matmul_nt_acc(int m, int k, int n, const double* g, const double* b, double* a_grad);
void matmul_tn_acc(int m, int k, int n, const double* a, const double* g, double* b_grad);
void log_softmax_rows(int rows, int cols, const double* x, double* out);
void softmax_rows(int rows, int cols, const double* x, double* out);
}  // namespace serial

}  // namespace dagnmt::kernels
