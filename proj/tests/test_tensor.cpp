#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dagnmt/kernels.hpp"
#include "dagnmt/ops.hpp"
#include "dagnmt/tensor.hpp"
#include "testutil.hpp"

using namespace dagnmt;
using testutil::max_grad_rel_error;
using testutil::random_tensor;

TEST_CASE("matmul forward: identity and hand-checked cases") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  Tensor c = matmul(eye, b);
  CHECK(c.values() == b.values());

  Tensor row = Tensor::from({1, 2}, {1, 2});
  Tensor col = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  auto loss_a = [&]() { return sum_all(tanh_op(matmul(a, b))); };
  CHECK(max_grad_rel_error(a, loss_a) < 1e-3);
  auto loss_b = [&]() { return sum_all(tanh_op(matmul(a, b))); };
  CHECK(max_grad_rel_error(b, loss_b) < 1e-3);
}

TEST_CASE("log_softmax examples") {
  Tensor x = Tensor::from({2}, {0.0, 0.0});
  Tensor y = log_softmax(x, 0);
  CHECK(y.values()[0] == doctest::Approx(-std::log(2.0)));
  CHECK(y.values()[1] == doctest::Approx(-std::log(2.0)));

  Tensor big = Tensor::from({2}, {1000.0, 0.0});
  Tensor yb = log_softmax(big, 0);
  CHECK(yb.values()[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(yb.values()[1] == doctest::Approx(-1000.0));
  CHECK(std::isfinite(yb.values()[1]));
}

TEST_CASE("log_softmax rows: exp sums to one, logsumexp zero") {
  Rng rng(11);
  Tensor x = random_tensor({6, 9}, rng, -5.0, 5.0, false);
  Tensor y = log_softmax(x, 1);
  for (int r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) sum += std::exp(y.values()[r * 9 + j]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  // axis 0 normalizes columns
  Tensor yc = log_softmax(x, 0);
  for (int j = 0; j < 9; ++j) {
    double sum = 0.0;
    for (int r = 0; r < 6; ++r) sum += std::exp(yc.values()[r * 9 + j]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("logsumexp examples and softmax gradient identity") {
  Tensor x = Tensor::from({2}, {std::log(1.0), std::log(3.0)});
  CHECK(logsumexp(x, 0).item() == doctest::Approx(std::log(4.0)));

  Tensor dom = Tensor::from({2}, {-1e9, 0.0});
  CHECK(logsumexp(dom, 0).item() == doctest::Approx(0.0));

  Rng rng(3);
  Tensor v = random_tensor({7}, rng);
  auto f = [&]() { return logsumexp(v, 0); };
  CHECK(max_grad_rel_error(v, f) < 1e-4);
  // analytic gradient of logsumexp is softmax
  v.zero_grad();
  backward(f());
  double lse = f().item();
  for (size_t i = 0; i < v.numel(); ++i)
    CHECK(v.grad()[i] == doctest::Approx(std::exp(v.values()[i] - lse)));
}

TEST_CASE("backward: sum gradient is ones, non-scalar loss rejected, repeat accumulates") {
  Tensor p = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor loss = sum_all(p);
  backward(loss);
  for (double g : p.grad()) CHECK(g == doctest::Approx(1.0));

  CHECK_THROWS_AS(backward(p), std::invalid_argument);

  // second backward without zeroing doubles the gradient
  backward(loss);
  for (double g : p.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("finite-difference checks across the op set") {
  Rng rng(42);

  SUBCASE("add/sub/mul/scalars") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    auto f = [&]() {
      return sum_all(mul(add(a, b), sub(mul_scalar(a, 0.5), add_scalar(b, 0.25))));
    };
    CHECK(max_grad_rel_error(a, f) < 1e-4);
    CHECK(max_grad_rel_error(b, f) < 1e-4);
  }
  SUBCASE("tanh/relu chain") {
    Tensor a = random_tensor({4, 4}, rng);
    auto f = [&]() { return sum_all(relu(tanh_op(a))); };
    // relu kink can trip FD exactly at 0; inputs here are generic reals
    CHECK(max_grad_rel_error(a, f) < 1e-3);
  }
  SUBCASE("add_row_vector") {
    Tensor a = random_tensor({3, 5}, rng);
    Tensor v = random_tensor({5}, rng);
    auto f = [&]() { return sum_all(tanh_op(add_row_vector(a, v))); };
    CHECK(max_grad_rel_error(a, f) < 1e-4);
    CHECK(max_grad_rel_error(v, f) < 1e-4);
  }
  SUBCASE("transpose + slice + concat") {
    Tensor a = random_tensor({4, 6}, rng);
    auto f = [&]() {
      Tensor t = transpose(a);
      Tensor s1 = slice_rows(t, 0, 3);
      Tensor s2 = slice_cols(t, 1, 2);
      return add(sum_all(tanh_op(concat_cols({s1, slice_rows(t, 3, 3)}))),
                 sum_all(concat_rows({s2, s2})));
    };
    CHECK(max_grad_rel_error(a, f) < 1e-4);
  }
  SUBCASE("gather_rows scatters gradients") {
    Tensor table = random_tensor({6, 3}, rng);
    std::vector<int> ids = {1, 1, 4, 0};
    auto f = [&]() { return sum_all(tanh_op(gather_rows(table, ids))); };
    CHECK(max_grad_rel_error(table, f) < 1e-4);
  }
  SUBCASE("layer_norm") {
    Tensor x = random_tensor({3, 8}, rng);
    Tensor gamma = random_tensor({8}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({8}, rng, -0.5, 0.5);
    auto f = [&]() { return sum_all(tanh_op(layer_norm(x, gamma, beta))); };
    CHECK(max_grad_rel_error(x, f) < 1e-4);
    CHECK(max_grad_rel_error(gamma, f) < 1e-4);
    CHECK(max_grad_rel_error(beta, f) < 1e-4);
  }
  SUBCASE("log_softmax / attn_softmax / link_log_softmax") {
    Tensor x = random_tensor({5, 5}, rng);
    auto f1 = [&]() { return sum_all(tanh_op(log_softmax(x, 1))); };
    CHECK(max_grad_rel_error(x, f1) < 1e-4);
    auto f2 = [&]() { return sum_all(tanh_op(attn_softmax(x, true))); };
    CHECK(max_grad_rel_error(x, f2) < 1e-4);
    auto f3 = [&]() {
      Tensor full = link_log_softmax(x);
      // only the supported entries feed the loss
      Tensor picked = Tensor::zeros({1});
      std::vector<Tensor> parts;
      for (int s = 0; s + 1 < 5; ++s) parts.push_back(slice_cols(slice_rows(full, s, 1), s + 1, 5 - s - 1));
      Tensor acc = sum_all(parts[0]);
      for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, sum_all(mul(parts[i], parts[i])));
      return acc;
    };
    CHECK(max_grad_rel_error(x, f3) < 1e-4);
  }
  SUBCASE("select_per_row and mean_all") {
    Tensor x = random_tensor({4, 6}, rng);
    std::vector<int> ids = {0, 5, 2, 2};
    auto f = [&]() { return mean_all(select_per_row(log_softmax(x, 1), ids)); };
    CHECK(max_grad_rel_error(x, f) < 1e-4);
  }
}

TEST_CASE("attn_softmax causal rows normalize over the allowed prefix") {
  Rng rng(5);
  Tensor x = random_tensor({4, 4}, rng, -3.0, 3.0, false);
  Tensor y = attn_softmax(x, true);
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j > i) CHECK(y.values()[i * 4 + j] == 0.0);
      sum += y.values()[i * 4 + j];
    }
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("link_log_softmax support and normalization") {
  Rng rng(6);
  Tensor x = random_tensor({5, 5}, rng, -3.0, 3.0, false);
  Tensor y = link_log_softmax(x);
  for (int s = 0; s < 5; ++s) {
    int finite = 0;
    double mass = 0.0;
    for (int j = 0; j < 5; ++j) {
      const double v = y.values()[s * 5 + j];
      if (v > kNegInf * 0.5) {
        ++finite;
        mass += std::exp(v);
        CHECK(j > s);
      }
    }
    if (s < 4) {
      CHECK(finite == 5 - s - 1);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    } else {
      CHECK(finite == 0);
    }
  }
}

TEST_CASE("dropout: zero rate is identity; scaling preserves expectation") {
  Rng rng(9);
  Tensor x = random_tensor({100, 10}, rng, 1.0, 2.0, false);
  Tensor same = dropout(x, 0.0, rng);
  CHECK(same.same_storage(x));
  Tensor dropped = dropout(x, 0.3, rng);
  double mean_in = 0.0, mean_out = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) {
    mean_in += x.values()[i];
    mean_out += dropped.values()[i];
  }
  CHECK(mean_out / mean_in == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("forward results are deterministic") {
  Rng rng(12);
  Tensor a = random_tensor({16, 16}, rng, -1.0, 1.0, false);
  Tensor b = random_tensor({16, 16}, rng, -1.0, 1.0, false);
  Tensor c1 = matmul(a, b);
  Tensor c2 = matmul(a, b);
  CHECK(c1.values() == c2.values());
}

TEST_CASE("parallel kernels match serial reference bit-for-bit") {
  Rng rng(13);
  for (int size : {8, 33, 64, 127}) {
    const int m = size, k = size + 3, n = size - 1;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    for (double& v : a) v = rng.uniform_real(-2.0, 2.0);
    for (double& v : b) v = rng.uniform_real(-2.0, 2.0);
    std::vector<double> c_par(static_cast<size_t>(m) * n), c_ser(static_cast<size_t>(m) * n);
    kernels::matmul(m, k, n, a.data(), b.data(), c_par.data());
    kernels::serial::matmul(m, k, n, a.data(), b.data(), c_ser.data());
    CHECK(c_par == c_ser);

    std::vector<double> g(static_cast<size_t>(m) * n);
    for (double& v : g) v = rng.uniform_real(-1.0, 1.0);
    std::vector<double> ga_p(a.size(), 0.1), ga_s(a.size(), 0.1);
    kernels::matmul_nt_acc(m, k, n, g.data(), b.data(), ga_p.data());
    kernels::serial::matmul_nt_acc(m, k, n, g.data(), b.data(), ga_s.data());
    CHECK(ga_p == ga_s);

    std::vector<double> gb_p(b.size(), -0.2), gb_s(b.size(), -0.2);
    kernels::matmul_tn_acc(m, k, n, a.data(), g.data(), gb_p.data());
    kernels::serial::matmul_tn_acc(m, k, n, a.data(), g.data(), gb_s.data());
    CHECK(gb_p == gb_s);

    std::vector<double> ls_p(a.size()), ls_s(a.size());
    kernels::log_softmax_rows(m, k, a.data(), ls_p.data());
    kernels::serial::log_softmax_rows(m, k, a.data(), ls_s.data());
    CHECK(ls_p == ls_s);

    std::vector<double> sm_p(a.size()), sm_s(a.size());
    kernels::softmax_rows(m, k, a.data(), sm_p.data());
    kernels::serial::softmax_rows(m, k, a.data(), sm_s.data());
    CHECK(sm_p == sm_s);
  }
}

TEST_CASE("no-broadcast policy: shape mismatches are rejected") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(sub(a, b), std::invalid_argument);
}
