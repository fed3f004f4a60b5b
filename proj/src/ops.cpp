#include "dagnmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dagnmt/kernels.hpp"

namespace dagnmt {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

void check_2d(const Tensor& a, const char* op) {
  if (a.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " +
                                shape_str(a.shape()));
}

bool want_graph(std::initializer_list<const Tensor*> parents) {
  if (!grad_enabled()) return false;
  for (const Tensor* p : parents)
    if (p->requires_grad()) return true;
  return false;
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> backward_fn) {
  out.set_requires_grad(true);
  out.node() = std::make_shared<Node>();
  out.node()->parents = std::move(parents);
  out.node()->backward = std::move(backward_fn);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (want_graph({&a, &b})) {
    attach(out, {a, b}, [](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      Tensor pb = o.node()->parents[1];
      const auto& g = *o.grad_if_present();
      if (pa.requires_grad()) {
        auto& ga = pa.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pb.requires_grad()) {
        auto& gb = pb.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (want_graph({&a, &b})) {
    attach(out, {a, b}, [](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      Tensor pb = o.node()->parents[1];
      const auto& g = *o.grad_if_present();
      if (pa.requires_grad()) {
        auto& ga = pa.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pb.requires_grad()) {
        auto& gb = pb.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (want_graph({&a, &b})) {
    attach(out, {a, b}, [](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      Tensor pb = o.node()->parents[1];
      const auto& g = *o.grad_if_present();
      if (pa.requires_grad()) {
        auto& ga = pa.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb.values()[i];
      }
      if (pb.requires_grad()) {
        auto& gb = pb.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa.values()[i];
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + c;
  if (want_graph({&a})) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& ga = pa.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * c;
  if (want_graph({&a})) {
    attach(out, {a}, [c](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& ga = pa.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor add_row_vector(const Tensor& a, const Tensor& v) {
  check_2d(a, "add_row_vector");
  if (v.shape().size() != 1 || v.dim(0) != a.cols())
    throw std::invalid_argument("add_row_vector: vector shape " + shape_str(v.shape()) +
                                " does not match matrix " + shape_str(a.shape()));
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.values()[static_cast<size_t>(i) * n + j] =
          a.values()[static_cast<size_t>(i) * n + j] + v.values()[static_cast<size_t>(j)];
  if (want_graph({&a, &v})) {
    attach(out, {a, v}, [m, n](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      Tensor pv = o.node()->parents[1];
      const auto& g = *o.grad_if_present();
      if (pa.requires_grad()) {
        auto& ga = pa.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pv.requires_grad()) {
        auto& gv = pv.grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * n + j];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul(m, k, n, a.data(), b.data(), out.data());
  if (want_graph({&a, &b})) {
    attach(out, {a, b}, [m, k, n](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      Tensor pb = o.node()->parents[1];
      const double* g = o.grad_if_present()->data();
      if (pa.requires_grad()) kernels::matmul_nt_acc(m, k, n, g, pb.data(), pa.grad().data());
      if (pb.requires_grad()) kernels::matmul_tn_acc(m, k, n, pa.data(), g, pb.grad().data());
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.values()[static_cast<size_t>(j) * m + i] = a.values()[static_cast<size_t>(i) * n + j];
  if (want_graph({&a})) {
    attach(out, {a}, [m, n](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& ga = pa.grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
    });
  }
  return out;
}

Tensor tanh_op(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = std::tanh(a.values()[i]);
  if (want_graph({&a})) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& ga = pa.grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const double y = o.values()[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  if (want_graph({&a})) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor pa = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& ga = pa.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (pa.values()[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  check_2d(table, "gather_rows");
  const int r = table.rows(), c = table.cols();
  for (int id : ids)
    if (id < 0 || id >= r)
      throw std::invalid_argument("gather_rows: id " + std::to_string(id) +
                                  " out of range for table " + shape_str(table.shape()));
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), c});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data() + static_cast<size_t>(ids[i]) * c, c, out.data() + i * c);
  if (want_graph({&table})) {
    attach(out, {table}, [ids, c](const Tensor& o) {
      Tensor pt = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gt = pt.grad();
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j)
          gt[static_cast<size_t>(ids[i]) * c + j] += g[i * static_cast<size_t>(c) + j];
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_2d(x, "layer_norm");
  const int m = x.rows(), n = x.cols();
  if (gamma.shape().size() != 1 || gamma.dim(0) != n || beta.shape().size() != 1 ||
      beta.dim(0) != n)
    throw std::invalid_argument("layer_norm: gamma/beta must be [n] for x " +
                                shape_str(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  // keep per-row (mean, inv_std) for backward
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * 2);
  for (int i = 0; i < m; ++i) {
    const double* xi = x.data() + static_cast<size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xi[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<size_t>(i) * 2] = mean;
    (*stats)[static_cast<size_t>(i) * 2 + 1] = inv_std;
    double* oi = out.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j)
      oi[j] = (xi[j] - mean) * inv_std * gamma.values()[static_cast<size_t>(j)] +
              beta.values()[static_cast<size_t>(j)];
  }
  if (want_graph({&x, &gamma, &beta})) {
    attach(out, {x, gamma, beta}, [m, n, stats](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      Tensor pg = o.node()->parents[1];
      Tensor pb = o.node()->parents[2];
      const auto& g = *o.grad_if_present();
      for (int i = 0; i < m; ++i) {
        const double mean = (*stats)[static_cast<size_t>(i) * 2];
        const double inv_std = (*stats)[static_cast<size_t>(i) * 2 + 1];
        const double* xi = px.data() + static_cast<size_t>(i) * n;
        const double* gi = g.data() + static_cast<size_t>(i) * n;
        if (pg.requires_grad() || pb.requires_grad()) {
          for (int j = 0; j < n; ++j) {
            const double xhat = (xi[j] - mean) * inv_std;
            if (pg.requires_grad()) pg.grad()[static_cast<size_t>(j)] += gi[j] * xhat;
            if (pb.requires_grad()) pb.grad()[static_cast<size_t>(j)] += gi[j];
          }
        }
        if (px.requires_grad()) {
          double sum_gg = 0.0, sum_ggx = 0.0;
          for (int j = 0; j < n; ++j) {
            const double xhat = (xi[j] - mean) * inv_std;
            const double gg = gi[j] * pg.values()[static_cast<size_t>(j)];
            sum_gg += gg;
            sum_ggx += gg * xhat;
          }
          auto& gx = px.grad();
          for (int j = 0; j < n; ++j) {
            const double xhat = (xi[j] - mean) * inv_std;
            const double gg = gi[j] * pg.values()[static_cast<size_t>(j)];
            gx[static_cast<size_t>(i) * n + j] +=
                inv_std * (gg - sum_gg / n - xhat * sum_ggx / n);
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int c = parts[0].cols();
  int total = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_rows");
    if (p.cols() != c)
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()) +
                                  " vs " + shape_str(parts[0].shape()));
    total += p.rows();
  }
  Tensor out = Tensor::zeros({total, c});
  size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy_n(p.data(), p.numel(), out.data() + off);
    off += p.numel();
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    attach(out, parts, [](const Tensor& o) {
      const auto& g = *o.grad_if_present();
      size_t off2 = 0;
      for (Tensor p : o.node()->parents) {
        const size_t n = p.numel();
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (size_t i = 0; i < n; ++i) gp[i] += g[off2 + i];
        }
        off2 += n;
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_cols");
    if (p.rows() != m)
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()) + " vs " +
                                  shape_str(parts[0].shape()));
    total += p.cols();
  }
  Tensor out = Tensor::zeros({m, total});
  int off = 0;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    for (int i = 0; i < m; ++i)
      std::copy_n(p.data() + static_cast<size_t>(i) * pc, pc,
                  out.data() + static_cast<size_t>(i) * total + off);
    off += pc;
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    attach(out, parts, [m, total](const Tensor& o) {
      const auto& g = *o.grad_if_present();
      int off2 = 0;
      for (Tensor p : o.node()->parents) {
        const int pc = p.cols();
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < pc; ++j)
              gp[static_cast<size_t>(i) * pc + j] +=
                  g[static_cast<size_t>(i) * total + off2 + j];
        }
        off2 += pc;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int begin, int len) {
  check_2d(x, "slice_rows");
  if (begin < 0 || len <= 0 || begin + len > x.rows())
    throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + len) + ") invalid for " +
                                shape_str(x.shape()));
  const int c = x.cols();
  Tensor out = Tensor::zeros({len, c});
  std::copy_n(x.data() + static_cast<size_t>(begin) * c, static_cast<size_t>(len) * c,
              out.data());
  if (want_graph({&x})) {
    attach(out, {x}, [begin, len, c](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (size_t i = 0; i < static_cast<size_t>(len) * c; ++i)
        gx[static_cast<size_t>(begin) * c + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int len) {
  check_2d(x, "slice_cols");
  if (begin < 0 || len <= 0 || begin + len > x.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + len) + ") invalid for " +
                                shape_str(x.shape()));
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, len});
  for (int i = 0; i < m; ++i)
    std::copy_n(x.data() + static_cast<size_t>(i) * n + begin, len,
                out.data() + static_cast<size_t>(i) * len);
  if (want_graph({&x})) {
    attach(out, {x}, [begin, len, m, n](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
          gx[static_cast<size_t>(i) * n + begin + j] += g[static_cast<size_t>(i) * len + j];
    });
  }
  return out;
}

namespace {

// treat a 1-D tensor as a single row; axis 0 on 2-D works on columns via transpose
struct RowView {
  int rows, cols;
  bool transposed;
};

RowView row_view(const Tensor& x, int axis, const char* op) {
  const auto& s = x.shape();
  if (s.size() == 1) {
    if (axis != 0) throw std::invalid_argument(std::string(op) + ": axis must be 0 for 1-D");
    return {1, s[0], false};
  }
  if (s.size() != 2) throw std::invalid_argument(std::string(op) + ": expected 1-D or 2-D");
  if (axis == 1) return {s[0], s[1], false};
  if (axis == 0) return {s[1], s[0], true};
  throw std::invalid_argument(std::string(op) + ": axis out of range");
}

}  // namespace

Tensor log_softmax(const Tensor& x, int axis) {
  RowView v = row_view(x, axis, "log_softmax");
  if (v.cols == 0) throw std::invalid_argument("log_softmax: empty slice");
  Tensor base = v.transposed ? transpose(x) : x;
  Tensor out = Tensor::zeros(base.shape());
  kernels::log_softmax_rows(v.rows, v.cols, base.data(), out.data());
  if (want_graph({&base})) {
    const int rows = v.rows, cols = v.cols;
    attach(out, {base}, [rows, cols](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (int r = 0; r < rows; ++r) {
        const size_t base_i = static_cast<size_t>(r) * cols;
        double gsum = 0.0;
        for (int j = 0; j < cols; ++j) gsum += g[base_i + j];
        for (int j = 0; j < cols; ++j)
          gx[base_i + j] += g[base_i + j] - std::exp(o.values()[base_i + j]) * gsum;
      }
    });
  }
  return v.transposed ? transpose(out) : out;
}

Tensor logsumexp(const Tensor& x, int axis) {
  RowView v = row_view(x, axis, "logsumexp");
  if (v.cols == 0) throw std::invalid_argument("logsumexp: empty slice");
  Tensor base = v.transposed ? transpose(x) : x;
  Tensor out = Tensor::zeros({v.rows});
  for (int r = 0; r < v.rows; ++r) {
    const double* xr = base.data() + static_cast<size_t>(r) * v.cols;
    double mx = xr[0];
    for (int j = 1; j < v.cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < v.cols; ++j) sum += std::exp(xr[j] - mx);
    out.values()[static_cast<size_t>(r)] = mx + std::log(sum);
  }
  if (want_graph({&base})) {
    const int rows = v.rows, cols = v.cols;
    attach(out, {base}, [rows, cols](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (int r = 0; r < rows; ++r) {
        const double lse = o.values()[static_cast<size_t>(r)];
        const double gr = g[static_cast<size_t>(r)];
        const double* xr = px.data() + static_cast<size_t>(r) * cols;
        for (int j = 0; j < cols; ++j)
          gx[static_cast<size_t>(r) * cols + j] += gr * std::exp(xr[j] - lse);
      }
    });
  }
  return out;
}

Tensor attn_softmax(const Tensor& scores, bool causal) {
  check_2d(scores, "attn_softmax");
  const int m = scores.rows(), n = scores.cols();
  if (causal && m != n)
    throw std::invalid_argument("attn_softmax: causal mask needs square scores, got " +
                                shape_str(scores.shape()));
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const int limit = causal ? i + 1 : n;
    const double* xi = scores.data() + static_cast<size_t>(i) * n;
    double* oi = out.data() + static_cast<size_t>(i) * n;
    double mx = xi[0];
    for (int j = 1; j < limit; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < limit; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      sum += oi[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < limit; ++j) oi[j] *= inv;
    // masked tail stays exactly zero
  }
  if (want_graph({&scores})) {
    attach(out, {scores}, [m, n, causal](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (int i = 0; i < m; ++i) {
        const int limit = causal ? i + 1 : n;
        const size_t base_i = static_cast<size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < limit; ++j) dot += g[base_i + j] * o.values()[base_i + j];
        for (int j = 0; j < limit; ++j)
          gx[base_i + j] += o.values()[base_i + j] * (g[base_i + j] - dot);
      }
    });
  }
  return out;
}

Tensor link_log_softmax(const Tensor& scores) {
  check_2d(scores, "link_log_softmax");
  const int s_count = scores.rows();
  if (scores.cols() != s_count)
    throw std::invalid_argument("link_log_softmax: scores must be square, got " +
                                shape_str(scores.shape()));
  if (s_count < 2) throw std::invalid_argument("link_log_softmax: needs at least 2 steps");
  Tensor out = Tensor::full({s_count, s_count}, kNegInf);
  for (int s = 0; s < s_count - 1; ++s) {
    const double* xi = scores.data() + static_cast<size_t>(s) * s_count;
    double* oi = out.data() + static_cast<size_t>(s) * s_count;
    double mx = xi[s + 1];
    for (int j = s + 2; j < s_count; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = s + 1; j < s_count; ++j) sum += std::exp(xi[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = s + 1; j < s_count; ++j) oi[j] = xi[j] - lse;
  }
  if (want_graph({&scores})) {
    attach(out, {scores}, [s_count](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (int s = 0; s < s_count - 1; ++s) {
        const size_t base_i = static_cast<size_t>(s) * s_count;
        double gsum = 0.0;
        for (int j = s + 1; j < s_count; ++j) gsum += g[base_i + j];
        for (int j = s + 1; j < s_count; ++j)
          gx[base_i + j] += g[base_i + j] - std::exp(o.values()[base_i + j]) * gsum;
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total);
  if (want_graph({&x})) {
    attach(out, {x}, [](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const double g = (*o.grad_if_present())[0];
      auto& gx = px.grad();
      for (double& v : gx) v += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const size_t n = x.numel();
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (want_graph({&x})) {
    attach(out, {x}, [n](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const double g = (*o.grad_if_present())[0] / static_cast<double>(n);
      auto& gx = px.grad();
      for (double& v : gx) v += g;
    });
  }
  return out;
}

Tensor select_per_row(const Tensor& x, const std::vector<int>& ids) {
  check_2d(x, "select_per_row");
  const int m = x.rows(), n = x.cols();
  if (static_cast<int>(ids.size()) != m)
    throw std::invalid_argument("select_per_row: need one id per row of " +
                                shape_str(x.shape()));
  for (int id : ids)
    if (id < 0 || id >= n)
      throw std::invalid_argument("select_per_row: column id " + std::to_string(id) +
                                  " out of range");
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i)
    out.values()[static_cast<size_t>(i)] =
        x.values()[static_cast<size_t>(i) * n + ids[static_cast<size_t>(i)]];
  if (want_graph({&x})) {
    attach(out, {x}, [ids, n](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (size_t i = 0; i < ids.size(); ++i)
        gx[i * static_cast<size_t>(n) + ids[i]] += g[i];
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const size_t n = x.numel();
  auto mask = std::make_shared<std::vector<uint8_t>>(n);
  const double scale = 1.0 / (1.0 - rate);
  Tensor out = Tensor::zeros(x.shape());
  for (size_t i = 0; i < n; ++i) {
    const bool keep = rng.uniform_real() >= rate;
    (*mask)[i] = keep;
    out.values()[i] = keep ? x.values()[i] * scale : 0.0;
  }
  if (want_graph({&x})) {
    attach(out, {x}, [mask, scale](const Tensor& o) {
      Tensor px = o.node()->parents[0];
      const auto& g = *o.grad_if_present();
      auto& gx = px.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if ((*mask)[i]) gx[i] += g[i] * scale;
    });
  }
  return out;
}

}  // namespace dagnmt
