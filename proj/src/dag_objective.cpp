#include "dagnmt/dag_objective.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include "dagnmt/ops.hpp"

namespace dagnmt {

namespace {

bool is_neg_inf(double v) { return v <= kNegInf * 0.5; }

void check_tokens(const DagTables& dag, const std::vector<int>& y) {
  for (int tok : y)
    if (tok < 0 || tok >= dag.V)
      throw std::invalid_argument("token id " + std::to_string(tok) +
                                  " outside vocabulary of size " + std::to_string(dag.V));
}

// alpha[t][s] = log P(emit y[0..t], a_t = s); row-major T x S
std::vector<double> forward_dp(const DagTables& dag, const std::vector<int>& y) {
  const int S = dag.S;
  const int T = static_cast<int>(y.size());
  std::vector<double> alpha(static_cast<size_t>(T) * S, kNegInf);
  alpha[0] = dag.word_at(0, y[0]);
  for (int t = 1; t < T; ++t) {
    // feasible band: enough predecessors behind, enough steps ahead to reach S-1
    const int lo = t;
    const int hi = S - 1 - (T - 1 - t);
    const double* prev = alpha.data() + static_cast<size_t>(t - 1) * S;
    double* cur = alpha.data() + static_cast<size_t>(t) * S;
    for (int s = lo; s <= hi; ++s) {
      double mx = kNegInf;
      for (int sp = t - 1; sp < s; ++sp) {
        const double v = prev[sp] + dag.link_at(sp, s);
        if (v > mx) mx = v;
      }
      if (is_neg_inf(mx)) continue;
      double sum = 0.0;
      for (int sp = t - 1; sp < s; ++sp)
        sum += std::exp(prev[sp] + dag.link_at(sp, s) - mx);
      cur[s] = mx + std::log(sum) + dag.word_at(s, y[t]);
    }
  }
  return alpha;
}

// beta[t][s] = log P(emit y[t+1..T-1] and land on S-1 | a_t = s)
std::vector<double> backward_dp(const DagTables& dag, const std::vector<int>& y) {
  const int S = dag.S;
  const int T = static_cast<int>(y.size());
  std::vector<double> beta(static_cast<size_t>(T) * S, kNegInf);
  beta[static_cast<size_t>(T - 1) * S + (S - 1)] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    const int lo = t;
    const int hi = S - 1 - (T - 1 - t);
    const double* next = beta.data() + static_cast<size_t>(t + 1) * S;
    double* cur = beta.data() + static_cast<size_t>(t) * S;
    for (int s = lo; s <= hi; ++s) {
      double mx = kNegInf;
      for (int sn = s + 1; sn < S; ++sn) {
        const double v = dag.link_at(s, sn) + dag.word_at(sn, y[t + 1]) + next[sn];
        if (v > mx) mx = v;
      }
      if (is_neg_inf(mx)) continue;
      double sum = 0.0;
      for (int sn = s + 1; sn < S; ++sn)
        sum += std::exp(dag.link_at(s, sn) + dag.word_at(sn, y[t + 1]) + next[sn] - mx);
      cur[s] = mx + std::log(sum);
    }
  }
  return beta;
}

}  // namespace

double path_log_prob(const DagTables& dag, const std::vector<int>& y, const Path& a) {
  const int T = static_cast<int>(y.size());
  if (static_cast<int>(a.size()) != T)
    throw std::invalid_argument("path length " + std::to_string(a.size()) +
                                " does not match target length " + std::to_string(T));
  if (T < 2) throw std::invalid_argument("path constraint violated: length must be >= 2");
  if (a.front() != 0) throw std::invalid_argument("path constraint violated: a[0] must be 0");
  if (a.back() != dag.S - 1)
    throw std::invalid_argument("path constraint violated: a[T-1] must be S-1");
  for (size_t i = 1; i < a.size(); ++i)
    if (a[i] <= a[i - 1])
      throw std::invalid_argument("path constraint violated: indices must strictly increase");
  if (a.back() >= dag.S)
    throw std::invalid_argument("path constraint violated: index beyond lattice");
  check_tokens(dag, y);

  double total = dag.word_at(a[0], y[0]);
  for (int t = 1; t < T; ++t)
    total += dag.link_at(a[t - 1], a[t]) + dag.word_at(a[t], y[t]);
  return total;
}

double dag_log_likelihood_value(const DagTables& dag, const std::vector<int>& y) {
  const int T = static_cast<int>(y.size());
  if (T < 2) throw std::invalid_argument("target must have at least 2 tokens");
  if (T > dag.S) throw std::invalid_argument("target longer than lattice (T=" +
                                             std::to_string(T) +
                                             ", S=" + std::to_string(dag.S) + ")");
  check_tokens(dag, y);
  std::vector<double> alpha = forward_dp(dag, y);
  return alpha[static_cast<size_t>(T - 1) * dag.S + (dag.S - 1)];
}

Tensor dag_log_likelihood(const DagOutput& dag, const std::vector<int>& y) {
  const DagTables tab = tables(dag);
  const int T = static_cast<int>(y.size());
  if (T < 2) throw std::invalid_argument("target must have at least 2 tokens");
  if (T > tab.S) throw std::invalid_argument("target longer than lattice (T=" +
                                             std::to_string(T) +
                                             ", S=" + std::to_string(tab.S) + ")");
  check_tokens(tab, y);

  auto alpha = std::make_shared<std::vector<double>>(forward_dp(tab, y));
  const int S = tab.S;
  const int V = tab.V;
  const double loglik = (*alpha)[static_cast<size_t>(T - 1) * S + (S - 1)];
  Tensor out = Tensor::scalar(loglik);

  const bool build = grad_enabled() &&
                     (dag.word_logp.requires_grad() || dag.link_logp.requires_grad());
  if (build) {
    Tensor word = dag.word_logp;
    Tensor link = dag.link_logp;
    auto targets = std::make_shared<std::vector<int>>(y);
    out.set_requires_grad(true);
    out.node() = std::make_shared<Node>();
    out.node()->parents = {word, link};
    out.node()->backward = [alpha, targets, S, V, loglik](const Tensor& o) {
      Tensor word_p = o.node()->parents[0];
      Tensor link_p = o.node()->parents[1];
      const double gout = (*o.grad_if_present())[0];
      if (gout == 0.0) return;
      const std::vector<int>& ys = *targets;
      const int T = static_cast<int>(ys.size());
      DagTables tab2{S, V, word_p.data(), link_p.data()};
      std::vector<double> beta = backward_dp(tab2, ys);
      const std::vector<double>& a = *alpha;

      // d loglik / d word[s][y_t] = P(a_t = s | y)
      if (word_p.requires_grad()) {
        auto& gw = word_p.grad();
        for (int t = 0; t < T; ++t) {
          const int lo = t;
          const int hi = S - 1 - (T - 1 - t);
          for (int s = lo; s <= hi; ++s) {
            const double la = a[static_cast<size_t>(t) * S + s];
            const double lb = beta[static_cast<size_t>(t) * S + s];
            if (is_neg_inf(la) || is_neg_inf(lb)) continue;
            gw[static_cast<size_t>(s) * V + ys[t]] += gout * std::exp(la + lb - loglik);
          }
        }
      }
      // d loglik / d link[s][s'] = sum_t P(a_t = s, a_{t+1} = s' | y)
      if (link_p.requires_grad()) {
        auto& gl = link_p.grad();
        for (int t = 0; t + 1 < T; ++t) {
          const int lo = t;
          const int hi = S - 1 - (T - 1 - t);
          for (int s = lo; s <= hi; ++s) {
            const double la = a[static_cast<size_t>(t) * S + s];
            if (is_neg_inf(la)) continue;
            const int lo2 = std::max(s + 1, t + 1);
            const int hi2 = S - 1 - (T - 2 - t);
            for (int sn = lo2; sn <= hi2; ++sn) {
              const double lb = beta[static_cast<size_t>(t + 1) * S + sn];
              if (is_neg_inf(lb)) continue;
              const double term = la + tab2.link_at(s, sn) + tab2.word_at(sn, ys[t + 1]) + lb;
              gl[static_cast<size_t>(s) * S + sn] += gout * std::exp(term - loglik);
            }
          }
        }
      }
    };
  }
  return out;
}

std::vector<double> dag_forward_table(const DagTables& dag, const std::vector<int>& y) {
  const int T = static_cast<int>(y.size());
  if (T < 2) throw std::invalid_argument("target must have at least 2 tokens");
  if (T > dag.S) throw std::invalid_argument("target longer than lattice");
  check_tokens(dag, y);
  return forward_dp(dag, y);
}

std::vector<Path> enumerate_paths(int S, int T) {
  if (S > 12) throw std::invalid_argument("enumerate_paths: refusing S > 12 (got " +
                                          std::to_string(S) + ")");
  if (T < 2 || T > S)
    throw std::invalid_argument("enumerate_paths: need 2 <= T <= S, got T=" + std::to_string(T) +
                                ", S=" + std::to_string(S));
  std::vector<Path> out;
  const int inner = T - 2;  // picks from {1, ..., S-2}
  Path pick(static_cast<size_t>(inner));
  // lexicographic combinations
  std::function<void(int, int)> rec = [&](int pos, int start) {
    if (pos == inner) {
      Path p;
      p.reserve(static_cast<size_t>(T));
      p.push_back(0);
      p.insert(p.end(), pick.begin(), pick.end());
      p.push_back(S - 1);
      out.push_back(std::move(p));
      return;
    }
    for (int v = start; v <= S - 2 - (inner - 1 - pos); ++v) {
      pick[static_cast<size_t>(pos)] = v;
      rec(pos + 1, v + 1);
    }
  };
  rec(0, 1);
  return out;
}

BatchLoss batch_dag_loss(const std::vector<BatchItem>& batch) {
  BatchLoss result;
  std::vector<Tensor> nlls;
  double token_sum = 0.0;
  size_t token_count = 0;
  for (const BatchItem& item : batch) {
    const int T = static_cast<int>(item.target->size());
    if (T > item.dag->S) {
      ++result.skipped;
      continue;
    }
    Tensor ll = dag_log_likelihood(*item.dag, *item.target);
    nlls.push_back(mul_scalar(ll, -1.0));
    token_sum += -ll.item();
    token_count += item.target->size();
    ++result.used;
  }
  if (nlls.empty()) throw std::runtime_error("batch_dag_loss: empty effective batch");
  Tensor total = nlls[0];
  for (size_t i = 1; i < nlls.size(); ++i) total = add(total, nlls[i]);
  result.loss = mul_scalar(total, 1.0 / static_cast<double>(nlls.size()));
  result.token_nll = token_count ? token_sum / static_cast<double>(token_count) : 0.0;
  return result;
}

}  // namespace dagnmt
