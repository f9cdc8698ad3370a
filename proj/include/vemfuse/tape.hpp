#pragma once
// Reverse-accumulation autodiff over a per-step computation record.
//
// A Tape is rebuilt for every training step (the densification overlay can
// change the graph topology batch to batch). Nodes are recorded in creation
// order, which is already topological; backward() walks them in reverse and
// finally scatters leaf gradients into the owning Parameter::grad buffers,
// accumulating across calls until Parameter::zero_grad().

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vemfuse/tensor.hpp"

namespace vemfuse {

enum class Composition { kSubtract, kMultiply, kCircularCorrelation };

// Flattened edge for message passing: dst aggregates phi(ent[src], rel[rel]).
struct AggEdge {
  int32_t src;
  int32_t rel;
  int32_t dst;
};

template <typename S>
class Tape {
 public:
  struct Var {
    int id = -1;
    uint64_t tape_id = 0;
    bool valid() const { return id >= 0; }
  };

  Tape() : tape_id_(next_tape_id().fetch_add(1, std::memory_order_relaxed) + 1) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Tensor<S>& val(Var v) const { return node(v).value; }
  S scalar_val(Var v) const {
    const Tensor<S>& t = val(v);
    if (t.size() != 1) throw std::invalid_argument("scalar_val: tensor is not scalar");
    return t.data[0];
  }

  size_t num_nodes() const { return nodes_.size(); }

  // ---- inputs -------------------------------------------------------------

  Var leaf(Parameter<S>& p) {
    int id = new_node(p.value, {}, true);
    nodes_[id].param = &p;
    nodes_[id].back = [](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>& pg = n.param->grad;
      for (size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += n.grad.data[i];
    };
    return wrap(id);
  }

  Var constant(Tensor<S> t) {
    int id = new_node(std::move(t), {}, false);
    return wrap(id);
  }

  // Gather rows of a 2-D parameter without materializing the full matrix.
  Var gather_rows(Parameter<S>& p, std::vector<int64_t> rows) {
    if (p.value.shape.size() != 2) throw std::invalid_argument("gather_rows: parameter must be 2-D");
    const int64_t c = p.value.cols();
    Tensor<S> out = Tensor<S>::zeros({static_cast<int64_t>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i) {
      check_row(rows[i], p.value.rows(), "gather_rows(parameter)");
      const S* src = p.value.row_ptr(rows[i]);
      std::copy(src, src + c, out.row_ptr(static_cast<int64_t>(i)));
    }
    int id = new_node(std::move(out), {}, true);
    nodes_[id].param = &p;
    nodes_[id].back = [rows = std::move(rows), c](Tape& t, int self) {
      Node& n = t.nodes_[self];
      for (size_t i = 0; i < rows.size(); ++i) {
        S* dst = n.param->grad.row_ptr(rows[i]);
        const S* g = n.grad.row_ptr(static_cast<int64_t>(i));
        for (int64_t j = 0; j < c; ++j) dst[j] += g[j];
      }
    };
    return wrap(id);
  }

  Var gather_rows(Var a, std::vector<int64_t> rows) {
    const Tensor<S>& av = val(a);
    if (av.shape.size() != 2) throw std::invalid_argument("gather_rows: input must be 2-D");
    const int64_t c = av.cols();
    Tensor<S> out = Tensor<S>::zeros({static_cast<int64_t>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i) {
      check_row(rows[i], av.rows(), "gather_rows(var)");
      const S* src = av.row_ptr(rows[i]);
      std::copy(src, src + c, out.row_ptr(static_cast<int64_t>(i)));
    }
    int id = new_node(std::move(out), {a.id}, node(a).needs_grad);
    nodes_[id].back = [rows = std::move(rows), c](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* ga = t.grad_of(n.inputs[0]);
      if (!ga) return;
      for (size_t i = 0; i < rows.size(); ++i) {
        S* dst = ga->row_ptr(rows[i]);
        const S* g = n.grad.row_ptr(static_cast<int64_t>(i));
        for (int64_t j = 0; j < c; ++j) dst[j] += g[j];
      }
    };
    return wrap(id);
  }

  // ---- structure ----------------------------------------------------------

  Var select_row(Var a, int64_t row) {
    const Tensor<S>& av = val(a);
    check_row(row, av.rows(), "select_row");
    const int64_t c = av.cols();
    Tensor<S> out = Tensor<S>::zeros({c});
    std::copy(av.row_ptr(row), av.row_ptr(row) + c, out.data.begin());
    int id = new_node(std::move(out), {a.id}, node(a).needs_grad);
    nodes_[id].back = [row, c](Tape& t, int self) {
      Node& n = t.nodes_[self];
      if (Tensor<S>* ga = t.grad_of(n.inputs[0])) {
        S* dst = ga->row_ptr(row);
        for (int64_t j = 0; j < c; ++j) dst[j] += n.grad.data[j];
      }
    };
    return wrap(id);
  }

  // Stack 1-D vectors (or single-row matrices) of equal width into a matrix.
  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    int64_t c = val(parts[0]).cols();
    int64_t r = 0;
    bool needs = false;
    for (Var p : parts) {
      const Tensor<S>& pv = val(p);
      if (pv.cols() != c) throw std::invalid_argument("concat_rows: width mismatch");
      r += pv.rows();
      needs = needs || node(p).needs_grad;
    }
    Tensor<S> out = Tensor<S>::zeros({r, c});
    std::vector<int> ins;
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (Var p : parts) {
      const Tensor<S>& pv = val(p);
      std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + off * c);
      ins.push_back(p.id);
      offsets.push_back(off);
      off += pv.rows();
    }
    int id = new_node(std::move(out), std::move(ins), needs);
    nodes_[id].back = [offsets, c](Tape& t, int self) {
      Node& n = t.nodes_[self];
      for (size_t k = 0; k < n.inputs.size(); ++k) {
        Tensor<S>* g = t.grad_of(n.inputs[k]);
        if (!g) continue;
        const int64_t nr = g->rows();
        const S* src = n.grad.data.data() + offsets[k] * c;
        for (int64_t i = 0; i < nr * c; ++i) g->data[i] += src[i];
      }
    };
    return wrap(id);
  }

  // ---- elementwise ---------------------------------------------------------

  Var add(Var a, Var b) { return binary_ew(a, b, "add",
      [](S x, S y) { return x + y; },
      [](S, S, S g, S& gx, S& gy) { gx += g; gy += g; }); }

  Var sub(Var a, Var b) { return binary_ew(a, b, "sub",
      [](S x, S y) { return x - y; },
      [](S, S, S g, S& gx, S& gy) { gx += g; gy -= g; }); }

  Var mul(Var a, Var b) { return binary_ew(a, b, "mul",
      [](S x, S y) { return x * y; },
      [](S x, S y, S g, S& gx, S& gy) { gx += g * y; gy += g * x; }); }

  Var scale(Var a, S c) { return unary_ew(a,
      [c](S x) { return c * x; },
      [c](S, S, S g) { return c * g; }); }

  Var add_const(Var a, S c) { return unary_ew(a,
      [c](S x) { return x + c; },
      [](S, S, S g) { return g; }); }

  Var relu(Var a) { return unary_ew(a,
      [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S, S g) { return x > S(0) ? g : S(0); }); }

  Var tanh_(Var a) { return unary_ew(a,
      [](S x) { return std::tanh(x); },
      [](S, S y, S g) { return g * (S(1) - y * y); }); }

  Var exp_(Var a) { return unary_ew(a,
      [](S x) { return std::exp(x); },
      [](S, S y, S g) { return g * y; }); }

  Var log_(Var a) { return unary_ew(a,
      [](S x) { return std::log(x); },
      [](S x, S, S g) { return g / x; }); }

  Var clamp_min_const(Var a, S floor) { return unary_ew(a,
      [floor](S x) { return x > floor ? x : floor; },
      [floor](S x, S, S g) { return x > floor ? g : S(0); }); }

  // ---- reductions -----------------------------------------------------------

  Var sum(Var a) {
    const Tensor<S>& av = val(a);
    S total = S(0);
    for (S v : av.data) total += v;
    int id = new_node(Tensor<S>::scalar(total), {a.id}, node(a).needs_grad);
    nodes_[id].back = [](Tape& t, int self) {
      Node& n = t.nodes_[self];
      if (Tensor<S>* g = t.grad_of(n.inputs[0])) {
        const S gv = n.grad.data[0];
        for (S& x : g->data) x += gv;
      }
    };
    return wrap(id);
  }

  Var mean(Var a) {
    const int64_t n = val(a).size();
    return scale(sum(a), S(1) / static_cast<S>(n));
  }

  // Weighted sum against a fixed tensor: sum_i w_i * x_i -> scalar.
  Var dot_const(Var a, Tensor<S> w) {
    const Tensor<S>& av = val(a);
    if (av.size() != w.size()) throw std::invalid_argument("dot_const: size mismatch");
    S total = S(0);
    for (int64_t i = 0; i < av.size(); ++i) total += av.data[i] * w.data[i];
    int id = new_node(Tensor<S>::scalar(total), {a.id}, node(a).needs_grad);
    nodes_[id].back = [w = std::move(w)](Tape& t, int self) {
      Node& n = t.nodes_[self];
      if (Tensor<S>* g = t.grad_of(n.inputs[0])) {
        const S gv = n.grad.data[0];
        for (size_t i = 0; i < w.data.size(); ++i) g->data[i] += gv * w.data[i];
      }
    };
    return wrap(id);
  }

  // ---- matmul ----------------------------------------------------------------

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    if (A.shape.size() > 2 || B.shape.size() > 2)
      throw std::invalid_argument("matmul: rank > 2");
    const int64_t am = trans_a ? A.cols() : A.rows();
    const int64_t ak = trans_a ? A.rows() : A.cols();
    const int64_t bk = trans_b ? B.cols() : B.rows();
    const int64_t bn = trans_b ? B.rows() : B.cols();
    if (ak != bk)
      throw std::invalid_argument("matmul: inner dimension mismatch " + A.shape_str() + " x " + B.shape_str());
    Tensor<S> out = gemm(A, B, trans_a, trans_b, am, ak, bn);
    int id = new_node(std::move(out), {a.id, b.id}, node(a).needs_grad || node(b).needs_grad);
    nodes_[id].back = [trans_a, trans_b](Tape& t, int self) {
      Node& n = t.nodes_[self];
      const Tensor<S>& A = t.nodes_[n.inputs[0]].value;
      const Tensor<S>& B = t.nodes_[n.inputs[1]].value;
      const Tensor<S>& G = n.grad;
      const int64_t m = G.rows(), nn = G.cols();
      if (Tensor<S>* ga = t.grad_of(n.inputs[0])) {
        // d(opA) = G * opB^T
        const int64_t k = trans_a ? A.rows() : A.cols();
        Tensor<S> d = gemm(G, B, false, !trans_b, m, nn, k);
        accumulate_maybe_transposed(*ga, d, trans_a);
      }
      if (Tensor<S>* gb = t.grad_of(n.inputs[1])) {
        // d(opB) = opA^T * G
        const int64_t k = trans_a ? A.rows() : A.cols();
        Tensor<S> d = gemm(A, G, !trans_a, false, k, m, nn);
        accumulate_maybe_transposed(*gb, d, trans_b);
      }
    };
    return wrap(id);
  }

  // ---- softmax family ---------------------------------------------------------

  // Row-wise tempered softmax with max-subtraction.
  Var softmax_rows_t(Var a, S temperature) {
    check_temperature(temperature);
    const Tensor<S>& av = val(a);
    const int64_t r = av.rows(), c = av.cols();
    Tensor<S> out = Tensor<S>::zeros(av.shape);
    for (int64_t i = 0; i < r; ++i) softmax_row(av.row_ptr(i), out.row_ptr(i), c, temperature);
    int id = new_node(std::move(out), {a.id}, node(a).needs_grad);
    nodes_[id].back = [r, c, temperature](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* ga = t.grad_of(n.inputs[0]);
      if (!ga) return;
      for (int64_t i = 0; i < r; ++i) {
        const S* p = n.value.row_ptr(i);
        const S* g = n.grad.row_ptr(i);
        S dot = S(0);
        for (int64_t j = 0; j < c; ++j) dot += p[j] * g[j];
        S* gx = ga->row_ptr(i);
        for (int64_t j = 0; j < c; ++j) gx[j] += p[j] * (g[j] - dot) / temperature;
      }
    };
    return wrap(id);
  }

  // Row-wise tempered log-softmax.
  Var log_softmax_rows_t(Var a, S temperature) {
    check_temperature(temperature);
    const Tensor<S>& av = val(a);
    const int64_t r = av.rows(), c = av.cols();
    Tensor<S> out = Tensor<S>::zeros(av.shape);
    for (int64_t i = 0; i < r; ++i) {
      const S* x = av.row_ptr(i);
      S* y = out.row_ptr(i);
      S mx = x[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
      S lse = S(0);
      for (int64_t j = 0; j < c; ++j) lse += std::exp((x[j] - mx) / temperature);
      lse = std::log(lse);
      for (int64_t j = 0; j < c; ++j) y[j] = (x[j] - mx) / temperature - lse;
    }
    int id = new_node(std::move(out), {a.id}, node(a).needs_grad);
    nodes_[id].back = [r, c, temperature](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* ga = t.grad_of(n.inputs[0]);
      if (!ga) return;
      for (int64_t i = 0; i < r; ++i) {
        const S* y = n.value.row_ptr(i);
        const S* g = n.grad.row_ptr(i);
        S gsum = S(0);
        for (int64_t j = 0; j < c; ++j) gsum += g[j];
        S* gx = ga->row_ptr(i);
        for (int64_t j = 0; j < c; ++j) gx[j] += (g[j] - std::exp(y[j]) * gsum) / temperature;
      }
    };
    return wrap(id);
  }

  // Numerically stable mean binary cross-entropy against a fixed target tensor.
  Var bce_with_logits_mean(Var logits, Tensor<S> targets) {
    const Tensor<S>& x = val(logits);
    if (x.size() != targets.size()) throw std::invalid_argument("bce_with_logits: size mismatch");
    const int64_t n = x.size();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double xi = static_cast<double>(x.data[i]);
      const double ti = static_cast<double>(targets.data[i]);
      total += std::max(xi, 0.0) - xi * ti + std::log1p(std::exp(-std::fabs(xi)));
    }
    const S inv_n = S(1) / static_cast<S>(n);
    int id = new_node(Tensor<S>::scalar(static_cast<S>(total / static_cast<double>(n))),
                      {logits.id}, node(logits).needs_grad);
    nodes_[id].back = [targets = std::move(targets), inv_n](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* g = t.grad_of(n.inputs[0]);
      if (!g) return;
      const Tensor<S>& x = t.nodes_[n.inputs[0]].value;
      const S gv = n.grad.data[0] * inv_n;
      for (size_t i = 0; i < x.data.size(); ++i) {
        const S sig = S(1) / (S(1) + std::exp(-x.data[i]));
        g->data[i] += gv * (sig - targets.data[i]);
      }
    };
    return wrap(id);
  }

  // Relational message aggregation: out[dst] += phi(ent[src], rel[rel]) * norm[dst]
  // over the prepared edge list. norm holds 1/degree (0 for isolated entities).
  Var compose_aggregate(Var entities, Var relations, std::vector<AggEdge> edges,
                        std::vector<S> norm, Composition comp) {
    const Tensor<S>& E = val(entities);
    const Tensor<S>& R = val(relations);
    if (E.shape.size() != 2 || R.shape.size() != 2 || E.cols() != R.cols())
      throw std::invalid_argument("compose_aggregate: dimension mismatch");
    const int64_t d = E.cols();
    if (static_cast<int64_t>(norm.size()) != E.rows())
      throw std::invalid_argument("compose_aggregate: norm size mismatch");
    Tensor<S> out = Tensor<S>::zeros(E.shape);
    std::vector<S> phi(static_cast<size_t>(d));
    for (const AggEdge& e : edges) {
      check_row(e.src, E.rows(), "compose_aggregate src");
      check_row(e.dst, E.rows(), "compose_aggregate dst");
      check_row(e.rel, R.rows(), "compose_aggregate rel");
      compose(E.row_ptr(e.src), R.row_ptr(e.rel), phi.data(), d, comp);
      S* o = out.row_ptr(e.dst);
      const S w = norm[static_cast<size_t>(e.dst)];
      for (int64_t j = 0; j < d; ++j) o[j] += w * phi[j];
    }
    int id = new_node(std::move(out), {entities.id, relations.id},
                      node(entities).needs_grad || node(relations).needs_grad);
    nodes_[id].back = [edges = std::move(edges), norm = std::move(norm), d, comp](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* ge = t.grad_of(n.inputs[0]);
      Tensor<S>* gr = t.grad_of(n.inputs[1]);
      if (!ge && !gr) return;
      const Tensor<S>& E = t.nodes_[n.inputs[0]].value;
      const Tensor<S>& R = t.nodes_[n.inputs[1]].value;
      for (const AggEdge& e : edges) {
        const S w = norm[static_cast<size_t>(e.dst)];
        const S* g = n.grad.row_ptr(e.dst);
        const S* es = E.row_ptr(e.src);
        const S* rr = R.row_ptr(e.rel);
        S* gs = ge ? ge->row_ptr(e.src) : nullptr;
        S* grr = gr ? gr->row_ptr(e.rel) : nullptr;
        switch (comp) {
          case Composition::kSubtract:
            for (int64_t j = 0; j < d; ++j) {
              const S gv = w * g[j];
              if (gs) gs[j] += gv;
              if (grr) grr[j] -= gv;
            }
            break;
          case Composition::kMultiply:
            for (int64_t j = 0; j < d; ++j) {
              const S gv = w * g[j];
              if (gs) gs[j] += gv * rr[j];
              if (grr) grr[j] += gv * es[j];
            }
            break;
          case Composition::kCircularCorrelation:
            // phi_k = sum_i src_i * rel_(i+k mod d)
            for (int64_t k = 0; k < d; ++k) {
              const S gv = w * g[k];
              if (gv == S(0)) continue;
              for (int64_t i = 0; i < d; ++i) {
                const int64_t m = (i + k) % d;
                if (gs) gs[i] += gv * rr[m];
                if (grr) grr[m] += gv * es[i];
              }
            }
            break;
        }
      }
    };
    return wrap(id);
  }

  // ---- backward ------------------------------------------------------------

  void backward(Var loss) {
    if (loss.tape_id != tape_id_ || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("backward: loss is not part of this record");
    if (nodes_[loss.id].value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    for (Node& n : nodes_) n.grad = Tensor<S>();
    nodes_[loss.id].grad = Tensor<S>::scalar(S(1));
    if (nodes_[loss.id].value.shape.size() == 1) nodes_[loss.id].grad.shape = {1};
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.data.empty()) continue;
      if (n.back) n.back(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> back;
    Parameter<S>* param = nullptr;
    bool needs_grad = false;
  };

  static std::atomic<uint64_t>& next_tape_id() {
    static std::atomic<uint64_t> counter{0};
    return counter;
  }

  static void check_temperature(S t) {
    if (!(t > S(0))) throw std::invalid_argument("temperature must be > 0");
  }

  static void check_row(int64_t r, int64_t n, const char* where) {
    if (r < 0 || r >= n)
      throw std::out_of_range(std::string(where) + ": index " + std::to_string(r) +
                              " out of range [0," + std::to_string(n) + ")");
  }

  static void softmax_row(const S* x, S* y, int64_t c, S temperature) {
    S mx = x[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    S total = S(0);
    for (int64_t j = 0; j < c; ++j) {
      y[j] = std::exp((x[j] - mx) / temperature);
      total += y[j];
    }
    for (int64_t j = 0; j < c; ++j) y[j] /= total;
  }

  static void compose(const S* e, const S* r, S* out, int64_t d, Composition comp) {
    switch (comp) {
      case Composition::kSubtract:
        for (int64_t j = 0; j < d; ++j) out[j] = e[j] - r[j];
        break;
      case Composition::kMultiply:
        for (int64_t j = 0; j < d; ++j) out[j] = e[j] * r[j];
        break;
      case Composition::kCircularCorrelation:
        for (int64_t k = 0; k < d; ++k) {
          S acc = S(0);
          for (int64_t i = 0; i < d; ++i) acc += e[i] * r[(i + k) % d];
          out[k] = acc;
        }
        break;
    }
  }

  static Tensor<S> gemm(const Tensor<S>& A, const Tensor<S>& B, bool ta, bool tb,
                        int64_t m, int64_t k, int64_t n) {
    Tensor<S> C = Tensor<S>::zeros({m, n});
    const int64_t a_cols = A.cols();
    const int64_t b_cols = B.cols();
    if (tb) {
      // Dot-product form streams both rows contiguously.
      for (int64_t i = 0; i < m; ++i) {
        S* crow = C.row_ptr(i);
        for (int64_t j = 0; j < n; ++j) {
          const S* brow = B.data.data() + j * b_cols;
          S acc = S(0);
          if (!ta) {
            const S* arow = A.data.data() + i * a_cols;
            for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
          } else {
            for (int64_t kk = 0; kk < k; ++kk) acc += A.data[kk * a_cols + i] * brow[kk];
          }
          crow[j] = acc;
        }
      }
      return C;
    }
    for (int64_t i = 0; i < m; ++i) {
      S* crow = C.row_ptr(i);
      for (int64_t kk = 0; kk < k; ++kk) {
        const S av = ta ? A.data[kk * a_cols + i] : A.data[i * a_cols + kk];
        if (av == S(0)) continue;
        const S* brow = B.data.data() + kk * b_cols;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return C;
  }

  static void accumulate_maybe_transposed(Tensor<S>& dst, const Tensor<S>& src, bool transposed) {
    if (!transposed) {
      for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
    } else {
      const int64_t r = src.rows(), c = src.cols();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) dst.data[j * r + i] += src.data[i * c + j];
    }
  }

  template <typename FwdFn, typename BackFn>
  Var unary_ew(Var a, FwdFn fwd, BackFn bck) {
    const Tensor<S>& av = val(a);
    Tensor<S> out;
    out.shape = av.shape;
    out.data.reserve(av.data.size());
    for (S x : av.data) out.data.push_back(fwd(x));
    int id = new_node(std::move(out), {a.id}, node(a).needs_grad);
    nodes_[id].back = [bck](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* g = t.grad_of(n.inputs[0]);
      if (!g) return;
      const Tensor<S>& x = t.nodes_[n.inputs[0]].value;
      for (size_t i = 0; i < x.data.size(); ++i)
        g->data[i] += bck(x.data[i], n.value.data[i], n.grad.data[i]);
    };
    return wrap(id);
  }

  template <typename FwdFn, typename BackFn>
  Var binary_ew(Var a, Var b, const char* name, FwdFn fwd, BackFn bck) {
    const Tensor<S>& av = val(a);
    const Tensor<S>& bv = val(b);
    if (!av.same_shape(bv))
      throw std::invalid_argument(std::string(name) + ": shape mismatch " + av.shape_str() +
                                  " vs " + bv.shape_str());
    Tensor<S> out;
    out.shape = av.shape;
    out.data.reserve(av.data.size());
    for (size_t i = 0; i < av.data.size(); ++i) out.data.push_back(fwd(av.data[i], bv.data[i]));
    int id = new_node(std::move(out), {a.id, b.id}, node(a).needs_grad || node(b).needs_grad);
    nodes_[id].back = [bck](Tape& t, int self) {
      Node& n = t.nodes_[self];
      Tensor<S>* ga = t.grad_of(n.inputs[0]);
      Tensor<S>* gb = t.grad_of(n.inputs[1]);
      if (!ga && !gb) return;
      const Tensor<S>& x = t.nodes_[n.inputs[0]].value;
      const Tensor<S>& y = t.nodes_[n.inputs[1]].value;
      S dummy = S(0);
      for (size_t i = 0; i < x.data.size(); ++i) {
        S& gx = ga ? ga->data[i] : dummy;
        S& gy = gb ? gb->data[i] : dummy;
        bck(x.data[i], y.data[i], n.grad.data[i], gx, gy);
      }
    };
    return wrap(id);
  }

  const Node& node(Var v) const {
    if (v.tape_id != tape_id_ || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("variable does not belong to this record");
    return nodes_[v.id];
  }

  int new_node(Tensor<S> value, std::vector<int> inputs, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Returns the grad buffer of a node, allocating it on first touch;
  // nullptr when the node does not require gradients.
  Tensor<S>* grad_of(int id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.data.empty()) n.grad = Tensor<S>::zeros(n.value.shape);
    return &n.grad;
  }

  Var wrap(int id) { return Var{id, tape_id_}; }

  uint64_t tape_id_;
  std::vector<Node> nodes_;
};

}  // namespace vemfuse
