#include "gat/autograd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "gat/errors.hpp"

namespace gat::ag {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EMat>;
using ConstMatMap = Eigen::Map<const EMat>;

thread_local int g_no_grad_depth = 0;

ConstMatMap as_mat(const Tensor& t, int64_t rows, int64_t cols) {
  return ConstMatMap(t.data(), rows, cols);
}
MatMap as_mat(Tensor& t, int64_t rows, int64_t cols) {
  return MatMap(t.data(), rows, cols);
}

NodePtr result(Tensor value, std::vector<NodePtr> parents,
               std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rec = g_no_grad_depth == 0;
  bool any = false;
  if (rec) {
    for (const auto& p : parents) any = any || p->requires_grad;
  }
  if (rec && any) {
    n->requires_grad = true;
    n->leaf = false;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return n;
}

void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  }
}

// First gradient reaching a node assigns into uninitialized storage; later
// ones accumulate. Only for backwards that write every element — ops that
// scatter into a subset keep ensure_grad()'s zero fill.
inline bool fresh_grad(const NodePtr& p) {
  if (p->grad.defined()) return false;
  p->grad = Tensor::uninit(p->value.shape());
  return true;
}

// Per-head attention products are tiny; route them past Eigen's packing GEMM.
template <class Dst, class Lhs, class Rhs>
inline void product_into(Dst dst, const Lhs& a, const Rhs& b, bool add, bool small) {
  if (small) {
    if (add) dst.noalias() += a.lazyProduct(b);
    else dst.noalias() = a.lazyProduct(b);
  } else {
    if (add) dst.noalias() += a * b;
    else dst.noalias() = a * b;
  }
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad.defined()) grad = Tensor::zeros(value.shape());
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (!grad.defined()) {
    grad = g.clone();
    return;
  }
  double* d = grad.data();
  const double* s = g.data();
  for (int64_t i = 0; i < grad.size(); ++i) d[i] += s[i];
}

NodePtr leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_no_grad_depth == 0;
  n->leaf = true;
  return n;
}

NodePtr constant(Tensor value) { return leaf(std::move(value), false); }
NodePtr constant_scalar(double v) { return constant(Tensor::scalar(v)); }

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                std::function<void(Node&)> backward) {
  return result(std::move(value), std::move(parents), std::move(backward));
}

// ---------------------------------------------------------------- elementwise

NodePtr add(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::uninit(a->value.shape());
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  return result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) b->accumulate(n.grad);
  });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::uninit(a->value.shape());
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
  return result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) {
      const bool f = fresh_grad(b);
      double* d = b->grad.data();
      const double* s = n.grad.data();
      if (f) for (int64_t i = 0; i < b->grad.size(); ++i) d[i] = -s[i];
      else   for (int64_t i = 0; i < b->grad.size(); ++i) d[i] -= s[i];
    }
  });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::uninit(a->value.shape());
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  return result(std::move(out), {a, b}, [a, b](Node& n) {
    const double* g = n.grad.data();
    if (a->requires_grad) {
      const bool f = fresh_grad(a);
      double* d = a->grad.data();
      const double* pb2 = b->value.data();
      if (f) for (int64_t i = 0; i < n.grad.size(); ++i) d[i] = g[i] * pb2[i];
      else   for (int64_t i = 0; i < n.grad.size(); ++i) d[i] += g[i] * pb2[i];
    }
    if (b->requires_grad) {
      const bool f = fresh_grad(b);
      double* d = b->grad.data();
      const double* pa2 = a->value.data();
      if (f) for (int64_t i = 0; i < n.grad.size(); ++i) d[i] = g[i] * pa2[i];
      else   for (int64_t i = 0; i < n.grad.size(); ++i) d[i] += g[i] * pa2[i];
    }
  });
}

NodePtr div(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "div");
  Tensor out = Tensor::uninit(a->value.shape());
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] / pb[i];
  return result(std::move(out), {a, b}, [a, b](Node& n) {
    const double* g = n.grad.data();
    const double* pa2 = a->value.data();
    const double* pb2 = b->value.data();
    if (a->requires_grad) {
      const bool f = fresh_grad(a);
      double* d = a->grad.data();
      if (f) for (int64_t i = 0; i < n.grad.size(); ++i) d[i] = g[i] / pb2[i];
      else   for (int64_t i = 0; i < n.grad.size(); ++i) d[i] += g[i] / pb2[i];
    }
    if (b->requires_grad) {
      const bool f = fresh_grad(b);
      double* d = b->grad.data();
      if (f) {
        for (int64_t i = 0; i < n.grad.size(); ++i)
          d[i] = -g[i] * pa2[i] / (pb2[i] * pb2[i]);
      } else {
        for (int64_t i = 0; i < n.grad.size(); ++i)
          d[i] -= g[i] * pa2[i] / (pb2[i] * pb2[i]);
      }
    }
  });
}

NodePtr scale(const NodePtr& x, double k) { return affine(x, k, 0.0); }

NodePtr affine(const NodePtr& x, double k, double b) {
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = k * px[i] + b;
  return result(std::move(out), {x}, [x, k](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    const double* g = n.grad.data();
    if (f) for (int64_t i = 0; i < n.grad.size(); ++i) d[i] = k * g[i];
    else   for (int64_t i = 0; i < n.grad.size(); ++i) d[i] += k * g[i];
  });
}

NodePtr silu(const NodePtr& x) {
  using Arr = Eigen::Map<Eigen::ArrayXd>;
  using ConstArr = Eigen::Map<const Eigen::ArrayXd>;
  Tensor out = Tensor::uninit(x->value.shape());
  ConstArr ax(x->value.data(), x->value.size());
  Arr ao(out.data(), out.size());
  ao = ax / (1.0 + (-ax).exp());
  return result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    int64_t sz = n.grad.size();
    Arr d(x->grad.data(), sz);
    ConstArr g(n.grad.data(), sz);
    ConstArr ax2(x->value.data(), sz);
    Eigen::ArrayXd s = 1.0 / (1.0 + (-ax2).exp());
    if (f) d = g * s * (1.0 + ax2 * (1.0 - s));
    else   d += g * s * (1.0 + ax2 * (1.0 - s));
  });
}

NodePtr softplus(const NodePtr& x) {
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) {
    po[i] = std::max(px[i], 0.0) + std::log1p(std::exp(-std::abs(px[i])));
  }
  return result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    const double* g = n.grad.data();
    const double* px2 = x->value.data();
    if (f) {
      for (int64_t i = 0; i < n.grad.size(); ++i) d[i] = g[i] / (1.0 + std::exp(-px2[i]));
    } else {
      for (int64_t i = 0; i < n.grad.size(); ++i) d[i] += g[i] / (1.0 + std::exp(-px2[i]));
    }
  });
}

NodePtr sqrt_elem(const NodePtr& x) {
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = std::sqrt(px[i]);
  return result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    const double* g = n.grad.data();
    const double* py = n.value.data();
    if (f) for (int64_t i = 0; i < n.grad.size(); ++i) d[i] = g[i] * 0.5 / py[i];
    else   for (int64_t i = 0; i < n.grad.size(); ++i) d[i] += g[i] * 0.5 / py[i];
  });
}

// ----------------------------------------------------------------- broadcast

NodePtr add_channels(const NodePtr& x, const NodePtr& b) {
  int c = x->value.cols();
  if (b->value.size() != c) throw ConfigError("add_channels: channel mismatch");
  int64_t rows = x->value.rows();
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int j = 0; j < c; ++j) po[r * c + j] = px[r * c + j] + pb[j];
  }
  return result(std::move(out), {x, b}, [x, b, rows, c](Node& n) {
    const double* g = n.grad.data();
    if (x->requires_grad) x->accumulate(n.grad);
    if (b->requires_grad) {
      double* d = b->ensure_grad().data();
      for (int64_t r = 0; r < rows; ++r) {
        for (int j = 0; j < c; ++j) d[j] += g[r * c + j];
      }
    }
  });
}

NodePtr mul_channels(const NodePtr& x, const NodePtr& v) {
  int c = x->value.cols();
  if (v->value.size() != c) throw ConfigError("mul_channels: channel mismatch");
  int64_t rows = x->value.rows();
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  const double* pv = v->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int j = 0; j < c; ++j) po[r * c + j] = px[r * c + j] * pv[j];
  }
  return result(std::move(out), {x, v}, [x, v, rows, c](Node& n) {
    const double* g = n.grad.data();
    if (x->requires_grad) {
      const bool f = fresh_grad(x);
      double* d = x->grad.data();
      const double* pv2 = v->value.data();
      for (int64_t r = 0; r < rows; ++r) {
        if (f) for (int j = 0; j < c; ++j) d[r * c + j] = g[r * c + j] * pv2[j];
        else   for (int j = 0; j < c; ++j) d[r * c + j] += g[r * c + j] * pv2[j];
      }
    }
    if (v->requires_grad) {
      double* d = v->ensure_grad().data();
      const double* px2 = x->value.data();
      for (int64_t r = 0; r < rows; ++r) {
        for (int j = 0; j < c; ++j) d[j] += g[r * c + j] * px2[r * c + j];
      }
    }
  });
}

NodePtr mul_gate(const NodePtr& x, const NodePtr& g) {
  if (x->value.ndim() != 3 || g->value.ndim() != 2 ||
      x->value.dim(0) != g->value.dim(0) || x->value.dim(2) != g->value.dim(1)) {
    throw ConfigError("mul_gate: expected x [B,T,C], g [B,C]");
  }
  int bsz = x->value.dim(0), t = x->value.dim(1), c = x->value.dim(2);
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  const double* pg = g->value.data();
  double* po = out.data();
  for (int b = 0; b < bsz; ++b) {
    const double* gb = pg + static_cast<int64_t>(b) * c;
    for (int i = 0; i < t; ++i) {
      const double* xi = px + (static_cast<int64_t>(b) * t + i) * c;
      double* oi = po + (static_cast<int64_t>(b) * t + i) * c;
      for (int j = 0; j < c; ++j) oi[j] = xi[j] * gb[j];
    }
  }
  return result(std::move(out), {x, g}, [x, g, bsz, t, c](Node& n) {
    const double* gr = n.grad.data();
    if (x->requires_grad) {
      const bool f = fresh_grad(x);
      double* d = x->grad.data();
      const double* pg2 = g->value.data();
      for (int b = 0; b < bsz; ++b) {
        const double* gb = pg2 + static_cast<int64_t>(b) * c;
        for (int i = 0; i < t; ++i) {
          int64_t off = (static_cast<int64_t>(b) * t + i) * c;
          if (f) for (int j = 0; j < c; ++j) d[off + j] = gr[off + j] * gb[j];
          else   for (int j = 0; j < c; ++j) d[off + j] += gr[off + j] * gb[j];
        }
      }
    }
    if (g->requires_grad) {
      double* d = g->ensure_grad().data();
      const double* px2 = x->value.data();
      for (int b = 0; b < bsz; ++b) {
        double* db = d + static_cast<int64_t>(b) * c;
        for (int i = 0; i < t; ++i) {
          int64_t off = (static_cast<int64_t>(b) * t + i) * c;
          for (int j = 0; j < c; ++j) db[j] += gr[off + j] * px2[off + j];
        }
      }
    }
  });
}

// ------------------------------------------------------------- linear algebra

NodePtr matmul(const NodePtr& x, const NodePtr& w) {
  if (w->value.ndim() != 2) throw ConfigError("matmul: weight must be 2-d");
  int k = w->value.dim(0), nout = w->value.dim(1);
  if (x->value.cols() != k) {
    throw ConfigError("matmul: inner dim mismatch " + shape_str(x->value.shape()) +
                      " x " + shape_str(w->value.shape()));
  }
  int64_t rows = x->value.rows();
  std::vector<int> out_shape = x->value.shape();
  out_shape.back() = nout;
  Tensor out = Tensor::uninit(out_shape);
  as_mat(out, rows, nout).noalias() = as_mat(x->value, rows, k) * as_mat(w->value, k, nout);
  return result(std::move(out), {x, w}, [x, w, rows, k, nout](Node& n) {
    ConstMatMap g(n.grad.data(), rows, nout);
    if (x->requires_grad) {
      const bool f = fresh_grad(x);
      MatMap dx(x->grad.data(), rows, k);
      if (f) dx.noalias() = g * as_mat(w->value, k, nout).transpose();
      else   dx.noalias() += g * as_mat(w->value, k, nout).transpose();
    }
    if (w->requires_grad) {
      const bool f = fresh_grad(w);
      MatMap dw(w->grad.data(), k, nout);
      if (f) dw.noalias() = as_mat(x->value, rows, k).transpose() * g;
      else   dw.noalias() += as_mat(x->value, rows, k).transpose() * g;
    }
  });
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  if (w->value.ndim() != 2) throw ConfigError("linear: weight must be 2-d");
  int k = w->value.dim(0), nout = w->value.dim(1);
  if (x->value.cols() != k) {
    throw ConfigError("linear: inner dim mismatch " + shape_str(x->value.shape()) +
                      " x " + shape_str(w->value.shape()));
  }
  if (b->value.size() != nout) throw ConfigError("linear: bias size mismatch");
  int64_t rows = x->value.rows();
  std::vector<int> out_shape = x->value.shape();
  out_shape.back() = nout;
  Tensor out = Tensor::uninit(out_shape);
  MatMap mo = as_mat(out, rows, nout);
  mo.noalias() = as_mat(x->value, rows, k) * as_mat(w->value, k, nout);
  mo.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->value.data(), nout);
  return result(std::move(out), {x, w, b}, [x, w, b, rows, k, nout](Node& n) {
    ConstMatMap g(n.grad.data(), rows, nout);
    if (x->requires_grad) {
      const bool f = fresh_grad(x);
      MatMap dx(x->grad.data(), rows, k);
      if (f) dx.noalias() = g * as_mat(w->value, k, nout).transpose();
      else   dx.noalias() += g * as_mat(w->value, k, nout).transpose();
    }
    if (w->requires_grad) {
      const bool f = fresh_grad(w);
      MatMap dw(w->grad.data(), k, nout);
      if (f) dw.noalias() = as_mat(x->value, rows, k).transpose() * g;
      else   dw.noalias() += as_mat(x->value, rows, k).transpose() * g;
    }
    if (b->requires_grad) {
      const bool f = fresh_grad(b);
      Eigen::Map<Eigen::RowVectorXd> db(b->grad.data(), nout);
      if (f) db.noalias() = g.colwise().sum();
      else   db.noalias() += g.colwise().sum();
    }
  });
}

NodePtr bmm(const NodePtr& a, const NodePtr& b, bool trans_a, bool trans_b) {
  if (a->value.ndim() != 3 || b->value.ndim() != 3 || a->value.dim(0) != b->value.dim(0)) {
    throw ConfigError("bmm: expected [G,*,*] operands with equal G");
  }
  int groups = a->value.dim(0);
  int m = trans_a ? a->value.dim(2) : a->value.dim(1);
  int ka = trans_a ? a->value.dim(1) : a->value.dim(2);
  int kb = trans_b ? b->value.dim(2) : b->value.dim(1);
  int nn = trans_b ? b->value.dim(1) : b->value.dim(2);
  if (ka != kb) throw ConfigError("bmm: inner dim mismatch");
  Tensor out = Tensor::uninit({groups, m, nn});
  int64_t sa = static_cast<int64_t>(a->value.dim(1)) * a->value.dim(2);
  int64_t sb = static_cast<int64_t>(b->value.dim(1)) * b->value.dim(2);
  int64_t so = static_cast<int64_t>(m) * nn;
  const bool small = static_cast<int64_t>(m) * nn * ka < (1 << 15);
  for (int gidx = 0; gidx < groups; ++gidx) {
    ConstMatMap ma(a->value.data() + gidx * sa, a->value.dim(1), a->value.dim(2));
    ConstMatMap mb(b->value.data() + gidx * sb, b->value.dim(1), b->value.dim(2));
    MatMap mo(out.data() + gidx * so, m, nn);
    if (!trans_a && !trans_b) product_into(mo, ma, mb, false, small);
    else if (!trans_a && trans_b) product_into(mo, ma, mb.transpose(), false, small);
    else if (trans_a && !trans_b) product_into(mo, ma.transpose(), mb, false, small);
    else product_into(mo, ma.transpose(), mb.transpose(), false, small);
  }
  return result(std::move(out), {a, b},
                [a, b, trans_a, trans_b, groups, m, nn, sa, sb, so, small](Node& n) {
    // Group slices are disjoint, so a fresh grad is assigned group by group.
    bool add_a = true, add_b = true;
    if (a->requires_grad) add_a = !fresh_grad(a);
    if (b->requires_grad) add_b = !fresh_grad(b);
    for (int gidx = 0; gidx < groups; ++gidx) {
      ConstMatMap g(n.grad.data() + gidx * so, m, nn);
      ConstMatMap ma(a->value.data() + gidx * sa, a->value.dim(1), a->value.dim(2));
      ConstMatMap mb(b->value.data() + gidx * sb, b->value.dim(1), b->value.dim(2));
      if (a->requires_grad) {
        MatMap da(a->grad.data() + gidx * sa, a->value.dim(1), a->value.dim(2));
        if (!trans_a && !trans_b) product_into(da, g, mb.transpose(), add_a, small);
        else if (!trans_a && trans_b) product_into(da, g, mb, add_a, small);
        else if (trans_a && !trans_b) product_into(da, mb, g.transpose(), add_a, small);
        else product_into(da, mb.transpose(), g.transpose(), add_a, small);
      }
      if (b->requires_grad) {
        MatMap db(b->grad.data() + gidx * sb, b->value.dim(1), b->value.dim(2));
        if (!trans_a && !trans_b) product_into(db, ma.transpose(), g, add_b, small);
        else if (!trans_a && trans_b) product_into(db, g.transpose(), ma, add_b, small);
        else if (trans_a && !trans_b) product_into(db, ma, g, add_b, small);
        else product_into(db, g.transpose(), ma.transpose(), add_b, small);
      }
    }
  });
}

// ----------------------------------------------------------------------- shape

NodePtr reshape(const NodePtr& x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(shape);
  std::vector<int> in_shape = x->value.shape();
  return result(std::move(out), {x}, [x, in_shape](Node& n) {
    if (x->requires_grad) x->accumulate(n.grad.reshaped(in_shape));
  });
}

NodePtr transpose_12(const NodePtr& x) {
  if (x->value.ndim() != 4) throw ConfigError("transpose_12: expected 4-d input");
  int a = x->value.dim(0), b = x->value.dim(1), c = x->value.dim(2), d = x->value.dim(3);
  Tensor out = Tensor::uninit({a, c, b, d});
  const double* px = x->value.data();
  double* po = out.data();
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      for (int k = 0; k < c; ++k) {
        const double* src = px + ((static_cast<int64_t>(i) * b + j) * c + k) * d;
        double* dst = po + ((static_cast<int64_t>(i) * c + k) * b + j) * d;
        for (int l = 0; l < d; ++l) dst[l] = src[l];
      }
    }
  }
  return result(std::move(out), {x}, [x, a, b, c, d](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    double* dx = x->grad.data();
    const double* g = n.grad.data();
    for (int i = 0; i < a; ++i) {
      for (int j = 0; j < b; ++j) {
        for (int k = 0; k < c; ++k) {
          double* dst = dx + ((static_cast<int64_t>(i) * b + j) * c + k) * d;
          const double* src = g + ((static_cast<int64_t>(i) * c + k) * b + j) * d;
          if (f) for (int l = 0; l < d; ++l) dst[l] = src[l];
          else   for (int l = 0; l < d; ++l) dst[l] += src[l];
        }
      }
    }
  });
}

NodePtr head_split(const NodePtr& x, int section, int sections, int heads) {
  if (x->value.ndim() != 3) throw ConfigError("head_split: expected [B,T,S*H*hd]");
  int b = x->value.dim(0), t = x->value.dim(1), cols = x->value.dim(2);
  if (sections <= 0 || heads <= 0 || section < 0 || section >= sections ||
      cols % (sections * heads) != 0) {
    throw ConfigError("head_split: bad section layout");
  }
  int hd = cols / (sections * heads);
  Tensor out = Tensor::uninit({b, heads, t, hd});
  const double* px = x->value.data();
  double* po = out.data();
  for (int bi = 0; bi < b; ++bi) {
    for (int h = 0; h < heads; ++h) {
      int off = (section * heads + h) * hd;
      for (int ti = 0; ti < t; ++ti) {
        const double* src = px + (static_cast<int64_t>(bi) * t + ti) * cols + off;
        double* dst = po + ((static_cast<int64_t>(bi) * heads + h) * t + ti) * hd;
        for (int j = 0; j < hd; ++j) dst[j] = src[j];
      }
    }
  }
  return result(std::move(out), {x}, [x, section, heads, b, t, cols, hd](Node& n) {
    if (!x->requires_grad) return;
    // Each section covers only its slice of the columns, so scatter-add.
    double* d = x->ensure_grad().data();
    const double* g = n.grad.data();
    for (int bi = 0; bi < b; ++bi) {
      for (int h = 0; h < heads; ++h) {
        int off = (section * heads + h) * hd;
        for (int ti = 0; ti < t; ++ti) {
          double* dst = d + (static_cast<int64_t>(bi) * t + ti) * cols + off;
          const double* src = g + ((static_cast<int64_t>(bi) * heads + h) * t + ti) * hd;
          for (int j = 0; j < hd; ++j) dst[j] += src[j];
        }
      }
    }
  });
}

NodePtr head_merge(const NodePtr& x) {
  if (x->value.ndim() != 4) throw ConfigError("head_merge: expected [B,H,T,hd]");
  int b = x->value.dim(0), heads = x->value.dim(1), t = x->value.dim(2), hd = x->value.dim(3);
  int cols = heads * hd;
  Tensor out = Tensor::uninit({b, t, cols});
  const double* px = x->value.data();
  double* po = out.data();
  for (int bi = 0; bi < b; ++bi) {
    for (int h = 0; h < heads; ++h) {
      for (int ti = 0; ti < t; ++ti) {
        const double* src = px + ((static_cast<int64_t>(bi) * heads + h) * t + ti) * hd;
        double* dst = po + (static_cast<int64_t>(bi) * t + ti) * cols + h * hd;
        for (int j = 0; j < hd; ++j) dst[j] = src[j];
      }
    }
  }
  return result(std::move(out), {x}, [x, b, heads, t, hd, cols](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    const double* g = n.grad.data();
    for (int bi = 0; bi < b; ++bi) {
      for (int h = 0; h < heads; ++h) {
        for (int ti = 0; ti < t; ++ti) {
          double* dst = d + ((static_cast<int64_t>(bi) * heads + h) * t + ti) * hd;
          const double* src = g + (static_cast<int64_t>(bi) * t + ti) * cols + h * hd;
          if (f) for (int j = 0; j < hd; ++j) dst[j] = src[j];
          else   for (int j = 0; j < hd; ++j) dst[j] += src[j];
        }
      }
    }
  });
}

NodePtr slice_last(const NodePtr& x, int start, int len) {
  int c = x->value.cols();
  if (start < 0 || len <= 0 || start + len > c) throw ConfigError("slice_last: bad range");
  int64_t rows = x->value.rows();
  std::vector<int> out_shape = x->value.shape();
  out_shape.back() = len;
  Tensor out = Tensor::uninit(out_shape);
  const double* px = x->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = px + r * c + start;
    double* dst = po + r * len;
    for (int j = 0; j < len; ++j) dst[j] = src[j];
  }
  return result(std::move(out), {x}, [x, start, len, rows, c](Node& n) {
    if (!x->requires_grad) return;
    double* d = x->ensure_grad().data();
    const double* g = n.grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      double* dst = d + r * c + start;
      const double* src = g + r * len;
      for (int j = 0; j < len; ++j) dst[j] += src[j];
    }
  });
}

NodePtr slice_dim1(const NodePtr& x, int start, int len) {
  if (x->value.ndim() < 2) throw ConfigError("slice_dim1: expected >= 2-d input");
  int b = x->value.dim(0), t = x->value.dim(1);
  if (start < 0 || len <= 0 || start + len > t) throw ConfigError("slice_dim1: bad range");
  int64_t inner = x->value.size() / (static_cast<int64_t>(b) * t);
  std::vector<int> out_shape = x->value.shape();
  out_shape[1] = len;
  Tensor out = Tensor::uninit(out_shape);
  const double* px = x->value.data();
  double* po = out.data();
  for (int i = 0; i < b; ++i) {
    const double* src = px + (static_cast<int64_t>(i) * t + start) * inner;
    double* dst = po + static_cast<int64_t>(i) * len * inner;
    for (int64_t j = 0; j < len * inner; ++j) dst[j] = src[j];
  }
  return result(std::move(out), {x}, [x, start, len, b, t, inner](Node& n) {
    if (!x->requires_grad) return;
    double* d = x->ensure_grad().data();
    const double* g = n.grad.data();
    for (int i = 0; i < b; ++i) {
      double* dst = d + (static_cast<int64_t>(i) * t + start) * inner;
      const double* src = g + static_cast<int64_t>(i) * len * inner;
      for (int64_t j = 0; j < len * inner; ++j) dst[j] += src[j];
    }
  });
}

NodePtr concat_last(const NodePtr& a, const NodePtr& b) {
  if (a->value.ndim() != b->value.ndim()) throw ConfigError("concat_last: rank mismatch");
  int ca = a->value.cols(), cb = b->value.cols();
  int64_t rows = a->value.rows();
  if (rows != b->value.rows()) throw ConfigError("concat_last: row mismatch");
  std::vector<int> out_shape = a->value.shape();
  out_shape.back() = ca + cb;
  Tensor out = Tensor::uninit(out_shape);
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int j = 0; j < ca; ++j) po[r * (ca + cb) + j] = pa[r * ca + j];
    for (int j = 0; j < cb; ++j) po[r * (ca + cb) + ca + j] = pb[r * cb + j];
  }
  return result(std::move(out), {a, b}, [a, b, rows, ca, cb](Node& n) {
    const double* g = n.grad.data();
    if (a->requires_grad) {
      const bool f = fresh_grad(a);
      double* d = a->grad.data();
      for (int64_t r = 0; r < rows; ++r) {
        if (f) for (int j = 0; j < ca; ++j) d[r * ca + j] = g[r * (ca + cb) + j];
        else   for (int j = 0; j < ca; ++j) d[r * ca + j] += g[r * (ca + cb) + j];
      }
    }
    if (b->requires_grad) {
      const bool f = fresh_grad(b);
      double* d = b->grad.data();
      for (int64_t r = 0; r < rows; ++r) {
        if (f) for (int j = 0; j < cb; ++j) d[r * cb + j] = g[r * (ca + cb) + ca + j];
        else   for (int j = 0; j < cb; ++j) d[r * cb + j] += g[r * (ca + cb) + ca + j];
      }
    }
  });
}

NodePtr concat_dim1(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw ConfigError("concat_dim1: empty input");
  int b = xs[0]->value.dim(0);
  int64_t inner = xs[0]->value.size() / (static_cast<int64_t>(b) * xs[0]->value.dim(1));
  int total = 0;
  for (const auto& x : xs) {
    if (x->value.dim(0) != b) throw ConfigError("concat_dim1: batch mismatch");
    if (x->value.size() / (static_cast<int64_t>(b) * x->value.dim(1)) != inner) {
      throw ConfigError("concat_dim1: inner shape mismatch");
    }
    total += x->value.dim(1);
  }
  std::vector<int> out_shape = xs[0]->value.shape();
  out_shape[1] = total;
  Tensor out = Tensor::uninit(out_shape);
  double* po = out.data();
  std::vector<int> offsets(xs.size());
  int off = 0;
  for (size_t idx = 0; idx < xs.size(); ++idx) {
    offsets[idx] = off;
    int ti = xs[idx]->value.dim(1);
    const double* px = xs[idx]->value.data();
    for (int i = 0; i < b; ++i) {
      double* dst = po + (static_cast<int64_t>(i) * total + off) * inner;
      const double* src = px + static_cast<int64_t>(i) * ti * inner;
      for (int64_t j = 0; j < static_cast<int64_t>(ti) * inner; ++j) dst[j] = src[j];
    }
    off += ti;
  }
  std::vector<NodePtr> parents = xs;
  return result(std::move(out), parents, [xs, offsets, b, total, inner](Node& n) {
    const double* g = n.grad.data();
    for (size_t idx = 0; idx < xs.size(); ++idx) {
      if (!xs[idx]->requires_grad) continue;
      const bool f = fresh_grad(xs[idx]);
      int ti = xs[idx]->value.dim(1);
      double* d = xs[idx]->grad.data();
      for (int i = 0; i < b; ++i) {
        const double* src = g + (static_cast<int64_t>(i) * total + offsets[idx]) * inner;
        double* dst = d + static_cast<int64_t>(i) * ti * inner;
        if (f) for (int64_t j = 0; j < static_cast<int64_t>(ti) * inner; ++j) dst[j] = src[j];
        else   for (int64_t j = 0; j < static_cast<int64_t>(ti) * inner; ++j) dst[j] += src[j];
      }
    }
  });
}

NodePtr repeat_rows(const NodePtr& v, int n) {
  int c = static_cast<int>(v->value.size());
  Tensor out = Tensor::uninit({n, c});
  const double* pv = v->value.data();
  double* po = out.data();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) po[static_cast<int64_t>(i) * c + j] = pv[j];
  }
  return result(std::move(out), {v}, [v, n, c](Node& n_) {
    if (!v->requires_grad) return;
    double* d = v->ensure_grad().data();
    const double* g = n_.grad.data();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) d[j] += g[static_cast<int64_t>(i) * c + j];
    }
  });
}

// ------------------------------------------------------------------ reductions

NodePtr sum_all(const NodePtr& x) {
  double s = 0.0;
  const double* px = x->value.data();
  for (int64_t i = 0; i < x->value.size(); ++i) s += px[i];
  return result(Tensor::scalar(s), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    double g = n.grad[0];
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    if (f) for (int64_t i = 0; i < x->value.size(); ++i) d[i] = g;
    else   for (int64_t i = 0; i < x->value.size(); ++i) d[i] += g;
  });
}

NodePtr mean_all(const NodePtr& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x->value.size()));
}

NodePtr row_dot(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "row_dot");
  int c = a->value.cols();
  int64_t rows = a->value.rows();
  std::vector<int> out_shape = a->value.shape();
  out_shape.pop_back();
  if (out_shape.empty()) out_shape = {1};
  Tensor out = Tensor::uninit(out_shape);
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += pa[r * c + j] * pb[r * c + j];
    po[r] = s;
  }
  return result(std::move(out), {a, b}, [a, b, rows, c](Node& n) {
    const double* g = n.grad.data();
    if (a->requires_grad) {
      const bool f = fresh_grad(a);
      double* d = a->grad.data();
      const double* pb2 = b->value.data();
      for (int64_t r = 0; r < rows; ++r) {
        if (f) for (int j = 0; j < c; ++j) d[r * c + j] = g[r] * pb2[r * c + j];
        else   for (int j = 0; j < c; ++j) d[r * c + j] += g[r] * pb2[r * c + j];
      }
    }
    if (b->requires_grad) {
      const bool f = fresh_grad(b);
      double* d = b->grad.data();
      const double* pa2 = a->value.data();
      for (int64_t r = 0; r < rows; ++r) {
        if (f) for (int j = 0; j < c; ++j) d[r * c + j] = g[r] * pa2[r * c + j];
        else   for (int j = 0; j < c; ++j) d[r * c + j] += g[r] * pa2[r * c + j];
      }
    }
  });
}

// -------------------------------------------------------- softmax / rms norm

NodePtr softmax_last(const NodePtr& x) {
  int c = x->value.cols();
  int64_t rows = x->value.rows();
  Tensor out = Tensor::uninit(x->value.shape());
  ConstMatMap X(x->value.data(), rows, c);
  MatMap O(out.data(), rows, c);
  Eigen::VectorXd m = X.rowwise().maxCoeff();
  O.array() = (X.colwise() - m).array().exp();
  Eigen::VectorXd s = O.rowwise().sum();
  O.array().colwise() /= s.array();
  return result(std::move(out), {x}, [x, rows, c](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    MatMap D(x->grad.data(), rows, c);
    ConstMatMap G(n.grad.data(), rows, c);
    ConstMatMap Y(n.value.data(), rows, c);
    Eigen::VectorXd dot = (G.array() * Y.array()).rowwise().sum();
    if (f) D.array() = Y.array() * (G.colwise() - dot).array();
    else   D.array() += Y.array() * (G.colwise() - dot).array();
  });
}

NodePtr rms_norm_last(const NodePtr& x, double eps) {
  int c = x->value.cols();
  int64_t rows = x->value.rows();
  Tensor out = Tensor::uninit(x->value.shape());
  ConstMatMap X(x->value.data(), rows, c);
  MatMap O(out.data(), rows, c);
  Eigen::ArrayXd inv =
      ((X.array().square().rowwise().sum() / static_cast<double>(c)) + eps).sqrt().inverse();
  O.array() = X.array().colwise() * inv;
  return result(std::move(out), {x}, [x, rows, c, eps](Node& n) {
    if (!x->requires_grad) return;
    const bool f = fresh_grad(x);
    MatMap D(x->grad.data(), rows, c);
    ConstMatMap G(n.grad.data(), rows, c);
    ConstMatMap X2(x->value.data(), rows, c);
    Eigen::ArrayXd inv =
        ((X2.array().square().rowwise().sum() / static_cast<double>(c)) + eps).sqrt().inverse();
    Eigen::ArrayXd k =
        inv.cube() * (G.array() * X2.array()).rowwise().sum() / static_cast<double>(c);
    if (f) D.array() = G.array().colwise() * inv - X2.array().colwise() * k;
    else   D.array() += G.array().colwise() * inv - X2.array().colwise() * k;
  });
}

// ------------------------------------------------------------------------ rope

NodePtr rope(const NodePtr& x, const Tensor& cos_tab, const Tensor& sin_tab) {
  if (x->value.ndim() != 4) throw ConfigError("rope: expected [B,H,T,D] input");
  int b = x->value.dim(0), h = x->value.dim(1), t = x->value.dim(2), d = x->value.dim(3);
  if (d % 2 != 0) throw ConfigError("rope: head dim must be even");
  int pairs = d / 2;
  if (cos_tab.dim(0) != t || cos_tab.dim(1) != pairs) {
    throw ConfigError("rope: table shape mismatch");
  }
  Tensor out = Tensor::uninit(x->value.shape());
  const double* px = x->value.data();
  const double* pc = cos_tab.data();
  const double* ps = sin_tab.data();
  double* po = out.data();
  for (int i = 0; i < b * h; ++i) {
    for (int ti = 0; ti < t; ++ti) {
      const double* xi = px + (static_cast<int64_t>(i) * t + ti) * d;
      double* oi = po + (static_cast<int64_t>(i) * t + ti) * d;
      const double* ct = pc + static_cast<int64_t>(ti) * pairs;
      const double* st = ps + static_cast<int64_t>(ti) * pairs;
      for (int j = 0; j < pairs; ++j) {
        double a = xi[2 * j], bb = xi[2 * j + 1];
        oi[2 * j] = a * ct[j] - bb * st[j];
        oi[2 * j + 1] = a * st[j] + bb * ct[j];
      }
    }
  }
  return result(std::move(out), {x}, [x, cos_tab, sin_tab, b, h, t, d](Node& n) {
    if (!x->requires_grad) return;
    int pairs = d / 2;
    const bool f = fresh_grad(x);
    double* dx = x->grad.data();
    const double* g = n.grad.data();
    const double* pc = cos_tab.data();
    const double* ps = sin_tab.data();
    for (int i = 0; i < b * h; ++i) {
      for (int ti = 0; ti < t; ++ti) {
        double* di = dx + (static_cast<int64_t>(i) * t + ti) * d;
        const double* gi = g + (static_cast<int64_t>(i) * t + ti) * d;
        const double* ct = pc + static_cast<int64_t>(ti) * pairs;
        const double* st = ps + static_cast<int64_t>(ti) * pairs;
        if (f) {
          for (int j = 0; j < pairs; ++j) {
            double ga = gi[2 * j], gb = gi[2 * j + 1];
            di[2 * j] = ga * ct[j] + gb * st[j];
            di[2 * j + 1] = -ga * st[j] + gb * ct[j];
          }
        } else {
          for (int j = 0; j < pairs; ++j) {
            double ga = gi[2 * j], gb = gi[2 * j + 1];
            di[2 * j] += ga * ct[j] + gb * st[j];
            di[2 * j + 1] += -ga * st[j] + gb * ct[j];
          }
        }
      }
    }
  });
}

// ------------------------------------------------------------ patch <-> image

NodePtr patches_from_image(const NodePtr& x, int p) {
  if (x->value.ndim() != 4) throw ConfigError("patches_from_image: expected [B,C,H,W]");
  int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h % p != 0 || w % p != 0) throw ConfigError("patches_from_image: patch does not divide image");
  int gh = h / p, gw = w / p, n_tok = gh * gw, pd = c * p * p;
  Tensor out = Tensor::uninit({b, n_tok, pd});
  const double* px = x->value.data();
  double* po = out.data();
  for (int bi = 0; bi < b; ++bi) {
    for (int gy = 0; gy < gh; ++gy) {
      for (int gx = 0; gx < gw; ++gx) {
        double* dst = po + ((static_cast<int64_t>(bi) * n_tok) + gy * gw + gx) * pd;
        for (int ci = 0; ci < c; ++ci) {
          for (int py = 0; py < p; ++py) {
            const double* src = px + ((static_cast<int64_t>(bi) * c + ci) * h + gy * p + py) * w + gx * p;
            for (int pxi = 0; pxi < p; ++pxi) {
              dst[(ci * p + py) * p + pxi] = src[pxi];
            }
          }
        }
      }
    }
  }
  return result(std::move(out), {x}, [x, p, b, c, h, w](Node& n) {
    if (!x->requires_grad) return;
    int gh = h / p, gw = w / p, n_tok = gh * gw, pd = c * p * p;
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    const double* g = n.grad.data();
    for (int bi = 0; bi < b; ++bi) {
      for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
          const double* src = g + ((static_cast<int64_t>(bi) * n_tok) + gy * gw + gx) * pd;
          for (int ci = 0; ci < c; ++ci) {
            for (int py = 0; py < p; ++py) {
              double* dst = d + ((static_cast<int64_t>(bi) * c + ci) * h + gy * p + py) * w + gx * p;
              if (f) for (int pxi = 0; pxi < p; ++pxi) dst[pxi] = src[(ci * p + py) * p + pxi];
              else   for (int pxi = 0; pxi < p; ++pxi) dst[pxi] += src[(ci * p + py) * p + pxi];
            }
          }
        }
      }
    }
  });
}

NodePtr image_from_patches(const NodePtr& x, int p, int c, int h, int w) {
  if (x->value.ndim() != 3) throw ConfigError("image_from_patches: expected [B,N,D]");
  int b = x->value.dim(0);
  int gh = h / p, gw = w / p, n_tok = gh * gw, pd = c * p * p;
  if (x->value.dim(1) != n_tok || x->value.dim(2) != pd) {
    throw ConfigError("image_from_patches: token shape mismatch");
  }
  Tensor out = Tensor::uninit({b, c, h, w});
  const double* px = x->value.data();
  double* po = out.data();
  for (int bi = 0; bi < b; ++bi) {
    for (int gy = 0; gy < gh; ++gy) {
      for (int gx = 0; gx < gw; ++gx) {
        const double* src = px + ((static_cast<int64_t>(bi) * n_tok) + gy * gw + gx) * pd;
        for (int ci = 0; ci < c; ++ci) {
          for (int py = 0; py < p; ++py) {
            double* dst = po + ((static_cast<int64_t>(bi) * c + ci) * h + gy * p + py) * w + gx * p;
            for (int pxi = 0; pxi < p; ++pxi) dst[pxi] = src[(ci * p + py) * p + pxi];
          }
        }
      }
    }
  }
  return result(std::move(out), {x}, [x, p, c, h, w, b](Node& n) {
    if (!x->requires_grad) return;
    int gh = h / p, gw = w / p, n_tok = gh * gw, pd = c * p * p;
    const bool f = fresh_grad(x);
    double* d = x->grad.data();
    const double* g = n.grad.data();
    for (int bi = 0; bi < b; ++bi) {
      for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
          double* dst = d + ((static_cast<int64_t>(bi) * n_tok) + gy * gw + gx) * pd;
          for (int ci = 0; ci < c; ++ci) {
            for (int py = 0; py < p; ++py) {
              const double* src = g + ((static_cast<int64_t>(bi) * c + ci) * h + gy * p + py) * w + gx * p;
              if (f) for (int pxi = 0; pxi < p; ++pxi) dst[(ci * p + py) * p + pxi] = src[pxi];
              else   for (int pxi = 0; pxi < p; ++pxi) dst[(ci * p + py) * p + pxi] += src[pxi];
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------- lookup

NodePtr embed_rows(const NodePtr& table, const std::vector<int>& ids) {
  if (table->value.ndim() != 2) throw ConfigError("embed_rows: table must be 2-d");
  int v = table->value.dim(0), e = table->value.dim(1);
  int b = static_cast<int>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= v) throw ConfigError("embed_rows: id out of range");
  }
  Tensor out = Tensor::uninit({b, e});
  const double* pt = table->value.data();
  double* po = out.data();
  for (int i = 0; i < b; ++i) {
    const double* src = pt + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * e;
    double* dst = po + static_cast<int64_t>(i) * e;
    for (int j = 0; j < e; ++j) dst[j] = src[j];
  }
  return result(std::move(out), {table}, [table, ids, e](Node& n) {
    if (!table->requires_grad) return;
    double* d = table->ensure_grad().data();
    const double* g = n.grad.data();
    for (size_t i = 0; i < ids.size(); ++i) {
      double* dst = d + static_cast<int64_t>(ids[i]) * e;
      const double* src = g + static_cast<int64_t>(i) * e;
      for (int j = 0; j < e; ++j) dst[j] += src[j];
    }
  });
}

// -------------------------------------------------------------------- backward

void backward(const NodePtr& root) {
  if (root->value.size() != 1) throw ConfigError("backward: root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order over the requires_grad subgraph.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<NodePtr, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodePtr next = node->parents[idx++];
      if (next->requires_grad && !visited.count(next.get())) {
        visited.insert(next.get());
        stack.emplace_back(std::move(next), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward) {
      if (!n.grad.defined()) n.ensure_grad();  // zero grad from unused branch
      n.backward(n);
    }
    if (!n.leaf) {
      // Children and this node's own hook have consumed these buffers.
      n.value.release();
      n.grad.release();
      n.backward = nullptr;
      n.parents.clear();
    }
  }
}

}  // namespace gat::ag
