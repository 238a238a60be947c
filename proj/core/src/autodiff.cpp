#include "ld/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ld/errors.hpp"
#include "ld/linalg.hpp"

namespace ld::ad {

Var::Var(Tensor value) : value_(std::make_shared<const Tensor>(std::move(value))) {}

Var Var::detached() const {
  Var v;
  v.value_ = value_;
  return v;
}

Var Tape::variable(Tensor value) {
  require_finite(value, "variable");
  return push("leaf", {}, std::move(value), nullptr);
}

Var Tape::push(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Var out(std::move(value));
  out.tape_ = this;
  out.node_ = nodes_.size();
  nodes_.push_back(Node{std::move(op), std::move(inputs), out, std::move(backward)});
  return out;
}

Var Tape::record(const char* op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  require_finite(value, op);
  Tape* tape = nullptr;
  for (const Var& in : inputs) {
    if (!in.tracked()) continue;
    if (tape && tape != in.tape()) throw TapeError(std::string(op) + ": inputs live on different tapes");
    tape = in.tape();
  }
  if (!tape) return Var(std::move(value));
  return tape->push(op, std::move(inputs), std::move(value), std::move(backward));
}

std::vector<Var> Tape::gradient(const Var& loss, std::span<const Var> wrt, bool create_graph) {
  if (!loss.defined() || !loss.tracked() || loss.tape() != this) {
    throw TapeError("gradient: loss was not produced on this tape");
  }
  if (loss.value().size() != 1) {
    throw TapeError("gradient: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  for (const Var& w : wrt) {
    if (!w.defined() || !w.tracked() || w.tape() != this) {
      throw TapeError("gradient: requested adjoint of a tensor that is not tracked on this tape");
    }
  }

  const std::size_t top = loss.node();
  std::vector<Var> adjoint(top + 1);
  adjoint[top] = Var(Tensor(loss.shape(), 1.0));
  last_order_.clear();

  for (std::size_t i = top + 1; i-- > 0;) {
    if (!adjoint[i].defined()) continue;
    Node& node = nodes_[i];
    if (!node.backward) continue;
    last_order_.push_back(i);

    std::vector<bool> needs(node.inputs.size());
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      needs[k] = node.inputs[k].tracked() && node.inputs[k].tape() == this;
    }
    std::vector<Var> inputs;
    Var output;
    if (create_graph) {
      inputs = node.inputs;
      output = node.output;
    } else {
      inputs.reserve(node.inputs.size());
      for (const Var& in : node.inputs) inputs.push_back(in.detached());
      output = node.output.detached();
    }
    // copy: the rule may append nodes, and `node` must not be reused after
    const std::vector<Var> input_refs = node.inputs;
    const BackwardFn fn = node.backward;
    std::vector<Var> grads = fn(inputs, output, adjoint[i], needs);

    for (std::size_t k = 0; k < input_refs.size(); ++k) {
      if (!needs[k] || k >= grads.size() || !grads[k].defined()) continue;
      const std::size_t j = input_refs[k].node();
      if (grads[k].shape() != input_refs[k].shape()) {
        throw TapeError("gradient: adjoint shape " + shape_string(grads[k].shape()) + " does not match input " +
                        shape_string(input_refs[k].shape()) + " of " + nodes_[i].op);
      }
      adjoint[j] = adjoint[j].defined() ? add(adjoint[j], grads[k]) : grads[k];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const std::size_t j = w.node();
    if (j <= top && adjoint[j].defined()) {
      out.push_back(create_graph ? adjoint[j] : adjoint[j].detached());
    } else {
      out.emplace_back(Tensor(w.shape(), 0.0));
    }
  }
  return out;
}

std::vector<Tensor> grad(const Var& loss, std::span<const Var> wrt) {
  if (!loss.tracked()) throw TapeError("grad: loss was not produced on a tape");
  std::vector<Var> g = loss.tape()->gradient(loss, wrt, false);
  std::vector<Tensor> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v.value());
  return out;
}

Tensor grad(const Var& loss, const Var& wrt) {
  return grad(loss, std::span<const Var>(&wrt, 1)).front();
}

std::vector<Var> grad_graph(const Var& loss, std::span<const Var> wrt) {
  if (!loss.tracked()) throw TapeError("grad_graph: loss was not produced on a tape");
  return loss.tape()->gradient(loss, wrt, true);
}

// ---------------------------------------------------------------------------

namespace {

using Grads = std::vector<Var>;

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

void require_matrix(const Var& v, const char* op) { require_rank(v.value(), 2, op); }

void require_one(const Var& v, const char* op) {
  if (v.value().size() != 1) {
    throw DimensionError(std::string(op) + ": one-element tensor expected, got " + shape_string(v.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return Tape::record("matmul", {a, b}, linalg::matmul(a.value(), b.value()),
                      [](const Grads& in, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        if (needs[0]) out[0] = matmul_nt(g, in[1]);
                        if (needs[1]) out[1] = matmul_tn(in[0], g);
                        return out;
                      });
}

Var matmul_nt(const Var& a, const Var& b) {
  return Tape::record("matmul_nt", {a, b}, linalg::matmul_nt(a.value(), b.value()),
                      [](const Grads& in, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        if (needs[0]) out[0] = matmul(g, in[1]);
                        if (needs[1]) out[1] = matmul_tn(g, in[0]);
                        return out;
                      });
}

Var matmul_tn(const Var& a, const Var& b) {
  return Tape::record("matmul_tn", {a, b}, linalg::matmul_tn(a.value(), b.value()),
                      [](const Grads& in, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        if (needs[0]) out[0] = matmul_nt(in[1], g);
                        if (needs[1]) out[1] = matmul(in[0], g);
                        return out;
                      });
}

Var transpose(const Var& a) {
  return Tape::record("transpose", {a}, linalg::transpose(a.value()),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{transpose(g)};
                      });
}

Var add(const Var& a, const Var& b) {
  return Tape::record("add", {a, b}, map_binary(a.value(), b.value(), "add", std::plus<>()),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{g, g};
                      });
}

Var sub(const Var& a, const Var& b) {
  return Tape::record("sub", {a, b}, map_binary(a.value(), b.value(), "sub", std::minus<>()),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        out[0] = g;
                        if (needs[1]) out[1] = neg(g);
                        return out;
                      });
}

Var mul(const Var& a, const Var& b) {
  return Tape::record("mul", {a, b}, map_binary(a.value(), b.value(), "mul", std::multiplies<>()),
                      [](const Grads& in, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        if (needs[0]) out[0] = mul(g, in[1]);
                        if (needs[1]) out[1] = mul(g, in[0]);
                        return out;
                      });
}

Var neg(const Var& a) {
  return Tape::record("neg", {a}, map_unary(a.value(), [](double x) { return -x; }),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{neg(g)};
                      });
}

Var scale(const Var& a, double c) {
  return Tape::record("scale", {a}, map_unary(a.value(), [c](double x) { return c * x; }),
                      [c](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{scale(g, c)};
                      });
}

Var affine(const Var& a, double c, double shift) {
  return Tape::record("affine", {a}, map_unary(a.value(), [c, shift](double x) { return c * x + shift; }),
                      [c](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{scale(g, c)};
                      });
}

Var scale_by(const Var& a, const Var& s) {
  require_one(s, "scale_by");
  const double sv = s.value()[0];
  return Tape::record("scale_by", {a, s}, map_unary(a.value(), [sv](double x) { return sv * x; }),
                      [](const Grads& in, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        if (needs[0]) out[0] = scale_by(g, in[1]);
                        if (needs[1]) out[1] = reshape(dot(g, in[0]), in[1].shape());
                        return out;
                      });
}

Var add_row(const Var& a, const Var& row) {
  require_matrix(a, "add_row");
  require_matrix(row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: row " + shape_string(rv.shape()) + " does not fit " + shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += rv[j];
  return Tape::record("add_row", {a, row}, std::move(out),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        out[0] = g;
                        if (needs[1]) out[1] = sum_rows(g);
                        return out;
                      });
}

Var sum_rows(const Var& a) {
  require_matrix(a, "sum_rows");
  const Tensor& av = a.value();
  Tensor out({1, av.cols()});
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[j] += av(i, j);
  const std::size_t m = av.rows();
  return Tape::record("sum_rows", {a}, std::move(out),
                      [m](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{broadcast_rows(g, m)};
                      });
}

Var broadcast_rows(const Var& row, std::size_t m) {
  require_matrix(row, "broadcast_rows");
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw DimensionError("broadcast_rows: 1×n expected, got " + shape_string(rv.shape()));
  Tensor out({m, rv.cols()});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < rv.cols(); ++j) out(i, j) = rv[j];
  return Tape::record("broadcast_rows", {row}, std::move(out),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{sum_rows(g)};
                      });
}

Var row_sum(const Var& a) {
  require_matrix(a, "row_sum");
  const Tensor& av = a.value();
  Tensor out({av.rows(), 1});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j);
    out[i] = s;
  }
  const std::size_t n = av.cols();
  return Tape::record("row_sum", {a}, std::move(out),
                      [n](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{broadcast_cols(g, n)};
                      });
}

Var broadcast_cols(const Var& col, std::size_t n) {
  require_matrix(col, "broadcast_cols");
  const Tensor& cv = col.value();
  if (cv.cols() != 1) throw DimensionError("broadcast_cols: m×1 expected, got " + shape_string(cv.shape()));
  Tensor out({cv.rows(), n});
  for (std::size_t i = 0; i < cv.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = cv[i];
  return Tape::record("broadcast_cols", {col}, std::move(out),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{row_sum(g)};
                      });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const Shape shape = a.shape();
  return Tape::record("sum", {a}, Tensor::scalar(s),
                      [shape](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{expand(g, shape)};
                      });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var expand(const Var& s, const Shape& shape) {
  require_one(s, "expand");
  return Tape::record("expand", {s}, Tensor(shape, s.value()[0]),
                      [](const Grads& in, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{reshape(sum(g), in[0].shape())};
                      });
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var relu(const Var& a) {
  Tensor mask = map_unary(a.value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
  Tensor out = map_unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  auto m = std::make_shared<const Tensor>(std::move(mask));
  return Tape::record("relu", {a}, std::move(out),
                      [m](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{mul(g, Var(*m))};
                      });
}

Var sigmoid(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return Tape::record("sigmoid", {a}, std::move(out),
                      [](const Grads&, const Var& s, const Var& g, const std::vector<bool>&) {
                        return Grads{mul(g, mul(s, affine(s, -1.0, 1.0)))};
                      });
}

Var softmax_rows(const Var& z) {
  require_matrix(z, "softmax_rows");
  const Tensor& zv = z.value();
  require_finite(zv, "softmax_rows");
  const std::size_t m = zv.rows(), n = zv.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = zv(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, zv(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(zv(i, j) - mx);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= s;
  }
  return Tape::record("softmax_rows", {z}, std::move(out),
                      [n](const Grads&, const Var& p, const Var& g, const std::vector<bool>&) {
                        return Grads{mul(p, sub(g, broadcast_cols(row_sum(mul(g, p)), n)))};
                      });
}

Var log_clamped(const Var& p, double floor) {
  Tensor out = map_unary(p.value(), [floor](double x) { return std::log(std::max(x, floor)); });
  return Tape::record("log_clamped", {p}, std::move(out),
                      [floor](const Grads& in, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{mul(g, recip_clamped(in[0], floor))};
                      });
}

Var recip_clamped(const Var& p, double floor) {
  Tensor out = map_unary(p.value(), [floor](double x) { return x > floor ? 1.0 / x : 0.0; });
  return Tape::record("recip_clamped", {p}, std::move(out),
                      [](const Grads&, const Var& r, const Var& g, const std::vector<bool>&) {
                        return Grads{neg(mul(g, mul(r, r)))};
                      });
}

Var reshape(const Var& a, const Shape& shape) {
  const Shape from = a.shape();
  return Tape::record("reshape", {a}, a.value().reshaped(shape),
                      [from](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{reshape(g, from)};
                      });
}

Var gather(const Var& a, IndexMap index, const Shape& out_shape) {
  const auto& idx = *index;
  if (idx.size() != shape_size(out_shape)) throw DimensionError("gather: index map does not match output shape");
  const Tensor& av = a.value();
  Tensor out(out_shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    if (static_cast<std::size_t>(idx[i]) >= av.size()) throw DimensionError("gather: index out of range");
    out[i] = av[static_cast<std::size_t>(idx[i])];
  }
  const Shape in_shape = a.shape();
  return Tape::record("gather", {a}, std::move(out),
                      [index, in_shape](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{scatter_add(g, index, in_shape)};
                      });
}

Var scatter_add(const Var& a, IndexMap index, const Shape& out_shape) {
  const auto& idx = *index;
  const Tensor& av = a.value();
  if (idx.size() != av.size()) throw DimensionError("scatter_add: index map does not match input size");
  Tensor out(out_shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    if (static_cast<std::size_t>(idx[i]) >= out.size()) throw DimensionError("scatter_add: index out of range");
    out[static_cast<std::size_t>(idx[i])] += av[i];
  }
  const Shape in_shape = a.shape();
  return Tape::record("scatter_add", {a}, std::move(out),
                      [index, in_shape](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{gather(g, index, in_shape)};
                      });
}

Var pad_cols(const Var& a, std::size_t extra, double value) {
  require_matrix(a, "pad_cols");
  const std::size_t m = a.value().rows(), n = a.value().cols(), w = n + extra;
  auto idx = std::make_shared<std::vector<std::int64_t>>(m * w, -1);
  Tensor fill({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) (*idx)[i * w + j] = static_cast<std::int64_t>(i * n + j);
    for (std::size_t j = n; j < w; ++j) fill(i, j) = value;
  }
  Var g = gather(a, std::move(idx), Shape{m, w});
  if (value == 0.0) return g;
  return add(g, Var(std::move(fill)));
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (begin > end || end > n) throw DimensionError("slice_cols: bad column range");
  const std::size_t w = end - begin;
  auto idx = std::make_shared<std::vector<std::int64_t>>(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) (*idx)[i * w + j] = static_cast<std::int64_t>(i * n + begin + j);
  return gather(a, std::move(idx), Shape{m, w});
}

Var add_diag(const Var& a, double lambda) {
  require_matrix(a, "add_diag");
  Tensor out = a.value();
  if (out.rows() != out.cols()) throw DimensionError("add_diag: square matrix expected");
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += lambda;
  return Tape::record("add_diag", {a}, std::move(out),
                      [](const Grads&, const Var&, const Var& g, const std::vector<bool>&) {
                        return Grads{g};
                      });
}

Var spd_solve(const Var& a, const Var& b) {
  return Tape::record("spd_solve", {a, b}, linalg::spd_solve(a.value(), b.value()),
                      [](const Grads& in, const Var& x, const Var& g, const std::vector<bool>& needs) {
                        Grads out(2);
                        // a symmetric: a⁻ᵀ g == a⁻¹ g
                        Var gb = spd_solve(in[0], g);
                        if (needs[0]) out[0] = neg(matmul_nt(gb, x));
                        if (needs[1]) out[1] = gb;
                        return out;
                      });
}

}  // namespace ld::ad
