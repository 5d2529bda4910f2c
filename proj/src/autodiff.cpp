#include "ssdg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssdg/errors.hpp"

namespace ssdg {

const Tensor2& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Tensor2& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw DimensionError("scalar(): node has shape " + v.shape_string());
  return v[0];
}

const Tensor2& Gradients::at(const std::string& id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) throw std::out_of_range("no gradient for parameter '" + id + "'");
  return it->second;
}

Var Tape::constant(Tensor2 value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string id, Tensor2 value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  parameter_nodes_.emplace_back(nodes_.size() - 1, std::move(id));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor2 value, std::vector<std::size_t> parents, Backprop backprop) {
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
  if (!needs) backprop = nullptr;
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(backprop), needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(GradStore& grads, std::size_t id, const Tensor2& g) {
  Tensor2& dst = grads[id];
  if (dst.empty()) {
    dst = g;
    return;
  }
  auto d = dst.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Tensor2& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + lv.shape_string());
  }
  GradStore grads(nodes_.size());
  grads[loss.id()] = Tensor2(1, 1, 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.backprop || grads[i].empty()) continue;
    n.backprop(grads[i], grads);
  }
  Gradients out;
  for (const auto& [node, id] : parameter_nodes_) {
    const Tensor2& g = grads[node];
    out[id] = g.empty() ? Tensor2(nodes_[node].value.rows(), nodes_[node].value.cols()) : g;
  }
  return out;
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

void require_scalar(Var a, const char* op) {
  const Tensor2& v = a.value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError(std::string(op) + ": expected scalar, got " + v.shape_string());
  }
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Tensor2 out = matmul_values(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [&t, ia, ib](const Tensor2& g, Tape::GradStore& grads) {
    if (t.requires_grad(ia)) Tape::accumulate(grads, ia, matmul_values(g, transpose(t.value(ib))));
    if (t.requires_grad(ib)) Tape::accumulate(grads, ib, matmul_values(transpose(t.value(ia)), g));
  });
}

Var add_bias(Var x, Var b) {
  Tape& t = same_tape(x, b, "add_bias");
  const Tensor2& xv = x.value();
  const Tensor2& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_bias: shape mismatch " + xv.shape_string() + " + " + bv.shape_string());
  }
  Tensor2 out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  const std::size_t ix = x.id(), ib = b.id();
  return t.record(std::move(out), {ix, ib}, [&t, ix, ib](const Tensor2& g, Tape::GradStore& grads) {
    if (t.requires_grad(ix)) Tape::accumulate(grads, ix, g);
    if (t.requires_grad(ib)) {
      Tensor2 gb(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      Tape::accumulate(grads, ib, gb);
    }
  });
}

Var relu(Var x) {
  Tape& t = *x.tape();
  Tensor2 out = x.value();
  double margin = std::numeric_limits<double>::infinity();
  for (double& v : out.data()) {
    margin = std::min(margin, std::abs(v));
    if (v < 0.0) v = 0.0;
  }
  t.note_margin(margin);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [&t, ix](const Tensor2& g, Tape::GradStore& grads) {
    const Tensor2& in = t.value(ix);
    Tensor2 gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(in[i] > 0.0)) gx[i] = 0.0;
    Tape::accumulate(grads, ix, gx);
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  Tensor2 out = softmax_values(x.value());
  const std::size_t ix = x.id();
  const std::size_t self = t.size();
  return t.record(std::move(out), {ix}, [&t, ix, self](const Tensor2& g, Tape::GradStore& grads) {
    const Tensor2& y = t.value(self);
    Tensor2 gx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) = y(r, c) * (g(r, c) - s);
    }
    Tape::accumulate(grads, ix, gx);
  });
}

Var cross_entropy(Var probs, std::size_t row, std::size_t index) {
  Tape& t = *probs.tape();
  const Tensor2& p = probs.value();
  if (row >= p.rows() || index >= p.cols()) {
    throw std::out_of_range("cross_entropy: index (" + std::to_string(row) + ", " +
                            std::to_string(index) + ") outside " + p.shape_string());
  }
  const double pv = p(row, index);
  const double loss = -std::log(std::max(pv, kLogFloor));
  const std::size_t ip = probs.id();
  return t.record(Tensor2(1, 1, loss), {ip}, [&t, ip, row, index](const Tensor2& g, Tape::GradStore& grads) {
    const Tensor2& p = t.value(ip);
    const double pv = p(row, index);
    Tensor2 gp(p.rows(), p.cols());
    if (pv > kLogFloor) gp(row, index) = -g[0] / pv;
    Tape::accumulate(grads, ip, gp);
  });
}

Var cosine_sim(Var a, std::span<const double> b) {
  Tensor2 rows = Tensor2::row_vector(b);
  return cosine_sims(a, rows);
}

Var cosine_sims(Var a, const Tensor2& rows) {
  Tape& t = *a.tape();
  const Tensor2& av = a.value();
  if (av.rows() != 1 || av.cols() != rows.cols()) {
    throw DimensionError("cosine_sims: shape mismatch " + av.shape_string() + " vs " + rows.shape_string());
  }
  const double na = l2_norm(av.data());
  if (na == 0.0) throw DegenerateInputError("cosine similarity of a zero-norm vector");
  // Unit-normalized constants, saved for backward.
  Tensor2 units(rows.rows(), rows.cols());
  Tensor2 out(1, rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    out[r] = cosine_similarity(av.data(), rows.row(r));
    const double nb = l2_norm(rows.row(r));
    for (std::size_t c = 0; c < rows.cols(); ++c) units(r, c) = rows(r, c) / nb;
  }
  const std::size_t ia = a.id();
  const std::size_t self = t.size();
  return t.record(std::move(out), {ia},
                  [&t, ia, self, units = std::move(units)](const Tensor2& g, Tape::GradStore& grads) {
                    const Tensor2& av = t.value(ia);
                    const Tensor2& cos = t.value(self);
                    const double na = l2_norm(av.data());
                    Tensor2 ga(1, av.cols());
                    // d cos / d a = (b̂ − cos · â) / ‖a‖
                    for (std::size_t r = 0; r < units.rows(); ++r) {
                      const double w = g[r] / na;
                      for (std::size_t c = 0; c < av.cols(); ++c) {
                        ga[c] += w * (units(r, c) - cos[r] * av[c] / na);
                      }
                    }
                    Tape::accumulate(grads, ia, ga);
                  });
}

std::pair<std::vector<double>, std::vector<std::size_t>> sort_desc_values(std::span<const double> z) {
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return z[i] > z[j]; });
  std::vector<double> sorted(z.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = z[order[k]];
  return {std::move(sorted), std::move(order)};
}

SortedVar sort_desc_with_indices(Var z) {
  Tape& t = *z.tape();
  const Tensor2& zv = z.value();
  if (zv.rows() != 1) throw DimensionError("sort_desc_with_indices: expects a row vector, got " + zv.shape_string());
  auto [sorted, order] = sort_desc_values(zv.data());
  for (std::size_t k = 1; k < sorted.size(); ++k) t.note_margin(sorted[k - 1] - sorted[k]);
  const std::size_t iz = z.id();
  Var out = t.record(Tensor2::row_vector(sorted), {iz},
                     [iz, order](const Tensor2& g, Tape::GradStore& grads) {
                       Tensor2 gz(1, order.size());
                       for (std::size_t k = 0; k < order.size(); ++k) gz[order[k]] += g[k];
                       Tape::accumulate(grads, iz, gz);
                     });
  return SortedVar{out, std::move(order)};
}

Var select_row(Var x, std::size_t row) {
  Tape& t = *x.tape();
  const Tensor2& xv = x.value();
  if (row >= xv.rows()) throw std::out_of_range("select_row: row " + std::to_string(row) + " of " + xv.shape_string());
  const std::size_t ix = x.id();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  return t.record(xv.row_copy(row), {ix}, [ix, row, rows, cols](const Tensor2& g, Tape::GradStore& grads) {
    Tensor2 gx(rows, cols);
    for (std::size_t c = 0; c < cols; ++c) gx(row, c) = g[c];
    Tape::accumulate(grads, ix, gx);
  });
}

Var pick(Var x, std::size_t row, std::size_t col) {
  Tape& t = *x.tape();
  const Tensor2& xv = x.value();
  if (row >= xv.rows() || col >= xv.cols()) {
    throw std::out_of_range("pick: (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
                            xv.shape_string());
  }
  const std::size_t ix = x.id();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  return t.record(Tensor2(1, 1, xv(row, col)), {ix}, [ix, row, col, rows, cols](const Tensor2& g, Tape::GradStore& grads) {
    Tensor2 gx(rows, cols);
    gx(row, col) = g[0];
    Tape::accumulate(grads, ix, gx);
  });
}

Var mean_range(Var v, std::size_t begin, std::size_t end) {
  Tape& t = *v.tape();
  const Tensor2& vv = v.value();
  if (vv.rows() != 1 || end > vv.cols() || begin > end) {
    throw std::out_of_range("mean_range: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                            vv.shape_string());
  }
  const std::size_t count = end - begin;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += vv[i];
  const double m = count == 0 ? 0.0 : s / static_cast<double>(count);
  const std::size_t iv = v.id();
  const std::size_t cols = vv.cols();
  return t.record(Tensor2(1, 1, m), {iv}, [iv, begin, end, count, cols](const Tensor2& g, Tape::GradStore& grads) {
    if (count == 0) return;
    Tensor2 gv(1, cols);
    for (std::size_t i = begin; i < end; ++i) gv[i] = g[0] / static_cast<double>(count);
    Tape::accumulate(grads, iv, gv);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw DimensionError("add: shape mismatch " + av.shape_string() + " + " + bv.shape_string());
  }
  Tensor2 out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [&t, ia, ib](const Tensor2& g, Tape::GradStore& grads) {
    if (t.requires_grad(ia)) Tape::accumulate(grads, ia, g);
    if (t.requires_grad(ib)) Tape::accumulate(grads, ib, g);
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var scale(Var a, double k) {
  Tape& t = *a.tape();
  Tensor2 out = a.value();
  for (double& v : out.data()) v *= k;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, k](const Tensor2& g, Tape::GradStore& grads) {
    Tensor2 ga = g;
    for (double& v : ga.data()) v *= k;
    Tape::accumulate(grads, ia, ga);
  });
}

Var add_scalar(Var a, double k) {
  Tape& t = *a.tape();
  Tensor2 out = a.value();
  for (double& v : out.data()) v += k;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](const Tensor2& g, Tape::GradStore& grads) { Tape::accumulate(grads, ia, g); });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  const Tensor2& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const std::size_t ia = a.id();
  const std::size_t rows = av.rows(), cols = av.cols();
  return t.record(Tensor2(1, 1, s), {ia}, [ia, rows, cols](const Tensor2& g, Tape::GradStore& grads) {
    Tape::accumulate(grads, ia, Tensor2(rows, cols, g[0]));
  });
}

Var mean(std::span<const Var> scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean: empty list");
  Tape& t = *scalars.front().tape();
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  double s = 0.0;
  for (Var v : scalars) {
    if (v.tape() != &t) throw std::invalid_argument("mean: operands live on different tapes");
    require_scalar(v, "mean");
    s += v.value()[0];
    ids.push_back(v.id());
  }
  const double n = static_cast<double>(scalars.size());
  std::vector<std::size_t> parents = ids;
  return t.record(Tensor2(1, 1, s / n), std::move(parents), [&t, ids, n](const Tensor2& g, Tape::GradStore& grads) {
    const Tensor2 share(1, 1, g[0] / n);
    for (std::size_t id : ids)
      if (t.requires_grad(id)) Tape::accumulate(grads, id, share);
  });
}

}  // namespace ssdg
