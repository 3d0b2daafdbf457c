#include "aadam/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <numbers>

#include "aadam/error.hpp"
#include "aadam/random.hpp"

namespace aadam {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, const Tensor& value, bool trainable) {
  if (auto it = params_.find(name); it != params_.end()) {
    if (nodes_[it->second].ref != &value) {
      throw UsageError("parameter '" + name + "' registered twice with different storage");
    }
    return Var(this, it->second);
  }
  Node node;
  node.ref = &value;
  node.requires_grad = record_ && trainable;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  params_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (&in.tape() != this) throw UsageError("operands recorded on different tapes");
      node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

Gradients Tape::backward(Var loss) {
  if (nodes_.empty()) throw UsageError("backward on an empty tape");
  if (&loss.tape() != this) throw UsageError("loss was recorded on a different tape");
  if (loss.value().size() != 1) {
    throw DataError("backward needs a scalar loss, got shape " + shape_to_string(loss.value().shape()));
  }
  if (!record_) throw UsageError("backward on a tape that does not record");
  grad(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
  Gradients out;
  for (const auto& [name, id] : params_) {
    if (!nodes_[id].requires_grad) continue;
    out.emplace(name, has_grad(id) ? nodes_[id].grad : Tensor(value(id).shape(), 0.0));
  }
  return out;
}

namespace ad {
namespace {

Var rec(Tensor value, std::initializer_list<Var> inputs, Tape::BackwardFn fn) {
  Tape& tape = inputs.begin()->tape();
  return tape.record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DataError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                  shape_to_string(b.shape()));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw DataError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
}

template <typename F, typename D>
Var elementwise(Var x, F forward, D derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return rec(std::move(out), {x}, [ix = x.id(), derivative](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    const Tensor& xin = t.value(ix);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * derivative(xin[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) shape_error("matmul", A, B);
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor C({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = &C[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = &B[p * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
  return rec(std::move(C), {a, b}, [ia = a.id(), ib = b.id(), n, k, m](Tape& t, std::size_t self) {
    const Tensor& G = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& gA = t.grad(ia);
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = &G[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &B[p * m];
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
          gA[i * k + p] += acc;
        }
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gB = t.grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = &G[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          double* gbrow = &gB[p * m];
          for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_error("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return rec(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& X = x.value();
  const Tensor& b = bias.value();
  if (b.rank() != 1 || X.cols() != b.size()) shape_error("add_bias", X, b);
  Tensor out = X;
  const std::size_t d = b.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % d];
  return rec(std::move(out), {x, bias}, [ix = x.id(), ib = bias.id(), d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
  });
}

Var scale(Var x, double factor) {
  return elementwise(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var relu(Var x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return elementwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * std::exp(-0.5 * v * v) * inv_sqrt_2pi;
      });
}

Var sigmoid(Var x) {
  return elementwise(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softmax(Var x) {
  const Tensor& X = x.value();
  const std::size_t d = X.cols(), n = X.size() / d;
  Tensor out(X.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = &X[r * d];
    double* o = &out[r * d];
    const double mx = *std::max_element(in, in + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  return rec(std::move(out), {x}, [ix = x.id(), n, d](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double epsilon) {
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  const std::size_t d = X.cols();
  if (G.rank() != 1 || G.size() != d) shape_error("layer_norm gain", X, G);
  if (B.rank() != 1 || B.size() != d) shape_error("layer_norm bias", X, B);
  const std::size_t n = X.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(X.size());
  auto rstd = std::make_shared<std::vector<double>>(n);
  Tensor out(X.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = &X[r * d];
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + epsilon);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mean) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * G[j] + B[j];
    }
  }
  return rec(std::move(out), {x, gain, bias},
             [ix = x.id(), ig = gain.id(), ib = bias.id(), n, d, xhat, rstd](Tape& t, std::size_t self) {
               const Tensor& g = t.grad(self);
               const Tensor& G = t.value(ig);
               if (t.requires_grad(ig)) {
                 Tensor& gg = t.grad(ig);
                 for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * (*xhat)[i];
               }
               if (t.requires_grad(ib)) {
                 Tensor& gb = t.grad(ib);
                 for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
               }
               if (t.requires_grad(ix)) {
                 Tensor& gx = t.grad(ix);
                 std::vector<double> dh(d);
                 for (std::size_t r = 0; r < n; ++r) {
                   double mean_dh = 0.0, mean_dh_h = 0.0;
                   for (std::size_t j = 0; j < d; ++j) {
                     dh[j] = g[r * d + j] * G[j];
                     mean_dh += dh[j];
                     mean_dh_h += dh[j] * (*xhat)[r * d + j];
                   }
                   mean_dh /= static_cast<double>(d);
                   mean_dh_h /= static_cast<double>(d);
                   for (std::size_t j = 0; j < d; ++j) {
                     gx[r * d + j] += (*rstd)[r] * (dh[j] - mean_dh - (*xhat)[r * d + j] * mean_dh_h);
                   }
                 }
               }
             });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& T = table.value();
  require_matrix("embedding", T);
  if (ids.empty()) throw DataError("embedding: empty id list");
  const std::size_t vocab = T.rows(), d = T.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DataError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab) +
                      " rows");
    }
    std::copy_n(&T[static_cast<std::size_t>(ids[i]) * d], d, &out[i * d]);
  }
  return rec(std::move(out), {table},
             [it = table.id(), rows = std::vector<int>(ids.begin(), ids.end()), d](Tape& t, std::size_t self) {
               if (!t.requires_grad(it)) return;
               const Tensor& g = t.grad(self);
               Tensor& gt = t.grad(it);
               for (std::size_t i = 0; i < rows.size(); ++i) {
                 double* dst = &gt[static_cast<std::size_t>(rows[i]) * d];
                 for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
               }
             });
}

Var mean_pool(Var x, std::span<const int> mask) {
  const Tensor& X = x.value();
  require_matrix("mean_pool", X);
  if (mask.size() != X.rows()) {
    throw DataError("mean_pool: mask length " + std::to_string(mask.size()) + " vs input " +
                    shape_to_string(X.shape()));
  }
  const std::size_t d = X.cols();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("mean_pool: every position is padding");
  Tensor out({1, d});
  for (std::size_t r : keep) {
    for (std::size_t j = 0; j < d; ++j) out[j] += X[r * d + j];
  }
  const double inv = 1.0 / static_cast<double>(keep.size());
  for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
  return rec(std::move(out), {x}, [ix = x.id(), keep, d, inv](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t r : keep) {
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[j] * inv;
    }
  });
}

Var cosine_similarity(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.size() != B.size()) shape_error("cosine_similarity", A, B);
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    dot += A[i] * B[i];
    na2 += A[i] * A[i];
    nb2 += B[i] * B[i];
  }
  if (na2 == 0.0 || nb2 == 0.0) throw NumericError("cosine_similarity: zero-norm vector");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double c = dot / (na * nb);
  return rec(Tensor::scalar(c), {a, b}, [ia = a.id(), ib = b.id(), na, nb, c](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& gA = t.grad(ia);
      for (std::size_t i = 0; i < A.size(); ++i) gA[i] += g * (B[i] / (na * nb) - c * A[i] / (na * na));
    }
    if (t.requires_grad(ib)) {
      Tensor& gB = t.grad(ib);
      for (std::size_t i = 0; i < B.size(); ++i) gB[i] += g * (A[i] / (na * nb) - c * B[i] / (nb * nb));
    }
  });
}

Var mse_loss(Var prediction, const Tensor& target) {
  const Tensor& P = prediction.value();
  if (P.size() != target.size()) shape_error("mse_loss", P, target);
  const double n = static_cast<double>(P.size());
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) total += (P[i] - target[i]) * (P[i] - target[i]);
  return rec(Tensor::scalar(total / n), {prediction}, [ip = prediction.id(), target, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ip)) return;
    const double g = t.grad(self)[0];
    const Tensor& P = t.value(ip);
    Tensor& gp = t.grad(ip);
    for (std::size_t i = 0; i < P.size(); ++i) gp[i] += g * 2.0 * (P[i] - target[i]) / n;
  });
}

Var masked_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& L = logits.value();
  require_matrix("masked_cross_entropy", L);
  if (labels.size() != L.rows()) {
    throw DataError("masked_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                    shape_to_string(L.shape()));
  }
  const std::size_t v = L.cols();
  std::vector<std::size_t> rows;
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == kIgnoreLabel) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= v) {
      throw DataError("masked_cross_entropy: label " + std::to_string(labels[r]) + " outside " + std::to_string(v) +
                      " classes");
    }
    const double* in = &L[r * v];
    const double mx = *std::max_element(in, in + v);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(in[j] - mx);
    total += mx + std::log(s) - in[labels[r]];
    rows.push_back(r);
  }
  const double count = static_cast<double>(rows.size());
  const double loss = rows.empty() ? 0.0 : total / count;
  return rec(Tensor::scalar(loss), {logits},
             [il = logits.id(), rows, lab = std::vector<int>(labels.begin(), labels.end()), v, count](
                 Tape& t, std::size_t self) {
               if (!t.requires_grad(il) || rows.empty()) return;
               const double g = t.grad(self)[0] / count;
               const Tensor& L = t.value(il);
               Tensor& gl = t.grad(il);
               for (std::size_t r : rows) {
                 const double* in = &L[r * v];
                 const double mx = *std::max_element(in, in + v);
                 double s = 0.0;
                 for (std::size_t j = 0; j < v; ++j) s += std::exp(in[j] - mx);
                 for (std::size_t j = 0; j < v; ++j) gl[r * v + j] += g * std::exp(in[j] - mx) / s;
                 gl[r * v + static_cast<std::size_t>(lab[r])] -= g;
               }
             });
}

Var transpose(Var x) {
  const Tensor& X = x.value();
  require_matrix("transpose", X);
  const std::size_t n = X.rows(), m = X.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = X[i * m + j];
  }
  return rec(std::move(out), {x}, [ix = x.id(), n, m](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[j * n + i];
    }
  });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  const Tensor& X = x.value();
  require_matrix("slice_cols", X);
  const std::size_t n = X.rows(), m = X.cols();
  if (count == 0 || start + count > m) {
    throw DataError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                    ") outside " + shape_to_string(X.shape()));
  }
  Tensor out({n, count});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(&X[i * m + start], count, &out[i * count]);
  return rec(std::move(out), {x}, [ix = x.id(), n, m, start, count](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < count; ++j) gx[i * m + start + j] += g[i * count + j];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DataError("concat_cols: no inputs");
  Tape& tape = parts[0].tape();
  const std::size_t n = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_matrix("concat_cols", p.value());
    if (p.value().rows() != n) shape_error("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&P[i * widths[k]], widths[k], &out[i * total + offset]);
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return tape.record(std::move(out), parts, [ids, widths, n, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gp = t.grad(ids[k]);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g[i * total + offset + j];
        }
      }
      offset += widths[k];
    }
  });
}

Var row(Var x, std::size_t index) {
  const Tensor& X = x.value();
  require_matrix("row", X);
  if (index >= X.rows()) throw DataError("row: index " + std::to_string(index) + " outside " + shape_to_string(X.shape()));
  const std::size_t d = X.cols();
  Tensor out({1, d});
  std::copy_n(&X[index * d], d, &out[0]);
  return rec(std::move(out), {x}, [ix = x.id(), index, d](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t j = 0; j < d; ++j) gx[index * d + j] += g[j];
  });
}

Var sum(std::span<const Var> terms) {
  if (terms.empty()) throw DataError("sum: no inputs");
  Tensor out = terms[0].value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const Tensor& T = terms[k].value();
    if (T.shape() != out.shape()) shape_error("sum", out, T);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += T[i];
  }
  std::vector<std::size_t> ids;
  for (const Var& v : terms) ids.push_back(v.id());
  return terms[0].tape().record(std::move(out), terms, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t id : ids) {
      if (!t.requires_grad(id)) continue;
      Tensor& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& X = x.value();
  auto keep = std::make_shared<std::vector<double>>(X.size());
  const double factor = 1.0 / (1.0 - rate);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    (*keep)[i] = rng.bernoulli(1.0 - rate) ? factor : 0.0;
    out[i] = X[i] * (*keep)[i];
  }
  return rec(std::move(out), {x}, [ix = x.id(), keep](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*keep)[i];
  });
}

}  // namespace ad

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Parameter>& params) {
  Tape tape(false);
  const double v = f(tape, params).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check_detailed(const ScalarFunction& f, std::vector<Parameter> params, double eps) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  Gradients analytic;
  {
    Tape tape;
    Var loss = f(tape, params);
    if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: function value is not finite");
    analytic = tape.backward(loss);
  }
  GradCheckResult result;
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    auto it = analytic.find(p.name);
    for (std::size_t i = 0; i < p.tensor.size(); ++i) {
      const double original = p.tensor[i];
      p.tensor[i] = original + eps;
      const double up = evaluate(f, params);
      p.tensor[i] = original - eps;
      const double down = evaluate(f, params);
      p.tensor[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

double grad_check(const ScalarFunction& f, std::vector<Parameter> params, double eps) {
  return grad_check_detailed(f, std::move(params), eps).max_relative_error;
}

}  // namespace aadam
