#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aadam/tensor.hpp"

namespace aadam {

class Rng;

/// A named tensor owned by a model. Frozen parameters have trainable = false.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

using Gradients = std::map<std::string, Tensor>;

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of primitive operations for reverse-mode differentiation.
///
/// A tape is confined to one thread. Parameter leaves reference the caller's
/// tensors, which must outlive the tape. With recording disabled no backward
/// closures are kept (inference mode).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Registers a named leaf. Registering the same name twice returns the same
  /// leaf, so every use of a parameter accumulates into one gradient.
  Var parameter(const std::string& name, const Tensor& value, bool trainable = true);
  Var parameter(const Parameter& p) { return parameter(p.name, p.tensor, p.trainable); }

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Records an op result. Used by primitive implementations.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Reverse sweep from a scalar loss. Returns a gradient for every trainable
  /// parameter leaf on the tape; leaves the loss does not reach get zeros.
  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
};

/// Free function form of Tape::backward.
inline Gradients backward(Tape& tape, Var loss) { return tape.backward(loss); }

namespace ad {

inline constexpr int kIgnoreLabel = -100;

// Every primitive has an exact backward rule. Shape errors name both shapes.

Var matmul(Var a, Var b);                  // (n,k) x (k,m) -> (n,m)
Var add(Var a, Var b);                     // identical shapes
Var add_bias(Var x, Var bias);             // (n,d) + (d) broadcast over rows
Var scale(Var x, double factor);           // scalar multiplication
Var relu(Var x);
Var gelu(Var x);                           // exact erf form
Var sigmoid(Var x);
Var softmax(Var x);                        // over the last axis
Var layer_norm(Var x, Var gain, Var bias, double epsilon = 1e-5);  // last axis
Var embedding(Var table, std::span<const int> ids);                 // (V,d) -> (n,d)
Var mean_pool(Var x, std::span<const int> mask);                    // (n,d) -> (1,d)
Var cosine_similarity(Var a, Var b);       // flattened vectors -> (1)
Var mse_loss(Var prediction, const Tensor& target);                 // mean squared error -> (1)
/// Mean negative log-likelihood over positions whose label is not kIgnoreLabel.
/// No labeled positions gives loss 0.
Var masked_cross_entropy(Var logits, std::span<const int> labels);

// Structural helpers used by attention and pooling.
Var transpose(Var x);                      // (n,m) -> (m,n)
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var row(Var x, std::size_t index);         // (n,d) -> (1,d)
Var sum(std::span<const Var> terms);       // identical shapes
/// Inverted dropout; identity when rate is 0.
Var dropout(Var x, double rate, Rng& rng);

}  // namespace ad

/// Scalar function of a parameter list, recorded on the given tape.
using ScalarFunction = std::function<Var(Tape&, const std::vector<Parameter>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares tape gradients with central differences (f(x+eps)-f(x-eps))/(2 eps)
/// coordinate by coordinate. Relative error uses max(|a|, |b|, 1e-8) as the
/// denominator. Throws NumericError when f is not finite.
GradCheckResult grad_check_detailed(const ScalarFunction& f, std::vector<Parameter> params,
                                    double eps = 1e-5);
double grad_check(const ScalarFunction& f, std::vector<Parameter> params, double eps = 1e-5);

}  // namespace aadam
