#include "aadam/optim.hpp"

#include <cmath>
#include <vector>

#include "aadam/error.hpp"

namespace aadam {

void adamw_step(ParameterStore& params, const Gradients& grads, AdamWState& state, const AdamWHyper& hyper) {
  if (!(hyper.learning_rate > 0.0)) throw UsageError("adamw: learning rate must be positive");
  const std::int64_t t = state.step + 1;
  const double bias1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));

  struct Pending {
    Parameter* param;
    Tensor value, m, v;
  };
  std::vector<Pending> pending;
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    auto g = grads.find(p.name);
    if (g == grads.end()) throw UsageError("adamw: no gradient for trainable parameter '" + p.name + "'");
    if (g->second.shape() != p.tensor.shape()) {
      throw DataError("adamw: gradient shape " + shape_to_string(g->second.shape()) + " for parameter '" + p.name +
                      "' of shape " + shape_to_string(p.tensor.shape()));
    }
    auto m_it = state.first_moment.find(p.name);
    Tensor m = m_it == state.first_moment.end() ? Tensor(p.tensor.shape(), 0.0) : m_it->second;
    auto v_it = state.second_moment.find(p.name);
    Tensor v = v_it == state.second_moment.end() ? Tensor(p.tensor.shape(), 0.0) : v_it->second;
    Tensor value = p.tensor;
    const Tensor& grad = g->second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      value[i] -= hyper.learning_rate * hyper.weight_decay * value[i];
      value[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
    if (!value.all_finite()) throw NumericError("adamw: non-finite update for parameter '" + p.name + "'");
    pending.push_back({&p, std::move(value), std::move(m), std::move(v)});
  }
  for (Pending& u : pending) {
    u.param->tensor = std::move(u.value);
    state.first_moment[u.param->name] = std::move(u.m);
    state.second_moment[u.param->name] = std::move(u.v);
  }
  state.step = t;
}

}  // namespace aadam
