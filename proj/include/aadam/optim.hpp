#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "aadam/autodiff.hpp"
#include "aadam/parameters.hpp"

namespace aadam {

struct AdamWHyper {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::int64_t step = 0;
};

/// One AdamW step with decoupled weight decay over every trainable parameter.
///
/// Frozen parameters are skipped entirely and stay bitwise unchanged. Every
/// trainable parameter needs a gradient; a non-finite update throws
/// NumericError naming the parameter and leaves the store untouched.
void adamw_step(ParameterStore& params, const Gradients& grads, AdamWState& state, const AdamWHyper& hyper);

}  // namespace aadam
