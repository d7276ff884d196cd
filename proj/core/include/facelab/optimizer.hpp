#pragma once

#include <span>
#include <string>
#include <vector>

#include "facelab/nn.hpp"

namespace facelab {

struct OptimSpec {
  double momentum = 0.9;
  double weight_decay = 5e-4;

  bool operator==(const OptimSpec&) const = default;
};

void validate_optim_spec(const OptimSpec& spec);

// buffer <- momentum * buffer + grad + weight_decay * param
// param  <- param - lr * buffer
// Throws ValueError naming `name` if any gradient is non-finite (before any
// value is modified).
template <typename T>
void sgd_update(std::span<T> param, std::span<const T> grad, std::span<T> buffer, double lr,
                const OptimSpec& optim, const std::string& name);

// Applies sgd_update to every parameter; `buffers` is resized on first use.
template <typename T>
void sgd_step(std::span<const nn::NamedParameter<T>> params, double lr, const OptimSpec& optim,
              std::vector<Tensor<T>>& buffers);

}  // namespace facelab
