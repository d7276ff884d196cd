#include "facelab/optimizer.hpp"

#include <cmath>

#include "facelab/error.hpp"

namespace facelab {

void validate_optim_spec(const OptimSpec& s) {
  if (!(s.momentum >= 0 && s.momentum < 1)) throw ValueError("optim: momentum must be in [0, 1)");
  if (!(s.weight_decay >= 0)) throw ValueError("optim: weight_decay must be >= 0");
}

template <typename T>
void sgd_update(std::span<T> param, std::span<const T> grad, std::span<T> buffer, double lr,
                const OptimSpec& optim, const std::string& name) {
  if (param.size() != grad.size() || param.size() != buffer.size()) {
    throw ShapeError("sgd_update: shape mismatch for '" + name + "'");
  }
  for (T g : grad) {
    if (!std::isfinite(g)) throw ValueError("sgd_update: non-finite gradient in '" + name + "'");
  }
  const T mu = static_cast<T>(optim.momentum);
  const T wd = static_cast<T>(optim.weight_decay);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    buffer[i] = mu * buffer[i] + grad[i] + wd * param[i];
    param[i] -= step * buffer[i];
  }
}

template <typename T>
void sgd_step(std::span<const nn::NamedParameter<T>> params, double lr, const OptimSpec& optim,
              std::vector<Tensor<T>>& buffers) {
  if (buffers.empty()) {
    for (const auto& p : params) buffers.emplace_back(p.param->value.shape());
  }
  if (buffers.size() != params.size()) throw ShapeError("sgd_step: buffer count mismatch");
  // Check every gradient first so a failure leaves all parameters untouched.
  for (const auto& p : params) {
    for (T g : p.param->grad.values()) {
      if (!std::isfinite(g)) throw ValueError("sgd_step: non-finite gradient in '" + p.name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].param;
    sgd_update<T>(p.value.values(), p.grad.values(), buffers[i].values(), lr, optim, params[i].name);
  }
}

template void sgd_update<float>(std::span<float>, std::span<const float>, std::span<float>, double,
                                const OptimSpec&, const std::string&);
template void sgd_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                 double, const OptimSpec&, const std::string&);
template void sgd_step<float>(std::span<const nn::NamedParameter<float>>, double, const OptimSpec&,
                              std::vector<Tensor<float>>&);
template void sgd_step<double>(std::span<const nn::NamedParameter<double>>, double,
                               const OptimSpec&, std::vector<Tensor<double>>&);

}  // namespace facelab
