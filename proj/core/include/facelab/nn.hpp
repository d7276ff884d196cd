#pragma once

#include <memory>
#include <string>
#include <vector>

#include "facelab/random.hpp"
#include "facelab/tensor.hpp"

namespace facelab::nn {

enum class Mode { Train, Eval };

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(int n, int c, int h, int w) : value(n, c, h, w), grad(n, c, h, w) {}
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// Layer with an explicit backward pass. forward() in Train mode caches what
// backward() needs; backward() accumulates parameter gradients and returns
// the gradient with respect to the input.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_parameters(const std::string& /*prefix*/,
                                  std::vector<NamedParameter<T>>& /*out*/) {}
  virtual void collect_buffers(const std::string& /*prefix*/,
                               std::vector<NamedBuffer<T>>& /*out*/) {}
};

struct ConvOptions {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Bias-free 2-D convolution; groups == in_channels == out_channels gives a
// depthwise convolution. Weights use a fan-out scaled normal initialisation.
template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(const ConvOptions& options, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

  const ConvOptions& options() const { return opt_; }
  int out_size(int in, int k) const { return (in + 2 * opt_.padding - k) / opt_.stride + 1; }

 private:
  void im2col(const T* src, int h, int w, int c0, int cn, T* cols) const;
  void col2im(const T* cols, int h, int w, int c0, int cn, T* dst) const;
  bool is_depthwise() const {
    return opt_.groups == opt_.in_channels && opt_.groups == opt_.out_channels;
  }
  bool is_pointwise() const {
    return opt_.kernel_h == 1 && opt_.kernel_w == 1 && opt_.stride == 1 && opt_.padding == 0;
  }

  ConvOptions opt_;
  Parameter<T> weight_;
  Tensor<T> input_;
};

// Batch normalisation over N, H, W per channel (also serves 1-D features as
// N x C x 1 x 1). Running statistics use momentum 0.1 and the unbiased
// batch variance.
template <typename T>
class BatchNorm : public Module<T> {
 public:
  explicit BatchNorm(int channels, double eps = 1e-5, double momentum = 0.1);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) override;

 private:
  int channels_;
  double eps_;
  double momentum_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class PReLU : public Module<T> {
 public:
  explicit PReLU(int channels, T init = T(0.25));

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

 private:
  Parameter<T> weight_;
  Tensor<T> input_;
};

// Flattens its input and applies y = x W^T (no bias). Initialised with a
// fan-in scaled normal.
template <typename T>
class Linear : public Module<T> {
 public:
  Linear(int in_features, int out_features, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

 private:
  int in_;
  int out_;
  Parameter<T> weight_;
  Tensor<T> input_;
};

template <typename T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  Sequential& add(std::string name, std::unique_ptr<Module<T>> module);
  template <typename M, typename... Args>
  Sequential& emplace(std::string name, Args&&... args) {
    return add(std::move(name), std::make_unique<M>(std::forward<Args>(args)...));
  }
  std::size_t size() const { return modules_.size(); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) override;

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module<T>>>> modules_;
};

// y = body(x) + shortcut(x); a null shortcut is the identity.
template <typename T>
class Residual : public Module<T> {
 public:
  Residual(std::unique_ptr<Module<T>> body, std::unique_ptr<Module<T>> shortcut = nullptr);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) override;

 private:
  std::unique_ptr<Module<T>> body_;
  std::unique_ptr<Module<T>> shortcut_;
};

}  // namespace facelab::nn
