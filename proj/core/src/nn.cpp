#include "facelab/nn.hpp"

#include <Eigen/Core>
#include <cmath>

#include "facelab/error.hpp"

namespace facelab::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void normal_init(Tensor<T>& t, double stddev, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

void check_channels(int got, int expected, const char* layer) {
  if (got != expected) {
    throw ShapeError(std::string(layer) + ": expected " + std::to_string(expected) +
                     " input channels, got " + std::to_string(got));
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const ConvOptions& options, Rng& rng) : opt_(options) {
  if (opt_.in_channels <= 0 || opt_.out_channels <= 0 || opt_.groups <= 0 ||
      opt_.in_channels % opt_.groups != 0 || opt_.out_channels % opt_.groups != 0) {
    throw ShapeError("Conv2d: channels must be positive multiples of groups");
  }
  weight_ = Parameter<T>(opt_.out_channels, opt_.in_channels / opt_.groups, opt_.kernel_h,
                         opt_.kernel_w);
  const double fan_out = static_cast<double>(opt_.out_channels) * opt_.kernel_h * opt_.kernel_w;
  normal_init(weight_.value, std::sqrt(2.0 / fan_out), rng);
}

template <typename T>
void Conv2d<T>::im2col(const T* src, int h, int w, int c0, int cn, T* cols) const {
  const int oh = out_size(h, opt_.kernel_h);
  const int ow = out_size(w, opt_.kernel_w);
  const int s = opt_.stride;
  const int p = opt_.padding;
  std::size_t row = 0;
  for (int c = c0; c < c0 + cn; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < opt_.kernel_h; ++ky) {
      for (int kx = 0; kx < opt_.kernel_w; ++kx, ++row) {
        T* dst = cols + row * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s - p + kx;
            dst[oy * ow + ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* cols, int h, int w, int c0, int cn, T* dst) const {
  const int oh = out_size(h, opt_.kernel_h);
  const int ow = out_size(w, opt_.kernel_w);
  const int s = opt_.stride;
  const int p = opt_.padding;
  std::size_t row = 0;
  for (int c = c0; c < c0 + cn; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < opt_.kernel_h; ++ky) {
      for (int kx = 0; kx < opt_.kernel_w; ++kx, ++row) {
        const T* src = cols + row * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          T* drow = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) drow[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode) {
  check_channels(x.c(), opt_.in_channels, "Conv2d");
  const int h = x.h(), w = x.w();
  const int oh = out_size(h, opt_.kernel_h);
  const int ow = out_size(w, opt_.kernel_w);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("Conv2d: input " + x.shape_string() + " smaller than kernel");
  }
  Tensor<T> y(x.n(), opt_.out_channels, oh, ow);
  const int k = opt_.kernel_h * opt_.kernel_w;

  if (is_depthwise()) {
    for (int n = 0; n < x.n(); ++n) {
      for (int c = 0; c < opt_.in_channels; ++c) {
        const T* plane = x.sample(n) + static_cast<std::size_t>(c) * h * w;
        const T* wt = weight_.value.data() + static_cast<std::size_t>(c) * k;
        T* out = y.sample(n) + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            T acc = 0;
            for (int ky = 0; ky < opt_.kernel_h; ++ky) {
              const int iy = oy * opt_.stride - opt_.padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < opt_.kernel_w; ++kx) {
                const int ix = ox * opt_.stride - opt_.padding + kx;
                if (ix < 0 || ix >= w) continue;
                acc += wt[ky * opt_.kernel_w + kx] * plane[iy * w + ix];
              }
            }
            out[oy * ow + ox] = acc;
          }
        }
      }
    }
  } else {
    const int cin_g = opt_.in_channels / opt_.groups;
    const int cout_g = opt_.out_channels / opt_.groups;
    const int rows = cin_g * k;
    std::vector<T> cols(is_pointwise() ? 0 : static_cast<std::size_t>(rows) * oh * ow);
    for (int n = 0; n < x.n(); ++n) {
      for (int g = 0; g < opt_.groups; ++g) {
        const T* colptr;
        if (is_pointwise()) {
          colptr = x.sample(n) + static_cast<std::size_t>(g) * cin_g * h * w;
        } else {
          im2col(x.sample(n), h, w, g * cin_g, cin_g, cols.data());
          colptr = cols.data();
        }
        MapConstMat<T> cmat(colptr, rows, oh * ow);
        MapConstMat<T> wmat(weight_.value.data() + static_cast<std::size_t>(g) * cout_g * rows,
                            cout_g, rows);
        MapMat<T> ymat(y.sample(n) + static_cast<std::size_t>(g) * cout_g * oh * ow, cout_g,
                       oh * ow);
        ymat.noalias() = wmat * cmat;
      }
    }
  }
  if (mode == Mode::Train) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  if (x.empty()) throw Error("Conv2d::backward called without a training forward pass");
  const int h = x.h(), w = x.w();
  const int oh = grad_out.h(), ow = grad_out.w();
  const int k = opt_.kernel_h * opt_.kernel_w;
  Tensor<T> dx(x.shape());

  if (is_depthwise()) {
    for (int n = 0; n < x.n(); ++n) {
      for (int c = 0; c < opt_.in_channels; ++c) {
        const T* plane = x.sample(n) + static_cast<std::size_t>(c) * h * w;
        T* dplane = dx.sample(n) + static_cast<std::size_t>(c) * h * w;
        const T* wt = weight_.value.data() + static_cast<std::size_t>(c) * k;
        T* dwt = weight_.grad.data() + static_cast<std::size_t>(c) * k;
        const T* go = grad_out.sample(n) + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const T g = go[oy * ow + ox];
            for (int ky = 0; ky < opt_.kernel_h; ++ky) {
              const int iy = oy * opt_.stride - opt_.padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < opt_.kernel_w; ++kx) {
                const int ix = ox * opt_.stride - opt_.padding + kx;
                if (ix < 0 || ix >= w) continue;
                dwt[ky * opt_.kernel_w + kx] += g * plane[iy * w + ix];
                dplane[iy * w + ix] += g * wt[ky * opt_.kernel_w + kx];
              }
            }
          }
        }
      }
    }
  } else {
    const int cin_g = opt_.in_channels / opt_.groups;
    const int cout_g = opt_.out_channels / opt_.groups;
    const int rows = cin_g * k;
    std::vector<T> cols(is_pointwise() ? 0 : static_cast<std::size_t>(rows) * oh * ow);
    RowMat<T> dcols(rows, oh * ow);
    for (int n = 0; n < x.n(); ++n) {
      for (int g = 0; g < opt_.groups; ++g) {
        const T* colptr;
        if (is_pointwise()) {
          colptr = x.sample(n) + static_cast<std::size_t>(g) * cin_g * h * w;
        } else {
          im2col(x.sample(n), h, w, g * cin_g, cin_g, cols.data());
          colptr = cols.data();
        }
        MapConstMat<T> cmat(colptr, rows, oh * ow);
        MapConstMat<T> gmat(grad_out.sample(n) + static_cast<std::size_t>(g) * cout_g * oh * ow,
                            cout_g, oh * ow);
        MapConstMat<T> wmat(weight_.value.data() + static_cast<std::size_t>(g) * cout_g * rows,
                            cout_g, rows);
        MapMat<T> dwmat(weight_.grad.data() + static_cast<std::size_t>(g) * cout_g * rows, cout_g,
                        rows);
        dwmat.noalias() += gmat * cmat.transpose();
        if (is_pointwise()) {
          MapMat<T> dxmat(dx.sample(n) + static_cast<std::size_t>(g) * cin_g * h * w, rows,
                          oh * ow);
          dxmat.noalias() += wmat.transpose() * gmat;
        } else {
          dcols.noalias() = wmat.transpose() * gmat;
          col2im(dcols.data(), h, w, g * cin_g, cin_g, dx.sample(n));
        }
      }
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect_parameters(const std::string& prefix,
                                   std::vector<NamedParameter<T>>& out) {
  out.push_back({prefix + "weight", &weight_});
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(int channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      weight_(1, channels, 1, 1),
      bias_(1, channels, 1, 1),
      running_mean_(1, channels, 1, 1, T(0)),
      running_var_(1, channels, 1, 1, T(1)) {
  weight_.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  check_channels(x.c(), channels_, "BatchNorm");
  const int n = x.n();
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  const double m = static_cast<double>(n) * hw;
  Tensor<T> y(x.shape());
  if (mode == Mode::Eval) {
    for (int c = 0; c < channels_; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
      const double scale = weight_.value[c] * inv;
      const double shift = bias_.value[c] - running_mean_[c] * scale;
      for (int i = 0; i < n; ++i) {
        const T* src = x.sample(i) + c * hw;
        T* dst = y.sample(i) + c * hw;
        for (std::size_t k = 0; k < hw; ++k) dst[k] = static_cast<T>(src[k] * scale + shift);
      }
    }
    return y;
  }
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const T* src = x.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) sum += src[k];
    }
    const double mean = sum / m;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const T* src = x.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const double d = src[k] - mean;
        sq += d * d;
      }
    }
    const double var = sq / m;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<std::size_t>(c)] = inv;
    const double gamma = weight_.value[c];
    const double beta = bias_.value[c];
    for (int i = 0; i < n; ++i) {
      const T* src = x.sample(i) + c * hw;
      T* xh = xhat_.sample(i) + c * hw;
      T* dst = y.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const double v = (src[k] - mean) * inv;
        xh[k] = static_cast<T>(v);
        dst[k] = static_cast<T>(gamma * v + beta);
      }
    }
    const double unbiased = m > 1 ? var * m / (m - 1) : var;
    running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
    running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
  if (xhat_.empty()) throw Error("BatchNorm::backward called without a training forward pass");
  const int n = grad_out.n();
  const std::size_t hw = static_cast<std::size_t>(grad_out.h()) * grad_out.w();
  const double m = static_cast<double>(n) * hw;
  Tensor<T> dx(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int i = 0; i < n; ++i) {
      const T* g = grad_out.sample(i) + c * hw;
      const T* xh = xhat_.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum_g += g[k];
        sum_gx += static_cast<double>(g[k]) * xh[k];
      }
    }
    weight_.grad[c] += static_cast<T>(sum_gx);
    bias_.grad[c] += static_cast<T>(sum_g);
    const double coef = weight_.value[c] * inv_std_[static_cast<std::size_t>(c)] / m;
    for (int i = 0; i < n; ++i) {
      const T* g = grad_out.sample(i) + c * hw;
      const T* xh = xhat_.sample(i) + c * hw;
      T* d = dx.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        d[k] = static_cast<T>(coef * (m * g[k] - sum_g - xh[k] * sum_gx));
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::collect_parameters(const std::string& prefix,
                                      std::vector<NamedParameter<T>>& out) {
  out.push_back({prefix + "weight", &weight_});
  out.push_back({prefix + "bias", &bias_});
}

template <typename T>
void BatchNorm<T>::collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

// ----------------------------------------------------------------- PReLU

template <typename T>
PReLU<T>::PReLU(int channels, T init) : weight_(1, channels, 1, 1) {
  weight_.value.fill(init);
}

template <typename T>
Tensor<T> PReLU<T>::forward(const Tensor<T>& x, Mode mode) {
  check_channels(x.c(), weight_.value.c(), "PReLU");
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  Tensor<T> y(x.shape());
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const T a = weight_.value[c];
      const T* src = x.sample(i) + c * hw;
      T* dst = y.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) dst[k] = src[k] > 0 ? src[k] : a * src[k];
    }
  }
  if (mode == Mode::Train) input_ = x;
  return y;
}

template <typename T>
Tensor<T> PReLU<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw Error("PReLU::backward called without a training forward pass");
  const std::size_t hw = static_cast<std::size_t>(input_.h()) * input_.w();
  Tensor<T> dx(input_.shape());
  for (int i = 0; i < input_.n(); ++i) {
    for (int c = 0; c < input_.c(); ++c) {
      const T a = weight_.value[c];
      const T* src = input_.sample(i) + c * hw;
      const T* g = grad_out.sample(i) + c * hw;
      T* d = dx.sample(i) + c * hw;
      T da = 0;
      for (std::size_t k = 0; k < hw; ++k) {
        if (src[k] > 0) {
          d[k] = g[k];
        } else {
          d[k] = a * g[k];
          da += g[k] * src[k];
        }
      }
      weight_.grad[c] += da;
    }
  }
  return dx;
}

template <typename T>
void PReLU<T>::collect_parameters(const std::string& prefix,
                                  std::vector<NamedParameter<T>>& out) {
  out.push_back({prefix + "weight", &weight_});
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features, Rng& rng)
    : in_(in_features), out_(out_features), weight_(out_features, in_features, 1, 1) {
  normal_init(weight_.value, std::sqrt(1.0 / in_features), rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode mode) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw ShapeError("Linear: expected " + std::to_string(in_) + " input features, got " +
                     std::to_string(x.sample_size()) + " from " + x.shape_string());
  }
  Tensor<T> y(x.n(), out_, 1, 1);
  MapConstMat<T> xm(x.data(), x.n(), in_);
  MapConstMat<T> wm(weight_.value.data(), out_, in_);
  MapMat<T> ym(y.data(), x.n(), out_);
  ym.noalias() = xm * wm.transpose();
  if (mode == Mode::Train) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw Error("Linear::backward called without a training forward pass");
  const int n = input_.n();
  Tensor<T> dx(input_.shape());
  MapConstMat<T> xm(input_.data(), n, in_);
  MapConstMat<T> gm(grad_out.data(), n, out_);
  MapConstMat<T> wm(weight_.value.data(), out_, in_);
  MapMat<T> dwm(weight_.grad.data(), out_, in_);
  MapMat<T> dxm(dx.data(), n, in_);
  dwm.noalias() += gm.transpose() * xm;
  dxm.noalias() = gm * wm;
  return dx;
}

template <typename T>
void Linear<T>::collect_parameters(const std::string& prefix,
                                   std::vector<NamedParameter<T>>& out) {
  out.push_back({prefix + "weight", &weight_});
}

// ------------------------------------------------------------ Sequential

template <typename T>
Sequential<T>& Sequential<T>::add(std::string name, std::unique_ptr<Module<T>> module) {
  modules_.emplace_back(std::move(name), std::move(module));
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  if (modules_.empty()) return x;
  Tensor<T> cur = modules_.front().second->forward(x, mode);
  for (std::size_t i = 1; i < modules_.size(); ++i) cur = modules_[i].second->forward(cur, mode);
  return cur;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = modules_.rbegin(); it != modules_.rend(); ++it) g = it->second->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_parameters(const std::string& prefix,
                                       std::vector<NamedParameter<T>>& out) {
  for (auto& [name, m] : modules_) m->collect_parameters(prefix + name + ".", out);
}

template <typename T>
void Sequential<T>::collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
  for (auto& [name, m] : modules_) m->collect_buffers(prefix + name + ".", out);
}

// -------------------------------------------------------------- Residual

template <typename T>
Residual<T>::Residual(std::unique_ptr<Module<T>> body, std::unique_ptr<Module<T>> shortcut)
    : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

template <typename T>
Tensor<T> Residual<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = body_->forward(x, mode);
  Tensor<T> s = shortcut_ ? shortcut_->forward(x, mode) : x;
  if (!y.same_shape(s)) {
    throw ShapeError("Residual: body " + y.shape_string() + " and shortcut " + s.shape_string() +
                     " disagree");
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s[i];
  return y;
}

template <typename T>
Tensor<T> Residual<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = body_->backward(grad_out);
  Tensor<T> ds = shortcut_ ? shortcut_->backward(grad_out) : grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  return dx;
}

template <typename T>
void Residual<T>::collect_parameters(const std::string& prefix,
                                     std::vector<NamedParameter<T>>& out) {
  body_->collect_parameters(prefix + "body.", out);
  if (shortcut_) shortcut_->collect_parameters(prefix + "shortcut.", out);
}

template <typename T>
void Residual<T>::collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
  body_->collect_buffers(prefix + "body.", out);
  if (shortcut_) shortcut_->collect_buffers(prefix + "shortcut.", out);
}

#define FACELAB_INSTANTIATE(T)  \
  template class Conv2d<T>;     \
  template class BatchNorm<T>;  \
  template class PReLU<T>;      \
  template class Linear<T>;     \
  template class Sequential<T>; \
  template class Residual<T>;

FACELAB_INSTANTIATE(float)
FACELAB_INSTANTIATE(double)

#undef FACELAB_INSTANTIATE

}  // namespace facelab::nn
