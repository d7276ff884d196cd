#include "facelab/backbone.hpp"

#include <cmath>

#include "facelab/error.hpp"

namespace facelab {

using nn::BatchNorm;
using nn::Conv2d;
using nn::ConvOptions;
using nn::Linear;
using nn::Module;
using nn::PReLU;
using nn::Residual;
using nn::Sequential;

int scaled_channels(int base, double width) {
  return std::max(4, static_cast<int>(std::lround(base * width)));
}

std::vector<int> resnet_ir_units(int depth) {
  switch (depth) {
    case 8: return {1, 1, 1, 1};
    case 20: return {2, 2, 3, 2};
    case 50: return {3, 4, 14, 3};
    default:
      throw ValueError("resnet_ir: unsupported depth " + std::to_string(depth) +
                       " (supported: 8, 20, 50)");
  }
}

BackboneSpec resolve_backbone_spec(BackboneSpec spec) {
  if (spec.depth < 0) {
    if (spec.name == "mobileface_mini") spec.depth = 2;
    else if (spec.name == "resnet_ir") spec.depth = 20;
    else spec.depth = 0;
  }
  return spec;
}

void validate_backbone_spec(const BackboneSpec& spec) {
  if (spec.embedding_dim < 2) throw ValueError("backbone: embedding_dim must be >= 2");
  if (!(spec.width > 0.0)) throw ValueError("backbone: width multiplier must be > 0");
  if (spec.input_height <= 0 || spec.input_width <= 0) {
    throw ShapeError("backbone: input size must be positive");
  }
}

namespace {

// Both built-in architectures downsample by 16 in four stride-2 stages.
void require_stride16_input(const BackboneSpec& spec) {
  if (spec.input_height < 16 || spec.input_width < 16 || spec.input_height % 16 != 0 ||
      spec.input_width % 16 != 0) {
    throw ShapeError(spec.name + ": input size " + std::to_string(spec.input_height) + "x" +
                     std::to_string(spec.input_width) +
                     " is incompatible (height and width must be positive multiples of 16)");
  }
}

template <typename T>
std::unique_ptr<Module<T>> conv_bn(int in, int out, int k, int stride, int pad, int groups,
                                   bool prelu, Rng& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->template emplace<Conv2d<T>>("conv", ConvOptions{in, out, k, k, stride, pad, groups}, rng);
  seq->template emplace<BatchNorm<T>>("bn", out);
  if (prelu) seq->template emplace<PReLU<T>>("prelu", out);
  return seq;
}

// Inverted residual: 1x1 expand, 3x3 depthwise (stride), 1x1 linear project.
template <typename T>
std::unique_ptr<Module<T>> bottleneck(int in, int out, int stride, int expansion, Rng& rng) {
  const int mid = in * expansion;
  auto body = std::make_unique<Sequential<T>>();
  body->add("expand", conv_bn<T>(in, mid, 1, 1, 0, 1, true, rng));
  body->add("dw", conv_bn<T>(mid, mid, 3, stride, 1, mid, true, rng));
  body->add("project", conv_bn<T>(mid, out, 1, 1, 0, 1, false, rng));
  if (stride == 1 && in == out) return std::make_unique<Residual<T>>(std::move(body));
  return body;
}

// Scaled MobileFaceNet: stem conv (s2), depthwise conv, three bottleneck
// stages (each: one s2 block plus `depth` residual blocks), 1x1 conv to
// 512*w channels, global depthwise conv, then linear -> BN embedding.
template <typename T>
std::unique_ptr<Module<T>> build_mobileface_mini(const BackboneSpec& spec, Rng& rng) {
  require_stride16_input(spec);
  if (spec.depth < 0) throw ValueError("mobileface_mini: depth must be >= 0");
  const int c1 = scaled_channels(64, spec.width);
  const int c2 = scaled_channels(128, spec.width);
  const int c3 = scaled_channels(512, spec.width);
  constexpr int kExpansion = 2;
  auto net = std::make_unique<Sequential<T>>();
  net->add("stem", conv_bn<T>(3, c1, 3, 2, 1, 1, true, rng));
  net->add("stem_dw", conv_bn<T>(c1, c1, 3, 1, 1, c1, true, rng));
  const int stage_in[3] = {c1, c1, c2};
  const int stage_out[3] = {c1, c2, c2};
  for (int s = 0; s < 3; ++s) {
    auto stage = std::make_unique<Sequential<T>>();
    stage->add("down", bottleneck<T>(stage_in[s], stage_out[s], 2, kExpansion, rng));
    for (int b = 0; b < spec.depth; ++b) {
      stage->add("res" + std::to_string(b),
                 bottleneck<T>(stage_out[s], stage_out[s], 1, kExpansion, rng));
    }
    net->add("stage" + std::to_string(s + 1), std::move(stage));
  }
  net->add("conv_sep", conv_bn<T>(c2, c3, 1, 1, 0, 1, true, rng));
  const int fh = spec.input_height / 16;
  const int fw = spec.input_width / 16;
  {
    auto gd = std::make_unique<Sequential<T>>();
    gd->template emplace<Conv2d<T>>("conv", ConvOptions{c3, c3, fh, fw, 1, 0, c3}, rng);
    gd->template emplace<BatchNorm<T>>("bn", c3);
    net->add("gdconv", std::move(gd));
  }
  net->template emplace<Linear<T>>("embedding", c3, spec.embedding_dim, rng);
  net->template emplace<BatchNorm<T>>("embedding_bn", spec.embedding_dim);
  return net;
}

// Improved residual unit: BN-conv3x3-BN-PReLU-conv3x3(stride)-BN with a
// 1x1 conv + BN projection shortcut when shape changes.
template <typename T>
std::unique_ptr<Module<T>> ir_unit(int in, int out, int stride, Rng& rng) {
  auto body = std::make_unique<Sequential<T>>();
  body->template emplace<BatchNorm<T>>("bn0", in);
  body->template emplace<Conv2d<T>>("conv1", ConvOptions{in, out, 3, 3, 1, 1, 1}, rng);
  body->template emplace<BatchNorm<T>>("bn1", out);
  body->template emplace<PReLU<T>>("prelu1", out);
  body->template emplace<Conv2d<T>>("conv2", ConvOptions{out, out, 3, 3, stride, 1, 1}, rng);
  body->template emplace<BatchNorm<T>>("bn2", out);
  std::unique_ptr<Module<T>> shortcut;
  if (stride != 1 || in != out) shortcut = conv_bn<T>(in, out, 1, stride, 0, 1, false, rng);
  return std::make_unique<Residual<T>>(std::move(body), std::move(shortcut));
}

template <typename T>
std::unique_ptr<Module<T>> build_resnet_ir(const BackboneSpec& spec, Rng& rng) {
  require_stride16_input(spec);
  const auto units = resnet_ir_units(spec.depth);
  const int widths[4] = {scaled_channels(64, spec.width), scaled_channels(128, spec.width),
                         scaled_channels(256, spec.width), scaled_channels(512, spec.width)};
  auto net = std::make_unique<Sequential<T>>();
  net->add("stem", conv_bn<T>(3, widths[0], 3, 1, 1, 1, true, rng));
  int in = widths[0];
  for (int s = 0; s < 4; ++s) {
    auto stage = std::make_unique<Sequential<T>>();
    for (int u = 0; u < units[static_cast<std::size_t>(s)]; ++u) {
      stage->add("unit" + std::to_string(u), ir_unit<T>(in, widths[s], u == 0 ? 2 : 1, rng));
      in = widths[s];
    }
    net->add("stage" + std::to_string(s + 1), std::move(stage));
  }
  const int spatial = (spec.input_height / 16) * (spec.input_width / 16);
  net->template emplace<BatchNorm<T>>("output_bn", in);
  net->template emplace<Linear<T>>("embedding", in * spatial, spec.embedding_dim, rng);
  net->template emplace<BatchNorm<T>>("embedding_bn", spec.embedding_dim);
  return net;
}

}  // namespace

// ------------------------------------------------------------ BackboneNet

template <typename T>
BackboneNet<T>::BackboneNet(BackboneSpec spec, std::unique_ptr<nn::Module<T>> root)
    : spec_(std::move(spec)), root_(std::move(root)) {
  if (!root_) throw ValueError("BackboneNet: null root module");
}

template <typename T>
Tensor<T> BackboneNet<T>::forward(const Tensor<T>& batch, nn::Mode mode) {
  if (batch.n() < 1 || batch.c() != 3 || batch.h() != spec_.input_height ||
      batch.w() != spec_.input_width) {
    throw ShapeError(spec_.name + ": expected input [B,3," + std::to_string(spec_.input_height) +
                     "," + std::to_string(spec_.input_width) + "], got " + batch.shape_string());
  }
  Tensor<T> out = root_->forward(batch, mode);
  if (out.n() != batch.n() || static_cast<int>(out.sample_size()) != spec_.embedding_dim) {
    throw ShapeError(spec_.name + ": network produced " + out.shape_string() +
                     ", expected embedding_dim " + std::to_string(spec_.embedding_dim));
  }
  return out;
}

template <typename T>
Tensor<T> BackboneNet<T>::backward(const Tensor<T>& grad_embeddings) {
  return root_->backward(grad_embeddings);
}

template <typename T>
std::vector<nn::NamedParameter<T>> BackboneNet<T>::parameters() {
  std::vector<nn::NamedParameter<T>> out;
  root_->collect_parameters("", out);
  return out;
}

template <typename T>
std::vector<nn::NamedBuffer<T>> BackboneNet<T>::buffers() {
  std::vector<nn::NamedBuffer<T>> out;
  root_->collect_buffers("", out);
  return out;
}

template <typename T>
std::size_t BackboneNet<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.param->value.size();
  return n;
}

template <typename T>
void BackboneNet<T>::zero_grad() {
  for (auto& p : parameters()) p.param->grad.fill(T(0));
}

template <typename T>
void BackboneNet<T>::copy_state_from(BackboneNet& other) {
  if (!(other.spec_ == spec_)) throw ShapeError("copy_state_from: backbone specs differ");
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].param->value = src[i].param->value;
  auto bdst = buffers();
  auto bsrc = other.buffers();
  for (std::size_t i = 0; i < bdst.size(); ++i) *bdst[i].tensor = *bsrc[i].tensor;
}

// --------------------------------------------------------------- Registry

template <typename T>
BackboneRegistry<T>::BackboneRegistry(bool with_builtins) {
  if (with_builtins) {
    builders_["mobileface_mini"] = build_mobileface_mini<T>;
    builders_["resnet_ir"] = build_resnet_ir<T>;
  }
}

template <typename T>
BackboneRegistry<T>& BackboneRegistry<T>::global() {
  static BackboneRegistry registry(true);
  return registry;
}

template <typename T>
std::vector<std::string> BackboneRegistry<T>::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : builders_) out.push_back(k);
  return out;
}

namespace {
std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}
}  // namespace

template <typename T>
void BackboneRegistry<T>::register_backbone(const std::string& name, BackboneBuilder<T> builder) {
  if (name.empty()) throw ValueError("register_backbone: empty name");
  if (!builder) throw ValueError("register_backbone: null builder for '" + name + "'");
  if (contains(name)) {
    throw ValueError("register_backbone: '" + name + "' is already registered (registered: " +
                     join(names()) + ")");
  }
  builders_.emplace(name, std::move(builder));
}

template <typename T>
std::unique_ptr<BackboneNet<T>> BackboneRegistry<T>::create(const BackboneSpec& raw,
                                                            std::uint64_t seed) const {
  const BackboneSpec spec = resolve_backbone_spec(raw);
  auto it = builders_.find(spec.name);
  if (it == builders_.end()) {
    throw LookupError("unknown backbone '" + spec.name + "' (available: " + join(names()) + ")");
  }
  validate_backbone_spec(spec);
  Rng rng(derive_seed(seed, "init"));
  return std::make_unique<BackboneNet<T>>(spec, it->second(spec, rng));
}

template <typename T>
std::unique_ptr<BackboneNet<T>> create_backbone(const BackboneSpec& spec, std::uint64_t seed) {
  return BackboneRegistry<T>::global().create(spec, seed);
}

template class BackboneNet<float>;
template class BackboneNet<double>;
template class BackboneRegistry<float>;
template class BackboneRegistry<double>;
template std::unique_ptr<BackboneNet<float>> create_backbone<float>(const BackboneSpec&, std::uint64_t);
template std::unique_ptr<BackboneNet<double>> create_backbone<double>(const BackboneSpec&, std::uint64_t);

}  // namespace facelab
