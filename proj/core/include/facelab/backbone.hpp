#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "facelab/nn.hpp"

namespace facelab {

struct BackboneSpec {
  std::string name = "mobileface_mini";
  int embedding_dim = 512;
  double width = 1.0;
  // Architecture-specific depth: residual blocks per stage for
  // mobileface_mini (default 2), number of layers {8, 20, 50} for resnet_ir
  // (default 20). Negative selects the architecture default.
  int depth = -1;
  int input_height = 112;
  int input_width = 112;

  bool operator==(const BackboneSpec&) const = default;
};

// A backbone network: images (B x 3 x H x W) to embeddings (B x D x 1 x 1).
template <typename T>
class BackboneNet {
 public:
  BackboneNet(BackboneSpec spec, std::unique_ptr<nn::Module<T>> root);

  const BackboneSpec& spec() const { return spec_; }

  Tensor<T> forward(const Tensor<T>& batch, nn::Mode mode);
  // Input gradient for a gradient on the last forward's output.
  Tensor<T> backward(const Tensor<T>& grad_embeddings);

  std::vector<nn::NamedParameter<T>> parameters();
  std::vector<nn::NamedBuffer<T>> buffers();
  std::size_t parameter_count();
  void zero_grad();

  // Copies parameter values and buffers from a network built from the same
  // spec.
  void copy_state_from(BackboneNet& other);

 private:
  BackboneSpec spec_;
  std::unique_ptr<nn::Module<T>> root_;
};

template <typename T>
using BackboneBuilder = std::function<std::unique_ptr<nn::Module<T>>(const BackboneSpec&, Rng&)>;

// Name -> builder map. The global registry of each scalar type is
// pre-populated with the built-in architectures.
template <typename T>
class BackboneRegistry {
 public:
  explicit BackboneRegistry(bool with_builtins = true);

  static BackboneRegistry& global();

  void register_backbone(const std::string& name, BackboneBuilder<T> builder);
  bool contains(const std::string& name) const { return builders_.count(name) != 0; }
  std::vector<std::string> names() const;

  std::unique_ptr<BackboneNet<T>> create(const BackboneSpec& spec, std::uint64_t seed) const;

 private:
  std::map<std::string, BackboneBuilder<T>> builders_;
};

// Seeded construction through the global registry.
template <typename T = float>
std::unique_ptr<BackboneNet<T>> create_backbone(const BackboneSpec& spec, std::uint64_t seed);

// Fills architecture defaults (depth) and validates dimension constraints.
BackboneSpec resolve_backbone_spec(BackboneSpec spec);
void validate_backbone_spec(const BackboneSpec& spec);

// Channel count after applying a width multiplier (at least 4).
int scaled_channels(int base, double width);

// Residual units per stage for resnet_ir of the given depth.
std::vector<int> resnet_ir_units(int depth);

}  // namespace facelab
