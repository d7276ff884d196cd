#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "facelab/backbone.hpp"

namespace facelab {

// Self-describing archive (little-endian):
//   magic "FXZC" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//   u32 tensor_count | per tensor: u16 name_len | name | 4 x u32 dims | f32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<float> data;
};

struct Checkpoint {
  std::string meta_json = "{}";
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  void add(std::string name, const Tensor<float>& t);
  void add(std::string name, std::array<int, 4> shape, std::vector<float> data);
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Stores every parameter and buffer under `prefix`.
void store_backbone(Checkpoint& ckpt, BackboneNet<float>& net, const std::string& prefix = "backbone.");
// Restores values; throws ShapeError naming the tensor with expected and
// found shapes, LookupError for a missing tensor.
void restore_backbone(const Checkpoint& ckpt, BackboneNet<float>& net,
                      const std::string& prefix = "backbone.");

// Backbone spec recorded in the checkpoint metadata.
BackboneSpec checkpoint_backbone_spec(const Checkpoint& ckpt);

// Builds the recorded backbone and loads its weights.
std::unique_ptr<BackboneNet<float>> load_backbone_checkpoint(const std::filesystem::path& path);

}  // namespace facelab
