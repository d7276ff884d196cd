#pragma once

// Pieces shared by the conventional and semi-siamese trainers. Not
// installed.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "facelab/backbone.hpp"
#include "facelab/checkpoint.hpp"
#include "facelab/preprocess.hpp"
#include "facelab/trainer.hpp"
#include "json_util.hpp"

namespace facelab::detail {

// Loads, augments and normalises the listed samples into a B x 3 x H x W
// batch with per-sample draws from (seed, "augment", epoch, index).
Tensor<float> load_batch(const DatasetManifest& manifest, std::span<const std::size_t> indices,
                         const TransformSpec& transform, const BackboneSpec& spec,
                         std::uint64_t seed, int epoch);

class MetricLog {
 public:
  explicit MetricLog(const std::filesystem::path& out_dir);
  void write(const EpochLog& log);

 private:
  std::filesystem::path path_;
};

json epoch_log_to_json(const EpochLog& log);

std::vector<float> flatten(const HeadMatrix<float>& m);
void add_buffers(Checkpoint& ckpt, const std::string& prefix, const std::vector<Tensor<float>>& buffers);
std::vector<Tensor<float>> read_buffers(const Checkpoint& ckpt, const std::string& prefix,
                                        std::span<const nn::NamedParameter<float>> params);

using Clock = std::chrono::steady_clock;
double elapsed_ms(Clock::time_point start);

}  // namespace facelab::detail
