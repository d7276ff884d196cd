#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "facelab/backbone.hpp"
#include "facelab/image.hpp"
#include "facelab/preprocess.hpp"
#include "facelab/types.hpp"

namespace facelab {

struct PipelineConfig {
  std::filesystem::path checkpoint;
  // Rescaled to the backbone input size at load time.
  AlignmentTemplate alignment = AlignmentTemplate::standard_112();
  TransformSpec normalization = eval_transform(TransformSpec{});
  double threshold = 0.5;
  bool flip_fusion = false;
  // When positive, the checkpoint must produce embeddings of this size.
  int expected_embedding_dim = 0;
};

void validate_pipeline_config(const PipelineConfig& config);

// Landmarks may lie outside the box by this fraction of the box size.
inline constexpr double kLandmarkBoxMargin = 0.25;

struct Detection {
  std::array<double, 4> box{0, 0, 0, 0};  // x, y, w, h
  Landmarks5 landmarks;

  bool operator==(const Detection&) const = default;
};

// Throws ValueError for a non-positive box or landmarks outside the
// expanded box.
void validate_detection(const Detection& detection);

// Sidecar: [{"box": [x, y, w, h], "landmarks": [[x, y] x 5]}, ...]
std::vector<Detection> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, std::span<const Detection> detections);
// <image without extension>.json
std::filesystem::path annotation_path_for(const std::filesystem::path& image_path);

struct RecognitionResult {
  bool ok = false;
  std::string error;
  Image crop;
  std::vector<float> embedding;
};

class FacePipeline {
 public:
  FacePipeline(PipelineConfig config, std::unique_ptr<BackboneNet<float>> net);

  const PipelineConfig& config() const { return config_; }
  const BackboneSpec& backbone_spec() const { return net_->spec(); }
  const AlignmentTemplate& alignment() const { return alignment_; }

  // One result per detection, in order. A failing face is reported in its
  // result without affecting the others.
  std::vector<RecognitionResult> process_image(const Image& image, std::span<const Detection> detections) const;

  // Embedding of an already aligned crop.
  std::vector<float> embed_crop(const Image& crop) const;

 private:
  PipelineConfig config_;
  AlignmentTemplate alignment_;
  std::unique_ptr<BackboneNet<float>> net_;
  mutable std::mutex mutex_;
};

// Reads the checkpoint and builds the recorded backbone. Throws IoError for
// a missing file and ShapeError (expected vs found) on a dimension mismatch.
std::unique_ptr<FacePipeline> load_models(const PipelineConfig& config);

struct Comparison {
  double similarity = 0.0;
  bool same_identity = false;
};

// Dot product of unit vectors; ValueError for non-normalised inputs.
Comparison compare(std::span<const float> e1, std::span<const float> e2, double threshold);

}  // namespace facelab
