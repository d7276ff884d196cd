#pragma once

#include <span>
#include <string>
#include <vector>

#include "facelab/backbone.hpp"
#include "facelab/embedding_store.hpp"
#include "facelab/image.hpp"
#include "facelab/preprocess.hpp"
#include "facelab/types.hpp"

namespace facelab {

struct ExtractOptions {
  int batch_size = 64;
  // Sum the features of each image and its mirror before normalising.
  bool flip_fusion = false;
  // Unreadable images abort the run instead of being skipped and reported.
  bool abort_on_error = false;
};

struct ExtractResult {
  EmbeddingStore store;
  std::vector<std::string> skipped;
};

// Eval-mode unit-norm embeddings of already aligned images. Images whose
// size differs from the backbone input are resized first.
std::vector<std::vector<float>> embed_images(BackboneNet<float>& net, std::span<const Image> images,
                                             const TransformSpec& transform, bool flip_fusion,
                                             int batch_size);

// One record per readable sample: id = identity, image_key = manifest path.
ExtractResult extract_features(BackboneNet<float>& net, const DatasetManifest& manifest,
                               const TransformSpec& transform, const ExtractOptions& options);

}  // namespace facelab
