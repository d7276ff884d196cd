#pragma once

#include <cstdint>
#include <string>

#include "facelab/backbone.hpp"
#include "facelab/head.hpp"
#include "facelab/optimizer.hpp"
#include "facelab/preprocess.hpp"
#include "facelab/schedule.hpp"

namespace facelab {

enum class TrainMode { Conventional, SemiSiamese };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

// Semi-siamese training: a gradient-updated probe network, a moving-average
// gallery network and a FIFO prototype queue standing in for class weights.
struct SstSpec {
  double gallery_momentum = 0.999;
  int queue_capacity = 2048;
  double scale = 32.0;
  double margin = 0.35;

  bool operator==(const SstSpec&) const = default;
};

struct RunConfig {
  BackboneSpec backbone;
  // num_classes is taken from the training manifest, dim from the backbone.
  HeadSpec head = default_head_spec(HeadVariant::AmSoftmax, 2, 512);
  TrainSchedule schedule;
  OptimSpec optim;
  TransformSpec transform;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Conventional;
  SstSpec sst;

  int batch_size() const { return schedule.batch_size; }
  int embedding_dim() const { return backbone.embedding_dim; }

  bool operator==(const RunConfig&) const = default;
};

// batch_size >= 1, embedding_dim >= 2, registered backbone, valid sub-specs,
// and the training transform producing the backbone's input size.
void validate_run_config(const RunConfig& config);

}  // namespace facelab
