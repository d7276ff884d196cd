#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "facelab/backbone.hpp"
#include "facelab/head.hpp"
#include "facelab/run_config.hpp"
#include "facelab/types.hpp"

namespace facelab {

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_mean = 0.0;
  double acc = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  // Run directory; checkpoints/ and logs/ are created below it. Empty
  // writes nothing.
  std::filesystem::path out_dir;
  // Continue from a checkpoint written by an earlier run of the same config.
  std::optional<std::filesystem::path> resume;
  // Stop once this many epochs (counted from epoch 0) are complete; -1 runs
  // the whole schedule.
  int stop_after_epochs = -1;
  // Number of leading per-step losses to keep in the result.
  std::size_t record_step_losses = 0;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<BackboneNet<float>> net;
  // Semi-siamese runs only: the moving-average gallery network.
  std::unique_ptr<BackboneNet<float>> gallery_net;
  HeadSpec head_spec;
  ClassWeights<float> head;
  HeadState head_state;
  std::vector<std::string> identities;
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
  int epochs_completed = 0;
  std::filesystem::path last_checkpoint;
};

// Backbone + supervisory head trained with SGD on the manifest's identity
// labels. Data order and augmentation draws are derived from (seed, epoch,
// sample), so a resumed run replays the straight-through run exactly.
TrainResult train_conventional(const RunConfig& config, const DatasetManifest& manifest,
                               const TrainOptions& options = {});

// Dispatches on config.mode.
TrainResult train(const RunConfig& config, const DatasetManifest& manifest,
                  const TrainOptions& options = {});

// checkpoints/epoch_<NNN>.fxzc for a 1-based completed-epoch count.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int epochs_completed);

}  // namespace facelab
