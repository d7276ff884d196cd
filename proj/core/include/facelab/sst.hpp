#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "facelab/backbone.hpp"
#include "facelab/head.hpp"
#include "facelab/optimizer.hpp"
#include "facelab/run_config.hpp"
#include "facelab/trainer.hpp"

namespace facelab {

// Fixed-capacity FIFO of (unit feature, identity label) prototypes. Index 0
// is the oldest entry.
class PrototypeQueue {
 public:
  PrototypeQueue(int capacity, int dim);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  std::size_t size() const { return size_; }
  bool full() const { return size_ == static_cast<std::size_t>(capacity_); }
  std::uint64_t pushes() const { return pushes_; }

  // Evicts the oldest entry when full. Features must be unit-norm (1e-4).
  void push(std::span<const float> feature, int label);
  std::span<const float> feature(std::size_t i) const;
  int label(std::size_t i) const;

 private:
  std::size_t slot(std::size_t i) const { return (head_ + i) % static_cast<std::size_t>(capacity_); }

  int capacity_;
  int dim_;
  std::vector<float> features_;
  std::vector<int> labels_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::uint64_t pushes_ = 0;
};

// g <- alpha * g + (1 - alpha) * p, elementwise.
void ema_update(std::span<float> gallery, std::span<const float> probe, double alpha);
// Applied to every parameter (not buffers); throws ShapeError naming the
// first mismatching parameter.
void ema_update(BackboneNet<float>& gallery, BackboneNet<float>& probe, double alpha);

template <typename T>
struct SstLossResult {
  T loss = 0;
  HeadMatrix<T> grad_probe;  // B x D, w.r.t. the unnormalised probe features
  std::size_t negatives = 0;  // total negative logits over the batch
  double accuracy = 0.0;  // fraction with the positive logit largest
};

// Per item: positive logit s * (cos(p_i, g_i) - m), negatives s * cos(p_i, q)
// over queue entries of other identities; batch-mean cross-entropy with the
// positive as target. `gallery` rows must be unit-norm.
template <typename T>
SstLossResult<T> sst_prototype_loss(const HeadMatrix<T>& probe, const HeadMatrix<T>& gallery,
                                    std::span<const int> labels, const PrototypeQueue& queue,
                                    double scale, double margin, bool compute_grad = true);

struct SstState {
  std::unique_ptr<BackboneNet<float>> probe;
  std::unique_ptr<BackboneNet<float>> gallery;
  PrototypeQueue queue;
  std::vector<Tensor<float>> momentum;
};

// Gallery network initialised as a copy of the probe network.
SstState make_sst_state(const RunConfig& config);

struct SstStepResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// One update on B shallow pairs: first images through the probe network,
// second images through the gallery network (no gradient); loss against the
// current queue, SGD on the probe, EMA on the gallery, then the batch's
// gallery features are enqueued. Throws ValueError on a repeated identity.
SstStepResult sst_step(SstState& state, const Tensor<float>& first, const Tensor<float>& second,
                       std::span<const int> labels, const SstSpec& spec, double lr,
                       const OptimSpec& optim);

// Epochs over the identities with at least two images; each epoch draws
// two images per identity in random order.
TrainResult train_semi_siamese(const RunConfig& config, const DatasetManifest& manifest,
                               const TrainOptions& options = {});

}  // namespace facelab
