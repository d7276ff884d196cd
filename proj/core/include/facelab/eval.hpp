#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "facelab/embedding_store.hpp"
#include "facelab/pairs.hpp"

namespace facelab {

struct ThresholdResult {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Maximises the accuracy of predicting "same" as sim >= threshold over the
// midpoints of consecutive sorted unique similarities plus one sentinel
// below the minimum and one above the maximum. Ties go to the smallest
// threshold.
ThresholdResult best_threshold(std::span<const double> similarities, std::span<const std::uint8_t> same);

struct VerificationReport {
  std::string method;
  std::string benchmark;
  std::vector<double> fold_accuracy;
  std::vector<double> thresholds;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over folds
  std::size_t pair_count = 0;

  bool operator==(const VerificationReport&) const = default;
};

// Cosine similarity of every pair; throws LookupError for a missing key.
std::vector<double> pair_similarities(const EmbeddingStore& store, const PairList& pairs);

// For each fold: threshold fitted on the other folds, accuracy measured on
// this one. Throws ValueError when fewer than K folds are non-empty.
VerificationReport verify_10fold(const EmbeddingStore& store, const PairList& pairs);

struct CMCReport {
  std::string method;
  std::string benchmark;
  std::string protocol = "identify";
  std::vector<double> rank_acc;  // rank_acc[k-1] = rank-k accuracy
  std::size_t probe_count = 0;
  std::size_t gallery_count = 0;
  std::size_t distractor_count = 0;

  int kmax() const { return static_cast<int>(rank_acc.size()); }
  bool operator==(const CMCReport&) const = default;
};

struct IdentifyOptions {
  int kmax = 10;
  // Candidates (and probes) processed per similarity block; bounds the
  // working set to block_size x block_size similarities plus block_size
  // converted candidate vectors.
  std::size_t block_size = 4096;
};

// Ranks gallery then distractor records by cosine similarity to each probe
// (descending; ties keep candidate order). Identities are the record ids.
CMCReport identify_rank_k(const EmbeddingStore& probes, const EmbeddingStore& gallery,
                          const EmbeddingStore& distractors, const IdentifyOptions& options);

// Same ranking with probes built from masked images; tagged as the masked
// protocol.
CMCReport evaluate_masked(const EmbeddingStore& masked_probes, const EmbeddingStore& gallery,
                          const EmbeddingStore& distractors, const IdentifyOptions& options);

}  // namespace facelab
