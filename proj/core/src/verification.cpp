#include <algorithm>
#include <cmath>
#include <numeric>

#include "facelab/error.hpp"
#include "facelab/eval.hpp"
#include "facelab/vector_ops.hpp"

namespace facelab {

ThresholdResult best_threshold(std::span<const double> sims, std::span<const std::uint8_t> same) {
  if (sims.empty()) throw ValueError("best_threshold: no similarities");
  if (sims.size() != same.size()) throw ShapeError("best_threshold: similarity/label length mismatch");
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] < sims[b]; });

  // Candidate c sits below the c-th group of equal values; everything from
  // that group upwards is predicted "same".
  std::size_t total_same = 0;
  for (auto s : same) total_same += s ? 1 : 0;
  const std::size_t n = sims.size();
  // Start: threshold below the minimum, everything predicted same.
  std::size_t correct = total_same;
  std::size_t best_correct = correct;
  double best_t = sims[order.front()] - 1.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && sims[order[j]] == sims[order[i]]) {
      // This value moves below the threshold.
      if (same[order[j]]) {
        --correct;
      } else {
        ++correct;
      }
      ++j;
    }
    const double t = j < n ? (sims[order[i]] + sims[order[j]]) / 2.0 : sims[order.back()] + 1.0;
    if (correct > best_correct) {
      best_correct = correct;
      best_t = t;
    }
    i = j;
  }
  return {best_t, static_cast<double>(best_correct) / static_cast<double>(n)};
}

std::vector<double> pair_similarities(const EmbeddingStore& store, const PairList& pairs) {
  std::vector<double> sims;
  sims.reserve(pairs.entries.size());
  for (const auto& e : pairs.entries) {
    const auto* a = store.find(e.key_a);
    const auto* b = store.find(e.key_b);
    if (!a) throw LookupError("pair key '" + e.key_a + "' not in the embedding store");
    if (!b) throw LookupError("pair key '" + e.key_b + "' not in the embedding store");
    sims.push_back(cosine_similarity(a->vector, b->vector));
  }
  return sims;
}

VerificationReport verify_10fold(const EmbeddingStore& store, const PairList& pairs) {
  const auto sizes = pairs.fold_sizes();
  const auto non_empty = std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; });
  if (non_empty < pairs.fold_count) {
    throw ValueError("verification needs " + std::to_string(pairs.fold_count) +
                     " non-empty folds, found " + std::to_string(non_empty));
  }
  const auto sims = pair_similarities(store, pairs);
  VerificationReport report;
  report.pair_count = pairs.entries.size();
  for (int f = 0; f < pairs.fold_count; ++f) {
    std::vector<double> train_sims;
    std::vector<std::uint8_t> train_same;
    for (std::size_t i = 0; i < sims.size(); ++i) {
      if (pairs.entries[i].fold == f) continue;
      train_sims.push_back(sims[i]);
      train_same.push_back(pairs.entries[i].same_identity ? 1 : 0);
    }
    const double t = best_threshold(train_sims, train_same).threshold;
    std::size_t correct = 0, count = 0;
    for (std::size_t i = 0; i < sims.size(); ++i) {
      if (pairs.entries[i].fold != f) continue;
      ++count;
      if ((sims[i] >= t) == pairs.entries[i].same_identity) ++correct;
    }
    report.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(count));
    report.thresholds.push_back(t);
  }
  const double k = static_cast<double>(report.fold_accuracy.size());
  report.mean = std::accumulate(report.fold_accuracy.begin(), report.fold_accuracy.end(), 0.0) / k;
  double var = 0.0;
  for (double a : report.fold_accuracy) var += (a - report.mean) * (a - report.mean);
  report.std = std::sqrt(var / k);
  return report;
}

}  // namespace facelab
