#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facelab/types.hpp"

namespace facelab {

class EmbeddingStore;

struct PairEntry {
  std::string key_a;
  std::string key_b;
  bool same_identity = false;
  int fold = 0;

  bool operator==(const PairEntry&) const = default;
};

struct PairList {
  std::vector<PairEntry> entries;
  int fold_count = 10;

  std::vector<std::size_t> fold_sizes() const;
  bool operator==(const PairList&) const = default;
};

// Consecutive blocks in line order: block f holds floor(N/K) entries plus
// one more when f < N mod K.
void assign_folds(PairList& pairs, int fold_count);

// File: key_a<TAB>key_b<TAB>{0|1} per line (blank and '#' lines skipped).
// With `known`, every key must be present in that store.
PairList parse_pairs(const std::filesystem::path& path, int fold_count = 10,
                     const EmbeddingStore* known = nullptr);
void write_pairs(const std::filesystem::path& path, const PairList& pairs);

// Balanced same/different pairs drawn from the manifest, alternating labels
// so every fold sees both classes. Keys are the manifest image paths.
PairList generate_pairs(const DatasetManifest& manifest, int pair_count, std::uint64_t seed,
                        int fold_count = 10);

}  // namespace facelab
