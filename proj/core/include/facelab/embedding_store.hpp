#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "facelab/types.hpp"

namespace facelab {

// Binary layout (little-endian):
//   magic "FXZE" | u32 version | u64 count | u32 dim
//   per record: u16 id_len | id | u16 key_len | key | dim x f32
inline constexpr std::uint32_t kEmbeddingStoreVersion = 1;

// In-memory collection of records with a uniform dimension and a key index.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::vector<EmbeddingRecord> records);

  int dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

  void add(EmbeddingRecord record);
  const EmbeddingRecord* find(const std::string& image_key) const;
  const EmbeddingRecord& at(const std::string& image_key) const;
  bool contains(const std::string& image_key) const { return find(image_key) != nullptr; }

  bool operator==(const EmbeddingStore& other) const { return records_ == other.records_; }

 private:
  int dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

void write_embedding_store(std::span<const EmbeddingRecord> records,
                           const std::filesystem::path& path);
void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path);

// Validates magic, version, truncation and record dimensions. The
// `normalized` flag of each record is recomputed from its norm.
EmbeddingStore read_embedding_store(const std::filesystem::path& path);

// Feature-concatenation ensemble of two stores with identical keys; the
// concatenated vectors are renormalised.
EmbeddingStore concat_stores(const EmbeddingStore& a, const EmbeddingStore& b);

}  // namespace facelab
