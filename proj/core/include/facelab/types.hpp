#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace facelab {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

using Landmarks5 = std::array<Point2, 5>;

// Identity-labelled feature vector; the currency between training,
// evaluation and the pipeline.
struct EmbeddingRecord {
  std::string id;
  std::string image_key;
  std::vector<float> vector;
  bool normalized = false;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct SampleRecord {
  std::string image_path;
  std::string identity;
  std::optional<Landmarks5> landmarks;
  bool masked = false;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<SampleRecord> samples;
  int num_identities = 0;

  // Sorted distinct identity names; label i of a sample is the position of
  // its identity in this list.
  std::vector<std::string> identities() const;
  std::vector<int> labels() const;
  std::filesystem::path resolve(const SampleRecord& s) const;
};

}  // namespace facelab
