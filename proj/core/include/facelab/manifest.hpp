#pragma once

#include <filesystem>

#include "facelab/types.hpp"

namespace facelab {

struct ManifestOptions {
  // Check that every image path exists under the root.
  bool check_paths = true;
};

// Line format: image_path<TAB>identity[<TAB>x1,y1;...;x5,y5][<TAB>masked]
// Relative paths resolve against the manifest's directory; blank lines and
// lines starting with '#' are ignored.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              const ManifestOptions& options = {});

// Paths are written as given; the manifest directory becomes the root on load.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

DatasetManifest make_manifest(std::filesystem::path root, std::vector<SampleRecord> samples);

// Mean number of samples per identity (the shallow-data depth statistic).
double images_per_identity(const DatasetManifest& manifest);

}  // namespace facelab
