#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facelab/image.hpp"
#include "facelab/maskgen.hpp"
#include "facelab/types.hpp"

namespace facelab {

// Toy face generator. Each identity owns a left-right symmetric UV texture
// (skin tone, blobs, eye and mouth marks); each image renders that texture
// through a jittered hemisphere position map over a noisy background.
struct SyntheticFaceOptions {
  int num_identities = 32;
  int images_per_identity = 20;
  int image_size = 32;
  int uv_size = 64;
  // Identities are named id<first_identity + i>, so disjoint sets can be
  // drawn by offsetting this.
  int first_identity = 0;
  double yaw_jitter = 0.3;  // radians, uniform +/-
  double pitch_jitter = 0.2;
  double roll_jitter = 0.15;
  double center_jitter = 1.0;  // pixels
  double radius_fraction = 0.42;  // face radius relative to image size
  double radius_jitter = 0.03;
  double brightness_jitter = 0.12;
  double pixel_noise = 5.0;  // std-dev on the 0..255 scale
  int blobs = 6;
  std::uint64_t seed = 0;
  bool write_posmaps = true;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path posmap_dir;
};

// Writes images/<identity>/<n>.png, posmaps/images/<identity>/<n>.uvpm and
// manifest.tsv (with 5-point landmarks) under out_dir.
SyntheticDataset generate_synthetic_faces(const std::filesystem::path& out_dir,
                                          const SyntheticFaceOptions& options);

// In-memory pieces of the generator.
UVTexture synthetic_identity_texture(int uv_size, std::uint64_t identity_seed, int blobs);

struct SyntheticSample {
  Image image;
  UVPositionMap posmap;
  Landmarks5 landmarks;
};

SyntheticSample render_synthetic_face(const UVTexture& texture, const SyntheticFaceOptions& options,
                                      std::uint64_t sample_seed);

// UV locations of the five landmarks (eyes, nose tip, mouth corners) on the
// synthetic face layout.
const Landmarks5& synthetic_landmark_uv();

// Keeps `per_identity` randomly chosen samples of each identity (identities
// with fewer are kept whole).
DatasetManifest make_shallow_manifest(const DatasetManifest& manifest, int per_identity,
                                      std::uint64_t seed);

}  // namespace facelab
