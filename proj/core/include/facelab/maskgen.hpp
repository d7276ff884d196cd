#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facelab/image.hpp"
#include "facelab/types.hpp"

namespace facelab {

// Per-texel image-space coordinates (x, y in pixels, z depth with larger
// values nearer the camera) plus a validity plane. Planes are row-major
// height x width.
struct UVPositionMap {
  int height = 0;
  int width = 0;
  std::vector<float> x, y, z;
  std::vector<std::uint8_t> valid;

  UVPositionMap() = default;
  UVPositionMap(int h, int w);

  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
  std::size_t valid_count() const;
  bool operator==(const UVPositionMap&) const = default;
};

// RGB appearance per texel on the 0..255 scale.
using UVTexture = ImageF;

struct MaskTemplate {
  std::string name;
  UVTexture texture;
  std::vector<std::uint8_t> region;  // height x width, 1 = mask texel
};

inline constexpr int kDefaultUVSize = 256;
// Valid texels may fall this many pixels outside the image.
inline constexpr double kPosmapMargin = 2.0;
inline constexpr int kDefaultFeather = 2;

// File: magic "UVPM" | u32 height | u32 width | f32 x plane | f32 y plane |
// f32 z plane | u8 validity plane (little-endian).
void write_posmap(const std::filesystem::path& path, const UVPositionMap& posmap);
UVPositionMap read_posmap(const std::filesystem::path& path);

enum class SyntheticSurface { Plane, Hemisphere, Saddle };

struct SyntheticPosmapParams {
  SyntheticSurface surface = SyntheticSurface::Hemisphere;
  int uv_size = kDefaultUVSize;
  double center_x = 56.0;
  double center_y = 56.0;
  double radius = 40.0;
  double yaw = 0.0;  // radians, about the vertical axis
  double pitch = 0.0;
  double roll = 0.0;
  double depth = 0.0;  // constant z offset
};

// UV-disk parameterised surfaces projected orthographically into the image.
UVPositionMap make_synthetic_posmap(const SyntheticPosmapParams& params);

struct SurfacePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool valid = false;
};

// Image-space position of the surface point at UV coordinates (u, v) in
// [-1, 1]^2 (u to the right, v downwards).
SurfacePoint synthetic_surface_point(const SyntheticPosmapParams& params, double u, double v);

// Each valid texel samples the image bilinearly at its (x, y); invalid
// texels are zero. Throws ShapeError if a valid texel lies outside the image
// by more than kPosmapMargin.
UVTexture image_to_uv_texture(const Image& image, const UVPositionMap& posmap);

// Blend weight: mask region smoothed by a (2F+1)^2 box filter, with zero
// padding; F = 0 returns the binary region.
std::vector<float> feather_weights(const MaskTemplate& tmpl, int feather);

// w·template + (1-w)·face; texels with w == 0 (w == 1) copy the face (mask)
// exactly.
UVTexture blend_uv(const UVTexture& face, const MaskTemplate& tmpl, int feather = kDefaultFeather);

struct RenderStats {
  std::size_t triangles_drawn = 0;
  std::size_t degenerate_skipped = 0;
  std::size_t pixels_covered = 0;
  std::vector<std::uint8_t> coverage;  // width x height, 1 = rendered
};

// Renders the texture through the UV grid mesh (two triangles per texel
// quad with all corners valid) with a z-buffer; covered pixels take the
// barycentric-interpolated texture, others keep the base image.
Image render_uv_texture(const UVTexture& texture, const UVPositionMap& posmap, const Image& base,
                        RenderStats* stats = nullptr);

// Single-image masking: texture extraction, UV blend, render.
Image apply_virtual_mask(const Image& image, const UVPositionMap& posmap, const MaskTemplate& tmpl,
                         int feather = kDefaultFeather, RenderStats* stats = nullptr);

// Template library: a directory of <name>.json descriptors
// {"name": ..., "texture": file, "region": file}; region pixels != 0 mark
// the mask.
std::vector<MaskTemplate> load_templates(const std::filesystem::path& dir);
void write_template(const std::filesystem::path& dir, const MaskTemplate& tmpl);

// Built-in synthetic templates: "solid" and "patterned", covering the lower
// face of the UV layout used by make_synthetic_posmap.
MaskTemplate make_solid_template(int uv_size = kDefaultUVSize);
MaskTemplate make_patterned_template(int uv_size = kDefaultUVSize);

struct MaskSynthesisOptions {
  std::uint64_t seed = 0;
  int feather = kDefaultFeather;
};

struct MaskSynthesisResult {
  DatasetManifest manifest;  // originals followed by masked copies
  std::size_t masked = 0;
  std::vector<std::string> skipped;  // image keys without a position map
  std::vector<std::string> template_choices;  // per masked copy
};

// Posmap of sample "a/b.png" is <posmap_dir>/a/b.uvpm. Masked copies are
// written to <out_dir>/masked/<path stem>.png and a manifest listing the
// originals (absolute paths) and the copies (masked, same identity) is saved
// as <out_dir>/manifest.tsv. The template of each sample is drawn from a
// stream seeded by (seed, image key).
MaskSynthesisResult synthesize_masked_dataset(const DatasetManifest& manifest,
                                              const std::filesystem::path& posmap_dir,
                                              const std::vector<MaskTemplate>& templates,
                                              const std::filesystem::path& out_dir,
                                              const MaskSynthesisOptions& options = {});

std::filesystem::path posmap_path_for(const std::filesystem::path& posmap_dir,
                                      const std::string& image_key);

}  // namespace facelab
