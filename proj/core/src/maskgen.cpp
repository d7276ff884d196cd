#include "facelab/maskgen.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "facelab/error.hpp"
#include "facelab/manifest.hpp"
#include "facelab/random.hpp"
#include "json_util.hpp"

namespace facelab {

static_assert(std::endian::native == std::endian::little, "posmap I/O assumes little-endian");

UVPositionMap::UVPositionMap(int h, int w)
    : height(h),
      width(w),
      x(static_cast<std::size_t>(h) * w, 0.0f),
      y(static_cast<std::size_t>(h) * w, 0.0f),
      z(static_cast<std::size_t>(h) * w, 0.0f),
      valid(static_cast<std::size_t>(h) * w, 0) {}

std::size_t UVPositionMap::valid_count() const {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

// ------------------------------------------------------------------ I/O

namespace {

constexpr char kPosmapMagic[4] = {'U', 'V', 'P', 'M'};

void write_plane(std::ofstream& out, const std::vector<float>& plane) {
  out.write(reinterpret_cast<const char*>(plane.data()),
            static_cast<std::streamsize>(plane.size() * sizeof(float)));
}

}  // namespace

void write_posmap(const std::filesystem::path& path, const UVPositionMap& pm) {
  const std::size_t n = static_cast<std::size_t>(pm.height) * pm.width;
  if (pm.x.size() != n || pm.y.size() != n || pm.z.size() != n || pm.valid.size() != n) {
    throw ShapeError("write_posmap: plane sizes disagree with " + std::to_string(pm.height) + "x" +
                     std::to_string(pm.width));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write posmap " + path.string());
  out.write(kPosmapMagic, 4);
  const std::uint32_t h = static_cast<std::uint32_t>(pm.height);
  const std::uint32_t w = static_cast<std::uint32_t>(pm.width);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  write_plane(out, pm.x);
  write_plane(out, pm.y);
  write_plane(out, pm.z);
  out.write(reinterpret_cast<const char*>(pm.valid.data()), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path.string());
}

UVPositionMap read_posmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open posmap " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPosmapMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic (not a UVPM position map)");
  }
  std::uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  if (!in || h == 0 || w == 0 || h > 8192 || w > 8192) {
    throw FormatError(path.string() + ": bad posmap dimensions");
  }
  UVPositionMap pm(static_cast<int>(h), static_cast<int>(w));
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (auto* plane : {&pm.x, &pm.y, &pm.z}) {
    in.read(reinterpret_cast<char*>(plane->data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  in.read(reinterpret_cast<char*>(pm.valid.data()), static_cast<std::streamsize>(n));
  if (!in) throw FormatError(path.string() + ": truncated posmap");
  return pm;
}

// ------------------------------------------------------- synthetic maps

SurfacePoint synthetic_surface_point(const SyntheticPosmapParams& p, double u, double v) {
  const double rho2 = u * u + v * v;
  double X = p.radius * u, Y = p.radius * v, Z = 0.0;
  SurfacePoint out;
  switch (p.surface) {
    case SyntheticSurface::Plane:
      break;
    case SyntheticSurface::Hemisphere:
      if (rho2 > 1.0) return out;
      Z = p.radius * std::sqrt(1.0 - rho2);
      break;
    case SyntheticSurface::Saddle:
      if (rho2 > 1.0) return out;
      Z = 0.3 * p.radius * (u * u - v * v);
      break;
  }
  // yaw about Y, then pitch about X, then roll about Z.
  const double cy = std::cos(p.yaw), sy = std::sin(p.yaw);
  const double cp = std::cos(p.pitch), sp = std::sin(p.pitch);
  const double cr = std::cos(p.roll), sr = std::sin(p.roll);
  const double x1 = cy * X + sy * Z, z1 = -sy * X + cy * Z, y1 = Y;
  const double y2 = cp * y1 - sp * z1, z2 = sp * y1 + cp * z1, x2 = x1;
  const double x3 = cr * x2 - sr * y2, y3 = sr * x2 + cr * y2;
  out.x = p.center_x + x3;
  out.y = p.center_y + y3;
  out.z = z2 + p.depth;
  out.valid = true;
  return out;
}

UVPositionMap make_synthetic_posmap(const SyntheticPosmapParams& p) {
  if (p.uv_size < 2) throw ValueError("make_synthetic_posmap: uv_size must be >= 2");
  UVPositionMap pm(p.uv_size, p.uv_size);
  for (int r = 0; r < p.uv_size; ++r) {
    for (int c = 0; c < p.uv_size; ++c) {
      const double u = (c + 0.5) / p.uv_size * 2.0 - 1.0;
      const double v = (r + 0.5) / p.uv_size * 2.0 - 1.0;
      const SurfacePoint sp = synthetic_surface_point(p, u, v);
      if (!sp.valid) continue;
      const std::size_t i = pm.index(r, c);
      pm.x[i] = static_cast<float>(sp.x);
      pm.y[i] = static_cast<float>(sp.y);
      pm.z[i] = static_cast<float>(sp.z);
      pm.valid[i] = 1;
    }
  }
  return pm;
}

// ------------------------------------------------------------- texture

UVTexture image_to_uv_texture(const Image& image, const UVPositionMap& pm) {
  if (image.channels != 3) throw ShapeError("image_to_uv_texture: expected an RGB image");
  UVTexture tex(pm.width, pm.height, 3, 0.0f);
  const double lo_x = -kPosmapMargin, hi_x = image.width - 1 + kPosmapMargin;
  const double lo_y = -kPosmapMargin, hi_y = image.height - 1 + kPosmapMargin;
  for (int r = 0; r < pm.height; ++r) {
    for (int c = 0; c < pm.width; ++c) {
      const std::size_t i = pm.index(r, c);
      if (!pm.valid[i]) continue;
      const double x = pm.x[i], y = pm.y[i];
      if (!(x >= lo_x && x <= hi_x && y >= lo_y && y <= hi_y)) {
        throw ShapeError("image_to_uv_texture: texel (" + std::to_string(r) + "," +
                         std::to_string(c) + ") maps to (" + std::to_string(x) + "," +
                         std::to_string(y) + ") outside the " + std::to_string(image.width) +
                         "x" + std::to_string(image.height) + " image");
      }
      sample_bilinear(image, x, y, &tex.pixels[i * 3]);
    }
  }
  return tex;
}

// --------------------------------------------------------------- blend

std::vector<float> feather_weights(const MaskTemplate& tmpl, int feather) {
  const int h = tmpl.texture.height, w = tmpl.texture.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (tmpl.region.size() != n) throw ShapeError("mask template region/texture size mismatch");
  if (feather < 0) throw ValueError("feather must be >= 0");
  std::vector<float> out(n);
  if (feather == 0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = tmpl.region[i] ? 1.0f : 0.0f;
    return out;
  }
  // Separable box filter on integer counts, so zero/one weights are exact.
  std::vector<int> rows(n, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int acc = 0;
      for (int k = std::max(0, c - feather); k <= std::min(w - 1, c + feather); ++k) {
        acc += tmpl.region[static_cast<std::size_t>(r) * w + k] ? 1 : 0;
      }
      rows[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  const int full = (2 * feather + 1) * (2 * feather + 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int acc = 0;
      for (int k = std::max(0, r - feather); k <= std::min(h - 1, r + feather); ++k) {
        acc += rows[static_cast<std::size_t>(k) * w + c];
      }
      out[static_cast<std::size_t>(r) * w + c] = static_cast<float>(acc) / static_cast<float>(full);
    }
  }
  return out;
}

UVTexture blend_uv(const UVTexture& face, const MaskTemplate& tmpl, int feather) {
  if (face.width != tmpl.texture.width || face.height != tmpl.texture.height ||
      face.channels != tmpl.texture.channels) {
    throw ShapeError("blend_uv: face texture " + std::to_string(face.width) + "x" +
                     std::to_string(face.height) + " vs template " +
                     std::to_string(tmpl.texture.width) + "x" + std::to_string(tmpl.texture.height));
  }
  const auto weights = feather_weights(tmpl, feather);
  UVTexture out = face;
  const int ch = face.channels;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const float w = weights[i];
    if (w == 0.0f) continue;
    for (int c = 0; c < ch; ++c) {
      const std::size_t k = i * ch + static_cast<std::size_t>(c);
      out.pixels[k] = w == 1.0f ? tmpl.texture.pixels[k]
                                : w * tmpl.texture.pixels[k] + (1.0f - w) * face.pixels[k];
    }
  }
  return out;
}

// -------------------------------------------------------------- render

Image render_uv_texture(const UVTexture& texture, const UVPositionMap& pm, const Image& base,
                        RenderStats* stats) {
  if (texture.width != pm.width || texture.height != pm.height || texture.channels != 3) {
    throw ShapeError("render: texture and position map sizes differ");
  }
  if (base.channels != 3) throw ShapeError("render: base image must be RGB");
  const int W = base.width, H = base.height;
  std::vector<double> zbuf(static_cast<std::size_t>(W) * H, -std::numeric_limits<double>::infinity());
  std::vector<float> color(static_cast<std::size_t>(W) * H * 3, 0.0f);
  RenderStats local;
  local.coverage.assign(static_cast<std::size_t>(W) * H, 0);

  auto draw = [&](std::size_t i0, std::size_t i1, std::size_t i2) {
    const double x0 = pm.x[i0], y0 = pm.y[i0], x1 = pm.x[i1], y1 = pm.y[i1];
    const double x2 = pm.x[i2], y2 = pm.y[i2];
    const double area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    if (std::abs(area) < 1e-12) {
      ++local.degenerate_skipped;
      return;
    }
    ++local.triangles_drawn;
    const int xmin = std::max(0, static_cast<int>(std::ceil(std::min({x0, x1, x2}))));
    const int xmax = std::min(W - 1, static_cast<int>(std::floor(std::max({x0, x1, x2}))));
    const int ymin = std::max(0, static_cast<int>(std::ceil(std::min({y0, y1, y2}))));
    const int ymax = std::min(H - 1, static_cast<int>(std::floor(std::max({y0, y1, y2}))));
    if (xmin > xmax || ymin > ymax) return;
    const double inv = 1.0 / area;
    constexpr double kEdgeEps = -1e-9;
    for (int py = ymin; py <= ymax; ++py) {
      for (int px = xmin; px <= xmax; ++px) {
        const double w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) * inv;
        const double w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) * inv;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < kEdgeEps || w1 < kEdgeEps || w2 < kEdgeEps) continue;
        const double z = w0 * pm.z[i0] + w1 * pm.z[i1] + w2 * pm.z[i2];
        const std::size_t p = static_cast<std::size_t>(py) * W + px;
        if (!(z > zbuf[p])) continue;
        zbuf[p] = z;
        for (int c = 0; c < 3; ++c) {
          color[p * 3 + static_cast<std::size_t>(c)] = static_cast<float>(
              w0 * texture.pixels[i0 * 3 + static_cast<std::size_t>(c)] +
              w1 * texture.pixels[i1 * 3 + static_cast<std::size_t>(c)] +
              w2 * texture.pixels[i2 * 3 + static_cast<std::size_t>(c)]);
        }
        local.coverage[p] = 1;
      }
    }
  };

  for (int r = 0; r + 1 < pm.height; ++r) {
    for (int c = 0; c + 1 < pm.width; ++c) {
      const std::size_t a = pm.index(r, c), b = pm.index(r, c + 1);
      const std::size_t d = pm.index(r + 1, c), e = pm.index(r + 1, c + 1);
      if (pm.valid[a] && pm.valid[b] && pm.valid[d]) draw(a, b, d);
      if (pm.valid[b] && pm.valid[e] && pm.valid[d]) draw(b, e, d);
    }
  }

  Image out = base;
  for (std::size_t p = 0; p < local.coverage.size(); ++p) {
    if (!local.coverage[p]) continue;
    ++local.pixels_covered;
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[p * 3 + c] =
          static_cast<std::uint8_t>(std::lround(std::clamp(color[p * 3 + c], 0.0f, 255.0f)));
    }
  }
  if (stats) *stats = std::move(local);
  return out;
}

Image apply_virtual_mask(const Image& image, const UVPositionMap& posmap, const MaskTemplate& tmpl,
                         int feather, RenderStats* stats) {
  const UVTexture face = image_to_uv_texture(image, posmap);
  const UVTexture blended = blend_uv(face, tmpl, feather);
  return render_uv_texture(blended, posmap, image, stats);
}

// ------------------------------------------------------------ templates

namespace {

void check_template(const MaskTemplate& t, const std::string& where) {
  if (t.region.size() != static_cast<std::size_t>(t.texture.width) * t.texture.height) {
    throw ShapeError(where + ": region size differs from texture size");
  }
  if (std::none_of(t.region.begin(), t.region.end(), [](auto v) { return v != 0; })) {
    throw ValueError(where + ": mask region is empty");
  }
}

// Lower-face band of the synthetic UV layout: rows 55%..92%, columns
// inside the face disk shrunk to 88%.
std::vector<std::uint8_t> lower_face_region(int n) {
  std::vector<std::uint8_t> region(static_cast<std::size_t>(n) * n, 0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double u = (c + 0.5) / n * 2.0 - 1.0;
      const double v = (r + 0.5) / n * 2.0 - 1.0;
      if (v >= 0.1 && v <= 0.84 && u * u + v * v <= 0.88 * 0.88) {
        region[static_cast<std::size_t>(r) * n + c] = 1;
      }
    }
  }
  return region;
}

}  // namespace

MaskTemplate make_solid_template(int uv_size) {
  MaskTemplate t;
  t.name = "solid";
  t.texture = UVTexture(uv_size, uv_size, 3, 0.0f);
  for (int r = 0; r < uv_size; ++r) {
    for (int c = 0; c < uv_size; ++c) {
      t.texture.at(c, r, 0) = 142.0f;
      t.texture.at(c, r, 1) = 196.0f;
      t.texture.at(c, r, 2) = 222.0f;
    }
  }
  t.region = lower_face_region(uv_size);
  return t;
}

MaskTemplate make_patterned_template(int uv_size) {
  MaskTemplate t;
  t.name = "patterned";
  t.texture = UVTexture(uv_size, uv_size, 3, 0.0f);
  const int stripe = std::max(2, uv_size / 32);
  for (int r = 0; r < uv_size; ++r) {
    for (int c = 0; c < uv_size; ++c) {
      const bool dark = ((r / stripe) % 2) == 0;
      t.texture.at(c, r, 0) = dark ? 40.0f : 230.0f;
      t.texture.at(c, r, 1) = dark ? 40.0f : 230.0f;
      t.texture.at(c, r, 2) = dark ? 60.0f : 235.0f;
    }
  }
  t.region = lower_face_region(uv_size);
  return t;
}

void write_template(const std::filesystem::path& dir, const MaskTemplate& t) {
  check_template(t, "write_template(" + t.name + ")");
  std::filesystem::create_directories(dir);
  const std::string tex_file = t.name + "_texture.png";
  const std::string region_file = t.name + "_region.png";
  write_image(dir / tex_file, quantize(t.texture));
  Image region(t.texture.width, t.texture.height, 1);
  for (std::size_t i = 0; i < t.region.size(); ++i) region.pixels[i] = t.region[i] ? 255 : 0;
  write_image(dir / region_file, region);
  std::ofstream out(dir / (t.name + ".json"));
  out << json{{"name", t.name}, {"texture", tex_file}, {"region", region_file}}.dump(2) << "\n";
  if (!out) throw IoError("cannot write template descriptor in " + dir.string());
}

std::vector<MaskTemplate> load_templates(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("template directory not found: " + dir.string());
  std::vector<std::filesystem::path> descriptors;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") descriptors.push_back(e.path());
  }
  std::sort(descriptors.begin(), descriptors.end());
  std::vector<MaskTemplate> out;
  for (const auto& d : descriptors) {
    std::ifstream in(d);
    json j;
    try {
      j = json::parse(in);
      MaskTemplate t;
      t.name = j.at("name").get<std::string>();
      t.texture = to_float(read_image(dir / j.at("texture").get<std::string>()));
      const Image region = read_image(dir / j.at("region").get<std::string>());
      if (region.width != t.texture.width || region.height != t.texture.height) {
        throw ShapeError(d.string() + ": region image size differs from texture");
      }
      t.region.resize(static_cast<std::size_t>(region.width) * region.height);
      for (std::size_t i = 0; i < t.region.size(); ++i) {
        const auto* px = &region.pixels[i * static_cast<std::size_t>(region.channels)];
        t.region[i] = (px[0] | px[1] | px[2]) != 0 ? 1 : 0;
      }
      check_template(t, d.string());
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw FormatError(d.string() + ": bad template descriptor: " + e.what());
    }
  }
  return out;
}

// ------------------------------------------------------------- dataset

std::filesystem::path posmap_path_for(const std::filesystem::path& posmap_dir,
                                      const std::string& image_key) {
  std::filesystem::path rel(image_key);
  if (rel.is_absolute()) rel = rel.relative_path();
  rel.replace_extension(".uvpm");
  return posmap_dir / rel;
}

MaskSynthesisResult synthesize_masked_dataset(const DatasetManifest& manifest,
                                              const std::filesystem::path& posmap_dir,
                                              const std::vector<MaskTemplate>& templates,
                                              const std::filesystem::path& out_dir,
                                              const MaskSynthesisOptions& options) {
  if (templates.empty()) throw ValueError("synthesize_masked_dataset: no mask templates");
  std::filesystem::create_directories(out_dir / "masked");
  MaskSynthesisResult result;
  std::vector<SampleRecord> originals, masked;
  for (const auto& s : manifest.samples) {
    SampleRecord orig = s;
    orig.image_path = std::filesystem::absolute(manifest.resolve(s)).lexically_normal().string();
    originals.push_back(orig);
    if (s.masked) continue;
    const auto pm_path = posmap_path_for(posmap_dir, s.image_path);
    if (!std::filesystem::exists(pm_path)) {
      spdlog::warn("synth-mask: no position map for '{}' (expected {}), skipped", s.image_path,
                   pm_path.string());
      result.skipped.push_back(s.image_path);
      continue;
    }
    Rng rng(derive_seed(options.seed, "mask_template", hash_string(s.image_path)));
    const auto& tmpl = templates[static_cast<std::size_t>(rng.uniform_int(templates.size()))];
    const UVPositionMap pm = read_posmap(pm_path);
    const Image image = read_image(manifest.resolve(s));
    const Image out = apply_virtual_mask(image, pm, tmpl, options.feather);

    std::filesystem::path rel(s.image_path);
    if (rel.is_absolute()) rel = rel.relative_path();
    rel.replace_extension(".png");
    const std::filesystem::path dst_rel = std::filesystem::path("masked") / rel;
    std::filesystem::create_directories((out_dir / dst_rel).parent_path());
    write_image(out_dir / dst_rel, out);

    SampleRecord copy = s;
    copy.image_path = dst_rel.generic_string();
    copy.masked = true;
    masked.push_back(std::move(copy));
    result.template_choices.push_back(tmpl.name);
    ++result.masked;
  }
  std::vector<SampleRecord> all = std::move(originals);
  all.insert(all.end(), masked.begin(), masked.end());
  result.manifest = make_manifest(out_dir, std::move(all));
  write_manifest(out_dir / "manifest.tsv", result.manifest);
  return result;
}

}  // namespace facelab
