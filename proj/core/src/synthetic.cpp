#include "facelab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "facelab/error.hpp"
#include "facelab/manifest.hpp"
#include "facelab/random.hpp"

namespace facelab {

namespace {

struct Blob {
  double u = 0.0, v = 0.0, sigma = 0.1;
  double color[3] = {0, 0, 0};
};

void add_blob(UVTexture& tex, const Blob& b, bool mirrored) {
  const int n = tex.width;
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  for (int r = 0; r < n; ++r) {
    const double v = (r + 0.5) / n * 2.0 - 1.0;
    for (int c = 0; c < n; ++c) {
      double u = (c + 0.5) / n * 2.0 - 1.0;
      if (mirrored) u = std::abs(u);
      const double d2 = (u - b.u) * (u - b.u) + (v - b.v) * (v - b.v);
      const double w = std::exp(-d2 * inv);
      if (w < 1e-4) continue;
      for (int k = 0; k < 3; ++k) tex.at(c, r, k) += static_cast<float>(w * b.color[k]);
    }
  }
}

std::string identity_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "id%04d", index);
  return buf;
}

}  // namespace

const Landmarks5& synthetic_landmark_uv() {
  static const Landmarks5 points{{{-0.38, -0.25}, {0.38, -0.25}, {0.0, 0.1}, {-0.3, 0.45}, {0.3, 0.45}}};
  return points;
}

UVTexture synthetic_identity_texture(int uv_size, std::uint64_t identity_seed, int blobs) {
  if (uv_size < 2) throw ValueError("synthetic texture size must be >= 2");
  Rng rng(identity_seed);
  UVTexture tex(uv_size, uv_size, 3, 0.0f);
  const double skin[3] = {rng.uniform(120, 230), rng.uniform(90, 180), rng.uniform(70, 160)};
  for (int r = 0; r < uv_size; ++r) {
    for (int c = 0; c < uv_size; ++c) {
      for (int k = 0; k < 3; ++k) tex.at(c, r, k) = static_cast<float>(skin[k]);
    }
  }
  for (int i = 0; i < blobs; ++i) {
    Blob b;
    b.u = rng.uniform(0.0, 0.8);
    b.v = rng.uniform(-0.85, 0.85);
    b.sigma = rng.uniform(0.1, 0.28);
    for (double& c : b.color) c = rng.uniform(-80, 80);
    add_blob(tex, b, true);
  }
  // Hair band, eyes and mouth keep every identity face-like.
  Blob hair{0.0, -1.0, rng.uniform(0.2, 0.4), {0, 0, 0}};
  const double hair_dark = rng.uniform(60, 140);
  for (double& c : hair.color) c = -hair_dark + rng.uniform(-20, 20);
  add_blob(tex, hair, true);
  Blob eye{0.38 + rng.uniform(-0.06, 0.06), -0.25 + rng.uniform(-0.05, 0.05),
           rng.uniform(0.07, 0.12), {0, 0, 0}};
  const double eye_dark = rng.uniform(70, 130);
  for (double& c : eye.color) c = -eye_dark;
  add_blob(tex, eye, true);
  Blob mouth{0.0, 0.45 + rng.uniform(-0.05, 0.05), rng.uniform(0.08, 0.14),
             {rng.uniform(10, 60), -rng.uniform(30, 70), -rng.uniform(30, 70)}};
  add_blob(tex, mouth, false);
  for (float& p : tex.pixels) p = std::clamp(p, 0.0f, 255.0f);
  return tex;
}

SyntheticSample render_synthetic_face(const UVTexture& texture, const SyntheticFaceOptions& o,
                                      std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  const int n = o.image_size;
  SyntheticPosmapParams p;
  p.surface = SyntheticSurface::Hemisphere;
  p.uv_size = texture.width;
  p.center_x = (n - 1) / 2.0 + rng.uniform(-o.center_jitter, o.center_jitter);
  p.center_y = (n - 1) / 2.0 + rng.uniform(-o.center_jitter, o.center_jitter);
  p.radius = o.radius_fraction * n * (1.0 + rng.uniform(-o.radius_jitter, o.radius_jitter));
  p.yaw = rng.uniform(-o.yaw_jitter, o.yaw_jitter);
  p.pitch = rng.uniform(-o.pitch_jitter, o.pitch_jitter);
  p.roll = rng.uniform(-o.roll_jitter, o.roll_jitter);

  Image background(n, n, 3);
  const double base = rng.uniform(40, 200);
  const double gx = rng.uniform(-2, 2), gy = rng.uniform(-2, 2);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int k = 0; k < 3; ++k) {
        const double v = base + gx * (x - n / 2.0) + gy * (y - n / 2.0) + rng.normal(0, 8);
        background.at(x, y, k) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }

  SyntheticSample out;
  out.posmap = make_synthetic_posmap(p);
  Image face = render_uv_texture(texture, out.posmap, background);
  const double gain = 1.0 + rng.uniform(-o.brightness_jitter, o.brightness_jitter);
  for (auto& px : face.pixels) {
    const double v = px * gain + (o.pixel_noise > 0 ? rng.normal(0, o.pixel_noise) : 0.0);
    px = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  out.image = std::move(face);
  const auto& uv = synthetic_landmark_uv();
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const SurfacePoint sp = synthetic_surface_point(p, uv[i].x, uv[i].y);
    out.landmarks[i] = {sp.x, sp.y};
  }
  return out;
}

SyntheticDataset generate_synthetic_faces(const std::filesystem::path& out_dir,
                                          const SyntheticFaceOptions& o) {
  if (o.num_identities < 1 || o.images_per_identity < 1) {
    throw ValueError("synthetic dataset needs at least one identity and one image each");
  }
  if (o.image_size < 16) throw ValueError("synthetic image_size must be >= 16");
  SyntheticDataset ds;
  ds.posmap_dir = out_dir / "posmaps";
  std::vector<SampleRecord> samples;
  for (int i = 0; i < o.num_identities; ++i) {
    const int gid = o.first_identity + i;
    const std::string name = identity_name(gid);
    const UVTexture tex = synthetic_identity_texture(
        o.uv_size, derive_seed(o.seed, "identity", static_cast<std::uint64_t>(gid)), o.blobs);
    std::filesystem::create_directories(out_dir / "images" / name);
    for (int k = 0; k < o.images_per_identity; ++k) {
      char file[32];
      std::snprintf(file, sizeof(file), "%03d.png", k);
      const std::string rel = "images/" + name + "/" + file;
      const SyntheticSample s = render_synthetic_face(
          tex, o, derive_seed(o.seed, "sample", static_cast<std::uint64_t>(gid), static_cast<std::uint64_t>(k)));
      write_image(out_dir / rel, s.image);
      if (o.write_posmaps) {
        const auto pm_path = posmap_path_for(ds.posmap_dir, rel);
        std::filesystem::create_directories(pm_path.parent_path());
        write_posmap(pm_path, s.posmap);
      }
      samples.push_back({rel, name, s.landmarks, false});
    }
  }
  ds.manifest = make_manifest(out_dir, std::move(samples));
  ds.manifest_path = out_dir / "manifest.tsv";
  write_manifest(ds.manifest_path, ds.manifest);
  return ds;
}

DatasetManifest make_shallow_manifest(const DatasetManifest& manifest, int per_identity,
                                      std::uint64_t seed) {
  if (per_identity < 1) throw ValueError("make_shallow_manifest: per_identity must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    by_id[manifest.samples[i].identity].push_back(i);
  }
  std::vector<std::uint8_t> keep(manifest.samples.size(), 0);
  for (auto& [id, idx] : by_id) {
    Rng rng(derive_seed(seed, "shallow", hash_string(id)));
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t k = 0; k < idx.size() && k < static_cast<std::size_t>(per_identity); ++k) {
      keep[idx[k]] = 1;
    }
  }
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    if (keep[i]) out.push_back(manifest.samples[i]);
  }
  return make_manifest(manifest.root, std::move(out));
}

}  // namespace facelab
