#include <gtest/gtest.h>

#include <cmath>

#include "facelab/error.hpp"
#include "facelab/manifest.hpp"
#include "facelab/maskgen.hpp"
#include "facelab/synthetic.hpp"
#include "test_util.hpp"

namespace facelab {
namespace {

using testing::TempDir;

// Posmap whose texel (row, col) points at image pixel (x0 + col*step, y0 + row*step).
UVPositionMap grid_posmap(int size, double x0, double y0, double step, float z = 0.0f) {
  UVPositionMap pm(size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const auto i = pm.index(r, c);
      pm.x[i] = static_cast<float>(x0 + c * step);
      pm.y[i] = static_cast<float>(y0 + r * step);
      pm.z[i] = z;
      pm.valid[i] = 1;
    }
  }
  return pm;
}

Image smooth_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  const double a = rng.uniform(0.02, 0.08), b = rng.uniform(0.02, 0.08), ph = rng.uniform(0, 6.28);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(127.5 + 100 * std::sin(a * x + ph)));
      img.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(127.5 + 100 * std::cos(b * y)));
      img.at(x, y, 2) = static_cast<std::uint8_t>((x + 2 * y) % 256);
    }
  }
  return img;
}

MaskTemplate half_plane_template(int size) {
  MaskTemplate t;
  t.name = "half";
  t.texture = UVTexture(size, size, 3, 40.0f);
  t.region.assign(static_cast<std::size_t>(size) * size, 0);
  for (int r = 0; r < size; ++r) {
    for (int c = size / 2; c < size; ++c) t.region[static_cast<std::size_t>(r) * size + c] = 1;
  }
  return t;
}

UVTexture random_texture(int size, std::uint64_t seed) {
  Rng rng(seed);
  UVTexture t(size, size, 3);
  for (auto& v : t.pixels) v = static_cast<float>(rng.uniform(0, 255));
  return t;
}

TEST(Posmap, FileRoundTripAndErrors) {
  TempDir dir;
  SyntheticPosmapParams p;
  p.uv_size = 24;
  p.yaw = 0.3;
  const auto pm = make_synthetic_posmap(p);
  write_posmap(dir / "a.uvpm", pm);
  EXPECT_EQ(read_posmap(dir / "a.uvpm"), pm);
  testing::write_text(dir / "bad.uvpm", "XXXXxxxxxxxxxxxx");
  EXPECT_THROW(read_posmap(dir / "bad.uvpm"), FormatError);
  auto bytes = testing::read_bytes(dir / "a.uvpm");
  bytes.resize(bytes.size() - 10);
  testing::write_text(dir / "short.uvpm", std::string(bytes.begin(), bytes.end()));
  EXPECT_THROW(read_posmap(dir / "short.uvpm"), FormatError);
  EXPECT_THROW(read_posmap(dir / "none.uvpm"), IoError);
}

TEST(Texture, ConstantImageGivesConstantTexture) {
  const Image img(112, 112, 3, 90);
  const auto pm = make_synthetic_posmap(SyntheticPosmapParams{});
  const auto tex = image_to_uv_texture(img, pm);
  ASSERT_EQ(tex.width, pm.width);
  std::size_t valid = 0;
  for (int r = 0; r < pm.height; ++r) {
    for (int c = 0; c < pm.width; ++c) {
      const float want = pm.valid[pm.index(r, c)] ? 90.0f : 0.0f;
      valid += pm.valid[pm.index(r, c)];
      for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(tex.at(c, r, ch), want, 1e-4);
    }
  }
  EXPECT_EQ(valid, pm.valid_count());
  EXPECT_GT(valid, 0u);
}

TEST(Texture, IdentityRampEqualsImage) {
  const Image img = smooth_image(64, 1);
  const auto tex = image_to_uv_texture(img, grid_posmap(64, 0.0, 0.0, 1.0));
  double err = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      for (int c = 0; c < 3; ++c) err += std::abs(tex.at(x, y, c) - img.at(x, y, c));
    }
  }
  EXPECT_LT(err / (64.0 * 64 * 3) / 255.0, 1.0 / 255.0);
}

TEST(Texture, HemisphereOverCheckerboardMatchesScalarOracle) {
  Image board(112, 112, 3);
  for (int y = 0; y < 112; ++y) {
    for (int x = 0; x < 112; ++x) {
      for (int c = 0; c < 3; ++c) board.at(x, y, c) = ((x / 7 + y / 7) % 2) ? 255 : 0;
    }
  }
  SyntheticPosmapParams p;
  p.uv_size = 64;
  p.yaw = 0.2;
  p.roll = -0.1;
  const auto pm = make_synthetic_posmap(p);
  const auto tex = image_to_uv_texture(board, pm);
  auto pixel = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= 112 || y >= 112) return 0.0;
    return board.at(x, y, 0);
  };
  for (int r = 0; r < pm.height; ++r) {
    for (int c = 0; c < pm.width; ++c) {
      const auto i = pm.index(r, c);
      double want = 0.0;
      if (pm.valid[i]) {
        const double x = pm.x[i], y = pm.y[i];
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0, fy = y - y0;
        const double top = pixel(x0, y0) + fx * (pixel(x0 + 1, y0) - pixel(x0, y0));
        const double bottom = pixel(x0, y0 + 1) + fx * (pixel(x0 + 1, y0 + 1) - pixel(x0, y0 + 1));
        want = top + fy * (bottom - top);
      }
      EXPECT_NEAR(tex.at(c, r, 0), want, 1e-3) << r << "," << c;
    }
  }
}

TEST(Texture, OutOfBoundsTexelRejected) {
  const Image img(32, 32, 3);
  EXPECT_THROW(image_to_uv_texture(img, grid_posmap(8, 30.0, 0.0, 1.0)), ShapeError);
  EXPECT_NO_THROW(image_to_uv_texture(img, grid_posmap(8, 24.0 + kPosmapMargin, 0.0, 1.0)));
}

TEST(Blend, HardBlendAlgebraExact) {
  const auto face = random_texture(32, 2);
  MaskTemplate t = half_plane_template(32);
  t.texture = random_texture(32, 3);
  const auto out = blend_uv(face, t, 0);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const auto& src = t.region[static_cast<std::size_t>(r) * 32 + c] ? t.texture : face;
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(out.at(c, r, ch), src.at(c, r, ch));
    }
  }
}

TEST(Blend, EmptyRegionReturnsFace) {
  const auto face = random_texture(16, 4);
  MaskTemplate t;
  t.texture = random_texture(16, 5);
  t.region.assign(256, 0);
  for (int f : {0, 2, 3}) EXPECT_EQ(blend_uv(face, t, f).pixels, face.pixels);
}

TEST(Blend, FeatheredHalfPlaneMonotoneAndMatchesKernelRow) {
  const int n = 40, f = 3;
  const auto t = half_plane_template(n);
  const auto w = feather_weights(t, f);
  const int row = n / 2;
  for (int c = 0; c < n - f; ++c) {
    int inside = 0;
    for (int k = c - f; k <= c + f; ++k) inside += (k >= n / 2 && k < n) ? 1 : 0;
    EXPECT_NEAR(w[static_cast<std::size_t>(row) * n + c], inside / 7.0, 1e-6) << c;
    if (c > 0) EXPECT_GE(w[static_cast<std::size_t>(row) * n + c], w[static_cast<std::size_t>(row) * n + c - 1]);
  }
  for (float v : w) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  // Outside the feathered support the face texel is copied exactly.
  const auto face = random_texture(n, 6);
  const auto out = blend_uv(face, t, f);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n / 2 - f; ++c) {
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(out.at(c, r, ch), face.at(c, r, ch));
    }
  }
  EXPECT_THROW(blend_uv(random_texture(8, 1), t, f), ShapeError);
}

class RoundTrip : public ::testing::TestWithParam<SyntheticSurface> {};

TEST_P(RoundTrip, RenderOverSelfWithinTwoLevels) {
  SyntheticPosmapParams p;
  p.surface = GetParam();
  p.yaw = 0.25;
  p.pitch = -0.1;
  const auto pm = make_synthetic_posmap(p);
  const Image img = smooth_image(112, 7);
  RenderStats stats;
  const Image out = render_uv_texture(image_to_uv_texture(img, pm), pm, img, &stats);
  ASSERT_GT(stats.pixels_covered, 1000u);
  double err = 0;
  std::size_t covered = 0;
  for (int y = 0; y < 112; ++y) {
    for (int x = 0; x < 112; ++x) {
      if (!stats.coverage[static_cast<std::size_t>(y) * 112 + x]) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(out.at(x, y, c), img.at(x, y, c));
        continue;
      }
      ++covered;
      for (int c = 0; c < 3; ++c) err += std::abs(static_cast<double>(out.at(x, y, c)) - img.at(x, y, c));
    }
  }
  EXPECT_EQ(covered, stats.pixels_covered);
  EXPECT_LT(err / (3.0 * static_cast<double>(covered)) / 255.0, 2.0 / 255.0);
}

INSTANTIATE_TEST_SUITE_P(Surfaces, RoundTrip,
                         ::testing::Values(SyntheticSurface::Plane, SyntheticSurface::Hemisphere,
                                           SyntheticSurface::Saddle));

TEST(Render, EmptyMaskKeepsImage) {
  const auto pm = make_synthetic_posmap(SyntheticPosmapParams{});
  const Image img = smooth_image(112, 8);
  MaskTemplate none;
  none.texture = UVTexture(pm.width, pm.height, 3, 0.0f);
  none.region.assign(static_cast<std::size_t>(pm.width) * pm.height, 0);
  const Image out = render_uv_texture(blend_uv(image_to_uv_texture(img, pm), none, 2), pm, img);
  double err = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) err += std::abs(static_cast<double>(out.pixels[i]) - img.pixels[i]);
  EXPECT_LT(err / static_cast<double>(img.pixels.size()), 2.0);
}

// Two flat sheets over the same pixels, split by an invalid seam column;
// the nearer sheet (larger z) must win wherever both cover.
TEST(Render, NearerSurfaceWins) {
  for (bool left_near : {true, false}) {
    const int w = 21;
    UVPositionMap pm(10, w);
    UVTexture tex(w, 10, 3);
    for (int r = 0; r < 10; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto i = pm.index(r, c);
        const bool left = c < 10;
        const int cc = left ? c : c - 11;
        pm.x[i] = static_cast<float>(5 + cc * 3);
        pm.y[i] = static_cast<float>(5 + r * 3);
        pm.z[i] = (left == left_near) ? 5.0f : 1.0f;
        pm.valid[i] = c != 10;
        tex.at(c, r, 0) = left ? 250.0f : 10.0f;
      }
    }
    RenderStats stats;
    const Image out = render_uv_texture(tex, pm, Image(40, 40, 3, 128), &stats);
    const std::uint8_t want = left_near ? 250 : 10;
    for (int y = 5; y <= 32; ++y) {
      for (int x = 5; x <= 32; ++x) EXPECT_EQ(out.at(x, y, 0), want) << x << "," << y;
    }
    EXPECT_EQ(out.at(0, 0, 0), 128);
  }
}

TEST(Render, DegenerateTrianglesCounted) {
  const UVPositionMap pm = grid_posmap(6, 10.0, 10.0, 0.0);
  RenderStats stats;
  const Image base(20, 20, 3, 33);
  const Image out = render_uv_texture(UVTexture(6, 6, 3, 200.0f), pm, base, &stats);
  EXPECT_EQ(stats.triangles_drawn, 0u);
  EXPECT_EQ(stats.degenerate_skipped, 50u);
  EXPECT_EQ(out, base);
}

TEST(Render, MaskChangesOnlyCoveredPixels) {
  SyntheticPosmapParams p;
  p.uv_size = 128;
  const auto pm = make_synthetic_posmap(p);
  const Image img = smooth_image(112, 9);
  RenderStats stats;
  const Image out = apply_virtual_mask(img, pm, make_solid_template(128), 2, &stats);
  std::size_t changed = 0;
  for (int y = 0; y < 112; ++y) {
    for (int x = 0; x < 112; ++x) {
      const bool cov = stats.coverage[static_cast<std::size_t>(y) * 112 + x] != 0;
      for (int c = 0; c < 3; ++c) {
        if (!cov) EXPECT_EQ(out.at(x, y, c), img.at(x, y, c));
        changed += out.at(x, y, c) != img.at(x, y, c) ? 1 : 0;
      }
    }
  }
  EXPECT_GT(changed, 500u);
}

TEST(Templates, WriteLoadRoundTrip) {
  TempDir dir;
  const auto solid = make_solid_template(32);
  const auto pat = make_patterned_template(32);
  write_template(dir.path(), solid);
  write_template(dir.path(), pat);
  const auto loaded = load_templates(dir.path());
  ASSERT_EQ(loaded.size(), 2u);
  for (const auto& t : loaded) {
    const auto& want = t.name == "solid" ? solid : pat;
    EXPECT_EQ(t.region, want.region);
    for (std::size_t i = 0; i < t.texture.pixels.size(); ++i) EXPECT_NEAR(t.texture.pixels[i], want.texture.pixels[i], 0.5);
  }
  EXPECT_THROW(load_templates(dir / "none"), IoError);
}

TEST(Synthesis, SeededAndDoublesManifest) {
  TempDir dir;
  SyntheticFaceOptions opt;
  opt.num_identities = 2;
  opt.images_per_identity = 2;
  opt.image_size = 32;
  opt.uv_size = 32;
  opt.seed = 3;
  const auto data = generate_synthetic_faces(dir / "data", opt);
  const std::vector<MaskTemplate> templates{make_solid_template(32), make_patterned_template(32)};
  MaskSynthesisOptions mo;
  mo.seed = 11;
  const auto a = synthesize_masked_dataset(data.manifest, data.posmap_dir, templates, dir / "a", mo);
  const auto b = synthesize_masked_dataset(data.manifest, data.posmap_dir, templates, dir / "b", mo);
  EXPECT_EQ(a.masked, 4u);
  EXPECT_EQ(a.manifest.samples.size(), 2 * data.manifest.samples.size());
  EXPECT_EQ(a.template_choices, b.template_choices);
  std::size_t masked = 0;
  for (std::size_t i = 0; i < a.manifest.samples.size(); ++i) {
    const auto& s = a.manifest.samples[i];
    masked += s.masked ? 1 : 0;
    if (s.masked) {
      EXPECT_EQ(s.identity, a.manifest.samples[i - 4].identity);
      EXPECT_EQ(testing::read_bytes(dir / "a" / s.image_path), testing::read_bytes(dir / "b" / b.manifest.samples[i].image_path));
    }
  }
  EXPECT_EQ(masked, 4u);
  EXPECT_EQ(a.manifest.num_identities, 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "a/manifest.tsv"));
}

TEST(Synthesis, MissingPosmapSkippedAndNoTemplatesAbort) {
  TempDir dir;
  SyntheticFaceOptions opt;
  opt.num_identities = 2;
  opt.images_per_identity = 2;
  opt.image_size = 32;
  opt.uv_size = 32;
  const auto data = generate_synthetic_faces(dir / "data", opt);
  std::filesystem::remove(posmap_path_for(data.posmap_dir, data.manifest.samples[1].image_path));
  const std::vector<MaskTemplate> templates{make_solid_template(32)};
  const auto r = synthesize_masked_dataset(data.manifest, data.posmap_dir, templates, dir / "out");
  EXPECT_EQ(r.masked, 3u);
  EXPECT_EQ(r.skipped, std::vector<std::string>{data.manifest.samples[1].image_path});
  EXPECT_THROW(synthesize_masked_dataset(data.manifest, data.posmap_dir, {}, dir / "out2"), ValueError);
}

}  // namespace
}  // namespace facelab
