#include "facelab/preprocess.hpp"

#include <cmath>
#include <numbers>

#include "facelab/error.hpp"

namespace facelab {

AffineMatrix AffineMatrix::inverse() const {
  const double a = m[0][0], b = m[0][1], c = m[1][0], d = m[1][1];
  const double det = a * d - b * c;
  if (std::abs(det) < 1e-15) throw ValueError("AffineMatrix::inverse: singular matrix");
  AffineMatrix r;
  r.m[0][0] = d / det;
  r.m[0][1] = -b / det;
  r.m[1][0] = -c / det;
  r.m[1][1] = a / det;
  r.m[0][2] = -(r.m[0][0] * m[0][2] + r.m[0][1] * m[1][2]);
  r.m[1][2] = -(r.m[1][0] * m[0][2] + r.m[1][1] * m[1][2]);
  return r;
}

double AffineMatrix::scale() const { return std::hypot(m[0][0], m[1][0]); }
double AffineMatrix::rotation() const { return std::atan2(m[1][0], m[0][0]); }

AlignmentTemplate AlignmentTemplate::standard_112() {
  AlignmentTemplate t;
  t.points = {{{38.2946, 51.6963},
               {73.5318, 51.5014},
               {56.0252, 71.7366},
               {41.5493, 92.3655},
               {70.7299, 92.2041}}};
  t.width = 112;
  t.height = 112;
  return t;
}

AlignmentTemplate AlignmentTemplate::scaled_to(int w, int h) const {
  AlignmentTemplate t = *this;
  const double sx = static_cast<double>(w) / width;
  const double sy = static_cast<double>(h) / height;
  for (auto& p : t.points) p = {p.x * sx, p.y * sy};
  t.width = w;
  t.height = h;
  return t;
}

void validate_transform_spec(const TransformSpec& s) {
  if (s.resize_width < 0 || s.resize_height < 0) throw ValueError("transform: negative resize");
  if ((s.resize_width == 0) != (s.resize_height == 0)) {
    throw ValueError("transform: set both resize_width and resize_height or neither");
  }
  if (!(s.flip_probability >= 0 && s.flip_probability <= 1)) {
    throw ValueError("transform: flip probability must be in [0, 1]");
  }
  if (!(s.rotation_degrees >= 0)) throw ValueError("transform: rotation range must be >= 0");
  for (double v : s.scale) {
    if (!(v != 0)) throw ValueError("transform: normalisation scale must be non-zero");
  }
  if (s.crop_enabled && (s.crop_width <= 0 || s.crop_height <= 0)) {
    throw ValueError("transform: crop enabled with non-positive crop size");
  }
  if (s.mode == TransformMode::Eval &&
      (s.crop_enabled || s.flip_probability > 0 || s.rotation_degrees > 0)) {
    throw ValueError("transform: eval mode permits only resize and normalisation");
  }
}

TransformSpec eval_transform(const TransformSpec& spec) {
  TransformSpec e = spec;
  e.mode = TransformMode::Eval;
  e.crop_enabled = false;
  e.flip_probability = 0.0;
  e.rotation_degrees = 0.0;
  // A training crop defines the network input size; eval resizes there.
  if (spec.crop_enabled) {
    e.resize_width = spec.crop_width;
    e.resize_height = spec.crop_height;
  }
  return e;
}

AffineMatrix estimate_similarity_transform(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size() || src.empty()) {
    throw ShapeError("estimate_similarity_transform: point lists must be non-empty and equal");
  }
  const double n = static_cast<double>(src.size());
  Point2 sm{0, 0}, dm{0, 0};
  for (std::size_t i = 0; i < src.size(); ++i) {
    sm.x += src[i].x; sm.y += src[i].y;
    dm.x += dst[i].x; dm.y += dst[i].y;
  }
  sm = {sm.x / n, sm.y / n};
  dm = {dm.x / n, dm.y / n};
  // Minimising sum |[a -b; b a] p + t - q|^2 is linear in (a, b, t).
  double spread = 0, num_a = 0, num_b = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double px = src[i].x - sm.x, py = src[i].y - sm.y;
    const double qx = dst[i].x - dm.x, qy = dst[i].y - dm.y;
    spread += px * px + py * py;
    num_a += px * qx + py * qy;
    num_b += px * qy - py * qx;
  }
  if (spread < 1e-12) {
    throw ValueError("estimate_similarity_transform: degenerate source points (zero variance)");
  }
  const double a = num_a / spread;
  const double b = num_b / spread;
  AffineMatrix t;
  t.m[0][0] = a;
  t.m[0][1] = -b;
  t.m[1][0] = b;
  t.m[1][1] = a;
  t.m[0][2] = dm.x - (a * sm.x - b * sm.y);
  t.m[1][2] = dm.y - (b * sm.x + a * sm.y);
  return t;
}

Image warp_affine(const Image& image, const AffineMatrix& transform, int out_w, int out_h) {
  const AffineMatrix inv = transform.inverse();
  Image out(out_w, out_h, image.channels);
  std::vector<float> px(static_cast<std::size_t>(image.channels));
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      sample_bilinear(image, s.x, s.y, px.data());
      for (int c = 0; c < image.channels; ++c) {
        const float v = std::clamp(px[static_cast<std::size_t>(c)], 0.0f, 255.0f);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

Image crop_and_align(const Image& image, const Landmarks5& landmarks, const AlignmentTemplate& tmpl) {
  for (const auto& p : landmarks) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ValueError("crop_and_align: non-finite landmark");
    }
  }
  const AffineMatrix t = estimate_similarity_transform(landmarks, tmpl.points);
  return warp_affine(image, t, tmpl.width, tmpl.height);
}

Image rotate_image(const Image& image, double degrees) {
  if (degrees == 0.0) return image;
  const double r = degrees * std::numbers::pi / 180.0;
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;
  AffineMatrix t;
  t.m[0][0] = std::cos(r);
  t.m[0][1] = -std::sin(r);
  t.m[1][0] = std::sin(r);
  t.m[1][1] = std::cos(r);
  t.m[0][2] = cx - (t.m[0][0] * cx + t.m[0][1] * cy);
  t.m[1][2] = cy - (t.m[1][0] * cx + t.m[1][1] * cy);
  return warp_affine(image, t, image.width, image.height);
}

Image augment(const Image& image, const TransformSpec& spec, Rng& rng) {
  Image out = spec.resize_width > 0 ? resize_bilinear(image, spec.resize_width, spec.resize_height)
                                    : image;
  if (spec.mode == TransformMode::Eval) return out;
  if (spec.rotation_degrees > 0) {
    out = rotate_image(out, rng.uniform(-spec.rotation_degrees, spec.rotation_degrees));
  }
  if (spec.crop_enabled) {
    if (spec.crop_width > out.width || spec.crop_height > out.height) {
      throw ValueError("augment: crop " + std::to_string(spec.crop_width) + "x" +
                       std::to_string(spec.crop_height) + " larger than image " +
                       std::to_string(out.width) + "x" + std::to_string(out.height));
    }
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(out.width - spec.crop_width + 1)));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(out.height - spec.crop_height + 1)));
    Image crop(spec.crop_width, spec.crop_height, out.channels);
    for (int y = 0; y < spec.crop_height; ++y) {
      for (int x = 0; x < spec.crop_width; ++x) {
        for (int c = 0; c < out.channels; ++c) crop.at(x, y, c) = out.at(x0 + x, y0 + y, c);
      }
    }
    out = std::move(crop);
  }
  if (spec.flip_probability > 0 && rng.bernoulli(spec.flip_probability)) {
    out = mirror_horizontal(out);
  }
  return out;
}

template <typename T>
void normalize_tensor(const Image& image, const TransformSpec& spec, T* out) {
  if (image.channels != 3) throw ShapeError("normalize_tensor: expected an RGB image");
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (int c = 0; c < 3; ++c) {
    const T mean = static_cast<T>(spec.mean[static_cast<std::size_t>(c)]);
    const T scale = static_cast<T>(spec.scale[static_cast<std::size_t>(c)]);
    T* dst = out + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = (static_cast<T>(image.pixels[i * 3 + static_cast<std::size_t>(c)]) - mean) / scale;
    }
  }
}

template <typename T>
std::vector<T> normalize_tensor(const Image& image, const TransformSpec& spec) {
  std::vector<T> out(static_cast<std::size_t>(image.width) * image.height * 3);
  normalize_tensor<T>(image, spec, out.data());
  return out;
}

template void normalize_tensor<float>(const Image&, const TransformSpec&, float*);
template void normalize_tensor<double>(const Image&, const TransformSpec&, double*);
template std::vector<float> normalize_tensor<float>(const Image&, const TransformSpec&);
template std::vector<double> normalize_tensor<double>(const Image&, const TransformSpec&);

Image denormalize_tensor(std::span<const float> chw, int width, int height, const TransformSpec& spec) {
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  if (chw.size() != plane * 3) throw ShapeError("denormalize_tensor: size mismatch");
  Image out(width, height, 3);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = chw[c * plane + i] * spec.scale[static_cast<std::size_t>(c)] +
                       spec.mean[static_cast<std::size_t>(c)];
      out.pixels[i * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

}  // namespace facelab
