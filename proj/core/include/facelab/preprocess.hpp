#pragma once

#include <array>
#include <span>

#include "facelab/image.hpp"
#include "facelab/random.hpp"
#include "facelab/types.hpp"

namespace facelab {

// 2x3 affine matrix [a b tx; c d ty] mapping (x, y) to
// (a x + b y + tx, c x + d y + ty).
struct AffineMatrix {
  std::array<std::array<double, 3>, 2> m{{{1, 0, 0}, {0, 1, 0}}};

  Point2 apply(Point2 p) const {
    return {m[0][0] * p.x + m[0][1] * p.y + m[0][2], m[1][0] * p.x + m[1][1] * p.y + m[1][2]};
  }
  AffineMatrix inverse() const;
  // Uniform scale and rotation (radians) of a similarity matrix.
  double scale() const;
  double rotation() const;
  Point2 translation() const { return {m[0][2], m[1][2]}; }
};

struct AlignmentTemplate {
  Landmarks5 points;
  int width = 112;
  int height = 112;

  // The common 112x112 five-point layout: eye centres, nose tip, mouth
  // corners.
  static AlignmentTemplate standard_112();
  // Same layout rescaled to another output size.
  AlignmentTemplate scaled_to(int w, int h) const;
};

enum class TransformMode { Train, Eval };

struct TransformSpec {
  int resize_width = 0;  // 0 keeps the input size
  int resize_height = 0;
  std::array<double, 3> mean{127.5, 127.5, 127.5};
  std::array<double, 3> scale{128.0, 128.0, 128.0};
  bool crop_enabled = false;
  int crop_width = 0;
  int crop_height = 0;
  double flip_probability = 0.5;
  double rotation_degrees = 10.0;
  TransformMode mode = TransformMode::Train;

  bool operator==(const TransformSpec&) const = default;
};

void validate_transform_spec(const TransformSpec& spec);
// Eval-mode copy: resize + normalise only.
TransformSpec eval_transform(const TransformSpec& spec);

// Least-squares similarity (uniform scale, rotation, translation) mapping
// src onto dst. Throws ValueError when src has zero spread.
AffineMatrix estimate_similarity_transform(std::span<const Point2> src, std::span<const Point2> dst);

// Warps the face so its landmarks land on the template points. Output is
// template-sized, bilinear, zero outside the source.
Image crop_and_align(const Image& image, const Landmarks5& landmarks,
                     const AlignmentTemplate& tmpl = AlignmentTemplate::standard_112());

// Inverse-maps every output pixel through `transform` (output -> source is
// transform.inverse()).
Image warp_affine(const Image& image, const AffineMatrix& transform, int out_w, int out_h);

Image rotate_image(const Image& image, double degrees);

// resize -> rotate -> crop -> flip; eval mode applies the resize only.
Image augment(const Image& image, const TransformSpec& spec, Rng& rng);

// Writes (v - mean_c) / scale_c as C x H x W into out (3*H*W values).
template <typename T>
void normalize_tensor(const Image& image, const TransformSpec& spec, T* out);
template <typename T>
std::vector<T> normalize_tensor(const Image& image, const TransformSpec& spec);

// Inverse mapping back to 8-bit (rounded).
Image denormalize_tensor(std::span<const float> chw, int width, int height,
                         const TransformSpec& spec);

}  // namespace facelab
