#include "facelab/vector_ops.hpp"

#include <cmath>

#include "facelab/error.hpp"

namespace facelab {

namespace {

template <typename T>
std::vector<T> normalized(std::span<const T> v) {
  double sq = 0.0;
  for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ValueError("l2_normalize: vector has zero or non-finite norm");
  }
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(v[i]) / norm);
  }
  return out;
}

}  // namespace

std::vector<float> l2_normalize(std::span<const float> v) { return normalized(v); }
std::vector<double> l2_normalize(std::span<const double> v) { return normalized(v); }

void l2_normalize_inplace(std::span<float> v) {
  const double norm = l2_norm(v);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ValueError("l2_normalize: vector has zero or non-finite norm");
  }
  for (float& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
}

double l2_norm(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw ValueError("cosine_similarity: zero vector");
  return dot(a, b) / (na * nb);
}

}  // namespace facelab
