#pragma once

#include <span>
#include <vector>

namespace facelab {

// Returns v / ||v||_2. Throws ValueError for a zero (or non-finite) norm
// instead of producing NaN.
std::vector<float> l2_normalize(std::span<const float> v);
std::vector<double> l2_normalize(std::span<const double> v);

// In-place variant used on hot paths.
void l2_normalize_inplace(std::span<float> v);

double l2_norm(std::span<const float> v);
double dot(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace facelab
