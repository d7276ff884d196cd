#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace facelab {

// 8-bit interleaved image (HWC). RGB unless channels == 1.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Float counterpart used for intermediate resampling (values on the 0..255
// scale).
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> pixels;

  ImageF() = default;
  ImageF(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Reads PNG (8-bit gray/RGB/RGBA, converted to RGB) or binary PPM/PGM.
Image read_image(const std::filesystem::path& path);
// Writes PNG or PPM/PGM depending on the extension. PNG output is
// byte-deterministic for identical pixels.
void write_image(const std::filesystem::path& path, const Image& image);

// Bilinear sample at continuous coordinates where integer coordinates are
// pixel centres. Neighbours outside the image contribute zero.
template <typename Img>
void sample_bilinear(const Img& image, double x, double y, float* out);

Image to_rgb(const Image& image);
Image mirror_horizontal(const Image& image);
Image resize_bilinear(const Image& image, int width, int height);
Image quantize(const ImageF& image);
ImageF to_float(const Image& image);

// Mean absolute difference over all channels, optionally restricted to
// pixels where mask is nonzero (mask is width*height).
double mean_abs_diff(const Image& a, const Image& b,
                     const std::vector<std::uint8_t>* mask = nullptr);

}  // namespace facelab
