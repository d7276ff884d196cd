#include "facelab/features.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "facelab/error.hpp"
#include "facelab/vector_ops.hpp"

namespace facelab {

namespace {

TransformSpec inference_transform(const BackboneNet<float>& net, const TransformSpec& transform) {
  TransformSpec t = eval_transform(transform);
  t.resize_width = net.spec().input_width;
  t.resize_height = net.spec().input_height;
  return t;
}

Tensor<float> forward_batch(BackboneNet<float>& net, std::span<const Image> images,
                            const TransformSpec& t, bool mirrored) {
  const int h = net.spec().input_height, w = net.spec().input_width;
  Tensor<float> x(static_cast<int>(images.size()), 3, h, w);
  Rng unused(0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    Image img = augment(images[i], t, unused);
    if (mirrored) img = mirror_horizontal(img);
    normalize_tensor(img, t, x.sample(static_cast<int>(i)));
  }
  return net.forward(x, nn::Mode::Eval);
}

}  // namespace

std::vector<std::vector<float>> embed_images(BackboneNet<float>& net, std::span<const Image> images,
                                             const TransformSpec& transform, bool flip_fusion,
                                             int batch_size) {
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  const TransformSpec t = inference_transform(net, transform);
  const auto d = static_cast<std::size_t>(net.spec().embedding_dim);
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  for (std::size_t b = 0; b < images.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto chunk = images.subspan(b, std::min(images.size() - b, static_cast<std::size_t>(batch_size)));
    const Tensor<float> y = forward_batch(net, chunk, t, false);
    Tensor<float> y_flip;
    if (flip_fusion) y_flip = forward_batch(net, chunk, t, true);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const float* f = y.sample(static_cast<int>(i));
      std::vector<float> v(f, f + d);
      if (flip_fusion) {
        const float* g = y_flip.sample(static_cast<int>(i));
        for (std::size_t k = 0; k < d; ++k) v[k] += g[k];
      }
      l2_normalize_inplace(v);
      out.push_back(std::move(v));
    }
  }
  return out;
}

ExtractResult extract_features(BackboneNet<float>& net, const DatasetManifest& manifest,
                               const TransformSpec& transform, const ExtractOptions& options) {
  if (options.batch_size < 1) throw ValueError("batch_size must be >= 1");
  ExtractResult result;
  const std::size_t bs = static_cast<std::size_t>(options.batch_size);
  for (std::size_t b = 0; b < manifest.samples.size(); b += bs) {
    std::vector<Image> images;
    std::vector<const SampleRecord*> samples;
    for (std::size_t i = b; i < std::min(manifest.samples.size(), b + bs); ++i) {
      const auto& s = manifest.samples[i];
      try {
        images.push_back(to_rgb(read_image(manifest.resolve(s))));
        samples.push_back(&s);
      } catch (const Error& e) {
        if (options.abort_on_error) {
          throw IoError("cannot read sample '" + s.image_path + "': " + e.what());
        }
        spdlog::warn("skipping unreadable sample '{}': {}", s.image_path, e.what());
        result.skipped.push_back(s.image_path);
      }
    }
    if (images.empty()) continue;
    auto feats = embed_images(net, images, transform, options.flip_fusion, options.batch_size);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      result.store.add({samples[i]->identity, samples[i]->image_path, std::move(feats[i]), true});
    }
  }
  return result;
}

}  // namespace facelab
