#include "facelab/pipeline.hpp"

#include <cmath>
#include <fstream>

#include "facelab/checkpoint.hpp"
#include "facelab/error.hpp"
#include "facelab/features.hpp"
#include "facelab/vector_ops.hpp"
#include "json_util.hpp"

namespace facelab {

void validate_pipeline_config(const PipelineConfig& c) {
  if (!(c.threshold >= -1.0 && c.threshold <= 1.0)) {
    throw ConfigError("pipeline threshold must be in [-1, 1], got " + std::to_string(c.threshold));
  }
  validate_transform_spec(c.normalization);
  if (c.normalization.mode != TransformMode::Eval) throw ConfigError("pipeline normalisation must be eval mode");
}

void validate_detection(const Detection& d) {
  const double x = d.box[0], y = d.box[1], w = d.box[2], h = d.box[3];
  if (!(w > 0 && h > 0)) throw ValueError("detection box must have positive width and height");
  const double mx = kLandmarkBoxMargin * w, my = kLandmarkBoxMargin * h;
  for (std::size_t i = 0; i < d.landmarks.size(); ++i) {
    const auto& p = d.landmarks[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < x - mx || p.x > x + w + mx || p.y < y - my ||
        p.y > y + h + my) {
      throw ValueError("landmark " + std::to_string(i) + " (" + std::to_string(p.x) + ", " +
                       std::to_string(p.y) + ") lies outside the detection box");
    }
  }
}

std::vector<Detection> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path.string());
  std::vector<Detection> out;
  try {
    const json j = json::parse(in);
    for (const auto& face : j) {
      Detection d;
      d.box = face.at("box").get<std::array<double, 4>>();
      const auto& lm = face.at("landmarks");
      if (lm.size() != 5) throw FormatError(path.string() + ": each face needs exactly 5 landmarks");
      for (std::size_t i = 0; i < 5; ++i) d.landmarks[i] = {lm[i].at(0).get<double>(), lm[i].at(1).get<double>()};
      out.push_back(d);
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad annotation file: " + e.what());
  }
  return out;
}

void write_annotations(const std::filesystem::path& path, std::span<const Detection> detections) {
  json j = json::array();
  for (const auto& d : detections) {
    json lm = json::array();
    for (const auto& p : d.landmarks) lm.push_back({p.x, p.y});
    j.push_back({{"box", d.box}, {"landmarks", lm}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write annotations " + path.string());
  out << j.dump(2) << "\n";
}

std::filesystem::path annotation_path_for(const std::filesystem::path& image_path) {
  std::filesystem::path p = image_path;
  p.replace_extension(".json");
  return p;
}

FacePipeline::FacePipeline(PipelineConfig config, std::unique_ptr<BackboneNet<float>> net)
    : config_(std::move(config)), net_(std::move(net)) {
  if (!net_) throw ValueError("pipeline needs a backbone");
  alignment_ = config_.alignment.scaled_to(net_->spec().input_width, net_->spec().input_height);
}

std::vector<float> FacePipeline::embed_crop(const Image& crop) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const Image rgb = to_rgb(crop);
  auto out = embed_images(*net_, std::span<const Image>(&rgb, 1), config_.normalization, config_.flip_fusion, 1);
  return std::move(out.front());
}

std::vector<RecognitionResult> FacePipeline::process_image(const Image& image,
                                                           std::span<const Detection> detections) const {
  if (detections.empty()) throw ValueError("process_image: no detections");
  const Image rgb = to_rgb(image);
  std::vector<RecognitionResult> results;
  results.reserve(detections.size());
  for (const auto& d : detections) {
    RecognitionResult r;
    try {
      validate_detection(d);
      r.crop = crop_and_align(rgb, d.landmarks, alignment_);
      r.embedding = embed_crop(r.crop);
      r.ok = true;
    } catch (const Error& e) {
      r.ok = false;
      r.error = e.what();
      r.crop = Image();
      r.embedding.clear();
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::unique_ptr<FacePipeline> load_models(const PipelineConfig& config) {
  validate_pipeline_config(config);
  if (!std::filesystem::exists(config.checkpoint)) {
    throw IoError("recognition checkpoint not found: " + config.checkpoint.string());
  }
  auto net = load_backbone_checkpoint(config.checkpoint);
  if (config.expected_embedding_dim > 0 && net->spec().embedding_dim != config.expected_embedding_dim) {
    throw ShapeError(config.checkpoint.string() + ": expected embedding_dim " +
                     std::to_string(config.expected_embedding_dim) + ", found " +
                     std::to_string(net->spec().embedding_dim));
  }
  return std::make_unique<FacePipeline>(config, std::move(net));
}

Comparison compare(std::span<const float> e1, std::span<const float> e2, double threshold) {
  if (e1.size() != e2.size() || e1.empty()) throw ShapeError("compare: embeddings differ in dimension");
  for (auto e : {e1, e2}) {
    if (std::abs(l2_norm(e) - 1.0) > 1e-5) throw ValueError("compare: embeddings must be unit-norm");
  }
  Comparison c;
  c.similarity = dot(e1, e2);
  c.same_identity = c.similarity >= threshold;
  return c;
}

}  // namespace facelab
