#include "facelab/run_config.hpp"

#include "facelab/error.hpp"

namespace facelab {

std::string to_string(TrainMode mode) {
  return mode == TrainMode::Conventional ? "conventional" : "semi_siamese";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "conventional") return TrainMode::Conventional;
  if (name == "semi_siamese" || name == "sst") return TrainMode::SemiSiamese;
  throw LookupError("unknown training mode '" + name + "' (expected conventional or semi_siamese)");
}

void validate_run_config(const RunConfig& c) {
  if (c.batch_size() < 1) throw ConfigError("batch_size must be >= 1");
  if (c.embedding_dim() < 2) throw ConfigError("embedding_dim must be >= 2");
  const BackboneSpec spec = resolve_backbone_spec(c.backbone);
  validate_backbone_spec(spec);
  if (!BackboneRegistry<float>::global().contains(spec.name)) {
    std::string names;
    for (const auto& n : BackboneRegistry<float>::global().names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown backbone '" + spec.name + "' (available: " + names + ")");
  }
  validate_schedule(c.schedule);
  validate_optim_spec(c.optim);
  validate_transform_spec(c.transform);
  HeadSpec head = c.head;
  head.dim = c.embedding_dim();
  head.num_classes = std::max(head.num_classes, 2);
  validate_head_spec(head);
  int out_w = c.transform.resize_width, out_h = c.transform.resize_height;
  if (c.transform.crop_enabled) {
    out_w = c.transform.crop_width;
    out_h = c.transform.crop_height;
  }
  if (out_w > 0 && (out_w != spec.input_width || out_h != spec.input_height)) {
    throw ConfigError("transform produces " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                      " images but the backbone expects " + std::to_string(spec.input_width) + "x" +
                      std::to_string(spec.input_height));
  }
  if (!(c.sst.gallery_momentum >= 0.0 && c.sst.gallery_momentum <= 1.0)) {
    throw ConfigError("sst.gallery_momentum must be in [0, 1]");
  }
  if (c.sst.queue_capacity < 1) throw ConfigError("sst.queue_capacity must be >= 1");
  if (!(c.sst.scale > 0.0)) throw ConfigError("sst.scale must be > 0");
  if (!(c.sst.margin >= 0.0)) throw ConfigError("sst.margin must be >= 0");
}

}  // namespace facelab
