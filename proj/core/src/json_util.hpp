#pragma once

// JSON encodings of the configuration structs, shared by checkpoints,
// reports and the pipeline. Not installed.

#include <json.hpp>

#include "facelab/run_config.hpp"

namespace facelab {

using json = nlohmann::json;

inline json backbone_to_json(const BackboneSpec& s) {
  return {{"name", s.name},   {"embedding_dim", s.embedding_dim}, {"width", s.width},
          {"depth", s.depth}, {"input_height", s.input_height},   {"input_width", s.input_width}};
}

inline BackboneSpec backbone_from_json(const json& j) {
  BackboneSpec s;
  s.name = j.at("name").get<std::string>();
  s.embedding_dim = j.at("embedding_dim").get<int>();
  s.width = j.at("width").get<double>();
  s.depth = j.at("depth").get<int>();
  s.input_height = j.at("input_height").get<int>();
  s.input_width = j.at("input_width").get<int>();
  return s;
}

inline json head_to_json(const HeadSpec& s) {
  return {{"variant", to_string(s.variant)}, {"scale", s.scale},        {"margin", s.margin},
          {"margin2", s.margin2},            {"mv_weight", s.mv_weight}, {"lambda", s.lambda},
          {"alpha", s.alpha},                {"num_classes", s.num_classes}, {"dim", s.dim}};
}

inline HeadSpec head_from_json(const json& j) {
  HeadSpec s;
  s.variant = parse_head_variant(j.at("variant").get<std::string>());
  s.scale = j.at("scale").get<double>();
  s.margin = j.at("margin").get<double>();
  s.margin2 = j.at("margin2").get<double>();
  s.mv_weight = j.at("mv_weight").get<double>();
  s.lambda = j.at("lambda").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.num_classes = j.at("num_classes").get<int>();
  s.dim = j.at("dim").get<int>();
  return s;
}

inline json head_state_to_json(const HeadState& s) {
  return {{"scale", s.scale}, {"curricular_t", s.curricular_t}, {"margins", s.margins}, {"step", s.step}};
}

inline HeadState head_state_from_json(const json& j) {
  HeadState s;
  s.scale = j.at("scale").get<double>();
  s.curricular_t = j.at("curricular_t").get<double>();
  s.margins = j.at("margins").get<std::vector<double>>();
  s.step = j.at("step").get<std::int64_t>();
  return s;
}

inline json transform_to_json(const TransformSpec& s) {
  return {{"resize_width", s.resize_width},
          {"resize_height", s.resize_height},
          {"mean", s.mean},
          {"scale", s.scale},
          {"crop_enabled", s.crop_enabled},
          {"crop_width", s.crop_width},
          {"crop_height", s.crop_height},
          {"flip_probability", s.flip_probability},
          {"rotation_degrees", s.rotation_degrees},
          {"mode", s.mode == TransformMode::Train ? "train" : "eval"}};
}

inline TransformSpec transform_from_json(const json& j) {
  TransformSpec s;
  s.resize_width = j.at("resize_width").get<int>();
  s.resize_height = j.at("resize_height").get<int>();
  s.mean = j.at("mean").get<std::array<double, 3>>();
  s.scale = j.at("scale").get<std::array<double, 3>>();
  s.crop_enabled = j.at("crop_enabled").get<bool>();
  s.crop_width = j.at("crop_width").get<int>();
  s.crop_height = j.at("crop_height").get<int>();
  s.flip_probability = j.at("flip_probability").get<double>();
  s.rotation_degrees = j.at("rotation_degrees").get<double>();
  s.mode = j.at("mode").get<std::string>() == "eval" ? TransformMode::Eval : TransformMode::Train;
  return s;
}

inline json run_config_to_json(const RunConfig& c) {
  return {{"backbone", backbone_to_json(c.backbone)},
          {"head", head_to_json(c.head)},
          {"schedule",
           {{"total_epochs", c.schedule.total_epochs},
            {"base_lr", c.schedule.base_lr},
            {"milestones", c.schedule.milestones},
            {"decay", c.schedule.decay},
            {"batch_size", c.schedule.batch_size}}},
          {"optim", {{"momentum", c.optim.momentum}, {"weight_decay", c.optim.weight_decay}}},
          {"transform", transform_to_json(c.transform)},
          {"seed", c.seed},
          {"mode", to_string(c.mode)},
          {"sst",
           {{"gallery_momentum", c.sst.gallery_momentum},
            {"queue_capacity", c.sst.queue_capacity},
            {"scale", c.sst.scale},
            {"margin", c.sst.margin}}}};
}

}  // namespace facelab
