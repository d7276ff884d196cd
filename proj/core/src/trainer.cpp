#include "facelab/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "facelab/checkpoint.hpp"
#include "facelab/error.hpp"
#include "facelab/optimizer.hpp"
#include "facelab/random.hpp"
#include "facelab/sst.hpp"
#include "train_common.hpp"

namespace facelab {

namespace detail {

Tensor<float> load_batch(const DatasetManifest& manifest, std::span<const std::size_t> indices,
                         const TransformSpec& transform, const BackboneSpec& spec,
                         std::uint64_t seed, int epoch) {
  Tensor<float> x(static_cast<int>(indices.size()), 3, spec.input_height, spec.input_width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& s = manifest.samples[indices[i]];
    Image img;
    try {
      img = to_rgb(read_image(manifest.resolve(s)));
    } catch (const Error& e) {
      throw IoError("training sample '" + s.image_path + "' could not be loaded: " + e.what());
    }
    Rng rng(derive_seed(seed, "augment", static_cast<std::uint64_t>(epoch), indices[i]));
    const Image out = augment(img, transform, rng);
    if (out.width != spec.input_width || out.height != spec.input_height) {
      throw ShapeError("training sample '" + s.image_path + "' becomes " + std::to_string(out.width) +
                       "x" + std::to_string(out.height) + " after the transform; the backbone expects " +
                       std::to_string(spec.input_width) + "x" + std::to_string(spec.input_height));
    }
    normalize_tensor(out, transform, x.sample(static_cast<int>(i)));
  }
  return x;
}

MetricLog::MetricLog(const std::filesystem::path& out_dir) {
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir / "logs");
  path_ = out_dir / "logs" / "train.jsonl";
}

void MetricLog::write(const EpochLog& log) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to " + path_.string());
  out << epoch_log_to_json(log).dump() << "\n";
}

json epoch_log_to_json(const EpochLog& l) {
  return {{"epoch", l.epoch}, {"lr", l.lr}, {"loss_mean", l.loss_mean}, {"acc", l.acc}, {"wall_ms", l.wall_ms}};
}

std::vector<float> flatten(const HeadMatrix<float>& m) {
  return std::vector<float>(m.data(), m.data() + m.size());
}

void add_buffers(Checkpoint& ckpt, const std::string& prefix, const std::vector<Tensor<float>>& buffers) {
  for (std::size_t i = 0; i < buffers.size(); ++i) ckpt.add(prefix + std::to_string(i), buffers[i]);
}

std::vector<Tensor<float>> read_buffers(const Checkpoint& ckpt, const std::string& prefix,
                                        std::span<const nn::NamedParameter<float>> params) {
  std::vector<Tensor<float>> out;
  if (!ckpt.find(prefix + "0")) return out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* t = ckpt.find(prefix + std::to_string(i));
    if (!t || t->shape != params[i].param->value.shape()) {
      throw ShapeError("checkpoint momentum buffer " + prefix + std::to_string(i) +
                       " missing or shaped differently from parameter " + params[i].name);
    }
    Tensor<float> b(t->shape);
    std::copy(t->data.begin(), t->data.end(), b.data());
    out.push_back(std::move(b));
  }
  return out;
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace detail

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int epochs_completed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03d.fxzc", epochs_completed);
  return out_dir / "checkpoints" / buf;
}

namespace {

using detail::Clock;

struct ConventionalRun {
  RunConfig config;
  BackboneSpec spec;
  HeadSpec head_spec;
  std::unique_ptr<BackboneNet<float>> net;
  ClassWeights<float> head;
  HeadState state;
  std::vector<Tensor<float>> net_momentum;
  std::vector<Tensor<float>> head_momentum;
  std::vector<double> margin_momentum;
  std::vector<std::string> identities;
  int epochs_completed = 0;
};

Checkpoint make_checkpoint(ConventionalRun& run) {
  Checkpoint ckpt;
  json meta = {{"kind", "facelab-train"},
               {"mode", to_string(TrainMode::Conventional)},
               {"epochs_completed", run.epochs_completed},
               {"backbone", backbone_to_json(run.spec)},
               {"head", head_to_json(run.head_spec)},
               {"head_state", head_state_to_json(run.state)},
               {"margin_momentum", run.margin_momentum},
               {"identities", run.identities},
               {"config", run_config_to_json(run.config)}};
  ckpt.meta_json = meta.dump();
  store_backbone(ckpt, *run.net);
  ckpt.add("head.weight", {run.head_spec.num_classes, run.head_spec.dim, 1, 1}, detail::flatten(run.head.weight));
  detail::add_buffers(ckpt, "optim.backbone.", run.net_momentum);
  if (!run.head_momentum.empty()) ckpt.add("optim.head.weight", run.head_momentum.front());
  return ckpt;
}

void restore_run(ConventionalRun& run, const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.meta_json);
    if (meta.value("mode", "") != to_string(TrainMode::Conventional)) {
      throw ConfigError(path.string() + ": not a conventional training checkpoint");
    }
    const BackboneSpec spec = backbone_from_json(meta.at("backbone"));
    const HeadSpec head = head_from_json(meta.at("head"));
    if (!(spec == run.spec)) throw ConfigError(path.string() + ": backbone spec differs from the config");
    if (!(head == run.head_spec)) throw ConfigError(path.string() + ": head spec differs from the config");
    if (meta.at("identities").get<std::vector<std::string>>() != run.identities) {
      throw ConfigError(path.string() + ": identity list differs from the training manifest");
    }
    run.state = head_state_from_json(meta.at("head_state"));
    run.margin_momentum = meta.at("margin_momentum").get<std::vector<double>>();
    run.epochs_completed = meta.at("epochs_completed").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad training metadata: " + e.what());
  }
  restore_backbone(ckpt, *run.net);
  const auto* w = ckpt.find("head.weight");
  if (!w || w->data.size() != static_cast<std::size_t>(run.head.weight.size())) {
    throw ShapeError(path.string() + ": head.weight missing or of the wrong size");
  }
  std::copy(w->data.begin(), w->data.end(), run.head.weight.data());
  const auto params = run.net->parameters();
  run.net_momentum = detail::read_buffers(ckpt, "optim.backbone.", params);
  run.head_momentum.clear();
  if (const auto* hm = ckpt.find("optim.head.weight")) {
    Tensor<float> b(hm->shape);
    std::copy(hm->data.begin(), hm->data.end(), b.data());
    run.head_momentum.push_back(std::move(b));
  }
}

}  // namespace

TrainResult train_conventional(const RunConfig& config, const DatasetManifest& manifest,
                               const TrainOptions& options) {
  validate_run_config(config);
  if (manifest.samples.empty()) throw ValueError("training manifest is empty");
  ConventionalRun run;
  run.config = config;
  run.spec = resolve_backbone_spec(config.backbone);
  run.identities = manifest.identities();
  if (run.identities.size() < 2) throw ValueError("training needs at least two identities");
  run.head_spec = config.head;
  run.head_spec.num_classes = static_cast<int>(run.identities.size());
  run.head_spec.dim = run.spec.embedding_dim;
  if (run.head_spec.variant == HeadVariant::AdaCos) {
    run.head_spec.scale = default_head_spec(HeadVariant::AdaCos, run.head_spec.num_classes, run.head_spec.dim).scale;
  }
  validate_head_spec(run.head_spec);
  const int batch = config.batch_size();
  const std::size_t n = manifest.samples.size();
  if (static_cast<std::size_t>(batch) > n) {
    throw ConfigError("batch_size " + std::to_string(batch) + " exceeds the " + std::to_string(n) +
                      " training samples");
  }
  run.net = create_backbone<float>(run.spec, config.seed);
  std::tie(run.head, run.state) = create_head<float>(run.head_spec, config.seed);
  run.margin_momentum.assign(run.state.margins.size(), 0.0);
  if (options.resume) restore_run(run, *options.resume);

  const std::vector<int> labels = manifest.labels();
  const int total = options.stop_after_epochs >= 0
                        ? std::min(options.stop_after_epochs, config.schedule.total_epochs)
                        : config.schedule.total_epochs;
  detail::MetricLog log(options.out_dir);
  TrainResult result;
  const std::size_t steps_per_epoch = n / static_cast<std::size_t>(batch);

  for (int epoch = run.epochs_completed; epoch < total; ++epoch) {
    const auto start = Clock::now();
    const double lr = lr_at(config.schedule, epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(config.seed, "data_order", static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::span<const std::size_t> idx(order.data() + step * batch, static_cast<std::size_t>(batch));
      const Tensor<float> x = detail::load_batch(manifest, idx, config.transform, run.spec, config.seed, epoch);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = labels[idx[i]];

      run.net->zero_grad();
      const Tensor<float> emb = run.net->forward(x, nn::Mode::Train);
      const Eigen::Map<const HeadMatrix<float>> feats(emb.data(), batch, run.spec.embedding_dim);
      HeadResult<float> hr = head_forward<float>(run.head_spec, run.head, run.state, feats, y);
      if (!std::isfinite(hr.loss)) {
        throw ValueError("non-finite training loss at epoch " + std::to_string(epoch) + " step " +
                         std::to_string(step));
      }
      Tensor<float> grad(batch, run.spec.embedding_dim, 1, 1);
      std::copy(hr.grad_features.data(), hr.grad_features.data() + hr.grad_features.size(), grad.data());
      run.net->backward(grad);

      const auto params = run.net->parameters();
      sgd_step<float>(params, lr, config.optim, run.net_momentum);
      if (run.head_momentum.empty()) run.head_momentum.emplace_back(run.head_spec.num_classes, run.head_spec.dim, 1, 1);
      sgd_update<float>(std::span<float>(run.head.weight.data(), static_cast<std::size_t>(run.head.weight.size())),
                        std::span<const float>(hr.grad_weights.data(), static_cast<std::size_t>(hr.grad_weights.size())),
                        run.head_momentum.front().values(), lr, config.optim, "head.weight");
      if (run.head_spec.variant == HeadVariant::AdamSoftmax) {
        for (std::size_t j = 0; j < run.state.margins.size(); ++j) {
          const double g = hr.grad_margins[j];
          if (!std::isfinite(g)) throw ValueError("non-finite gradient for head.margins");
          run.margin_momentum[j] = config.optim.momentum * run.margin_momentum[j] + g;
          run.state.margins[j] = std::max(0.0, run.state.margins[j] - lr * run.margin_momentum[j]);
        }
      }
      run.state = update_head_state(run.head_spec, run.state, hr.stats);

      loss_sum += hr.loss;
      for (int i = 0; i < batch; ++i) {
        Eigen::Index best = 0;
        hr.cosines.row(i).maxCoeff(&best);
        if (best == y[static_cast<std::size_t>(i)]) ++correct;
      }
      seen += static_cast<std::size_t>(batch);
      if (result.step_losses.size() < options.record_step_losses) result.step_losses.push_back(hr.loss);
    }
    run.epochs_completed = epoch + 1;
    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(steps_per_epoch),
                   static_cast<double>(correct) / static_cast<double>(seen), detail::elapsed_ms(start)};
    spdlog::info("epoch {:>3}  lr {:.4g}  loss {:.4f}  acc {:.4f}  ({:.0f} ms)", entry.epoch, entry.lr,
                 entry.loss_mean, entry.acc, entry.wall_ms);
    result.epochs.push_back(entry);
    log.write(entry);
    if (!options.out_dir.empty()) {
      std::filesystem::create_directories(options.out_dir / "checkpoints");
      result.last_checkpoint = checkpoint_path(options.out_dir, run.epochs_completed);
      write_checkpoint(result.last_checkpoint, make_checkpoint(run));
    }
    if (options.on_epoch) options.on_epoch(entry);
  }

  result.net = std::move(run.net);
  result.head_spec = run.head_spec;
  result.head = std::move(run.head);
  result.head_state = std::move(run.state);
  result.identities = std::move(run.identities);
  result.epochs_completed = run.epochs_completed;
  return result;
}

TrainResult train(const RunConfig& config, const DatasetManifest& manifest, const TrainOptions& options) {
  return config.mode == TrainMode::SemiSiamese ? train_semi_siamese(config, manifest, options)
                                               : train_conventional(config, manifest, options);
}

}  // namespace facelab
