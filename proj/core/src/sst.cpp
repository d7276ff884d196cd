#include "facelab/sst.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

#include "facelab/checkpoint.hpp"
#include "facelab/error.hpp"
#include "facelab/random.hpp"
#include "train_common.hpp"

namespace facelab {

PrototypeQueue::PrototypeQueue(int capacity, int dim)
    : capacity_(capacity), dim_(dim) {
  if (capacity < 1) throw ValueError("prototype queue capacity must be >= 1");
  if (dim < 1) throw ValueError("prototype queue dimension must be >= 1");
  features_.assign(static_cast<std::size_t>(capacity) * dim, 0.0f);
  labels_.assign(static_cast<std::size_t>(capacity), -1);
}

void PrototypeQueue::push(std::span<const float> feature, int label) {
  if (feature.size() != static_cast<std::size_t>(dim_)) {
    throw ShapeError("prototype queue expects dimension " + std::to_string(dim_) + ", got " +
                     std::to_string(feature.size()));
  }
  double norm2 = 0.0;
  for (float v : feature) norm2 += static_cast<double>(v) * v;
  if (std::abs(std::sqrt(norm2) - 1.0) > 1e-4) throw ValueError("prototype queue features must be unit-norm");
  std::size_t s;
  if (full()) {
    s = head_;
    head_ = (head_ + 1) % static_cast<std::size_t>(capacity_);
  } else {
    s = slot(size_);
    ++size_;
  }
  std::copy(feature.begin(), feature.end(), features_.begin() + static_cast<std::ptrdiff_t>(s * dim_));
  labels_[s] = label;
  ++pushes_;
}

std::span<const float> PrototypeQueue::feature(std::size_t i) const {
  if (i >= size_) throw LookupError("prototype queue index out of range");
  return std::span<const float>(features_).subspan(slot(i) * static_cast<std::size_t>(dim_),
                                                   static_cast<std::size_t>(dim_));
}

int PrototypeQueue::label(std::size_t i) const {
  if (i >= size_) throw LookupError("prototype queue index out of range");
  return labels_[slot(i)];
}

void ema_update(std::span<float> gallery, std::span<const float> probe, double alpha) {
  if (gallery.size() != probe.size()) {
    throw ShapeError("ema_update: " + std::to_string(gallery.size()) + " gallery values vs " +
                     std::to_string(probe.size()) + " probe values");
  }
  const float a = static_cast<float>(alpha);
  const float b = static_cast<float>(1.0 - alpha);
  for (std::size_t i = 0; i < gallery.size(); ++i) gallery[i] = a * gallery[i] + b * probe[i];
}

void ema_update(BackboneNet<float>& gallery, BackboneNet<float>& probe, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("ema_update: alpha must be in [0, 1]");
  auto g = gallery.parameters();
  auto p = probe.parameters();
  if (g.size() != p.size()) throw ShapeError("ema_update: networks have different parameter counts");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].name != p[i].name || !g[i].param->value.same_shape(p[i].param->value)) {
      throw ShapeError("ema_update: parameter " + g[i].name + " " + g[i].param->value.shape_string() +
                       " vs " + p[i].name + " " + p[i].param->value.shape_string());
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    ema_update(g[i].param->value.values(), std::span<const float>(p[i].param->value.values()), alpha);
  }
}

template <typename T>
SstLossResult<T> sst_prototype_loss(const HeadMatrix<T>& probe, const HeadMatrix<T>& gallery,
                                    std::span<const int> labels, const PrototypeQueue& queue,
                                    double scale, double margin, bool compute_grad) {
  const Eigen::Index b = probe.rows(), d = probe.cols();
  if (gallery.rows() != b || gallery.cols() != d || static_cast<Eigen::Index>(labels.size()) != b) {
    throw ShapeError("sst loss: probe, gallery and label counts disagree");
  }
  if (queue.dim() != d) throw ShapeError("sst loss: queue dimension differs from the features");
  if (b == 0) throw ValueError("sst loss: empty batch");

  HeadMatrix<T> q(static_cast<Eigen::Index>(queue.size()), d);
  for (std::size_t j = 0; j < queue.size(); ++j) {
    const auto f = queue.feature(j);
    for (Eigen::Index k = 0; k < d; ++k) q(static_cast<Eigen::Index>(j), k) = static_cast<T>(f[static_cast<std::size_t>(k)]);
  }
  SstLossResult<T> out;
  if (compute_grad) out.grad_probe = HeadMatrix<T>::Zero(b, d);
  const T s = static_cast<T>(scale), m = static_cast<T>(margin);
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const T norm = probe.row(i).norm();
    if (!(norm > T(0)) || !std::isfinite(static_cast<double>(norm))) {
      throw ValueError("sst loss: zero or non-finite probe feature at row " + std::to_string(i));
    }
    const auto phat = (probe.row(i) / norm).eval();
    std::vector<Eigen::Index> neg;
    for (std::size_t j = 0; j < queue.size(); ++j) {
      if (queue.label(j) != labels[static_cast<std::size_t>(i)]) neg.push_back(static_cast<Eigen::Index>(j));
    }
    out.negatives += neg.size();
    std::vector<T> z(neg.size() + 1);
    z[0] = s * (phat.dot(gallery.row(i)) - m);
    for (std::size_t j = 0; j < neg.size(); ++j) z[j + 1] = s * phat.dot(q.row(neg[j]));
    const T zmax = *std::max_element(z.begin(), z.end());
    if (z[0] == zmax) ++correct;
    T sum = 0;
    for (T v : z) sum += std::exp(v - zmax);
    loss += static_cast<double>(std::log(sum) + zmax - z[0]);
    if (!compute_grad) continue;
    // dL/dphat = s * ((p0 - 1) g_i + sum_j p_j q_j), then projected.
    Eigen::Matrix<T, 1, Eigen::Dynamic> gphat = (std::exp(z[0] - zmax) / sum - T(1)) * gallery.row(i);
    for (std::size_t j = 0; j < neg.size(); ++j) gphat += (std::exp(z[j + 1] - zmax) / sum) * q.row(neg[j]);
    gphat *= s / static_cast<T>(b);
    out.grad_probe.row(i) = (gphat - gphat.dot(phat) * phat) / norm;
  }
  out.loss = static_cast<T>(loss / static_cast<double>(b));
  out.accuracy = static_cast<double>(correct) / static_cast<double>(b);
  return out;
}

template SstLossResult<float> sst_prototype_loss<float>(const HeadMatrix<float>&, const HeadMatrix<float>&,
                                                        std::span<const int>, const PrototypeQueue&, double,
                                                        double, bool);
template SstLossResult<double> sst_prototype_loss<double>(const HeadMatrix<double>&, const HeadMatrix<double>&,
                                                          std::span<const int>, const PrototypeQueue&, double,
                                                          double, bool);

SstState make_sst_state(const RunConfig& config) {
  const BackboneSpec spec = resolve_backbone_spec(config.backbone);
  SstState st{create_backbone<float>(spec, config.seed), create_backbone<float>(spec, config.seed),
              PrototypeQueue(config.sst.queue_capacity, spec.embedding_dim), {}};
  st.gallery->copy_state_from(*st.probe);
  return st;
}

SstStepResult sst_step(SstState& state, const Tensor<float>& first, const Tensor<float>& second,
                       std::span<const int> labels, const SstSpec& spec, double lr, const OptimSpec& optim) {
  const int b = first.n();
  if (second.shape() != first.shape() || static_cast<std::size_t>(b) != labels.size()) {
    throw ShapeError("sst_step: the two image batches and the label list must agree in size");
  }
  std::unordered_set<int> seen;
  for (int l : labels) {
    if (!seen.insert(l).second) {
      throw ValueError("sst_step: identity " + std::to_string(l) + " appears twice in one batch");
    }
  }
  const int d = state.probe->spec().embedding_dim;
  state.probe->zero_grad();
  const Tensor<float> pe = state.probe->forward(first, nn::Mode::Train);
  const Tensor<float> ge = state.gallery->forward(second, nn::Mode::Train);
  const HeadMatrix<float> p = Eigen::Map<const HeadMatrix<float>>(pe.data(), b, d);
  HeadMatrix<float> g = Eigen::Map<const HeadMatrix<float>>(ge.data(), b, d);
  for (int i = 0; i < b; ++i) {
    const float norm = g.row(i).norm();
    if (!(norm > 0.0f)) throw ValueError("sst_step: zero gallery feature");
    g.row(i) /= norm;
  }
  // Loss against the queue as it was before this batch.
  const SstLossResult<float> lr_out = sst_prototype_loss<float>(p, g, labels, state.queue, spec.scale, spec.margin);
  if (!std::isfinite(lr_out.loss)) throw ValueError("sst_step: non-finite loss");
  Tensor<float> grad(b, d, 1, 1);
  std::copy(lr_out.grad_probe.data(), lr_out.grad_probe.data() + lr_out.grad_probe.size(), grad.data());
  state.probe->backward(grad);
  const auto params = state.probe->parameters();
  sgd_step<float>(params, lr, optim, state.momentum);
  ema_update(*state.gallery, *state.probe, spec.gallery_momentum);
  for (int i = 0; i < b; ++i) {
    state.queue.push(std::span<const float>(g.data() + static_cast<std::ptrdiff_t>(i) * d, static_cast<std::size_t>(d)),
                     labels[static_cast<std::size_t>(i)]);
  }
  return {static_cast<double>(lr_out.loss), lr_out.accuracy};
}

namespace {

using detail::Clock;

Checkpoint make_sst_checkpoint(const RunConfig& config, const BackboneSpec& spec, SstState& st,
                               const std::vector<std::string>& identities, int epochs_completed) {
  Checkpoint ckpt;
  std::vector<int> labels;
  std::vector<float> feats;
  for (std::size_t i = 0; i < st.queue.size(); ++i) {
    labels.push_back(st.queue.label(i));
    const auto f = st.queue.feature(i);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  const json meta = {{"kind", "facelab-train"},
                     {"mode", to_string(TrainMode::SemiSiamese)},
                     {"epochs_completed", epochs_completed},
                     {"backbone", backbone_to_json(spec)},
                     {"identities", identities},
                     {"queue_labels", labels},
                     {"queue_pushes", st.queue.pushes()},
                     {"config", run_config_to_json(config)}};
  ckpt.meta_json = meta.dump();
  store_backbone(ckpt, *st.probe, "backbone.");
  store_backbone(ckpt, *st.gallery, "gallery.");
  if (!labels.empty()) ckpt.add("sst.queue", {static_cast<int>(labels.size()), st.queue.dim(), 1, 1}, feats);
  detail::add_buffers(ckpt, "optim.backbone.", st.momentum);
  return ckpt;
}

int restore_sst(const std::filesystem::path& path, const BackboneSpec& spec, SstState& st,
                const std::vector<std::string>& identities) {
  const Checkpoint ckpt = read_checkpoint(path);
  int epochs = 0;
  std::vector<int> labels;
  try {
    const json meta = json::parse(ckpt.meta_json);
    if (meta.value("mode", "") != to_string(TrainMode::SemiSiamese)) {
      throw ConfigError(path.string() + ": not a semi-siamese training checkpoint");
    }
    if (!(backbone_from_json(meta.at("backbone")) == spec)) {
      throw ConfigError(path.string() + ": backbone spec differs from the config");
    }
    if (meta.at("identities").get<std::vector<std::string>>() != identities) {
      throw ConfigError(path.string() + ": identity list differs from the training manifest");
    }
    epochs = meta.at("epochs_completed").get<int>();
    labels = meta.at("queue_labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad training metadata: " + e.what());
  }
  restore_backbone(ckpt, *st.probe, "backbone.");
  restore_backbone(ckpt, *st.gallery, "gallery.");
  st.queue = PrototypeQueue(st.queue.capacity(), st.queue.dim());
  if (!labels.empty()) {
    const auto* q = ckpt.find("sst.queue");
    if (!q || q->data.size() != labels.size() * static_cast<std::size_t>(st.queue.dim())) {
      throw ShapeError(path.string() + ": prototype queue tensor missing or of the wrong size");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      st.queue.push(std::span<const float>(q->data).subspan(i * static_cast<std::size_t>(st.queue.dim()),
                                                            static_cast<std::size_t>(st.queue.dim())),
                    labels[i]);
    }
  }
  const auto params = st.probe->parameters();
  st.momentum = detail::read_buffers(ckpt, "optim.backbone.", params);
  return epochs;
}

}  // namespace

TrainResult train_semi_siamese(const RunConfig& config, const DatasetManifest& manifest,
                               const TrainOptions& options) {
  validate_run_config(config);
  if (manifest.samples.empty()) throw ValueError("training manifest is empty");
  const BackboneSpec spec = resolve_backbone_spec(config.backbone);
  const std::vector<std::string> identities = manifest.identities();
  const std::vector<int> labels = manifest.labels();
  std::vector<std::vector<std::size_t>> by_label(identities.size());
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<int> usable;
  for (std::size_t l = 0; l < by_label.size(); ++l) {
    if (by_label[l].size() >= 2) usable.push_back(static_cast<int>(l));
  }
  const int batch = config.batch_size();
  if (usable.size() < static_cast<std::size_t>(batch)) {
    throw ConfigError("semi-siamese training needs at least batch_size (" + std::to_string(batch) +
                      ") identities with two or more images, found " + std::to_string(usable.size()));
  }
  SstState st = make_sst_state(config);
  int start_epoch = 0;
  if (options.resume) start_epoch = restore_sst(*options.resume, spec, st, identities);

  const int total = options.stop_after_epochs >= 0
                        ? std::min(options.stop_after_epochs, config.schedule.total_epochs)
                        : config.schedule.total_epochs;
  detail::MetricLog log(options.out_dir);
  TrainResult result;
  result.epochs_completed = start_epoch;
  const std::size_t steps = usable.size() / static_cast<std::size_t>(batch);
  for (int epoch = start_epoch; epoch < total; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_at(config.schedule, epoch);
    std::vector<int> order = usable;
    Rng order_rng(derive_seed(config.seed, "data_order", static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(std::span<int>(order));
    double loss_sum = 0.0, acc_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::size_t> a, b;
      std::vector<int> y;
      for (int k = 0; k < batch; ++k) {
        const int l = order[step * static_cast<std::size_t>(batch) + static_cast<std::size_t>(k)];
        const auto& pool = by_label[static_cast<std::size_t>(l)];
        // Two distinct images in random order, so roles swap across epochs.
        Rng pick(derive_seed(config.seed, "pair_pick", static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(l)));
        const auto i0 = pick.uniform_int(pool.size());
        auto i1 = pick.uniform_int(pool.size() - 1);
        if (i1 >= i0) ++i1;
        a.push_back(pool[i0]);
        b.push_back(pool[i1]);
        y.push_back(l);
      }
      const Tensor<float> xa = detail::load_batch(manifest, a, config.transform, spec, config.seed, epoch);
      const Tensor<float> xb = detail::load_batch(manifest, b, config.transform, spec, config.seed, epoch);
      const SstStepResult r = sst_step(st, xa, xb, y, config.sst, lr, config.optim);
      loss_sum += r.loss;
      acc_sum += r.accuracy;
      if (result.step_losses.size() < options.record_step_losses) result.step_losses.push_back(r.loss);
    }
    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(steps), acc_sum / static_cast<double>(steps),
                   detail::elapsed_ms(t0)};
    spdlog::info("epoch {:>3}  lr {:.4g}  loss {:.4f}  acc {:.4f}  queue {}  ({:.0f} ms)", entry.epoch,
                 entry.lr, entry.loss_mean, entry.acc, st.queue.size(), entry.wall_ms);
    result.epochs.push_back(entry);
    log.write(entry);
    if (!options.out_dir.empty()) {
      std::filesystem::create_directories(options.out_dir / "checkpoints");
      result.last_checkpoint = checkpoint_path(options.out_dir, epoch + 1);
      write_checkpoint(result.last_checkpoint, make_sst_checkpoint(config, spec, st, identities, epoch + 1));
    }
    if (options.on_epoch) options.on_epoch(entry);
    result.epochs_completed = epoch + 1;
  }
  result.net = std::move(st.probe);
  result.gallery_net = std::move(st.gallery);
  result.identities = identities;
  return result;
}

}  // namespace facelab
