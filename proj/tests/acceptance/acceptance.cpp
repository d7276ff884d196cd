#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "facelab/config.hpp"
#include "facelab/eval.hpp"
#include "facelab/features.hpp"
#include "facelab/manifest.hpp"
#include "facelab/maskgen.hpp"
#include "facelab/pairs.hpp"
#include "facelab/schedule.hpp"
#include "facelab/sst.hpp"
#include "facelab/synthetic.hpp"
#include "facelab/trainer.hpp"
#include "head_check.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace facelab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

const HeadVariant kAllVariants[] = {
    HeadVariant::Softmax,    HeadVariant::AmSoftmax, HeadVariant::ArcFace,
    HeadVariant::AdaCos,     HeadVariant::AdamSoftmax, HeadVariant::Circle,
    HeadVariant::Curricular, HeadVariant::MvSoftmax, HeadVariant::NpcFace,
};

// Datasets and models shared between criteria, built on first use.
class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  RunConfig config(const std::string& name) const {
    return resolve_config(fs::path(FACELAB_SOURCE_DIR) / "configs" / (name + ".cfg"));
  }

  const SyntheticDataset& toy_train() {
    if (!toy_train_) {
      SyntheticFaceOptions o;
      o.num_identities = 32;
      o.images_per_identity = 20;
      o.seed = 11;
      toy_train_ = generate_synthetic_faces(root_ / "toy_train", o);
    }
    return *toy_train_;
  }

  // Unseen identities for verification pairs and the identification gallery.
  const SyntheticDataset& toy_heldout() {
    if (!toy_heldout_) {
      SyntheticFaceOptions o;
      o.num_identities = 40;
      o.images_per_identity = 10;
      o.first_identity = 1000;
      o.seed = 12;
      toy_heldout_ = generate_synthetic_faces(root_ / "toy_heldout", o);
      heldout_pairs_ = generate_pairs(toy_heldout_->manifest, 600, 12);
    }
    return *toy_heldout_;
  }

  const PairList& heldout_pairs() {
    toy_heldout();
    return *heldout_pairs_;
  }

  struct Model {
    TrainResult result;
    double seconds = 0.0;
  };

  Model& plain_model() {
    if (!plain_) {
      const auto t = Clock::now();
      plain_ = Model{train(config("toy"), toy_train().manifest), 0.0};
      plain_->seconds = seconds_since(t);
    }
    return *plain_;
  }

  std::vector<MaskTemplate> templates() const {
    return {make_solid_template(uv_size()), make_patterned_template(uv_size())};
  }

  static int uv_size() { return SyntheticFaceOptions{}.uv_size; }

 private:
  fs::path root_;
  std::optional<SyntheticDataset> toy_train_;
  std::optional<SyntheticDataset> toy_heldout_;
  std::optional<PairList> heldout_pairs_;
  std::optional<Model> plain_;
};

TransformSpec eval_spec(const RunConfig& c) { return eval_transform(c.transform); }

EmbeddingStore embed(BackboneNet<float>& net, const DatasetManifest& m, const RunConfig& c) {
  ExtractOptions o;
  o.abort_on_error = true;
  return extract_features(net, m, eval_spec(c), o).store;
}

// Eval-mode nearest-class-weight accuracy on the training images.
double train_accuracy(TrainResult& r, const DatasetManifest& m, const RunConfig& c) {
  const auto store = embed(*r.net, m, c);
  std::map<std::string, int> label;
  for (std::size_t i = 0; i < r.identities.size(); ++i) label[r.identities[i]] = static_cast<int>(i);
  const auto& w = r.head.weight;
  std::size_t correct = 0;
  for (const auto& rec : store.records()) {
    int best = -1;
    double best_cos = -2.0;
    for (int j = 0; j < w.rows(); ++j) {
      double dot = 0.0, n2 = 0.0;
      for (int d = 0; d < w.cols(); ++d) {
        dot += static_cast<double>(w(j, d)) * rec.vector[static_cast<std::size_t>(d)];
        n2 += static_cast<double>(w(j, d)) * w(j, d);
      }
      const double cosv = dot / std::sqrt(n2);
      if (cosv > best_cos) {
        best_cos = cosv;
        best = j;
      }
    }
    correct += best == label.at(rec.id) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(store.size());
}

// ---------------------------------------------------------------- criteria

Outcome head_gradients(Workspace&) {
  const auto t = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (auto v : kAllVariants) {
    const auto err = testing::check_head_gradients(testing::make_head_problem(v, 1));
    if (err.worst() >= worst) {
      worst = err.worst();
      worst_name = to_string(v);
    }
  }
  const double s = seconds_since(t);
  return {worst < 1e-4 && s < 60.0,
          fmt("9 heads, B=8 C=16 D=32 double; worst rel err %.2e (%s), %.1f s", worst, worst_name.c_str(), s)};
}

Outcome head_reductions(Workspace&) {
  double worst = 0.0;
  for (auto v : {HeadVariant::AmSoftmax, HeadVariant::ArcFace, HeadVariant::MvSoftmax, HeadVariant::NpcFace,
                 HeadVariant::AdamSoftmax, HeadVariant::Softmax}) {
    for (std::uint64_t seed : {1u, 7u}) {
      auto p = testing::make_head_problem(v, seed);
      p.spec.margin = 0;
      p.spec.margin2 = 0;
      p.spec.mv_weight = 1;
      p.spec.lambda = 0;
      for (auto& m : p.state.margins) m = 0;
      const auto r = head_forward(p.spec, p.weights, p.state, p.features, p.labels, false);
      worst = std::max(worst, std::abs(r.loss - testing::scaled_softmax_loss(p.features, p.weights.weight, p.labels, p.spec.scale)));
    }
  }
  auto cspec = default_head_spec(HeadVariant::Curricular, 16, 32);
  cspec.margin = 0;
  auto cp = testing::make_easy_problem(cspec, 3, 0.0);
  cp.state.curricular_t = 0;
  const auto cr = head_forward(cp.spec, cp.weights, cp.state, cp.features, cp.labels, false);
  worst = std::max(worst, std::abs(cr.loss - testing::scaled_softmax_loss(cp.features, cp.weights.weight, cp.labels, cspec.scale)));

  bool mv_exact = true;
  for (std::uint64_t seed : {5u, 6u, 8u}) {
    auto spec = default_head_spec(HeadVariant::MvSoftmax, 16, 32);
    auto p = testing::make_easy_problem(spec, seed, spec.margin + 1e-3);
    auto am = spec;
    am.variant = HeadVariant::AmSoftmax;
    const auto a = head_forward(spec, p.weights, p.state, p.features, p.labels);
    const auto b = head_forward(am, p.weights, p.state, p.features, p.labels);
    mv_exact = mv_exact && a.loss == b.loss && a.logits == b.logits && a.grad_features == b.grad_features &&
               a.grad_weights == b.grad_weights;
  }
  return {worst < 1e-6 && mv_exact,
          fmt("max |loss - scaled softmax| %.2e over 7 heads; mv_softmax == am_softmax without hard negatives: %s",
              worst, mv_exact ? "exact" : "differs")};
}

Outcome toy_convergence(Workspace& ws) {
  const auto t = Clock::now();
  const auto cfg = ws.config("toy");
  auto& model = ws.plain_model();
  const double train_acc = train_accuracy(model.result, ws.toy_train().manifest, cfg);
  const auto store = embed(*model.result.net, ws.toy_heldout().manifest, cfg);
  const auto report = verify_10fold(store, ws.heldout_pairs());
  const double s = seconds_since(t);
  return {train_acc >= 0.99 && report.mean >= 0.95 && s < 600.0,
          fmt("train acc %.2f%% (last epoch in-loop %.2f%%), held-out 10-fold %.2f%% +- %.2f over %zu pairs of "
              "unseen identities, %.0f s (training %.0f s)",
              100 * train_acc, 100 * model.result.epochs.back().acc, 100 * report.mean, 100 * report.std,
              report.pair_count, s, model.seconds)};
}

Outcome protocol_oracles(Workspace&) {
  std::size_t verify_mismatch = 0, identify_mismatch = 0;
  bool monotone = true, full_rank = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto vi = testing::random_verify_instance(seed, 100 + static_cast<int>(seed) * 7,
                                                    8 + static_cast<int>(seed % 5) * 8, 0.6 + 0.02 * static_cast<double>(seed % 10));
    const auto got = verify_10fold(vi.store, vi.pairs);
    const auto want = testing::brute_verify(vi.store, vi.pairs);
    bool same = got.fold_accuracy == want.fold_accuracy && got.mean == want.mean && got.std == want.std;
    for (std::size_t f = 0; f < want.thresholds.size(); ++f) {
      same = same && std::abs(got.thresholds[f] - want.thresholds[f]) < 1e-9;
    }
    verify_mismatch += same ? 0 : 1;

    const int probes = 1 + static_cast<int>((seed * 37) % 100);
    const int distractors = static_cast<int>((seed * 211) % 2001);
    const auto ii = testing::random_identify_instance(seed, probes, distractors, 16, 0.4 + 0.05 * static_cast<double>(seed % 8));
    IdentifyOptions opt;
    opt.kmax = std::min(10, probes + distractors);
    opt.block_size = 1 + (seed * 13) % 300;
    const auto cmc = identify_rank_k(ii.probes, ii.gallery, ii.distractors, opt);
    identify_mismatch += cmc.rank_acc == testing::brute_cmc(ii.probes, ii.gallery, ii.distractors, opt.kmax) ? 0 : 1;
    for (std::size_t k = 1; k < cmc.rank_acc.size(); ++k) monotone = monotone && cmc.rank_acc[k] >= cmc.rank_acc[k - 1];
    opt.kmax = probes + distractors;
    full_rank = full_rank && identify_rank_k(ii.probes, ii.gallery, ii.distractors, opt).rank_acc.back() == 1.0;
  }
  return {verify_mismatch == 0 && identify_mismatch == 0 && monotone && full_rank,
          fmt("50 instances each: verify mismatches %zu, identify mismatches %zu, CMC monotone %s, rank_acc[N] = 1 %s",
              verify_mismatch, identify_mismatch, monotone ? "yes" : "no", full_rank ? "yes" : "no")};
}

// EMA recurrence and FIFO order replayed against an independent model.
bool sst_invariants_hold(const RunConfig& base) {
  RunConfig cfg = base;
  cfg.backbone.width = 0.25;
  cfg.backbone.embedding_dim = 16;
  cfg.backbone.input_height = cfg.backbone.input_width = 16;
  cfg.sst.queue_capacity = 10;
  auto state = make_sst_state(cfg);
  std::vector<std::vector<float>> gallery;
  for (const auto& p : state.gallery->parameters()) gallery.push_back(p.param->value.storage());
  const float a = static_cast<float>(cfg.sst.gallery_momentum);
  const float b = static_cast<float>(1.0 - cfg.sst.gallery_momentum);
  Rng rng(3);
  std::vector<int> expected_labels;
  bool ok = true;
  for (int step = 0; step < 6; ++step) {
    Tensor<float> x1(4, 3, 16, 16), x2(4, 3, 16, 16);
    for (auto& v : x1.values()) v = static_cast<float>(rng.normal());
    for (auto& v : x2.values()) v = static_cast<float>(rng.normal());
    const std::vector<int> labels{4 * step, 4 * step + 1, 4 * step + 2, 4 * step + 3};
    sst_step(state, x1, x2, labels, cfg.sst, 0.05, cfg.optim);
    auto probe = state.probe->parameters();
    auto gal = state.gallery->parameters();
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      const auto& pv = probe[i].param->value.storage();
      for (std::size_t k = 0; k < pv.size(); ++k) gallery[i][k] = a * gallery[i][k] + b * pv[k];
      ok = ok && gal[i].param->value.storage() == gallery[i];
    }
    expected_labels.insert(expected_labels.end(), labels.begin(), labels.end());
    const std::size_t keep = std::min<std::size_t>(10, expected_labels.size());
    ok = ok && state.queue.size() == keep;
    for (std::size_t i = 0; i < keep; ++i) ok = ok && state.queue.label(i) == expected_labels[expected_labels.size() - keep + i];
  }
  return ok;
}

Outcome sst_direction(Workspace& ws) {
  SyntheticFaceOptions so;
  so.num_identities = 64;
  so.images_per_identity = 2;
  so.seed = 21;
  so.write_posmaps = false;
  const auto shallow = generate_synthetic_faces(ws.root() / "shallow", so);
  const auto& held = ws.toy_heldout();
  std::string detail;
  bool all = true;
  double sum[2] = {0.0, 0.0};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double acc[2];
    int i = 0;
    for (const char* name : {"shallow_conventional", "shallow_sst"}) {
      auto cfg = ws.config(name);
      cfg.seed = seed;
      auto r = train(cfg, shallow.manifest);
      acc[i++] = verify_10fold(embed(*r.net, held.manifest, cfg), ws.heldout_pairs()).mean;
    }
    all = all && acc[1] >= acc[0];
    sum[0] += acc[0];
    sum[1] += acc[1];
    detail += fmt("seed %llu conv %.2f / sst %.2f; ", static_cast<unsigned long long>(seed), 100 * acc[0], 100 * acc[1]);
  }
  const bool inv = sst_invariants_hold(ws.config("shallow_sst"));
  detail += fmt("mean conv %.2f / sst %.2f; ", 100 * sum[0] / 3, 100 * sum[1] / 3);
  return {all && inv, detail + "EMA and FIFO invariants " + (inv ? "exact" : "violated")};
}

Outcome lr_schedule(Workspace&) {
  const auto s = schedule_preset("msceleb18");
  const double want[18] = {0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1,
                           0.01, 0.01, 0.01, 0.001, 0.001, 0.001, 0.0001, 0.0001};
  double worst = 0.0;
  for (int e = 0; e < 18; ++e) worst = std::max(worst, std::abs(lr_at(s, e) - want[e]) / want[e]);
  return {s.total_epochs == 18 && worst < 1e-12,
          fmt("msceleb18: %d epochs, lr(9)=%g lr(10)=%g lr(13)=%g lr(16)=%g, max rel dev %.1e", s.total_epochs,
              lr_at(s, 9), lr_at(s, 10), lr_at(s, 13), lr_at(s, 16), worst)};
}

Image smooth_image(int size) {
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(127.5 + 100 * std::sin(0.05 * x + 1.0)));
      img.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(127.5 + 100 * std::cos(0.04 * y)));
      img.at(x, y, 2) = static_cast<std::uint8_t>((x + 2 * y) % 256);
    }
  }
  return img;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome mask_synthesis(Workspace& ws) {
  double worst_rt = 0.0;
  for (auto surface : {SyntheticSurface::Plane, SyntheticSurface::Hemisphere, SyntheticSurface::Saddle}) {
    SyntheticPosmapParams p;
    p.surface = surface;
    p.yaw = 0.25;
    p.pitch = -0.1;
    const auto pm = make_synthetic_posmap(p);
    const Image img = smooth_image(112);
    RenderStats st;
    const Image out = render_uv_texture(image_to_uv_texture(img, pm), pm, img, &st);
    double err = 0.0;
    for (std::size_t i = 0; i < st.coverage.size(); ++i) {
      if (!st.coverage[i]) continue;
      for (int c = 0; c < 3; ++c) err += std::abs(static_cast<double>(out.pixels[i * 3 + c]) - img.pixels[i * 3 + c]);
    }
    worst_rt = std::max(worst_rt, err / (3.0 * static_cast<double>(st.pixels_covered)) / 255.0);
  }

  bool hard_exact = true;
  {
    Rng rng(2);
    UVTexture face(64, 64, 3);
    for (auto& v : face.pixels) v = static_cast<float>(rng.uniform(0, 255));
    const auto tmpl = make_patterned_template(64);
    const auto out = blend_uv(face, tmpl, 0);
    for (std::size_t t = 0; t < tmpl.region.size(); ++t) {
      for (int c = 0; c < 3; ++c) {
        const float want = tmpl.region[t] ? tmpl.texture.pixels[t * 3 + c] : face.pixels[t * 3 + c];
        hard_exact = hard_exact && out.pixels[t * 3 + c] == want;
      }
    }
  }

  SyntheticFaceOptions o;
  o.num_identities = 4;
  o.images_per_identity = 3;
  o.seed = 31;
  const auto data = generate_synthetic_faces(ws.root() / "mask_src", o);
  MaskSynthesisOptions mo;
  mo.seed = 5;
  const auto a = synthesize_masked_dataset(data.manifest, data.posmap_dir, ws.templates(), ws.root() / "mask_a", mo);
  const auto b = synthesize_masked_dataset(data.manifest, data.posmap_dir, ws.templates(), ws.root() / "mask_b", mo);
  bool reproducible = a.template_choices == b.template_choices;
  for (std::size_t i = 0; i < a.manifest.samples.size(); ++i) {
    if (!a.manifest.samples[i].masked) continue;
    reproducible = reproducible && file_bytes(ws.root() / "mask_a" / a.manifest.samples[i].image_path) ==
                                       file_bytes(ws.root() / "mask_b" / b.manifest.samples[i].image_path);
  }
  const bool doubled = a.manifest.samples.size() == 2 * data.manifest.samples.size();
  return {worst_rt < 2.0 / 255.0 && hard_exact && reproducible && doubled,
          fmt("round-trip mean abs err %.3f/255 (worst of 3 posmaps); hard blend %s; synthesis %s; manifest %zu -> %zu",
              worst_rt * 255.0, hard_exact ? "exact" : "inexact", reproducible ? "byte-reproducible" : "differs",
              data.manifest.samples.size(), a.manifest.samples.size())};
}

Outcome masked_direction(Workspace& ws) {
  const auto cfg = ws.config("toy");
  const auto& train_set = ws.toy_train();
  MaskSynthesisOptions mo;
  mo.seed = 41;
  const auto augmented = synthesize_masked_dataset(train_set.manifest, train_set.posmap_dir, ws.templates(),
                                                   ws.root() / "toy_train_masked", mo);
  auto masked_model = train(cfg, augmented.manifest);
  auto& plain = ws.plain_model().result;

  // Gallery: the first image of every unseen identity. Probes: the other
  // images, plain and with a virtual mask. Distractors: further identities.
  const auto& held = ws.toy_heldout();
  std::vector<SampleRecord> gallery_s, probe_s;
  std::set<std::string> seen;
  for (const auto& s : held.manifest.samples) {
    (seen.insert(s.identity).second ? gallery_s : probe_s).push_back(s);
  }
  const auto gallery_m = make_manifest(held.manifest.root, gallery_s);
  const auto probe_m = make_manifest(held.manifest.root, probe_s);
  MaskSynthesisOptions po;
  po.seed = 42;
  const auto probe_masked_all = synthesize_masked_dataset(probe_m, held.posmap_dir, ws.templates(),
                                                          ws.root() / "probes_masked", po);
  std::vector<SampleRecord> masked_s;
  for (const auto& s : probe_masked_all.manifest.samples) {
    if (s.masked) masked_s.push_back(s);
  }
  const auto probe_masked = make_manifest(probe_masked_all.manifest.root, masked_s);
  SyntheticFaceOptions dopt;
  dopt.num_identities = 200;
  dopt.images_per_identity = 1;
  dopt.first_identity = 5000;
  dopt.seed = 13;
  dopt.write_posmaps = false;
  const auto distractor_data = generate_synthetic_faces(ws.root() / "distractors", dopt);

  IdentifyOptions io;
  io.kmax = 1;
  auto rank1 = [&](BackboneNet<float>& net, const DatasetManifest& probes, bool masked) {
    const auto g = embed(net, gallery_m, cfg);
    const auto d = embed(net, distractor_data.manifest, cfg);
    const auto p = embed(net, probes, cfg);
    return (masked ? evaluate_masked(p, g, d, io) : identify_rank_k(p, g, d, io)).rank_acc[0];
  };
  const double plain_masked = rank1(*plain.net, probe_masked, true);
  const double aug_masked = rank1(*masked_model.net, probe_masked, true);
  const double plain_clean = rank1(*plain.net, probe_m, false);
  const double aug_clean = rank1(*masked_model.net, probe_m, false);
  const bool pass = aug_masked > plain_masked && std::abs(aug_clean - plain_clean) <= 0.05;
  return {pass, fmt("masked rank-1: mask-trained %.2f%% vs plain %.2f%%; unmasked rank-1: %.2f%% vs %.2f%% "
                    "(%zu probes, %zu gallery, %zu distractors)",
                    100 * aug_masked, 100 * plain_masked, 100 * aug_clean, 100 * plain_clean,
                    probe_masked.samples.size(), gallery_m.samples.size(), distractor_data.manifest.samples.size())};
}

Outcome determinism(Workspace& ws) {
  SyntheticFaceOptions o;
  o.num_identities = 8;
  o.images_per_identity = 4;
  o.image_size = 16;
  o.uv_size = 32;
  o.seed = 5;
  o.write_posmaps = false;
  const auto data = generate_synthetic_faces(ws.root() / "det", o);
  RunConfig c;
  c.seed = 17;
  c.backbone.embedding_dim = 16;
  c.backbone.width = 0.25;
  c.backbone.input_height = c.backbone.input_width = 16;
  c.schedule.total_epochs = 3;
  c.schedule.milestones = {2};
  c.schedule.batch_size = 8;
  c.transform.rotation_degrees = 8;
  TrainOptions rec;
  rec.record_step_losses = 10;
  const auto a = train(c, data.manifest, rec);
  const auto b = train(c, data.manifest, rec);
  const bool losses = a.step_losses.size() == 10 && a.step_losses == b.step_losses;

  TrainOptions first;
  first.out_dir = ws.root() / "det_run";
  first.stop_after_epochs = 1;
  train(c, data.manifest, first);
  TrainOptions second;
  second.out_dir = ws.root() / "det_run";
  second.resume = checkpoint_path(ws.root() / "det_run", 1);
  auto resumed = train(c, data.manifest, second);
  bool resume_equal = a.head.weight == resumed.head.weight && a.head_state == resumed.head_state;
  auto pa = a.net->parameters();
  auto pr = resumed.net->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) resume_equal = resume_equal && pa[i].param->value == pr[i].param->value;
  auto ba = a.net->buffers();
  auto br = resumed.net->buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) resume_equal = resume_equal && *ba[i].tensor == *br[i].tensor;

  std::vector<Image> images;
  for (const auto& s : data.manifest.samples) images.push_back(read_image(data.manifest.root / s.image_path));
  const auto spec = eval_transform(c.transform);
  const auto ref = embed_images(*a.net, images, spec, false, 32);
  double worst = 0.0;
  for (int bs : {1, 3, 7}) {
    const auto e = embed_images(*a.net, images, spec, false, bs);
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t d = 0; d < e[i].size(); ++d) worst = std::max(worst, static_cast<double>(std::abs(e[i][d] - ref[i][d])));
    }
  }
  return {losses && resume_equal && worst <= 1e-6,
          fmt("first 10 step losses %s; resume %s; batch 1/3/7 vs 32 max diff %.1e", losses ? "bitwise equal" : "differ",
              resume_equal ? "equals straight-through" : "differs", worst)};
}

long peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::stol(line.substr(6));
  }
  return -1;
}

bool reset_peak_rss() {
  std::ofstream out("/proc/self/clear_refs");
  out << "5";
  return static_cast<bool>(out);
}

Outcome identification_scale(Workspace&) {
  const int dim = 512, probes = 100, distractors = 100000;
  Rng rng(77);
  EmbeddingStore p, g, d;
  auto unit = [&]() {
    std::vector<float> v(dim);
    double n2 = 0;
    for (auto& x : v) {
      x = static_cast<float>(rng.normal());
      n2 += static_cast<double>(x) * x;
    }
    for (auto& x : v) x = static_cast<float>(x / std::sqrt(n2));
    return v;
  };
  for (int i = 0; i < probes; ++i) {
    const auto v = unit();
    const std::string id = "p" + std::to_string(i);
    p.add({id, id + "/probe", testing::unit_noise(rng, v, 0.05), true});
    g.add({id, id + "/gallery", v, true});
  }
  for (int i = 0; i < distractors; ++i) {
    const std::string id = "d" + std::to_string(i);
    d.add({id, id, unit(), true});
  }
  IdentifyOptions opt;
  opt.kmax = 10;
  const bool reset = reset_peak_rss();
  const long before = peak_rss_kb();
  const auto t = Clock::now();
  const auto r = identify_rank_k(p, g, d, opt);
  const double s = seconds_since(t);
  const long grown_kb = peak_rss_kb() - before;
  const std::size_t bs = opt.block_size;
  const std::size_t pb = std::min<std::size_t>(bs, probes);
  const double bound_mb = static_cast<double>((pb * dim + bs * dim + pb * bs) * sizeof(double)) / 1048576.0 + 16.0;
  const double full_mb = static_cast<double>(probes) * (distractors + probes) * sizeof(double) / 1048576.0;
  const double grown_mb = static_cast<double>(grown_kb) / 1024.0;
  const bool memory_ok = !reset || grown_mb <= bound_mb;
  return {s < 60.0 && memory_ok && r.rank_acc[0] == 1.0,
          fmt("%d probes x %d distractors, D=%d: %.2f s; peak RSS growth %.1f MB (block %zu bound %.1f MB, full "
              "matrix would be %.1f MB)%s",
              probes, distractors, dim, s, grown_mb, bs, bound_mb, full_mb, reset ? "" : " [peak reset unavailable]")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facelab acceptance checks"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "facelab_acceptance").string();
  bool keep = false;
  app.add_option("criteria", only, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--work", work, "Scratch directory");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<std::pair<std::string, std::function<Outcome(Workspace&)>>> criteria = {
      {"head gradient suite", head_gradients},
      {"head reductions", head_reductions},
      {"toy convergence", toy_convergence},
      {"protocol oracles", protocol_oracles},
      {"semi-siamese direction on shallow data", sst_direction},
      {"learning-rate schedule", lr_schedule},
      {"mask synthesis", mask_synthesis},
      {"masked-recognition direction", masked_direction},
      {"determinism", determinism},
      {"identification at scale", identification_scale},
  };
  fs::remove_all(work);
  int failures = 0;
  {
    Workspace ws(work);
    for (std::size_t i = 0; i < criteria.size(); ++i) {
      const int n = static_cast<int>(i) + 1;
      if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
      Outcome o;
      try {
        o = criteria[i].second(ws);
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
      failures += o.pass ? 0 : 1;
      std::printf("criterion %d %s: %s  %s\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
      std::fflush(stdout);
    }
  }
  if (!keep) fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
