#include "facelab/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "facelab/checkpoint.hpp"
#include "facelab/config.hpp"
#include "facelab/error.hpp"
#include "facelab/eval.hpp"
#include "facelab/features.hpp"
#include "facelab/manifest.hpp"
#include "facelab/maskgen.hpp"
#include "facelab/pairs.hpp"
#include "facelab/pipeline.hpp"
#include "facelab/report.hpp"
#include "facelab/synthetic.hpp"
#include "facelab/trainer.hpp"
#include "json_util.hpp"

namespace facelab {

namespace {

namespace fs = std::filesystem;

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string manifest;
  std::string out;
  std::string resume;
};

struct SourceArgs {
  std::string checkpoint;
  bool flip_fusion = false;
  int batch_size = 64;
};

struct EvalArgs {
  std::string protocol = "verify";
  std::string pairs;
  std::string store;
  std::string probe;
  std::string gallery;
  std::string distractors;
  int folds = 10;
  int kmax = 10;
  std::size_t block_size = 4096;
  std::string report;
  std::string out;
  std::string method = "model";
  std::string benchmark;
  SourceArgs source;
};

struct ExtractArgs {
  std::string manifest;
  std::string out;
  bool abort_on_error = false;
  SourceArgs source;
};

struct SynthMaskArgs {
  std::string manifest;
  std::string posmaps;
  std::string templates;
  std::string out;
  std::uint64_t seed = 0;
  int feather = kDefaultFeather;
};

struct DemoArgs {
  std::string checkpoint;
  std::vector<std::string> images;
  double threshold = 0.5;
  bool flip_fusion = false;
  std::string out;
};

struct SynthDataArgs {
  std::string out;
  SyntheticFaceOptions faces;
  int pairs = 0;
  bool templates = false;
  bool annotations = false;
};

TransformSpec checkpoint_transform(const fs::path& checkpoint) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  try {
    const json meta = json::parse(ckpt.meta_json);
    if (meta.contains("config")) return eval_transform(transform_from_json(meta.at("config").at("transform")));
  } catch (const json::exception& e) {
    throw FormatError(checkpoint.string() + ": bad checkpoint metadata: " + e.what());
  }
  return eval_transform(TransformSpec{});
}

bool is_store(const std::string& path) { return fs::path(path).extension() == ".fxze"; }

EmbeddingStore load_source(const std::string& input, const SourceArgs& src, const char* what) {
  if (is_store(input)) return read_embedding_store(input);
  if (src.checkpoint.empty()) {
    throw ConfigError(std::string(what) + " '" + input + "' is a manifest; --checkpoint is required to embed it");
  }
  auto net = load_backbone_checkpoint(src.checkpoint);
  ExtractOptions opt;
  opt.batch_size = src.batch_size;
  opt.flip_fusion = src.flip_fusion;
  return extract_features(*net, load_manifest(input), checkpoint_transform(src.checkpoint), opt).store;
}

void emit_report_paths(const std::string& report, const std::string& out, const std::string& stem,
                       const std::function<void(const fs::path&, ReportFormat)>& write) {
  if (!report.empty()) write(report, report_format_for(report));
  if (!out.empty()) {
    write(fs::path(out) / "reports" / (stem + ".json"), ReportFormat::Json);
    write(fs::path(out) / "reports" / (stem + ".txt"), ReportFormat::Text);
  }
}

int run_train(const TrainArgs& a) {
  std::optional<fs::path> cfg_file;
  if (!a.config.empty()) cfg_file = a.config;
  const RunConfig cfg = resolve_config(cfg_file, a.overrides);
  const DatasetManifest manifest = load_manifest(a.manifest);
  const fs::path out(a.out);
  fs::create_directories(out / "reports");
  write_config_echo(out / "config.cfg", cfg);
  TrainOptions opt;
  opt.out_dir = out;
  if (!a.resume.empty()) opt.resume = a.resume;
  const TrainResult r = train(cfg, manifest, opt);
  json summary = {{"mode", to_string(cfg.mode)},
                  {"epochs_completed", r.epochs_completed},
                  {"identities", r.identities.size()},
                  {"samples", manifest.samples.size()},
                  {"checkpoint", r.last_checkpoint.string()}};
  if (!r.epochs.empty()) {
    summary["final_loss"] = r.epochs.back().loss_mean;
    summary["final_acc"] = r.epochs.back().acc;
  }
  std::ofstream(out / "reports" / "train_summary.json") << summary.dump(2) << "\n";
  std::cout << "trained " << r.epochs_completed << " epoch(s)";
  if (!r.epochs.empty()) std::cout << ", final loss " << r.epochs.back().loss_mean << ", acc " << r.epochs.back().acc;
  std::cout << "\ncheckpoint: " << r.last_checkpoint.string() << "\n";
  return 0;
}

int run_extract(const ExtractArgs& a) {
  auto net = load_backbone_checkpoint(a.source.checkpoint);
  ExtractOptions opt;
  opt.batch_size = a.source.batch_size;
  opt.flip_fusion = a.source.flip_fusion;
  opt.abort_on_error = a.abort_on_error;
  const ExtractResult r = extract_features(*net, load_manifest(a.manifest), checkpoint_transform(a.source.checkpoint), opt);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_embedding_store(r.store, a.out);
  std::cout << "wrote " << r.store.size() << " embeddings (dim " << r.store.dim() << ") to " << a.out;
  if (!r.skipped.empty()) std::cout << "; skipped " << r.skipped.size() << " unreadable image(s)";
  std::cout << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  if (a.protocol == "verify") {
    if (a.pairs.empty()) throw ConfigError("--pairs is required for the verify protocol");
    if (a.store.empty()) throw ConfigError("--store (embedding store or manifest) is required for the verify protocol");
    const EmbeddingStore store = load_source(a.store, a.source, "--store");
    const PairList pairs = parse_pairs(a.pairs, a.folds, &store);
    VerificationReport r = verify_10fold(store, pairs);
    r.method = a.method;
    r.benchmark = a.benchmark.empty() ? fs::path(a.pairs).stem().string() : a.benchmark;
    emit_report_paths(a.report, a.out, "verify", [&](const fs::path& p, ReportFormat f) { write_report(r, p, f); });
    std::cout << report_to_text(r);
    return 0;
  }
  if (a.protocol == "identify" || a.protocol == "identify-masked") {
    if (a.probe.empty() || a.gallery.empty()) throw ConfigError("--probe and --gallery are required for identification");
    const EmbeddingStore probe = load_source(a.probe, a.source, "--probe");
    const EmbeddingStore gallery = load_source(a.gallery, a.source, "--gallery");
    const EmbeddingStore distractors = a.distractors.empty() ? EmbeddingStore() : load_source(a.distractors, a.source, "--distractors");
    IdentifyOptions opt{a.kmax, a.block_size};
    CMCReport r = a.protocol == "identify" ? identify_rank_k(probe, gallery, distractors, opt)
                                           : evaluate_masked(probe, gallery, distractors, opt);
    r.method = a.method;
    r.benchmark = a.benchmark.empty() ? "identification" : a.benchmark;
    emit_report_paths(a.report, a.out, a.protocol, [&](const fs::path& p, ReportFormat f) { write_report(r, p, f); });
    std::cout << report_to_text(r);
    return 0;
  }
  throw ConfigError("unknown protocol '" + a.protocol + "' (expected verify, identify or identify-masked)");
}

int run_synth_mask(const SynthMaskArgs& a) {
  const auto templates = load_templates(a.templates);
  MaskSynthesisOptions opt;
  opt.seed = a.seed;
  opt.feather = a.feather;
  const auto r = synthesize_masked_dataset(load_manifest(a.manifest), a.posmaps, templates, a.out, opt);
  std::cout << "masked " << r.masked << " image(s), skipped " << r.skipped.size() << "; manifest "
            << (fs::path(a.out) / "manifest.tsv").string() << " lists " << r.manifest.samples.size() << " samples\n";
  return 0;
}

int run_pipeline_demo(const DemoArgs& a) {
  PipelineConfig cfg;
  cfg.checkpoint = a.checkpoint;
  cfg.threshold = a.threshold;
  cfg.flip_fusion = a.flip_fusion;
  cfg.normalization = checkpoint_transform(a.checkpoint);
  const auto pipeline = load_models(cfg);
  struct Face {
    std::string label;
    std::vector<float> embedding;
  };
  std::vector<Face> faces;
  json results = json::array();
  for (std::size_t k = 0; k < a.images.size(); ++k) {
    const std::string& path = a.images[k];
    const auto dets = read_annotations(annotation_path_for(path));
    const Image image = read_image(path);
    const auto rs = pipeline->process_image(image, dets);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const std::string label = path + "#" + std::to_string(i);
      if (!rs[i].ok) {
        std::cout << label << ": failed: " << rs[i].error << "\n";
        results.push_back({{"face", label}, {"ok", false}, {"error", rs[i].error}});
        continue;
      }
      std::cout << label << ": ok\n";
      results.push_back({{"face", label}, {"ok", true}});
      if (!a.out.empty()) {
        fs::create_directories(fs::path(a.out) / "crops");
        write_image(fs::path(a.out) / "crops" / (std::to_string(k) + "_" + fs::path(path).stem().string() + "_" + std::to_string(i) + ".png"), rs[i].crop);
      }
      faces.push_back({label, rs[i].embedding});
    }
  }
  json comparisons = json::array();
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (std::size_t j = i + 1; j < faces.size(); ++j) {
      const Comparison c = compare(faces[i].embedding, faces[j].embedding, a.threshold);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f", c.similarity);
      std::cout << faces[i].label << " vs " << faces[j].label << ": similarity " << buf
                << (c.same_identity ? "  same" : "  different") << "\n";
      comparisons.push_back({{"a", faces[i].label}, {"b", faces[j].label}, {"similarity", c.similarity}, {"same", c.same_identity}});
    }
  }
  if (!a.out.empty()) {
    fs::create_directories(fs::path(a.out) / "reports");
    std::ofstream(fs::path(a.out) / "reports" / "pipeline.json")
        << json{{"threshold", a.threshold}, {"faces", results}, {"comparisons", comparisons}}.dump(2) << "\n";
  }
  return 0;
}

int run_synth_data(const SynthDataArgs& a) {
  const fs::path out(a.out);
  const SyntheticDataset ds = generate_synthetic_faces(out, a.faces);
  if (a.pairs > 0) write_pairs(out / "pairs.tsv", generate_pairs(ds.manifest, a.pairs, a.faces.seed));
  if (a.templates) {
    write_template(out / "templates", make_solid_template(a.faces.uv_size));
    write_template(out / "templates", make_patterned_template(a.faces.uv_size));
  }
  if (a.annotations) {
    for (const auto& s : ds.manifest.samples) {
      Detection d;
      d.landmarks = *s.landmarks;
      d.box = {0.0, 0.0, static_cast<double>(a.faces.image_size), static_cast<double>(a.faces.image_size)};
      write_annotations(annotation_path_for(ds.manifest.resolve(s)), std::span<const Detection>(&d, 1));
    }
  }
  std::cout << "wrote " << ds.manifest.samples.size() << " images of " << ds.manifest.num_identities
            << " identities to " << out.string() << "\n";
  return 0;
}

void add_source_flags(CLI::App* cmd, SourceArgs& s) {
  cmd->add_option("--checkpoint", s.checkpoint, "Backbone checkpoint used to embed manifest inputs");
  cmd->add_flag("--flip-fusion", s.flip_fusion, "Fuse features of each image and its mirror");
  cmd->add_option("--batch-size", s.batch_size, "Extraction batch size")->check(CLI::PositiveNumber);
}

void add_eval_flags(CLI::App* cmd, EvalArgs& e) {
  cmd->add_option("--pairs", e.pairs, "Pairs file (key_a<TAB>key_b<TAB>0|1)");
  cmd->add_option("--store", e.store, "Embedding store (.fxze) or manifest for verification");
  cmd->add_option("--probe", e.probe, "Probe store or manifest");
  cmd->add_option("--gallery", e.gallery, "Gallery store or manifest");
  cmd->add_option("--distractors", e.distractors, "Distractor store or manifest");
  cmd->add_option("--folds", e.folds, "Verification fold count")->check(CLI::Range(2, 1000000));
  cmd->add_option("--kmax", e.kmax, "Largest rank reported")->check(CLI::PositiveNumber);
  cmd->add_option("--block-size", e.block_size, "Candidates per similarity block")->check(CLI::PositiveNumber);
  cmd->add_option("--report", e.report, "Report path (.json for JSON, otherwise text)");
  cmd->add_option("--out", e.out, "Run directory; reports are written to <out>/reports");
  cmd->add_option("--method", e.method, "Method name used as the report row");
  cmd->add_option("--benchmark", e.benchmark, "Benchmark name used as the report column");
  add_source_flags(cmd, e.source);
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("facelab");
  if (!logger) logger = spdlog::stderr_logger_mt("facelab");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv) {
  CLI::App app{"facelab: face representation training, evaluation and mask synthesis"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a backbone and head from a manifest");
  train_cmd->add_option("--config", train_args.config, "Config file (sectioned key = value)");
  train_cmd->add_option("--set", train_args.overrides, "Override a config key: section.key=value")->take_all();
  train_cmd->add_option("--manifest", train_args.manifest, "Training manifest")->required();
  train_cmd->add_option("--out", train_args.out, "Run directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to resume from");

  ExtractArgs extract_args;
  auto* extract_cmd = app.add_subcommand("extract", "Embed every image of a manifest into a store");
  extract_cmd->add_option("--manifest", extract_args.manifest, "Manifest of aligned images")->required();
  extract_cmd->add_option("--out", extract_args.out, "Output embedding store (.fxze)")->required();
  extract_cmd->add_flag("--abort-on-error", extract_args.abort_on_error, "Abort on an unreadable image instead of skipping it");
  add_source_flags(extract_cmd, extract_args.source);
  extract_cmd->get_option("--checkpoint")->required();

  EvalArgs eval_args, verify_args, identify_args;
  bool identify_masked = false;
  auto* eval_cmd = app.add_subcommand("eval", "Run an evaluation protocol");
  eval_cmd->add_option("--protocol", eval_args.protocol, "verify, identify or identify-masked")
      ->check(CLI::IsMember({"verify", "identify", "identify-masked"}));
  add_eval_flags(eval_cmd, eval_args);
  auto* verify_cmd = app.add_subcommand("eval-verify", "10-fold pair verification");
  add_eval_flags(verify_cmd, verify_args);
  auto* identify_cmd = app.add_subcommand("eval-identify", "Rank-K identification with distractors");
  add_eval_flags(identify_cmd, identify_args);
  identify_cmd->add_flag("--masked", identify_masked, "Tag the run as the masked-probe protocol");

  SynthMaskArgs mask_args;
  auto* mask_cmd = app.add_subcommand("synth-mask", "Add virtual masks to a dataset through UV position maps");
  mask_cmd->add_option("--manifest", mask_args.manifest, "Input manifest")->required();
  mask_cmd->add_option("--posmaps", mask_args.posmaps, "Directory of <image path>.uvpm position maps")->required();
  mask_cmd->add_option("--templates", mask_args.templates, "Directory of mask templates")->required();
  mask_cmd->add_option("--out", mask_args.out, "Output directory")->required();
  mask_cmd->add_option("--seed", mask_args.seed, "Template selection seed");
  mask_cmd->add_option("--feather", mask_args.feather, "Blend feather radius in texels")->check(CLI::NonNegativeNumber);

  DemoArgs demo_args;
  auto* demo_cmd = app.add_subcommand("pipeline-demo", "Align, embed and compare faces from annotated images");
  demo_cmd->add_option("--checkpoint", demo_args.checkpoint, "Recognition checkpoint")->required();
  demo_cmd->add_option("--images", demo_args.images, "Images with <name>.json annotation sidecars")->required()->take_all();
  demo_cmd->add_option("--threshold", demo_args.threshold, "Same-identity similarity threshold")->check(CLI::Range(-1.0, 1.0));
  demo_cmd->add_flag("--flip-fusion", demo_args.flip_fusion, "Fuse features of each crop and its mirror");
  demo_cmd->add_option("--out", demo_args.out, "Directory for crops and the JSON report");

  SynthDataArgs data_args;
  auto* data_cmd = app.add_subcommand("synth-data", "Generate a synthetic toy face dataset");
  data_cmd->add_option("--out", data_args.out, "Output directory")->required();
  data_cmd->add_option("--identities", data_args.faces.num_identities, "Number of identities")->check(CLI::PositiveNumber);
  data_cmd->add_option("--images-per-id", data_args.faces.images_per_identity, "Images per identity")->check(CLI::PositiveNumber);
  data_cmd->add_option("--size", data_args.faces.image_size, "Image side in pixels")->check(CLI::Range(16, 1024));
  data_cmd->add_option("--uv-size", data_args.faces.uv_size, "UV texture / position map side")->check(CLI::Range(2, 4096));
  data_cmd->add_option("--first-identity", data_args.faces.first_identity, "Index of the first identity");
  data_cmd->add_option("--seed", data_args.faces.seed, "Generator seed");
  data_cmd->add_option("--pairs", data_args.pairs, "Also write pairs.tsv with this many pairs");
  data_cmd->add_flag("--templates", data_args.templates, "Also write the solid and patterned mask templates");
  data_cmd->add_flag("--annotations", data_args.annotations, "Also write a detection sidecar next to each image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "facelab: usage error: " << e.what() << " (run with --help)\n";
    return 2;
  }
  try {
    setup_logging(log_level);
    if (*train_cmd) return run_train(train_args);
    if (*extract_cmd) return run_extract(extract_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*verify_cmd) {
      verify_args.protocol = "verify";
      return run_eval(verify_args);
    }
    if (*identify_cmd) {
      identify_args.protocol = identify_masked ? "identify-masked" : "identify";
      return run_eval(identify_args);
    }
    if (*mask_cmd) return run_synth_mask(mask_args);
    if (*demo_cmd) return run_pipeline_demo(demo_args);
    if (*data_cmd) return run_synth_data(data_args);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "facelab: error: " << msg << "\n";
    return 1;
  }
  return 2;
}

}  // namespace facelab
