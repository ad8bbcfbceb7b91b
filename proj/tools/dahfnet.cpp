// dahfnet: corpus generation, training, evaluation, prediction, ablation and
// mask-overlay visualization from one binary.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dahf/engine.hpp"
#include "dahf/image_io.hpp"
#include "json.hpp"

using namespace dahf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Records what a command read and wrote, with content hashes, as run.json.
class RunManifest {
 public:
  RunManifest(std::string command, int argc, char** argv) {
    doc_["command"] = std::move(command);
    doc_["argv"] = std::vector<std::string>(argv, argv + argc);
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
  }
  void input(const fs::path& p) { doc_["inputs"][p.string()] = sha256_file(p); }
  void input_corpus(const fs::path& root) { doc_["inputs"][root.string()] = datagen::corpus_hash(root); }
  void output(const fs::path& p) { doc_["outputs"][p.string()] = sha256_file(p); }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void write(const fs::path& dir) const { atomic_write(dir / "run.json", doc_.dump(2) + "\n"); }

 private:
  json doc_;
};

std::uint64_t corpus_seed(const fs::path& root) {
  const auto bytes = read_file(root / "corpus.json");
  return json::parse(bytes.begin(), bytes.end()).at("seed").get<std::uint64_t>();
}

std::vector<datagen::ImageSample> load_split(const fs::path& corpus, const std::string& split,
                                             std::optional<std::uint64_t> split_seed) {
  const datagen::Dataset ds = datagen::load_dataset(corpus, split_seed.value_or(corpus_seed(corpus)));
  std::vector<datagen::SampleRef> refs;
  if (split == "train" || split == "all") refs.insert(refs.end(), ds.train.begin(), ds.train.end());
  if (split == "test" || split == "all") refs.insert(refs.end(), ds.test.begin(), ds.test.end());
  return engine::load_samples(refs);
}

/// Config file (or defaults), then --set key=value pairs, then dedicated flags.
struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;
  std::optional<int> epochs, batch_size, threads;
  std::optional<double> lr0;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", path, "JSON config with TrainConfig keys")->check(CLI::ExistingFile);
    if (required) opt->required();
    cmd->add_option("--set", sets, "Override one config key, e.g. --set w=0.5 (repeatable)");
    cmd->add_option("--epochs", epochs, "Override epochs");
    cmd->add_option("--batch-size", batch_size, "Override batch_size");
    cmd->add_option("--threads", threads, "Override threads (non-deterministic mode only)");
    cmd->add_option("--lr0", lr0, "Override the initial learning rate");
    cmd->add_option("--seed", seed, "Override the training seed");
  }

  TrainConfig resolve() const {
    json j = json::object();
    if (!path.empty()) {
      const auto bytes = read_file(path);
      j = json::parse(bytes.begin(), bytes.end());
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      json parsed = json::parse(value, nullptr, false);
      j[key] = parsed.is_discarded() ? json(value) : parsed;
    }
    if (epochs) j["epochs"] = *epochs;
    if (batch_size) j["batch_size"] = *batch_size;
    if (threads) j["threads"] = *threads;
    if (lr0) j["lr0"] = *lr0;
    if (seed) j["seed"] = *seed;
    return config_from_json(j.dump());
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// --- image helpers ----------------------------------------------------------

Image8 binary_mask_image(const Tensor& forged) {
  Image8 img{forged.width(), forged.height(), 1, {}};
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = forged[i] > 0.5 ? 255 : 0;
  return img;
}

/// Pixels above 0.5 are blended half-way toward red; the rest are copied.
Image8 tint_overlay(const Image8& rgb, const Tensor& forged) {
  Image8 out = rgb;
  for (int i = 0; i < rgb.width * rgb.height; ++i) {
    if (!(forged[static_cast<std::size_t>(i)] > 0.5)) continue;
    std::uint8_t* p = &out.pixels[static_cast<std::size_t>(i) * 3];
    p[0] = static_cast<std::uint8_t>((p[0] + 255 + 1) / 2);
    p[1] = static_cast<std::uint8_t>(p[1] / 2);
    p[2] = static_cast<std::uint8_t>(p[2] / 2);
  }
  return out;
}

Image8 to_rgb(const Image8& img) {
  if (img.channels == 3) return img;
  Image8 out{img.width, img.height, 3, std::vector<std::uint8_t>(img.pixels.size() * 3)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = img.pixels[i];
  return out;
}

/// Panels placed left to right with a 2-pixel white gutter.
Image8 hstack(const std::vector<Image8>& panels) {
  const int gutter = 2;
  int w = 0, h = 0;
  for (const auto& p : panels) {
    w += p.width + gutter;
    h = std::max(h, p.height);
  }
  w -= gutter;
  Image8 out{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 255)};
  int x0 = 0;
  for (const auto& panel : panels) {
    const Image8 p = to_rgb(panel);
    for (int y = 0; y < p.height; ++y)
      std::copy_n(&p.pixels[static_cast<std::size_t>(y) * p.width * 3], p.width * 3,
                  &out.pixels[(static_cast<std::size_t>(y) * w + x0) * 3]);
    x0 += p.width + gutter;
  }
  return out;
}

Tensor load_image_tensor(const fs::path& path) {
  Image8 img;
  try {
    img = read_png(path);
  } catch (const std::exception& e) {
    throw IoError("cannot read image " + path.string() + ": " + e.what());
  }
  if (img.channels != 3) throw IoError("image " + path.string() + " must be RGB");
  return image_to_tensor(img);
}

// --- commands ---------------------------------------------------------------

struct GenerateArgs {
  int size = 256;
  int per_method = 0;
  std::vector<int> counts;
  int branch_factor = 2;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, RunManifest& run) {
  datagen::CorpusSpec spec;
  if (!a.counts.empty()) {
    if (a.counts.size() != kMethodCount) throw UsageError("--counts needs 8 values, one per method tag");
    std::copy(a.counts.begin(), a.counts.end(), spec.counts.begin());
  } else {
    if (a.per_method <= 0) throw UsageError("give --per-method or --counts");
    spec.counts.fill(a.per_method);
  }
  spec.image_size = a.size;
  spec.branch_factor = a.branch_factor;
  spec.seed = a.seed;
  spec.output_root = a.out;
  const auto manifest = datagen::generate_corpus(spec);
  const std::string hash = datagen::corpus_hash(spec.output_root);
  run.set("corpus_hash", hash);
  run.set("samples", manifest.records.size());
  run.output(fs::path(a.out) / "manifest.jsonl");
  run.output(fs::path(a.out) / "corpus.json");
  run.write(a.out);
  std::printf("%zu samples written to %s\ncorpus hash %s\n", manifest.records.size(), a.out.c_str(), hash.c_str());
  return 0;
}

struct TrainArgs {
  ConfigArgs config;
  std::string corpus, out;
  std::optional<std::uint64_t> split_seed;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, RunManifest& run) {
  const TrainConfig cfg = a.config.resolve();
  const auto train_set = load_split(a.corpus, "train", a.split_seed);
  const fs::path out(a.out);
  fs::create_directories(out);
  atomic_write(out / "config.json", to_json(cfg) + "\n");
  run.input_corpus(a.corpus);
  if (!a.config.path.empty()) run.input(a.config.path);

  const auto t0 = std::chrono::steady_clock::now();
  engine::TrainOptions opts;
  opts.run_dir = out;
  if (!a.quiet) {
    opts.on_epoch = [&](const engine::EpochLog& l) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "epoch %3d/%d  lr %.2e  loss %.4f (det %.4f loc %.4f edge %.4f)  acc %.3f  pixF1 %.3f  %.0fs\n",
                   l.epoch + 1, cfg.epochs, l.lr, l.loss, l.det, l.loc, l.edge, l.train_image_acc, l.train_pixel_f1,
                   secs);
    };
  }
  const engine::TrainResult result = engine::train(cfg, train_set, opts);
  const metrics::MetricsReport rep = engine::evaluate(*result.model, train_set);
  atomic_write(out / "train_report.json", rep.to_json_line() + "\n");
  for (const char* name : {"config.json", "metrics.jsonl", "checkpoint.bin", "train_report.json"}) run.output(out / name);
  run.set("config", json::parse(to_json(cfg)));
  run.write(out);
  std::printf("trained %d epochs on %zu samples; checkpoint %s\n%s", cfg.epochs, train_set.size(),
              (out / "checkpoint.bin").c_str(), rep.to_table().c_str());
  return 0;
}

struct EvalArgs {
  std::string ckpt, corpus, split = "test", out, config;
  std::optional<std::uint64_t> split_seed;
};

int cmd_eval(const EvalArgs& a, RunManifest& run) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  std::optional<TrainConfig> expected;
  if (!a.config.empty()) expected = load_config(a.config);
  const auto samples = load_split(a.corpus, a.split, a.split_seed);
  const metrics::MetricsReport rep = engine::evaluate(ck, samples, expected);
  const fs::path out = a.out.empty() ? fs::path(a.ckpt).parent_path() / ("eval_" + a.split) : fs::path(a.out);
  fs::create_directories(out);
  atomic_write(out / "report.json", rep.to_json_line() + "\n");
  atomic_write(out / "report.txt", rep.to_table());
  run.input(a.ckpt);
  run.input_corpus(a.corpus);
  run.set("split", a.split);
  run.output(out / "report.json");
  run.output(out / "report.txt");
  run.write(out);
  std::printf("%s split, %zu samples\n%s", a.split.c_str(), samples.size(), rep.to_table().c_str());
  return 0;
}

struct PredictArgs {
  std::string ckpt, image, out;
};

int cmd_predict(const PredictArgs& a, RunManifest& run) {
  const Tensor image = load_image_tensor(a.image);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const auto model = model_from_checkpoint(ck);
  const Prediction p = model->predict(image);
  const Tensor& forged = p.forged.back();
  if (forged.height() != image.height() || forged.width() != image.width())
    throw ValidationError("finest mask " + forged.shape_string() + " does not match the input");

  const fs::path out(a.out);
  fs::create_directories(out);
  write_png(out / "mask.png", binary_mask_image(forged));
  write_png(out / "mask_prob.png", tensor_to_image(forged));
  write_png(out / "overlay.png", tint_overlay(tensor_to_image(image), forged));

  const ClassHierarchy& h = model->hierarchy();
  std::size_t above = 0;
  for (double v : forged.values()) above += v > 0.5;
  json stages = json::array();
  for (int t = 0; t < kStageCount; ++t)
    stages.push_back({{"stage", t + 1},
                      {"label", p.labels[t]},
                      {"name", h.name(t, p.labels[t])},
                      {"probability", p.confidence[t]}});
  const json record{{"input", a.image},
                    {"stages", stages},
                    {"mask", (out / "mask.png").string()},
                    {"overlay", (out / "overlay.png").string()},
                    {"forged_fraction", static_cast<double>(above) / static_cast<double>(forged.size())}};
  atomic_write(out / "prediction.json", record.dump(2) + "\n");
  run.input(a.ckpt);
  run.input(a.image);
  for (const char* name : {"mask.png", "mask_prob.png", "overlay.png", "prediction.json"}) run.output(out / name);
  run.write(out);
  std::printf("%s", record.dump(2).c_str());
  std::printf("\n");
  return 0;
}

struct AblateArgs {
  ConfigArgs config;
  std::string corpus, out, variants = "full,no-dam,no-edge,srm", eval_split = "test";
  std::optional<std::uint64_t> split_seed;
};

int cmd_ablate(const AblateArgs& a, RunManifest& run) {
  const TrainConfig cfg = a.config.resolve();
  const auto variants = split_list(a.variants);
  if (variants.empty()) throw UsageError("--variants is empty");
  for (const auto& v : variants) {
    try {
      engine::apply_variant(cfg, v);
    } catch (const ValidationError& err) {
      throw UsageError(err.what());
    }
  }
  const auto train_set = load_split(a.corpus, "train", a.split_seed);
  const auto eval_set = load_split(a.corpus, a.eval_split, a.split_seed);
  const engine::AblationTable table = engine::ablate(cfg, variants, train_set, eval_set);
  const fs::path out(a.out);
  fs::create_directories(out);
  atomic_write(out / "ablation.txt", table.to_text());
  atomic_write(out / "ablation.jsonl", table.to_jsonl());
  run.input_corpus(a.corpus);
  if (!a.config.path.empty()) run.input(a.config.path);
  run.set("config", json::parse(to_json(cfg)));
  run.set("eval_split", a.eval_split);
  run.output(out / "ablation.txt");
  run.output(out / "ablation.jsonl");
  run.write(out);
  std::printf("%s", table.to_text().c_str());
  return 0;
}

struct VisualizeArgs {
  std::string ckpt, corpus, split = "test", out;
  int count = 8;
  std::optional<std::uint64_t> split_seed;
};

/// One strip per sample: input, ground-truth mask, predicted mask, overlay.
int cmd_visualize(const VisualizeArgs& a, RunManifest& run) {
  const auto model = model_from_checkpoint(load_checkpoint(a.ckpt));
  auto samples = load_split(a.corpus, a.split, a.split_seed);
  if (samples.empty()) throw ValidationError("split '" + a.split + "' is empty");
  if (a.count > 0 && samples.size() > static_cast<std::size_t>(a.count)) samples.resize(a.count);
  const fs::path out(a.out);
  fs::create_directories(out);
  json index = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const Prediction p = model->predict(s.image);
    const Image8 rgb = tensor_to_image(s.image);
    const Image8 strip = hstack({rgb, binary_mask_image(s.mask), binary_mask_image(p.forged.back()),
                                 tint_overlay(rgb, p.forged.back())});
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu.png", i);
    write_png(out / name, strip);
    run.output(out / name);
    index.push_back({{"file", name},
                     {"method", method_name(s.method)},
                     {"predicted", model->hierarchy().name(kStageCount - 1, p.labels.back())}});
  }
  atomic_write(out / "index.json", index.dump(2) + "\n");
  run.input(a.ckpt);
  run.input_corpus(a.corpus);
  run.output(out / "index.json");
  run.write(out);
  std::printf("%zu panels written to %s (input | ground truth | prediction | overlay)\n", samples.size(),
              a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forgery detection and localization: corpus, training, evaluation and prediction"};
  app.require_subcommand(1);
  const auto splits = CLI::IsMember({"train", "test", "all"});

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Synthesize a labelled corpus");
  g->add_option("--size", gen.size, "Image side in pixels");
  g->add_option("--per-method", gen.per_method, "Samples per method tag");
  g->add_option("--counts", gen.counts, "Eight per-tag counts (real, ganfull-img, ..., dmpart-txt)")->delimiter(',');
  g->add_option("--branch-factor", gen.branch_factor, "Backbone factor s; size must be a multiple of s^3");
  g->add_option("--seed", gen.seed, "Corpus seed");
  g->add_option("--out", gen.out, "Output corpus directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a corpus's train split");
  tr.config.attach(t, false);
  t->add_option("--corpus", tr.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--split-seed", tr.split_seed, "Split seed (default: the corpus seed)");
  t->add_flag("-q,--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--corpus", ev.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--split", ev.split, "train, test or all")->check(splits);
  e->add_option("--config", ev.config, "Refuse unless the checkpoint matches this config")->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Report directory (default: next to the checkpoint)");
  e->add_option("--split-seed", ev.split_seed, "Split seed (default: the corpus seed)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict labels and a forgery mask for one image");
  p->add_option("--ckpt", pr.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  p->add_option("--image", pr.image, "RGB PNG")->required();
  p->add_option("--out", pr.out, "Output directory")->required();

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Train and compare toggled variants");
  ab.config.attach(a, false);
  a->add_option("--corpus", ab.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  a->add_option("--variants", ab.variants,
                "Comma list of full, no-dam, no-edge, srm, no-rgb, no-noise, no-frequency");
  a->add_option("--eval-split", ab.eval_split, "Split the variants are scored on")->check(splits);
  a->add_option("--out", ab.out, "Output directory")->required();
  a->add_option("--split-seed", ab.split_seed, "Split seed (default: the corpus seed)");

  VisualizeArgs vi;
  auto* v = app.add_subcommand("visualize", "Write input / truth / prediction / overlay strips");
  v->add_option("--ckpt", vi.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  v->add_option("--corpus", vi.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  v->add_option("--split", vi.split, "train, test or all")->check(splits);
  v->add_option("--count", vi.count, "Number of samples (0 = all)");
  v->add_option("--out", vi.out, "Output directory")->required();
  v->add_option("--split-seed", vi.split_seed, "Split seed (default: the corpus seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  RunManifest run(cmd->get_name(), argc, argv);
  try {
    if (cmd == g) return cmd_generate(gen, run);
    if (cmd == t) return cmd_train(tr, run);
    if (cmd == e) return cmd_eval(ev, run);
    if (cmd == p) return cmd_predict(pr, run);
    if (cmd == a) return cmd_ablate(ab, run);
    if (cmd == v) return cmd_visualize(vi, run);
  } catch (const UsageError& err) {
    std::fprintf(stderr, "usage error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 2;
}
