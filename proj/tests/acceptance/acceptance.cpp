// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "dahf/dct.hpp"
#include "dahf/engine.hpp"
#include "dahf/image_io.hpp"
#include "dahf/kernels.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace dahf;
using namespace dahf::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool g_verbose = false;

void note(const std::string& s) {
  if (g_verbose) std::fprintf(stderr, "  %s\n", s.c_str());
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Var probe_sum(const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum_all(ops::mul(y, constant(random_tensor(y.shape(), rng))));
}

// ---------------------------------------------------------------------------

Outcome shape_law() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.C = 16;
  cfg.s = 2;
  const Model model(cfg);
  const Tensor img = datagen::synthesize(MethodTag::DmPartTxt, 64, 1).image;
  std::vector<std::string> bad;

  const Var fused = model.features()(constant(img));
  const std::array<std::vector<int>, 4> branch_shapes = {
      std::vector<int>{16, 64, 64}, {32, 32, 32}, {64, 16, 16}, {128, 8, 8}};
  backbone::BranchFeatureSet b = model.backbone().build_branches(fused);
  for (int stage = 0; stage <= cfg.exchange_stages; ++stage) {
    if (stage > 0) b = model.backbone().exchange(b, stage - 1);
    for (int i = 0; i < backbone::kBranches; ++i)
      if (b[i].shape() != branch_shapes[i]) bad.push_back("branch " + std::to_string(i) + " " + b[i].value().shape_string());
  }
  const ModelOutput out = model.forward(img);
  const std::array<int, kStageCount> sides = {8, 16, 32, 64}, classes = {2, 3, 5, 8};
  for (int t = 0; t < kStageCount; ++t) {
    if (out.masks[t].shape() != std::vector<int>{2, sides[t], sides[t]})
      bad.push_back("mask " + std::to_string(t) + " " + out.masks[t].value().shape_string());
    if (out.classes.probs[t].shape() != std::vector<int>{classes[t]})
      bad.push_back("classes " + std::to_string(t) + " " + out.classes.probs[t].value().shape_string());
  }
  const double secs = seconds_since(t0);
  if (secs >= 10.0) bad.push_back(fmt("runtime %.1f s", secs));
  std::string detail = bad.empty() ? "branches (64,64,16) (32,32,32) (16,16,64) (8,8,128); masks 8..64; classes 2,3,5,8"
                                   : "mismatch: " + bad.front();
  return {bad.empty(), detail + fmt(" [%.2f s]", secs)};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckOptions opt{.step = 1e-6, .rtol = 1e-4};
  std::mt19937_64 r(21);
  std::vector<std::pair<std::string, GradCheckReport>> reports;

  {
    features::FeatureConfig fc;
    fc.width = 4;
    fc.denoiser_width = 4;
    fc.ca_reduction = 2;
    ParamStore store;
    Rng rng(1);
    const features::FeatureExtractor fx(store, fc, rng);
    const auto& dam = fx.dual_attention();
    const Var a(random_tensor({4, 4, 4}, r), true), b(random_tensor({4, 4, 4}, r), true);
    std::vector<Var> wrt = {a, b};
    for (const auto& p : store.params())
      if (p.trainable && p.name.rfind("features.dam.", 0) == 0) wrt.push_back(p.var);
    reports.emplace_back("dual_attention_fuse",
                         gradcheck([&] { return probe_sum(features::dual_attention_fuse(dam, {a, b}), 2); }, wrt, opt));
  }
  {
    const Var w(random_tensor({32}, r, 0.0, 1.0), true), tau(random_tensor({32}, r, 0.0, 0.6), true);
    reports.emplace_back("threshold_gate",
                         gradcheck([&] { return probe_sum(ops::threshold_gate(w, tau), 3); }, {w, tau}, opt));
  }
  {
    ParamStore store;
    Rng rng(4);
    const auto pa = features::make_position_attention(store, "pa", 8, 256, rng);
    const Var f(random_tensor({8, 4, 4}, r), true);
    reports.emplace_back("position_attention",
                         gradcheck([&] { return probe_sum(pa(f), 4); },
                                   {f, pa.query.weight, pa.query.bias, pa.key.weight, pa.key.bias, pa.value.weight,
                                    pa.value.bias},
                                   opt));
  }
  {
    ParamStore store;
    Rng rng(5);
    const auto head = heads::make_localization_head(store, "loc", 4, 256, rng);
    const Var prev(random_mask(4, 4, r), true), f(random_tensor({4, 8, 8}, r), true);
    std::vector<Var> wrt = {prev, f};
    for (const auto& p : store.params()) wrt.push_back(p.var);
    reports.emplace_back("refine_mask",
                         gradcheck([&] { return probe_sum(heads::refine_mask(head, prev, f), 5); }, wrt, opt));
  }
  {
    const ClassHierarchy h = ClassHierarchy::standard();
    GradCheckReport all;
    for (int t = 0; t + 1 < kStageCount; ++t) {
      const Var logits(random_tensor({h.size(t + 1)}, r, -3.0, 3.0), true);
      const Var prior(random_tensor({h.size(t)}, r, 0.0, 1.0), true);
      const auto rep = gradcheck([&] { return probe_sum(heads::condition_logits(logits, prior, h, t), 6); },
                                 {logits, prior}, opt);
      all.checked += rep.checked;
      all.skipped += rep.skipped;
      all.worst_rel = std::max(all.worst_rel, rep.worst_rel);
      if (rep.failed && !all.failed) all.first_failure = rep.first_failure;
      all.failed += rep.failed;
    }
    reports.emplace_back("condition_logits", all);
  }
  {
    Tensor gt = random_tensor({1, 8, 8}, r, 0.0, 1.0);
    for (double& v : gt.values()) v = v > 0.5 ? 1.0 : 0.0;
    const Var m(random_tensor({1, 8, 8}, r, 0.0, 1.0), true);
    const losses::LossConfig lc{.edge_weight = 1.0, .edge_mode = losses::EdgeMode::Absolute};
    reports.emplace_back("edge_loss(absolute)", gradcheck([&] { return losses::edge_loss(m, gt, lc); }, {m}, opt));
  }
  {
    TrainConfig cfg;
    cfg.image_size = 16;
    cfg.C = 4;
    cfg.denoiser_width = 4;
    cfg.attention_max_keys = 64;
    Model model(cfg);
    Var head = model.params().get("features.denoiser.4.weight");
    head.mutable_value() = random_tensor(head.shape(), r, -0.2, 0.2);
    const ClassHierarchy& h = model.hierarchy();
    std::vector<Tensor> images, masks;
    std::vector<LabelPath> labels;
    for (MethodTag tag : {MethodTag::DmPartImg, MethodTag::Real}) {
      images.push_back(random_tensor({3, 16, 16}, r, 0.0, 1.0));
      Tensor gt = Tensor::chw(1, 16, 16);
      if (tag != MethodTag::Real)
        for (int y = 2; y < 10; ++y)
          for (int x = 4; x < 13; ++x) gt.at(0, y, x) = 1.0;
      masks.push_back(gt);
      labels.push_back(h.label_path(tag));
    }
    auto loss = [&] {
      std::vector<Var> terms;
      for (std::size_t i = 0; i < images.size(); ++i) {
        const ModelOutput out = model.forward(images[i]);
        terms.push_back(losses::sample_loss(out.masks, out.classes, labels[i], masks[i], cfg.loss_config()).total);
      }
      return ops::scale(ops::sum(terms), 1.0 / static_cast<double>(terms.size()));
    };
    std::vector<Var> wrt;
    for (const auto& p : model.params().params())
      if (p.trainable) wrt.push_back(p.var);
    GradCheckOptions o = opt;
    o.max_per_tensor = 4;
    reports.emplace_back("total_loss", gradcheck(loss, wrt, o));
  }

  const double secs = seconds_since(t0);
  bool pass = secs < 300.0;
  std::string failed;
  std::size_t checked = 0, skipped = 0;
  double worst = 0.0;
  for (const auto& [name, rep] : reports) {
    note(fmt("%-20s checked %zu skipped %zu worst rel %.2e", name.c_str(), rep.checked, rep.skipped, rep.worst_rel));
    checked += rep.checked;
    skipped += rep.skipped;
    worst = std::max(worst, rep.worst_rel);
    if (!rep.ok()) {
      pass = false;
      if (failed.empty()) failed = name + ": " + rep.first_failure;
    }
  }
  std::string detail = fmt("7 operators, %zu elements checked, %zu skipped at kinks, worst rel %.1e", checked, skipped,
                           worst);
  if (!failed.empty()) detail = "failed " + failed;
  return {pass, detail + fmt(" [%.1f s]", secs)};
}

// ---------------------------------------------------------------------------

Outcome oracle_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 r(31);
  double refine_err = 0.0, cond_err = 0.0, pa_err = 0.0, parseval = 0.0;

  for (int i = 0; i < 100; ++i) {
    const int width = 2 + static_cast<int>(r() % 3);
    const int side = 2 << (r() % 3);
    ParamStore store;
    Rng rng(static_cast<std::uint64_t>(100 + i));
    heads::LocalizationHead head = heads::make_localization_head(store, "loc", width, 256, rng);
    head.project.weight.mutable_value() = random_tensor(head.project.weight.shape(), r);
    head.project.bias.mutable_value() = random_tensor(head.project.bias.shape(), r);
    const Tensor f = random_tensor({width, side, side}, r);
    const Tensor prev = random_mask(side / 2, side / 2, r);
    refine_err = std::max(refine_err, max_abs_diff(heads::refine_mask(head, constant(prev), constant(f)).value(),
                                                   refine_oracle(head, prev, f)));
  }

  const ClassHierarchy h = ClassHierarchy::standard();
  for (int i = 0; i < 100; ++i)
    for (int t = 0; t + 1 < kStageCount; ++t) {
      const Tensor logits = random_tensor({h.size(t + 1)}, r, -4.0, 4.0);
      Tensor prior = random_tensor({h.size(t)}, r, 0.0, 1.0);
      double z = 0.0;
      for (double v : prior.values()) z += v;
      for (double& v : prior.values()) v /= z;
      const Tensor got = heads::condition_logits(constant(logits), constant(prior), h, t).value();
      const std::vector<double> expect = condition_oracle(logits, prior, h, t);
      for (int k = 0; k < h.size(t + 1); ++k) cond_err = std::max(cond_err, std::abs(got[k] - expect[k]));
    }

  for (int width : {2, 4, 8, 16})
    for (int hh = 1; hh <= 6; ++hh)
      for (int ww = 1; ww <= 6; ++ww) {
        ParamStore store;
        Rng rng(static_cast<std::uint64_t>(width * 100 + hh * 10 + ww));
        const auto pa = features::make_position_attention(store, "pa", width, 256, rng);
        const Tensor f = random_tensor({width, hh, ww}, r, -2.0, 2.0);
        pa_err = std::max(pa_err, max_abs_diff(pa(constant(f)).value(), pairwise_attention(pa, f)));
      }

  for (int i = 0; i < 20; ++i) {
    const Tensor src = random_tensor({64 * 64}, r, -1.0, 1.0);
    std::vector<double> plane(src.values());
    block_dct_forward(plane, 64, 64);
    parseval = std::max(parseval, worst_block_energy_error(src.values(), plane, 64, 64));
  }

  const bool pass = refine_err <= 1e-9 && cond_err <= 1e-9 && pa_err <= 1e-6 && parseval <= 1e-10;
  return {pass, fmt("mask refinement %.1e, prior conditioning %.1e (100 each, tol 1e-9); attention %.1e (tol 1e-6); "
                    "block energy rel %.1e (tol 1e-10) [%.2f s]",
                    refine_err, cond_err, pa_err, parseval, seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Tensor binary_map(unsigned bits) {
  Tensor m = Tensor::chw(1, 3, 3);
  for (int i = 0; i < 9; ++i) m[i] = (bits >> i) & 1u ? 1.0 : 0.0;
  return m;
}

Outcome loss_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  NoGradGuard ng;
  const ClassHierarchy h = ClassHierarchy::standard();
  const std::array<int, kStageCount> sides = {8, 16, 32, 64};
  std::vector<std::string> failures;

  double perfect = 0.0;
  for (MethodTag tag : kAllMethods) {
    const datagen::ImageSample s = datagen::synthesize(tag, 64, 40 + static_cast<int>(tag));
    heads::ClassProbPyramid probs;
    heads::MaskPyramid masks;
    for (int t = 0; t < kStageCount; ++t) {
      Tensor p({h.size(t)}, 0.0);
      p[s.label_path[t]] = 1.0;
      probs.probs[t] = probs.logits[t] = constant(p);
      const Tensor down = losses::downsample_mask(s.mask, sides[t], sides[t]);
      Tensor m = Tensor::chw(2, sides[t], sides[t]);
      for (int q = 0; q < down.plane(); ++q) {
        m.channel(1)[q] = down[q];
        m.channel(0)[q] = 1.0 - down[q];
      }
      masks[t] = constant(m);
    }
    const losses::LossConfig lc;
    perfect = std::max({perfect, losses::detection_loss(probs, s.label_path).item(),
                        losses::localization_loss(masks, s.mask).item(),
                        losses::edge_loss(constant(s.mask), s.mask, lc).item()});
  }
  if (!(perfect <= 1e-12)) failures.push_back(fmt("perfect predictions cost %.2e", perfect));

  double uniform = 0.0;
  const double ln240 = std::log(2.0) + std::log(3.0) + std::log(5.0) + std::log(8.0);
  for (MethodTag tag : kAllMethods) {
    heads::ClassProbPyramid probs;
    for (int t = 0; t < kStageCount; ++t) probs.probs[t] = probs.logits[t] = constant(Tensor({h.size(t)}, 1.0 / h.size(t)));
    uniform = std::max(uniform, std::abs(losses::detection_loss(probs, h.label_path(tag)).item() - ln240));
  }
  if (!(uniform <= 1e-9)) failures.push_back(fmt("uniform detection loss off by %.2e", uniform));

  Tensor gt = Tensor::chw(1, 8, 8), shifted = Tensor::chw(1, 8, 8);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) {
      gt.at(0, y, x) = 1.0;
      shifted.at(0, y, x + 1) = 1.0;
    }
  const double literal = losses::edge_loss(constant(shifted), gt, {.edge_mode = losses::EdgeMode::Literal}).item();
  const double absolute = losses::edge_loss(constant(shifted), gt, {.edge_mode = losses::EdgeMode::Absolute}).item();
  if (!(literal == 0.0 && absolute > 0.0))
    failures.push_back(fmt("shifted-square counterexample: literal %.3g absolute %.3g", literal, absolute));

  int zero_pairs = 0;
  unsigned first_a = 0, first_b = 0;
  std::vector<Tensor> maps;
  for (unsigned a = 0; a < 512; ++a) maps.push_back(binary_map(a));
  for (unsigned a = 0; a < 512; ++a)
    for (unsigned b = 0; b < 512; ++b) {
      if (a == b) continue;
      const double l = losses::edge_loss(constant(maps[a]), maps[b], {}).item();
      if (!(l > 0.0) && zero_pairs++ == 0) {
        first_a = a;
        first_b = b;
      }
    }
  if (zero_pairs)
    failures.push_back(fmt("absolute edge loss is 0 on %d of %d differing 3x3 pairs (e.g. masks %03x vs %03x: the "
                           "four corners flip together and every zero-padded Sobel response cancels)",
                           zero_pairs, 512 * 511, first_a, first_b));

  std::string detail = failures.empty()
                           ? fmt("perfect %.1e, uniform |L - ln240| %.1e, literal counterexample holds, absolute > 0 on "
                                 "all %d differing 3x3 pairs",
                                 perfect, uniform, 512 * 511)
                           : failures.front();
  for (std::size_t i = 1; i < failures.size(); ++i) detail += "; " + failures[i];
  return {failures.empty(), detail + fmt(" [%.1f s]", seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome metric_fixtures() {
  std::vector<std::string> bad;
  const metrics::AccF1 img = metrics::image_level_metrics({1, 1, 0, 0}, {1, 0, 1, 0});
  if (img.acc != 0.5 || img.f1 != 0.5) bad.push_back(fmt("image fixture acc %g f1 %g", img.acc, img.f1));

  Tensor gt = Tensor::chw(1, 4, 4), pred = Tensor::chw(1, 4, 4);
  for (int i : {0, 1, 4, 5}) gt[i] = 1.0;
  for (int i : {0, 1, 4, 10}) pred[i] = 1.0;
  const metrics::BinaryCounts c = metrics::pixel_counts(pred, gt);
  const metrics::AccF1 px = metrics::pixel_level_metrics({pred}, {gt});
  if (c.tp != 3 || c.fp != 1 || c.fn != 1 || c.tn != 11)
    bad.push_back(fmt("pixel counts %llu/%llu/%llu/%llu", static_cast<unsigned long long>(c.tp),
                      static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.fn),
                      static_cast<unsigned long long>(c.tn)));
  if (px.acc != 14.0 / 16.0 || px.f1 != 0.75) bad.push_back(fmt("pixel fixture acc %g f1 %g", px.acc, px.f1));
  return {bad.empty(), bad.empty() ? "image ACC 0.5 F1 0.5; pixel TP3 FP1 FN1 TN11, ACC 0.875 F1 0.75 (exact)"
                                   : bad.front()};
}

// ---------------------------------------------------------------------------

struct OverfitContext {
  fs::path work;
  TrainConfig cfg;
  std::vector<datagen::ImageSample> train, test;
  std::string corpus_hash;
};

struct OverfitRun {
  std::vector<engine::EpochLog> log;
  std::unique_ptr<Model> model;
  metrics::MetricsReport report;
  double seconds = 0.0;
};

OverfitContext prepare_overfit(const fs::path& work) {
  OverfitContext ctx;
  ctx.work = work;
  ctx.cfg = load_config(fs::path(DAHF_SOURCE_DIR) / "configs" / "overfit.json");
  datagen::CorpusSpec spec;
  spec.counts.fill(8);
  spec.image_size = 64;
  spec.branch_factor = ctx.cfg.s;
  spec.seed = 7;
  spec.output_root = work / "corpus";
  fs::remove_all(spec.output_root);
  datagen::generate_corpus(spec);
  ctx.corpus_hash = datagen::corpus_hash(spec.output_root);
  const datagen::Dataset ds = datagen::load_dataset(spec.output_root, spec.seed);
  ctx.train = engine::load_samples(ds.train);
  ctx.test = engine::load_samples(ds.test);
  note(fmt("corpus %s: %zu train / %zu test, hash %.16s", spec.output_root.c_str(), ctx.train.size(), ctx.test.size(),
           ctx.corpus_hash.c_str()));
  return ctx;
}

OverfitRun run_overfit(const OverfitContext& ctx, const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  engine::TrainOptions opts;
  opts.run_dir = ctx.work / name;
  opts.on_epoch = [&](const engine::EpochLog& l) {
    note(fmt("%s epoch %2d loss %.4f image acc %.3f pixel f1 %.3f (%.0f s)", name.c_str(), l.epoch, l.loss,
             l.train_image_acc, l.train_pixel_f1, seconds_since(t0)));
  };
  engine::TrainResult r = engine::train(ctx.cfg, ctx.train, opts);
  OverfitRun run;
  run.seconds = seconds_since(t0);
  run.report = engine::evaluate(*r.model, ctx.train);
  run.log = std::move(r.log);
  run.model = std::move(r.model);
  return run;
}

// Largest gap between successive improvements of the best-so-far loss.
int longest_stall(const std::vector<engine::EpochLog>& log) {
  double best = std::numeric_limits<double>::infinity();
  int last = 0, worst = 0;
  for (const auto& l : log) {
    if (l.loss < best) {
      best = l.loss;
      worst = std::max(worst, l.epoch - last);
      last = l.epoch;
    }
  }
  return std::max(worst, static_cast<int>(log.size()) - 1 - last);
}

Outcome overfit(const OverfitRun& run, const OverfitContext& ctx) {
  const auto& rep = run.report;
  const bool pass = rep.image_acc >= 0.95 && rep.pixel_f1 >= 0.85 && run.seconds <= 900.0 && ctx.cfg.epochs <= 60;
  return {pass, fmt("train split n=%d: image ACC %.4f (>= 0.95), pixel F1 %.4f (>= 0.85); %d epochs, longest loss "
                    "stall %d epochs [%.0f s, %d thread]",
                    rep.samples, rep.image_acc, rep.pixel_f1, ctx.cfg.epochs, longest_stall(run.log), run.seconds,
                    kernels::num_threads())};
}

Outcome reproducibility(const OverfitRun& a, const OverfitRun& b) {
  std::string diff;
  if (a.log.size() != b.log.size()) diff = "log lengths differ";
  for (std::size_t i = 0; diff.empty() && i < a.log.size(); ++i)
    if (a.log[i].to_json_line() != b.log[i].to_json_line()) diff = "epoch " + std::to_string(i) + " log differs";
  if (diff.empty() && a.report.to_json_line() != b.report.to_json_line()) diff = "final reports differ";
  if (diff.empty() && serialize(snapshot(*a.model, 0)) != serialize(snapshot(*b.model, 0))) diff = "weights differ";
  return {diff.empty(), diff.empty() ? fmt("%zu epoch records, final report and weights identical", a.log.size())
                                     : diff};
}

Outcome ablation(const OverfitContext& ctx, const OverfitRun& reference) {
  const auto t0 = std::chrono::steady_clock::now();
  const engine::AblationTable table = engine::ablate(ctx.cfg, {"full", "no-edge"}, ctx.train, ctx.test);
  atomic_write(ctx.work / "ablation.txt", table.to_text());
  atomic_write(ctx.work / "ablation.jsonl", table.to_jsonl());
  note("\n" + table.to_text());
  std::vector<std::string> bad;
  if (table.rows.size() != 2 || table.rows[0].variant != "full" || table.rows[1].variant != "no-edge")
    bad.push_back("unexpected rows");
  for (const auto& row : table.rows)
    for (double v : {row.det_acc, row.det_f1, row.loc_acc, row.loc_f1})
      if (!(v >= 0.0 && v <= 1.0)) bad.push_back("metric outside [0,1] in " + row.variant);
  const metrics::MetricsReport ref = engine::evaluate(*reference.model, ctx.test);
  if (bad.empty()) {
    const auto& f = table.rows[0];
    if (f.det_acc != ref.image_acc || f.det_f1 != ref.image_f1 || f.loc_acc != ref.pixel_acc ||
        f.loc_f1 != ref.pixel_f1)
      bad.push_back("full row differs from the independently trained full model");
  }
  return {bad.empty(), bad.empty() ? fmt("2x4 table written to %s; full row reproduces the separate run exactly [%.0f s]",
                                         (ctx.work / "ablation.txt").c_str(), seconds_since(t0))
                                   : bad.front()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = "acceptance_work";
  app.add_option("-c,--criterion", only, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));
  app.add_option("--work-dir", work, "Scratch directory for the corpus and training runs");
  app.add_flag("-v,--verbose", g_verbose, "Progress on stderr");
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const char* names[] = {"",          "shape law", "gradients", "oracles", "loss identities",
                         "overfit",   "ablation",  "reproducibility", "metrics fixtures"};
  int failures = 0;
  auto report = [&](int id, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %-16s %s  %s\n", id, names[id], o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  kernels::set_num_threads(1);
  if (selected.count(1)) report(1, shape_law);
  if (selected.count(2)) report(2, gradient_suite);
  if (selected.count(3)) report(3, oracle_suite);
  if (selected.count(4)) report(4, loss_identities);
  if (selected.count(8)) report(8, metric_fixtures);

  if (selected.count(5) || selected.count(6) || selected.count(7)) {
    std::optional<OverfitContext> ctx;
    std::optional<OverfitRun> first;
    std::string setup_error;
    try {
      ctx = prepare_overfit(work);
      first = run_overfit(*ctx, "run_a");
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    auto guarded = [&](int id, const std::function<Outcome()>& fn) {
      report(id, [&] { return first ? fn() : Outcome{false, "overfit run failed: " + setup_error}; });
    };
    if (selected.count(5)) guarded(5, [&] { return overfit(*first, *ctx); });
    if (selected.count(7)) guarded(7, [&] { return reproducibility(*first, run_overfit(*ctx, "run_b")); });
    if (selected.count(6)) guarded(6, [&] { return ablation(*ctx, *first); });
  }
  return failures ? 1 : 0;
}
