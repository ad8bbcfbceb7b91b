#include "dahf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dahf/image_io.hpp"
#include "dahf/kernels.hpp"
#include "json.hpp"

namespace dahf::engine {

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ValidationError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(cfg.epochs) + ")");
  }
  const double lr = cfg.lr0 * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
  return std::max(lr, cfg.lr_floor);
}

std::string EpochLog::to_json_line() const {
  nlohmann::json j{{"epoch", epoch},
                   {"lr", lr},
                   {"loss", loss},
                   {"det", det},
                   {"loc", loc},
                   {"edge", edge},
                   {"grad_norm", grad_norm},
                   {"train_image_acc", train_image_acc},
                   {"train_pixel_f1", train_pixel_f1},
                   {"clamp_events", clamp_events}};
  return j.dump();
}

std::vector<datagen::ImageSample> load_samples(const std::vector<datagen::SampleRef>& refs) {
  std::vector<datagen::ImageSample> out(refs.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < refs.size(); ++i) {
    try {
      out[i] = refs[i].load();
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void apply_threading(const TrainConfig& cfg) {
  if (cfg.deterministic) {
    kernels::set_num_threads(1);
  } else if (cfg.threads > 0) {
    kernels::set_num_threads(cfg.threads);
  }
}

metrics::SampleOutcome evaluate_sample(const Model& model, const datagen::ImageSample& s) {
  const Prediction p = model.predict(s.image);
  metrics::SampleOutcome o;
  o.method = s.method;
  o.truth = s.label_path;
  o.predicted = p.labels;
  o.pixels = metrics::pixel_counts(p.forged.back(), s.mask);
  return o;
}

metrics::MetricsReport evaluate(const Model& model, const std::vector<datagen::ImageSample>& samples) {
  if (samples.empty()) throw ValidationError("evaluate: empty split");
  std::vector<metrics::SampleOutcome> outcomes;
  outcomes.reserve(samples.size());
  for (const auto& s : samples) outcomes.push_back(evaluate_sample(model, s));
  return metrics::build_report(outcomes, model.hierarchy());
}

metrics::MetricsReport evaluate(const Checkpoint& ck, const std::vector<datagen::ImageSample>& samples,
                                const std::optional<TrainConfig>& expected) {
  if (expected && !same_architecture(*expected, ck.config)) {
    throw ValidationError("checkpoint config does not match the requested config:\n" +
                          config_diff(ck.config, *expected));
  }
  const auto model = model_from_checkpoint(ck);
  return evaluate(*model, samples);
}

TrainResult train(const TrainConfig& cfg, const std::vector<datagen::ImageSample>& train_set,
                  const TrainOptions& opts) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  for (const auto& s : train_set) {
    if (s.image.height() != cfg.image_size || s.image.width() != cfg.image_size) {
      throw ValidationError("train: sample size " + s.image.shape_string() + " does not match image_size " +
                            std::to_string(cfg.image_size));
    }
  }
  apply_threading(cfg);
  if (opts.run_dir) std::filesystem::create_directories(*opts.run_dir);

  TrainResult result;
  result.model = std::make_unique<Model>(cfg);
  Model& model = *result.model;
  ParamStore& store = model.params();
  Adam adam(store, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Rng rng(datagen::derive_seed(cfg.seed, 0xA11));
  const losses::LossConfig lcfg = cfg.loss_config();
  std::string log_text;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_schedule(epoch, cfg);
    losses::reset_clamp_events();
    std::shuffle(order.begin(), order.end(), rng);
    metrics::BinaryCounts image_counts, pixel_counts;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_n = 1.0 / static_cast<double>(end - start);
      store.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& src = train_set[order[i]];
        const datagen::ImageSample s = cfg.augment ? datagen::augment(src, rng) : src;
        const ModelOutput out = model.forward(s.image);
        losses::LossTerms terms;
        try {
          terms = losses::sample_loss(out.masks, out.classes, s.label_path, s.mask, lcfg);
        } catch (const losses::NonFiniteLoss& e) {
          throw losses::NonFiniteLoss(std::string(e.what()) + " at epoch " + std::to_string(epoch));
        }
        backward(terms.total, inv_n);
        log.loss += terms.total.item();
        log.det += terms.det.item();
        log.loc += terms.loc.item();
        log.edge += terms.edge.item();

        const Prediction p = to_prediction(out);
        const bool pf = p.labels[0] != 0, tf = s.label_path[0] != 0;
        metrics::BinaryCounts c;
        (pf ? (tf ? c.tp : c.fp) : (tf ? c.fn : c.tn)) = 1;
        image_counts += c;
        pixel_counts += metrics::pixel_counts(p.forged.back(), s.mask);
      }
      log.grad_norm += clip_grad_norm(store, cfg.grad_clip);
      adam.step(store, log.lr);
      model.project_constraints();
      ++steps;
    }
    const double n = static_cast<double>(train_set.size());
    log.loss /= n;
    log.det /= n;
    log.loc /= n;
    log.edge /= n;
    log.grad_norm /= steps;
    log.train_image_acc = image_counts.accuracy();
    log.train_pixel_f1 = pixel_counts.f1();
    log.clamp_events = losses::clamp_events();
    result.log.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);

    if (opts.run_dir) {
      log_text += log.to_json_line() + "\n";
      atomic_write(*opts.run_dir / "metrics.jsonl", log_text);
      const bool last = epoch + 1 == cfg.epochs;
      if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
        const auto ck = snapshot(model, epoch + 1, log.to_json_line());
        save_checkpoint(*opts.run_dir / "checkpoint.bin", ck);
        if (!last) {
          char name[32];
          std::snprintf(name, sizeof name, "checkpoint_%03d.bin", epoch + 1);
          save_checkpoint(*opts.run_dir / name, ck);
        }
      }
    }
  }
  return result;
}

TrainConfig apply_variant(TrainConfig cfg, const std::string& variant) {
  if (variant == "full") {
  } else if (variant == "no-dam") {
    cfg.dam = false;
  } else if (variant == "no-edge") {
    cfg.edge_loss = false;
  } else if (variant == "srm") {
    cfg.noise = false;
    cfg.srm = true;
  } else if (variant == "no-rgb") {
    cfg.rgb = false;
  } else if (variant == "no-noise") {
    cfg.noise = false;
  } else if (variant == "no-frequency") {
    cfg.frequency = false;
  } else {
    throw ValidationError("unknown ablation variant '" + variant +
                          "' (expected full, no-dam, no-edge, srm, no-rgb, no-noise, no-frequency)");
  }
  cfg.validate();
  return cfg;
}

std::string AblationTable::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s | %8s %8s | %8s %8s\n", "variant", "det ACC", "det F1", "loc ACC", "loc F1");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s | %8.4f %8.4f | %8.4f %8.4f\n", r.variant.c_str(), r.det_acc, r.det_f1,
                  r.loc_acc, r.loc_f1);
    out += buf;
  }
  return out;
}

std::string AblationTable::to_jsonl() const {
  std::string out;
  for (const auto& r : rows) {
    out += nlohmann::json{{"variant", r.variant},
                          {"det_acc", r.det_acc},
                          {"det_f1", r.det_f1},
                          {"loc_acc", r.loc_acc},
                          {"loc_f1", r.loc_f1}}
               .dump() +
           "\n";
  }
  return out;
}

AblationTable ablate(const TrainConfig& base, const std::vector<std::string>& variants,
                     const std::vector<datagen::ImageSample>& train_set,
                     const std::vector<datagen::ImageSample>& eval_set) {
  if (variants.empty()) throw ValidationError("ablate: no variants");
  std::vector<TrainConfig> configs;
  for (const auto& v : variants) configs.push_back(apply_variant(base, v));
  AblationTable table;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const TrainResult r = train(configs[i], train_set);
    const metrics::MetricsReport rep = evaluate(*r.model, eval_set);
    table.rows.push_back({variants[i], rep.image_acc, rep.image_f1, rep.pixel_acc, rep.pixel_f1});
  }
  return table;
}

}  // namespace dahf::engine
