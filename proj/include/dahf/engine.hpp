#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dahf/checkpoint.hpp"
#include "dahf/dataset.hpp"
#include "dahf/metrics.hpp"

namespace dahf::engine {

/// max(lr0 * lr_decay^floor(epoch / lr_decay_every), lr_floor) for 0 <= epoch < epochs.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0, det = 0.0, loc = 0.0, edge = 0.0;  // means over the epoch's samples
  double grad_norm = 0.0;                               // mean pre-clip norm over steps
  double train_image_acc = 0.0;                         // on the augmented training passes
  double train_pixel_f1 = 0.0;
  std::uint64_t clamp_events = 0;

  std::string to_json_line() const;
};

/// In-memory samples; loading once keeps training I/O-free.
std::vector<datagen::ImageSample> load_samples(const std::vector<datagen::SampleRef>& refs);

struct TrainOptions {
  std::optional<std::filesystem::path> run_dir;  // checkpoints + metrics.jsonl
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> log;
};

/// Applies the thread policy of cfg (1 thread in deterministic mode).
void apply_threading(const TrainConfig& cfg);

/// Trains from scratch. A non-finite loss aborts with losses::NonFiniteLoss;
/// any checkpoint already written in run_dir is left in place.
TrainResult train(const TrainConfig& cfg, const std::vector<datagen::ImageSample>& train_set,
                  const TrainOptions& opts = {});

/// Per-sample outcome under a model (no augmentation).
metrics::SampleOutcome evaluate_sample(const Model& model, const datagen::ImageSample& s);
metrics::MetricsReport evaluate(const Model& model, const std::vector<datagen::ImageSample>& samples);
/// Refuses (ValidationError with a config diff) when the checkpoint's
/// architecture differs from `expected`.
metrics::MetricsReport evaluate(const Checkpoint& ck, const std::vector<datagen::ImageSample>& samples,
                                const std::optional<TrainConfig>& expected = std::nullopt);

/// Named toggle sets: full, no-dam, no-edge, srm, no-rgb, no-noise, no-frequency.
TrainConfig apply_variant(TrainConfig base, const std::string& variant);

struct AblationRow {
  std::string variant;
  double det_acc = 0.0, det_f1 = 0.0, loc_acc = 0.0, loc_f1 = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::string to_text() const;
  std::string to_jsonl() const;
};

/// Trains and evaluates each variant with the shared seed.
AblationTable ablate(const TrainConfig& base, const std::vector<std::string>& variants,
                     const std::vector<datagen::ImageSample>& train_set,
                     const std::vector<datagen::ImageSample>& eval_set);

}  // namespace dahf::engine
