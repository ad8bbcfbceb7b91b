#include "dahf/metrics.hpp"

#include <cstdio>

#include "json.hpp"

namespace dahf::metrics {

double f1_score(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double BinaryCounts::accuracy() const {
  if (total() == 0) throw ValidationError("accuracy of an empty set");
  return static_cast<double>(tp + tn) / static_cast<double>(total());
}

double BinaryCounts::f1() const { return f1_score(tp, fp, fn); }

BinaryCounts& BinaryCounts::operator+=(const BinaryCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionMatrix::ConfusionMatrix(int classes) : n_(classes), m_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 1) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= n_ || predicted < 0 || predicted >= n_) {
    throw ValidationError("confusion matrix: class index out of range");
  }
  ++m_[static_cast<std::size_t>(truth) * n_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto v : m_) t += v;
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  if (t == 0) throw ValidationError("accuracy of an empty confusion matrix");
  std::uint64_t diag = 0;
  for (int i = 0; i < n_; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(t);
}

double ConfusionMatrix::macro_f1() const {
  double acc = 0.0;
  int present = 0;
  for (int c = 0; c < n_; ++c) {
    std::uint64_t tp = at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < n_; ++o) {
      if (o == c) continue;
      fp += at(o, c);
      fn += at(c, o);
    }
    if (tp + fp + fn == 0) continue;
    acc += f1_score(tp, fp, fn);
    ++present;
  }
  return present == 0 ? 1.0 : acc / present;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (o.n_ != n_) throw ValidationError("confusion matrix size mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += o.m_[i];
  return *this;
}

namespace {

BinaryCounts binary_counts(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw ValidationError("image metrics: length mismatch");
  if (predictions.empty()) throw ValidationError("image metrics: empty input");
  BinaryCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0, t = labels[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace

AccF1 image_level_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  const BinaryCounts c = binary_counts(predictions, labels);
  return {c.accuracy(), c.f1()};
}

BinaryCounts pixel_counts(const Tensor& pred, const Tensor& gt, double threshold) {
  if (pred.size() != gt.size() || pred.rank() != gt.rank() ||
      (pred.rank() == 3 && (pred.height() != gt.height() || pred.width() != gt.width()))) {
    throw ValidationError("pixel metrics: prediction " + pred.shape_string() + " vs ground truth " +
                          gt.shape_string());
  }
  BinaryCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > threshold, t = gt[i] > 0.5;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

AccF1 pixel_level_metrics(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts, double threshold) {
  if (preds.size() != gts.size()) throw ValidationError("pixel metrics: list length mismatch");
  if (preds.empty()) throw ValidationError("pixel metrics: empty input");
  BinaryCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) c += pixel_counts(preds[i], gts[i], threshold);
  return {c.accuracy(), c.f1()};
}

bool in_group(MethodTag tag, Group g) {
  if (tag == MethodTag::Real) return true;
  return g == Group::Gan ? is_gan(tag) : is_diffusion(tag);
}

namespace {

GroupScores group_scores(const std::vector<SampleOutcome>& outcomes, Group g) {
  GroupScores s;
  BinaryCounts image, pixel;
  for (const auto& o : outcomes) {
    if (!in_group(o.method, g)) continue;
    ++s.samples;
    const bool p = o.predicted[0] != 0, t = o.truth[0] != 0;
    if (p && t) ++image.tp;
    else if (p) ++image.fp;
    else if (t) ++image.fn;
    else ++image.tn;
    pixel += o.pixels;
  }
  if (s.samples > 0) {
    s.image = {image.accuracy(), image.f1()};
    s.pixel = {pixel.total() ? pixel.accuracy() : 0.0, pixel.f1()};
  }
  return s;
}

nlohmann::json acc_f1_json(const AccF1& a) { return {{"acc", a.acc}, {"f1", a.f1}}; }

}  // namespace

MetricsReport build_report(const std::vector<SampleOutcome>& outcomes, const ClassHierarchy& h) {
  if (outcomes.empty()) throw ValidationError("metrics report: no samples");
  MetricsReport r;
  for (int t = 0; t < kStageCount; ++t) r.confusion[t] = ConfusionMatrix(h.size(t));
  std::vector<int> pred, truth;
  BinaryCounts pixels;
  for (const auto& o : outcomes) {
    for (int t = 0; t < kStageCount; ++t) r.confusion[t].add(o.truth[t], o.predicted[t]);
    pred.push_back(o.predicted[0] != 0);
    truth.push_back(o.truth[0] != 0);
    pixels += o.pixels;
  }
  const AccF1 image = image_level_metrics(pred, truth);
  r.image_acc = image.acc;
  r.image_f1 = image.f1;
  r.pixel_acc = pixels.total() ? pixels.accuracy() : 0.0;
  r.pixel_f1 = pixels.f1();
  for (int t = 0; t < kStageCount; ++t) {
    r.stage_acc[t] = r.confusion[t].accuracy();
    r.stage_macro_f1[t] = r.confusion[t].macro_f1();
  }
  r.gan = group_scores(outcomes, Group::Gan);
  r.diffusion = group_scores(outcomes, Group::Diffusion);
  r.avg_image = {(r.gan.image.acc + r.diffusion.image.acc) / 2, (r.gan.image.f1 + r.diffusion.image.f1) / 2};
  r.avg_pixel = {(r.gan.pixel.acc + r.diffusion.pixel.acc) / 2, (r.gan.pixel.f1 + r.diffusion.pixel.f1) / 2};
  r.samples = outcomes.size();
  return r;
}

std::string MetricsReport::to_json_line() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["image_acc"] = image_acc;
  j["image_f1"] = image_f1;
  j["pixel_acc"] = pixel_acc;
  j["pixel_f1"] = pixel_f1;
  j["pixel_aggregation"] = "micro";
  j["stage_acc"] = stage_acc;
  j["stage_macro_f1"] = stage_macro_f1;
  nlohmann::json conf = nlohmann::json::array();
  for (const auto& c : confusion) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < c.classes(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < c.classes(); ++k) row.push_back(c.at(i, k));
      rows.push_back(row);
    }
    conf.push_back(rows);
  }
  j["confusion"] = conf;
  j["groups"] = {
      {"gan", {{"samples", gan.samples}, {"image", acc_f1_json(gan.image)}, {"pixel", acc_f1_json(gan.pixel)}}},
      {"dm",
       {{"samples", diffusion.samples}, {"image", acc_f1_json(diffusion.image)}, {"pixel", acc_f1_json(diffusion.pixel)}}},
      {"avg", {{"image", acc_f1_json(avg_image)}, {"pixel", acc_f1_json(avg_pixel)}}}};
  return j.dump();
}

std::string MetricsReport::to_table() const {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-14s | %-15s | %-15s | %-15s\n", "", "GAN-based", "DM-based", "AVG");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-14s | %7s %7s | %7s %7s | %7s %7s\n", "", "ACC", "F1", "ACC", "F1", "ACC", "F1");
  out += buf;
  auto row = [&](const char* name, const AccF1& g, const AccF1& d, const AccF1& a) {
    std::snprintf(buf, sizeof buf, "%-14s | %7.2f %7.2f | %7.2f %7.2f | %7.2f %7.2f\n", name, 100 * g.acc, 100 * g.f1,
                  100 * d.acc, 100 * d.f1, 100 * a.acc, 100 * a.f1);
    out += buf;
  };
  row("image-level", gan.image, diffusion.image, avg_image);
  row("pixel-level", gan.pixel, diffusion.pixel, avg_pixel);
  std::snprintf(buf, sizeof buf, "overall: image ACC %.4f F1 %.4f | pixel ACC %.4f F1 %.4f (micro) | n=%llu\n",
                image_acc, image_f1, pixel_acc, pixel_f1, static_cast<unsigned long long>(samples));
  out += buf;
  for (int t = 0; t < kStageCount; ++t) {
    std::snprintf(buf, sizeof buf, "stage %d: ACC %.4f macro-F1 %.4f\n", t + 1, stage_acc[t], stage_macro_f1[t]);
    out += buf;
  }
  return out;
}

}  // namespace dahf::metrics
