#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dahf/taxonomy.hpp"
#include "dahf/tensor.hpp"

namespace dahf::metrics {

/// Binary counts with "forged" as the positive class.
struct BinaryCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  double accuracy() const;
  /// Harmonic mean of precision and recall; 1 when tp = fp = fn = 0.
  double f1() const;
  BinaryCounts& operator+=(const BinaryCounts& o);
};

/// f1 from raw counts with the degenerate convention above.
double f1_score(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

struct AccF1 {
  double acc = 0.0;
  double f1 = 0.0;
};

/// Square confusion matrix, rows = truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 2);

  void add(int truth, int predicted);
  int classes() const { return n_; }
  std::uint64_t at(int truth, int predicted) const { return m_[static_cast<std::size_t>(truth) * n_ + predicted]; }
  std::uint64_t total() const;
  double accuracy() const;
  /// Unweighted mean of per-class F1 over classes that appear in truth or prediction.
  double macro_f1() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);

 private:
  int n_;
  std::vector<std::uint64_t> m_;
};

/// Image level on the real/forged decision: acc and forged-class F1.
/// predictions/labels are 1 for forged, 0 for real.
AccF1 image_level_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Pixel counts of one forged-probability map against a binary mask.
BinaryCounts pixel_counts(const Tensor& pred, const Tensor& gt, double threshold = 0.5);
/// Micro-aggregated pixel acc/F1 over a set of maps.
AccF1 pixel_level_metrics(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts, double threshold = 0.5);

/// Method grouping used by the report columns.
enum class Group { Gan, Diffusion };
/// Real samples count toward both groups.
bool in_group(MethodTag tag, Group g);

struct GroupScores {
  AccF1 image;
  AccF1 pixel;
  std::uint64_t samples = 0;
};

/// One evaluated sample, reduced to what the report needs.
struct SampleOutcome {
  MethodTag method = MethodTag::Real;
  LabelPath truth{};
  LabelPath predicted{};
  BinaryCounts pixels;
};

struct MetricsReport {
  double image_acc = 0.0, image_f1 = 0.0;
  double pixel_acc = 0.0, pixel_f1 = 0.0;
  std::array<ConfusionMatrix, kStageCount> confusion;
  std::array<double, kStageCount> stage_acc{};
  std::array<double, kStageCount> stage_macro_f1{};
  GroupScores gan, diffusion;
  AccF1 avg_image, avg_pixel;  // mean of the two groups
  std::uint64_t samples = 0;

  /// One JSON object with fixed field names, no trailing newline.
  std::string to_json_line() const;
  /// Console table with GAN-based | DM-based | AVG columns.
  std::string to_table() const;
};

MetricsReport build_report(const std::vector<SampleOutcome>& outcomes, const ClassHierarchy& h);

}  // namespace dahf::metrics
