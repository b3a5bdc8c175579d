#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

namespace scd {

// SECOND-protocol confusion statistics. Both dates accumulate into the same matrix;
// rows are ground truth, columns are predictions, label 0 is no-change.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int64_t num_classes = 6);

  int64_t num_classes() const { return num_classes_; }
  int64_t size() const { return num_classes_ + 1; }
  int64_t at(int64_t gt, int64_t pred) const { return counts_[static_cast<size_t>(gt * size() + pred)]; }
  int64_t& at(int64_t gt, int64_t pred) { return counts_[static_cast<size_t>(gt * size() + pred)]; }
  int64_t total() const;
  int64_t row_sum(int64_t r) const;
  int64_t col_sum(int64_t c) const;

  void merge(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

  nlohmann::json to_json() const;
  static ConfusionMatrix from_json(const nlohmann::json& j);

 private:
  int64_t num_classes_;
  std::vector<int64_t> counts_;
};

struct ScdCounts {
  int64_t tp = 0;            // changed in both, same semantic label
  int64_t pred_changed = 0;  // predicted label != 0
  int64_t gt_changed = 0;    // ground-truth label != 0

  void merge(const ScdCounts& other);
  bool operator==(const ScdCounts&) const = default;
};

// pred/gt label maps of identical shape ([H,W] or [B,H,W]) for one date; values in {0..K}.
void accumulate_date(const torch::Tensor& pred, const torch::Tensor& gt, ConfusionMatrix& cm, ScdCounts& sc);
// Both dates of a prediction against both dates of the ground truth.
void accumulate(const torch::Tensor& pred1, const torch::Tensor& pred2, const torch::Tensor& gt1,
                const torch::Tensor& gt2, ConfusionMatrix& cm, ScdCounts& sc);

double oa(const ConfusionMatrix& cm);
double iou_nochange(const ConfusionMatrix& cm);
double iou_changed(const ConfusionMatrix& cm);
double miou(const ConfusionMatrix& cm);
double sek(const ConfusionMatrix& cm);
double fscd(const ScdCounts& sc);
// IoU of every label 0..K (0 when the label never appears in gt or pred).
std::vector<double> per_class_iou(const ConfusionMatrix& cm);

struct MetricReport {
  double oa = 0, fscd = 0, miou = 0, iou_nochange = 0, iou_changed = 0, sek = 0;
  std::vector<double> per_class_iou;
  int64_t n_pixels = 0;  // pixels per date
  int64_t n_scenes = 0;

  double get(const std::string& metric) const;
  nlohmann::json to_json() const;
};

MetricReport make_report(const ConfusionMatrix& cm, const ScdCounts& sc, int64_t n_scenes);

// Streaming evaluation state; shards merge commutatively.
struct MetricAccumulator {
  ConfusionMatrix cm;
  ScdCounts sc;
  int64_t n_scenes = 0;

  explicit MetricAccumulator(int64_t num_classes = 6) : cm(num_classes) {}
  void add(const torch::Tensor& pred1, const torch::Tensor& pred2, const torch::Tensor& gt1, const torch::Tensor& gt2);
  void merge(const MetricAccumulator& other);
  MetricReport report() const { return make_report(cm, sc, n_scenes); }
};

}  // namespace scd
