#include "scd/metrics.hpp"

#include <cmath>
#include <numeric>

#include "scd/errors.hpp"

namespace scd {

ConfusionMatrix::ConfusionMatrix(int64_t num_classes)
    : num_classes_(num_classes), counts_(static_cast<size_t>((num_classes + 1) * (num_classes + 1)), 0) {
  require(num_classes >= 1, ErrorKind::InvalidConfig, "confusion matrix needs K >= 1");
}

int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), int64_t{0}); }

int64_t ConfusionMatrix::row_sum(int64_t r) const {
  int64_t s = 0;
  for (int64_t c = 0; c < size(); ++c) s += at(r, c);
  return s;
}

int64_t ConfusionMatrix::col_sum(int64_t c) const {
  int64_t s = 0;
  for (int64_t r = 0; r < size(); ++r) s += at(r, c);
  return s;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  require(other.num_classes_ == num_classes_, ErrorKind::ShapeMismatch, "cannot merge matrices of different K");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

nlohmann::json ConfusionMatrix::to_json() const {
  auto rows = nlohmann::json::array();
  for (int64_t r = 0; r < size(); ++r) {
    auto row = nlohmann::json::array();
    for (int64_t c = 0; c < size(); ++c) row.push_back(at(r, c));
    rows.push_back(row);
  }
  return rows;
}

ConfusionMatrix ConfusionMatrix::from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() >= 2, ErrorKind::InvalidConfig, "confusion matrix must be a square array");
  ConfusionMatrix cm(static_cast<int64_t>(j.size()) - 1);
  for (int64_t r = 0; r < cm.size(); ++r) {
    require(j[r].is_array() && static_cast<int64_t>(j[r].size()) == cm.size(), ErrorKind::InvalidConfig,
            "confusion matrix must be square");
    for (int64_t c = 0; c < cm.size(); ++c) cm.at(r, c) = j[r][c].get<int64_t>();
  }
  return cm;
}

void ScdCounts::merge(const ScdCounts& other) {
  tp += other.tp;
  pred_changed += other.pred_changed;
  gt_changed += other.gt_changed;
}

void accumulate_date(const torch::Tensor& pred, const torch::Tensor& gt, ConfusionMatrix& cm, ScdCounts& sc) {
  require(pred.sizes() == gt.sizes(), ErrorKind::ShapeMismatch, "prediction and ground truth differ in shape");
  const auto p = pred.to(torch::kInt64).flatten();
  const auto g = gt.to(torch::kInt64).flatten();
  if (p.numel() == 0) return;
  const int64_t n = cm.size();
  for (const auto* t : {&p, &g}) {
    require(t->min().item<int64_t>() >= 0 && t->max().item<int64_t>() < n, ErrorKind::LabelOutOfRange,
            "labels must lie in {0.." + std::to_string(n - 1) + "}");
  }
  const auto counts = torch::bincount(g * n + p, {}, n * n).contiguous();
  const auto* c = counts.data_ptr<int64_t>();
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t k = 0; k < n; ++k) cm.at(r, k) += c[r * n + k];
  }
  const auto pc = p.ne(0), gc = g.ne(0);
  sc.tp += pc.logical_and(gc).logical_and(p.eq(g)).sum().item<int64_t>();
  sc.pred_changed += pc.sum().item<int64_t>();
  sc.gt_changed += gc.sum().item<int64_t>();
}

void accumulate(const torch::Tensor& pred1, const torch::Tensor& pred2, const torch::Tensor& gt1,
                const torch::Tensor& gt2, ConfusionMatrix& cm, ScdCounts& sc) {
  require(pred1.sizes() == pred2.sizes(), ErrorKind::ShapeMismatch, "predicted dates differ in shape");
  accumulate_date(pred1, gt1, cm, sc);
  accumulate_date(pred2, gt2, cm, sc);
}

double oa(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  require(total > 0, ErrorKind::EmptyMatrix, "OA of an empty confusion matrix");
  int64_t diag = 0;
  for (int64_t i = 0; i < cm.size(); ++i) diag += cm.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(total);
}

double iou_nochange(const ConfusionMatrix& cm) {
  require(cm.total() > 0, ErrorKind::EmptyMatrix, "IoU of an empty confusion matrix");
  const int64_t q00 = cm.at(0, 0);
  const int64_t denom = cm.row_sum(0) + cm.col_sum(0) - q00;
  return denom == 0 ? 0.0 : static_cast<double>(q00) / static_cast<double>(denom);
}

double iou_changed(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  require(total > 0, ErrorKind::EmptyMatrix, "IoU of an empty confusion matrix");
  int64_t diag = 0;
  for (int64_t i = 1; i < cm.size(); ++i) diag += cm.at(i, i);
  const int64_t denom = total - cm.at(0, 0);
  return denom == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(denom);
}

double miou(const ConfusionMatrix& cm) { return (iou_nochange(cm) + iou_changed(cm)) / 2.0; }

double sek(const ConfusionMatrix& cm) {
  const double ioc = iou_changed(cm);
  // Kappa over the matrix with the no-change/no-change cell removed.
  ConfusionMatrix q = cm;
  q.at(0, 0) = 0;
  const int64_t total = q.total();
  if (total == 0) return 0.0;
  const double n = static_cast<double>(total);
  double diag = 0.0, expected = 0.0;
  for (int64_t j = 0; j < q.size(); ++j) {
    diag += static_cast<double>(q.at(j, j));
    expected += static_cast<double>(q.row_sum(j)) * static_cast<double>(q.col_sum(j));
  }
  const double rho = diag / n;
  const double eta = expected / (n * n);
  if (eta == 1.0) return 0.0;
  const double kappa = (rho - eta) / (1.0 - eta);
  return std::exp(ioc - 1.0) * kappa;
}

double fscd(const ScdCounts& sc) {
  const double p = sc.pred_changed == 0 ? 0.0 : static_cast<double>(sc.tp) / static_cast<double>(sc.pred_changed);
  const double r = sc.gt_changed == 0 ? 0.0 : static_cast<double>(sc.tp) / static_cast<double>(sc.gt_changed);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  std::vector<double> out;
  for (int64_t k = 0; k < cm.size(); ++k) {
    const int64_t denom = cm.row_sum(k) + cm.col_sum(k) - cm.at(k, k);
    out.push_back(denom == 0 ? 0.0 : static_cast<double>(cm.at(k, k)) / static_cast<double>(denom));
  }
  return out;
}

double MetricReport::get(const std::string& metric) const {
  if (metric == "oa") return oa;
  if (metric == "fscd") return fscd;
  if (metric == "miou") return miou;
  if (metric == "sek") return sek;
  fail(ErrorKind::InvalidConfig, "unknown metric '" + metric + "' (expected fscd, sek, miou or oa)");
}

nlohmann::json MetricReport::to_json() const {
  return {{"oa", oa},
          {"fscd", fscd},
          {"miou", miou},
          {"iou_nochange", iou_nochange},
          {"iou_changed", iou_changed},
          {"sek", sek},
          {"per_class_iou", per_class_iou},
          {"n_pixels", n_pixels},
          {"n_scenes", n_scenes}};
}

MetricReport make_report(const ConfusionMatrix& cm, const ScdCounts& sc, int64_t n_scenes) {
  MetricReport r;
  r.oa = oa(cm);
  r.fscd = fscd(sc);
  r.iou_nochange = iou_nochange(cm);
  r.iou_changed = iou_changed(cm);
  r.miou = miou(cm);
  r.sek = sek(cm);
  r.per_class_iou = per_class_iou(cm);
  r.n_pixels = cm.total() / 2;
  r.n_scenes = n_scenes;
  return r;
}

void MetricAccumulator::add(const torch::Tensor& pred1, const torch::Tensor& pred2, const torch::Tensor& gt1,
                            const torch::Tensor& gt2) {
  accumulate(pred1, pred2, gt1, gt2, cm, sc);
  n_scenes += pred1.dim() == 3 ? pred1.size(0) : 1;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  cm.merge(other.cm);
  sc.merge(other.sc);
  n_scenes += other.n_scenes;
}

}  // namespace scd
