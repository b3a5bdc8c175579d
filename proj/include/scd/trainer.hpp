#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scd/datamodel.hpp"
#include "scd/losses.hpp"
#include "scd/metrics.hpp"
#include "scd/network.hpp"

namespace scd {

struct TrainConfig {
  double base_lr = 0.1;
  int64_t total_epochs = 50;
  double poly_power = 1.5;
  int64_t batch_size = 6;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = true;
  uint64_t seed = 0;
  int64_t eval_every = 1;
  std::string selection_metric = "fscd";
  double max_grad_norm = 0.0;  // 0 = no clipping
  double threshold = 0.5;      // change-probability threshold for predictions
  int64_t num_threads = 0;     // 0 = libtorch default
};

struct DataConfig {
  std::string root;
  std::string palette;                   // empty = <root>/palette.txt
  std::string train_split = "train.txt";  // relative paths resolve against root
  std::string eval_split = "test.txt";
  bool augment = true;
};

void validate(const TrainConfig& config);

// Polynomial decay base_lr * (1 - epoch / total_epochs)^poly_power on [0, total_epochs].
double lr_at(double epoch, const TrainConfig& config);

struct LossBreakdown {
  double ce = 0, dice = 0, psd = 0, sc = 0, chg = 0, total = 0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double s) const;
  nlohmann::json to_json() const;
};

struct Batch {
  torch::Tensor t1, t2;   // [B, 3, H, W]
  torch::Tensor l1, l2;   // [B, H, W] int64
  torch::Tensor changed;  // [B, H, W] bool
  std::vector<std::string> scene_ids;
};

Batch collate(const std::vector<Sample>& samples);

// Scene ids plus a palette; samples load lazily from disk.
class SceneDataset {
 public:
  SceneDataset(std::filesystem::path root, ClassPalette palette, std::vector<std::string> ids);
  static SceneDataset from_split(const DataConfig& data, const std::string& split_file);

  int64_t size() const { return static_cast<int64_t>(ids_.size()); }
  Sample get(int64_t i) const;
  const std::vector<std::string>& ids() const { return ids_; }
  const ClassPalette& palette() const { return palette_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  ClassPalette palette_;
  std::vector<std::string> ids_;
};

std::filesystem::path resolve_in_root(const std::string& root, const std::string& path);
ClassPalette load_palette(const DataConfig& data);

class Trainer {
 public:
  Trainer(ScdNet model, const TrainConfig& train, const LossWeights& weights);

  // One Nesterov-SGD update of every trainable parameter against the total loss.
  LossBreakdown train_step(const Batch& batch, double lr);

  ScdNet& model() { return model_; }

 private:
  ScdNet model_;
  TrainConfig train_;
  LossWeights weights_;
  std::vector<torch::Tensor> params_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
};

// Maps a batch to predicted (l1, l2) label maps; lets evaluation run on stub predictors.
using Predictor = std::function<std::pair<torch::Tensor, torch::Tensor>(const Batch&)>;

Predictor model_predictor(ScdNet model, double threshold);
MetricAccumulator evaluate(const SceneDataset& dataset, const Predictor& predictor, int64_t batch_size);

struct EpochRecord {
  int64_t epoch = 0;  // 1-based
  double lr = 0;
  int64_t steps = 0;
  LossBreakdown loss;  // means over the epoch's steps
  std::optional<MetricReport> metrics;

  nlohmann::json to_json() const;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::vector<LossBreakdown> steps;
  std::string selection_metric;
  int64_t best_epoch = -1;
  double best_value = 0.0;
  MetricReport best_report;
  MetricReport final_report;
  std::string best_checkpoint;   // relative to the run directory
  std::string final_checkpoint;  // relative to the run directory

  // One JSON object per epoch, then a closing record naming the best checkpoint.
  void write(const std::filesystem::path& path) const;
  void write_steps(const std::filesystem::path& path) const;
};

struct FitOptions {
  // Replaces the model's predictions during evaluation (plumbing tests).
  std::optional<Predictor> eval_predictor;
  std::function<void(const EpochRecord&)> on_epoch;
};

RunLog fit(const ModelConfig& model_config, const DataConfig& data, const TrainConfig& train,
           const LossWeights& weights, const std::filesystem::path& run_dir, const FitOptions& options = {});

}  // namespace scd
