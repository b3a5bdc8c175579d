#include "scd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "scd/checkpoint.hpp"
#include "scd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace scd {
namespace {

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(a),
                    static_cast<uint32_t>(b)};
  std::mt19937_64 rng(seq);
  return rng();
}

}  // namespace

void validate(const TrainConfig& c) {
  require(c.base_lr > 0.0, ErrorKind::InvalidConfig, "trainer.base_lr must be > 0");
  require(c.total_epochs >= 1, ErrorKind::InvalidConfig, "trainer.total_epochs must be >= 1");
  require(c.batch_size >= 1, ErrorKind::InvalidConfig, "trainer.batch_size must be >= 1");
  require(c.poly_power >= 0.0, ErrorKind::InvalidConfig, "trainer.poly_power must be >= 0");
  require(c.momentum >= 0.0 && c.momentum < 1.0, ErrorKind::InvalidConfig, "trainer.momentum must lie in [0,1)");
  require(c.weight_decay >= 0.0, ErrorKind::InvalidConfig, "trainer.weight_decay must be >= 0");
  require(c.eval_every >= 1, ErrorKind::InvalidConfig, "trainer.eval_every must be >= 1");
  require(c.threshold > 0.0 && c.threshold < 1.0, ErrorKind::InvalidConfig, "trainer.threshold must lie in (0,1)");
  require(c.max_grad_norm >= 0.0, ErrorKind::InvalidConfig, "trainer.max_grad_norm must be >= 0");
  MetricReport{}.get(c.selection_metric);
}

double lr_at(double epoch, const TrainConfig& c) {
  const auto total = static_cast<double>(c.total_epochs);
  require(epoch >= 0.0 && epoch <= total, ErrorKind::OutOfRange,
          "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.total_epochs) + "]");
  return c.base_lr * std::pow(1.0 - epoch / total, c.poly_power);
}

// ---------------------------------------------------------------------------

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  ce += o.ce;
  dice += o.dice;
  psd += o.psd;
  sc += o.sc;
  chg += o.chg;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double s) const { return {ce * s, dice * s, psd * s, sc * s, chg * s, total * s}; }

json LossBreakdown::to_json() const {
  return {{"ce", ce}, {"dice", dice}, {"psd", psd}, {"sc", sc}, {"chg", chg}, {"total", total}};
}

Batch collate(const std::vector<Sample>& samples) {
  require(!samples.empty(), ErrorKind::EmptyDataset, "cannot collate an empty batch");
  std::vector<torch::Tensor> t1, t2, l1, l2, m;
  Batch b;
  for (const auto& s : samples) {
    t1.push_back(s.images.t1);
    t2.push_back(s.images.t2);
    l1.push_back(s.labels.l1);
    l2.push_back(s.labels.l2);
    m.push_back(s.mask.m);
    b.scene_ids.push_back(s.images.scene_id);
  }
  try {
    b.t1 = torch::stack(t1);
    b.t2 = torch::stack(t2);
    b.l1 = torch::stack(l1);
    b.l2 = torch::stack(l2);
    b.changed = torch::stack(m);
  } catch (const c10::Error&) {
    fail(ErrorKind::DimensionMismatch, "scenes in one batch differ in size");
  }
  return b;
}

// ---------------------------------------------------------------------------

fs::path resolve_in_root(const std::string& root, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute() || root.empty() || fs::exists(p)) return p;
  return fs::path(root) / p;
}

ClassPalette load_palette(const DataConfig& data) {
  return ClassPalette::load(data.palette.empty() ? fs::path(data.root) / "palette.txt"
                                                 : resolve_in_root(data.root, data.palette));
}

SceneDataset::SceneDataset(fs::path root, ClassPalette palette, std::vector<std::string> ids)
    : root_(std::move(root)), palette_(std::move(palette)), ids_(std::move(ids)) {
  require(!ids_.empty(), ErrorKind::EmptyDataset, "dataset at " + root_.string() + " has no scenes");
}

SceneDataset SceneDataset::from_split(const DataConfig& data, const std::string& split_file) {
  require(!data.root.empty(), ErrorKind::ConfigError, "data.root is not set");
  require(fs::is_directory(data.root), ErrorKind::MissingFile, "dataset root " + data.root);
  return SceneDataset(data.root, load_palette(data), read_split_file(resolve_in_root(data.root, split_file)));
}

Sample SceneDataset::get(int64_t i) const { return load_sample(root_, ids_.at(static_cast<size_t>(i)), palette_); }

// ---------------------------------------------------------------------------

Trainer::Trainer(ScdNet model, const TrainConfig& train, const LossWeights& weights)
    : model_(std::move(model)), train_(train), weights_(weights) {
  params_ = model_->trainable_parameters();
  optimizer_ = std::make_unique<torch::optim::SGD>(params_, torch::optim::SGDOptions(train.base_lr)
                                                                .momentum(train.momentum)
                                                                .nesterov(train.nesterov && train.momentum > 0.0)
                                                                .weight_decay(train.weight_decay));
}

LossBreakdown Trainer::train_step(const Batch& batch, double lr) {
  require(batch.t1.defined() && batch.t1.size(0) >= 1, ErrorKind::EmptyDataset, "empty batch");
  require(lr >= 0.0, ErrorKind::OutOfRange, "learning rate must be >= 0");
  model_->train();
  optimizer_->zero_grad();
  const auto out = model_->forward(batch.t1, batch.t2);
  const auto terms = compute_loss_terms(out.y1, out.y2, out.yc, batch.l1, batch.l2, batch.changed, weights_);

  LossBreakdown b;
  b.ce = terms.ce.item<double>();
  b.dice = terms.dice.defined() ? terms.dice.item<double>() : 0.0;
  b.psd = terms.psd.item<double>();
  b.sc = terms.sc.item<double>();
  b.chg = terms.chg.item<double>();
  torch::Tensor total;
  try {
    total = total_loss(terms, weights_);
  } catch (const Error& e) {
    fail(ErrorKind::NonFinite, std::string("NonFiniteLoss: ") + b.to_json().dump() + " scenes " +
                                   json(batch.scene_ids).dump() + " lr " + std::to_string(lr));
  }
  b.total = total.item<double>();
  total.backward();
  if (train_.max_grad_norm > 0.0) torch::nn::utils::clip_grad_norm_(params_, train_.max_grad_norm);
  for (auto& group : optimizer_->param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  optimizer_->step();
  return b;
}

// ---------------------------------------------------------------------------

Predictor model_predictor(ScdNet model, double threshold) {
  return [model, threshold](const Batch& batch) mutable {
    torch::NoGradGuard no_grad;
    model->eval();
    return predict_scd(model->forward(batch.t1, batch.t2), threshold);
  };
}

MetricAccumulator evaluate(const SceneDataset& dataset, const Predictor& predictor, int64_t batch_size) {
  MetricAccumulator acc(dataset.palette().num_classes());
  for (int64_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<Sample> samples;
    for (int64_t i = start; i < std::min(dataset.size(), start + batch_size); ++i) samples.push_back(dataset.get(i));
    const auto batch = collate(samples);
    const auto [p1, p2] = predictor(batch);
    acc.add(p1, p2, batch.l1, batch.l2);
  }
  return acc;
}

// ---------------------------------------------------------------------------

json EpochRecord::to_json() const {
  json j{{"epoch", epoch}, {"lr", lr}, {"steps", steps}, {"loss", loss.to_json()}};
  j["metrics"] = metrics ? metrics->to_json() : json(nullptr);
  return j;
}

void RunLog::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write " + path.string());
  for (const auto& e : epochs) out << e.to_json().dump() << '\n';
  out << json{{"best", {{"epoch", best_epoch},
                        {"selection_metric", selection_metric},
                        {"value", best_value},
                        {"checkpoint", best_checkpoint}}},
              {"final", {{"checkpoint", final_checkpoint}, {"metrics", final_report.to_json()}}}}
             .dump()
      << '\n';
  out.flush();
  require(out.good(), ErrorKind::IoError, "write failed (disk full?): " + path.string());
}

void RunLog::write_steps(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write " + path.string());
  for (size_t i = 0; i < steps.size(); ++i) {
    auto j = steps[i].to_json();
    j["step"] = i + 1;
    out << j.dump() << '\n';
  }
}

RunLog fit(const ModelConfig& model_config, const DataConfig& data, const TrainConfig& train,
           const LossWeights& weights, const fs::path& run_dir, const FitOptions& options) {
  validate(train);
  validate(weights);
  if (train.num_threads > 0) torch::set_num_threads(static_cast<int>(train.num_threads));

  const auto train_set = SceneDataset::from_split(data, data.train_split);
  const auto eval_set = SceneDataset::from_split(data, data.eval_split);
  require(train_set.palette().num_classes() == model_config.num_classes, ErrorKind::ConfigMismatch,
          "model.num_classes = " + std::to_string(model_config.num_classes) + " but the palette defines " +
              std::to_string(train_set.palette().num_classes()) + " classes");
  fs::create_directories(run_dir);

  Trainer trainer(ScdNet(model_config), train, weights);
  const Predictor predictor = options.eval_predictor.value_or(model_predictor(trainer.model(), train.threshold));

  RunLog log;
  log.selection_metric = train.selection_metric;
  std::vector<int64_t> order(static_cast<size_t>(train_set.size()));

  for (int64_t epoch = 0; epoch < train.total_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(train.seed, 0x5u, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord record;
    record.epoch = epoch + 1;
    record.lr = lr_at(static_cast<double>(epoch), train);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(train.batch_size)) {
      std::vector<Sample> samples;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(train.batch_size)); ++i) {
        auto s = train_set.get(order[i]);
        if (data.augment) s = augment(s, mix_seed(train.seed, static_cast<uint64_t>(epoch), order[i]));
        samples.push_back(std::move(s));
      }
      const auto step = trainer.train_step(collate(samples), record.lr);
      log.steps.push_back(step);
      record.loss += step;
      ++record.steps;
    }
    record.loss = record.loss.scaled(1.0 / static_cast<double>(std::max<int64_t>(record.steps, 1)));

    const bool last = epoch + 1 == train.total_epochs;
    if ((epoch + 1) % train.eval_every == 0 || last) {
      const auto report = evaluate(eval_set, predictor, train.batch_size).report();
      record.metrics = report;
      const double value = report.get(train.selection_metric);
      if (log.best_epoch < 0 || value > log.best_value) {
        log.best_epoch = record.epoch;
        log.best_value = value;
        log.best_report = report;
        log.best_checkpoint = "best.ckpt";
        save_checkpoint(run_dir / log.best_checkpoint, trainer.model(), record.epoch, report.to_json());
      }
      if (last) log.final_report = report;
    }
    log.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }

  log.final_checkpoint = "final.ckpt";
  save_checkpoint(run_dir / log.final_checkpoint, trainer.model(), train.total_epochs, log.final_report.to_json());
  log.write(run_dir / "runlog.jsonl");
  log.write_steps(run_dir / "steps.jsonl");
  return log;
}

}  // namespace scd
