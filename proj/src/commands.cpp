#include "scd/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "scd/checkpoint.hpp"
#include "scd/errors.hpp"
#include "scd/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace scd {
namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return s.str();
}

std::string override_text(const json& value) { return value.is_string() ? value.get<std::string>() : value.dump(); }

std::vector<std::pair<std::string, std::string>> overrides_from_json(const json& j, const std::string& where) {
  require(j.is_object(), ErrorKind::ConfigError, where + ": expected an object of dotted-key overrides");
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(it.key(), override_text(it.value()));
  return out;
}

std::optional<ClassPalette> palette_if_configured(const DataConfig& data) {
  if (data.palette.empty() && data.root.empty()) return std::nullopt;
  return load_palette(data);
}

void require_matching_classes(const ClassPalette& palette, const ModelConfig& model) {
  require(palette.num_classes() == model.num_classes, ErrorKind::ConfigMismatch,
          "checkpoint model has " + std::to_string(model.num_classes) + " semantic classes but the palette defines " +
              std::to_string(palette.num_classes()));
}

RunLog train_into(const RunConfig& config, const fs::path& run_dir) {
  write_json(run_dir / "config.json", to_json(config));
  const auto log = fit(config.model, config.data, config.trainer, config.losses, run_dir);
  auto report = seed_report({log.best_report}, {config.trainer.seed});
  report["selection_metric"] = log.selection_metric;
  report["best_epoch"] = log.best_epoch;
  report["best_checkpoint"] = log.best_checkpoint;
  report["final"] = log.final_report.to_json();
  write_json(run_dir / "metrics.json", report);
  return log;
}

}  // namespace

RunConfig resolve_run_config(const CommonOptions& options) {
  auto overrides = options.overrides;
  if (options.seed) {
    overrides.emplace_back("trainer.seed", std::to_string(*options.seed));
    overrides.emplace_back("model.seed", std::to_string(*options.seed));
  }
  return resolve_config(options.config, overrides);
}

fs::path make_run_dir(const CommonOptions& options, const std::string& command) {
  if (options.run_dir) {
    fs::create_directories(*options.run_dir);
    return *options.run_dir;
  }
  fs::create_directories(options.out);
  const std::string base = command + "-" + timestamp();
  for (int n = 0;; ++n) {
    const fs::path dir = options.out / (n == 0 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  out.flush();
  require(out.good(), ErrorKind::IoError, "write failed (disk full?): " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::MissingFile, path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  require(!j.is_discarded(), ErrorKind::ConfigError, path.string() + ": not valid JSON");
  return j;
}

json seed_report(const std::vector<MetricReport>& reports, const std::vector<uint64_t>& seeds) {
  require(!reports.empty() && reports.size() == seeds.size(), ErrorKind::InvalidConfig,
          "seed report needs one report per seed");
  const double n = static_cast<double>(reports.size());
  json mean = json::object(), stdev = json::object();
  for (const char* metric : {"oa", "fscd", "miou", "iou_nochange", "iou_changed", "sek"}) {
    double m = 0;
    for (const auto& r : reports) m += r.to_json()[metric].get<double>() / n;
    mean[metric] = m;
    if (reports.size() < 2) {
      stdev[metric] = nullptr;
      continue;
    }
    double ss = 0;
    for (const auto& r : reports) ss += std::pow(r.to_json()[metric].get<double>() - m, 2);
    stdev[metric] = std::sqrt(ss / (n - 1));
  }
  std::vector<double> per_class(reports.front().per_class_iou.size(), 0.0);
  for (const auto& r : reports)
    for (size_t i = 0; i < per_class.size() && i < r.per_class_iou.size(); ++i) per_class[i] += r.per_class_iou[i] / n;

  json j = mean;
  j["per_class_iou"] = per_class;
  j["n_pixels"] = reports.front().n_pixels;
  j["n_scenes"] = reports.front().n_scenes;
  j["seeds"] = seeds;
  j["mean"] = mean;
  j["std"] = stdev;
  j["runs"] = json::array();
  for (const auto& r : reports) j["runs"].push_back(r.to_json());
  return j;
}

// ---------------------------------------------------------------------------

fs::path cmd_train(const CommonOptions& options) {
  const auto config = resolve_run_config(options);
  const auto run_dir = make_run_dir(options, "train");
  train_into(config, run_dir);
  return run_dir;
}

fs::path cmd_evaluate(const CommonOptions& options, const EvaluateOptions& eval) {
  const auto config = resolve_run_config(options);
  const auto dataset = SceneDataset::from_split(config.data, eval.split.empty() ? config.data.eval_split : eval.split);

  Predictor predictor;
  json source;
  if (eval.oracle) {
    predictor = [](const Batch& b) { return std::make_pair(b.l1, b.l2); };
    source = "ground truth (oracle bypass)";
  } else {
    require(eval.checkpoint.has_value(), ErrorKind::ConfigError, "evaluate needs --checkpoint (or --oracle)");
    auto model = load_checkpoint(*eval.checkpoint);
    require_matching_classes(dataset.palette(), model->config());
    predictor = model_predictor(model, config.trainer.threshold);
    source = eval.checkpoint->string();
  }
  const auto acc = evaluate(dataset, predictor, config.trainer.batch_size);
  const auto run_dir = make_run_dir(options, "evaluate");
  auto report = seed_report({acc.report()}, {config.trainer.seed});
  report["source"] = source;
  report["threshold"] = config.trainer.threshold;
  report["confusion_matrix"] = acc.cm.to_json();
  report["scd_counts"] = {{"tp", acc.sc.tp}, {"pred_changed", acc.sc.pred_changed}, {"gt_changed", acc.sc.gt_changed}};
  report["scene_ids"] = dataset.ids();
  write_json(run_dir / "config.json", to_json(config));
  write_json(run_dir / "metrics.json", report);
  return run_dir;
}

fs::path cmd_predict(const CommonOptions& options, const PredictOptions& predict) {
  const auto config = resolve_run_config(options);
  auto model = load_checkpoint(predict.checkpoint);
  const auto palette = palette_if_configured(config.data).value_or(ClassPalette::synthetic(model->config().num_classes));
  require_matching_classes(palette, model->config());

  const auto t1 = image_to_tensor(read_png(predict.image1));
  const auto t2 = image_to_tensor(read_png(predict.image2));
  require(t1.sizes() == t2.sizes(), ErrorKind::DimensionMismatch,
          predict.image1.string() + " and " + predict.image2.string() + " differ in size");
  const auto h = t1.size(1), w = t1.size(2);
  require(h >= 32 && w >= 32 && h % 32 == 0 && w % 32 == 0, ErrorKind::DimensionMismatch,
          predict.image1.string() + ": height and width must be multiples of 32, got " + std::to_string(h) + "x" +
              std::to_string(w));

  torch::NoGradGuard no_grad;
  model->eval();
  const auto [p1, p2] = predict_scd(model->forward(t1.unsqueeze(0), t2.unsqueeze(0)), config.trainer.threshold);

  const auto run_dir = make_run_dir(options, "predict");
  write_png(run_dir / "label1.png", encode_labels(p1[0], palette));
  write_png(run_dir / "label2.png", encode_labels(p2[0], palette));
  RgbImage change(h, w);
  const auto changed = (p1[0] != 0).contiguous();
  const auto* c = changed.data_ptr<bool>();
  for (int64_t i = 0; i < h * w; ++i)
    if (c[i]) std::fill_n(change.pixels.begin() + i * 3, 3, uint8_t{255});
  write_png(run_dir / "change.png", change);
  return run_dir;
}

fs::path cmd_synth_gen(const CommonOptions& options) {
  const auto config = resolve_run_config(options);
  const auto run_dir = make_run_dir(options, "synth");
  synth_generate(config.synth, config.trainer.seed, run_dir);
  return run_dir;
}

// ---------------------------------------------------------------------------

AblationPlan AblationPlan::from_json(const json& j) {
  require(j.is_object(), ErrorKind::ConfigError, "ablation plan: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::set<std::string> known{"variants", "seeds", "base"};
    require(known.count(it.key()) == 1, ErrorKind::ConfigError, "unknown ablation plan key '" + it.key() + "'");
  }
  AblationPlan plan;
  if (j.contains("seeds")) {
    require(j["seeds"].is_array(), ErrorKind::ConfigError, "ablation plan: seeds must be a list");
    plan.seeds = j["seeds"].get<std::vector<uint64_t>>();
  }
  require(!plan.seeds.empty(), ErrorKind::ConfigError, "ablation plan: at least one seed is required");
  if (j.contains("base")) plan.base_overrides = overrides_from_json(j["base"], "ablation plan base");
  require(j.contains("variants") && j["variants"].is_array() && !j["variants"].empty(), ErrorKind::ConfigError,
          "ablation plan: variants must be a nonempty list");
  std::set<std::string> names;
  for (const auto& v : j["variants"]) {
    require(v.is_object() && v.contains("name") && v["name"].is_string(), ErrorKind::ConfigError,
            "ablation plan: every variant needs a name");
    AblationVariant variant{v["name"].get<std::string>(), {}};
    require(names.insert(variant.name).second, ErrorKind::ConfigError,
            "ablation plan: duplicate variant name '" + variant.name + "'");
    if (v.contains("overrides"))
      variant.overrides = overrides_from_json(v["overrides"], "ablation variant '" + variant.name + "'");
    plan.variants.push_back(std::move(variant));
  }
  return plan;
}

std::vector<AblationRow> summarize_ablation(const std::vector<std::string>& variants,
                                            const std::vector<AblationRun>& runs) {
  std::vector<AblationRow> rows;
  for (const auto& name : variants) {
    AblationRow row;
    row.variant = name;
    std::vector<const MetricReport*> ok;
    for (const auto& r : runs) {
      if (r.variant != name) continue;
      ++row.runs;
      if (r.report) {
        ok.push_back(&*r.report);
      } else {
        ++row.failed;
      }
    }
    const double n = static_cast<double>(ok.size());
    for (size_t m = 0; m < kAblationMetrics.size() && !ok.empty(); ++m) {
      double mean = 0;
      for (const auto* r : ok) mean += r->get(kAblationMetrics[m]);
      mean /= n;
      row.mean[m] = mean;
      if (ok.size() < 2) continue;
      double ss = 0;
      for (const auto* r : ok) ss += std::pow(r->get(kAblationMetrics[m]) - mean, 2);
      row.std[m] = std::sqrt(ss / (n - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s << "| Variant | OA (%) | F_scd (%) | mIoU (%) | SeK (%) |\n";
  s << "|---|---|---|---|---|\n";
  s << std::fixed << std::setprecision(2);
  for (const auto& row : rows) {
    s << "| " << row.variant;
    if (row.failed > 0) s << " (FAILED " << row.failed << "/" << row.runs << ")";
    for (size_t m = 0; m < kAblationMetrics.size(); ++m) {
      s << " | ";
      if (!row.mean[m]) continue;
      s << 100.0 * *row.mean[m] << "±";
      if (row.std[m]) s << 100.0 * *row.std[m];
    }
    s << " |\n";
  }
  return s.str();
}

AblationResult cmd_ablate(const CommonOptions& options, const fs::path& plan_path) {
  const auto plan = AblationPlan::from_json(read_json(plan_path));
  AblationResult result;
  result.run_dir = make_run_dir(options, "ablate");
  write_json(result.run_dir / "plan.json", read_json(plan_path));

  std::vector<AblationRun> runs;
  std::vector<std::string> names;
  for (const auto& variant : plan.variants) {
    names.push_back(variant.name);
    for (const auto seed : plan.seeds) {
      AblationRun run{variant.name, seed, std::nullopt, {}};
      CommonOptions sub = options;
      sub.seed = seed;
      sub.overrides.insert(sub.overrides.end(), plan.base_overrides.begin(), plan.base_overrides.end());
      sub.overrides.insert(sub.overrides.end(), variant.overrides.begin(), variant.overrides.end());
      sub.run_dir = result.run_dir / variant.name / ("seed-" + std::to_string(seed));
      try {
        const auto config = resolve_run_config(sub);
        fs::create_directories(*sub.run_dir);
        run.report = train_into(config, *sub.run_dir).best_report;
      } catch (const std::exception& e) {
        run.error = e.what();
        std::cerr << "ablate: " << variant.name << " seed " << seed << " failed: " << e.what() << '\n';
      }
      runs.push_back(std::move(run));
    }
  }

  result.rows = summarize_ablation(names, runs);
  for (const auto& row : result.rows) result.any_failed = result.any_failed || row.failed > 0;

  json summary{{"seeds", plan.seeds}, {"variants", json::array()}, {"runs", json::array()}};
  for (const auto& r : runs) {
    summary["runs"].push_back({{"variant", r.variant},
                               {"seed", r.seed},
                               {"report", r.report ? r.report->to_json() : json(nullptr)},
                               {"error", r.error}});
  }
  for (const auto& row : result.rows) {
    json v{{"name", row.variant}, {"runs", row.runs}, {"failed", row.failed}};
    for (size_t m = 0; m < kAblationMetrics.size(); ++m) {
      v["mean"][kAblationMetrics[m]] = row.mean[m] ? json(*row.mean[m]) : json(nullptr);
      v["std"][kAblationMetrics[m]] = row.std[m] ? json(*row.std[m]) : json(nullptr);
    }
    summary["variants"].push_back(v);
  }
  write_json(result.run_dir / "summary.json", summary);
  std::ofstream(result.run_dir / "table.md") << format_ablation_table(result.rows);
  return result;
}

}  // namespace scd
