#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scd/config.hpp"
#include "scd/metrics.hpp"

namespace scd {

// Flags shared by every command.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<uint64_t> seed;
  std::filesystem::path out = "runs";
  std::optional<std::filesystem::path> run_dir;  // exact directory instead of <out>/<command>-<timestamp>
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Config file <- overrides <- --seed (which sets trainer.seed and model.seed).
RunConfig resolve_run_config(const CommonOptions& options);

// <out>/<command>-YYYYmmdd-HHMMSS, with a numeric suffix when that name is taken.
std::filesystem::path make_run_dir(const CommonOptions& options, const std::string& command);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// Per-seed reports plus mean and sample standard deviation of every scalar metric.
nlohmann::json seed_report(const std::vector<MetricReport>& reports, const std::vector<uint64_t>& seeds);

std::filesystem::path cmd_train(const CommonOptions& options);

struct EvaluateOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::string split;   // defaults to data.eval_split
  bool oracle = false;  // score the ground truth against itself, no model
};
std::filesystem::path cmd_evaluate(const CommonOptions& options, const EvaluateOptions& eval);

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image1, image2;
};
std::filesystem::path cmd_predict(const CommonOptions& options, const PredictOptions& predict);

std::filesystem::path cmd_synth_gen(const CommonOptions& options);

struct AblationVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct AblationPlan {
  std::vector<AblationVariant> variants;
  std::vector<uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::pair<std::string, std::string>> base_overrides;  // applied before each variant's own

  static AblationPlan from_json(const nlohmann::json& j);
};

struct AblationRun {
  std::string variant;
  uint64_t seed = 0;
  std::optional<MetricReport> report;  // empty when the run failed
  std::string error;
};

struct AblationRow {
  std::string variant;
  int64_t runs = 0, failed = 0;
  // oa, fscd, miou, sek over successful runs; std is empty below two runs.
  std::array<std::optional<double>, 4> mean, std;
};

inline constexpr std::array<const char*, 4> kAblationMetrics{"oa", "fscd", "miou", "sek"};

std::vector<AblationRow> summarize_ablation(const std::vector<std::string>& variants,
                                            const std::vector<AblationRun>& runs);
// Markdown table in percent: one row per variant, columns OA, F_scd, mIoU, SeK as "mean±std".
std::string format_ablation_table(const std::vector<AblationRow>& rows);

struct AblationResult {
  std::filesystem::path run_dir;
  std::vector<AblationRow> rows;
  bool any_failed = false;
};
AblationResult cmd_ablate(const CommonOptions& options, const std::filesystem::path& plan_path);

}  // namespace scd
