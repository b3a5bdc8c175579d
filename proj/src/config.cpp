#include "scd/config.hpp"

#include <algorithm>
#include <fstream>

#include "scd/errors.hpp"

using nlohmann::json;

namespace scd {
namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, section + "." + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"num_classes", c.num_classes},
          {"encoder",
           {{"stage_channels", c.encoder.stage_channels},
            {"stage_strides", c.encoder.stage_strides},
            {"block_counts", c.encoder.block_counts},
            {"pretrained_path", c.encoder.pretrained_path}}},
          {"cbam", {{"enabled", c.cbam.enabled}, {"reduction", c.cbam.reduction}, {"share_spatial", c.cbam.share_spatial}}},
          {"interaction",
           {{"enabled", c.interaction.enabled},
            {"heads", c.interaction.heads},
            {"token_stride", c.interaction.token_stride}}},
          {"decoder", {{"channels", c.decoder.channels}}},
          {"share_semantic_decoders", c.share_semantic_decoders},
          {"input_mean", c.input_mean},
          {"input_std", c.input_std},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read(j, "num_classes", c.num_classes, "model");
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    read(e, "stage_channels", c.encoder.stage_channels, "model.encoder");
    read(e, "stage_strides", c.encoder.stage_strides, "model.encoder");
    read(e, "block_counts", c.encoder.block_counts, "model.encoder");
    read(e, "pretrained_path", c.encoder.pretrained_path, "model.encoder");
  }
  if (j.contains("cbam")) {
    const auto& b = j["cbam"];
    read(b, "enabled", c.cbam.enabled, "model.cbam");
    read(b, "reduction", c.cbam.reduction, "model.cbam");
    read(b, "share_spatial", c.cbam.share_spatial, "model.cbam");
  }
  if (j.contains("interaction")) {
    const auto& i = j["interaction"];
    read(i, "enabled", c.interaction.enabled, "model.interaction");
    read(i, "heads", c.interaction.heads, "model.interaction");
    read(i, "token_stride", c.interaction.token_stride, "model.interaction");
  }
  if (j.contains("decoder")) read(j["decoder"], "channels", c.decoder.channels, "model.decoder");
  read(j, "share_semantic_decoders", c.share_semantic_decoders, "model");
  read(j, "input_mean", c.input_mean, "model");
  read(j, "input_std", c.input_std, "model");
  read(j, "seed", c.seed, "model");
  return c;
}

json architecture_json(const ModelConfig& c) {
  auto j = to_json(c);
  j.erase("seed");
  j["encoder"].erase("pretrained_path");
  // Gate switching does not change parameter shapes, but it changes the function; keep it.
  return j;
}

json to_json(const RunConfig& c) {
  return {{"data",
           {{"root", c.data.root},
            {"palette", c.data.palette},
            {"train_split", c.data.train_split},
            {"eval_split", c.data.eval_split},
            {"augment", c.data.augment}}},
          {"model", to_json(c.model)},
          {"losses",
           {{"alpha", c.losses.alpha},
            {"beta", c.losses.beta},
            {"gamma", c.losses.gamma},
            {"lambda1", c.losses.lambda1},
            {"change", c.losses.change},
            {"tau", c.losses.tau}}},
          {"trainer",
           {{"base_lr", c.trainer.base_lr},
            {"total_epochs", c.trainer.total_epochs},
            {"poly_power", c.trainer.poly_power},
            {"batch_size", c.trainer.batch_size},
            {"momentum", c.trainer.momentum},
            {"weight_decay", c.trainer.weight_decay},
            {"nesterov", c.trainer.nesterov},
            {"seed", c.trainer.seed},
            {"eval_every", c.trainer.eval_every},
            {"selection_metric", c.trainer.selection_metric},
            {"max_grad_norm", c.trainer.max_grad_norm},
            {"threshold", c.trainer.threshold},
            {"num_threads", c.trainer.num_threads}}},
          {"synth",
           {{"n_samples", c.synth.n_samples},
            {"height", c.synth.height},
            {"width", c.synth.width},
            {"num_classes", c.synth.num_classes},
            {"shapes_per_scene", c.synth.shapes_per_scene},
            {"change_rate", c.synth.change_rate},
            {"test_fraction", c.synth.test_fraction}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("data")) {
    const auto& d = j["data"];
    read(d, "root", c.data.root, "data");
    read(d, "palette", c.data.palette, "data");
    read(d, "train_split", c.data.train_split, "data");
    read(d, "eval_split", c.data.eval_split, "data");
    read(d, "augment", c.data.augment, "data");
  }
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("losses")) {
    const auto& l = j["losses"];
    read(l, "alpha", c.losses.alpha, "losses");
    read(l, "beta", c.losses.beta, "losses");
    read(l, "gamma", c.losses.gamma, "losses");
    read(l, "lambda1", c.losses.lambda1, "losses");
    read(l, "change", c.losses.change, "losses");
    read(l, "tau", c.losses.tau, "losses");
  }
  if (j.contains("trainer")) {
    const auto& t = j["trainer"];
    read(t, "base_lr", c.trainer.base_lr, "trainer");
    read(t, "total_epochs", c.trainer.total_epochs, "trainer");
    read(t, "poly_power", c.trainer.poly_power, "trainer");
    read(t, "batch_size", c.trainer.batch_size, "trainer");
    read(t, "momentum", c.trainer.momentum, "trainer");
    read(t, "weight_decay", c.trainer.weight_decay, "trainer");
    read(t, "nesterov", c.trainer.nesterov, "trainer");
    read(t, "seed", c.trainer.seed, "trainer");
    read(t, "eval_every", c.trainer.eval_every, "trainer");
    read(t, "selection_metric", c.trainer.selection_metric, "trainer");
    read(t, "max_grad_norm", c.trainer.max_grad_norm, "trainer");
    read(t, "threshold", c.trainer.threshold, "trainer");
    read(t, "num_threads", c.trainer.num_threads, "trainer");
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    read(s, "n_samples", c.synth.n_samples, "synth");
    read(s, "height", c.synth.height, "synth");
    read(s, "width", c.synth.width, "synth");
    read(s, "num_classes", c.synth.num_classes, "synth");
    read(s, "shapes_per_scene", c.synth.shapes_per_scene, "synth");
    read(s, "change_rate", c.synth.change_rate, "synth");
    read(s, "test_fraction", c.synth.test_fraction, "synth");
  }
  return c;
}

json default_config_json() { return to_json(RunConfig{}); }

void merge_strict(json& base, const json& patch, const std::string& prefix) {
  require(patch.is_object(), ErrorKind::ConfigError, (prefix.empty() ? "config" : prefix) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    require(base.contains(it.key()), ErrorKind::ConfigError, "unknown config key '" + path + "'");
    auto& target = base[it.key()];
    if (target.is_object()) {
      merge_strict(target, it.value(), path);
    } else {
      require(!it.value().is_object(), ErrorKind::ConfigError, path + ": expected a value, got an object");
      target = it.value();
    }
  }
}

void apply_override(json& doc, const std::string& dotted_key, const std::string& value_text) {
  json value = json::parse(value_text, nullptr, /*allow_exceptions=*/false);
  const json::json_pointer pointer("/" + [&] {
    std::string p = dotted_key;
    std::replace(p.begin(), p.end(), '.', '/');
    return p;
  }());
  // String-typed keys take the text verbatim, so `--data.root 2024` stays a path.
  if (value.is_discarded() || (doc.contains(pointer) && doc.at(pointer).is_string())) value = value_text;
  // Build the nested patch {a: {b: value}} and merge it strictly.
  json patch = value;
  std::string key = dotted_key;
  while (true) {
    const auto dot = key.rfind('.');
    const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
    require(!leaf.empty(), ErrorKind::ConfigError, "malformed override key '" + dotted_key + "'");
    patch = json{{leaf, patch}};
    if (dot == std::string::npos) break;
    key = key.substr(0, dot);
  }
  merge_strict(doc, patch);
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  json doc = default_config_json();
  if (file) {
    std::ifstream in(*file);
    require(in.good(), ErrorKind::MissingFile, file->string());
    json loaded = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
    require(!loaded.is_discarded(), ErrorKind::ConfigError, file->string() + ": not valid JSON");
    merge_strict(doc, loaded);
  }
  for (const auto& [key, value] : overrides) apply_override(doc, key, value);

  RunConfig c = run_config_from_json(doc);
  try {
    validate(c.model);
    validate(c.losses);
    validate(c.trainer);
    validate(c.synth);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, e.what());
  }
  return c;
}

}  // namespace scd
