#include "scd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "scd/config.hpp"
#include "scd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace scd {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'C', 'D', 'C', 'K', 'P', 'T', '\0'};

enum class DType : uint8_t { Float32 = 0, Float64 = 1, Int64 = 2 };

DType dtype_of(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return DType::Float32;
    case torch::kFloat64: return DType::Float64;
    case torch::kInt64: return DType::Int64;
    default: fail(ErrorKind::IoError, "unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType scalar_of(DType d) {
  switch (d) {
    case DType::Float32: return torch::kFloat32;
    case DType::Float64: return torch::kFloat64;
    case DType::Int64: return torch::kInt64;
  }
  fail(ErrorKind::IoError, "corrupt checkpoint: unknown dtype code");
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(in.good(), ErrorKind::IoError, "truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

void write_checkpoint_file(const fs::path& path, const json& header, const TensorTable& tensors) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kCheckpointVersion);
  const std::string text = header.dump();
  put<uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    const auto t = tensor.detach().cpu().contiguous();
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint8_t>(out, static_cast<uint8_t>(dtype_of(t)));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<int64_t>(out, d);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  out.flush();
  require(out.good(), ErrorKind::IoError, "write failed (disk full?): " + path.string());
}

Checkpoint read_checkpoint_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::MissingFile, path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::IoError,
          path.string() + " is not a checkpoint file");
  const auto version = get<uint32_t>(in, path);
  require(version == kCheckpointVersion, ErrorKind::ConfigMismatch,
          path.string() + ": unsupported checkpoint format_version " + std::to_string(version));

  Checkpoint ck;
  std::string text(get<uint64_t>(in, path), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  require(in.good(), ErrorKind::IoError, "truncated checkpoint header: " + path.string());
  ck.header = json::parse(text, nullptr, /*allow_exceptions=*/false);
  require(!ck.header.is_discarded(), ErrorKind::IoError, "corrupt checkpoint header: " + path.string());

  const auto count = get<uint64_t>(in, path);
  for (uint64_t i = 0; i < count; ++i) {
    std::string name(get<uint32_t>(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto dtype = scalar_of(static_cast<DType>(get<uint8_t>(in, path)));
    std::vector<int64_t> dims(get<uint32_t>(in, path));
    for (auto& d : dims) d = get<int64_t>(in, path);
    auto t = torch::empty(dims, dtype);
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    require(in.good() || (t.nbytes() == 0), ErrorKind::IoError, "truncated tensor '" + name + "' in " + path.string());
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

void write_tensor_table(const fs::path& path, const TensorTable& tensors) {
  write_checkpoint_file(path, json{{"format_version", kCheckpointVersion}}, tensors);
}

TensorTable read_tensor_table(const fs::path& path) { return read_checkpoint_file(path).tensors; }

TensorTable model_state(ScdNet& model) {
  TensorTable table;
  for (const auto& p : model->named_parameters(true)) table.emplace(p.key(), p.value());
  for (const auto& b : model->named_buffers(true)) table.emplace(b.key(), b.value());
  return table;
}

void save_checkpoint(const fs::path& path, ScdNet& model, int64_t epoch, const json& metrics) {
  const json header{{"format_version", kCheckpointVersion},
                    {"model_config", to_json(model->config())},
                    {"epoch", epoch},
                    {"metrics", metrics}};
  write_checkpoint_file(path, header, model_state(model));
}

void load_checkpoint_into(const fs::path& path, ScdNet& model) {
  const auto ck = read_checkpoint_file(path);
  require(ck.header.contains("model_config"), ErrorKind::ConfigMismatch, path.string() + ": no model_config in header");
  const auto stored = architecture_json(model_config_from_json(ck.header["model_config"]));
  const auto expected = architecture_json(model->config());
  require(stored == expected, ErrorKind::ConfigMismatch,
          path.string() + ": checkpoint model config " + stored.dump() + " does not match " + expected.dump());

  auto state = model_state(model);
  require(state.size() == ck.tensors.size(), ErrorKind::ConfigMismatch,
          path.string() + ": tensor count differs from the model");
  torch::NoGradGuard no_grad;
  for (auto& [name, target] : state) {
    auto it = ck.tensors.find(name);
    require(it != ck.tensors.end(), ErrorKind::ConfigMismatch, path.string() + ": missing tensor '" + name + "'");
    require(it->second.sizes() == target.sizes(), ErrorKind::ConfigMismatch,
            path.string() + ": shape mismatch for '" + name + "'");
    target.copy_(it->second);
  }
}

ScdNet load_checkpoint(const fs::path& path) {
  const auto ck = read_checkpoint_file(path);
  require(ck.header.contains("model_config"), ErrorKind::ConfigMismatch, path.string() + ": no model_config in header");
  auto config = model_config_from_json(ck.header["model_config"]);
  config.encoder.pretrained_path.clear();
  ScdNet model(config);
  load_checkpoint_into(path, model);
  return model;
}

}  // namespace scd
