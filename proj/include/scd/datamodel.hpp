#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scd/image_io.hpp"

namespace scd {

// Index of the reserved "no-change" label in every class-index map.
inline constexpr int64_t kNoChange = 0;

// Co-registered bi-temporal RGB pair; t1/t2 are float32 [3, H, W] in [0, 1].
struct ImagePair {
  torch::Tensor t1;
  torch::Tensor t2;
  std::string scene_id;

  int64_t height() const { return t1.size(1); }
  int64_t width() const { return t1.size(2); }
};

// Per-date class-index maps, int64 [H, W] with values in {0..K}; 0 = no-change.
struct SemanticLabelPair {
  torch::Tensor l1;
  torch::Tensor l2;
  int64_t num_classes = 0;
};

// Binary change map, bool [H, W]. Always produced by derive_change_mask.
struct ChangeMask {
  torch::Tensor m;
  // Pixels where exactly one date carries the no-change label (malformed under the SECOND convention).
  int64_t malformed_pixels = 0;
};

struct Sample {
  ImagePair images;
  SemanticLabelPair labels;
  ChangeMask mask;
};

using Rgb = std::array<uint8_t, 3>;

// Bijection class index <-> RGB colour; entry 0 is no-change.
class ClassPalette {
 public:
  struct Entry {
    int64_t index;
    std::string name;
    Rgb color;
  };

  ClassPalette() = default;
  explicit ClassPalette(std::vector<Entry> entries);

  // Text format, one line per class: `index<TAB>name<TAB>R,G,B`.
  static ClassPalette load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Palette used by the synthetic generator: white no-change plus K distinct colours.
  static ClassPalette synthetic(int64_t num_classes);

  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  int64_t num_classes() const { return size() - 1; }
  const std::vector<Entry>& entries() const { return entries_; }
  const Rgb& color_of(int64_t index) const;
  // Returns -1 when the colour is not in the palette.
  int64_t index_of(const Rgb& color) const;

  bool operator==(const ClassPalette& other) const;

 private:
  std::vector<Entry> entries_;
  std::map<uint32_t, int64_t> lookup_;
};

torch::Tensor decode_labels(const RgbImage& rgb_label_image, const ClassPalette& palette);
RgbImage encode_labels(const torch::Tensor& index_map, const ClassPalette& palette);

void validate_labels(const SemanticLabelPair& labels);
ChangeMask derive_change_mask(const SemanticLabelPair& labels);

// [3, H, W] float in [0,1] <-> 8-bit RGB (round to nearest on the way out).
torch::Tensor image_to_tensor(const RgbImage& image);
RgbImage tensor_to_image(const torch::Tensor& chw);

// Reads im1/, im2/, label1/, label2/ <scene_id>.png under root.
Sample load_sample(const std::filesystem::path& root, const std::string& scene_id, const ClassPalette& palette);
void save_sample(const std::filesystem::path& root, const Sample& sample, const ClassPalette& palette);

// Stems of im1/*.png, sorted.
std::vector<std::string> list_scene_ids(const std::filesystem::path& root);

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  uint64_t seed = 0;
};

// |test| = ceil(test_fraction * N); deterministic for a fixed seed.
DatasetSplit make_split(const std::vector<std::string>& all_ids, double test_fraction, uint64_t seed);
void write_split(const std::filesystem::path& dir, const DatasetSplit& split);
std::vector<std::string> read_split_file(const std::filesystem::path& path);

// Dihedral group element: rotation by 90*k degrees (k = id % 4), then a horizontal flip when id >= 4. id 0 is identity.
inline constexpr int kDihedralCount = 8;
torch::Tensor apply_dihedral(const torch::Tensor& t, int transform_id);
Sample apply_dihedral(const Sample& sample, int transform_id);
int draw_dihedral(uint64_t seed);
// Same transform on t1, t2, l1, l2; mask re-derived from the transformed labels.
Sample augment(const Sample& sample, uint64_t seed);

struct SynthConfig {
  int64_t n_samples = 8;
  int64_t height = 64;
  int64_t width = 64;
  int64_t num_classes = 3;
  int64_t shapes_per_scene = 6;
  double change_rate = 0.3;
  double test_fraction = 0.2;
};

void validate(const SynthConfig& config);
// One procedurally generated scene; pure function of (config, seed, index).
Sample synth_scene(const SynthConfig& config, uint64_t seed, int64_t index);
// Writes the load_sample layout, palette.txt and train.txt/test.txt under root.
void synth_generate(const SynthConfig& config, uint64_t seed, const std::filesystem::path& root);

}  // namespace scd
