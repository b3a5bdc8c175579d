#include "scd/datamodel.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "scd/errors.hpp"

namespace fs = std::filesystem;

namespace scd {
namespace {

uint32_t pack(const Rgb& c) { return (uint32_t{c[0]} << 16) | (uint32_t{c[1]} << 8) | uint32_t{c[2]}; }

std::string rgb_string(const Rgb& c) {
  return "(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + ")";
}

void check_hw(const torch::Tensor& t, int64_t h, int64_t w, const std::string& what) {
  require(t.size(-2) == h && t.size(-1) == w, ErrorKind::DimensionMismatch,
          what + " is " + std::to_string(t.size(-2)) + "x" + std::to_string(t.size(-1)) + ", expected " +
              std::to_string(h) + "x" + std::to_string(w));
}

fs::path sample_file(const fs::path& root, const char* dir, const std::string& id) {
  return root / dir / (id + ".png");
}

}  // namespace

// ---------------------------------------------------------------------------
// ClassPalette

ClassPalette::ClassPalette(std::vector<Entry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
  require(!entries_.empty() && entries_.front().index == 0, ErrorKind::InvalidConfig,
          "palette must contain index 0 (no-change)");
  for (size_t i = 0; i < entries_.size(); ++i) {
    require(entries_[i].index == static_cast<int64_t>(i), ErrorKind::InvalidConfig,
            "palette indices must be contiguous from 0; missing index " + std::to_string(i));
    auto [it, inserted] = lookup_.emplace(pack(entries_[i].color), entries_[i].index);
    require(inserted, ErrorKind::InvalidConfig,
            "duplicate palette colour " + rgb_string(entries_[i].color) + " for indices " +
                std::to_string(it->second) + " and " + std::to_string(entries_[i].index));
  }
  require(entries_.size() >= 3, ErrorKind::InvalidConfig, "palette needs no-change plus at least 2 classes");
}

ClassPalette ClassPalette::load(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::MissingFile, path.string());
  std::vector<Entry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string index_text, name, rgb_text;
    const bool ok = std::getline(fields, index_text, '\t') && std::getline(fields, name, '\t') &&
                    std::getline(fields, rgb_text);
    int r = -1, g = -1, b = -1;
    char c1 = 0, c2 = 0;
    std::istringstream rgb(rgb_text);
    rgb >> r >> c1 >> g >> c2 >> b;
    require(ok && !rgb.fail() && c1 == ',' && c2 == ',' && r >= 0 && r <= 255 && g >= 0 && g <= 255 && b >= 0 &&
                b <= 255,
            ErrorKind::InvalidConfig, path.string() + ":" + std::to_string(line_no) + ": expected index<TAB>name<TAB>R,G,B");
    entries.push_back(
        {std::stoll(index_text), name, Rgb{static_cast<uint8_t>(r), static_cast<uint8_t>(g), static_cast<uint8_t>(b)}});
  }
  return ClassPalette(std::move(entries));
}

void ClassPalette::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), ErrorKind::IoError, "cannot write " + path.string());
  for (const auto& e : entries_) {
    out << e.index << '\t' << e.name << '\t' << int{e.color[0]} << ',' << int{e.color[1]} << ',' << int{e.color[2]}
        << '\n';
  }
}

ClassPalette ClassPalette::synthetic(int64_t num_classes) {
  require(num_classes >= 2, ErrorKind::InvalidConfig, "K must be >= 2");
  static const std::vector<std::pair<std::string, Rgb>> known = {
      {"ground", {128, 128, 128}},   {"tree", {0, 128, 0}},       {"low_vegetation", {0, 255, 0}},
      {"water", {0, 0, 255}},        {"building", {128, 0, 0}},   {"playground", {255, 0, 0}},
      {"bare_soil", {255, 255, 0}}, {"road", {255, 0, 255}},
  };
  std::vector<Entry> entries{{0, "no_change", {255, 255, 255}}};
  std::set<uint32_t> used{pack({255, 255, 255})};
  for (int64_t k = 1; k <= num_classes; ++k) {
    if (k <= static_cast<int64_t>(known.size())) {
      entries.push_back({k, known[k - 1].first, known[k - 1].second});
      used.insert(pack(known[k - 1].second));
      continue;
    }
    // Walk a fixed multiplicative sequence until an unused colour appears.
    uint32_t probe = static_cast<uint32_t>(k) * 2654435761u;
    Rgb c;
    do {
      c = {static_cast<uint8_t>(probe >> 16), static_cast<uint8_t>(probe >> 8), static_cast<uint8_t>(probe)};
      probe = probe * 1664525u + 1013904223u;
    } while (used.count(pack(c)));
    used.insert(pack(c));
    entries.push_back({k, "class" + std::to_string(k), c});
  }
  return ClassPalette(std::move(entries));
}

const Rgb& ClassPalette::color_of(int64_t index) const {
  require(index >= 0 && index < size(), ErrorKind::IndexOutOfRange,
          "class index " + std::to_string(index) + " not in palette of size " + std::to_string(size()));
  return entries_[static_cast<size_t>(index)].color;
}

int64_t ClassPalette::index_of(const Rgb& color) const {
  auto it = lookup_.find(pack(color));
  return it == lookup_.end() ? -1 : it->second;
}

bool ClassPalette::operator==(const ClassPalette& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name || entries_[i].color != other.entries_[i].color) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Label codec

torch::Tensor decode_labels(const RgbImage& image, const ClassPalette& palette) {
  auto out = torch::empty({image.height, image.width}, torch::kInt64);
  auto acc = out.accessor<int64_t, 2>();
  for (int64_t y = 0; y < image.height; ++y) {
    for (int64_t x = 0; x < image.width; ++x) {
      const uint8_t* p = image.at(y, x);
      const Rgb c{p[0], p[1], p[2]};
      const int64_t index = palette.index_of(c);
      require(index >= 0, ErrorKind::UnknownColor,
              "pixel (" + std::to_string(y) + "," + std::to_string(x) + ") colour " + rgb_string(c));
      acc[y][x] = index;
    }
  }
  return out;
}

RgbImage encode_labels(const torch::Tensor& index_map, const ClassPalette& palette) {
  require(index_map.dim() == 2, ErrorKind::ShapeMismatch, "index map must be 2-D");
  auto map = index_map.to(torch::kInt64).contiguous();
  auto acc = map.accessor<int64_t, 2>();
  RgbImage image(map.size(0), map.size(1));
  for (int64_t y = 0; y < image.height; ++y) {
    for (int64_t x = 0; x < image.width; ++x) {
      const Rgb& c = palette.color_of(acc[y][x]);
      std::copy(c.begin(), c.end(), image.at(y, x));
    }
  }
  return image;
}

// ---------------------------------------------------------------------------
// Labels and change mask

void validate_labels(const SemanticLabelPair& labels) {
  require(labels.l1.dim() == 2 && labels.l2.dim() == 2, ErrorKind::ShapeMismatch, "label maps must be 2-D");
  check_hw(labels.l2, labels.l1.size(0), labels.l1.size(1), "label2");
  for (const auto* l : {&labels.l1, &labels.l2}) {
    if (l->numel() == 0) continue;
    require(l->min().item<int64_t>() >= 0 && l->max().item<int64_t>() <= labels.num_classes,
            ErrorKind::LabelOutOfRange, "label values must lie in {0.." + std::to_string(labels.num_classes) + "}");
  }
}

ChangeMask derive_change_mask(const SemanticLabelPair& labels) {
  validate_labels(labels);
  auto c1 = labels.l1.ne(kNoChange);
  auto c2 = labels.l2.ne(kNoChange);
  ChangeMask mask;
  mask.m = c1.logical_or(c2);
  mask.malformed_pixels = c1.logical_xor(c2).sum().item<int64_t>();
  return mask;
}

// ---------------------------------------------------------------------------
// Images and samples

torch::Tensor image_to_tensor(const RgbImage& image) {
  auto bytes = torch::from_blob(const_cast<uint8_t*>(image.pixels.data()), {image.height, image.width, 3}, torch::kUInt8);
  return bytes.permute({2, 0, 1}).to(torch::kFloat32).div(255.0f).contiguous();
}

RgbImage tensor_to_image(const torch::Tensor& chw) {
  require(chw.dim() == 3 && chw.size(0) == 3, ErrorKind::ShapeMismatch, "expected a [3,H,W] image tensor");
  auto bytes = chw.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0f).round().to(torch::kUInt8);
  bytes = bytes.permute({1, 2, 0}).contiguous();
  RgbImage image(chw.size(1), chw.size(2));
  std::memcpy(image.pixels.data(), bytes.data_ptr<uint8_t>(), image.pixels.size());
  return image;
}

Sample load_sample(const fs::path& root, const std::string& scene_id, const ClassPalette& palette) {
  const auto im1 = sample_file(root, "im1", scene_id);
  const auto im2 = sample_file(root, "im2", scene_id);
  const auto lb1 = sample_file(root, "label1", scene_id);
  const auto lb2 = sample_file(root, "label2", scene_id);
  for (const auto& p : {im1, im2, lb1, lb2}) require(fs::exists(p), ErrorKind::MissingFile, p.string());

  Sample s;
  s.images.scene_id = scene_id;
  s.images.t1 = image_to_tensor(read_png(im1));
  s.images.t2 = image_to_tensor(read_png(im2));
  const int64_t h = s.images.t1.size(1), w = s.images.t1.size(2);
  require(h >= 32 && w >= 32 && h % 32 == 0 && w % 32 == 0, ErrorKind::DimensionMismatch,
          im1.string() + ": H and W must be >= 32 and divisible by 32, got " + std::to_string(h) + "x" +
              std::to_string(w));
  check_hw(s.images.t2, h, w, im2.string());

  auto read_labels = [&](const fs::path& p) {
    RgbImage img = read_png(p);
    require(img.height == h && img.width == w, ErrorKind::DimensionMismatch,
            p.string() + " is " + std::to_string(img.height) + "x" + std::to_string(img.width) + ", expected " +
                std::to_string(h) + "x" + std::to_string(w));
    try {
      return decode_labels(img, palette);
    } catch (const Error& e) {
      fail(e.kind(), p.string() + ": " + e.what());
    }
  };
  s.labels.l1 = read_labels(lb1);
  s.labels.l2 = read_labels(lb2);
  s.labels.num_classes = palette.num_classes();
  s.mask = derive_change_mask(s.labels);
  return s;
}

void save_sample(const fs::path& root, const Sample& sample, const ClassPalette& palette) {
  const auto& id = sample.images.scene_id;
  write_png(sample_file(root, "im1", id), tensor_to_image(sample.images.t1));
  write_png(sample_file(root, "im2", id), tensor_to_image(sample.images.t2));
  write_png(sample_file(root, "label1", id), encode_labels(sample.labels.l1, palette));
  write_png(sample_file(root, "label2", id), encode_labels(sample.labels.l2, palette));
}

std::vector<std::string> list_scene_ids(const fs::path& root) {
  const auto dir = root / "im1";
  require(fs::is_directory(dir), ErrorKind::MissingFile, dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Splits

DatasetSplit make_split(const std::vector<std::string>& all_ids, double test_fraction, uint64_t seed) {
  require(!all_ids.empty(), ErrorKind::EmptyDataset, "no scene ids to split");
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::InvalidConfig,
          "test_fraction must lie in (0,1), got " + std::to_string(test_fraction));
  std::vector<std::string> ids = all_ids;
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorKind::InvalidConfig, "duplicate scene ids");

  // Tolerance keeps exact products such as 10 * 0.2 from rounding up.
  const auto n_test = static_cast<size_t>(std::ceil(test_fraction * static_cast<double>(ids.size()) - 1e-9));
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  DatasetSplit split;
  split.seed = seed;
  split.test_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  return split;
}

void write_split(const fs::path& dir, const DatasetSplit& split) {
  fs::create_directories(dir);
  for (const auto& [name, ids] : {std::pair{"train.txt", &split.train_ids}, std::pair{"test.txt", &split.test_ids}}) {
    std::ofstream out(dir / name);
    require(out.good(), ErrorKind::IoError, "cannot write " + (dir / name).string());
    for (const auto& id : *ids) out << id << '\n';
  }
}

std::vector<std::string> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::MissingFile, path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  require(!ids.empty(), ErrorKind::EmptyDataset, "split file lists no scenes: " + path.string());
  return ids;
}

// ---------------------------------------------------------------------------
// Augmentation

torch::Tensor apply_dihedral(const torch::Tensor& t, int transform_id) {
  require(transform_id >= 0 && transform_id < kDihedralCount, ErrorKind::OutOfRange,
          "dihedral transform id must be in [0,8)");
  auto out = t;
  const int quarter_turns = transform_id % 4;
  if (quarter_turns != 0) out = torch::rot90(out, quarter_turns, {-2, -1});
  if (transform_id >= 4) out = out.flip({-1});
  return out.contiguous();
}

Sample apply_dihedral(const Sample& sample, int transform_id) {
  Sample out;
  out.images.scene_id = sample.images.scene_id;
  out.images.t1 = apply_dihedral(sample.images.t1, transform_id);
  out.images.t2 = apply_dihedral(sample.images.t2, transform_id);
  out.labels.l1 = apply_dihedral(sample.labels.l1, transform_id);
  out.labels.l2 = apply_dihedral(sample.labels.l2, transform_id);
  out.labels.num_classes = sample.labels.num_classes;
  out.mask = derive_change_mask(out.labels);
  return out;
}

int draw_dihedral(uint64_t seed) {
  std::mt19937_64 rng(seed);
  return static_cast<int>(std::uniform_int_distribution<int>(0, kDihedralCount - 1)(rng));
}

Sample augment(const Sample& sample, uint64_t seed) {
  int id = draw_dihedral(seed);
  // Odd quarter turns would transpose a non-square scene; keep batch shapes stable.
  if (sample.images.height() != sample.images.width() && (id % 4) % 2 == 1) id = (id / 4) * 4 + (id % 4 + 1) % 4;
  return apply_dihedral(sample, id);
}

// ---------------------------------------------------------------------------
// Synthetic generator

void validate(const SynthConfig& c) {
  require(c.n_samples >= 1, ErrorKind::InvalidConfig, "synth.n_samples must be >= 1");
  require(c.height >= 32 && c.width >= 32 && c.height % 32 == 0 && c.width % 32 == 0, ErrorKind::InvalidConfig,
          "synth.height/width must be >= 32 and divisible by 32");
  require(c.num_classes >= 2, ErrorKind::InvalidConfig, "synth.num_classes must be >= 2");
  require(c.shapes_per_scene >= 0, ErrorKind::InvalidConfig, "synth.shapes_per_scene must be >= 0");
  require(c.change_rate >= 0.0 && c.change_rate <= 1.0, ErrorKind::InvalidConfig, "synth.change_rate must lie in [0,1]");
  require(c.test_fraction > 0.0 && c.test_fraction < 1.0, ErrorKind::InvalidConfig,
          "synth.test_fraction must lie in (0,1)");
}

namespace {

struct Shape {
  bool ellipse;
  double cy, cx, ry, rx;
  int64_t cls;
};

using ClassGrid = std::vector<int64_t>;

void paint(ClassGrid& grid, int64_t h, int64_t w, const Shape& s, int64_t cls) {
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(s.cy - s.ry)));
  const int64_t y1 = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(s.cy + s.ry)));
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(s.cx - s.rx)));
  const int64_t x1 = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(s.cx + s.rx)));
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      const double dy = (y + 0.5 - s.cy) / s.ry, dx = (x + 0.5 - s.cx) / s.rx;
      const bool inside = s.ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
      if (inside) grid[static_cast<size_t>(y * w + x)] = cls;
    }
  }
}

double changed_fraction(const ClassGrid& a, const ClassGrid& b) {
  size_t n = 0;
  for (size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return static_cast<double>(n) / static_cast<double>(a.size());
}

std::array<float, 3> appearance(int64_t cls) {
  static const std::vector<std::array<float, 3>> table = {
      {0.58f, 0.47f, 0.36f}, {0.10f, 0.42f, 0.14f}, {0.50f, 0.74f, 0.32f}, {0.12f, 0.24f, 0.62f},
      {0.76f, 0.76f, 0.80f}, {0.82f, 0.30f, 0.28f}, {0.88f, 0.80f, 0.22f}, {0.50f, 0.22f, 0.62f},
  };
  if (cls >= 1 && cls <= static_cast<int64_t>(table.size())) return table[static_cast<size_t>(cls - 1)];
  const double hue = std::fmod(static_cast<double>(cls) * 0.618033988749895, 1.0) * 2.0 * std::numbers::pi;
  return {static_cast<float>(0.5 + 0.35 * std::cos(hue)), static_cast<float>(0.5 + 0.35 * std::cos(hue - 2.094)),
          static_cast<float>(0.5 + 0.35 * std::cos(hue + 2.094))};
}

torch::Tensor render(const ClassGrid& grid, int64_t h, int64_t w, std::mt19937_64& rng, float brightness) {
  auto img = torch::empty({3, h, w}, torch::kFloat32);
  auto acc = img.accessor<float, 3>();
  std::normal_distribution<float> noise(0.0f, 0.02f);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int64_t cls = grid[static_cast<size_t>(y * w + x)];
      const auto base = appearance(cls);
      // Class-specific oriented stripe texture.
      const double freq = 0.35 + 0.17 * static_cast<double>(cls % 5);
      const double angle = 0.7 * static_cast<double>(cls);
      const auto texture =
          static_cast<float>(0.06 * std::sin(freq * (std::cos(angle) * static_cast<double>(x) +
                                                     std::sin(angle) * static_cast<double>(y))));
      for (int c = 0; c < 3; ++c) acc[c][y][x] = base[c] + texture + brightness + noise(rng);
    }
  }
  // Quantise to 8-bit levels so a written-then-loaded sample equals the generated one.
  return image_to_tensor(tensor_to_image(img));
}

torch::Tensor grid_to_tensor(const ClassGrid& grid, int64_t h, int64_t w) {
  return torch::from_blob(const_cast<int64_t*>(grid.data()), {h, w}, torch::kInt64).clone();
}

}  // namespace

Sample synth_scene(const SynthConfig& config, uint64_t seed, int64_t index) {
  validate(config);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                    0x5CDu};
  std::mt19937_64 rng(seq);
  const int64_t h = config.height, w = config.width, k = config.num_classes;
  std::uniform_int_distribution<int64_t> pick_class(1, k);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto random_shape = [&](double max_area) {
    Shape s;
    s.ellipse = unit(rng) < 0.5;
    const double area = std::max(16.0, max_area * (0.3 + 0.7 * unit(rng)));
    const double aspect = 0.5 + unit(rng);
    // Rectangle of half-extents (ry, rx) covers 4*ry*rx; ellipse covers pi*ry*rx.
    const double ry_rx = area / (s.ellipse ? std::numbers::pi : 4.0);
    s.ry = std::clamp(std::sqrt(ry_rx * aspect), 2.0, h / 2.0);
    s.rx = std::clamp(ry_rx / s.ry, 2.0, w / 2.0);
    s.cy = unit(rng) * static_cast<double>(h);
    s.cx = unit(rng) * static_cast<double>(w);
    s.cls = pick_class(rng);
    return s;
  };

  const int64_t background = pick_class(rng);
  ClassGrid before(static_cast<size_t>(h * w), background);
  std::vector<Shape> shapes;
  for (int64_t i = 0; i < config.shapes_per_scene; ++i) {
    shapes.push_back(random_shape(0.06 * static_cast<double>(h * w)));
    paint(before, h, w, shapes.back(), shapes.back().cls);
  }

  ClassGrid after = before;
  if (config.change_rate > 0.0) {
    const double target = config.change_rate;
    double frac = 0.0;
    for (int attempt = 0; attempt < 400 && frac < target - 0.05; ++attempt) {
      const double deficit = (target - frac) * static_cast<double>(h * w);
      ClassGrid candidate = after;
      const double op = unit(rng);
      if (op < 0.5 || shapes.empty()) {
        // Insert a new object.
        Shape s = random_shape(deficit);
        paint(candidate, h, w, s, s.cls);
      } else {
        Shape s = shapes[static_cast<size_t>(rng() % shapes.size())];
        if (op < 0.75) {
          // Re-class an existing object.
          int64_t cls = pick_class(rng);
          if (cls == s.cls) cls = cls % k + 1;
          paint(candidate, h, w, s, cls);
        } else {
          // Remove an object, exposing background.
          paint(candidate, h, w, s, background);
        }
      }
      const double next = changed_fraction(before, candidate);
      if (next <= target + 0.1 && next > frac) {
        after = std::move(candidate);
        frac = next;
      }
    }
  }

  // Labels keep the true class at both dates inside changed regions and 0 elsewhere.
  ClassGrid l1(before.size(), kNoChange), l2(before.size(), kNoChange);
  for (size_t i = 0; i < before.size(); ++i) {
    if (before[i] != after[i]) {
      l1[i] = before[i];
      l2[i] = after[i];
    }
  }

  Sample s;
  char name[32];
  std::snprintf(name, sizeof(name), "%05lld", static_cast<long long>(index));
  s.images.scene_id = name;
  s.images.t1 = render(before, h, w, rng, 0.0f);
  s.images.t2 = render(after, h, w, rng, static_cast<float>((unit(rng) - 0.5) * 0.08));
  s.labels.l1 = grid_to_tensor(l1, h, w);
  s.labels.l2 = grid_to_tensor(l2, h, w);
  s.labels.num_classes = k;
  s.mask = derive_change_mask(s.labels);
  return s;
}

void synth_generate(const SynthConfig& config, uint64_t seed, const fs::path& root) {
  validate(config);
  const auto palette = ClassPalette::synthetic(config.num_classes);
  fs::create_directories(root);
  palette.save(root / "palette.txt");
  std::vector<std::string> ids;
  for (int64_t i = 0; i < config.n_samples; ++i) {
    Sample s = synth_scene(config, seed, i);
    save_sample(root, s, palette);
    ids.push_back(s.images.scene_id);
  }
  // A single scene cannot be partitioned; it is listed in both files.
  write_split(root, ids.size() >= 2 ? make_split(ids, config.test_fraction, seed) : DatasetSplit{ids, ids, seed});
}

}  // namespace scd
