#pragma once

// Image/label file IO (binary PPM P6 / PGM P5) and the synthetic street-like
// scene generator used for desk-scale experiments.
//
// Dataset layout:
//   <dir>/manifest.json
//   <dir>/train/img_00000.ppm, <dir>/train/lbl_00000.pgm, ...
//   <dir>/val/img_00000.ppm,   <dir>/val/lbl_00000.pgm,   ...
// Label value 255 is void. See docs/dataset.md for the manifest schema.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "frrn/sample.hpp"

namespace frrn {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}
  std::uint8_t* px(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* px(int y, int x) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool operator==(const RgbImage&) const = default;
};

namespace detail {

inline int read_header_int(std::istream& is, const std::string& path) {
  int c = is.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      is.get();
    } else if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      break;
    }
    c = is.peek();
  }
  int v = -1;
  if (!(is >> v) || v < 0) throw IoError("malformed PNM header in '" + path + "'");
  return v;
}

/// Returns the raw raster; `channels` is 1 for P5 and 3 for P6.
inline std::vector<std::uint8_t> read_pnm(const std::string& path, int& height, int& width, int channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[2] = {0, 0};
  is.read(magic, 2);
  const char want = channels == 1 ? '5' : '6';
  if (!is || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError("unknown image format in '" + path + "' (expected binary PGM/PPM)");
  }
  if (magic[1] != want) {
    throw IoError("'" + path + "' is " + (magic[1] == '5' ? "PGM" : "PPM") + ", expected " +
                  (channels == 1 ? "PGM" : "PPM"));
  }
  width = read_header_int(is, path);
  height = read_header_int(is, path);
  const int maxval = read_header_int(is, path);
  if (maxval != 255) throw IoError("'" + path + "': only 8-bit (maxval 255) images are supported");
  if (width < 1 || height < 1) throw IoError("'" + path + "': empty image");
  is.get();  // single whitespace before raster
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * channels);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!is) throw IoError("'" + path + "': truncated raster");
  return data;
}

inline void write_pnm(const std::string& path, const std::uint8_t* data, int height, int width, int channels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(height) * width * channels);
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

inline RgbImage load_ppm(const std::string& path) {
  RgbImage img;
  img.rgb = detail::read_pnm(path, img.height, img.width, 3);
  return img;
}

inline void save_ppm(const RgbImage& img, const std::string& path) {
  detail::write_pnm(path, img.rgb.data(), img.height, img.width, 3);
}

inline LabelMap load_label(const std::string& path) {
  LabelMap m;
  m.values = detail::read_pnm(path, m.height, m.width, 1);
  return m;
}

inline void save_label(const LabelMap& map, const std::string& path) {
  detail::write_pnm(path, map.values.data(), map.height, map.width, 1);
}

template <typename T>
Tensor<T> image_to_tensor(const RgbImage& img) {
  Tensor<T> t(Shape{1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<T>(img.px(y, x)[c] / 255.0);
    }
  }
  return t;
}

template <typename T>
SegmentationSample<T> load_sample(const std::string& image_path, const std::string& label_path) {
  const RgbImage img = load_ppm(image_path);
  LabelMap labels = load_label(label_path);
  if (img.height != labels.height || img.width != labels.width) {
    throw ShapeError("image '" + image_path + "' is " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " but label '" + label_path + "' is " +
                     std::to_string(labels.width) + "x" + std::to_string(labels.height));
  }
  return {image_to_tensor<T>(img), std::move(labels)};
}

// ---------------------------------------------------------------- synthetic

enum class ShapeKind { Rect, Ellipse, Triangle, Diamond };

/// One filled shape inside the half-open box [x0, x1) x [y0, y1).
struct SceneObject {
  ShapeKind kind = ShapeKind::Rect;
  int class_id = 2;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::array<std::uint8_t, 3> color{};
};

/// Rows above `horizon` are class 0, rows from `horizon` on are class 1;
/// the last `void_rows` rows are void. Objects are painted in order.
struct Scene {
  int width = 0;
  int height = 0;
  int horizon = 0;
  int void_rows = 0;
  std::vector<SceneObject> objects;
};

struct SyntheticSceneConfig {
  int width = 128;
  int height = 64;
  int num_classes = 6;
  int min_shapes = 2;
  int max_shapes = 5;
  double noise_stddev = 0.04;  // in [0, 1] intensity units
  std::uint64_t seed = 7;
};

inline const std::vector<std::array<std::uint8_t, 3>>& class_palette() {
  static const std::vector<std::array<std::uint8_t, 3>> p{
      {70, 130, 180}, {128, 64, 128}, {220, 20, 60},  {0, 0, 142},
      {220, 220, 0},  {107, 142, 35}, {250, 170, 30}, {190, 153, 153}};
  return p;
}

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> n{"sky", "road", "box", "disc", "cone", "pole", "sign", "car"};
  return n;
}

inline ShapeKind shape_for_class(int class_id) {
  switch (class_id) {
    case 3: return ShapeKind::Ellipse;
    case 4: return ShapeKind::Triangle;
    case 6: return ShapeKind::Diamond;
    default: return ShapeKind::Rect;
  }
}

inline bool shape_contains(const SceneObject& o, int x, int y) {
  if (x < o.x0 || x >= o.x1 || y < o.y0 || y >= o.y1) return false;
  const double px = x + 0.5, py = y + 0.5;
  const double cx = 0.5 * (o.x0 + o.x1), cy = 0.5 * (o.y0 + o.y1);
  const double hw = 0.5 * (o.x1 - o.x0), hh = 0.5 * (o.y1 - o.y0);
  switch (o.kind) {
    case ShapeKind::Rect:
      return true;
    case ShapeKind::Ellipse: {
      const double u = (px - cx) / hw, v = (py - cy) / hh;
      return u * u + v * v <= 1.0;
    }
    case ShapeKind::Triangle: {
      // apex at top centre, base along the bottom edge
      const double t = (py - o.y0) / (o.y1 - o.y0);
      return std::abs(px - cx) <= t * hw;
    }
    case ShapeKind::Diamond:
      return std::abs(px - cx) / hw + std::abs(py - cy) / hh <= 1.0;
  }
  return false;
}

/// Noise-free rendering and its pixel-aligned label map.
inline std::pair<RgbImage, LabelMap> render_scene(const Scene& scene) {
  RgbImage img(scene.height, scene.width);
  LabelMap labels(scene.height, scene.width, 0);
  const auto& pal = class_palette();
  for (int y = 0; y < scene.height; ++y) {
    const bool void_row = y >= scene.height - scene.void_rows;
    const int cls = y < scene.horizon ? 0 : 1;
    for (int x = 0; x < scene.width; ++x) {
      std::uint8_t* p = img.px(y, x);
      if (void_row) {
        p[0] = p[1] = p[2] = 20;
        labels.at(y, x) = kVoidLabel;
      } else {
        std::copy(pal[cls].begin(), pal[cls].end(), p);
        labels.at(y, x) = static_cast<std::uint8_t>(cls);
      }
    }
  }
  for (const auto& o : scene.objects) {
    for (int y = std::max(0, o.y0); y < std::min(scene.height - scene.void_rows, o.y1); ++y) {
      for (int x = std::max(0, o.x0); x < std::min(scene.width, o.x1); ++x) {
        if (!shape_contains(o, x, y)) continue;
        std::copy(o.color.begin(), o.color.end(), img.px(y, x));
        labels.at(y, x) = static_cast<std::uint8_t>(o.class_id);
      }
    }
  }
  return {std::move(img), std::move(labels)};
}

/// Random scene; `forced_class` (>= 2) is guaranteed to appear as the first object.
inline Scene random_scene(const SyntheticSceneConfig& cfg, std::mt19937_64& rng, int forced_class) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Scene s;
  s.width = cfg.width;
  s.height = cfg.height;
  s.horizon = uni(cfg.height * 35 / 100, cfg.height * 60 / 100);
  s.void_rows = uni(0, 9) < 3 ? uni(2, std::max(2, cfg.height / 12)) : 0;
  if (cfg.num_classes <= 2) return s;
  const int count = uni(cfg.min_shapes, cfg.max_shapes);
  const auto& pal = class_palette();
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.class_id = i == 0 ? forced_class : uni(2, cfg.num_classes - 1);
    o.kind = shape_for_class(o.class_id);
    int w, h;
    if (o.class_id == 5) {  // thin vertical bar
      w = uni(2, std::max(2, cfg.width / 40));
      h = uni(cfg.height / 3, cfg.height / 2);
    } else if (o.class_id == 7) {  // wide box
      w = uni(cfg.width / 6, cfg.width / 3);
      h = uni(cfg.height / 8, cfg.height / 5);
    } else {
      w = uni(cfg.width / 10, cfg.width / 4);
      h = uni(cfg.height / 6, cfg.height / 3);
    }
    o.x0 = uni(0, cfg.width - w);
    o.y0 = uni(0, cfg.height - h);
    o.x1 = o.x0 + w;
    o.y1 = o.y0 + h;
    for (int c = 0; c < 3; ++c) {
      o.color[c] = static_cast<std::uint8_t>(std::clamp(pal[o.class_id][c] + uni(-15, 15), 0, 255));
    }
    s.objects.push_back(o);
  }
  return s;
}

/// Adds Gaussian pixel noise (images only; labels are never touched).
inline void add_noise(RgbImage& img, double stddev, std::mt19937_64& rng) {
  if (stddev <= 0) return;
  std::normal_distribution<double> noise(0.0, stddev * 255.0);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(std::clamp(std::lround(v + noise(rng)), 0L, 255L));
}

struct ManifestEntry {
  std::string image;
  std::string label;
};

struct Manifest {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;

  const std::vector<ManifestEntry>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    throw ConfigError("unknown split '" + name + "' (expected train or val)");
  }
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["format"] = "frrn-synthetic-v1";
  j["width"] = m.width;
  j["height"] = m.height;
  j["num_classes"] = m.num_classes;
  j["void_label"] = kVoidLabel;
  j["seed"] = m.seed;
  j["class_names"] = std::vector<std::string>(class_names().begin(), class_names().begin() + m.num_classes);
  nlohmann::json pal = nlohmann::json::array();
  for (int c = 0; c < m.num_classes; ++c) {
    const auto& p = class_palette()[c];
    pal.push_back({p[0], p[1], p[2]});
  }
  j["palette"] = pal;
  for (const char* split : {"train", "val"}) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : m.split(split)) arr.push_back({{"image", e.image}, {"label", e.label}});
    j[split] = arr;
  }
  return j;
}

inline Manifest read_manifest(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.json").string();
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
    Manifest m;
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
    for (const char* split : {"train", "val"}) {
      auto& dst = std::string(split) == "train" ? m.train : m.val;
      for (const auto& e : j.at(split)) dst.push_back({e.at("image").get<std::string>(), e.at("label").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid manifest '" + path + "': " + e.what());
  }
}

inline Manifest generate_dataset(const SyntheticSceneConfig& cfg, int n_train, int n_val,
                                 const std::string& out_dir) {
  if (cfg.num_classes < 2 || cfg.num_classes > 8) throw ConfigError("synthetic datasets support 2..8 classes");
  if (cfg.width < 8 || cfg.height < 8) throw ConfigError("synthetic images must be at least 8x8");
  if (n_train < 0 || n_val < 0) throw ConfigError("split sizes must be non-negative");
  namespace fs = std::filesystem;
  Manifest m{cfg.width, cfg.height, cfg.num_classes, cfg.seed, {}, {}};
  try {
    fs::create_directories(fs::path(out_dir) / "train");
    fs::create_directories(fs::path(out_dir) / "val");
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create dataset directory '" + out_dir + "': " + e.what());
  }
  const int objects = std::max(1, cfg.num_classes - 2);
  for (int i = 0; i < n_train + n_val; ++i) {
    const bool train = i < n_train;
    const int local = train ? i : i - n_train;
    std::mt19937_64 rng(cfg.seed ^ static_cast<std::uint64_t>(i));
    const Scene scene = random_scene(cfg, rng, 2 + local % objects);
    auto [img, labels] = render_scene(scene);
    add_noise(img, cfg.noise_stddev, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "%05d", local);
    const std::string split = train ? "train" : "val";
    ManifestEntry e{split + "/img_" + name + ".ppm", split + "/lbl_" + name + ".pgm"};
    save_ppm(img, (fs::path(out_dir) / e.image).string());
    save_label(labels, (fs::path(out_dir) / e.label).string());
    (train ? m.train : m.val).push_back(e);
  }
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  if (!os) throw IoError("cannot write manifest in '" + out_dir + "'");
  os << manifest_to_json(m).dump(2) << "\n";
  return m;
}

template <typename T>
std::vector<SegmentationSample<T>> load_split(const std::string& dir, const Manifest& m,
                                              const std::string& split) {
  std::vector<SegmentationSample<T>> out;
  for (const auto& e : m.split(split)) {
    out.push_back(load_sample<T>((std::filesystem::path(dir) / e.image).string(),
                                 (std::filesystem::path(dir) / e.label).string()));
  }
  return out;
}

}  // namespace frrn
