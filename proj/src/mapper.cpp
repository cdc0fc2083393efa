#include "lcz/mapper.hpp"

#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "lcz/binary_io.hpp"
#include "lcz/training.hpp"

namespace lcz {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'Z', 'R'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void SceneRaster::validate() const {
  if (height < kPatchSize || width < kPatchSize) {
    throw data_error("scene smaller than the 32x32 window: " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (values.size() != std::size_t(kBandCount) * height * width) {
    throw data_error("scene buffer does not match its dimensions");
  }
}

void write_raster(const SceneRaster& scene, const std::string& path) {
  scene.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open for writing: " + path);
  bio::put_bytes(os, kMagic, 4);
  bio::put_u16(os, kVersion);
  bio::put_u32(os, static_cast<std::uint32_t>(scene.height));
  bio::put_u32(os, static_cast<std::uint32_t>(scene.width));
  bio::put_u32(os, kBandCount);
  bio::put_f32_array(os, scene.values);
  if (!os) throw data_error("write failed: " + path);
}

SceneRaster read_raster(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open: " + path);
  char magic[4];
  bio::get_bytes(is, magic, 4, "raster magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw data_error("not a scene raster (bad magic): " + path);
  }
  const auto version = bio::get_u16(is, "raster version");
  if (version != kVersion) {
    throw data_error("unsupported raster version " + std::to_string(version));
  }
  SceneRaster scene;
  scene.height = static_cast<int>(bio::get_u32(is, "raster height"));
  scene.width = static_cast<int>(bio::get_u32(is, "raster width"));
  const auto bands = bio::get_u32(is, "raster band count");
  if (bands != kBandCount) {
    throw data_error("raster must carry 10 bands, found " + std::to_string(bands));
  }
  if (scene.height < 1 || scene.width < 1) throw data_error("raster has empty dimensions");
  scene.values.resize(std::size_t(kBandCount) * scene.height * scene.width);
  bio::get_f32_array(is, scene.values, "raster values");
  scene.validate();
  return scene;
}

namespace {

// Fills one standardized [10,32,32] window with top-left (ty, tx).
void extract_window(const SceneRaster& scene, const BandStats& stats, int ty, int tx,
                    float* out) {
  for (int b = 0; b < kBandCount; ++b) {
    const float mean = static_cast<float>(stats.mean[b]);
    const float inv = static_cast<float>(1.0 / stats.stddev[b]);
    for (int y = 0; y < kPatchSize; ++y) {
      const float* src =
          scene.values.data() + (std::size_t(b) * scene.height + ty + y) * scene.width + tx;
      float* dst = out + (std::size_t(b) * kPatchSize + y) * kPatchSize;
      for (int x = 0; x < kPatchSize; ++x) dst[x] = (src[x] - mean) * inv;
    }
  }
}

void map_cells(const SceneRaster& scene, Model<float>& model, const BandStats& stats,
               LabelRaster& out, std::size_t cell_begin, std::size_t cell_end,
               int batch_size) {
  constexpr std::size_t window = std::size_t(kBandCount) * kPatchSize * kPatchSize;
  for (std::size_t start = cell_begin; start < cell_end;
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(cell_end, start + static_cast<std::size_t>(batch_size));
    const std::size_t B = end - start;
    Tensor<float> x = Tensor<float>::zeros({B, kBandCount, kPatchSize, kPatchSize});
    float* xv = x.mutable_value().data();
    for (std::size_t i = 0; i < B; ++i) {
      const std::size_t cell = start + i;
      const int r = static_cast<int>(cell / out.cols);
      const int c = static_cast<int>(cell % out.cols);
      extract_window(scene, stats, r * out.step, c * out.step, xv + i * window);
    }
    const auto labels = predict(model, x);
    for (std::size_t i = 0; i < B; ++i) {
      out.labels[start + i] = static_cast<std::uint8_t>(labels[i]);
    }
  }
}

}  // namespace

LabelRaster slide_map(const SceneRaster& scene, Model<float>& model, const BandStats& stats,
                      int step, int batch_size, int workers) {
  scene.validate();
  if (step < 1) throw config_error("slide_map: step must be >= 1");
  if (batch_size < 1) throw config_error("slide_map: batch size must be >= 1");
  if (workers < 1) throw config_error("slide_map: workers must be >= 1");
  if (model.config.in_channels != kBandCount || model.config.height != kPatchSize ||
      model.config.width != kPatchSize) {
    throw config_error("slide_map needs a 32x32x10 input model");
  }

  LabelRaster out;
  out.step = step;
  out.rows = (scene.height - kPatchSize) / step + 1;
  out.cols = (scene.width - kPatchSize) / step + 1;
  out.labels.assign(std::size_t(out.rows) * out.cols, 0);

  InferenceGuard<float> guard(model);
  const std::size_t cells = out.labels.size();
  if (workers == 1 || cells < 2) {
    map_cells(scene, model, stats, out, 0, cells, batch_size);
    return out;
  }

  const std::size_t n_workers = std::min<std::size_t>(workers, cells);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t begin = cells * w / n_workers;
    const std::size_t end = cells * (w + 1) / n_workers;
    threads.emplace_back([&, w, begin, end] {
      try {
        map_cells(scene, model, stats, out, begin, end, batch_size);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_label_grid(const LabelRaster& raster, double gsd_m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open for writing: " + path);
  char header[160];
  std::snprintf(header, sizeof(header),
                "P2\n# lcz label grid step=%dpx origin=%dpx gsd=%.6gm output_spacing=%.6gm\n"
                "%d %d\n17\n",
                raster.step, raster.origin, gsd_m, gsd_m * raster.step, raster.cols,
                raster.rows);
  os << header;
  for (int r = 0; r < raster.rows; ++r) {
    for (int c = 0; c < raster.cols; ++c) {
      os << int(raster.at(r, c)) << (c + 1 < raster.cols ? ' ' : '\n');
    }
  }
  if (!os) throw data_error("write failed: " + path);
}

LabelRaster read_label_grid(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "P2") {
    throw data_error("not a label grid (missing P2 header): " + path);
  }
  LabelRaster raster;
  // Header comments carry step/origin metadata.
  std::streampos after_comments = is.tellg();
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') {
      if (line.find("step=") != std::string::npos) {
        std::sscanf(line.c_str(), "# lcz label grid step=%dpx origin=%dpx", &raster.step,
                    &raster.origin);
      }
      after_comments = is.tellg();
      continue;
    }
    break;
  }
  is.seekg(after_comments);
  int maxval = 0;
  if (!(is >> raster.cols >> raster.rows >> maxval) || raster.cols < 1 || raster.rows < 1) {
    throw data_error("malformed label grid header: " + path);
  }
  raster.labels.resize(std::size_t(raster.rows) * raster.cols);
  for (auto& l : raster.labels) {
    int v = -1;
    if (!(is >> v) || v < 0 || v > kClasses) {
      throw data_error("label grid value out of range 0..17: " + path);
    }
    l = static_cast<std::uint8_t>(v);
  }
  return raster;
}

Palette default_palette() {
  // The conventional LCZ legend colors; 0 (unclassified) renders white.
  static constexpr std::uint8_t kColors[kClasses + 1][3] = {
      {255, 255, 255}, {140, 0, 0},     {209, 0, 0},    {255, 0, 0},    {191, 77, 0},
      {255, 102, 0},   {255, 153, 85},  {250, 238, 5},  {188, 188, 188}, {255, 204, 170},
      {85, 85, 85},    {0, 106, 0},     {0, 170, 0},    {100, 133, 37}, {185, 219, 121},
      {0, 0, 0},       {251, 247, 174}, {106, 106, 255}};
  Palette p;
  for (int i = 0; i <= kClasses; ++i) {
    p.rgb[i] = {kColors[i][0], kColors[i][1], kColors[i][2]};
  }
  return p;
}

Palette read_palette_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open: " + path);
  Palette p;
  std::array<bool, kClasses + 1> seen{};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    int label = -1, r = -1, g = -1, b = -1;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d", &label, &r, &g, &b) != 4 || label < 0 ||
        label > kClasses || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
      throw data_error("malformed palette row: " + line);
    }
    p.rgb[label] = {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)};
    seen[label] = true;
  }
  for (int i = 0; i <= kClasses; ++i) {
    if (!seen[i]) throw data_error("palette is missing an entry for label " + std::to_string(i));
  }
  return p;
}

void write_palette_csv(const Palette& palette, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open for writing: " + path);
  for (int i = 0; i <= kClasses; ++i) {
    os << i << ',' << int(palette.rgb[i][0]) << ',' << int(palette.rgb[i][1]) << ','
       << int(palette.rgb[i][2]) << '\n';
  }
}

RgbImage render_labels(const LabelRaster& raster, const Palette& palette) {
  RgbImage image;
  image.width = raster.cols;
  image.height = raster.rows;
  image.pixels.resize(std::size_t(raster.rows) * raster.cols * 3);
  for (std::size_t i = 0; i < raster.labels.size(); ++i) {
    const auto& c = palette.rgb[raster.labels[i]];
    image.pixels[i * 3 + 0] = c[0];
    image.pixels[i * 3 + 1] = c[1];
    image.pixels[i * 3 + 2] = c[2];
  }
  return image;
}

void render_png(const LabelRaster& raster, const Palette& palette, const std::string& path) {
  write_png_rgb8(path, render_labels(raster, palette));
}

std::vector<std::uint8_t> labels_from_image(const RgbImage& image, const Palette& palette) {
  std::vector<std::uint8_t> labels(std::size_t(image.width) * image.height);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint8_t r = image.pixels[i * 3], g = image.pixels[i * 3 + 1],
                       b = image.pixels[i * 3 + 2];
    int found = -1;
    for (int l = 0; l <= kClasses; ++l) {
      if (palette.rgb[l][0] == r && palette.rgb[l][1] == g && palette.rgb[l][2] == b) {
        found = l;
        break;
      }
    }
    if (found < 0) throw data_error("image color not present in the palette");
    labels[i] = static_cast<std::uint8_t>(found);
  }
  return labels;
}

}  // namespace lcz
