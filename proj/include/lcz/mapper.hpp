#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lcz/dataio.hpp"
#include "lcz/model.hpp"
#include "lcz/png_io.hpp"

namespace lcz {

// Full scene to classify: ten band planes, band-major storage.
struct SceneRaster {
  int height = 0;
  int width = 0;
  std::vector<float> values;  // kBandCount * height * width

  float at(int band, int y, int x) const {
    return values[(std::size_t(band) * height + y) * width + x];
  }
  void validate() const;
};

void write_raster(const SceneRaster& scene, const std::string& path);
SceneRaster read_raster(const std::string& path);

// Grid of predicted labels. Cell (r,c) is the prediction for the 32x32 window
// with top-left corner (r*step, c*step); the predicted label is assigned to
// the window center, i.e. scene pixel (r*step + origin, c*step + origin).
// 0 marks an unclassified cell.
struct LabelRaster {
  int rows = 0;
  int cols = 0;
  int step = 0;
  int origin = kPatchSize / 2;
  std::vector<std::uint8_t> labels;  // rows * cols

  std::uint8_t at(int r, int c) const { return labels[std::size_t(r) * cols + c]; }
};

// Classifies every grid position of the scene. Windows are standardized with
// `stats` before prediction. Output is independent of batch size and worker
// count; batching and threading only affect throughput.
LabelRaster slide_map(const SceneRaster& scene, Model<float>& model, const BandStats& stats,
                      int step, int batch_size = 256, int workers = 1);

// Text label grid (PGM-style, readable as P2 grayscale); gsd_m documents the
// scene's ground sampling distance in the header comment.
void write_label_grid(const LabelRaster& raster, double gsd_m, const std::string& path);
LabelRaster read_label_grid(const std::string& path);

// Colors for labels 0..17; 0 is the unclassified cell color.
struct Palette {
  std::array<std::array<std::uint8_t, 3>, kClasses + 1> rgb{};
};

Palette default_palette();
Palette read_palette_csv(const std::string& path);
void write_palette_csv(const Palette& palette, const std::string& path);

RgbImage render_labels(const LabelRaster& raster, const Palette& palette);
void render_png(const LabelRaster& raster, const Palette& palette, const std::string& path);

// Inverse palette lookup; requires distinct palette colors and exact matches.
std::vector<std::uint8_t> labels_from_image(const RgbImage& image, const Palette& palette);

}  // namespace lcz
