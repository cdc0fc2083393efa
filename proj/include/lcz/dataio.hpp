#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lcz/errors.hpp"
#include "lcz/rng.hpp"

namespace lcz {

inline constexpr int kClasses = 17;
inline constexpr int kPatchSize = 32;
inline constexpr int kBandCount = 10;
inline constexpr int kPatchValues = kPatchSize * kPatchSize * kBandCount;

// The ten Sentinel-2 bands carried by every patch, in storage order.
struct BandInfo {
  const char* name;
  int central_wavelength_nm;
  int native_resolution_m;  // 20 m bands arrive upsampled to 10 m
};

inline constexpr std::array<BandInfo, kBandCount> kBands = {{
    {"B2", 490, 10},
    {"B3", 560, 10},
    {"B4", 665, 10},
    {"B5", 705, 20},
    {"B6", 740, 20},
    {"B7", 783, 20},
    {"B8", 842, 10},
    {"B8a", 865, 20},
    {"B11", 1610, 20},
    {"B12", 2190, 20},
}};

// Labeled 32x32x10 patches. Values are stored per patch in H,W,C row-major
// order (the container's wire order); labels are 1..17.
struct PatchDataset {
  std::vector<float> values;         // count * kPatchValues
  std::vector<std::uint8_t> labels;  // count entries

  std::size_t count() const { return labels.size(); }

  std::span<const float> patch(std::size_t i) const {
    return {values.data() + i * kPatchValues, kPatchValues};
  }
  std::span<float> patch(std::size_t i) {
    return {values.data() + i * kPatchValues, kPatchValues};
  }

  // Value at (row, col, band) of patch i.
  float at(std::size_t i, int y, int x, int b) const {
    return values[i * kPatchValues + (std::size_t(y) * kPatchSize + x) * kBandCount + b];
  }

  void validate() const;
};

// Per-band normalization statistics, fitted on the training split only and
// carried inside checkpoints so inference reproduces training preprocessing.
struct BandStats {
  std::array<double, kBandCount> mean{};
  std::array<double, kBandCount> stddev{};
};

void write_container(const PatchDataset& ds, const std::string& path);
PatchDataset read_container(const std::string& path);

std::array<std::int64_t, kClasses> class_distribution(const PatchDataset& ds);

BandStats fit_band_stats(const PatchDataset& train);
PatchDataset standardize(const PatchDataset& ds, const BandStats& stats);

void write_band_stats_csv(const BandStats& stats, const std::string& path);
BandStats read_band_stats_csv(const std::string& path);

// Seeded synthetic dataset: class k gets a fixed band-mean vector of norm
// `separation`, modulated by a smooth spatial envelope, plus unit Gaussian
// noise. per_class patches per class, grouped by class, deterministic in the
// seeds. `seed` fixes the class means (the distribution identity); setting a
// different `noise_seed` draws an independent sample of the same distribution,
// which is how disjoint train/val/test splits are produced.
PatchDataset synth_generate(std::uint64_t seed, int per_class, double separation,
                            std::uint64_t noise_seed);
PatchDataset synth_generate(std::uint64_t seed, int per_class, double separation);

}  // namespace lcz
