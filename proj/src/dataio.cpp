#include "lcz/dataio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lcz/binary_io.hpp"

namespace lcz {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'Z', 'P'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void PatchDataset::validate() const {
  if (labels.empty()) throw data_error("dataset is empty");
  if (values.size() != labels.size() * std::size_t(kPatchValues)) {
    throw data_error("dataset value buffer does not match label count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > kClasses) {
      throw data_error("label out of range 1..17 at record " + std::to_string(i));
    }
  }
}

void write_container(const PatchDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open for writing: " + path);
  bio::put_bytes(os, kMagic, 4);
  bio::put_u16(os, kVersion);
  bio::put_u32(os, static_cast<std::uint32_t>(ds.count()));
  bio::put_u32(os, kPatchSize);
  bio::put_u32(os, kPatchSize);
  bio::put_u32(os, kBandCount);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    bio::put_f32_array(os, ds.patch(i));
    bio::put_u8(os, ds.labels[i]);
  }
  if (!os) throw data_error("write failed: " + path);
}

PatchDataset read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open: " + path);
  char magic[4];
  bio::get_bytes(is, magic, 4, "container magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw data_error("not a patch container (bad magic): " + path);
  }
  const auto version = bio::get_u16(is, "container version");
  if (version != kVersion) {
    throw data_error("unsupported container version " + std::to_string(version));
  }
  const auto count = bio::get_u32(is, "patch count");
  const auto h = bio::get_u32(is, "patch height");
  const auto w = bio::get_u32(is, "patch width");
  const auto c = bio::get_u32(is, "band count");
  if (h != kPatchSize || w != kPatchSize || c != kBandCount) {
    throw data_error("container geometry must be 32x32x10, got " + std::to_string(h) + "x" +
                     std::to_string(w) + "x" + std::to_string(c));
  }
  if (count == 0) throw data_error("container holds no patches: " + path);

  PatchDataset ds;
  ds.values.resize(std::size_t(count) * kPatchValues);
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    bio::get_f32_array(is, ds.patch(i), "patch values");
    const auto label = bio::get_u8(is, "patch label");
    if (label < 1 || label > kClasses) {
      throw data_error("label out of range 1..17 at record " + std::to_string(i));
    }
    ds.labels[i] = label;
  }
  return ds;
}

std::array<std::int64_t, kClasses> class_distribution(const PatchDataset& ds) {
  std::array<std::int64_t, kClasses> counts{};
  for (auto l : ds.labels) counts[l - 1] += 1;
  return counts;
}

BandStats fit_band_stats(const PatchDataset& train) {
  train.validate();
  BandStats stats;
  const std::size_t pixels = train.count() * std::size_t(kPatchSize) * kPatchSize;
  std::array<double, kBandCount> sum{}, sumsq{};
  for (std::size_t i = 0; i < train.values.size(); i += kBandCount) {
    for (int b = 0; b < kBandCount; ++b) {
      const double v = train.values[i + b];
      sum[b] += v;
      sumsq[b] += v * v;
    }
  }
  for (int b = 0; b < kBandCount; ++b) {
    const double mean = sum[b] / static_cast<double>(pixels);
    const double var = sumsq[b] / static_cast<double>(pixels) - mean * mean;
    stats.mean[b] = mean;
    stats.stddev[b] = std::sqrt(std::max(var, 0.0));
    if (!(stats.stddev[b] > 0.0)) {
      throw data_error(std::string("band ") + kBands[b].name +
                       " has zero variance in the training split");
    }
  }
  return stats;
}

PatchDataset standardize(const PatchDataset& ds, const BandStats& stats) {
  PatchDataset out = ds;
  for (std::size_t i = 0; i < out.values.size(); i += kBandCount) {
    for (int b = 0; b < kBandCount; ++b) {
      out.values[i + b] = static_cast<float>(
          (static_cast<double>(out.values[i + b]) - stats.mean[b]) / stats.stddev[b]);
    }
  }
  return out;
}

void write_band_stats_csv(const BandStats& stats, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open for writing: " + path);
  os << "band,mean,std\n";
  char line[128];
  for (int b = 0; b < kBandCount; ++b) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g\n", kBands[b].name, stats.mean[b],
                  stats.stddev[b]);
    os << line;
  }
}

BandStats read_band_stats_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("band,mean,std", 0) != 0) {
    throw data_error("band stats CSV must start with header 'band,mean,std': " + path);
  }
  BandStats stats;
  for (int b = 0; b < kBandCount; ++b) {
    if (!std::getline(is, line)) throw data_error("band stats CSV truncated: " + path);
    std::istringstream ss(line);
    std::string name, mean_s, std_s;
    if (!std::getline(ss, name, ',') || !std::getline(ss, mean_s, ',') ||
        !std::getline(ss, std_s)) {
      throw data_error("malformed band stats row: " + line);
    }
    if (name != kBands[b].name) {
      throw data_error("band stats row " + std::to_string(b) + " should be " +
                       kBands[b].name + ", got " + name);
    }
    stats.mean[b] = std::stod(mean_s);
    stats.stddev[b] = std::stod(std_s);
    if (!(stats.stddev[b] > 0.0)) throw data_error("band std must be positive: " + line);
  }
  return stats;
}

PatchDataset synth_generate(std::uint64_t seed, int per_class, double separation) {
  return synth_generate(seed, per_class, separation, seed);
}

PatchDataset synth_generate(std::uint64_t seed, int per_class, double separation,
                            std::uint64_t noise_seed) {
  if (per_class < 1) throw config_error("synth: per_class must be >= 1");
  if (separation < 0.0) throw config_error("synth: separation must be >= 0");

  Rng mean_rng(seed);
  Rng rng(mix_seed(noise_seed, 0x5EED));

  // Per-class band-mean vectors: random directions scaled to norm `separation`.
  std::array<std::array<double, kBandCount>, kClasses> mu{};
  for (int k = 0; k < kClasses; ++k) {
    double norm2 = 0.0;
    for (int b = 0; b < kBandCount; ++b) {
      mu[k][b] = mean_rng.normal();
      norm2 += mu[k][b] * mu[k][b];
    }
    const double scale = separation / std::sqrt(std::max(norm2, 1e-300));
    for (int b = 0; b < kBandCount; ++b) mu[k][b] *= scale;
  }

  // Smooth spatial envelope shared by all classes; its mean over the patch is
  // close to 1 so band means stay near mu.
  std::array<double, kPatchSize * kPatchSize> envelope{};
  for (int y = 0; y < kPatchSize; ++y) {
    for (int x = 0; x < kPatchSize; ++x) {
      envelope[y * kPatchSize + x] =
          1.0 + 0.25 * std::cos(2.0 * std::numbers::pi * y / kPatchSize) *
                    std::cos(2.0 * std::numbers::pi * x / kPatchSize);
    }
  }

  PatchDataset ds;
  ds.values.resize(std::size_t(kClasses) * per_class * kPatchValues);
  ds.labels.resize(std::size_t(kClasses) * per_class);
  std::size_t idx = 0;
  for (int k = 0; k < kClasses; ++k) {
    for (int p = 0; p < per_class; ++p, ++idx) {
      ds.labels[idx] = static_cast<std::uint8_t>(k + 1);
      float* patch = ds.values.data() + idx * kPatchValues;
      for (int y = 0; y < kPatchSize; ++y) {
        for (int x = 0; x < kPatchSize; ++x) {
          const double env = envelope[y * kPatchSize + x];
          for (int b = 0; b < kBandCount; ++b) {
            patch[(std::size_t(y) * kPatchSize + x) * kBandCount + b] =
                static_cast<float>(mu[k][b] * env + rng.normal());
          }
        }
      }
    }
  }
  return ds;
}

}  // namespace lcz
