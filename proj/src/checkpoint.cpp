#include "lcz/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "lcz/binary_io.hpp"

namespace lcz {

namespace {

constexpr char kMagic[4] = {'S', '2', 'L', 'Z'};
constexpr std::uint16_t kVersion = 1;

std::uint32_t dropout_to_micros(double rate) {
  return static_cast<std::uint32_t>(std::lround(rate * 1e6));
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const BandStats& stats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open for writing: " + path);
  bio::put_bytes(os, kMagic, 4);
  bio::put_u16(os, kVersion);
  bio::put_u32(os, static_cast<std::uint32_t>(model.config.f));
  bio::put_u32(os, static_cast<std::uint32_t>(model.config.n));
  bio::put_u8(os, model.config.fusion ? 1 : 0);
  bio::put_u8(os, model.config.pooling == PoolingMode::Double ? 0 : 1);
  bio::put_u32(os, dropout_to_micros(model.config.dropout_rate));
  for (int b = 0; b < kBandCount; ++b) {
    bio::put_f64(os, stats.mean[b]);
    bio::put_f64(os, stats.stddev[b]);
  }
  for (const auto& e : model.registry()) {
    bio::put_u16(os, static_cast<std::uint16_t>(e.name.size()));
    bio::put_bytes(os, e.name.data(), e.name.size());
    bio::put_u32(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d = 0; d < e.tensor.rank(); ++d) {
      bio::put_u32(os, static_cast<std::uint32_t>(e.tensor.dim(d)));
    }
    bio::put_f32_array(os, e.tensor.value());
  }
  if (!os) throw data_error("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open: " + path);
  char magic[4];
  bio::get_bytes(is, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw data_error("not a checkpoint (bad magic): " + path);
  }
  const auto version = bio::get_u16(is, "checkpoint version");
  if (version != kVersion) {
    throw data_error("unsupported checkpoint version " + std::to_string(version));
  }

  LoadedCheckpoint out;
  out.config.f = static_cast<int>(bio::get_u32(is, "config f"));
  out.config.n = static_cast<int>(bio::get_u32(is, "config n"));
  out.config.fusion = bio::get_u8(is, "config fusion") != 0;
  out.config.pooling = bio::get_u8(is, "config pooling") == 0 ? PoolingMode::Double
                                                              : PoolingMode::MaxOnly;
  out.config.dropout_rate = bio::get_u32(is, "config dropout") / 1e6;
  for (int b = 0; b < kBandCount; ++b) {
    out.stats.mean[b] = bio::get_f64(is, "band mean");
    out.stats.stddev[b] = bio::get_f64(is, "band std");
  }
  out.config.validate();

  out.model = build<float>(out.config, nullptr);
  for (const auto& e : out.model.registry()) {
    const auto name_len = bio::get_u16(is, "tensor name length");
    std::string name(name_len, '\0');
    bio::get_bytes(is, name.data(), name_len, "tensor name");
    if (name != e.name) {
      throw data_error("checkpoint tensor order mismatch: expected " + e.name + ", found " +
                       name);
    }
    const auto rank = bio::get_u32(is, "tensor rank");
    if (rank != e.tensor.rank()) {
      throw data_error("checkpoint tensor " + name + " has unexpected rank");
    }
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = bio::get_u32(is, "tensor extent");
      if (extent != e.tensor.dim(d)) {
        throw data_error("checkpoint tensor " + name + " has unexpected shape");
      }
    }
    Tensor<float> t = e.tensor;
    bio::get_f32_array(is, t.mutable_value(), "tensor values");
  }
  return out;
}

}  // namespace lcz
