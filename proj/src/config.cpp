#include "lcz/config.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>

namespace lcz {

namespace {

constexpr std::array kKnownKeys = {
    // model
    "f", "n", "fusion", "pooling", "dropout", "loss_mode",
    // training
    "batch_size", "lr0", "lr_halving_period", "patience", "max_epochs", "class_weighting",
    "seed", "workers",
    // datasets and artifacts
    "train_set", "val_set", "test_set", "checkpoint", "checkpoint_out", "history_out",
    "band_stats_out", "metrics_out", "confusion_out", "weights_csv",
    // mapping
    "raster", "step", "gsd_m", "labels_out", "png_out", "palette", "map_batch",
    // synthetic data
    "per_class", "separation", "synth_out", "noise_seed",
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

bool RunConfig::is_known_key(const std::string& key) {
  return std::find(kKnownKeys.begin(), kKnownKeys.end(), key) != kKnownKeys.end();
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key)) throw config_error("unknown configuration key: " + key);
  values_[key] = value;
}

std::string RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw config_error("missing required configuration key: " + key);
  return it->second;
}

std::string RunConfig::get_string_or(const std::string& key,
                                     const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& key, long long fallback, long long min,
                             long long max) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  try {
    std::size_t used = 0;
    v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
  } catch (const std::exception&) {
    throw config_error(key + " must be an integer, got '" + it->second + "'");
  }
  if (v < min || v > max) {
    throw config_error(key + " must lie in [" + std::to_string(min) + "," +
                       std::to_string(max) + "], got " + it->second);
  }
  return v;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw config_error(key + " must be a number, got '" + it->second + "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error(key + " must be a boolean, got '" + v + "'");
}

std::uint64_t RunConfig::get_seed() const {
  const auto it = values_.find("seed");
  if (it == values_.end()) return 0;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw config_error("seed must be an unsigned integer, got '" + it->second + "'");
  }
}

std::string RunConfig::get_input_path(const std::string& key) const {
  const std::string path = get_string(key);
  if (!std::filesystem::exists(path)) {
    throw config_error(key + " points to a missing file: " + path);
  }
  return path;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.f = static_cast<int>(get_int("f", 16, 1, 4096));
  mc.n = static_cast<int>(get_int("n", 4, 1, 64));
  mc.fusion = get_bool("fusion", true);
  const std::string pooling = get_string_or("pooling", "double");
  if (pooling == "double") {
    mc.pooling = PoolingMode::Double;
  } else if (pooling == "max-only") {
    mc.pooling = PoolingMode::MaxOnly;
  } else {
    throw config_error("pooling must be 'double' or 'max-only', got '" + pooling + "'");
  }
  mc.dropout_rate = get_double("dropout", 0.2);
  const std::string lm = get_string_or("loss_mode", "probability-mean");
  if (lm == "probability-mean") {
    mc.loss_mode = LossMode::ProbabilityMean;
  } else if (lm == "per-head-sum") {
    mc.loss_mode = LossMode::PerHeadSum;
  } else {
    throw config_error("loss_mode must be 'probability-mean' or 'per-head-sum', got '" + lm +
                       "'");
  }
  mc.validate();
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.batch_size = static_cast<int>(get_int("batch_size", 32, 1, 1 << 20));
  tc.lr0 = get_double("lr0", 2e-2);
  tc.lr_halving_period = static_cast<int>(get_int("lr_halving_period", 5, 1, 1 << 20));
  tc.patience = static_cast<int>(get_int("patience", 40, 1, 1 << 20));
  tc.max_epochs = static_cast<int>(get_int("max_epochs", 300, 1, 1 << 20));
  tc.class_weighting = get_bool("class_weighting", false);
  tc.seed = get_seed();
  if (!(tc.lr0 > 0.0)) throw config_error("lr0 must be positive");
  return tc;
}

int RunConfig::workers() const {
  return static_cast<int>(get_int("workers", 1, 1, 1024));
}

}  // namespace lcz
