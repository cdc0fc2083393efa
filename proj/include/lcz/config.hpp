#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lcz/model.hpp"
#include "lcz/training.hpp"

namespace lcz {

// Flat key = value run configuration ('#' starts a comment). Values arrive
// from an optional config file plus command-line overrides; unknown keys are
// rejected up front.
class RunConfig {
 public:
  static bool is_known_key(const std::string& key);

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback, long long min,
                    long long max) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_seed() const;

  // Path that must already exist; missing files fail before any compute.
  std::string get_input_path(const std::string& key) const;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  int workers() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lcz
