#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "lcz/dataio.hpp"
#include "lcz/errors.hpp"

namespace lcz {

// 17x17 counts, rows indexed by true class, columns by predicted class
// (both 1..17, stored 0-based).
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kClasses>, kClasses> counts{};

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : counts)
      for (auto v : row) t += v;
    return t;
  }
};

// Misclassification weights: diagonal exactly 1, off-diagonals in [0,1].
struct WeightMatrix {
  std::array<std::array<double, kClasses>, kClasses> w{};

  void validate() const;
  static WeightMatrix identity();
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted);

// Overall accuracy: trace / total.
double oa(const ConfusionMatrix& cm);
// Average accuracy: mean per-class recall over classes that appear.
double aa(const ConfusionMatrix& cm);
// Chance-corrected agreement; throws verify-style when expected agreement is 1.
double kappa(const ConfusionMatrix& cm);
// Weighted accuracy: sum of w[i][j] * counts[i][j] over total.
double wa(const ConfusionMatrix& cm, const WeightMatrix& weights);
// Group-membership accuracy of built classes (true 1..10 predicted in 1..10).
double oa_built(const ConfusionMatrix& cm);
// Group-membership accuracy of natural classes (true 11..17 predicted in 11..17).
double oa_nonbuilt(const ConfusionMatrix& cm);

// Each row divided by its sum; zero rows stay zero.
std::array<std::array<double, kClasses>, kClasses> normalize_rows(const ConfusionMatrix& cm);

struct MetricsReport {
  double kappa, aa, wa, oa, oa_b, oa_nb;
};

MetricsReport compute_metrics(const ConfusionMatrix& cm, const WeightMatrix& weights);

WeightMatrix read_weight_matrix_csv(const std::string& path);
void write_metrics_csv(const MetricsReport& report, const std::string& path);
void write_confusion_csv(const std::array<std::array<double, kClasses>, kClasses>& rows,
                         const std::string& path);

}  // namespace lcz
