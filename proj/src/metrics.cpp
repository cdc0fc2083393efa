#include "lcz/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lcz {

void WeightMatrix::validate() const {
  for (int i = 0; i < kClasses; ++i) {
    if (w[i][i] != 1.0) {
      throw data_error("weight matrix diagonal must be exactly 1 (row " + std::to_string(i + 1) +
                       ")");
    }
    for (int j = 0; j < kClasses; ++j) {
      if (!(w[i][j] >= 0.0 && w[i][j] <= 1.0)) {
        throw data_error("weight matrix entries must lie in [0,1]");
      }
    }
  }
}

WeightMatrix WeightMatrix::identity() {
  WeightMatrix m;
  for (int i = 0; i < kClasses; ++i) m.w[i][i] = 1.0;
  return m;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw data_error("confusion: label sequences differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 1 || t > kClasses || p < 1 || p > kClasses) {
      throw data_error("confusion: label out of range 1..17 at position " + std::to_string(i));
    }
    cm.counts[t - 1][p - 1] += 1;
  }
  return cm;
}

namespace {

std::int64_t require_total(const ConfusionMatrix& cm) {
  const std::int64_t t = cm.total();
  if (t == 0) throw data_error("metrics over an empty confusion matrix");
  return t;
}

}  // namespace

double oa(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(require_total(cm));
  std::int64_t trace = 0;
  for (int i = 0; i < kClasses; ++i) trace += cm.counts[i][i];
  return static_cast<double>(trace) / total;
}

double aa(const ConfusionMatrix& cm) {
  require_total(cm);
  double acc = 0.0;
  int present = 0;
  for (int i = 0; i < kClasses; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < kClasses; ++j) row += cm.counts[i][j];
    if (row == 0) continue;  // absent classes do not enter the mean
    acc += static_cast<double>(cm.counts[i][i]) / static_cast<double>(row);
    ++present;
  }
  return acc / static_cast<double>(present);
}

double kappa(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(require_total(cm));
  double po = 0.0, pe = 0.0;
  for (int i = 0; i < kClasses; ++i) {
    po += static_cast<double>(cm.counts[i][i]);
    double row = 0.0, col = 0.0;
    for (int j = 0; j < kClasses; ++j) {
      row += static_cast<double>(cm.counts[i][j]);
      col += static_cast<double>(cm.counts[j][i]);
    }
    pe += row * col;
  }
  po /= total;
  pe /= total * total;
  if (pe >= 1.0) {
    throw data_error("kappa undefined: expected agreement equals 1");
  }
  return (po - pe) / (1.0 - pe);
}

double wa(const ConfusionMatrix& cm, const WeightMatrix& weights) {
  weights.validate();
  const double total = static_cast<double>(require_total(cm));
  double acc = 0.0;
  for (int i = 0; i < kClasses; ++i) {
    for (int j = 0; j < kClasses; ++j) {
      acc += weights.w[i][j] * static_cast<double>(cm.counts[i][j]);
    }
  }
  return acc / total;
}

namespace {

// Accuracy of predicting group membership for samples whose true class lies
// in [lo, hi] (1-based, inclusive).
double group_accuracy(const ConfusionMatrix& cm, int lo, int hi) {
  std::int64_t in_group = 0, kept = 0;
  for (int i = lo - 1; i < hi; ++i) {
    for (int j = 0; j < kClasses; ++j) {
      in_group += cm.counts[i][j];
      if (j >= lo - 1 && j < hi) kept += cm.counts[i][j];
    }
  }
  if (in_group == 0) {
    throw data_error("no samples with true class in " + std::to_string(lo) + ".." +
                     std::to_string(hi));
  }
  return static_cast<double>(kept) / static_cast<double>(in_group);
}

}  // namespace

double oa_built(const ConfusionMatrix& cm) { return group_accuracy(cm, 1, 10); }
double oa_nonbuilt(const ConfusionMatrix& cm) { return group_accuracy(cm, 11, kClasses); }

std::array<std::array<double, kClasses>, kClasses> normalize_rows(const ConfusionMatrix& cm) {
  std::array<std::array<double, kClasses>, kClasses> out{};
  for (int i = 0; i < kClasses; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < kClasses; ++j) row += cm.counts[i][j];
    if (row == 0) continue;
    for (int j = 0; j < kClasses; ++j) {
      out[i][j] = static_cast<double>(cm.counts[i][j]) / static_cast<double>(row);
    }
  }
  return out;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, const WeightMatrix& weights) {
  return MetricsReport{kappa(cm), aa(cm), wa(cm, weights), oa(cm), oa_built(cm),
                       oa_nonbuilt(cm)};
}

WeightMatrix read_weight_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open: " + path);
  WeightMatrix m;
  std::string line;
  for (int i = 0; i < kClasses; ++i) {
    if (!std::getline(is, line)) throw data_error("weight matrix CSV needs 17 rows: " + path);
    std::istringstream ss(line);
    std::string cell;
    for (int j = 0; j < kClasses; ++j) {
      if (!std::getline(ss, cell, ',')) {
        throw data_error("weight matrix row " + std::to_string(i + 1) + " needs 17 columns");
      }
      try {
        m.w[i][j] = std::stod(cell);
      } catch (const std::exception&) {
        throw data_error("weight matrix: bad number '" + cell + "'");
      }
    }
  }
  m.validate();
  return m;
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open for writing: " + path);
  char line[256];
  std::snprintf(line, sizeof(line), "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", report.kappa,
                report.aa, report.wa, report.oa, report.oa_b, report.oa_nb);
  os << "kappa,aa,wa,oa,oa_b,oa_nb\n" << line;
}

void write_confusion_csv(const std::array<std::array<double, kClasses>, kClasses>& rows,
                         const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open for writing: " + path);
  char cell[64];
  for (int i = 0; i < kClasses; ++i) {
    for (int j = 0; j < kClasses; ++j) {
      std::snprintf(cell, sizeof(cell), "%.12g", rows[i][j]);
      os << cell << (j + 1 < kClasses ? "," : "\n");
    }
  }
}

}  // namespace lcz
