#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lcz/metrics.hpp"
#include "lcz/rng.hpp"

using lcz::ConfusionMatrix;
using lcz::Rng;
using lcz::WeightMatrix;

namespace {

ConfusionMatrix random_cm(Rng& rng, std::int64_t max_cell = 40) {
  ConfusionMatrix cm;
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) cm.counts[i][j] = static_cast<std::int64_t>(rng.below(max_cell));
  }
  if (cm.total() == 0) cm.counts[0][0] = 1;
  return cm;
}

// Direct-formula reference, written independently of the library code.
struct Oracle {
  double oa, aa, kappa, oa_b, oa_nb;

  explicit Oracle(const ConfusionMatrix& cm) {
    long double total = 0, diag = 0;
    long double rows[17] = {}, cols[17] = {};
    for (int i = 0; i < 17; ++i) {
      for (int j = 0; j < 17; ++j) {
        total += cm.counts[i][j];
        rows[i] += cm.counts[i][j];
        cols[j] += cm.counts[i][j];
        if (i == j) diag += cm.counts[i][j];
      }
    }
    oa = static_cast<double>(diag / total);
    long double recall_sum = 0;
    int present = 0;
    for (int i = 0; i < 17; ++i) {
      if (rows[i] > 0) {
        recall_sum += cm.counts[i][i] / rows[i];
        ++present;
      }
    }
    aa = static_cast<double>(recall_sum / present);
    long double pe = 0;
    for (int k = 0; k < 17; ++k) pe += rows[k] * cols[k];
    pe /= total * total;
    kappa = static_cast<double>((diag / total - pe) / (1.0L - pe));

    long double built = 0, built_kept = 0, nat = 0, nat_kept = 0;
    for (int i = 0; i < 17; ++i) {
      for (int j = 0; j < 17; ++j) {
        if (i < 10) {
          built += cm.counts[i][j];
          if (j < 10) built_kept += cm.counts[i][j];
        } else {
          nat += cm.counts[i][j];
          if (j >= 10) nat_kept += cm.counts[i][j];
        }
      }
    }
    oa_b = static_cast<double>(built_kept / built);
    oa_nb = static_cast<double>(nat_kept / nat);
  }
};

}  // namespace

TEST_CASE("confusion construction") {
  std::vector<int> truth{1, 1, 17}, pred{1, 2, 17};
  auto cm = lcz::confusion(truth, pred);
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[0][1] == 1);
  CHECK(cm.counts[16][16] == 1);
  CHECK(cm.total() == 3);

  std::vector<int> t2{1}, p2{2};
  CHECK(lcz::confusion(t2, p2).counts[0][1] == 1);

  // Row sums count true labels.
  std::vector<int> t3{5, 5, 5, 9}, p3{5, 1, 2, 9};
  auto cm3 = lcz::confusion(t3, p3);
  std::int64_t row5 = 0;
  for (int j = 0; j < 17; ++j) row5 += cm3.counts[4][j];
  CHECK(row5 == 3);

  std::vector<int> bad{18};
  CHECK_THROWS_AS((void)lcz::confusion(bad, bad), lcz::data_error);
  std::vector<int> uneven{1, 2};
  CHECK_THROWS_AS((void)lcz::confusion(uneven, t2), lcz::data_error);
}

TEST_CASE("perfect prediction scores one everywhere") {
  ConfusionMatrix cm;
  for (int i = 0; i < 17; ++i) cm.counts[i][i] = 3 + i;
  CHECK(lcz::oa(cm) == 1.0);
  CHECK(lcz::aa(cm) == 1.0);
  CHECK(lcz::kappa(cm) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lcz::oa_built(cm) == 1.0);
  CHECK(lcz::oa_nonbuilt(cm) == 1.0);
}

TEST_CASE("single-column predictions with uniform truth hit chance level") {
  ConfusionMatrix cm;
  for (int i = 0; i < 17; ++i) cm.counts[i][0] = 4;  // everything predicted as class 1
  CHECK(lcz::oa(cm) == doctest::Approx(1.0 / 17.0).epsilon(1e-12));
  CHECK(lcz::kappa(cm) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kappa is undefined when expected agreement is one") {
  ConfusionMatrix cm;
  cm.counts[4][4] = 9;  // a single populated cell
  CHECK_THROWS_AS((void)lcz::kappa(cm), lcz::data_error);
}

TEST_CASE("empty matrix is rejected") {
  ConfusionMatrix cm;
  CHECK_THROWS_AS((void)lcz::oa(cm), lcz::data_error);
}

TEST_CASE("metrics match the direct-formula oracle on random matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto cm = random_cm(rng);
    Oracle oracle(cm);
    CHECK(std::abs(lcz::oa(cm) - oracle.oa) < 1e-12);
    CHECK(std::abs(lcz::aa(cm) - oracle.aa) < 1e-12);
    CHECK(std::abs(lcz::kappa(cm) - oracle.kappa) < 1e-12);
    CHECK(std::abs(lcz::oa_built(cm) - oracle.oa_b) < 1e-12);
    CHECK(std::abs(lcz::oa_nonbuilt(cm) - oracle.oa_nb) < 1e-12);
  }
}

TEST_CASE("weighted accuracy special cases") {
  auto identity = WeightMatrix::identity();
  Rng rng(77);
  auto cm = random_cm(rng);
  CHECK(lcz::wa(cm, identity) == doctest::Approx(lcz::oa(cm)).epsilon(1e-15));

  WeightMatrix ones;
  for (auto& row : ones.w) row.fill(1.0);
  CHECK(lcz::wa(cm, ones) == doctest::Approx(1.0).epsilon(1e-15));

  // Two-class case embedded in the 17x17 matrix.
  ConfusionMatrix two;
  two.counts[0][0] = 1;
  two.counts[0][1] = 1;
  WeightMatrix w = WeightMatrix::identity();
  w.w[0][1] = 0.5;
  CHECK(lcz::wa(two, w) == doctest::Approx(0.75).epsilon(1e-15));

  // Identity-diagonal weights can only add to OA.
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_cm(rng);
    WeightMatrix rw = WeightMatrix::identity();
    for (int i = 0; i < 17; ++i) {
      for (int j = 0; j < 17; ++j) {
        if (i != j) rw.w[i][j] = rng.uniform01();
      }
    }
    CHECK(lcz::wa(m, rw) >= lcz::oa(m) - 1e-12);
  }
}

TEST_CASE("weight matrix validation") {
  WeightMatrix bad = WeightMatrix::identity();
  bad.w[3][3] = 0.9;
  CHECK_THROWS_AS(bad.validate(), lcz::data_error);
  WeightMatrix neg = WeightMatrix::identity();
  neg.w[0][1] = -0.25;
  CHECK_THROWS_AS(neg.validate(), lcz::data_error);
}

TEST_CASE("group accuracies use group membership") {
  std::vector<int> truth{1, 11}, pred{12, 11};
  auto cm = lcz::confusion(truth, pred);
  CHECK(lcz::oa_built(cm) == 0.0);
  CHECK(lcz::oa_nonbuilt(cm) == 1.0);

  // Every built sample predicted as some (wrong) built class still scores 1.
  std::vector<int> t2{1, 2, 3}, p2{4, 5, 6};
  auto cm2 = lcz::confusion(t2, p2);
  CHECK(lcz::oa_built(cm2) == 1.0);
  CHECK_THROWS_AS((void)lcz::oa_nonbuilt(cm2), lcz::data_error);
}

TEST_CASE("row normalization") {
  ConfusionMatrix diag;
  for (int i = 0; i < 17; ++i) diag.counts[i][i] = 2 + i;
  auto norm = lcz::normalize_rows(diag);
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) CHECK(norm[i][j] == (i == j ? 1.0 : 0.0));
  }

  ConfusionMatrix cm;
  cm.counts[0][0] = 1;
  cm.counts[0][1] = 1;
  auto n2 = lcz::normalize_rows(cm);
  CHECK(n2[0][0] == doctest::Approx(0.5));
  CHECK(n2[0][1] == doctest::Approx(0.5));
  for (int i = 0; i < 17; ++i) {
    double row = 0.0;
    for (int j = 0; j < 17; ++j) row += n2[i][j];
    CHECK((std::abs(row) < 1e-12 || std::abs(row - 1.0) < 1e-12));
  }
}

TEST_CASE("permutation invariance of label-symmetric metrics") {
  Rng rng(31337);
  auto cm = random_cm(rng);
  std::vector<int> perm(17);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  ConfusionMatrix pcm;
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) pcm.counts[perm[i]][perm[j]] = cm.counts[i][j];
  }
  CHECK(lcz::oa(pcm) == doctest::Approx(lcz::oa(cm)).epsilon(1e-12));
  CHECK(lcz::aa(pcm) == doctest::Approx(lcz::aa(cm)).epsilon(1e-12));
  CHECK(lcz::kappa(pcm) == doctest::Approx(lcz::kappa(cm)).epsilon(1e-12));

  // WA stays invariant only when the weights are permuted the same way.
  WeightMatrix w = WeightMatrix::identity();
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) {
      if (i != j) w.w[i][j] = rng.uniform01();
    }
  }
  WeightMatrix pw = WeightMatrix::identity();
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) pw.w[perm[i]][perm[j]] = w.w[i][j];
  }
  CHECK(lcz::wa(pcm, pw) == doctest::Approx(lcz::wa(cm, w)).epsilon(1e-12));
}

TEST_CASE("kappa never exceeds overall accuracy") {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    auto cm = random_cm(rng);
    CHECK(lcz::kappa(cm) <= lcz::oa(cm) + 1e-12);
  }
}

TEST_CASE("shard confusion matrices merge by elementwise addition") {
  std::vector<int> t1{1, 2, 3}, p1{1, 2, 4};
  std::vector<int> t2{3, 17}, p2{3, 17};
  auto a = lcz::confusion(t1, p1);
  auto b = lcz::confusion(t2, p2);
  lcz::ConfusionMatrix merged;
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) merged.counts[i][j] = a.counts[i][j] + b.counts[i][j];

  std::vector<int> t{1, 2, 3, 3, 17}, p{1, 2, 4, 3, 17};
  const auto whole = lcz::confusion(t, p);
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) CHECK(merged.counts[i][j] == whole.counts[i][j]);
}

TEST_CASE("weight matrix and report CSV round-trips") {
  const auto dir = std::filesystem::temp_directory_path() / "lcz_metrics_tests";
  std::filesystem::create_directories(dir);

  Rng rng(8);
  WeightMatrix w = WeightMatrix::identity();
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) {
      if (i != j) w.w[i][j] = std::round(rng.uniform01() * 100.0) / 100.0;
    }
  }
  const auto wpath = (dir / "weights.csv").string();
  {
    std::ofstream os(wpath);
    for (int i = 0; i < 17; ++i) {
      for (int j = 0; j < 17; ++j) os << w.w[i][j] << (j < 16 ? "," : "\n");
    }
  }
  auto loaded = lcz::read_weight_matrix_csv(wpath);
  for (int i = 0; i < 17; ++i) {
    for (int j = 0; j < 17; ++j) CHECK(loaded.w[i][j] == doctest::Approx(w.w[i][j]));
  }

  lcz::MetricsReport report{0.5, 0.4, 0.9, 0.6, 0.95, 0.93};
  const auto mpath = (dir / "metrics.csv").string();
  lcz::write_metrics_csv(report, mpath);
  std::ifstream is(mpath);
  std::string header, row;
  REQUIRE(std::getline(is, header));
  CHECK(header == "kappa,aa,wa,oa,oa_b,oa_nb");
  REQUIRE(std::getline(is, row));
  CHECK(row == "0.5,0.4,0.9,0.6,0.95,0.93");
}
