#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "resnetplus/metrics.hpp"

using namespace rnp;
namespace fs = std::filesystem;

namespace {

// Mann-Whitney form: P(score+ > score-) + 0.5 P(tie), by direct pair counting.
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Auc, TrapezoidEqualsPairwiseOnRandomSets) {
  std::mt19937_64 rng(42);
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 2 + rng() % 60;
    // Coarse scores on even sets force ties.
    const bool coarse = set % 2 == 0;
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = u(rng) < 0.4;
      s[i] = coarse ? std::floor(u(rng) * 5) / 5 : u(rng);
      if (pos[i]) s[i] = std::min(1.0, s[i] + (coarse ? 0.2 : 0.15));
    }
    pos[0] = true;
    pos[1] = false;
    const auto curve = roc_curve(s, pos);
    ASSERT_TRUE(curve.defined);
    ASSERT_NEAR(curve.auc, pairwise_auc(s, pos), 1e-9) << "set " << set;
    ASSERT_EQ(curve.points.front(), (std::pair<double, double>{0.0, 0.0}));
    ASSERT_EQ(curve.points.back(), (std::pair<double, double>{1.0, 1.0}));
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      ASSERT_GE(curve.points[i].first, curve.points[i - 1].first);
      ASSERT_GE(curve.points[i].second, curve.points[i - 1].second);
    }
  }
}

TEST(Auc, PerfectAndDegenerateCases) {
  EXPECT_DOUBLE_EQ(roc_curve({0.9, 0.8, 0.1, 0.2}, {true, true, false, false}).auc, 1.0);
  EXPECT_DOUBLE_EQ(roc_curve({0.1, 0.2, 0.9, 0.8}, {true, true, false, false}).auc, 0.0);
  EXPECT_DOUBLE_EQ(roc_curve({0.5, 0.5, 0.5}, {true, false, true}).auc, 0.5);
  EXPECT_FALSE(roc_curve({0.5, 0.7}, {true, true}).defined);
  EXPECT_THROW(roc_curve({0.5}, {true, false}), DimensionError);
}

TEST(Auc, MacroAverageSkipsUndefinedCurves) {
  // Class 2 never occurs: its curve is undefined and excluded.
  Tensor<double> p({4, 3}, std::vector<double>{0.8, 0.1, 0.1, 0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.3, 0.6, 0.1});
  const auto r = roc_auc_ovr(p, {0, 0, 1, 1});
  ASSERT_EQ(r.curves.size(), 3u);
  EXPECT_FALSE(r.curves[2].defined);
  EXPECT_DOUBLE_EQ(r.macro_auc, 1.0);
}

TEST(Confusion, HandCountedExample) {
  // true: 0 0 0 1 1 2 2 2 2
  // pred: 0 1 0 1 2 2 2 0 2
  const auto cm = confusion({0, 0, 0, 1, 1, 2, 2, 2, 2}, {0, 1, 0, 1, 2, 2, 2, 0, 2}, 3);
  const std::vector<std::size_t> want = {2, 1, 0, 0, 1, 1, 1, 0, 3};
  EXPECT_EQ(cm.counts, want);
  EXPECT_EQ(cm.total(), 9u);
  EXPECT_EQ(cm.trace(), 6u);

  const auto m = classification_metrics(cm);
  EXPECT_DOUBLE_EQ(m.accuracy, 6.0 / 9.0);
  // class 0: TP 2, FP 1, FN 1; class 1: TP 1, FP 1, FN 1; class 2: TP 3, FP 1, FN 1.
  EXPECT_DOUBLE_EQ(m.per_class[0].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.per_class[0].recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.per_class[1].f1, 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(m.per_class[2].f1, 6.0 / 8.0);
  EXPECT_EQ(m.per_class[2].support, 4u);
  EXPECT_NEAR(m.macro.precision, (2.0 / 3 + 0.5 + 0.75) / 3, 1e-15);
  EXPECT_NEAR(m.macro.f1, (2.0 / 3 + 0.5 + 0.75) / 3, 1e-15);
  EXPECT_NEAR(m.micro.precision, 6.0 / 9.0, 1e-15);

  EXPECT_THROW(confusion({0, 3}, {0, 0}, 3), ArgumentError);
  EXPECT_THROW(confusion({0}, {0, 0}, 3), DimensionError);
}

TEST(Confusion, ZeroSupportAndZeroPredictionFlags) {
  const auto m = classification_metrics(confusion({0, 0, 1}, {0, 0, 0}, 3));
  EXPECT_TRUE(m.per_class[1].zero_predictions);
  EXPECT_EQ(m.per_class[1].precision, 0.0);
  EXPECT_TRUE(m.per_class[2].zero_support);
  EXPECT_EQ(m.per_class[2].recall, 0.0);
  EXPECT_EQ(m.per_class[2].f1, 0.0);
}

TEST(Dca, NetBenefitWorkedExample) {
  // 30/100 - 10/100 * 0.2/0.8 = 0.275
  EXPECT_NEAR(net_benefit(30, 10, 100, 0.2), 0.275, 1e-15);
  EXPECT_THROW(net_benefit(1, 1, 10, 0.0), ArgumentError);
  EXPECT_THROW(net_benefit(1, 1, 10, 1.0), ArgumentError);
}

TEST(Dca, CurvesAgainstDirectCounts) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t n = 200, k = 3;
  Tensor<double> p({n, k});
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(rng() % k);
    double s = 0;
    for (std::size_t c = 0; c < k; ++c) s += p.at(i, c) = u(rng) + (static_cast<int>(c) == y[i]);
    for (std::size_t c = 0; c < k; ++c) p.at(i, c) /= s;
  }
  const auto grid = default_pt_grid();
  ASSERT_EQ(grid.size(), 99u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.01);
  EXPECT_NEAR(grid.back(), 0.99, 1e-12);
  const auto curves = dca_ovr(p, y);
  ASSERT_EQ(curves.size(), k);
  for (std::size_t c = 0; c < k; ++c) {
    for (double v : curves[c].treat_none) EXPECT_EQ(v, 0.0);
    for (std::size_t g = 0; g < grid.size(); g += 7) {
      const double pt = grid[g];
      double tp = 0, fp = 0, pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool is = y[i] == static_cast<int>(c);
        pos += is;
        if (p.at(i, c) >= pt) (is ? tp : fp) += 1;
      }
      EXPECT_NEAR(curves[c].net_benefit[g], tp / n - fp / n * pt / (1 - pt), 1e-12);
      EXPECT_NEAR(curves[c].treat_all[g], pos / n - (n - pos) / n * pt / (1 - pt), 1e-12);
    }
  }
}

TEST(Latency, SampleMeanAndStd) {
  const auto s = latency_stats({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  EXPECT_DOUBLE_EQ(s.mean_ms, 5.0);
  EXPECT_NEAR(s.std_ms, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(latency_stats({3.0}).std_ms, 0.0);
}

TEST(Report, PerfectClassifierAndSummaryLine) {
  Tensor<double> p({3, 3}, std::vector<double>{0.9, 0.05, 0.05, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6});
  const auto r = make_report(p, {0, 1, 2}, {"a", "b", "c"});
  EXPECT_DOUBLE_EQ(r.metrics.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_auc, 1.0);
  EXPECT_EQ(summary_line(r), "ACC 100.00  PRE 100.00  REC 100.00  F1 100.00  AUC 100.00");
  EXPECT_THROW(make_report(p, {0, 1, 2}, {"a", "b"}), DimensionError);
}

TEST(Report, JsonRoundTripAndExportedFiles) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> p({20, 3});
  std::vector<int> y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    y[i] = static_cast<int>(i % 3);
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += p.at(i, c) = u(rng);
    for (std::size_t c = 0; c < 3; ++c) p.at(i, c) /= s;
  }
  auto r = make_report(p, y, {"x", "y", "z"});
  r.weights = "ema";
  r.latency = latency_stats({1.5, 2.5});
  EXPECT_EQ(metrics_report_from_json(to_json(r)), r);

  const auto dir = fs::temp_directory_path() / "resnetplus_test_metrics";
  fs::remove_all(dir);
  const auto files = export_report(r, dir.string());
  EXPECT_EQ(files.size(), 6u);
  for (const auto& f : files) EXPECT_GT(fs::file_size(f), 0u) << f;
  std::ifstream svg(dir / "metrics_roc.svg");
  const std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text.rfind("<?xml", 0), 0u);
  EXPECT_NE(text.find("<svg"), std::string::npos);
  EXPECT_EQ(text.substr(text.size() - 7), "</svg>\n");
  const auto only_csv = export_report(r, (dir / "csv").string(), kExportCsv, "m");
  EXPECT_EQ(only_csv.size(), 3u);
}
