#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "raymap3r/eval.hpp"
#include "test_util.hpp"

using namespace raymap3r;

namespace {

eval::Trajectory random_trajectory(std::mt19937_64& rng, std::size_t n) {
  eval::Trajectory t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(0.1 * static_cast<double>(i), testutil::random_pose(rng, 5.0));
  return t;
}

eval::Trajectory warp(const eval::Trajectory& t, const SimTransform& g) {
  eval::Trajectory out;
  for (std::size_t i = 0; i < t.size(); ++i) out.push_back(t.timestamps[i], transform_pose(g, t.poses[i]));
  return out;
}

RigidPose translated(double x, double y, double z) {
  return RigidPose::from_camera_center(Eigen::Matrix3d::Identity(), Eigen::Vector3d(x, y, z));
}

DepthMap random_depth(std::mt19937_64& rng, int w, int h, double invalid_fraction) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DepthMap d(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (u(rng) >= invalid_fraction) d.set(x, y, 0.5 + 5.0 * u(rng));
  return d;
}

PointCloud grid_plane(int n, double spacing, double z = 0.0) {
  PointCloud c;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c.points.emplace_back(i * spacing, j * spacing, z);
  return c;
}

double brute_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j]) continue;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      ++pairs;
    }
  }
  return wins / static_cast<double>(pairs);
}

std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double brute_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

eval::DynmapFrame make_frame(const std::vector<double>& delta, const std::vector<std::uint8_t>& mask) {
  const int n = static_cast<int>(delta.size());
  eval::DynmapFrame f{Grid<double>(n, 1), Grid<std::uint8_t>(n, 1), {}};
  for (int i = 0; i < n; ++i) {
    f.delta(i, 0) = delta[static_cast<std::size_t>(i)];
    f.mask(i, 0) = mask[static_cast<std::size_t>(i)];
  }
  return f;
}

}  // namespace

TEST(Ate, IdenticalTrajectoriesGiveZero) {
  std::mt19937_64 rng(1);
  const auto t = random_trajectory(rng, 50);
  for (auto a : {eval::Alignment::sim3, eval::Alignment::se3, eval::Alignment::none})
    EXPECT_NEAR(eval::ate(t, t, a).rmse, 0.0, 1e-12);
}

TEST(Ate, InvariantToSim3Warp) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = random_trajectory(rng, 40);
    const auto est = warp(gt, testutil::random_sim(rng));
    EXPECT_LT(eval::ate(est, gt).rmse, 1e-9);
  }
}

TEST(Ate, ConstantOffsetWithoutAlignment) {
  eval::Trajectory gt, est;
  for (int i = 0; i < 10; ++i) {
    gt.push_back(i, translated(i, 0.5 * i * i, 0.0));
    est.push_back(i, translated(i, 0.5 * i * i, 0.1));
  }
  EXPECT_NEAR(eval::ate(est, gt, eval::Alignment::none).rmse, 0.1, 1e-12);
  EXPECT_LT(eval::ate(est, gt, eval::Alignment::se3).rmse, 1e-9);

  // Collinear centers cannot fix a rotation; the fit falls back to no alignment.
  eval::Trajectory line_gt, line_est;
  for (int i = 0; i < 10; ++i) {
    line_gt.push_back(i, translated(i, 0.0, 0.0));
    line_est.push_back(i, translated(i, 0.0, 0.1));
  }
  const auto r = eval::ate(line_est, line_gt, eval::Alignment::se3);
  EXPECT_TRUE(r.fell_back);
  EXPECT_NEAR(r.rmse, 0.1, 1e-12);
}

TEST(Ate, MatchesBruteForceAfterAlignment) {
  std::mt19937_64 rng(3);
  const auto gt = random_trajectory(rng, 30);
  const auto est = random_trajectory(rng, 30);
  const auto r = eval::ate(est, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    sum += (r.alignment.apply(est.poses[i].center()) - gt.poses[i].center()).squaredNorm();
  EXPECT_NEAR(r.rmse, std::sqrt(sum / 30.0), 1e-12);
  EXPECT_THROW(eval::ate(est, random_trajectory(rng, 29)), ShapeError);
}

TEST(Rpe, IdenticalAndGloballyRotated) {
  std::mt19937_64 rng(4);
  const auto gt = random_trajectory(rng, 30);
  const auto r0 = eval::rpe(gt, gt);
  EXPECT_NEAR(r0.trans, 0.0, 1e-9);
  EXPECT_NEAR(r0.rot, 0.0, 1e-5);
  SimTransform g;
  g.rotation = axis_angle(Eigen::Vector3d(1, 2, 3), 0.7);
  g.translation = Eigen::Vector3d(4, -1, 2);
  const auto r1 = eval::rpe(warp(gt, g), gt, 2);
  EXPECT_NEAR(r1.trans, 0.0, 1e-9);
  EXPECT_NEAR(r1.rot, 0.0, 1e-5);
}

TEST(Rpe, TwoPoseHandOracle) {
  eval::Trajectory gt, est;
  gt.push_back(0.0, RigidPose::identity());
  gt.push_back(1.0, translated(1.0, 0.0, 0.0));
  est.push_back(0.0, RigidPose::identity());
  RigidPose second = translated(1.1, 0.0, 0.0);
  second.rotation = axis_angle(Eigen::Vector3d::UnitZ(), 10.0 * std::numbers::pi / 180.0).transpose();
  second.translation = -second.rotation * Eigen::Vector3d(1.1, 0.0, 0.0);
  est.push_back(1.0, second);
  const auto r = eval::rpe(est, gt);
  EXPECT_TRUE(r.fell_back);
  EXPECT_NEAR(r.trans, 0.1, 1e-12);
  EXPECT_NEAR(r.rot, 10.0, 1e-9);
  EXPECT_THROW(eval::rpe(est, gt, 2), Error);
}

TEST(DepthMetrics, Examples) {
  std::mt19937_64 rng(5);
  const std::vector<DepthMap> gt{random_depth(rng, 16, 12, 0.1), random_depth(rng, 16, 12, 0.1)};
  auto s = eval::depth_metrics(gt, gt);
  EXPECT_EQ(s.abs_rel, 0.0);
  EXPECT_EQ(s.delta_125, 100.0);

  std::vector<DepthMap> doubled = gt;
  for (auto& d : doubled)
    for (auto& v : d.values) v *= 2.0;
  s = eval::depth_metrics(doubled, gt);
  EXPECT_NEAR(s.abs_rel, 0.0, 1e-15);
  EXPECT_EQ(s.delta_125, 100.0);
  EXPECT_DOUBLE_EQ(s.scale, 0.5);
  s = eval::depth_metrics(doubled, gt, eval::DepthProtocol::metric);
  EXPECT_DOUBLE_EQ(s.abs_rel, 1.0);
  EXPECT_EQ(s.delta_125, 0.0);
}

TEST(DepthMetrics, MatchesBruteForce) {
  std::mt19937_64 rng(6);
  std::vector<DepthMap> pred, gt;
  for (int f = 0; f < 4; ++f) {
    pred.push_back(random_depth(rng, 20, 15, 0.2));
    gt.push_back(random_depth(rng, 20, 15, 0.2));
  }
  std::vector<double> ratios;
  for (int f = 0; f < 4; ++f)
    for (std::size_t i = 0; i < gt[0].values.size(); ++i)
      if (pred[f].valid[i] && gt[f].valid[i]) ratios.push_back(gt[f].values[i] / pred[f].values[i]);
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  const double pos = 0.5 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double scale = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[std::min(lo + 1, sorted.size() - 1)] - sorted[lo]);

  for (auto protocol : {eval::DepthProtocol::per_sequence_median, eval::DepthProtocol::metric}) {
    const double k = protocol == eval::DepthProtocol::metric ? 1.0 : scale;
    double rel = 0.0, good = 0.0, n = 0.0;
    for (int f = 0; f < 4; ++f) {
      for (std::size_t i = 0; i < gt[0].values.size(); ++i) {
        if (!pred[f].valid[i] || !gt[f].valid[i]) continue;
        const double p = k * pred[f].values[i], g = gt[f].values[i];
        rel += std::abs(p - g) / g;
        good += std::max(p / g, g / p) < 1.25 ? 1.0 : 0.0;
        n += 1.0;
      }
    }
    const auto s = eval::depth_metrics(pred, gt, protocol);
    EXPECT_EQ(static_cast<double>(s.pixels), n);
    EXPECT_NEAR(s.abs_rel, rel / n, 1e-12);
    EXPECT_NEAR(s.delta_125, 100.0 * good / n, 1e-12);
  }
}

TEST(DepthMetrics, Errors) {
  const std::vector<DepthMap> a{DepthMap(4, 4)};
  EXPECT_THROW(eval::depth_metrics(a, a), Error);
  const std::vector<DepthMap> b{DepthMap(4, 4), DepthMap(4, 4)};
  EXPECT_THROW(eval::depth_metrics(a, b), ShapeError);
}

TEST(ReconMetrics, IdenticalCloudsGiveZero) {
  const auto c = grid_plane(20, 0.05);
  const auto s = eval::recon_metrics(c, c);
  EXPECT_EQ(s.accuracy, 0.0);
  EXPECT_EQ(s.completion, 0.0);
  EXPECT_EQ(s.chamfer, 0.0);
  ASSERT_TRUE(s.normal_consistency);
  EXPECT_NEAR(*s.normal_consistency, 1.0, 1e-12);
}

TEST(ReconMetrics, OffsetAlongNormal) {
  const double eps = 0.01;
  const auto s = eval::recon_metrics(grid_plane(20, 0.05, eps), grid_plane(20, 0.05));
  EXPECT_NEAR(s.accuracy, eps, 1e-12);
  EXPECT_NEAR(s.completion, eps, 1e-12);
  EXPECT_NEAR(s.chamfer, eps, 1e-12);
}

TEST(ReconMetrics, SubsetAndSymmetry) {
  const auto full = grid_plane(20, 0.05);
  PointCloud half;
  for (std::size_t i = 0; i < full.size() / 2; ++i) half.points.push_back(full.points[i]);
  const auto s = eval::recon_metrics(half, full);
  EXPECT_EQ(s.accuracy, 0.0);
  EXPECT_GT(s.completion, 0.0);

  std::mt19937_64 rng(7);
  PointCloud a, b;
  for (int i = 0; i < 300; ++i) {
    a.points.push_back(testutil::random_vector(rng, -1, 1));
    b.points.push_back(testutil::random_vector(rng, -1, 1));
  }
  const auto ab = eval::recon_metrics(a, b), ba = eval::recon_metrics(b, a);
  EXPECT_NEAR(ab.chamfer, ba.chamfer, 1e-12);
  EXPECT_NEAR(ab.accuracy, ba.completion, 1e-12);

  // Brute-force nearest neighbours.
  double acc = 0.0;
  for (const auto& p : a.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b.points) best = std::min(best, (p - q).norm());
    acc += best;
  }
  EXPECT_NEAR(ab.accuracy, acc / 300.0, 1e-12);
  EXPECT_THROW(eval::recon_metrics(PointCloud{}, b), Error);
}

TEST(RankAuc, MatchesPairCount) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> level(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(300);
    std::vector<std::uint8_t> l(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
      l[i] = rng() % 3 == 0;
      s[i] = 0.1 * level(rng) + (l[i] ? 0.2 : 0.0);  // coarse levels force ties
    }
    EXPECT_NEAR(*eval::rank_auc(s, l), brute_auc(s, l), 1e-9);
  }
  const std::vector<double> s{1.0, 2.0};
  EXPECT_FALSE(eval::rank_auc(s, std::vector<std::uint8_t>{1, 1}));
}

TEST(RankAuc, InvariantUnderMonotoneWarps) {
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> s(500), warped(500);
  std::vector<std::uint8_t> l(500);
  for (std::size_t i = 0; i < s.size(); ++i) {
    l[i] = rng() % 2;
    s[i] = e(rng) + (l[i] ? 0.5 : 0.0);
    warped[i] = std::log(1.0 + 3.0 * s[i]) + 7.0;
  }
  EXPECT_EQ(*eval::rank_auc(s, l), *eval::rank_auc(warped, l));
}

TEST(DynmapMetrics, PerfectSeparationSaturates) {
  const auto f = make_frame({0, 0, 0, 0, 1, 1, 0, 0}, {0, 0, 0, 0, 1, 1, 0, 0});
  const std::vector<eval::DynmapFrame> frames{f};
  const auto s = eval::dynmap_metrics(frames);
  EXPECT_EQ(*s.auc, 1.0);
  EXPECT_EQ(*s.iou, 1.0);
  EXPECT_TRUE(s.disc_saturated);
  EXPECT_TRUE(std::isinf(*s.disc));
}

TEST(DynmapMetrics, ConstantDiscrepancy) {
  const auto f = make_frame(std::vector<double>(8, 0.3), {0, 1, 0, 0, 1, 1, 0, 0});
  const std::vector<eval::DynmapFrame> frames{f};
  const auto s = eval::dynmap_metrics(frames);
  EXPECT_EQ(*s.auc, 0.5);
  EXPECT_EQ(*s.disc, 1.0);
  EXPECT_FALSE(s.disc_saturated);
}

TEST(DynmapMetrics, FrameAveragedRatioAndValidity) {
  auto a = make_frame({1, 1, 4, 4}, {0, 0, 1, 1});
  auto b = make_frame({2, 2, 2, 100}, {0, 0, 1, 1});
  b.valid = Grid<std::uint8_t>(4, 1, 1);
  b.valid(3, 0) = 0;
  const std::vector<eval::DynmapFrame> frames{a, b};
  const auto s = eval::dynmap_metrics(frames);
  EXPECT_DOUBLE_EQ(*s.disc, (4.0 + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(*s.auc, (1.0 + 0.5) / 2.0);
  // Frames lacking one class are skipped.
  const std::vector<eval::DynmapFrame> only_static{make_frame({1, 2}, {0, 0})};
  EXPECT_FALSE(eval::dynmap_metrics(only_static).disc);
}

TEST(Spearman, Examples) {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(*eval::spearman(xs, xs), 1.0);
  EXPECT_DOUBLE_EQ(*eval::spearman(xs, rev), -1.0);
  EXPECT_FALSE(eval::spearman(xs, std::vector<double>(5, 2.0)));
  EXPECT_THROW(eval::spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
}

TEST(Spearman, TiesMatchBruteForceAverageRanks) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> d(0, 5);
  std::vector<double> xs(40), ys(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = d(rng);
    ys[i] = xs[i] + d(rng);
  }
  const auto ranks = stats::fractional_ranks(xs);
  const auto ref = brute_ranks(xs);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(ranks[i], ref[i]);
  EXPECT_NEAR(*eval::spearman(xs, ys), brute_pearson(brute_ranks(xs), brute_ranks(ys)), 1e-12);
}

TEST(Stats, QuantilesInterpolateLinearly) {
  const std::vector<double> v{0.9, 0.1, 0.1, 0.1};
  EXPECT_DOUBLE_EQ(stats::median(v), 0.1);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 0.75), 0.3);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 1.0), 0.9);
  const auto r = stats::robust_spread(v);
  EXPECT_DOUBLE_EQ(r.iqr(), 0.2);
}

TEST(Stats, OtsuSplitsBimodalData) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> lo(0.1, 0.02), hi(0.8, 0.05);
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(lo(rng));
  for (int i = 0; i < 100; ++i) v.push_back(hi(rng));
  const double t = eval::discrepancy_threshold(v);
  int errors = 0;
  for (std::size_t i = 0; i < v.size(); ++i) errors += (v[i] > t) != (i >= 500);
  EXPECT_LE(errors, 6);
  EXPECT_EQ(eval::discrepancy_threshold(std::vector<double>(10, 0.0)), 0.0);
}
