#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "raymap3r/align.hpp"
#include "raymap3r/eval.hpp"
#include "raymap3r/pipeline.hpp"
#include "raymap3r/sim.hpp"
#include "test_util.hpp"

using namespace raymap3r;

namespace {

const Intrinsics kIntr{80.0, 80.0, 31.5, 23.5, 64, 48};

// Wavy surface so that the fit is well conditioned in every axis.
FramePrediction surface(const RigidPose& pose) {
  FramePrediction p;
  p.depth = DepthMap(kIntr.width, kIntr.height);
  for (int y = 0; y < kIntr.height; ++y)
    for (int x = 0; x < kIntr.width; ++x) p.depth.set(x, y, 3.0 + 0.5 * std::sin(0.2 * x) + 0.3 * std::cos(0.15 * y));
  p.pose = pose;
  return p;
}

void expect_sim_near(const SimTransform& a, const SimTransform& b, double tol) {
  EXPECT_NEAR(a.scale, b.scale, tol);
  EXPECT_LT(testutil::max_abs(a.rotation - b.rotation), tol);
  EXPECT_LT((a.translation - b.translation).norm(), tol);
}

eval::Trajectory emitted(const MemorySink& sink) {
  eval::Trajectory t;
  for (const auto& f : sink.frames) t.push_back(f.timestamp, f.pose);
  return t;
}

eval::Trajectory ground_truth(const sim::SceneSpec& spec) {
  eval::Trajectory t;
  for (std::size_t i = 0; i < spec.frame_count; ++i) t.push_back(spec.timestamp(i), spec.camera_pose(i));
  return t;
}

}  // namespace

TEST(ResetPolicy, Schedule) {
  const align::ResetPolicy p{50, true};
  EXPECT_FALSE(p.is_reset_frame(0, 200));
  EXPECT_TRUE(p.is_reset_frame(50, 200));
  EXPECT_FALSE(p.is_reset_frame(51, 200));
  EXPECT_FALSE(p.is_reset_frame(150, 151));
  EXPECT_FALSE((align::ResetPolicy{50, false}).is_reset_frame(50, 200));
  EXPECT_THROW((align::ResetPolicy{1, true}).validate(), ConfigError);
}

TEST(EstimateResetCorrection, IdenticalPredictionsGiveIdentity) {
  std::mt19937_64 rng(1);
  const auto pre = surface(testutil::random_pose(rng));
  const auto c = align::estimate_reset_correction(pre, pre, kIntr, 7);
  ASSERT_FALSE(c.degenerate);
  EXPECT_EQ(c.reset_frame, 7u);
  expect_sim_near(c.transform, SimTransform::identity(), 1e-9);
  EXPECT_LT(c.residual, 1e-9);
}

TEST(EstimateResetCorrection, RecoversInverseOfPerturbation) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pre = surface(testutil::random_pose(rng));
    const SimTransform p = testutil::random_sim(rng);
    const auto post = transform_prediction(p, pre);
    const auto c = align::estimate_reset_correction(pre, post, kIntr);
    ASSERT_FALSE(c.degenerate);
    expect_sim_near(c.transform, p.inverse(), 1e-6);
    EXPECT_LT(c.residual, 1e-9);
  }
}

TEST(EstimateResetCorrection, DownweightedOutliersAreIgnored) {
  std::mt19937_64 rng(3);
  const auto pre = surface(testutil::random_pose(rng));
  const SimTransform p = testutil::random_sim(rng);
  auto post = transform_prediction(p, pre);
  Grid<double> w(kIntr.width, kIntr.height, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t corrupted = 0;
  for (int y = 0; y < kIntr.height; ++y) {
    for (int x = 0; x < kIntr.width; ++x) {
      if (u(rng) < 0.25) {
        post.depth.set(x, y, post.depth.values(x, y) * (1.5 + u(rng)));
        w(x, y) = 1e-9;
        ++corrupted;
      }
    }
  }
  ASSERT_GT(corrupted, w.size() / 5);
  const auto c = align::estimate_reset_correction(pre, post, w, kIntr);
  ASSERT_FALSE(c.degenerate);
  expect_sim_near(c.transform, p.inverse(), 1e-5);
  // Without the weights the fit is pulled away.
  const auto naive = align::estimate_reset_correction(pre, post, kIntr);
  EXPECT_GT(std::abs(naive.transform.scale - p.inverse().scale), 1e-3);
}

TEST(EstimateResetCorrection, DegenerateInputsGiveFlaggedIdentity) {
  const auto pre = surface(RigidPose::identity());
  Grid<double> zero(kIntr.width, kIntr.height, 0.0);
  auto c = align::estimate_reset_correction(pre, pre, zero, kIntr);
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.transform, SimTransform::identity());

  // A handful of valid pixels is below the correspondence minimum.
  auto sparse = pre;
  for (int y = 0; y < kIntr.height; ++y)
    for (int x = 0; x < kIntr.width; ++x)
      if (x > 5 || y > 5) sparse.depth.set(x, y, 0.0);
  c = align::estimate_reset_correction(sparse, sparse, kIntr);
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.correspondences, 36u);

  auto no_pose = pre;
  no_pose.pose.reset();
  EXPECT_TRUE(align::estimate_reset_correction(no_pose, pre, kIntr).degenerate);

  EXPECT_THROW(align::estimate_reset_correction(pre, pre, Grid<double>(3, 3, 1.0), kIntr), ShapeError);
}

TEST(ApplyCorrection, IdentityAndPureScale) {
  std::mt19937_64 rng(4);
  const auto pred = surface(testutil::random_pose(rng));
  align::SegmentCorrection id;
  const auto same = align::apply_correction(id, pred);
  EXPECT_TRUE(same.depth.values == pred.depth.values);
  EXPECT_LT((same.pose->center() - pred.pose->center()).norm(), 1e-12);

  align::SegmentCorrection twice;
  twice.transform.scale = 2.0;
  const std::vector<FramePrediction> tail{pred, surface(testutil::random_pose(rng))};
  const auto out = align::apply_correction(twice, tail);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    EXPECT_LT((out[i].pose->center() - 2.0 * tail[i].pose->center()).norm(), 1e-12);
    for (std::size_t k = 0; k < tail[i].depth.values.size(); ++k)
      ASSERT_EQ(out[i].depth.values[k], 2.0 * tail[i].depth.values[k]);
  }
  const Eigen::Vector3d d0 = tail[1].pose->center() - tail[0].pose->center();
  const Eigen::Vector3d d1 = out[1].pose->center() - out[0].pose->center();
  EXPECT_LT((d1 - 2.0 * d0).norm(), 1e-12);
}

TEST(ApplyCorrection, CorrectedPostMatchesPrePointwise) {
  std::mt19937_64 rng(5);
  const auto pre = surface(testutil::random_pose(rng));
  const auto post = transform_prediction(testutil::random_sim(rng), pre);
  const auto c = align::estimate_reset_correction(pre, post, kIntr);
  const auto fixed = align::apply_correction(c, post);
  for (int y = 0; y < kIntr.height; ++y) {
    for (int x = 0; x < kIntr.width; ++x) {
      const Eigen::Vector3d a = unproject_pixel(x, y, pre.depth.values(x, y), kIntr, *pre.pose);
      const Eigen::Vector3d b = unproject_pixel(x, y, fixed.depth.values(x, y), kIntr, *fixed.pose);
      ASSERT_LT((a - b).norm(), 1e-9);
    }
  }
  // Re-estimating on the corrected stream finds nothing left to fix.
  const auto again = align::estimate_reset_correction(pre, fixed, kIntr);
  EXPECT_NEAR(again.transform.scale, 1.0, 1e-6);
  EXPECT_LT(again.transform.rotation_angle(), 1e-6);
}

TEST(SegmentAligner, ComposesAndSkipsDegenerate) {
  std::mt19937_64 rng(6);
  align::SegmentAligner a;
  const SimTransform g1 = testutil::random_sim(rng), g2 = testutil::random_sim(rng);
  a.push({g1, 10, 0.0, false, 500});
  a.push({testutil::random_sim(rng), 20, 0.0, true, 0});
  a.push({g2, 30, 0.0, false, 500});
  expect_sim_near(a.cumulative(), g1.compose(g2), 1e-12);
}

TEST(ClosedLoop, NoiseFreeStreamIsMetricallyConsistent) {
  sim::RoomOptions opt;
  opt.frames = 120;
  opt.noise = sim::NoiseModel{};
  const auto spec = sim::make_room_scene(77, opt);
  const auto gt = ground_truth(spec);

  PipelineConfig cfg;
  cfg.enable_s = false;
  cfg.reset.period = 30;
  double rmse[2];
  for (int m = 0; m < 2; ++m) {
    cfg.enable_m = m == 1;
    sim::SimulatedBackbone bb(spec, cfg.patch_size);
    MemorySink sink;
    ASSERT_TRUE(StreamingRunner(cfg).run(bb, sink).ok());
    rmse[m] = eval::ate(emitted(sink), gt).rmse;
    if (m == 1) {
      ASSERT_EQ(sink.corrections.size(), 3u);
      for (const auto& c : sink.corrections) EXPECT_FALSE(c.degenerate);
    }
  }
  EXPECT_LE(rmse[1], 1e-6);
  EXPECT_LT(rmse[1], rmse[0]);
  EXPECT_GT(rmse[0], 1e-3);
}
