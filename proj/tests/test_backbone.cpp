#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "raymap3r/backbone.hpp"
#include "raymap3r/sim.hpp"
#include "test_util.hpp"

using namespace raymap3r;

namespace {

sim::SceneSpec quiet_room(std::uint64_t seed, std::size_t frames = 12) {
  sim::RoomOptions opt;
  opt.frames = frames;
  opt.noise = sim::NoiseModel{};
  opt.jitter = sim::ResetJitter{};
  return sim::make_room_scene(seed, opt);
}

StateVector random_state(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  StateVector s;
  s.tokens.resize(n, d);
  for (Eigen::Index i = 0; i < s.tokens.size(); ++i) s.tokens(i) = g(rng);
  s.frame_index = 3;
  return s;
}

}  // namespace

TEST(ApplyStateUpdate, AllOnesIsUngated) {
  std::mt19937_64 rng(1);
  const StateVector s = random_state(rng, 8, 4);
  StateDelta d;
  d.tokens = random_state(rng, 8, 4).tokens;
  d.frame_index = 4;
  const auto next = apply_state_update(s, d, std::vector<double>(8, 1.0));
  EXPECT_TRUE(next.tokens == s.tokens + d.tokens);
  EXPECT_EQ(next.frame_index, 4);
}

TEST(ApplyStateUpdate, AllZerosKeepsState) {
  std::mt19937_64 rng(2);
  const StateVector s = random_state(rng, 8, 4);
  StateDelta d;
  d.tokens = random_state(rng, 8, 4).tokens;
  EXPECT_TRUE(apply_state_update(s, d, std::vector<double>(8, 0.0)).tokens == s.tokens);
}

TEST(ApplyStateUpdate, HalfGateOnOneToken) {
  std::mt19937_64 rng(3);
  const StateVector s = random_state(rng, 8, 4);
  StateDelta d;
  d.tokens = random_state(rng, 8, 4).tokens;
  std::vector<double> gate(8, 1.0);
  gate[3] = 0.5;
  const auto next = apply_state_update(s, d, gate);
  for (int j = 0; j < 8; ++j) {
    for (int c = 0; c < 4; ++c) {
      const double expected = s.tokens(j, c) + (j == 3 ? 0.5 : 1.0) * d.tokens(j, c);
      EXPECT_EQ(next.tokens(j, c), expected);
    }
  }
}

TEST(ApplyStateUpdate, ShapeAndRangeErrors) {
  std::mt19937_64 rng(4);
  const StateVector s = random_state(rng, 8, 4);
  StateDelta d;
  d.tokens = Eigen::MatrixXd::Zero(7, 4);
  EXPECT_THROW(apply_state_update(s, d, std::vector<double>(8, 1.0)), ShapeError);
  d.tokens = Eigen::MatrixXd::Zero(8, 4);
  EXPECT_THROW(apply_state_update(s, d, std::vector<double>(7, 1.0)), ShapeError);
  EXPECT_THROW(apply_state_update(s, d, std::vector<double>(8, 1.5)), Error);
}

TEST(ApplyStateUpdate, OnesGateOverManyFramesEqualsAccumulation) {
  std::mt19937_64 rng(5);
  StateVector gated = random_state(rng, 16, 4);
  Eigen::MatrixXd plain = gated.tokens;
  for (int t = 0; t < 50; ++t) {
    StateDelta d;
    d.tokens = random_state(rng, 16, 4).tokens;
    gated = apply_state_update(gated, d, std::vector<double>(16, 1.0));
    plain += d.tokens;
  }
  EXPECT_TRUE(gated.tokens == plain);
}

TEST(AttentionMap, NormalizeRows) {
  AttentionMap a;
  a.weights = Eigen::MatrixXd::Constant(3, 5, 2.0);
  a.weights(1, 2) = 10.0;
  a.normalize_rows();
  EXPECT_TRUE(a.is_row_stochastic(1e-12));
  a.weights(0, 0) = -1.0;
  EXPECT_THROW(a.normalize_rows(), Error);
  AttentionMap z;
  z.weights = Eigen::MatrixXd::Zero(2, 2);
  EXPECT_THROW(z.normalize_rows(), Error);
}

TEST(SimulatedBackbone, ZeroNoiseDepthEqualsRaycast) {
  const auto spec = quiet_room(1);
  sim::SimulatedBackbone bb(spec, 16);
  const auto state = bb.initial_state(bb.frame(0));
  for (std::size_t t : {0u, 5u, 11u}) {
    const auto pred = bb.decode_main(bb.frame(t), build_raymap(spec.intrinsics, RigidPose::identity()), state);
    const auto gt = sim::raycast(spec, t, true);
    EXPECT_TRUE(pred.depth.values == gt.depth.values);
    EXPECT_TRUE(pred.depth.valid == gt.depth.valid);
    EXPECT_LT(testutil::max_abs(pred.pose->rotation - gt.pose.rotation), 1e-12);
    EXPECT_LT((pred.pose->translation - gt.pose.translation).norm(), 1e-12);
  }
}

TEST(SimulatedBackbone, DeterministicOutputs) {
  auto spec = sim::make_room_scene(3, sim::RoomOptions{.frames = 10});
  sim::SimulatedBackbone a(spec, 16), b(spec, 16);
  const auto sa = a.initial_state(a.frame(0));
  const auto sb = b.initial_state(b.frame(0));
  const auto ray = build_raymap(spec.intrinsics, spec.camera_pose(4));
  const auto pa = a.decode_main(a.frame(4), ray, sa);
  const auto pb = b.decode_main(b.frame(4), ray, sb);
  EXPECT_TRUE(pa.depth.values == pb.depth.values);
  EXPECT_TRUE(pa.pose == pb.pose);
  EXPECT_TRUE(pa.state_delta->tokens == pb.state_delta->tokens);
  const auto ra = a.decode_raymap_only(ray, sa);
  const auto rb = b.decode_raymap_only(ray, sb);
  EXPECT_TRUE(ra.depth.values == rb.depth.values);
}

TEST(SimulatedBackbone, StateDeltaDependsOnMemory) {
  const auto spec = quiet_room(4, 20);
  sim::SimulatedBackbone bb(spec, 16);
  StateVector s = bb.initial_state(bb.frame(0));
  for (std::size_t t = 0; t < 15; ++t) {
    const auto p = bb.decode_main(bb.frame(t), build_raymap(spec.intrinsics, RigidPose::identity()), s);
    s = apply_state_update(s, *p.state_delta, std::vector<double>(static_cast<std::size_t>(s.token_count()), 1.0));
  }
  const auto ray = build_raymap(spec.intrinsics, RigidPose::identity());
  const auto carried = bb.decode_main(bb.frame(15), ray, s);
  sim::SimulatedBackbone fresh_bb(spec, 16);
  const StateVector fresh = fresh_bb.initial_state(fresh_bb.frame(3));
  const auto from_fresh = fresh_bb.decode_main(fresh_bb.frame(15), ray, fresh);
  EXPECT_GT(testutil::max_abs(carried.state_delta->tokens - from_fresh.state_delta->tokens), 1e-6);
}

TEST(SimulatedBackbone, RaymapBranchDoesNotDisturbMainBranch) {
  const auto spec = sim::make_room_scene(5, sim::RoomOptions{.frames = 10});
  sim::SimulatedBackbone a(spec, 16), b(spec, 16);
  StateVector sa = a.initial_state(a.frame(0));
  StateVector sb = b.initial_state(b.frame(0));
  for (std::size_t t = 0; t < 10; ++t) {
    const auto ray = build_raymap(spec.intrinsics, spec.camera_pose(t));
    const auto pa = a.decode_main(a.frame(t), ray, sa);
    for (int k = 0; k < 3; ++k) (void)b.decode_raymap_only(ray, sb);
    const auto pb = b.decode_main(b.frame(t), ray, sb);
    ASSERT_TRUE(pa.depth.values == pb.depth.values);
    ASSERT_TRUE(pa.pose == pb.pose);
    ASSERT_TRUE(pa.state_delta->tokens == pb.state_delta->tokens);
    const std::vector<double> ones(static_cast<std::size_t>(sa.token_count()), 1.0);
    sa = apply_state_update(sa, *pa.state_delta, ones);
    sb = apply_state_update(sb, *pb.state_delta, ones);
  }
}

TEST(SimulatedBackbone, StateShapeIsConstant) {
  const auto spec = sim::make_room_scene(6, sim::RoomOptions{.frames = 30});
  sim::SimulatedBackbone bb(spec, 16);
  StateVector s = bb.initial_state(bb.frame(0));
  const auto rows = s.token_count(), cols = s.dims();
  for (std::size_t t = 0; t < 30; ++t) {
    const auto p = bb.decode_main(bb.frame(t), build_raymap(spec.intrinsics, RigidPose::identity()), s);
    s = apply_state_update(s, *p.state_delta, std::vector<double>(static_cast<std::size_t>(rows), 1.0));
    if (t % 10 == 9) s = bb.initial_state(bb.frame(t));
    ASSERT_EQ(s.token_count(), rows);
    ASSERT_EQ(s.dims(), cols);
  }
  StateVector wrong;
  wrong.tokens = Eigen::MatrixXd::Zero(rows + 1, cols);
  EXPECT_THROW(bb.decode_raymap_only(build_raymap(spec.intrinsics, RigidPose::identity()), wrong), ShapeError);
}

TEST(TransformPrediction, ScalesDepthAndMovesPose) {
  FramePrediction p;
  p.depth = DepthMap(2, 1);
  p.depth.set(0, 0, 2.0);
  RigidPose pose;
  pose.translation = Eigen::Vector3d(0.0, 0.0, -1.0);
  p.pose = pose;
  SimTransform g;
  g.scale = 2.0;
  const auto q = transform_prediction(g, p);
  EXPECT_EQ(q.depth.values(0, 0), 4.0);
  EXPECT_EQ(q.depth.values(1, 0), 0.0);
  EXPECT_FALSE(q.depth.is_valid(1, 0));
  EXPECT_NEAR((q.pose->center() - 2.0 * pose.center()).norm(), 0.0, 1e-12);
}
