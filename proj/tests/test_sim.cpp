#include <filesystem>

#include <gtest/gtest.h>

#include "sfmot/flow.hpp"
#include "sfmot/sim.hpp"

using namespace sfmot;

namespace {

Scenario one_car(double speed, double turn = 0, int frames = 6) {
  Scenario sc;
  sc.frames = frames;
  sc.ground_points = 50;
  sc.points_per_object = 40;
  SimObject o;
  o.id = 3;
  o.start = {20, 0, 0};
  o.speed = speed;
  o.turn_rate = turn;
  sc.objects = {o};
  return sc;
}

void expect_motion_near(const RigidMotion& a, const RigidMotion& b, double tol) {
  EXPECT_LE((a.rotation - b.rotation).cwiseAbs().maxCoeff(), tol);
  EXPECT_LE((a.translation - b.translation).cwiseAbs().maxCoeff(), tol);
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sfmot_sim_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(SimMotion, StaticObjectHasIdentityMotion) {
  const Sequence s = generate(one_car(0));
  for (std::size_t t = 1; t < s.frames.size(); ++t) expect_motion_near(s.frames[t].motions->at(3), RigidMotion{}, 1e-12);
  EXPECT_FALSE(s.frames[0].motions.has_value());
}

TEST(SimMotion, StraightDriveIsTranslation) {
  const Sequence s = generate(one_car(1.5));
  RigidMotion expect;
  expect.translation = Vec3(1.5, 0, 0);
  for (std::size_t t = 1; t < s.frames.size(); ++t) expect_motion_near(s.frames[t].motions->at(3), expect, 1e-9);
}

TEST(SimMotion, TurningPoseFollowsClosedForm) {
  SimObject o;
  o.start = {0, 0, 0.3};
  o.speed = 2;
  o.turn_rate = 0.1;
  // Constant speed arc: x = v/w (sin(phi) - sin(phi0)), y = v/w (cos(phi0) - cos(phi)).
  for (double t : {0.0, 1.0, 2.5, 7.0}) {
    const Pose2 p = o.pose(t);
    const double phi = 0.3 + 0.1 * t;
    EXPECT_NEAR(p.x, 20 * (std::sin(phi) - std::sin(0.3)), 1e-9);
    EXPECT_NEAR(p.y, 20 * (std::cos(0.3) - std::cos(phi)), 1e-9);
    EXPECT_NEAR(p.yaw, phi, 1e-12);
  }
}

TEST(SimMotion, WaypointsInterpolateLinearly) {
  SimObject o;
  o.waypoints = {{0, 0, 0}, {10, 10, 0}, {20, 10, 10}};
  EXPECT_NEAR(o.pose(5).x, 5, 1e-12);
  EXPECT_NEAR(o.pose(5).yaw, 0, 1e-12);
  EXPECT_NEAR(o.pose(15).y, 5, 1e-12);
  EXPECT_NEAR(o.pose(15).yaw, std::numbers::pi / 2, 1e-12);
}

TEST(SimDetections, FullDropRateGivesNoTrueDetections) {
  Scenario sc = one_car(1);
  sc.noise.fn_rate = 1;
  for (const auto& f : generate(sc).frames) {
    EXPECT_TRUE(f.detections.empty());
    EXPECT_EQ(f.gt.size(), 1u);
  }
}

TEST(SimDetections, ZeroNoiseMatchesGroundTruth) {
  const Sequence s = generate(demo_scenario());
  for (const auto& f : s.frames) {
    ASSERT_EQ(f.gt.size(), f.detections.size());
    for (std::size_t i = 0; i < f.gt.size(); ++i) {
      EXPECT_NEAR(iou3d(box_from_label(f.gt[i], s.calib), box_from_label(f.detections[i], s.calib)), 1.0, 1e-9);
      ASSERT_TRUE(f.detections[i].score.has_value());
    }
  }
}

TEST(SimDetections, NoiseSettingsDoNotShiftTheStream) {
  Scenario a = one_car(1, 0, 10), b = a;
  b.noise.pos_sigma = 0.3;
  const Sequence sa = generate(a), sb = generate(b);
  for (std::size_t t = 0; t < sa.frames.size(); ++t) {
    EXPECT_EQ(sa.frames[t].cloud->positions, sb.frames[t].cloud->positions);
    EXPECT_EQ(sa.frames[t].detections[0].score, sb.frames[t].detections[0].score);
  }
}

TEST(SimDetections, FalsePositivesAppearAtFullRate) {
  Scenario sc = one_car(1);
  sc.noise.fp_rate = 1;
  for (const auto& f : generate(sc).frames) EXPECT_EQ(f.detections.size(), 2u);
}

TEST(SimCloud, OracleFlowCarriesPointsExactly) {
  const Sequence s = generate(demo_scenario());
  for (std::size_t t = 1; t < s.frames.size(); ++t) {
    const PointCloud& prev = *s.frames[t - 1].cloud;
    const PointCloud& cur = *s.frames[t].cloud;
    const FlowField flow = estimate_oracle(prev, *s.frames[t].motions);
    ASSERT_EQ(prev.size(), cur.size());
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (!prev.labels[i].is_instance()) continue;
      EXPECT_LE((prev.positions[i] + flow.vectors[i] - cur.positions[i]).norm(), 1e-9);
    }
  }
}

TEST(SimCloud, ObjectPointsLieInsideTheirBox) {
  const Scenario sc = demo_scenario();
  const Sequence s = generate(sc);
  for (const auto& f : s.frames)
    for (std::size_t k = 0; k < sc.objects.size(); ++k) {
      const Box3D b = sc.box_at(sc.objects[k], f.index);
      for (std::size_t i = 0; i < f.cloud->size(); ++i)
        if (f.cloud->labels[i].is_instance() && f.cloud->labels[i].instance_id() == sc.objects[k].id) {
          const auto in = points_in_box(b, std::span(&f.cloud->positions[i], 1));
          EXPECT_EQ(in.size(), 1u);
        }
    }
}

TEST(SimCloud, SameSeedSameSequence) {
  const Sequence a = generate(demo_scenario(11)), b = generate(demo_scenario(11)), c = generate(demo_scenario(12));
  EXPECT_EQ(a.frames[4].cloud->positions, b.frames[4].cloud->positions);
  EXPECT_NE(a.frames[4].cloud->positions, c.frames[4].cloud->positions);
}

TEST(Decimate, KeepEvenOfTwenty) {
  const Sequence s = generate(one_car(1, 0, 20));
  const auto d = decimate(s, DecimateSpec::even());
  ASSERT_EQ(d.sequence.frames.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(d.sequence.frames[k].index, static_cast<int>(k));
    EXPECT_EQ(d.sequence.frames[k].gt[0].frame, static_cast<int>(k));
    EXPECT_EQ(d.sequence.frames[k].cloud->positions, s.frames[2 * k].cloud->positions);
  }
  EXPECT_FALSE(d.sequence.frames[0].motions.has_value());
  RigidMotion two;
  two.translation = Vec3(2, 0, 0);
  expect_motion_near(d.sequence.frames[3].motions->at(3), two, 1e-9);
}

TEST(Decimate, StrideOneIsIdentity) {
  const Sequence s = generate(one_car(1, 0.05, 8));
  const auto d = decimate(s, {1, 0});
  ASSERT_EQ(d.sequence.frames.size(), s.frames.size());
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    EXPECT_EQ(d.sequence.frames[t].cloud->positions, s.frames[t].cloud->positions);
    if (t) expect_motion_near(d.sequence.frames[t].motions->at(3), s.frames[t].motions->at(3), 0);
  }
}

TEST(Decimate, OddOfSingleFrameIsEmpty) {
  const auto d = decimate(generate(one_car(1, 0, 1)), DecimateSpec::odd());
  EXPECT_TRUE(d.empty);
  EXPECT_TRUE(d.sequence.frames.empty());
}

TEST(Decimate, StridesCompose) {
  const Sequence s = generate(one_car(1.2, 0.04, 25));
  for (auto [a, b] : {std::pair{2, 3}, std::pair{3, 2}, std::pair{2, 2}}) {
    const Sequence twice = decimate(decimate(s, {a, 0}).sequence, {b, 0}).sequence;
    const Sequence once = decimate(s, {a * b, 0}).sequence;
    ASSERT_EQ(twice.frames.size(), once.frames.size());
    for (std::size_t k = 0; k < once.frames.size(); ++k) {
      EXPECT_EQ(twice.frames[k].cloud->positions, once.frames[k].cloud->positions);
      if (k) expect_motion_near(twice.frames[k].motions->at(3), once.frames[k].motions->at(3), 1e-9);
    }
  }
}

TEST(Decimate, ComposedMotionMapsPoints) {
  const Sequence s = generate(one_car(1.2, 0.08, 12));
  const Sequence d = decimate(s, {3, 1}).sequence;
  for (std::size_t k = 1; k < d.frames.size(); ++k) {
    const PointCloud& a = *d.frames[k - 1].cloud;
    const PointCloud& b = *d.frames[k].cloud;
    const FlowField f = estimate_oracle(a, *d.frames[k].motions);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.labels[i].is_instance()) EXPECT_LE((a.positions[i] + f.vectors[i] - b.positions[i]).norm(), 1e-9);
  }
}

TEST(Decimate, RejectsBadSpec) {
  const Sequence s = generate(one_car(1, 0, 3));
  EXPECT_THROW(decimate(s, {0, 0}), ConfigError);
  EXPECT_THROW(decimate(s, {2, 2}), ConfigError);
}

TEST(ScenarioFile, ParsesObjectsAndRejectsErrors) {
  const Scenario sc = parse_scenario(
      "frames 12\nseed 4\nfp_rate 0.1 # comment\n"
      "object\n id 9\n size 4 1.8 1.5\n start 10 2 0.1\n speed 1\nend\n"
      "object\n category Van\n waypoint 0 5 5\n waypoint 10 15 5\nend\n");
  EXPECT_EQ(sc.frames, 12);
  EXPECT_EQ(sc.seed, 4u);
  EXPECT_EQ(sc.noise.fp_rate, 0.1);
  ASSERT_EQ(sc.objects.size(), 2u);
  EXPECT_EQ(sc.objects[0].id, 9);
  EXPECT_EQ(sc.objects[0].l, 4);
  EXPECT_EQ(sc.objects[1].category, "Van");
  EXPECT_EQ(sc.objects[1].waypoints.size(), 2u);

  EXPECT_THROW(parse_scenario("frames x\n"), ParseError);
  EXPECT_THROW(parse_scenario("bogus 1\n"), ParseError);
  EXPECT_THROW(parse_scenario("object\n id 1\n"), ParseError);
  EXPECT_THROW(parse_scenario("fn_rate 2\n"), ConfigError);
  EXPECT_THROW(parse_scenario("object\nid 1\nend\nobject\nid 1\nend\n"), ConfigError);
  try {
    parse_scenario("frames 3\nspeed 2\n", "s.txt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("s.txt:2"), std::string::npos);
  }
}

TEST(SequenceFiles, RoundTrip) {
  const Sequence s = generate(demo_scenario());
  const auto dir = scratch("roundtrip");
  write_sequence(dir, s);
  const Sequence r = read_sequence(dir);
  ASSERT_EQ(r.frames.size(), s.frames.size());
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    const auto& a = s.frames[t];
    const auto& b = r.frames[t];
    ASSERT_TRUE(b.cloud.has_value());
    ASSERT_EQ(a.cloud->size(), b.cloud->size());
    for (std::size_t i = 0; i < a.cloud->size(); ++i) {
      EXPECT_LE((a.cloud->positions[i] - b.cloud->positions[i]).norm(), 1e-5);
      EXPECT_EQ(a.cloud->labels[i], b.cloud->labels[i]);
    }
    ASSERT_EQ(a.gt.size(), b.gt.size());
    ASSERT_EQ(a.detections.size(), b.detections.size());
    for (std::size_t i = 0; i < a.gt.size(); ++i) {
      EXPECT_EQ(a.gt[i].track_id, b.gt[i].track_id);
      EXPECT_NEAR(iou3d(box_from_label(a.gt[i], s.calib), box_from_label(b.gt[i], r.calib)), 1.0, 1e-4);
    }
    EXPECT_EQ(a.motions.has_value(), b.motions.has_value());
    if (a.motions)
      for (const auto& [id, m] : *a.motions) expect_motion_near(m, b.motions->at(id), 1e-9);
  }
  std::filesystem::remove_all(dir);
}
