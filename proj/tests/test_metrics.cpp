#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sfmot/metrics.hpp"
#include "support.hpp"

using sfmot::Box3D;
using sfmot::EvalBox;
using sfmot::EvalFrame;
using sfmot::EvalSequence;

namespace {

Box3D car_at(double x, double y = 0) { return {x, y, 0, 4, 2, 1.5, 0}; }

/// One object per listed frame; `matched` frames get a prediction on top of it.
EvalSequence single_track(int frames, const std::vector<int>& present, const std::vector<int>& matched) {
  EvalSequence s;
  s.gt.resize(static_cast<std::size_t>(frames));
  s.pred.resize(static_cast<std::size_t>(frames));
  for (int t : present) s.gt[static_cast<std::size_t>(t)].push_back({0, car_at(t), 1});
  for (int t : matched) s.pred[static_cast<std::size_t>(t)].push_back({10, car_at(t), 0.9});
  return s;
}

sfmot::EvalConfig cfg_with(int steps, double thres = 0.25) {
  sfmot::EvalConfig c;
  c.num_recall_steps = steps;
  c.iou_thres = thres;
  return c;
}

}  // namespace

TEST(MatchFrame, PerfectAndEmpty) {
  const EvalFrame gt{{0, car_at(0), 1}, {1, car_at(10), 1}, {2, car_at(20), 1}};
  const auto m = sfmot::match_frame(gt, gt, 0.25);
  EXPECT_EQ(m.fp, 0u);
  EXPECT_EQ(m.fn, 0u);
  ASSERT_EQ(m.pairs.size(), 3u);
  for (double v : m.ious) EXPECT_EQ(v, 1.0);
  const auto e = sfmot::match_frame(gt, {}, 0.25);
  EXPECT_EQ(e.fn, 3u);
  EXPECT_EQ(e.fp, 0u);
}

TEST(MatchFrame, CrossedOverlapsPairByTotalIou) {
  // Same-size boxes shifted along x by d overlap with IoU (4 - d) / (4 + d).
  const EvalFrame gt{{0, car_at(0), 1}, {1, car_at(1.2), 1}};
  const EvalFrame pred{{5, car_at(0.4), 1}, {6, car_at(1.0), 1}};
  Eigen::MatrixXd s(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) s(i, j) = sfmot::iou3d(gt[i].box, pred[j].box);
  const auto m = sfmot::match_frame(gt, pred, 0.25);
  double tot = 0;
  for (double v : m.ious) tot += v;
  EXPECT_NEAR(tot, sfmot::testing::brute_force_max_total(s), 1e-12);
  EXPECT_EQ(m.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
}

TEST(MatchFrame, PreviousIdentityWinsOverHigherIou) {
  const EvalFrame gt{{0, car_at(0), 1}};
  const EvalFrame pred{{5, car_at(0.0), 1}, {6, car_at(0.5), 1}};
  const auto fresh = sfmot::match_frame(gt, pred, 0.25);
  EXPECT_EQ(fresh.pairs[0].second, 0u);
  const auto cont = sfmot::match_frame(gt, pred, 0.25, {{0, 6}});
  EXPECT_EQ(cont.pairs[0].second, 1u);
  EXPECT_EQ(cont.fp, 1u);
}

TEST(MatchFrame, BelowThresholdIsUnmatched) {
  const EvalFrame gt{{0, car_at(0), 1}};
  const EvalFrame pred{{5, car_at(3.5), 1}};
  const auto m = sfmot::match_frame(gt, pred, 0.25);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
}

TEST(EvaluateSequence, PerfectResults) {
  const EvalSequence s = single_track(6, {0, 1, 2, 3, 4, 5}, {0, 1, 2, 3, 4, 5});
  const auto c = sfmot::evaluate_sequence(s, 0.25);
  EXPECT_EQ(c.mota(), 1.0);
  EXPECT_EQ(c.motp(), 1.0);
  EXPECT_EQ(c.ids, 0u);
  EXPECT_EQ(c.frag, 0u);
}

TEST(EvaluateSequence, HandCountedMota) {
  // 10 gt boxes: object A in frames 0-4, object B in frames 0-4.
  EvalSequence s;
  s.gt.resize(5);
  s.pred.resize(5);
  for (int t = 0; t < 5; ++t) {
    s.gt[t].push_back({0, car_at(t), 1});
    s.gt[t].push_back({1, car_at(t, 20), 1});
    if (t != 2) s.pred[t].push_back({100, car_at(t), 1});            // one FN at t = 2
    s.pred[t].push_back({t < 3 ? 200 : 201, car_at(t, 20), 1});      // one IDS at t = 3
  }
  s.pred[4].push_back({300, car_at(50, 50), 1});                     // one FP
  const auto c = sfmot::evaluate_sequence(s, 0.25);
  EXPECT_EQ(c.num_gt, 10u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.ids, 1u);
  EXPECT_DOUBLE_EQ(c.mota(), 0.7);
}

TEST(EvaluateSequence, FragmentationTrace) {
  const EvalSequence s = single_track(6, {1, 2, 3, 4, 5}, {1, 2, 4, 5});
  const auto c = sfmot::evaluate_sequence(s, 0.25);
  EXPECT_EQ(c.frag, 1u);
  EXPECT_EQ(c.ids, 0u);
  EXPECT_EQ(c.fn, 1u);
}

TEST(EvaluateSequence, AbsenceIsNotFragmentation) {
  // The object leaves the scene in frame 3; it was never missed.
  const EvalSequence s = single_track(6, {1, 2, 4, 5}, {1, 2, 4, 5});
  EXPECT_EQ(sfmot::evaluate_sequence(s, 0.25).frag, 0u);
}

TEST(EvaluateSequence, MatchesBruteForceReference) {
  std::mt19937_64 rng(61);
  for (int k = 0; k < 200; ++k) {
    const EvalSequence s = sfmot::testing::random_eval_sequence(rng);
    for (double thres : {0.25, 0.7}) {
      const auto c = sfmot::evaluate_sequence(s, thres);
      const auto r = sfmot::testing::reference_evaluate(s, thres);
      EXPECT_EQ(c.fp, r.fp);
      EXPECT_EQ(c.fn, r.fn);
      EXPECT_EQ(c.ids, r.ids);
      EXPECT_EQ(c.frag, r.frag);
    }
  }
}

TEST(EvaluateSequence, MotaBoundsAndPerfection) {
  std::mt19937_64 rng(62);
  for (int k = 0; k < 200; ++k) {
    const EvalSequence s = sfmot::testing::random_eval_sequence(rng);
    const auto c = sfmot::evaluate_sequence(s, 0.25);
    EXPECT_LE(c.mota(), 1.0);
    EXPECT_EQ(c.mota() == 1.0, c.fp == 0 && c.fn == 0 && c.ids == 0);
  }
}

TEST(EvaluateSequence, NoiseTrackIncreasesFp) {
  std::mt19937_64 rng(63);
  for (int k = 0; k < 100; ++k) {
    EvalSequence s = sfmot::testing::random_eval_sequence(rng);
    const auto before = sfmot::evaluate_sequence(s, 0.25);
    for (std::size_t t = 0; t < s.pred.size(); ++t) s.pred[t].push_back({9999, car_at(500 + 10.0 * t, 500), 0.5});
    const auto after = sfmot::evaluate_sequence(s, 0.25);
    EXPECT_GT(after.fp, before.fp);
    EXPECT_GE(after.fn, before.fn);
  }
}

TEST(EvaluateSequence, InvariantUnderRigidTransform) {
  std::mt19937_64 rng(64);
  for (int k = 0; k < 50; ++k) {
    EvalSequence s = sfmot::testing::random_eval_sequence(rng);
    const auto before = sfmot::evaluate_sequence(s, 0.25);
    const double r = 0.7, c = std::cos(r), sn = std::sin(r);
    auto move = [&](EvalBox& e) {
      const Box3D& b = e.box;
      e.box = {c * b.x - sn * b.y + 13, sn * b.x + c * b.y - 4, b.z + 2, b.l, b.w, b.h, b.theta + r};
    };
    for (auto& f : s.gt)
      for (auto& e : f) move(e);
    for (auto& f : s.pred)
      for (auto& e : f) move(e);
    const auto after = sfmot::evaluate_sequence(s, 0.25);
    EXPECT_EQ(before.fp, after.fp);
    EXPECT_EQ(before.fn, after.fn);
    EXPECT_EQ(before.ids, after.ids);
    EXPECT_EQ(before.frag, after.frag);
    EXPECT_NEAR(before.sum_iou, after.sum_iou, 1e-9);
  }
}

TEST(EvaluateSequence, ScoreCutDropsLowConfidence) {
  EvalSequence s = single_track(2, {0, 1}, {0, 1});
  s.pred[1][0].score = 0.1;
  const auto c = sfmot::evaluate_sequence(s, 0.25, 0.5);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tp, 1u);
}

TEST(ScaledMota, PrintedFormulaAndClamp) {
  EXPECT_DOUBLE_EQ(sfmot::scaled_mota(0.5, 0.4), 0.8);
  EXPECT_EQ(sfmot::scaled_mota(0.3, -0.2), 0.0);
  EXPECT_EQ(sfmot::scaled_mota(0.5, 0.9), 1.0);
  EXPECT_THROW(sfmot::scaled_mota(0.0, 0.1, {}, sfmot::SmotaVariant::printed), sfmot::InputError);
}

TEST(ScaledMota, IntegratedFnVariant) {
  sfmot::EvalCounts c;
  c.num_gt = 100;
  c.fp = 5;
  c.fn = 55;
  c.ids = 1;
  // 1 - (61 - 0.5 * 100) / (0.5 * 100) = 0.78
  EXPECT_NEAR(sfmot::scaled_mota(0.5, c.mota(), c, sfmot::SmotaVariant::integrated_fn), 0.78, 1e-12);
}

TEST(AggregateRows, MeanOfRows) {
  sfmot::MetricsReport r;
  r.rows.push_back({0.5, 0, 0, 0.4, 0.8, 0.8});
  r.rows.push_back({1.0, 0, 0, 0.6, 0.9, 0.6});
  sfmot::aggregate_rows(r);
  EXPECT_DOUBLE_EQ(r.amota, 50.0);
  EXPECT_DOUBLE_EQ(r.amotp, 85.0);
  EXPECT_DOUBLE_EQ(r.samota, 70.0);
  EXPECT_DOUBLE_EQ(r.mota, 0.6);
  EXPECT_DOUBLE_EQ(r.motp, 0.9);
}

TEST(RecallSweep, HandBuiltFixture) {
  // One object over 4 frames detected with falling confidence, plus one
  // confident false positive.
  EvalSequence s = single_track(4, {0, 1, 2, 3}, {0, 1, 2, 3});
  for (int t = 0; t < 4; ++t) s.pred[t][0].score = 0.9 - 0.1 * t;
  s.pred[0].push_back({77, car_at(40, 40), 0.95});
  const auto rep = sfmot::recall_sweep(std::span(&s, 1), cfg_with(2));
  ASSERT_EQ(rep.rows.size(), 2u);
  // r = 0.5: cut 0.8 keeps FP + 2 TP -> MOTA 1 - 3/4.
  EXPECT_DOUBLE_EQ(rep.rows[0].threshold, 0.8);
  EXPECT_DOUBLE_EQ(rep.rows[0].mota, 0.25);
  EXPECT_DOUBLE_EQ(rep.rows[0].smota, 0.5);
  // r = 1: everything -> MOTA 1 - 1/4.
  EXPECT_DOUBLE_EQ(rep.rows[1].threshold, 0.6);
  EXPECT_DOUBLE_EQ(rep.rows[1].mota, 0.75);
  EXPECT_DOUBLE_EQ(rep.rows[1].smota, 0.75);
  EXPECT_DOUBLE_EQ(rep.amota, 50.0);
  EXPECT_DOUBLE_EQ(rep.samota, 62.5);
  EXPECT_DOUBLE_EQ(rep.mota, 0.75);
}

TEST(RecallSweep, UnreachableRecallUsesLowestCut) {
  const EvalSequence s = single_track(4, {0, 1, 2, 3}, {0, 1});
  const auto rep = sfmot::recall_sweep(std::span(&s, 1), cfg_with(4));
  EXPECT_DOUBLE_EQ(rep.rows[2].mota, 0.5);
  EXPECT_DOUBLE_EQ(rep.rows[3].mota, 0.5);
  EXPECT_DOUBLE_EQ(rep.rows[3].smota, 0.5);
  EXPECT_DOUBLE_EQ(rep.rows[1].smota, 1.0);
}

TEST(RecallSweep, PerfectResultsScoreHundred) {
  const EvalSequence s = single_track(10, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto rep = sfmot::recall_sweep(std::span(&s, 1), cfg_with(40));
  EXPECT_EQ(rep.samota, 100.0);
  EXPECT_EQ(rep.mota, 1.0);
  EXPECT_EQ(rep.ids, 0u);
  EXPECT_EQ(rep.frag, 0u);
}

TEST(RecallSweep, EmptyResultsGiveZeroRows) {
  const EvalSequence s = single_track(3, {0, 1, 2}, {});
  const auto rep = sfmot::recall_sweep(std::span(&s, 1), cfg_with(40));
  EXPECT_LE(rep.mota, 0.0);
  for (const auto& row : rep.rows) EXPECT_EQ(row.smota, 0.0);
}

TEST(RecallSweep, SmotaAlwaysInUnitInterval) {
  std::mt19937_64 rng(65);
  for (int k = 0; k < 50; ++k) {
    const EvalSequence s = sfmot::testing::random_eval_sequence(rng, 8, 4);
    const auto rep = sfmot::recall_sweep(std::span(&s, 1), cfg_with(10));
    for (const auto& row : rep.rows) {
      EXPECT_GE(row.smota, 0.0);
      EXPECT_LE(row.smota, 1.0);
    }
    EXPECT_GE(rep.samota, 0.0);
    EXPECT_LE(rep.samota, 100.0);
    double m = 0;
    for (const auto& row : rep.rows) m += row.mota;
    EXPECT_DOUBLE_EQ(rep.amota, 100.0 * m / 10);
  }
}

TEST(RecallSweep, RejectsMissingGroundTruthAndBadConfig) {
  EvalSequence s;
  s.gt.resize(2);
  s.pred.resize(2);
  EXPECT_THROW(sfmot::recall_sweep(std::span(&s, 1), cfg_with(4)), sfmot::InputError);
  EXPECT_THROW(sfmot::recall_sweep(std::span(&s, 1), cfg_with(0)), sfmot::ConfigError);
  EXPECT_THROW(sfmot::recall_sweep(std::span(&s, 1), cfg_with(4, 0.0)), sfmot::ConfigError);
}

TEST(MakeEvalSequence, FromLabels) {
  sfmot::LabelRow g;
  g.frame = 1;
  g.track_id = 3;
  g.h = 1.5, g.w = 1.6, g.l = 3.9, g.z = 10;
  sfmot::LabelRow ped = g;
  ped.category = "Pedestrian";
  ped.track_id = 4;
  sfmot::LabelRow p = g;
  p.score = 0.7;
  const sfmot::FrameLabels gt{{1, {g, ped}}}, res{{1, {p}}};
  const auto s = sfmot::make_eval_sequence(gt, res, "Car", true);
  ASSERT_EQ(s.gt.size(), 2u);
  EXPECT_EQ(s.gt[1].size(), 1u);
  EXPECT_EQ(s.pred[1][0].score, 0.7);
  EXPECT_EQ(sfmot::iou3d(s.gt[1][0].box, s.pred[1][0].box), 1.0);
}

TEST(MakeEvalSequence, RejectsDuplicatesMissingScoresAndOverrun) {
  sfmot::LabelRow g;
  g.frame = 0;
  g.track_id = 1;
  sfmot::LabelRow p = g;
  EXPECT_THROW(sfmot::make_eval_sequence({{0, {g}}}, {{0, {p}}}, "Car", true), sfmot::InputError);
  p.score = 0.5;
  EXPECT_THROW(sfmot::make_eval_sequence({{0, {g}}}, {{0, {p, p}}}, "Car", true), sfmot::InputError);
  sfmot::LabelRow late = p;
  late.frame = 5;
  EXPECT_THROW(sfmot::make_eval_sequence({{0, {g}}}, {{5, {late}}}, "Car", true, 3), sfmot::InputError);
}

TEST(Report, TwoSectionsTwoDecimals) {
  const EvalSequence s = single_track(4, {0, 1, 2, 3}, {0, 1, 2, 3});
  std::vector<std::pair<double, sfmot::MetricsReport>> sec;
  for (double t : {0.25, 0.7}) sec.emplace_back(t, sfmot::recall_sweep(std::span(&s, 1), cfg_with(40, t)));
  const std::string table = sfmot::format_report_table("Car", sec);
  EXPECT_NE(table.find("IoU_thres=0.25"), std::string::npos);
  EXPECT_NE(table.find("IoU_thres=0.70"), std::string::npos);
  EXPECT_NE(table.find("100.00"), std::string::npos);
  const std::string kv = sfmot::format_report_kv("Car", sec);
  EXPECT_NE(kv.find("sAMOTA=100.00"), std::string::npos);
  EXPECT_NE(kv.find("MOTA=1.00"), std::string::npos);
  EXPECT_NE(kv.find("[iou_thres=0.70]"), std::string::npos);
}
