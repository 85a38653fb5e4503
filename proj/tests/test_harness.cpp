#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "cogdrone/harness.hpp"
#include "cogdrone/task_engine.hpp"

using namespace cogdrone;

namespace {

const TaskSpec& task_by_id(const TaskBank& bank, const std::string& id) {
  for (const auto& t : bank.tasks)
    if (t.task_id == id) return t;
  throw std::runtime_error("no task " + id);
}

TrackStage stage_for(const std::string& id, std::uint64_t seed, LayoutParams layout = {}) {
  static const TaskBank bank = sample_task_bank();
  Rng rng(seed);
  return instantiate_stage(task_by_id(bank, id), layout, rng);
}

/// Reasoner that counts calls and returns a tick-stamped directive.
class CountingReasoner final : public Reasoner {
 public:
  std::string reason(const std::string&, const Frame& f) override {
    ++calls;
    frame_bytes = f.rgb.size();
    return "directive " + std::to_string(calls.load());
  }
  std::atomic<int> calls{0};
  std::size_t frame_bytes = 0;
};

class ThrowingReasoner final : public Reasoner {
 public:
  std::string reason(const std::string&, const Frame&) override { throw std::runtime_error("model offline"); }
};

class ResetFails final : public Controller {
 public:
  void reset(const StageMeta&) override { throw PlanningError("no path"); }
  VelocityCommand act(const Observation&) override { return {}; }
  void episode_end(const StageOutcome& o) override { ended = o; }
  std::optional<StageOutcome> ended;
};

class Recorder final : public Controller {
 public:
  void reset(const StageMeta& m) override { meta = m; }
  VelocityCommand act(const Observation& o) override {
    directives.push_back(o.directive);
    return {};
  }
  std::optional<StageMeta> meta;
  std::vector<std::optional<std::string>> directives;
};

}  // namespace

TEST(DualRate, RateContractOverFullStage) {
  const auto stage = stage_for("rs_01", 1);
  Recorder rec;
  CountingReasoner reasoner;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, rec, &reasoner, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(r.run.outcome.kind, OutcomeKind::timeout);
  EXPECT_EQ(r.controller_calls, 300);
  EXPECT_EQ(r.reasoner_calls.size(), 60u);
  EXPECT_EQ(reasoner.calls.load(), 60);
  EXPECT_EQ(reasoner.frame_bytes, kFrameBytes);
  ASSERT_EQ(r.directive_age.size(), 300u);
  for (std::size_t k = 0; k < r.directive_age.size(); ++k) {
    EXPECT_GE(r.directive_age[k], 0);
    EXPECT_LE(r.directive_age[k], 5);
    EXPECT_EQ(r.directive_age[k], static_cast<std::int64_t>(k % 5));
  }
  for (std::size_t i = 0; i < r.reasoner_calls.size(); ++i) {
    EXPECT_EQ(r.reasoner_calls[i].tick, static_cast<std::int64_t>(5 * i));
    EXPECT_EQ(r.reasoner_calls[i].applied_tick, static_cast<std::int64_t>(5 * i));
  }
}

TEST(DualRate, ReasonerCallsAreCeilTicksOverFive) {
  for (double limit : {0.1, 0.4, 0.5, 0.6, 1.3, 2.9}) {
    LayoutParams layout;
    layout.time_limit = limit;
    const auto stage = stage_for("su_01", 2, layout);
    ZeroController zero;
    CountingReasoner reasoner;
    const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, zero, &reasoner, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
    const auto ticks = r.run.outcome.ticks;
    EXPECT_EQ(r.controller_calls, ticks);
    EXPECT_EQ(static_cast<std::int64_t>(r.reasoner_calls.size()), (ticks + 4) / 5) << limit;
  }
}

TEST(DualRate, DirectiveChangesOnlyAtReasonerTicks) {
  const auto stage = stage_for("rs_02", 3);
  Recorder rec;
  CountingReasoner reasoner;
  run_dual_rate(stage, Pose{{0, 0, 2}, 0}, rec, &reasoner, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  ASSERT_EQ(rec.directives.size(), 300u);
  for (std::size_t k = 1; k < rec.directives.size(); ++k) {
    if (rec.directives[k] != rec.directives[k - 1]) {
      EXPECT_EQ(k % 5, 0u) << k;
    }
  }
}

TEST(DualRate, FailedReasonerKeepsStaleDirective) {
  const auto stage = stage_for("rs_02", 3);
  Recorder rec;
  ThrowingReasoner reasoner;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, rec, &reasoner, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(r.run.outcome.kind, OutcomeKind::timeout);
  for (const auto& d : rec.directives) EXPECT_FALSE(d);
  EXPECT_FALSE(r.reasoner_calls.front().ok);
  EXPECT_EQ(r.directive_age.front(), -1);
}

TEST(DualRate, NoReasonerMeansNoDirective) {
  const auto stage = stage_for("hr_01", 4);
  Recorder rec;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, rec, nullptr, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_TRUE(r.reasoner_calls.empty());
  for (auto age : r.directive_age) EXPECT_EQ(age, -1);
}

TEST(DualRate, StageMetaHidesTheAnswer) {
  const auto stage = stage_for("rs_01", 5);
  Recorder rec;
  run_dual_rate(stage, Pose{{0, 0, 2}, 0}, rec, nullptr, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  ASSERT_TRUE(rec.meta);
  EXPECT_EQ(rec.meta->task, brief_of(stage.task));
  EXPECT_EQ(rec.meta->gates, stage.gates);
  EXPECT_EQ(rec.meta->dt, 0.1);
}

TEST(DualRate, IdentityReasonerWithOracle) {
  const auto stage = stage_for("hr_03", 6);
  OracleController oracle(stage);
  IdentityReasoner reasoner;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, oracle, &reasoner, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(r.run.outcome.kind, OutcomeKind::passed_correct);
  EXPECT_EQ(r.reasoner_calls.front().directive, stage.task.prompt);
}

TEST(DualRate, ScriptedSweetDrinkDirective) {
  const auto stage = stage_for("rs_01", 7);
  ScriptedReasoner reasoner({{stage.task.prompt, label_directive("soda_logo")}});
  DirectiveFollower follower;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, follower, &reasoner, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(r.run.outcome.kind, OutcomeKind::passed_correct);
  EXPECT_EQ(r.run.outcome.gate_id, stage.correct_gate().gate_id);

  ScriptedReasoner wrong({{stage.task.prompt, label_directive("water_logo")}});
  DirectiveFollower follower2;
  const auto w = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, follower2, &wrong, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(w.run.outcome.kind, OutcomeKind::passed_wrong);
}

TEST(DualRate, LabelDirectiveParsing) {
  EXPECT_EQ(parse_label_directive(label_directive("soda_logo")), "soda_logo");
  EXPECT_EQ(parse_label_directive("go to label_asset digit_7, quickly"), "digit_7");
  EXPECT_FALSE(parse_label_directive("go to the soda"));
}

TEST(DualRate, RejectsMismatchedRates) {
  const auto stage = stage_for("rs_01", 1);
  ZeroController zero;
  DualRateConfig rates;
  rates.control_hz = 20;
  EXPECT_THROW(run_dual_rate(stage, Pose{{0, 0, 2}, 0}, zero, nullptr, rates, WorldConfig{}, LabelAtlas{}), ValidationError);
}

TEST(DualRate, ResetFailureIsHarnessError) {
  const auto stage = stage_for("rs_01", 1);
  ResetFails bad;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, bad, nullptr, DualRateConfig{}, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(r.run.outcome.kind, OutcomeKind::harness_error);
  EXPECT_EQ(r.controller_calls, 0);
  ASSERT_TRUE(bad.ended);
  EXPECT_EQ(bad.ended->kind, OutcomeKind::harness_error);
}

TEST(DualRate, FreeRunningSmoke) {
  const auto stage = stage_for("rs_01", 8);
  DualRateConfig rates;
  rates.mode = ExecutionMode::free_running;
  rates.pace_wall_clock = false;
  ScriptedReasoner reasoner({{stage.task.prompt, label_directive("soda_logo")}});
  DirectiveFollower follower;
  const auto r = run_dual_rate(stage, Pose{{0, 0, 2}, 0}, follower, &reasoner, rates, WorldConfig{}, LabelAtlas{});
  EXPECT_EQ(r.controller_calls, r.run.outcome.ticks);
  EXPECT_GE(r.reasoner_calls.size(), 1u);
  std::int64_t last = -1;
  for (const auto& c : r.reasoner_calls) {
    EXPECT_EQ(c.tick % 5, 0);
    if (c.applied_tick >= 0) {
      EXPECT_GE(c.applied_tick, c.tick);
      EXPECT_GT(c.applied_tick, last);
      last = c.applied_tick;
    }
  }
  // Unpaced, the directive can land arbitrarily late; with the follower it still steers to the soda gate.
  if (r.run.outcome.kind != OutcomeKind::timeout) EXPECT_EQ(r.run.outcome.kind, OutcomeKind::passed_correct);
}

TEST(RandomPolicy, SuccessRateNearOneThird) {
  const auto bank = sample_task_bank();
  const auto track = build_track(bank, 100, 0);
  RandomGateController policy(derive_seed(0, "random_policy", 0));
  int success = 0;
  for (const auto& stage : track.stages) {
    Rng rng(derive_seed(0, "spawn", stage.stage_index));
    const auto r = run_dual_rate(stage, randomize_spawn(stage.spawn_region, rng), policy, nullptr, DualRateConfig{},
                                 WorldConfig{}, LabelAtlas{});
    ASSERT_TRUE(r.run.outcome.kind == OutcomeKind::passed_correct || r.run.outcome.kind == OutcomeKind::passed_wrong);
    // Every flight ends through the gate the policy chose.
    ASSERT_EQ(r.run.outcome.gate_id, stage.gates[policy.last_choice()].gate_id);
    success += r.run.outcome.success();
  }
  const double rate = success / 300.0;
  EXPECT_GE(rate, 0.25);
  EXPECT_LE(rate, 0.42);
}

TEST(RandomPolicy, FixedSeedFixesChoices) {
  const auto bank = sample_task_bank();
  const auto track = build_track(bank, 5, 1);
  auto choices = [&](std::uint64_t seed) {
    RandomGateController p(seed);
    std::vector<std::size_t> out;
    for (const auto& s : track.stages) {
      p.reset(stage_meta_for(s, Pose{{0, 0, 2}, 0}, WorldConfig{}));
      out.push_back(p.last_choice());
    }
    return out;
  };
  EXPECT_EQ(choices(11), choices(11));
  EXPECT_NE(choices(11), choices(12));
  const auto c = choices(11);
  EXPECT_GT(std::set<std::size_t>(c.begin(), c.end()).size(), 1u);
}

TEST(RandomPolicy, SingleOptionAlwaysSucceeds) {
  // A hand-built stage with one gate; banks reject K < 2, stages built directly do not.
  TrackStage stage;
  stage.task.task_id = "solo";
  stage.task.prompt = "go";
  stage.task.options = {{"only", "soda_logo"}};
  GateSpec g;
  g.gate_id = "s0_g0";
  g.center = {8, 0, 2};
  g.label_asset = "soda_logo";
  stage.gates = {g};
  stage.slots = {0};
  stage.spawn_region = {{0, 0, 2}, 1.0, 0.2, {8, 0, 2}};
  RandomGateController policy(5);
  for (int i = 0; i < 20; ++i) {
    Rng rng(i);
    const auto r = run_dual_rate(stage, randomize_spawn(stage.spawn_region, rng), policy, nullptr, DualRateConfig{},
                                 WorldConfig{}, LabelAtlas{});
    ASSERT_EQ(r.run.outcome.kind, OutcomeKind::passed_correct);
  }
}
