#include "doctest.h"

#include "helpers.hpp"
#include "rgm/agent.hpp"
#include "rgm/instances.hpp"
#include "rgm/oracle.hpp"

using namespace rgm;

namespace {

Transition dummy(int action) {
  Transition t;
  t.state = {0, 0, 0, 0};
  t.next = {0, 0, 0, 0};
  t.action = action;
  return t;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.d = 8;
  c.dh = 8;
  c.T = 2;
  c.batchSize = 8;
  c.learnStart = 8;
  c.lr = 1e-3;
  c.epsDecayEpisodes = 50;
  c.rngSeed = seed;
  return c;
}

std::vector<TrainInstance> one_instance(int n, std::uint64_t seed) {
  return {TrainInstance{std::make_shared<const AffinityMatrix>(testing::random_affinity(n, n, seed)), std::nullopt, "a"}};
}

}  // namespace

TEST_CASE("replay push, eviction and max-priority rule") {
  ReplayMemory mem(2, 0.6);
  mem.push(dummy(0));
  CHECK(mem.size() == 1);
  CHECK(mem.at(0).priority == 1.0);
  mem.push(dummy(1));
  mem.push(dummy(2));
  CHECK(mem.size() == 2);
  CHECK(mem.at(0).action == 2);
  CHECK(mem.at(1).action == 1);

  mem.update_priority(1, mem.serial(1), 5.0 - ReplayMemory::kPriorityFloor);
  CHECK(mem.at(1).priority == doctest::Approx(5.0).epsilon(1e-15));
  mem.push(dummy(3));
  CHECK(mem.at(1).action == 3);
  CHECK(mem.at(1).priority == mem.max_priority());
  CHECK(mem.max_priority() == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("priority updates") {
  ReplayMemory mem(4, 1.0);
  mem.push(dummy(0));
  mem.update_priority(0, mem.serial(0), 0.0);
  CHECK(mem.at(0).priority == 1e-3);
  mem.update_priority(0, mem.serial(0), -2.0);
  CHECK(mem.at(0).priority == 2.001);

  ReplayMemory ring(1, 1.0);
  ring.push(dummy(0));
  const auto stale = ring.serial(0);
  ring.push(dummy(1));
  ring.update_priority(0, stale, 10.0);
  CHECK(ring.at(0).priority == 1.0);

  Rng rng(1);
  CHECK_THROWS_AS(ReplayMemory(3, 0.6).sample(1, rng), ContractViolation);
}

TEST_CASE("replay sampling distribution") {
  for (double alpha : {1.0, 0.0}) {
    ReplayMemory mem(2, alpha);
    mem.push(dummy(0));
    mem.push(dummy(1));
    mem.update_priority(0, mem.serial(0), 1.0 - 1e-3);
    mem.update_priority(1, mem.serial(1), 3.0 - 1e-3);
    const double expect = alpha == 1.0 ? 0.75 : 0.5;
    CHECK(mem.probability(1) == doctest::Approx(expect).epsilon(1e-12));
    Rng rng(2);
    int hits = 0;
    for (const auto& s : mem.sample(100000, rng)) hits += s.slot == 1;
    const double freq = hits / 100000.0;
    CHECK(freq >= expect - 0.01);
    CHECK(freq <= expect + 0.01);
  }

  ReplayMemory mem(3, 1.0);
  for (int i = 0; i < 3; ++i) mem.push(dummy(i));
  mem.update_priority(2, mem.serial(2), 8.0 - 1e-3);
  Rng rng(3);
  int hits = 0;
  for (const auto& s : mem.sample(50000, rng)) hits += s.slot == 2;
  CHECK(hits / 50000.0 == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("replay serialization round trip") {
  ReplayMemory mem(3, 0.7);
  for (int i = 0; i < 5; ++i) mem.push(dummy(i));
  mem.update_priority(1, mem.serial(1), 0.25);
  const ReplayMemory back = ReplayMemory::deserialize(mem.serialize());
  CHECK(back.serialize() == mem.serialize());
  Rng a(4), b(4);
  const auto sa = mem.sample(20, a), sb = back.sample(20, b);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].slot == sb[i].slot);
}

TEST_CASE("epsilon schedule") {
  TrainConfig c;
  CHECK(c.epsilon(0) == 1.0);
  CHECK(c.epsilon(10000) == doctest::Approx(0.51).epsilon(1e-12));
  CHECK(c.epsilon(20000) == 0.02);
  CHECK(c.epsilon(50000) == 0.02);
  CHECK(c.epsilon(1) < c.epsilon(0));
  c.epsEnd = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("action selection") {
  auto k = std::make_shared<const AffinityMatrix>(testing::random_affinity(3, 3, 5));
  EnvConfig rev;
  rev.revocable = true;
  InstanceContext ctx(k, rev, H4Variant::PerEdge, true);

  SUBCASE("greedy picks the unique maximum") {
    QNetParams th = init_params(1, 1, 0).zeros_like();
    th.theta1[0] = 1.0;
    th.theta6(0, 0) = 1.0;
    th.theta8[0] = 1.0;
    EnvState s = ctx.env().reset();
    s = ctx.env().step(s, 7).state;
    Rng rng(1);
    CHECK(select_action(ctx, s, th, 0.0, SelectMode::Train, rng) == 7);
    CHECK(select_action(ctx, s, th, 1.0, SelectMode::Infer, rng) == 7);
  }

  SUBCASE("epsilon one is uniform over the legal set") {
    const QNetParams th = init_params(4, 1, 1);
    Rng rng(2);
    std::vector<int> counts(9, 0);
    const EnvState s = ctx.env().reset();
    for (int i = 0; i < 10000; ++i) counts[select_action(ctx, s, th, 1.0, SelectMode::Train, rng)]++;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 10000.0 / 9) * (c - 10000.0 / 9) / (10000.0 / 9);
    // 8 degrees of freedom: the 0.99 quantile is 20.09.
    CHECK(chi2 < 20.09);
  }

  SUBCASE("basic mode only returns available vertices") {
    InstanceContext basic(k, EnvConfig{}, H4Variant::PerEdge, true);
    const QNetParams th = init_params(4, 2, 3);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      EnvState s = basic.env().reset();
      while (!s.done) {
        const int a = select_action(basic, s, th, 0.5, SelectMode::Train, rng);
        CHECK(s.solution.available(a));
        s = basic.env().step(s, a).state;
      }
      CHECK(select_action(basic, s, th, 0.5, SelectMode::Train, rng) == -1);
    }
  }
}

TEST_CASE("double DQN targets") {
  const Eigen::VectorXd online = (Eigen::VectorXd(2) << 0.2, 0.9).finished();
  const Eigen::VectorXd target = (Eigen::VectorXd(2) << 3.0, 0.5).finished();
  const std::vector<int> both{0, 1};
  CHECK(double_dqn_target(2.0, true, 0.9, online, target, both, true) == 2.0);
  CHECK(double_dqn_target(1.0, false, 0.0, online, target, both, true) == 1.0);
  CHECK(double_dqn_target(1.0, false, 0.9, online, target, both, true) == doctest::Approx(1.45).epsilon(1e-15));
  CHECK(double_dqn_target(1.0, false, 0.9, online, target, both, false) == doctest::Approx(3.7).epsilon(1e-15));
  CHECK(double_dqn_target(1.0, false, 0.9, online, target, {0}, true) == doctest::Approx(3.7).epsilon(1e-15));
}

TEST_CASE("TD batch loss and gradient") {
  auto k = std::make_shared<const AffinityMatrix>(testing::random_affinity(3, 3, 6));
  EnvConfig cfg;
  std::vector<InstanceContext> ctxs;
  ctxs.emplace_back(k, cfg, H4Variant::PerEdge, true);
  const QNetParams th = init_params(6, 2, 4);
  Rng rng(5);
  std::vector<Transition> ts;
  for (int i = 0; i < 6; ++i) {
    EnvState s = ctxs[0].env().reset();
    const auto legal = ctxs[0].env().legal_actions(s);
    const int a = legal[rng.below(legal.size())];
    const StepResult r = ctxs[0].env().step(s, a);
    Transition t;
    t.state = std::vector<std::uint8_t>(9, 0);
    t.next = std::vector<std::uint8_t>(9, 0);
    for (int p : r.state.solution.selected()) t.next[p] = 1;
    t.action = a;
    t.reward = r.reward;
    t.done = r.state.done;
    ts.push_back(t);
  }
  std::vector<const Transition*> batch;
  for (const auto& t : ts) batch.push_back(&t);

  const TdBatchResult g0 = td_batch(batch, ctxs, th, th, 0.0, true);
  double mse = 0.0;
  for (const auto& t : ts) {
    const double q = q_values(ctxs[0].input_for(t.state), th)[t.action];
    mse += (t.reward - q) * (t.reward - q) / ts.size();
  }
  CHECK(g0.loss == doctest::Approx(mse).epsilon(1e-12));
  CHECK(g0.loss >= 0.0);

  // Gradient of the loss with the targets held fixed.
  const TdBatchResult g = td_batch(batch, ctxs, th, th, 0.9, true);
  QNetParams probe = th;
  const double h = 1e-6;
  auto loss_at = [&](const QNetParams& p) {
    double l = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double q = q_values(ctxs[0].input_for(ts[i].state), p)[ts[i].action];
      l += (g.targets[static_cast<Eigen::Index>(i)] - q) * (g.targets[static_cast<Eigen::Index>(i)] - q) / ts.size();
    }
    return l;
  };
  probe.theta7[2] += h;
  const double up = loss_at(probe);
  probe.theta7[2] -= 2 * h;
  const double down = loss_at(probe);
  CHECK(g.grads.theta7[2] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
}

TEST_CASE("training loop contracts") {
  EnvConfig env;
  TrainConfig none = small_config(3);
  none.episodes = 0;
  const TrainResult r0 = train(one_instance(3, 1), none, env);
  CHECK(r0.log.empty());
  CHECK(r0.params == init_params(8, 2, mix_seed(3, 1), 8));

  TrainConfig c = small_config(4);
  c.episodes = 30;
  const TrainResult a = train(one_instance(3, 1), c, env);
  const TrainResult b = train(one_instance(3, 1), c, env);
  REQUIRE(a.log.size() == 30);
  CHECK(a.params == b.params);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(episode_log_csv_row(a.log[i]) == episode_log_csv_row(b.log[i]));
  CHECK_FALSE(a.params == r0.params);

  CHECK_THROWS_AS(Trainer({}, c, env), ConfigError);
}

TEST_CASE("target network only changes at syncs") {
  EnvConfig env;
  TrainConfig c = small_config(5);
  c.targetSyncEvery = 1000000;
  Trainer never(one_instance(3, 2), c, env);
  const QNetParams initial = never.params();
  never.run(20);
  CHECK(never.target_params() == initial);
  CHECK_FALSE(never.params() == initial);

  c.targetSyncEvery = 1;
  Trainer always(one_instance(3, 2), c, env);
  always.run(20);
  CHECK(always.target_params() == always.params());
}

TEST_CASE("resume continues bit-exactly") {
  EnvConfig env;
  env.revocable = true;
  TrainConfig c = small_config(6);
  Trainer straight(one_instance(3, 3), c, env);
  std::vector<std::string> log_a;
  straight.run(12, [&](const EpisodeLog& e) { log_a.push_back(episode_log_csv_row(e)); });

  Trainer first(one_instance(3, 3), c, env);
  std::vector<std::string> log_b;
  first.run(5, [&](const EpisodeLog& e) { log_b.push_back(episode_log_csv_row(e)); });
  const std::string ckpt = save_checkpoint_string(first.params());
  const std::string state = first.save_state();

  Trainer second(one_instance(3, 3), c, env);
  second.load_state(load_checkpoint_string(ckpt), state);
  second.run(12, [&](const EpisodeLog& e) { log_b.push_back(episode_log_csv_row(e)); });
  CHECK(log_a == log_b);
  CHECK(second.params() == straight.params());
  CHECK(second.target_params() == straight.target_params());
  CHECK(second.memory().serialize() == straight.memory().serialize());
  CHECK(second.save_state() == straight.save_state());
}

TEST_CASE("solve contracts") {
  SyntheticSpec spec;
  spec.nInliers = 5;
  spec.nOutliers1 = spec.nOutliers2 = 2;
  spec.rngSeed = 8;
  const SyntheticInstance inst = gen_synthetic(spec);
  const QNetParams th = init_params(8, 2, 9);

  EnvConfig counted;
  counted.revocable = true;
  counted.inlierCount = 4;
  const MatchResult r = solve(inst.k, th, counted);
  CHECK(r.solution.size() == 4);
  CHECK(r.rawScore == objective_score(inst.k, r.solution));

  EnvConfig seeded;
  for (auto [i, a] : inst.gt.pairs()) seeded.seeds.emplace_back(i, a);
  seeded.inlierCount = 5;
  const MatchResult s = solve(inst.k, th, seeded);
  CHECK(s.solution == inst.gt);
  CHECK(f1_metrics(s.solution, inst.gt).f1 == 1.0);

  EnvConfig open;
  open.revocable = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MatchResult m = solve(inst.k, init_params(8, 2, seed), open);
    CHECK(m.solution.size() >= 1);
    CHECK(m.solution.size() <= 7);
  }
}

TEST_CASE("overfitting a single 3x3 instance reaches the brute-force optimum") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(9, 9, 0.1);
  for (int i = 0; i < 3; ++i) m(i * 3 + i, i * 3 + i) = 1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) m(i * 3 + i, j * 3 + j) = 0.8;
  auto k = std::make_shared<const AffinityMatrix>(3, 3, m);
  const BruteForceResult best = brute_force(*k, 3);

  TrainConfig c = small_config(10);
  c.episodes = 2000;
  c.epsDecayEpisodes = 1000;
  c.lr = 1e-3;
  EnvConfig env;
  const TrainResult r = train({TrainInstance{k, std::nullopt, "diag"}}, c, env);
  const MatchResult out = solve(*k, r.params, env);
  CHECK(out.solution == best.best);
  CHECK(out.rawScore == doctest::Approx(best.score).epsilon(1e-12));
}

TEST_CASE("training episodes stop at the inlier count") {
  std::vector<TrainInstance> data;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SyntheticSpec spec;
    spec.nInliers = 10;
    spec.nOutliers1 = spec.nOutliers2 = 3;
    spec.rngSeed = seed;
    SyntheticInstance inst = gen_synthetic(spec);
    data.push_back({std::make_shared<const AffinityMatrix>(inst.k), inst.gt, "s"});
  }
  EnvConfig env;
  env.inlierCount = 10;
  TrainConfig c = small_config(12);
  c.episodes = 20;
  for (const auto& e : train(data, c, env).log) {
    CHECK(e.solutionSize == 10);
    CHECK(e.steps == 10);
  }
}
