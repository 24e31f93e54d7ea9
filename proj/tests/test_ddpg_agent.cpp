#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gridadv/ddpg_agent.hpp"
#include "gridadv/error.hpp"
#include "support.hpp"

using namespace gridadv;

namespace {

const std::vector<Interval> kBounds = {{0.05, 2.0}, {0.05, 5.0}, {0.0, 3.141592653589793}};

DdpgAgent small_agent(std::uint64_t seed = 1, double gamma = 0.95) {
  DdpgConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.batch_size = 4;
  c.seed = seed;
  auto agent = make_agent(5, kBounds, c);
  agent.gamma = gamma;  // configs require gamma > 0; a myopic agent is still well defined
  return agent;
}

Transition random_transition(std::mt19937_64& rng, bool done) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Transition t;
  t.state.resize(5);
  t.next_state.resize(5);
  t.action.resize(3);
  for (auto& v : t.state) v = g(rng);
  for (auto& v : t.next_state) v = g(rng);
  for (auto& v : t.action) v = u(rng);
  t.reward = g(rng);
  t.done = done;
  return t;
}

void zero(Mlp& net) {
  for (auto& L : net.layers) {
    std::fill(L.weights.begin(), L.weights.end(), 0.0);
    std::fill(L.biases.begin(), L.biases.end(), 0.0);
  }
}

double max_param_diff(const Mlp& a, const Mlp& b) {
  double m = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t k = 0; k < a.layers[l].weights.size(); ++k) {
      m = std::max(m, std::abs(a.layers[l].weights[k] - b.layers[l].weights[k]));
    }
    for (std::size_t k = 0; k < a.layers[l].biases.size(); ++k) {
      m = std::max(m, std::abs(a.layers[l].biases[k] - b.layers[l].biases[k]));
    }
  }
  return m;
}

// Central differences of `f` over every parameter of `net`, compared to `analytic`.
template <typename F>
double fd_worst(Mlp& net, const MlpGradients& analytic, F&& f) {
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& p, double a) {
    const double saved = p;
    p = saved + h;
    const double up = f();
    p = saved - h;
    const double down = f();
    p = saved;
    const double n = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}));
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (std::size_t k = 0; k < net.layers[l].weights.size(); ++k) check(net.layers[l].weights[k], analytic.weights[l][k]);
    for (std::size_t k = 0; k < net.layers[l].biases.size(); ++k) check(net.layers[l].biases[k], analytic.biases[l][k]);
  }
  return worst;
}

}  // namespace

TEST_CASE("agent shapes") {
  DdpgConfig c;
  const auto agent = make_agent(19, kBounds, c);
  CHECK(agent.actor.layer_sizes == std::vector<std::size_t>{19, 64, 64, 3});
  CHECK(agent.critic.layer_sizes == std::vector<std::size_t>{22, 64, 64, 1});
  CHECK(agent.target_actor.layer_sizes == agent.actor.layer_sizes);
  CHECK(agent.target_critic.layer_sizes == agent.critic.layer_sizes);
  CHECK(agent.actor.output_activation() == Activation::Tanh);
  CHECK(agent.critic.output_activation() == Activation::Identity);

  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.gamma = 1.0;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("acting") {
  auto agent = small_agent();
  zero(agent.actor);
  const std::vector<double> s = {0.1, 0.2, 0.3, 0.4, 0.5};
  const auto a = act(agent, s, false);
  for (std::size_t d = 0; d < 3; ++d) CHECK(a[d] == doctest::Approx(kBounds[d].mid()));

  auto b = small_agent(3);
  CHECK(act(b, s, false) == act(b, s, false));
  CHECK(act(std::as_const(b), s) == act(b, s, false));

  b.exploration_sigma = 5.0;
  for (int i = 0; i < 500; ++i) {
    const auto x = act(b, s, true);
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(x[d] >= kBounds[d].low);
      CHECK(x[d] <= kBounds[d].high);
    }
  }
  CHECK_THROWS_AS(act(b, std::vector<double>{1.0}, false), DimensionError);

  const std::vector<double> u = {-0.3, 0.9, 0.0};
  const auto back = to_unit(b, to_native(b, u));
  for (std::size_t d = 0; d < 3; ++d) CHECK(back[d] == doctest::Approx(u[d]));
}

TEST_CASE("replay buffer") {
  std::mt19937_64 rng(1);
  ReplayBuffer buf(2, 7);
  CHECK_THROWS_AS(buf.sample(1), InsufficientDataError);
  auto t0 = random_transition(rng, false), t1 = random_transition(rng, false), t2 = random_transition(rng, true);
  buf.store(t0);
  buf.store(t1);
  buf.store(t2);
  CHECK(buf.size() == 2);
  CHECK(buf.at(0).reward == t1.reward);
  CHECK(buf.at(1).reward == t2.reward);
  CHECK_THROWS_AS(buf.sample(3), InsufficientDataError);

  ReplayBuffer a(10, 5), b(10, 5);
  for (int i = 0; i < 10; ++i) {
    auto t = random_transition(rng, false);
    a.store(t);
    b.store(t);
  }
  CHECK(a.sample_indices(8) == b.sample_indices(8));
}

TEST_CASE("replay sampling is uniform") {
  const std::size_t n = 100, draws = 100000;
  ReplayBuffer buf(n, 11);
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < n + 37; ++i) buf.store(random_transition(rng, false));  // wrapped ring
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t k = 0; k < draws / 50; ++k) {
    for (auto i : buf.sample_indices(50)) ++counts[i];
  }
  const double p = 1.0 / static_cast<double>(n);
  const double sd = std::sqrt(p * (1 - p) / static_cast<double>(draws));
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / draws - p) <= 5 * sd);
}

TEST_CASE("soft update") {
  auto target = init_mlp({1, 1}, {Activation::Identity}, 1);
  auto online = target;
  target.layers[0].weights = {0.0};
  online.layers[0].weights = {2.0};
  auto t = target;
  soft_update(t, online, 0.5);
  CHECK(t.layers[0].weights[0] == 1.0);
  t = target;
  soft_update(t, online, 0.0);
  CHECK(t.layers[0].weights[0] == 0.0);
  t = target;
  soft_update(t, online, 1.0);
  CHECK(t.layers[0].weights[0] == 2.0);

  auto a = small_agent(1), b = small_agent(2);
  double prev = max_param_diff(a.actor, b.actor);
  for (int i = 0; i < 50; ++i) {
    soft_update(a.actor, b.actor, 0.1);
    const double d = max_param_diff(a.actor, b.actor);
    CHECK(d <= prev);
    prev = d;
  }
  CHECK_THROWS_AS(soft_update(a.critic, a.actor, 0.5), DimensionError);
}

TEST_CASE("critic targets") {
  std::mt19937_64 rng(4);
  const auto agent = small_agent();
  for (int i = 0; i < 20; ++i) {
    const auto t = random_transition(rng, true);
    CHECK(critic_target(agent, t) == t.reward);
  }
  const auto myopic = small_agent(1, 0.0);
  for (int i = 0; i < 20; ++i) {
    const auto t = random_transition(rng, false);
    CHECK(critic_target(myopic, t) == t.reward);
  }
  auto shifted = small_agent();
  shifted.reward_shift = 2.0;
  shifted.reward_scale = 0.5;
  const auto t = random_transition(rng, true);
  CHECK(critic_target(shifted, t) == doctest::Approx(0.5 * (t.reward + 2.0)));
}

TEST_CASE("critic regresses a single terminal transition") {
  std::mt19937_64 rng(5);
  auto agent = small_agent();
  ReplayBuffer buf(1, 1);
  const auto t = random_transition(rng, true);
  buf.store(t);
  double err = 1.0;
  int steps = 0;
  for (; steps < 5000 && err > 1e-3; ++steps) {
    train_step(agent, buf, 1);
    err = std::abs(forward(agent.critic, [&] {
                     auto x = t.state;
                     x.insert(x.end(), t.action.begin(), t.action.end());
                     return x;
                   }())[0] - t.reward);
  }
  CHECK(err <= 1e-3);
  CHECK(steps <= 5000);
  CHECK_THROWS_AS(train_step(agent, buf, 2), InsufficientDataError);
}

TEST_CASE("actor and critic gradients agree with finite differences") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    auto agent = small_agent(100 + trial);
    // push target nets away from the online ones so bootstrapped targets matter
    agent.target_critic = init_mlp(agent.critic.layer_sizes,
                                   {Activation::Relu, Activation::Identity}, 900 + trial);
    std::vector<Transition> storage;
    for (int i = 0; i < 6; ++i) storage.push_back(random_transition(rng, i % 3 == 0));
    std::vector<const Transition*> batch;
    for (const auto& t : storage) batch.push_back(&t);

    const auto cg = critic_gradient(agent, batch);
    CHECK(fd_worst(agent.critic, cg, [&] {
            double loss = 0.0;
            critic_gradient(agent, batch, &loss);
            return 0.5 * loss;
          }) < 1e-4);

    const auto ag = actor_gradient(agent, batch);
    CHECK(fd_worst(agent.actor, ag, [&] {
            double obj = 0.0;
            actor_gradient(agent, batch, &obj);
            return -obj;
          }) < 1e-4);
  }
}

TEST_CASE("exploration schedule reaches the floor on the last episode") {
  DdpgConfig c;
  CHECK(exploration_schedule(c, 0, 100) == c.exploration_start);
  CHECK(exploration_schedule(c, 99, 100) == doctest::Approx(c.exploration_floor));
  CHECK(exploration_schedule(c, 50, 100) < c.exploration_start);
}

TEST_CASE("training loop") {
  auto factory = [] { return std::make_unique<testing::ToyEnv>(); };
  auto cfg = testing::toy_ddpg_config(3);
  const auto agent = make_agent(1, {{-1.0, 1.0}}, cfg);

  SUBCASE("zero episodes return the agent unchanged") {
    const auto r = train(agent, factory, 0, cfg);
    CHECK(r.curve.empty());
    CHECK_FALSE(r.best_agent.has_value());
    CHECK(r.agent.actor.layers[0].weights == agent.actor.layers[0].weights);
    CHECK(r.agent.episodes_trained == 0);
  }
  SUBCASE("fixed seed gives an identical learning curve") {
    const auto a = train(agent, factory, 30, cfg);
    const auto b = train(agent, factory, 30, cfg);
    REQUIRE(a.curve.size() == 30);
    for (std::size_t e = 0; e < 30; ++e) {
      CHECK(a.curve[e].episode_return == b.curve[e].episode_return);
      CHECK(a.curve[e].critic_loss == b.curve[e].critic_loss);
    }
    CHECK(a.curve.back().exploration_sigma == doctest::Approx(cfg.exploration_floor));
    REQUIRE(a.best_agent.has_value());
    CHECK(a.best_return == std::max_element(a.curve.begin(), a.curve.end(), [](auto& x, auto& y) {
                             return x.episode_return < y.episode_return;
                           })->episode_return);
    std::ostringstream csv;
    write_learning_curve(csv, a.curve);
    CHECK(csv.str().rfind("episode,return,discounted_return,critic_loss\n", 0) == 0);
  }
  SUBCASE("toy optimum is approached") {
    const auto r = train(agent, factory, 200, cfg);
    const double random_return = testing::ToyEnv::random_policy_return(0.3, 10, -1.0, 1.0);
    CHECK(std::abs(r.best_return) <= 0.05 * std::abs(random_return));
    // greedy policy after training
    CHECK(std::abs(act(r.agent, std::vector<double>{1.0})[0] - 0.3) < 0.1);
  }
}

TEST_CASE("agent checkpoint round trip") {
  auto agent = small_agent(9);
  agent.episodes_trained = 12;
  agent.reward_shift = 3.0;
  testing::TempDir dir("agent");
  save_agent(dir.path(), agent, "best_");
  const auto back = load_agent(dir.path(), "best_");
  CHECK(back.actor.layers[1].weights == agent.actor.layers[1].weights);
  CHECK(back.target_critic.layers[0].weights == agent.target_critic.layers[0].weights);
  CHECK(back.episodes_trained == 12);
  CHECK(back.gamma == agent.gamma);
  CHECK(back.reward_shift == 3.0);
  REQUIRE(back.action_bounds.size() == 3);
  CHECK(back.action_bounds[1].high == 5.0);
  const std::vector<double> s = {0.3, -0.1, 0.0, 1.0, 2.0};
  CHECK(act(back, s) == act(std::as_const(agent), s));
  CHECK_THROWS(load_agent(dir.path(), "missing_"));
}
