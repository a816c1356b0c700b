#include "oracles.hpp"
#include "toys.hpp"

#include <doctest.h>

using namespace rh::planning;
using toy::History;
using toy::TableModel;

namespace {

PlannerConfig config(std::size_t budget, std::size_t actions, double gamma = 0.9, BackupRule rule = BackupRule::robust) {
  return {gamma, budget, actions, rule};
}

double max_min_return(const std::vector<TableModel>& models, const History& seq, double gamma) {
  double worst = 1e300;
  for (const auto& m : models) worst = std::min(worst, toy::sequence_return(m, seq, gamma));
  return worst;
}

TableModel constant_rewards(std::size_t actions, std::size_t depth, double r) {
  TableModel m;
  std::vector<History> level{{}};
  for (std::size_t d = 0; d < depth; ++d) {
    std::vector<History> next;
    for (const auto& h : level)
      for (std::size_t a = 0; a < actions; ++a) {
        History c = h;
        c.push_back(a);
        m.reward[c] = r;
        next.push_back(c);
      }
    level = next;
  }
  return m;
}

}  // namespace

TEST_CASE("B and U values on hand-sized trees") {
  SUBCASE("all rewards 1 gives the geometric tail") {
    const std::vector<TableModel> models{constant_rewards(2, 10, 1.0)};
    OptimisticPlanner<TableModel> planner(models, {History{}}, config(5, 2));
    planner.run();
    CHECK(b_value(planner.root(), 0.9) == doctest::Approx(10.0));
  }
  SUBCASE("single model, rewards (1, 0)") {
    TableModel m;
    m.reward[{0}] = 1.0;
    m.reward[{0, 0}] = 0.0;
    const std::vector<TableModel> models{m};
    OptimisticPlanner<TableModel> planner(models, {History{}}, config(2, 1));
    planner.run();
    const auto& leaf = *planner.root().children[0]->children[0];
    CHECK(b_value(leaf, 0.9) == doctest::Approx(9.1));
    CHECK(u_value(leaf, 0.9) == doctest::Approx(1.0));
    CHECK(leaf.b == doctest::Approx(9.1));
  }
  SUBCASE("two models, rewards (1, 0) and (0, 1)") {
    TableModel m1, m2;
    m1.reward[{0}] = 1.0;
    m2.reward[{0, 0}] = 1.0;
    const std::vector<TableModel> models{m1, m2};
    OptimisticPlanner<TableModel> planner(models, {History{}, History{}}, config(2, 1));
    planner.run();
    const auto& leaf = *planner.root().children[0]->children[0];
    CHECK(b_value(leaf, 0.9) == doctest::Approx(9.0));
    CHECK(u_value(leaf, 0.9) == doctest::Approx(0.9));
  }
  SUBCASE("all rewards 0") {
    const std::vector<TableModel> models{constant_rewards(3, 4, 0.0)};
    OptimisticPlanner<TableModel> planner(models, {History{}}, config(20, 3));
    planner.run();
    CHECK(u_value(planner.root(), 0.9) == 0.0);
  }
}

TEST_CASE("leaf selection") {
  TableModel m;
  m.reward[{0}] = 1.0;  // B = 1 + 9 = 10 · 0.9 … compare with the empty branch
  m.reward[{1}] = 0.9;
  const std::vector<TableModel> models{m};
  OptimisticPlanner<TableModel> planner(models, {History{}}, config(10, 2));
  CHECK(&planner.select_leaf() == &planner.root());
  planner.expand(planner.select_leaf());
  CHECK(planner.select_leaf().path == History{0});

  TableModel flat;
  const std::vector<TableModel> flats{flat};
  OptimisticPlanner<TableModel> tie(flats, {History{}}, config(10, 3));
  tie.expand(tie.select_leaf());
  CHECK(tie.select_leaf().path == History{0});
}

TEST_CASE("expansion arity and simulation count") {
  struct Counting {
    using State = int;
    mutable int calls = 0;
    Transition<int> step(int s, std::size_t) const {
      ++calls;
      return {s + 1, 0.5};
    }
  };
  const std::vector<Counting> models(2);
  OptimisticPlanner<Counting> planner(models, {0, 0}, config(7, 4));
  planner.run();
  CHECK(planner.root().children.size() == 4);
  for (const auto& c : planner.root().children) CHECK(c->depth() == 1);
  CHECK(models[0].calls + models[1].calls == 2 * 4 * 7);
  CHECK(planner.node_count() == 7 * 4 + 1);
  CHECK_THROWS_AS(planner.select_leaf(), BudgetExhausted);
}

TEST_CASE("reward outside [0, 1] is a contract violation") {
  TableModel m;
  m.reward[{1}] = 1.5;
  const std::vector<TableModel> models{m};
  OptimisticPlanner<TableModel> planner(models, {History{}}, config(3, 2));
  CHECK_THROWS_AS(planner.run(), rh::ContractViolation);
}

TEST_CASE("simulator failures carry the node path") {
  struct Failing {
    using State = int;
    Transition<int> step(int s, std::size_t a) const {
      if (s == 1 && a == 1) throw std::runtime_error("boom");
      return {s + 1, 0.0};
    }
  };
  const std::vector<Failing> models(1);
  OptimisticPlanner<Failing> planner(models, {0}, config(5, 2));
  try {
    planner.run();
    FAIL("expected a simulation error");
  } catch (const SimulationError& e) {
    CHECK(e.path == std::vector<std::size_t>{0, 1});
  }
}

TEST_CASE("ordering invariants along the run") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<TableModel> models{toy::random_table(2, 6, rng), toy::random_table(2, 6, rng)};
    OptimisticPlanner<TableModel> planner(models, {History{}, History{}}, config(150, 2));
    double last_u = -1.0, last_b = 1e300;
    while (planner.expansions() < planner.config().budget) {
      planner.expand(planner.select_leaf());
      const auto& r = planner.root();
      CHECK(r.u <= r.b + 1e-12);
      CHECK(r.u >= last_u - 1e-12);
      CHECK(r.b <= last_b + 1e-12);
      CHECK(r.b == doctest::Approx(b_value(r, 0.9)));
      CHECK(r.u == doctest::Approx(u_value(r, 0.9)));
      last_u = r.u;
      last_b = r.b;
      // Gap bound along the max-B path.
      const PlanNode<History>* n = &r;
      while (n->expanded) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < n->children.size(); ++a)
          if (n->children[a]->b > n->children[best]->b) best = a;
        n = n->children[best].get();
      }
      CHECK(r.b - r.u <= tail_bound(0.9, n->depth()) + 1e-12);
    }
  }
}

TEST_CASE("recommendation matches exhaustive max-min enumeration") {
  // The gap condition γ^depth / (1 - γ) is only satisfiable for small γ.
  const double gamma = 0.5;
  std::mt19937_64 rng(9);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t actions = 2 + trial % 2, depth = 3 + trial % 2, m_count = 1 + trial % 2;
    std::vector<TableModel> models;
    for (std::size_t m = 0; m < m_count; ++m) models.push_back(toy::random_table(actions, depth, rng));
    const auto best = oracle::enumerate(actions, depth, [&](const History& s) { return max_min_return(models, s, gamma); });
    // Second best first action, for the optimality-gap condition.
    double runner_up = -1.0;
    for (std::size_t a = 0; a < actions; ++a) {
      if (a == best.first_action) continue;
      const auto sub = oracle::enumerate(actions, depth - 1, [&](const History& s) {
        History full{a};
        full.insert(full.end(), s.begin(), s.end());
        return max_min_return(models, full, gamma);
      });
      runner_up = std::max(runner_up, sub.value);
    }
    if (best.value - runner_up <= tail_bound(gamma, depth)) continue;
    ++compared;
    std::size_t nodes = 1, width = 1;
    for (std::size_t d = 0; d < depth; ++d) nodes += (width *= actions);
    const std::vector<History> roots(m_count);
    const auto res = plan<TableModel>(models, roots, config(nodes + 20, actions, gamma));
    CHECK(res.recommended_action == best.first_action);
  }
  CHECK(compared >= 20);
}

TEST_CASE("depth-3 binary toy with a dominant branch") {
  TableModel m;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c) {
        m.reward[{a}] = 0.5;
        m.reward[{a, b}] = 0.5;
        m.reward[{a, b, c}] = (a == 1 && b == 0 && c == 1) ? 1.0 : 0.2;
      }
  const std::vector<TableModel> models{m};
  const auto best = oracle::enumerate(2, 3, [&](const History& s) { return toy::sequence_return(m, s, 0.9); });
  REQUIRE(best.first_action == 1);
  for (std::size_t k = 15; k <= 40; ++k) CHECK(plan<TableModel>(models, {History{}}, config(k, 2)).recommended_action == 1);
}

TEST_CASE("single expansion recommends by U") {
  TableModel m;
  m.reward[{0}] = 0.2;
  m.reward[{1}] = 0.7;
  m.reward[{2}] = 0.7;
  const auto res = plan<TableModel>(std::vector<TableModel>{m}, {History{}}, config(1, 3));
  CHECK(res.recommended_action == 1);
  CHECK(res.expansions_used == 1);
}

TEST_CASE("naive backup is not max-min") {
  // Search small two-model reward tables for an instance separating the rules.
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 4);
  bool found = false;
  for (int trial = 0; trial < 20000 && !found; ++trial) {
    std::vector<TableModel> models(2);
    for (auto& m : models)
      for (std::size_t a = 0; a < 2; ++a) {
        m.reward[{a}] = level(rng) / 4.0;
        for (std::size_t b = 0; b < 2; ++b) m.reward[{a, b}] = level(rng) / 4.0;
      }
    const auto best = oracle::enumerate(2, 2, [&](const History& s) { return max_min_return(models, s, 0.9); });
    double second = -1.0;
    for (std::size_t b = 0; b < 2; ++b) second = std::max(second, max_min_return(models, {1 - best.first_action, b}, 0.9));
    if (best.value - second < 0.05) continue;
    const std::vector<History> roots(2);
    const auto robust = plan<TableModel>(models, roots, config(3, 2));
    const auto naive = plan<TableModel>(models, roots, config(3, 2, 0.9, BackupRule::naive));
    if (robust.recommended_action == best.first_action && naive.recommended_action != best.first_action) found = true;
  }
  CHECK(found);
}

TEST_CASE("single-model robust planner equals plain OPD") {
  // Plain OPD reference: B = return + tail at leaves, max at inner nodes.
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = toy::random_table(3, 5, rng);
    const std::vector<TableModel> models{m};
    OptimisticPlanner<TableModel> planner(models, {History{}}, config(60, 3));
    // Independent OPD over explicit leaf list.
    struct Leaf {
      History path;
      double ret;
    };
    std::vector<Leaf> leaves{{{}, 0.0}};
    for (int k = 0; k < 60; ++k) {
      std::size_t pick = 0;
      double best_b = -1.0;
      // Ties: lexicographically smallest path, as the tree descent does.
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        const double b = leaves[i].ret + tail_bound(0.9, leaves[i].path.size());
        if (b > best_b + 1e-12 || (std::abs(b - best_b) <= 1e-12 && leaves[i].path < leaves[pick].path)) {
          best_b = b;
          pick = i;
        }
      }
      const Leaf parent = leaves[pick];
      leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
      const double discount = std::pow(0.9, static_cast<double>(parent.path.size()));
      for (std::size_t a = 0; a < 3; ++a) {
        const auto tr = m.step(parent.path, a);
        leaves.push_back({tr.next, parent.ret + discount * tr.reward});
      }
      planner.expand(planner.select_leaf());
      if (k + 1 == 60) break;
      CHECK(planner.select_leaf().path == [&] {
        std::size_t p = 0;
        double bb = -1.0;
        for (std::size_t i = 0; i < leaves.size(); ++i) {
          const double b = leaves[i].ret + tail_bound(0.9, leaves[i].path.size());
          if (b > bb + 1e-12 || (std::abs(b - bb) <= 1e-12 && leaves[i].path < leaves[p].path)) {
            bb = b;
            p = i;
          }
        }
        return leaves[p].path;
      }());
    }
  }
}

TEST_CASE("terminal transitions drop the tail") {
  struct Absorbing {
    using State = int;
    Transition<int> step(int s, std::size_t a) const {
      if (s < 0 || a == 0) return {-1, 0.0, true};
      return {s + 1, 0.1};
    }
  };
  const std::vector<Absorbing> models(1);
  OptimisticPlanner<Absorbing> planner(models, {0}, config(10, 2));
  const auto res = planner.run();
  CHECK(res.recommended_action == 1);
  CHECK(planner.root().children[0]->b == 0.0);
}

TEST_CASE("surrogate value") {
  const std::vector<TableModel> models{constant_rewards(2, 8, 1.0)};
  const std::vector<History> roots(1);
  const std::vector<std::size_t> seq(8, 0);
  CHECK(surrogate_value<TableModel>(seq, models, roots, 0.9, 8) == doctest::Approx((1 - std::pow(0.9, 8)) / 0.1));
  CHECK_THROWS_AS(surrogate_value<TableModel>(seq, models, roots, 0.9, 0), rh::ConfigError);
}

TEST_CASE("run is deterministic") {
  std::mt19937_64 rng(77);
  const std::vector<TableModel> models{toy::random_table(3, 4, rng), toy::random_table(3, 4, rng)};
  const std::vector<History> roots(2);
  const auto a = plan<TableModel>(models, roots, config(40, 3));
  const auto b = plan<TableModel>(models, roots, config(40, 3));
  CHECK(a.recommended_action == b.recommended_action);
  CHECK(a.root_b_value == b.root_b_value);
  CHECK(a.root_u_value == b.root_u_value);
  CHECK(a.tree_depth == b.tree_depth);
}
