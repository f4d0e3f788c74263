#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "comcts/engine.hpp"
#include "comcts/scripted_backend.hpp"
#include "fakes.hpp"
#include "generators.hpp"

using namespace comcts;

namespace {

Ensemble ensemble_of(std::initializer_list<std::shared_ptr<const PolicyBackend>> models) {
  return Ensemble(models);
}

// Straight from the UCB formula, written out independently of the library.
double brute_ucb(const ReasoningTree& tree, NodeId id, double c) {
  const auto& n = tree[id];
  const double np = static_cast<double>(tree[*n.parent_id].visits_n);
  const double explore = np > 0.0 ? c * std::sqrt(std::log(np) / (1.0 + static_cast<double>(n.visits_n))) : 0.0;
  return n.value_v + explore;
}

std::optional<NodeId> brute_select(const ReasoningTree& tree, const std::vector<NodeId>& latest, double c) {
  std::vector<NodeId> pool;
  for (NodeId n : latest)
    if (!tree[n].pruned && !tree[n].is_terminal) pool.push_back(n);
  if (pool.empty()) {
    for (const auto& node : tree.nodes()) {
      if (node.pruned || node.is_terminal) continue;
      bool has_live_child = false;
      for (NodeId k : node.child_ids) has_live_child |= !tree[k].pruned;
      if (!has_live_child) pool.push_back(node.id);
    }
    for (NodeId n : pool)
      if (n == 0) return 0;
  }
  std::optional<NodeId> best;
  double best_u = -INFINITY;
  for (NodeId n : pool) {
    const double u = brute_ucb(tree, n, c);
    if (u > best_u || (u == best_u && best && n < *best)) {
      best = n;
      best_u = u;
    }
  }
  return best;
}

std::shared_ptr<TaskBook> book_of(const SyntheticTask& task) {
  auto book = std::make_shared<TaskBook>();
  book->add(task);
  return book;
}

SimProfile knows(const std::string& topic, double noise = 0.0, std::uint64_t seed = 1) {
  SimProfile p;
  p.knowledge_topics = {topic};
  p.eval_noise = noise;
  p.rng_seed = seed;
  return p;
}

}  // namespace

TEST_CASE("search defaults") {
  SearchConfig c;
  CHECK(c.max_iterations == 20);
  CHECK(c.threshold_t == 0.0);
  CHECK(c.candidates_per_model == 1);
  CHECK(c.exploration_c == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("expand attaches one chain per model under the start node") {
  ReasoningTree tree(gen::question(), "C");
  const auto a = fake::canned("a", {{"a1", false}, {"a2", false}, {"C", true}});
  const auto b = fake::canned("b", {{"b1", false}, {"b2", false}, {"D", true}});
  const auto chains = expand(tree, 0, ensemble_of({a, b}), SearchConfig{});
  REQUIRE(chains.size() == 2);
  CHECK(chains[0].size() == 3);
  CHECK(chains[1].size() == 3);
  CHECK(tree.size() == 7);
  CHECK(tree[0].child_ids == std::vector<NodeId>{chains[0][0], chains[1][0]});
  CHECK(tree[chains[0][1]].parent_id == chains[0][0]);
  CHECK(tree[chains[1][2]].is_terminal);
  CHECK(tree[chains[1][2]].origin_model == "b");

  CHECK_THROWS_WITH_AS(expand(tree, chains[0][2], ensemble_of({a}), SearchConfig{}),
                       "cannot expand terminal node", PreconditionError);
}

TEST_CASE("expand survives failing models") {
  ReasoningTree tree(gen::question(), "C");
  auto a = fake::canned("a", {{"C", true}});
  auto b = fake::canned("b");
  b->fail_generation = true;
  IterationTelemetry tel;
  std::vector<std::string> warnings;
  auto chains = expand(tree, 0, ensemble_of({a, b}), SearchConfig{}, &tel, &warnings);
  CHECK(chains.size() == 1);
  CHECK(tel.generation_failures == 1);
  CHECK_FALSE(warnings.empty());
  a->fail_generation = true;
  chains = expand(tree, 0, ensemble_of({a, b}), SearchConfig{}, &tel, &warnings);
  CHECK(chains.empty());
}

TEST_CASE("collective score is the mean vote") {
  ReasoningTree tree(gen::question(), "x");
  const auto n = tree.add_child(0, "s", "m1", false);
  std::vector<std::shared_ptr<fake::Canned>> m;
  const double votes[] = {1, -1, 1, 1};
  Ensemble ens;
  for (int i = 0; i < 4; ++i) {
    m.push_back(fake::canned("m" + std::to_string(i)));
    m.back()->default_vote = votes[i];
    ens.push_back(m.back());
  }
  const std::vector<Chain> chains{{n}};
  const auto kept = simulate_and_prune(tree, chains, ens, SearchConfig{});
  CHECK(tree[n].score_r == 0.5);
  CHECK(kept == std::vector<NodeId>{n});
}

TEST_CASE("zero score is kept at t = 0") {
  ReasoningTree tree(gen::question(), "x");
  const auto n = tree.add_child(0, "s", "m", false);
  auto a = fake::canned("a");
  auto b = fake::canned("b");
  b->default_vote = -1.0;
  const std::vector<Chain> chains{{n}};
  CHECK(simulate_and_prune(tree, chains, ensemble_of({a, b}), SearchConfig{}) ==
        std::vector<NodeId>{n});
  CHECK(tree[n].score_r == 0.0);
  CHECK_FALSE(tree[n].pruned);

  ReasoningTree strict(gen::question(), "x");
  const auto m = strict.add_child(0, "s", "m", false);
  SearchConfig c;
  c.threshold_t = 1e-12;
  const std::vector<Chain> one{{m}};
  CHECK(simulate_and_prune(strict, one, ensemble_of({a, b}), c).empty());
  CHECK(strict[m].pruned);
}

TEST_CASE("a low node prunes the rest of its chain") {
  ReasoningTree tree(gen::question(), "x");
  const auto s1 = tree.add_child(0, "s1", "m", false);
  const auto s2 = tree.add_child(s1, "s2", "m", false);
  const auto s3 = tree.add_child(s2, "s3", "m", true);
  auto a = fake::canned("a");
  a->votes = {{"s1", 0.5}, {"s2", -0.2}, {"s3", 0.7}};
  const std::vector<Chain> chains{{s1, s2, s3}};
  IterationTelemetry tel;
  const auto kept = simulate_and_prune(tree, chains, ensemble_of({a}), SearchConfig{}, &tel);
  CHECK(kept == std::vector<NodeId>{s1});
  CHECK(tree[s2].pruned);
  CHECK(tree[s3].pruned);
  CHECK(tree[s3].score_r == 0.7);
  CHECK(tel.nodes_pruned == 2);
}

TEST_CASE("failed votes shrink the denominator") {
  ReasoningTree tree(gen::question(), "x");
  const auto n = tree.add_child(0, "s", "m", false);
  const auto lone = tree.add_child(0, "t", "m", false);
  auto a = fake::canned("a");
  auto b = fake::canned("b");
  auto c = fake::canned("c");
  b->default_vote = std::nullopt;
  c->default_vote = 0.0;
  a->votes = {{"t", std::nullopt}};
  c->votes = {{"t", std::nullopt}};
  const std::vector<Chain> chains{{n}, {lone}};
  IterationTelemetry tel;
  const auto kept = simulate_and_prune(tree, chains, ensemble_of({a, b, c}), SearchConfig{}, &tel);
  CHECK(tree[n].score_r == 0.5);
  CHECK_FALSE(tree[lone].score_r.has_value());
  CHECK(tree[lone].pruned);
  CHECK(kept == std::vector<NodeId>{n});
  CHECK(tel.vote_failures == 4);
}

TEST_CASE("backpropagation examples") {
  ReasoningTree tree(gen::question(), "x");
  const auto p = tree.add_child(0, "p", "m", false);
  tree.set_statistics(p, 0.6, 2);
  const auto c1 = tree.add_child(p, "c1", "m", false);
  const auto c2 = tree.add_child(p, "c2", "m", false);
  tree.set_score(c1, 0.8);
  tree.set_score(c2, 0.4);
  const std::vector<NodeId> kept{c1, c2};
  backpropagate(tree, kept);
  CHECK(tree[p].value_v == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(tree[p].visits_n == 4);
  CHECK(tree[0].visits_n == 0);  // no new children of the root

  ReasoningTree fresh(gen::question(), "x");
  const auto only = fresh.add_child(0, "s", "m", false);
  fresh.set_score(only, 1.0);
  const std::vector<NodeId> one{only};
  backpropagate(fresh, one);
  CHECK(fresh[0].value_v == 1.0);
  CHECK(fresh[0].visits_n == 1);

  backpropagate(fresh, std::vector<NodeId>{});
  CHECK(fresh[0].visits_n == 1);
}

TEST_CASE("value times visits equals the accumulated child scores") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    ReasoningTree tree(gen::question(), "x");
    std::map<NodeId, double> ledger;
    for (int round = 0; round < 15; ++round) {
      std::vector<NodeId> fresh;
      const auto batch = 1 + rng() % 5;
      for (std::size_t i = 0; i < batch; ++i) {
        const NodeId parent = rng() % tree.size();
        const auto n = tree.add_child(parent, "s", "m", false);
        tree.set_score(n, score(rng));
        if (rng() % 4 != 0) {
          fresh.push_back(n);
          ledger[parent] += *tree[n].score_r;
        }
      }
      backpropagate(tree, fresh);
      for (const auto& node : tree.nodes()) {
        const double expected = ledger.count(node.id) ? ledger[node.id] : 0.0;
        CHECK(std::abs(node.value_v * static_cast<double>(node.visits_n) - expected) < 1e-9);
      }
    }
  }
}

TEST_CASE("select picks the highest ucb and breaks ties low") {
  ReasoningTree tree(gen::question(), "x");
  const auto a = tree.add_child(0, "a", "m", false);
  const auto b = tree.add_child(0, "b", "m", false);
  tree.set_statistics(a, 0.9, 0);
  tree.set_statistics(b, 1.2, 0);
  const std::vector<NodeId> both{a, b};
  CHECK(select(tree, both, SearchConfig{}) == b);
  tree.set_statistics(a, 1.2, 0);
  CHECK(select(tree, both, SearchConfig{}) == a);
  const std::vector<NodeId> reversed{b, a};
  CHECK(select(tree, reversed, SearchConfig{}) == a);
}

TEST_CASE("select falls back to frontier nodes and then the root") {
  ReasoningTree tree(gen::question(), "x");
  const auto a = tree.add_child(0, "a", "m", false);
  const auto b = tree.add_child(a, "b", "m", true);
  const auto c = tree.add_child(0, "c", "m", false);
  const std::vector<NodeId> only_terminal{b};
  CHECK(select(tree, only_terminal, SearchConfig{}) == c);
  tree.prune_subtree(a);
  tree.prune_subtree(c);
  CHECK(select(tree, std::vector<NodeId>{}, SearchConfig{}) == 0);

  ReasoningTree done(gen::question(), "x");
  done.add_child(0, "x", "m", true);
  CHECK_THROWS_AS(select(done, std::vector<NodeId>{}, SearchConfig{}), SearchExhausted);
}

TEST_CASE("select agrees with a brute-force scan") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tree = gen::random_tree(rng, 2 + rng() % 29);
    std::vector<NodeId> latest;
    for (NodeId id = 1; id < tree.size(); ++id)
      if (rng() % 3 == 0) latest.push_back(id);
    SearchConfig c;
    c.exploration_c = (rng() % 2) ? std::sqrt(2.0) : 0.5;
    const auto expected = brute_select(tree, latest, c.exploration_c);
    if (expected) {
      CHECK(select(tree, latest, c) == *expected);
    } else {
      CHECK_THROWS_AS(select(tree, latest, c), SearchExhausted);
    }
  }
}

TEST_CASE("match_answer normalization") {
  CHECK(match_answer("(B)", "B"));
  CHECK(match_answer(" 42.0", "42"));
  CHECK_FALSE(match_answer("7", "8"));
  CHECK(match_answer("Right  Angle.", "right angle"));
  CHECK(match_answer("+3", "3.00"));
  CHECK_FALSE(match_answer("", ""));
}

TEST_CASE("a sole knower solves the task in one iteration") {
  const auto task = make_synthetic_task("t", "geometry", "find x", 4, "12");
  const auto book = book_of(task);
  Ensemble ens;
  ens.push_back(std::make_shared<ScriptedBackend>("A", knows("geometry"), book));
  ens.push_back(std::make_shared<ScriptedBackend>("B", knows("chart"), book));
  ens.push_back(std::make_shared<ScriptedBackend>("C", knows("logic"), book));
  const auto out = search(task.question(), task.ground_truth, ens, SearchConfig{});
  REQUIRE(out.succeeded);
  CHECK(out.iterations_used == 1);
  REQUIRE(out.effective_path);
  const auto& y = *out.effective_path;
  CHECK(y.size() == 5);
  CHECK(y.front() == 0);
  for (std::size_t i = 1; i < y.size(); ++i) {
    CHECK(out.tree[y[i]].origin_model == "A");
    CHECK_FALSE(out.tree[y[i]].pruned);
    CHECK(*out.tree[y[i]].score_r >= 0.0);
    CHECK(out.tree[y[i]].is_terminal == (i + 1 == y.size()));
  }
  CHECK(extract_answer(out.tree[y.back()].step_text) == "12");
}

TEST_CASE("nobody knows: failure after the full budget") {
  const auto task = make_synthetic_task("t", "geometry", "find x", 4, "12");
  const auto book = book_of(task);
  Ensemble ens;
  ens.push_back(std::make_shared<ScriptedBackend>("B", knows("chart"), book));
  ens.push_back(std::make_shared<ScriptedBackend>("C", knows("logic"), book));
  const auto out = search(task.question(), task.ground_truth, ens, SearchConfig{});
  CHECK_FALSE(out.succeeded);
  CHECK_FALSE(out.effective_path);
  CHECK(out.iterations_used == 20);
  CHECK(out.telemetry.size() == 20);
  for (const auto& node : out.tree.nodes())
    if (node.id != 0) CHECK(node.pruned);
}

TEST_CASE("search is deterministic and independent of threading") {
  const auto task = make_synthetic_task("t", "algebra", "solve", 6, "31");
  const auto book = book_of(task);
  auto mixed = [&](std::uint64_t seed) {
    SimProfile p;
    p.step_accuracy = {{"*", 0.5}};
    p.eval_noise = 0.2;
    p.rng_seed = seed;
    return p;
  };
  Ensemble ens;
  for (std::uint64_t k = 0; k < 3; ++k)
    ens.push_back(std::make_shared<ScriptedBackend>("m" + std::to_string(k), mixed(k), book, 9));
  const auto a = search(task.question(), task.ground_truth, ens, SearchConfig{}, 4);
  const auto b = search(task.question(), task.ground_truth, ens, SearchConfig{}, 4);
  CHECK(a.tree == b.tree);
  CHECK(a.effective_path == b.effective_path);
  CHECK(a.iterations_used == b.iterations_used);

  // Same canned models marked remote go through the thread pool.
  auto x = fake::canned("x", {{"s1", false}, {"12", true}});
  auto y = fake::canned("y", {{"t1", false}, {"13", true}});
  y->votes = {{"t1", -1.0}};
  auto xr = std::make_shared<fake::Canned>(*x);
  auto yr = std::make_shared<fake::Canned>(*y);
  xr->is_remote = yr->is_remote = true;
  SearchConfig c;
  c.max_inflight = 3;
  const auto local = search(gen::question(), "12", ensemble_of({x, y}), c);
  const auto remote = search(gen::question(), "12", ensemble_of({xr, yr}), c);
  CHECK(local.tree == remote.tree);
}

TEST_CASE("node count stays within the expansion bound") {
  const auto task = make_synthetic_task("t", "logic", "puzzle", 7, "3");
  const auto book = book_of(task);
  SimProfile p;
  p.step_accuracy = {{"*", 0.4}};
  p.eval_noise = 0.3;
  Ensemble ens;
  for (std::uint64_t k = 0; k < 4; ++k) {
    p.rng_seed = k;
    ens.push_back(std::make_shared<ScriptedBackend>("m" + std::to_string(k), p, book));
  }
  SearchConfig c;
  c.candidates_per_model = 2;
  const auto out = search(task.question(), task.ground_truth, ens, c);
  CHECK(out.tree.size() <= 1 + out.iterations_used * 4 * 2 * 7);
  if (out.succeeded)
    for (NodeId n : *out.effective_path)
      if (n != 0) CHECK(*out.tree[n].score_r >= c.threshold_t);
}

TEST_CASE("golden four-model fixture") {
  const auto task = make_synthetic_task("fixture-1", "geometry", "find the angle", 6, "40");
  const auto book = book_of(task);
  auto profile = [](std::map<std::string, double> acc, double noise, std::uint64_t seed) {
    SimProfile p;
    p.step_accuracy = std::move(acc);
    p.eval_noise = noise;
    p.rng_seed = seed;
    return p;
  };
  Ensemble ens;
  ens.push_back(std::make_shared<ScriptedBackend>("generalist", profile({{"*", 0.5}}, 0.1, 11), book, 7));
  ens.push_back(std::make_shared<ScriptedBackend>("chart", profile({{"*", 0.1}}, 0.15, 12), book, 7));
  ens.push_back(std::make_shared<ScriptedBackend>("logic", profile({{"*", 0.1}}, 0.15, 13), book, 7));
  ens.push_back(std::make_shared<ScriptedBackend>("geometry", profile({{"geometry", 0.7}}, 0.1, 14), book, 7));
  const auto out = search(task.question(), task.ground_truth, ens, SearchConfig{}, 7);
  std::size_t pruned = 0;
  for (const auto& n : out.tree.nodes()) pruned += n.pruned ? 1 : 0;
  CHECK(out.succeeded);
  CHECK(out.iterations_used == 3);
  CHECK(out.tree.size() == 61);
  CHECK(pruned == 42);
  REQUIRE(out.effective_path);
  CHECK(*out.effective_path == std::vector<NodeId>{0, 1, 25, 57, 58, 59, 60});
  // Whatever the snapshot, Y must spell out the canonical derivation.
  const auto& y = *out.effective_path;
  for (std::size_t i = 1; i < y.size(); ++i) CHECK(out.tree[y[i]].step_text == task.canonical_steps[i - 1]);
}
