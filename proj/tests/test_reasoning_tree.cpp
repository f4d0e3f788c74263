#include <doctest.h>

#include <cmath>
#include <random>

#include "comcts/reasoning_tree.hpp"
#include "generators.hpp"

using namespace comcts;

TEST_CASE("add_child appends with the next id") {
  ReasoningTree tree(gen::question(), "7");
  CHECK(tree.size() == 1);
  CHECK(tree[0].step_text.empty());
  const auto a = tree.add_child(0, "Step 1", "m", false);
  CHECK(a == 1);
  CHECK(tree[a].parent_id == std::optional<NodeId>(0));
  CHECK(tree[0].child_ids == std::vector<NodeId>{1});
  CHECK(tree[a].value_v == 0.0);
  CHECK(tree[a].visits_n == 0);
  CHECK_FALSE(tree[a].score_r.has_value());
}

TEST_CASE("sibling order is insertion order") {
  ReasoningTree tree(gen::question(), "7");
  const auto a = tree.add_child(0, "a", "m", false);
  const auto b = tree.add_child(0, "b", "m", false);
  CHECK(tree[0].child_ids == std::vector<NodeId>{a, b});
}

TEST_CASE("adding under a pruned parent fails") {
  ReasoningTree tree(gen::question(), "7");
  const auto a = tree.add_child(0, "a", "m", false);
  tree.prune_subtree(a);
  CHECK_THROWS_WITH_AS(tree.add_child(a, "x", "m", false), "parent pruned", TreeError);
  CHECK_THROWS_AS(tree.add_child(99, "x", "m", false), TreeError);
}

TEST_CASE("path_to_root") {
  ReasoningTree tree(gen::question(), "7");
  CHECK(tree.path_to_root(0) == std::vector<NodeId>{0});
  const auto a = tree.add_child(0, "a", "m", false);
  const auto b = tree.add_child(a, "b", "m", false);
  const auto c = tree.add_child(b, "c", "m", true);
  CHECK(tree.path_to_root(c) == std::vector<NodeId>{0, a, b, c});
  CHECK(tree.depth(c) == 3);
  CHECK_THROWS_AS(tree.path_to_root(17), TreeError);

  const auto steps = tree.steps_to(c);
  REQUIRE(steps.size() == 3);
  CHECK(steps[0] == Step{"a", false});
  CHECK(steps[2] == Step{"c", true});
}

TEST_CASE("path length matches a brute-force upward walk") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto tree = gen::random_tree(rng, 50, false, false);
    for (const auto& node : tree.nodes()) {
      std::size_t depth = 0;
      for (auto cur = node.parent_id; cur; cur = tree[*cur].parent_id) ++depth;
      const auto path = tree.path_to_root(node.id);
      CHECK(path.size() == depth + 1);
      CHECK(path.back() == node.id);
      // Walking down the child lists along the path is the identity.
      for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const auto& kids = tree[path[i]].child_ids;
        CHECK(std::find(kids.begin(), kids.end(), path[i + 1]) != kids.end());
      }
    }
  }
}

TEST_CASE("siblings_of") {
  ReasoningTree tree(gen::question(), "7");
  const auto only = tree.add_child(0, "only", "m", false);
  CHECK(tree.siblings_of(only).empty());
  const auto a = tree.add_child(only, "a", "m", false);
  const auto b = tree.add_child(only, "b", "m", false);
  const auto c = tree.add_child(only, "c", "m", false);
  CHECK(tree.siblings_of(b) == std::vector<NodeId>{a, c});
  tree.prune_subtree(b);
  CHECK(tree.siblings_of(a) == std::vector<NodeId>{c});
  CHECK(tree.all_siblings_of(a) == std::vector<NodeId>{b, c});
  CHECK_THROWS_WITH_AS(tree.siblings_of(0), "root has no siblings", TreeError);
}

TEST_CASE("prune_subtree hides descendants but keeps ids") {
  ReasoningTree tree(gen::question(), "7");
  const auto a = tree.add_child(0, "a", "m", false);
  const auto b = tree.add_child(a, "b", "m", false);
  const auto c = tree.add_child(b, "c", "m", true);
  const auto d = tree.add_child(0, "d", "m", false);
  CHECK(tree.prune_subtree(a) == 3);
  CHECK(tree[c].pruned);
  CHECK(tree[c].id == c);
  CHECK_FALSE(tree[d].pruned);
  CHECK(tree.retained_children(0) == std::vector<NodeId>{d});
  CHECK(tree.prune_subtree(b) == 0);
  CHECK_THROWS_AS(tree.prune_subtree(0), TreeError);
}

TEST_CASE("from_nodes rejects inconsistent arrays") {
  ReasoningTree tree(gen::question(), "7", 5);
  const auto a = tree.add_child(0, "a", "m", false);
  tree.add_child(a, "b", "m", true);
  std::vector<ReasoningNode> nodes(tree.nodes().begin(), tree.nodes().end());
  CHECK(ReasoningTree::from_nodes(gen::question(), "7", 5, nodes) == tree);

  auto orphan = nodes;
  orphan[2].parent_id = 9;
  CHECK_THROWS_AS(ReasoningTree::from_nodes(gen::question(), "7", 5, orphan), TreeError);

  auto half_pruned = nodes;
  half_pruned[1].pruned = true;
  CHECK_THROWS_AS(ReasoningTree::from_nodes(gen::question(), "7", 5, half_pruned), TreeError);
}

TEST_CASE("ucb examples") {
  CHECK(ucb_value(0.5, 0, 1, 2.0) == 0.5);
  CHECK(ucb_value(0.0, 0, 0, 3.7) == 0.0);
  // ln 10 = 2.302585092994046...; independent recomputation.
  const double expected = 0.6 + std::sqrt(2.302585092994046 / 4.0);
  CHECK(std::abs(ucb_value(0.6, 3, 10, 1.0) - expected) < 1e-12);

  ReasoningTree tree(gen::question(), "7");
  const auto a = tree.add_child(0, "a", "m", false);
  tree.set_statistics(0, 0.1, 10);
  tree.set_statistics(a, 0.6, 3);
  CHECK(std::abs(ucb(tree, a, 1.0) - expected) < 1e-12);
  CHECK_THROWS_AS(ucb(tree, 0, 1.0), TreeError);
  CHECK_THROWS_AS(ucb(tree, 5, 1.0), TreeError);
}

TEST_CASE("common value shift moves every sibling ucb by the same amount") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> v(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    ReasoningTree tree(gen::question(), "7");
    const std::uint64_t visits = rng() % 4;
    tree.set_statistics(0, 0.0, rng() % 20);
    std::vector<NodeId> kids;
    for (int i = 0; i < 5; ++i) {
      kids.push_back(tree.add_child(0, "s", "m", false));
      tree.set_statistics(kids.back(), v(rng), visits);
    }
    const double eps = 0.25 + v(rng) * 0.2;
    auto argmax = [&] {
      NodeId best = kids.front();
      for (auto k : kids)
        if (ucb(tree, k, 1.4) > ucb(tree, best, 1.4)) best = k;
      return best;
    };
    const auto before = argmax();
    std::vector<double> old;
    for (auto k : kids) old.push_back(ucb(tree, k, 1.4));
    for (auto k : kids) tree.set_statistics(k, tree[k].value_v + eps, visits);
    for (std::size_t i = 0; i < kids.size(); ++i)
      CHECK(std::abs(ucb(tree, kids[i], 1.4) - old[i] - eps) < 1e-9);
    CHECK(argmax() == before);
  }
}
