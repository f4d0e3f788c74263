#include "comcts/reasoning_tree.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace comcts {

namespace {

std::string unknown(NodeId id) { return "unknown node id " + std::to_string(id); }

}  // namespace

ReasoningTree::ReasoningTree(Question question, std::string ground_truth,
                             std::uint64_t rng_seed)
    : question_(std::move(question)),
      ground_truth_(std::move(ground_truth)),
      rng_seed_(rng_seed) {
  ReasoningNode root;
  root.id = 0;
  root.origin_model = std::string(kRootOrigin);
  nodes_.push_back(std::move(root));
}

ReasoningTree ReasoningTree::from_nodes(Question question, std::string ground_truth,
                                        std::uint64_t rng_seed,
                                        std::vector<ReasoningNode> nodes) {
  if (nodes.empty()) throw TreeError("tree has no root");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.id != i) throw TreeError("node ids must be dense and insertion-ordered");
    if (i == 0) {
      if (n.parent_id) throw TreeError("root must not have a parent");
    } else {
      // Parents precede children, which also rules out cycles.
      if (!n.parent_id || *n.parent_id >= i)
        throw TreeError("node " + std::to_string(i) + " has an invalid parent");
      if (nodes[*n.parent_id].pruned && !n.pruned)
        throw TreeError("node " + std::to_string(i) + " is retained under a pruned parent");
    }
    NodeId previous = 0;
    for (std::size_t k = 0; k < n.child_ids.size(); ++k) {
      const NodeId c = n.child_ids[k];
      if (c >= nodes.size() || nodes[c].parent_id != i)
        throw TreeError("node " + std::to_string(i) + " lists a foreign child");
      if (k > 0 && c <= previous) throw TreeError("child order must follow insertion order");
      previous = c;
    }
  }
  std::vector<std::size_t> listed(nodes.size(), 0);
  for (const auto& n : nodes)
    for (NodeId c : n.child_ids) ++listed[c];
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (listed[i] != 1) throw TreeError("node " + std::to_string(i) + " is not listed by its parent");

  ReasoningTree tree(std::move(question), std::move(ground_truth), rng_seed);
  tree.nodes_ = std::move(nodes);
  return tree;
}

const ReasoningNode& ReasoningTree::node(NodeId id) const {
  if (!contains(id)) throw TreeError(unknown(id));
  return nodes_[id];
}

ReasoningNode& ReasoningTree::mutable_node(NodeId id) {
  if (!contains(id)) throw TreeError(unknown(id));
  return nodes_[id];
}

NodeId ReasoningTree::add_child(NodeId parent, std::string step_text,
                                std::string origin_model, bool is_terminal) {
  if (!contains(parent)) throw TreeError(unknown(parent));
  if (nodes_[parent].pruned) throw TreeError("parent pruned");
  ReasoningNode child;
  child.id = nodes_.size();
  child.step_text = std::move(step_text);
  child.origin_model = std::move(origin_model);
  child.is_terminal = is_terminal;
  child.parent_id = parent;
  nodes_[parent].child_ids.push_back(child.id);
  nodes_.push_back(std::move(child));
  return nodes_.back().id;
}

std::vector<NodeId> ReasoningTree::path_to_root(NodeId id) const {
  std::vector<NodeId> path;
  for (std::optional<NodeId> cur = node(id).id; cur; cur = nodes_[*cur].parent_id)
    path.push_back(*cur);
  return {path.rbegin(), path.rend()};
}

std::size_t ReasoningTree::depth(NodeId id) const {
  std::size_t d = 0;
  for (auto p = node(id).parent_id; p; p = nodes_[*p].parent_id) ++d;
  return d;
}

std::vector<NodeId> ReasoningTree::all_siblings_of(NodeId id) const {
  const auto& n = node(id);
  if (!n.parent_id) throw TreeError("root has no siblings");
  std::vector<NodeId> out;
  for (NodeId c : nodes_[*n.parent_id].child_ids)
    if (c != id) out.push_back(c);
  return out;
}

std::vector<NodeId> ReasoningTree::siblings_of(NodeId id) const {
  std::vector<NodeId> out;
  for (NodeId c : all_siblings_of(id))
    if (!nodes_[c].pruned) out.push_back(c);
  return out;
}

std::vector<NodeId> ReasoningTree::retained_children(NodeId id) const {
  std::vector<NodeId> out;
  for (NodeId c : node(id).child_ids)
    if (!nodes_[c].pruned) out.push_back(c);
  return out;
}

std::vector<Step> ReasoningTree::steps_to(NodeId id) const {
  std::vector<Step> steps;
  for (NodeId n : path_to_root(id)) {
    if (n == root_id()) continue;
    steps.push_back({nodes_[n].step_text, nodes_[n].is_terminal});
  }
  return steps;
}

void ReasoningTree::set_score(NodeId id, std::optional<double> score) {
  mutable_node(id).score_r = score;
}

void ReasoningTree::set_statistics(NodeId id, double value, std::uint64_t visits) {
  auto& n = mutable_node(id);
  n.value_v = value;
  n.visits_n = visits;
}

std::size_t ReasoningTree::prune_subtree(NodeId id) {
  if (id == root_id()) throw TreeError("the root cannot be pruned");
  (void)node(id);
  std::size_t changed = 0;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const NodeId cur = stack.back();
    stack.pop_back();
    auto& n = nodes_[cur];
    if (!n.pruned) {
      n.pruned = true;
      ++changed;
    }
    stack.insert(stack.end(), n.child_ids.begin(), n.child_ids.end());
  }
  return changed;
}

double ucb_value(double value, std::uint64_t visits, std::uint64_t parent_visits,
                 double exploration_c) {
  if (parent_visits == 0) return value;
  const double log_parent = std::log(static_cast<double>(parent_visits));
  return value + exploration_c * std::sqrt(log_parent / (1.0 + static_cast<double>(visits)));
}

double ucb(const ReasoningTree& tree, NodeId id, double exploration_c) {
  const auto& n = tree.node(id);
  if (!n.parent_id) throw TreeError("UCB is undefined for the root");
  return ucb_value(n.value_v, n.visits_n, tree.node(*n.parent_id).visits_n, exploration_c);
}

}  // namespace comcts
