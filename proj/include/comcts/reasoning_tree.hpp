#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace comcts {

using NodeId = std::size_t;

inline constexpr std::string_view kRootOrigin = "root";

/// A question as seen by the search: task text plus an optional image
/// reference. The reference answer is kept apart so backends never see it.
struct Question {
  std::string id;
  std::string text;
  std::optional<std::string> image;
  std::optional<std::string> topic;

  bool operator==(const Question&) const = default;
};

/// One reasoning step as exchanged with policy backends.
struct Step {
  std::string text;
  bool terminal = false;

  bool operator==(const Step&) const = default;
};

struct ReasoningNode {
  NodeId id = 0;
  std::string step_text;
  std::string origin_model;
  std::optional<double> score_r;  // collective evaluation, absent until simulated
  double value_v = 0.0;
  std::uint64_t visits_n = 0;
  bool is_terminal = false;
  bool pruned = false;
  std::optional<NodeId> parent_id;
  std::vector<NodeId> child_ids;

  bool operator==(const ReasoningNode&) const = default;
};

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Question-rooted reasoning tree. Nodes live in an id-indexed store; the id
/// of a node is its insertion position, so ids are dense and increasing.
/// Pruned nodes stay in storage with their flag set.
class ReasoningTree {
 public:
  ReasoningTree(Question question, std::string ground_truth,
                std::uint64_t rng_seed = 0);

  /// Rebuilds a tree from a flat node array, checking every structural
  /// invariant. Throws TreeError on any inconsistency.
  static ReasoningTree from_nodes(Question question, std::string ground_truth,
                                  std::uint64_t rng_seed,
                                  std::vector<ReasoningNode> nodes);

  const Question& question() const { return question_; }
  const std::string& ground_truth() const { return ground_truth_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  NodeId root_id() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeId id) const { return id < nodes_.size(); }

  const ReasoningNode& node(NodeId id) const;
  const ReasoningNode& operator[](NodeId id) const { return node(id); }
  std::span<const ReasoningNode> nodes() const { return nodes_; }

  NodeId add_child(NodeId parent, std::string step_text,
                   std::string origin_model, bool is_terminal);

  /// Root-first path ending at `id`.
  std::vector<NodeId> path_to_root(NodeId id) const;
  std::size_t depth(NodeId id) const;

  /// Retained siblings of a non-root node, insertion-ordered.
  std::vector<NodeId> siblings_of(NodeId id) const;
  /// Siblings including pruned ones.
  std::vector<NodeId> all_siblings_of(NodeId id) const;
  std::vector<NodeId> retained_children(NodeId id) const;

  /// Steps from the first node below the root down to `id` (empty for root).
  std::vector<Step> steps_to(NodeId id) const;

  void set_score(NodeId id, std::optional<double> score);
  void set_statistics(NodeId id, double value, std::uint64_t visits);

  /// Marks `id` and every descendant pruned. Returns how many nodes changed
  /// state. The root cannot be pruned.
  std::size_t prune_subtree(NodeId id);

  bool operator==(const ReasoningTree&) const = default;

 private:
  ReasoningNode& mutable_node(NodeId id);

  Question question_;
  std::string ground_truth_;
  std::uint64_t rng_seed_ = 0;
  std::vector<ReasoningNode> nodes_;
};

/// V + c * sqrt(ln N(parent) / (1 + N)); the exploration term is 0 while the
/// parent has never been visited.
double ucb_value(double value, std::uint64_t visits, std::uint64_t parent_visits,
                 double exploration_c);

/// UCB of a non-root node of `tree`.
double ucb(const ReasoningTree& tree, NodeId id, double exploration_c);

}  // namespace comcts
