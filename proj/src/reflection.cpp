#include "comcts/reflection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "comcts/random.hpp"

namespace comcts {

std::size_t ReflectivePath::insertion_index() const {
  const auto pos = std::find(base_path.begin(), base_path.end(), replaced_node);
  // base_path starts at the root, which has no entry in `sequence`.
  return static_cast<std::size_t>(pos - base_path.begin()) - 1;
}

std::optional<NodeId> negative_sibling(const ReasoningTree& tree,
                                       std::span<const NodeId> effective_path, NodeId node,
                                       double exploration_c) {
  if (std::find(effective_path.begin(), effective_path.end(), node) == effective_path.end())
    throw std::invalid_argument("node " + std::to_string(node) + " is not on the effective path");
  if (node == tree.root_id()) return std::nullopt;
  const auto siblings = tree.all_siblings_of(node);
  if (siblings.empty()) return std::nullopt;

  const double own = ucb(tree, node, exploration_c);
  NodeId best = siblings.front();
  double best_gap = ucb(tree, best, exploration_c) - own;
  for (std::size_t i = 1; i < siblings.size(); ++i) {
    const double gap = ucb(tree, siblings[i], exploration_c) - own;
    if (gap < best_gap) {
      best = siblings[i];
      best_gap = gap;
    }
  }
  return best;
}

std::optional<ReflectivePath> build_reflective_path(const ReasoningTree& tree,
                                                    std::span<const NodeId> effective_path,
                                                    std::uint64_t seed, double exploration_c,
                                                    std::string_view reflect_prompt) {
  if (effective_path.empty() || effective_path.front() != tree.root_id())
    throw std::invalid_argument("effective path must start at the root");
  for (std::size_t i = 1; i < effective_path.size(); ++i)
    if (tree.node(effective_path[i]).parent_id != effective_path[i - 1])
      throw std::invalid_argument("effective path is not a root-to-node chain");

  std::vector<NodeId> eligible;
  for (std::size_t i = 1; i < effective_path.size(); ++i)
    if (!tree.all_siblings_of(effective_path[i]).empty()) eligible.push_back(effective_path[i]);
  if (eligible.empty()) return std::nullopt;

  SeededStream rng(mix_seed({seed, fnv1a("reflect")}));
  const NodeId chosen = eligible[rng.index(eligible.size())];
  const NodeId negative = *negative_sibling(tree, effective_path, chosen, exploration_c);

  ReflectivePath out;
  out.base_path.assign(effective_path.begin(), effective_path.end());
  out.replaced_node = chosen;
  out.negative_node = negative;
  out.reflect_prompt = std::string(reflect_prompt);
  for (std::size_t i = 1; i < effective_path.size(); ++i) {
    if (effective_path[i] == chosen) {
      out.sequence.push_back(tree.node(negative).step_text);
      out.sequence.push_back(out.reflect_prompt);
    }
    out.sequence.push_back(tree.node(effective_path[i]).step_text);
  }
  return out;
}

SampleResult sample_reflection_subset(std::span<const std::size_t> eligible,
                                      std::size_t population_size, CountOrRatio count_or_ratio,
                                      std::uint64_t seed) {
  SampleResult out;
  if (const auto* ratio = std::get_if<double>(&count_or_ratio)) {
    if (!(*ratio > 0.0 && *ratio <= 1.0))
      throw std::invalid_argument("reflection ratio must lie in (0, 1]");
    out.requested = static_cast<std::size_t>(std::llround(*ratio * static_cast<double>(population_size)));
  } else {
    out.requested = std::get<std::size_t>(count_or_ratio);
    if (out.requested == 0) throw std::invalid_argument("reflection count must be positive");
  }

  std::vector<std::size_t> pool(eligible.begin(), eligible.end());
  std::sort(pool.begin(), pool.end());
  const std::size_t take = std::min(out.requested, pool.size());
  out.clamped = take < out.requested;
  SeededStream rng(mix_seed({seed, fnv1a("reflection-subset")}));
  for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  out.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

}  // namespace comcts
