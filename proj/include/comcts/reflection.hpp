#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "comcts/reasoning_tree.hpp"

namespace comcts {

inline constexpr std::string_view kDefaultReflectPrompt =
    "The previous reasoning step is wrong and let's rethink it again.";

/// An effective path with one (negative step, reflection prompt) pair
/// inserted before `replaced_node`. `sequence` holds step texts without the
/// root, so it is two entries longer than the base path's steps.
struct ReflectivePath {
  std::vector<NodeId> base_path;
  NodeId replaced_node = 0;
  NodeId negative_node = 0;
  std::string reflect_prompt;
  std::vector<std::string> sequence;

  /// Position of the negative step inside `sequence`.
  std::size_t insertion_index() const;

  bool operator==(const ReflectivePath&) const = default;
};

/// Sibling of `node` minimizing UCB(sibling) - UCB(node), pruned siblings
/// included; ties go to the lowest id. Empty when `node` has no siblings.
/// Throws std::invalid_argument when `node` is not on `effective_path`.
std::optional<NodeId> negative_sibling(const ReasoningTree& tree,
                                       std::span<const NodeId> effective_path, NodeId node,
                                       double exploration_c);

/// Picks a node of the path uniformly among those with at least one sibling
/// (seeded) and splices in its negative sibling and the reflection prompt.
std::optional<ReflectivePath> build_reflective_path(
    const ReasoningTree& tree, std::span<const NodeId> effective_path, std::uint64_t seed,
    double exploration_c, std::string_view reflect_prompt = kDefaultReflectPrompt);

/// Seeded uniform sample without replacement of the eligible indices.
/// `count_or_ratio` is either an absolute count or a ratio of
/// `population_size`. Returns sorted indices; `clamped` is set when fewer
/// than requested were eligible.
struct SampleResult {
  std::vector<std::size_t> indices;
  std::size_t requested = 0;
  bool clamped = false;
};

using CountOrRatio = std::variant<std::size_t, double>;

SampleResult sample_reflection_subset(std::span<const std::size_t> eligible,
                                      std::size_t population_size, CountOrRatio count_or_ratio,
                                      std::uint64_t seed);

}  // namespace comcts
