#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "comcts/policy.hpp"
#include "comcts/reasoning_tree.hpp"

namespace comcts {

struct SearchConfig {
  std::size_t max_iterations = 20;
  double threshold_t = 0.0;
  double exploration_c = std::sqrt(2.0);
  std::size_t candidates_per_model = 1;
  std::size_t max_inflight = 8;  // concurrent backend requests per iteration

  void validate() const;

  bool operator==(const SearchConfig&) const = default;
};

/// Raised by select() when no retained, non-terminal node can be expanded.
class SearchExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterationTelemetry {
  std::size_t iteration = 0;
  NodeId start_node = 0;
  std::size_t nodes_added = 0;
  std::size_t nodes_pruned = 0;
  std::size_t generation_failures = 0;
  std::size_t vote_failures = 0;
  double generation_ms = 0.0;
  double evaluation_ms = 0.0;
};

struct SearchOutcome {
  ReasoningTree tree;
  std::optional<std::vector<NodeId>> effective_path;  // root-first, ends at a terminal
  std::size_t iterations_used = 0;
  bool succeeded = false;
  std::vector<IterationTelemetry> telemetry;
  std::vector<std::string> warnings;
};

using Chain = std::vector<NodeId>;

/// Joint expansion: every model continues the path ending at `start`, and each
/// continuation is attached under `start` as a chain. Returns the chains in
/// ensemble order (candidates_per_model per model). Models that fail
/// contribute nothing; if all fail the result is empty.
std::vector<Chain> expand(ReasoningTree& tree, NodeId start, const Ensemble& ensemble,
                          const SearchConfig& config, IterationTelemetry* telemetry = nullptr,
                          std::vector<std::string>* warnings = nullptr);

/// Collective scoring and error positioning. Each candidate's R is the mean
/// of the successful votes of all models; nodes with R < t (or no successful
/// vote) are pruned with their descendants. Returns the retained candidates
/// in id order.
std::vector<NodeId> simulate_and_prune(ReasoningTree& tree, std::span<const Chain> candidates,
                                       const Ensemble& ensemble, const SearchConfig& config,
                                       IterationTelemetry* telemetry = nullptr,
                                       std::vector<std::string>* warnings = nullptr);

/// Folds the fresh scores of `retained` into their parents:
/// V <- (N V + sum R) / (N + count), N <- N + count.
void backpropagate(ReasoningTree& tree, std::span<const NodeId> retained);

/// Next start node: highest UCB among the non-terminal nodes of
/// `latest_retained`; if there are none, among retained non-terminal nodes
/// without retained children (the root when nothing else survives).
/// Ties go to the lowest id. Throws SearchExhausted.
NodeId select(const ReasoningTree& tree, std::span<const NodeId> latest_retained,
              const SearchConfig& config);

/// Lowest-id retained terminal whose answer matches the ground truth.
std::optional<NodeId> find_effective_terminal(const ReasoningTree& tree);

/// Full collective search for one question.
SearchOutcome search(const Question& question, const std::string& ground_truth,
                     const Ensemble& ensemble, const SearchConfig& config,
                     std::uint64_t rng_seed = 0);

/// Answer equality after normalization: trim, casefold, strip surrounding
/// punctuation and choice parentheses, collapse whitespace; numerals compare
/// numerically.
bool match_answer(std::string_view predicted, std::string_view ground_truth);

}  // namespace comcts
