#include "comcts/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <map>

#include "comcts/fanout.hpp"
#include "comcts/text.hpp"

namespace comcts {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

bool any_remote(const Ensemble& ensemble) {
  return std::any_of(ensemble.begin(), ensemble.end(),
                     [](const auto& b) { return b && b->remote(); });
}

void warn(std::vector<std::string>* warnings, std::string message) {
  if (warnings) warnings->push_back(std::move(message));
}

std::string normalize_answer(std::string_view raw) {
  std::string s = to_lower(trim(raw));
  constexpr std::string_view kLeading = "([{\"'`*";
  constexpr std::string_view kTrailing = ")]}\"'`*.,;:!?";
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    if (kLeading.find(s.front()) != std::string_view::npos) {
      s.erase(s.begin());
      changed = true;
    }
    if (!s.empty() && kTrailing.find(s.back()) != std::string_view::npos) {
      s.pop_back();
      changed = true;
    }
    if (changed) s = std::string(trim(s));
  }
  std::string collapsed;
  for (char c : s) {
    if (is_space(c)) {
      if (!collapsed.empty() && collapsed.back() != ' ') collapsed += ' ';
    } else {
      collapsed += c;
    }
  }
  return collapsed;
}

std::optional<double> parse_numeral(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return x;
}

}  // namespace

void SearchConfig::validate() const {
  if (max_iterations == 0) throw std::invalid_argument("max_iterations must be positive");
  if (!(exploration_c > 0.0)) throw std::invalid_argument("exploration_c must be positive");
  if (candidates_per_model == 0)
    throw std::invalid_argument("candidates_per_model must be positive");
  if (max_inflight == 0) throw std::invalid_argument("max_inflight must be positive");
  if (!std::isfinite(threshold_t)) throw std::invalid_argument("threshold_t must be finite");
}

std::vector<Chain> expand(ReasoningTree& tree, NodeId start, const Ensemble& ensemble,
                          const SearchConfig& config, IterationTelemetry* telemetry,
                          std::vector<std::string>* warnings) {
  const auto& start_node = tree.node(start);
  if (start_node.pruned) throw PreconditionError("cannot expand a pruned node");
  if (start_node.is_terminal) throw PreconditionError("cannot expand terminal node");

  const auto prefix = tree.steps_to(start);
  struct Job {
    std::size_t model;
    std::uint64_t draw;
  };
  std::vector<Job> jobs;
  for (std::size_t j = 0; j < ensemble.size(); ++j) {
    const auto& existing = start_node.child_ids;
    const auto earlier = static_cast<std::uint64_t>(
        std::count_if(existing.begin(), existing.end(), [&](NodeId c) {
          return tree.node(c).origin_model == ensemble[j]->name();
        }));
    for (std::size_t c = 0; c < config.candidates_per_model; ++c) jobs.push_back({j, earlier + c});
  }

  const auto t0 = Clock::now();
  auto results = fan_out(jobs.size(), config.max_inflight, any_remote(ensemble),
                         [&](std::size_t i) {
                           return ensemble[jobs[i].model]->generate_continuation(
                               tree.question(), prefix, jobs[i].draw);
                         });
  if (telemetry) telemetry->generation_ms += elapsed_ms(t0);

  std::vector<Chain> chains;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& name = ensemble[jobs[i].model]->name();
    if (!results[i].ok()) {
      if (telemetry) ++telemetry->generation_failures;
      warn(warnings, "generation by '" + name + "' failed: " + results[i].error);
      continue;
    }
    Chain chain;
    NodeId parent = start;
    for (const auto& step : results[i].value->steps) {
      parent = tree.add_child(parent, step.text, name, step.terminal);
      chain.push_back(parent);
    }
    if (telemetry) telemetry->nodes_added += chain.size();
    chains.push_back(std::move(chain));
  }
  if (chains.empty() && !jobs.empty()) warn(warnings, "every generation failed this iteration");
  return chains;
}

std::vector<NodeId> simulate_and_prune(ReasoningTree& tree, std::span<const Chain> candidates,
                                       const Ensemble& ensemble, const SearchConfig& config,
                                       IterationTelemetry* telemetry,
                                       std::vector<std::string>* warnings) {
  std::vector<NodeId> nodes;
  for (const auto& chain : candidates) nodes.insert(nodes.end(), chain.begin(), chain.end());

  const std::size_t voters = ensemble.size();
  std::vector<std::vector<Step>> prefixes;
  prefixes.reserve(nodes.size());
  for (NodeId n : nodes) prefixes.push_back(tree.steps_to(*tree.node(n).parent_id));

  const auto t0 = Clock::now();
  auto votes = fan_out(nodes.size() * voters, config.max_inflight, any_remote(ensemble),
                       [&](std::size_t i) {
                         const std::size_t k = i / voters;
                         return ensemble[i % voters]->evaluate_node(
                             tree.question(), prefixes[k], tree.node(nodes[k]).step_text);
                       });
  if (telemetry) telemetry->evaluation_ms += elapsed_ms(t0);

  for (std::size_t k = 0; k < nodes.size(); ++k) {
    double sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t l = 0; l < voters; ++l) {
      const auto& vote = votes[k * voters + l];
      if (vote.ok()) {
        sum += *vote.value;
        ++ok;
      } else {
        if (telemetry) ++telemetry->vote_failures;
        warn(warnings, "vote by '" + ensemble[l]->name() + "' on node " +
                           std::to_string(nodes[k]) + " failed: " + vote.error);
      }
    }
    if (ok > 0) {
      tree.set_score(nodes[k], sum / static_cast<double>(ok));
    } else {
      tree.set_score(nodes[k], std::nullopt);
      warn(warnings, "node " + std::to_string(nodes[k]) + " received no votes; pruned");
    }
  }

  // Error positioning: the first low-score node of a chain is cut together
  // with everything below it.
  std::size_t pruned = 0;
  for (const auto& chain : candidates) {
    for (NodeId n : chain) {
      const auto& score = tree.node(n).score_r;
      if (!score || *score < config.threshold_t) {
        pruned += tree.prune_subtree(n);
        break;
      }
    }
  }
  if (telemetry) telemetry->nodes_pruned += pruned;

  std::vector<NodeId> retained;
  for (NodeId n : nodes)
    if (!tree.node(n).pruned) retained.push_back(n);
  std::sort(retained.begin(), retained.end());
  return retained;
}

void backpropagate(ReasoningTree& tree, std::span<const NodeId> retained) {
  struct Tally {
    double sum = 0.0;
    std::uint64_t count = 0;
  };
  std::map<NodeId, Tally, std::greater<>> by_parent;  // deepest ids first
  for (NodeId n : retained) {
    const auto& node = tree.node(n);
    if (!node.parent_id || !node.score_r) continue;
    auto& tally = by_parent[*node.parent_id];
    tally.sum += *node.score_r;
    ++tally.count;
  }
  for (const auto& [parent, tally] : by_parent) {
    const auto& p = tree.node(parent);
    const auto visits = static_cast<double>(p.visits_n);
    const double value = (visits * p.value_v + tally.sum) / (visits + static_cast<double>(tally.count));
    tree.set_statistics(parent, value, p.visits_n + tally.count);
  }
}

NodeId select(const ReasoningTree& tree, std::span<const NodeId> latest_retained,
              const SearchConfig& config) {
  std::vector<NodeId> pool;
  for (NodeId n : latest_retained) {
    const auto& node = tree.node(n);
    if (!node.pruned && !node.is_terminal && node.parent_id) pool.push_back(n);
  }
  if (pool.empty()) {
    for (const auto& node : tree.nodes()) {
      if (node.pruned || node.is_terminal) continue;
      if (!tree.retained_children(node.id).empty()) continue;
      if (!node.parent_id) return node.id;  // nothing below the root survived
      pool.push_back(node.id);
    }
  }
  if (pool.empty()) throw SearchExhausted("no expandable node left in the tree");
  std::sort(pool.begin(), pool.end());

  NodeId best = pool.front();
  double best_ucb = ucb(tree, best, config.exploration_c);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double u = ucb(tree, pool[i], config.exploration_c);
    if (u > best_ucb) {
      best = pool[i];
      best_ucb = u;
    }
  }
  return best;
}

std::optional<NodeId> find_effective_terminal(const ReasoningTree& tree) {
  for (const auto& node : tree.nodes()) {
    if (node.pruned || !node.is_terminal) continue;
    if (match_answer(extract_answer(node.step_text), tree.ground_truth())) return node.id;
  }
  return std::nullopt;
}

SearchOutcome search(const Question& question, const std::string& ground_truth,
                     const Ensemble& ensemble, const SearchConfig& config,
                     std::uint64_t rng_seed) {
  config.validate();
  if (ensemble.empty()) throw std::invalid_argument("ensemble must contain at least one model");
  if (trim(question.text).empty()) throw std::invalid_argument("question text is empty");
  if (trim(ground_truth).empty()) throw std::invalid_argument("ground truth is empty");

  SearchOutcome out{ReasoningTree(question, ground_truth, rng_seed), std::nullopt, 0, false, {}, {}};
  NodeId start = out.tree.root_id();
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    IterationTelemetry tel;
    tel.iteration = it;
    tel.start_node = start;
    const auto chains = expand(out.tree, start, ensemble, config, &tel, &out.warnings);
    const auto retained = simulate_and_prune(out.tree, chains, ensemble, config, &tel, &out.warnings);
    backpropagate(out.tree, retained);
    out.telemetry.push_back(tel);
    out.iterations_used = it;

    if (auto terminal = find_effective_terminal(out.tree)) {
      out.succeeded = true;
      out.effective_path = out.tree.path_to_root(*terminal);
      break;
    }
    if (it == config.max_iterations) break;
    try {
      start = select(out.tree, retained, config);
    } catch (const SearchExhausted& e) {
      out.warnings.push_back(e.what());
      break;
    }
  }
  return out;
}

bool match_answer(std::string_view predicted, std::string_view ground_truth) {
  const std::string a = normalize_answer(predicted);
  const std::string b = normalize_answer(ground_truth);
  if (a.empty() || b.empty()) return false;
  const auto x = parse_numeral(a);
  const auto y = parse_numeral(b);
  if (x && y) return *x == *y;
  return a == b;
}

}  // namespace comcts
