#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "comcts/policy.hpp"

namespace comcts {

/// A synthetic reasoning problem with one correct derivation.
/// `canonical_steps.back()` is the final answer and equals `ground_truth`;
/// `distractors[d]` lists wrong alternatives for depth d, and the last
/// depth's distractors are wrong final answers.
struct SyntheticTask {
  std::string id;
  std::string topic;
  std::string text;
  std::vector<std::string> canonical_steps;
  std::vector<std::vector<std::string>> distractors;
  std::string ground_truth;

  std::size_t length() const { return canonical_steps.size(); }
  Question question() const { return {id, text, std::nullopt, topic}; }

  bool operator==(const SyntheticTask&) const = default;
};

/// Builds a task whose derivation has `length` steps (>= 1).
SyntheticTask make_synthetic_task(std::string id, std::string topic, std::string text,
                                  std::size_t length, std::string ground_truth,
                                  std::size_t distractors_per_depth = 3);

/// Deterministic task for an arbitrary question: 3 to 8 steps chosen from
/// the question id.
SyntheticTask derive_synthetic_task(const Question& question, std::string_view ground_truth);

/// Answers that never match `ground_truth` under answer matching.
std::vector<std::string> wrong_answers(std::string_view ground_truth, std::size_t count);

class TaskBook {
 public:
  TaskBook() = default;
  explicit TaskBook(std::vector<SyntheticTask> tasks);

  void add(SyntheticTask task);
  const SyntheticTask* find(std::string_view id) const;
  std::size_t size() const { return tasks_.size(); }

 private:
  std::map<std::string, SyntheticTask, std::less<>> tasks_;
};

/// Deterministic stand-in for a policy model. Each call draws from a stream
/// seeded by (profile seed, run seed, model name, question id, prefix, draw),
/// so results do not depend on call order or concurrency.
///
/// Generation: while the prefix still follows the canonical derivation, each
/// next step is canonical with probability accuracy_for(topic); the first
/// miss switches to distractors for the rest of the chain. Evaluation: +1
/// for the canonical next step after an on-track prefix, -1 otherwise,
/// flipped with probability eval_noise.
class ScriptedBackend final : public PolicyBackend {
 public:
  ScriptedBackend(std::string name, SimProfile profile, std::shared_ptr<const TaskBook> book,
                  std::uint64_t run_seed = 0, std::size_t max_tokens = 1024);

  const std::string& name() const override { return name_; }
  const SimProfile& profile() const { return profile_; }

  /// Rough token cost used for max_tokens truncation.
  static std::size_t token_cost(std::string_view step_text);

 protected:
  GenerationResult do_generate(const Question& question, std::span<const Step> prefix,
                               std::uint64_t draw) const override;
  double do_evaluate(const Question& question, std::span<const Step> prefix,
                     std::string_view candidate) const override;

 private:
  const SyntheticTask& task_for(const Question& question) const;
  std::uint64_t request_seed(const Question& question, std::span<const Step> prefix,
                             std::uint64_t salt) const;

  std::string name_;
  SimProfile profile_;
  std::shared_ptr<const TaskBook> book_;
  std::uint64_t run_seed_;
  std::size_t max_tokens_;
};

/// True when every step of `prefix` is the canonical step at its depth.
bool on_canonical_track(const SyntheticTask& task, std::span<const Step> prefix);

}  // namespace comcts
