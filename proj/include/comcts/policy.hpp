#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "comcts/reasoning_tree.hpp"

namespace comcts {

/// Raised when a backend cannot be reached or answers with a non-retryable
/// failure.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when model output cannot be interpreted.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a backend call violates its precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Behavior of a scripted simulator. `step_accuracy` maps a topic (or "*"
/// for any topic) to the chance that a generated step is the correct one.
/// Topics without an entry fall back to 1 when listed in
/// `knowledge_topics` and to 0 otherwise.
struct SimProfile {
  std::map<std::string, double> step_accuracy;
  std::set<std::string> knowledge_topics;
  double eval_noise = 0.0;
  std::uint64_t rng_seed = 0;

  double accuracy_for(const std::optional<std::string>& topic) const;
  void validate() const;

  bool operator==(const SimProfile&) const = default;
};

enum class BackendKind { scripted, http_chat };

std::string_view to_string(BackendKind kind);
BackendKind backend_kind_from_string(std::string_view text);

struct RetryPolicy {
  std::size_t max_attempts = 3;
  std::uint64_t initial_backoff_ms = 1000;  // doubles after each failed attempt

  bool operator==(const RetryPolicy&) const = default;
};

struct PolicyDescriptor {
  std::string name;
  BackendKind kind = BackendKind::scripted;
  std::string endpoint;  // http only
  std::string model_id;  // http only
  double temperature = 1.0;       // expansion
  double eval_temperature = 0.0;  // evaluation
  std::size_t max_tokens = 1024;
  std::uint64_t timeout_ms = 60000;
  RetryPolicy retry;
  std::optional<SimProfile> profile;  // scripted only

  /// Throws std::invalid_argument when kind-specific fields are missing or
  /// present where they do not belong.
  void validate() const;

  bool operator==(const PolicyDescriptor&) const = default;
};

struct GenerationResult {
  std::vector<Step> steps;
  std::string raw_text;
  bool truncated = false;  // last step is non-terminal because output was cut off

  bool operator==(const GenerationResult&) const = default;
};

/// Prompt texts with {question}, {prefix} and {candidate} placeholders.
struct PromptTemplates {
  std::string generate_system;
  std::string generate;
  std::string evaluate_system;
  std::string evaluate;
  std::string score_retry;
  std::string reflect;

  static PromptTemplates defaults();
};

std::string fill_template(std::string_view tpl, std::string_view question,
                          std::string_view prefix, std::string_view candidate);

/// Splits model output into steps on "### Step N:" / "### Final Answer:"
/// lines. Without any delimiter, falls back to blank-line paragraphs where
/// only a last paragraph that looks like an answer is terminal.
std::vector<Step> parse_steps(std::string_view raw_text);

/// First "Score: <x>" in the text, clamped to [-1, 1].
double parse_score(std::string_view raw_text);

/// Canonical delimiter rendering; `first_number` numbers the first step.
/// The last step renders as "### Final Answer:" when it is terminal.
std::string render_steps(std::span<const Step> steps, std::size_t first_number = 1);

/// The answer carried by a terminal step ("Final Answer: 7" -> "7").
std::string extract_answer(std::string_view terminal_text);

/// A policy model pi_k: proposes continuations and judges single steps.
/// Implementations must tolerate concurrent calls.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;

  virtual const std::string& name() const = 0;

  /// True when calls leave the process; the engine fans those out on threads.
  virtual bool remote() const { return false; }

  /// Continuation after `prefix` down to a final answer. `draw` numbers
  /// repeated samples from the same prefix.
  GenerationResult generate_continuation(const Question& question,
                                         std::span<const Step> prefix,
                                         std::uint64_t draw = 0) const;

  /// This model's judgment of `candidate` as the next step, in [-1, 1].
  double evaluate_node(const Question& question, std::span<const Step> prefix,
                       std::string_view candidate) const;

 protected:
  virtual GenerationResult do_generate(const Question& question,
                                       std::span<const Step> prefix,
                                       std::uint64_t draw) const = 0;
  virtual double do_evaluate(const Question& question, std::span<const Step> prefix,
                             std::string_view candidate) const = 0;
};

using Ensemble = std::vector<std::shared_ptr<const PolicyBackend>>;

}  // namespace comcts
