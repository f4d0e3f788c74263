#include "comcts/scripted_backend.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "comcts/random.hpp"
#include "comcts/text.hpp"

namespace comcts {

namespace {

std::optional<double> as_number(std::string_view s) {
  s = trim(s);
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(x)) return std::nullopt;
  return x;
}

std::string format_number(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::uint64_t hash_steps(std::span<const Step> steps) {
  std::uint64_t h = fnv1a("prefix");
  for (const auto& s : steps) {
    h = fnv1a(s.text, h);
    h = fnv1a(s.terminal ? "\x1f" "T" : "\x1f" "N", h);
  }
  return h;
}

}  // namespace

std::vector<std::string> wrong_answers(std::string_view ground_truth, std::size_t count) {
  std::vector<std::string> out;
  if (auto x = as_number(ground_truth)) {
    for (std::size_t i = 1; i <= count; ++i)
      out.push_back(format_number(*x + static_cast<double>(i)));
  } else {
    for (std::size_t i = 1; i <= count; ++i)
      out.push_back("not " + std::string(trim(ground_truth)) + " (" + std::to_string(i) + ")");
  }
  return out;
}

SyntheticTask make_synthetic_task(std::string id, std::string topic, std::string text,
                                  std::size_t length, std::string ground_truth,
                                  std::size_t distractors_per_depth) {
  if (length == 0) throw std::invalid_argument("a task needs at least one step");
  if (distractors_per_depth == 0) throw std::invalid_argument("need at least one distractor");
  SyntheticTask task;
  task.id = std::move(id);
  task.topic = std::move(topic);
  task.text = std::move(text);
  task.ground_truth = std::move(ground_truth);
  for (std::size_t d = 0; d + 1 < length; ++d) {
    task.canonical_steps.push_back("Establish fact " + std::to_string(d + 1) + " of " + task.id +
                                   " from the " + task.topic + " givens.");
    std::vector<std::string> wrong;
    for (std::size_t v = 0; v < distractors_per_depth; ++v)
      wrong.push_back("Assume shortcut " + std::to_string(d + 1) + "." + std::to_string(v + 1) +
                      " for " + task.id + " without justification.");
    task.distractors.push_back(std::move(wrong));
  }
  task.canonical_steps.push_back(task.ground_truth);
  task.distractors.push_back(wrong_answers(task.ground_truth, distractors_per_depth));
  return task;
}

SyntheticTask derive_synthetic_task(const Question& question, std::string_view ground_truth) {
  const std::size_t length = 3 + fnv1a(question.id) % 6;
  return make_synthetic_task(question.id, question.topic.value_or("general"), question.text,
                             length, std::string(trim(ground_truth)));
}

TaskBook::TaskBook(std::vector<SyntheticTask> tasks) {
  for (auto& t : tasks) add(std::move(t));
}

void TaskBook::add(SyntheticTask task) {
  const std::string id = task.id;
  if (!tasks_.emplace(id, std::move(task)).second)
    throw std::invalid_argument("duplicate task id '" + id + "'");
}

const SyntheticTask* TaskBook::find(std::string_view id) const {
  auto it = tasks_.find(id);
  return it == tasks_.end() ? nullptr : &it->second;
}

bool on_canonical_track(const SyntheticTask& task, std::span<const Step> prefix) {
  if (prefix.size() > task.length()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (prefix[i].text != task.canonical_steps[i]) return false;
  return true;
}

ScriptedBackend::ScriptedBackend(std::string name, SimProfile profile,
                                 std::shared_ptr<const TaskBook> book, std::uint64_t run_seed,
                                 std::size_t max_tokens)
    : name_(std::move(name)),
      profile_(std::move(profile)),
      book_(std::move(book)),
      run_seed_(run_seed),
      max_tokens_(max_tokens) {
  profile_.validate();
  if (!book_) throw std::invalid_argument("scripted backend needs a task book");
}

std::size_t ScriptedBackend::token_cost(std::string_view step_text) {
  return 4 + (step_text.size() + 3) / 4;
}

const SyntheticTask& ScriptedBackend::task_for(const Question& question) const {
  const auto* task = book_->find(question.id);
  if (!task) throw BackendError("scripted backend '" + name_ + "' has no task '" + question.id + "'");
  return *task;
}

std::uint64_t ScriptedBackend::request_seed(const Question& question,
                                            std::span<const Step> prefix,
                                            std::uint64_t salt) const {
  return mix_seed({profile_.rng_seed, run_seed_, fnv1a(name_), fnv1a(question.id),
                   hash_steps(prefix), salt});
}

GenerationResult ScriptedBackend::do_generate(const Question& question,
                                              std::span<const Step> prefix,
                                              std::uint64_t draw) const {
  const auto& task = task_for(question);
  if (prefix.size() >= task.length())
    throw PreconditionError("prefix is as long as the derivation");

  SeededStream rng(request_seed(question, prefix, mix_seed({fnv1a("generate"), draw})));
  const double accuracy = profile_.accuracy_for(task.topic);
  bool on_track = on_canonical_track(task, prefix);

  GenerationResult result;
  std::size_t tokens = 0;
  for (std::size_t depth = prefix.size(); depth < task.length(); ++depth) {
    std::string text;
    if (on_track && rng.bernoulli(accuracy)) {
      text = task.canonical_steps[depth];
    } else {
      on_track = false;
      const auto& wrong = task.distractors[depth];
      text = wrong[rng.index(wrong.size())];
    }
    tokens += token_cost(text);
    if (tokens > max_tokens_ && !result.steps.empty()) {
      result.truncated = true;
      break;
    }
    result.steps.push_back({std::move(text), depth + 1 == task.length()});
  }
  result.raw_text = render_steps(result.steps, prefix.size() + 1);
  return result;
}

double ScriptedBackend::do_evaluate(const Question& question, std::span<const Step> prefix,
                                    std::string_view candidate) const {
  const auto& task = task_for(question);
  const std::size_t depth = prefix.size();
  const bool correct = depth < task.length() && on_canonical_track(task, prefix) &&
                       candidate == task.canonical_steps[depth];
  SeededStream rng(request_seed(question, prefix, mix_seed({fnv1a("evaluate"), fnv1a(candidate)})));
  const bool flip = rng.bernoulli(profile_.eval_noise);
  return (correct != flip) ? 1.0 : -1.0;
}

}  // namespace comcts
