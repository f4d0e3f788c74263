#include "comcts/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

#include "comcts/text.hpp"

namespace comcts {

namespace {

const std::regex& step_marker() {
  static const std::regex re(R"(^\s*###\s*Step\s*\d*\s*:\s?(.*)$)", std::regex::icase);
  return re;
}

const std::regex& final_marker() {
  static const std::regex re(R"(^\s*###\s*Final\s+Answer\s*:\s?(.*)$)", std::regex::icase);
  return re;
}

const std::regex& answer_marker() {
  static const std::regex re(R"((?:final\s+answer|answer)\s*:\s*([\s\S]*)$)", std::regex::icase);
  return re;
}

void check_probability(double p, std::string_view what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

double SimProfile::accuracy_for(const std::optional<std::string>& topic) const {
  if (topic) {
    if (auto it = step_accuracy.find(*topic); it != step_accuracy.end()) return it->second;
    if (knowledge_topics.contains(*topic)) return 1.0;
  }
  if (auto it = step_accuracy.find("*"); it != step_accuracy.end()) return it->second;
  return 0.0;
}

void SimProfile::validate() const {
  for (const auto& [topic, p] : step_accuracy) check_probability(p, "step_accuracy[" + topic + "]");
  check_probability(eval_noise, "eval_noise");
}

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::scripted ? "scripted" : "http-chat";
}

BackendKind backend_kind_from_string(std::string_view text) {
  if (text == "scripted" || text == "scripted-simulator") return BackendKind::scripted;
  if (text == "http-chat" || text == "http") return BackendKind::http_chat;
  throw std::invalid_argument("unknown backend kind '" + std::string(text) + "'");
}

void PolicyDescriptor::validate() const {
  if (name.empty()) throw std::invalid_argument("policy name must not be empty");
  const std::string who = "policy '" + name + "': ";
  if (!(temperature >= 0.0) || !(eval_temperature >= 0.0))
    throw std::invalid_argument(who + "temperature must be >= 0");
  if (max_tokens == 0) throw std::invalid_argument(who + "max_tokens must be positive");
  if (retry.max_attempts == 0) throw std::invalid_argument(who + "max_attempts must be positive");
  if (kind == BackendKind::scripted) {
    if (!profile) throw std::invalid_argument(who + "scripted backends need a profile");
    if (!endpoint.empty() || !model_id.empty())
      throw std::invalid_argument(who + "endpoint/model_id only apply to http backends");
    profile->validate();
  } else {
    if (endpoint.empty()) throw std::invalid_argument(who + "http backends need an endpoint");
    if (model_id.empty()) throw std::invalid_argument(who + "http backends need a model_id");
    if (profile) throw std::invalid_argument(who + "profile only applies to scripted backends");
  }
}

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.generate_system =
      "You are a careful problem solver. Reason step by step. Start every step on a new line "
      "with \"### Step N:\" and give the result on a final line starting with "
      "\"### Final Answer:\".";
  t.generate =
      "Question:\n{question}\n\n"
      "Reasoning so far:\n{prefix}\n\n"
      "Continue from the next step and finish with the final answer.";
  t.evaluate_system =
      "You are a strict grader of step-by-step solutions. Judge only the candidate step.";
  t.evaluate =
      "Question:\n{question}\n\n"
      "Previous steps:\n{prefix}\n\n"
      "Candidate next step:\n{candidate}\n\n"
      "Is the candidate step correct and useful given the previous steps? Reply with a line "
      "\"Score: x\" where x is a number from -1 (wrong) to 1 (correct).";
  t.score_retry =
      "Your reply did not contain a score. Reply with exactly one line of the form "
      "\"Score: x\" with x between -1 and 1.";
  t.reflect = "The previous reasoning step is wrong and let's rethink it again.";
  return t;
}

std::string fill_template(std::string_view tpl, std::string_view question,
                          std::string_view prefix, std::string_view candidate) {
  std::string out;
  out.reserve(tpl.size() + question.size() + prefix.size() + candidate.size());
  for (std::size_t i = 0; i < tpl.size();) {
    auto try_put = [&](std::string_view key, std::string_view value) {
      if (tpl.substr(i, key.size()) != key) return false;
      out += value;
      i += key.size();
      return true;
    };
    if (try_put("{question}", question) || try_put("{prefix}", prefix) ||
        try_put("{candidate}", candidate))
      continue;
    out += tpl[i++];
  }
  return out;
}

std::vector<Step> parse_steps(std::string_view raw_text) {
  if (trim(raw_text).empty()) throw ParseError("empty generation");

  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(raw_text)};
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
    }
  }

  std::vector<Step> steps;
  bool any_marker = false;
  bool in_step = false;
  std::string body;
  bool body_terminal = false;
  auto flush = [&] {
    if (in_step) {
      std::string text{trim(body)};
      if (!text.empty()) steps.push_back({std::move(text), body_terminal});
    }
    body.clear();
  };

  for (const auto& line : lines) {
    std::smatch m;
    if (std::regex_match(line, m, final_marker())) {
      flush();
      any_marker = in_step = body_terminal = true;
      body = m[1].str();
      continue;
    }
    if (std::regex_match(line, m, step_marker())) {
      if (in_step && body_terminal) break;  // nothing after the final answer counts
      flush();
      any_marker = in_step = true;
      body_terminal = false;
      body = m[1].str();
      continue;
    }
    if (in_step) {
      body += '\n';
      body += line;
    }
  }
  if (any_marker) {
    flush();
    if (steps.empty()) throw ParseError("no parseable steps");
    // Only the first final answer is terminal; drop anything after it.
    auto first_terminal = std::find_if(steps.begin(), steps.end(),
                                       [](const Step& s) { return s.terminal; });
    if (first_terminal != steps.end()) steps.erase(first_terminal + 1, steps.end());
    return steps;
  }

  // Paragraph fallback.
  std::string para;
  auto flush_para = [&] {
    std::string text{trim(para)};
    if (!text.empty()) steps.push_back({std::move(text), false});
    para.clear();
  };
  for (const auto& line : lines) {
    if (trim(line).empty()) {
      flush_para();
    } else {
      if (!para.empty()) para += '\n';
      para += line;
    }
  }
  flush_para();
  if (steps.empty()) throw ParseError("no parseable steps");
  if (std::regex_search(steps.back().text, answer_marker())) steps.back().terminal = true;
  return steps;
}

double parse_score(std::string_view raw_text) {
  static const std::regex re(R"(Score\s*:\s*\**\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?))",
                             std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(raw_text.begin(), raw_text.end(), m, re))
    throw ParseError("no score found in evaluation reply");
  const double x = std::stod(m[1].str());
  return std::clamp(x, -1.0, 1.0);
}

std::string render_steps(std::span<const Step> steps, std::size_t first_number) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) out += '\n';
    const bool final_answer = steps[i].terminal && i + 1 == steps.size();
    if (final_answer) {
      out += "### Final Answer: ";
    } else {
      out += "### Step " + std::to_string(first_number + i) + ": ";
    }
    out += steps[i].text;
  }
  return out;
}

std::string extract_answer(std::string_view terminal_text) {
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(terminal_text.begin(), terminal_text.end(), m, answer_marker()))
    return std::string(trim(m[1].str()));
  return std::string(trim(terminal_text));
}

GenerationResult PolicyBackend::generate_continuation(const Question& question,
                                                      std::span<const Step> prefix,
                                                      std::uint64_t draw) const {
  if (std::any_of(prefix.begin(), prefix.end(), [](const Step& s) { return s.terminal; }))
    throw PreconditionError("prefix already terminal");
  auto result = do_generate(question, prefix, draw);
  if (result.steps.empty()) throw ParseError("no parseable steps");
  return result;
}

double PolicyBackend::evaluate_node(const Question& question, std::span<const Step> prefix,
                                    std::string_view candidate) const {
  if (trim(candidate).empty()) throw PreconditionError("candidate step is empty");
  const double score = do_evaluate(question, prefix, candidate);
  if (std::isnan(score)) throw ParseError("evaluation produced NaN");
  return std::clamp(score, -1.0, 1.0);
}

}  // namespace comcts
