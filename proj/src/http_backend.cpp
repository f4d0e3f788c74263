#include "comcts/http_backend.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "comcts/text.hpp"

namespace comcts {

namespace {

using nlohmann::json;

std::string mime_for(std::string_view path) {
  const std::string lower = to_lower(path);
  auto ends_with = [&](std::string_view ext) {
    return lower.size() >= ext.size() && lower.compare(lower.size() - ext.size(), ext.size(), ext) == 0;
  };
  if (ends_with(".png")) return "image/png";
  if (ends_with(".gif")) return "image/gif";
  if (ends_with(".webp")) return "image/webp";
  return "image/jpeg";
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<unsigned char>(bytes[i]) << 16) |
                   (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (i + 1 == bytes.size()) {
    const auto n = static_cast<unsigned char>(bytes[i]) << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const auto n = (static_cast<unsigned char>(bytes[i]) << 16) |
                   (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string image_url_for(std::string_view image) {
  const std::string lower = to_lower(image.substr(0, 8));
  if (lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("data:"))
    return std::string(image);
  std::ifstream in{std::string(image), std::ios::binary};
  if (!in) return std::string(image);
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return "data:" + mime_for(image) + ";base64," + base64_encode(bytes);
}

std::string HttpChatBackend::api_key_variable(std::string_view backend_name) {
  std::string var = "COMCTS_API_KEY_";
  for (char c : backend_name)
    var += std::isalnum(static_cast<unsigned char>(c))
               ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
               : '_';
  return var;
}

HttpChatBackend::HttpChatBackend(PolicyDescriptor descriptor, PromptTemplates prompts)
    : descriptor_(std::move(descriptor)), prompts_(std::move(prompts)) {
  descriptor_.validate();
  if (descriptor_.kind != BackendKind::http_chat)
    throw std::invalid_argument("policy '" + descriptor_.name + "' is not an http backend");

  const std::string& url = descriptor_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint must start with http:// or https://: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();

  if (const char* key = std::getenv(api_key_variable(descriptor_.name).c_str())) api_key_ = key;
}

std::string HttpChatBackend::build_request(std::string_view system, const std::string& user,
                                           const Question& question, double temperature,
                                           const std::optional<std::string>& retry_exchange) const {
  json user_content;
  if (question.image) {
    user_content = json::array();
    user_content.push_back({{"type", "text"}, {"text", user}});
    user_content.push_back(
        {{"type", "image_url"}, {"image_url", {{"url", image_url_for(*question.image)}}}});
  } else {
    user_content = user;
  }
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", system}});
  messages.push_back({{"role", "user"}, {"content", user_content}});
  if (retry_exchange) {
    messages.push_back({{"role", "assistant"}, {"content", *retry_exchange}});
    messages.push_back({{"role", "user"}, {"content", prompts_.score_retry}});
  }
  json body = {{"model", descriptor_.model_id},
               {"messages", messages},
               {"temperature", temperature},
               {"max_tokens", descriptor_.max_tokens}};
  return body.dump();
}

HttpChatBackend::Reply HttpChatBackend::post(const std::string& body) const {
  httplib::Client client(origin_);
  const auto timeout = std::chrono::milliseconds(descriptor_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const std::string path = base_path_ + "/chat/completions";
  std::uint64_t backoff_ms = descriptor_.retry.initial_backoff_ms;
  std::string last_error;
  for (std::size_t attempt = 1; attempt <= descriptor_.retry.max_attempts; ++attempt) {
    ++requests_sent_;
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      json reply;
      try {
        reply = json::parse(res->body);
        const auto& choice = reply.at("choices").at(0);
        Reply out;
        const auto& content = choice.at("message").at("content");
        out.content = content.is_string() ? content.get<std::string>() : content.dump();
        if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string())
          out.finish_reason = it->get<std::string>();
        return out;
      } catch (const json::exception& e) {
        throw BackendError("policy '" + descriptor_.name + "': malformed response: " + e.what());
      }
    } else if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      throw BackendError("policy '" + descriptor_.name + "': HTTP " + std::to_string(res->status) +
                         ": " + res->body.substr(0, 200));
    }
    if (attempt < descriptor_.retry.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
  throw BackendError("policy '" + descriptor_.name + "' unreachable after " +
                     std::to_string(descriptor_.retry.max_attempts) + " attempts (" + last_error + ")");
}

GenerationResult HttpChatBackend::do_generate(const Question& question,
                                              std::span<const Step> prefix,
                                              std::uint64_t /*draw*/) const {
  const std::string prefix_text = prefix.empty() ? "(none)" : render_steps(prefix);
  const std::string user = fill_template(prompts_.generate, question.text, prefix_text, "");
  const auto reply = post(build_request(prompts_.generate_system, user, question,
                                        descriptor_.temperature, std::nullopt));
  GenerationResult result;
  result.raw_text = reply.content;
  result.steps = parse_steps(reply.content);
  if (reply.finish_reason == "length") {
    result.truncated = true;
    result.steps.back().terminal = false;
  }
  return result;
}

double HttpChatBackend::do_evaluate(const Question& question, std::span<const Step> prefix,
                                    std::string_view candidate) const {
  const std::string prefix_text = prefix.empty() ? "(none)" : render_steps(prefix);
  const std::string user = fill_template(prompts_.evaluate, question.text, prefix_text, candidate);
  const auto first = post(build_request(prompts_.evaluate_system, user, question,
                                        descriptor_.eval_temperature, std::nullopt));
  try {
    return parse_score(first.content);
  } catch (const ParseError&) {
  }
  const auto second = post(build_request(prompts_.evaluate_system, user, question,
                                         descriptor_.eval_temperature, first.content));
  return parse_score(second.content);
}

}  // namespace comcts
