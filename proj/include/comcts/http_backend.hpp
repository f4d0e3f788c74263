#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "comcts/policy.hpp"

namespace comcts {

/// Client for OpenAI-compatible chat services:
/// POST {endpoint}/chat/completions with a system and a user message.
/// The bearer token is read from COMCTS_API_KEY_<NAME> at construction.
///
/// Timeouts, 429 and 5xx are retried with exponential backoff per the
/// descriptor's RetryPolicy. An evaluation reply without a parseable score
/// gets exactly one re-prompt before the vote fails with ParseError.
class HttpChatBackend final : public PolicyBackend {
 public:
  HttpChatBackend(PolicyDescriptor descriptor, PromptTemplates prompts = PromptTemplates::defaults());

  const std::string& name() const override { return descriptor_.name; }
  bool remote() const override { return true; }

  /// Number of HTTP requests issued so far, retries included.
  std::uint64_t requests_sent() const { return requests_sent_.load(); }

  /// Environment variable holding the API key for a backend name.
  static std::string api_key_variable(std::string_view backend_name);

 protected:
  GenerationResult do_generate(const Question& question, std::span<const Step> prefix,
                               std::uint64_t draw) const override;
  double do_evaluate(const Question& question, std::span<const Step> prefix,
                     std::string_view candidate) const override;

 private:
  struct Reply {
    std::string content;
    std::string finish_reason;
  };

  std::string build_request(std::string_view system, const std::string& user,
                            const Question& question, double temperature,
                            const std::optional<std::string>& retry_exchange) const;
  Reply post(const std::string& body) const;

  PolicyDescriptor descriptor_;
  PromptTemplates prompts_;
  std::string origin_;     // scheme://host[:port]
  std::string base_path_;  // path prefix before /chat/completions
  std::string api_key_;
  mutable std::atomic<std::uint64_t> requests_sent_{0};
};

/// Image reference as sent in an image_url content part: URLs pass through,
/// readable local files become base64 data URLs.
std::string image_url_for(std::string_view image);

std::string base64_encode(std::string_view bytes);

}  // namespace comcts
