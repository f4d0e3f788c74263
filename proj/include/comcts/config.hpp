#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "comcts/engine.hpp"
#include "comcts/policy.hpp"
#include "comcts/scripted_backend.hpp"
#include "comcts/sim_bench.hpp"

namespace comcts {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 15K reflective samples out of 260K searched questions.
inline constexpr double kDefaultReflectionRatio = 15000.0 / 260000.0;

struct PromptPaths {
  std::optional<std::filesystem::path> generate;
  std::optional<std::filesystem::path> evaluate;
  std::optional<std::filesystem::path> reflect;
};

/// Everything a search or dataset run needs, validated before work starts.
/// Secrets never live here; http backends read them from the environment.
struct RunConfig {
  SearchConfig search;
  std::vector<PolicyDescriptor> ensemble;
  PromptPaths prompts;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double reflection_ratio = kDefaultReflectionRatio;

  void validate() const;
};

/// Parsers reject unknown keys and name the offending key in ConfigError.
SearchConfig parse_search_config(const nlohmann::json& doc);
SimProfile parse_sim_profile(const nlohmann::json& doc);
PolicyDescriptor parse_policy(const nlohmann::json& doc);
/// Relative prompt paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
BenchConfig parse_bench_config(const nlohmann::json& doc);

/// Read + parse; unreadable files raise IoError, bad content ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);
BenchConfig load_bench_config(const std::filesystem::path& path);

/// Defaults overridden by any template files named in `paths`.
PromptTemplates load_prompts(const PromptPaths& paths);

/// Instantiates the ensemble. Scripted backends look their tasks up in
/// `book`, which must be set when any descriptor is scripted.
Ensemble make_ensemble(const std::vector<PolicyDescriptor>& descriptors,
                       const PromptTemplates& prompts, std::shared_ptr<const TaskBook> book,
                       std::uint64_t run_seed);

}  // namespace comcts
