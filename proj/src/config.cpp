#include "comcts/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <string_view>

#include "comcts/dataset_io.hpp"
#include "comcts/http_backend.hpp"

namespace comcts {

namespace {

using nlohmann::json;

void require_object(const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + ": expected an object");
}

void check_keys(const json& doc, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  require_object(doc, where);
  for (const auto& [key, _] : doc.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
}

std::string path_of(const std::string& where, std::string_view key) {
  return where.empty() ? std::string(key) : where + "." + std::string(key);
}

template <class T>
T value_of(const json& v, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(where + ": expected a non-negative integer");
    }
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong type");
  }
}

template <class T>
void read_optional(const json& doc, std::string_view key, const std::string& where, T& target) {
  if (auto it = doc.find(key); it != doc.end()) target = value_of<T>(*it, path_of(where, key));
}

template <class T>
T read_required(const json& doc, std::string_view key, const std::string& where) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ConfigError("missing required key '" + path_of(where, key) + "'");
  return value_of<T>(*it, path_of(where, key));
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read prompt template " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class F>
auto rethrow_as_config(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<PolicyDescriptor> parse_ensemble(const json& doc, const std::string& where) {
  if (!doc.is_array() || doc.empty()) throw ConfigError(where + ": expected a non-empty array");
  std::vector<PolicyDescriptor> out;
  for (const auto& d : doc) {
    out.push_back(parse_policy(d));
    for (std::size_t i = 0; i + 1 < out.size(); ++i)
      if (out[i].name == out.back().name)
        throw ConfigError(where + ": duplicate model name '" + out.back().name + "'");
  }
  return out;
}

}  // namespace

SearchConfig parse_search_config(const json& doc) {
  const std::string where = "search";
  check_keys(doc, {"max_iterations", "threshold_t", "exploration_c", "candidates_per_model", "max_inflight"},
             where);
  SearchConfig c;
  read_optional(doc, "max_iterations", where, c.max_iterations);
  read_optional(doc, "threshold_t", where, c.threshold_t);
  read_optional(doc, "exploration_c", where, c.exploration_c);
  read_optional(doc, "candidates_per_model", where, c.candidates_per_model);
  read_optional(doc, "max_inflight", where, c.max_inflight);
  rethrow_as_config([&] {
    c.validate();
    return 0;
  });
  return c;
}

SimProfile parse_sim_profile(const json& doc) {
  const std::string where = "profile";
  check_keys(doc, {"step_accuracy", "knowledge_topics", "eval_noise", "rng_seed"}, where);
  SimProfile p;
  read_optional(doc, "step_accuracy", where, p.step_accuracy);
  read_optional(doc, "knowledge_topics", where, p.knowledge_topics);
  read_optional(doc, "eval_noise", where, p.eval_noise);
  read_optional(doc, "rng_seed", where, p.rng_seed);
  rethrow_as_config([&] {
    p.validate();
    return 0;
  });
  return p;
}

PolicyDescriptor parse_policy(const json& doc) {
  check_keys(doc,
             {"name", "kind", "endpoint", "model_id", "temperature", "eval_temperature", "max_tokens",
              "timeout_ms", "max_attempts", "initial_backoff_ms", "profile"},
             "ensemble[]");
  PolicyDescriptor d;
  d.name = read_required<std::string>(doc, "name", "ensemble[]");
  const std::string where = "ensemble[" + d.name + "]";
  d.kind = rethrow_as_config(
      [&] { return backend_kind_from_string(read_required<std::string>(doc, "kind", where)); });
  read_optional(doc, "endpoint", where, d.endpoint);
  read_optional(doc, "model_id", where, d.model_id);
  read_optional(doc, "temperature", where, d.temperature);
  read_optional(doc, "eval_temperature", where, d.eval_temperature);
  read_optional(doc, "max_tokens", where, d.max_tokens);
  read_optional(doc, "timeout_ms", where, d.timeout_ms);
  read_optional(doc, "max_attempts", where, d.retry.max_attempts);
  read_optional(doc, "initial_backoff_ms", where, d.retry.initial_backoff_ms);
  if (auto it = doc.find("profile"); it != doc.end()) d.profile = parse_sim_profile(*it);
  rethrow_as_config([&] {
    d.validate();
    return 0;
  });
  return d;
}

void RunConfig::validate() const {
  rethrow_as_config([&] {
    search.validate();
    if (ensemble.empty()) throw ConfigError("ensemble must not be empty");
    for (const auto& d : ensemble) d.validate();
    if (workers == 0) throw ConfigError("workers must be positive");
    if (!(reflection_ratio >= 0.0 && reflection_ratio <= 1.0))
      throw ConfigError("reflection_ratio must lie in [0, 1]");
    return 0;
  });
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, {"search", "ensemble", "prompts", "seed", "workers", "reflection_ratio"}, "config");
  RunConfig c;
  if (auto it = doc.find("search"); it != doc.end()) c.search = parse_search_config(*it);
  auto ens = doc.find("ensemble");
  if (ens == doc.end()) throw ConfigError("missing required key 'ensemble'");
  c.ensemble = parse_ensemble(*ens, "ensemble");
  if (auto it = doc.find("prompts"); it != doc.end()) {
    check_keys(*it, {"generate", "evaluate", "reflect"}, "prompts");
    auto resolve = [&](const char* key, std::optional<std::filesystem::path>& target) {
      if (auto p = it->find(key); p != it->end()) {
        std::filesystem::path path = value_of<std::string>(*p, std::string("prompts.") + key);
        target = path.is_relative() ? base_dir / path : path;
      }
    };
    resolve("generate", c.prompts.generate);
    resolve("evaluate", c.prompts.evaluate);
    resolve("reflect", c.prompts.reflect);
  }
  read_optional(doc, "seed", "", c.seed);
  read_optional(doc, "workers", "", c.workers);
  read_optional(doc, "reflection_ratio", "", c.reflection_ratio);
  c.validate();
  return c;
}

BenchConfig parse_bench_config(const json& doc) {
  check_keys(doc, {"world", "ensemble", "search", "methods", "ablation", "seed", "workers"}, "bench");
  BenchConfig c = default_bench_config();
  if (auto it = doc.find("world"); it != doc.end()) {
    check_keys(*it, {"n_tasks", "topic_mix", "seed"}, "world");
    read_optional(*it, "n_tasks", "world", c.n_tasks);
    read_optional(*it, "seed", "world", c.world_seed);
    if (auto mix = it->find("topic_mix"); mix != it->end()) {
      c.topic_mix.clear();
      if (mix->is_object()) {
        for (const auto& [topic, share] : mix->items())
          c.topic_mix.push_back({topic, value_of<double>(share, "world.topic_mix." + topic)});
      } else if (mix->is_array()) {
        for (const auto& entry : *mix) {
          check_keys(entry, {"topic", "share"}, "world.topic_mix[]");
          c.topic_mix.push_back({read_required<std::string>(entry, "topic", "world.topic_mix[]"),
                                 read_required<double>(entry, "share", "world.topic_mix[]")});
        }
      } else {
        throw ConfigError("world.topic_mix: expected an object or array");
      }
    }
  }
  if (auto it = doc.find("ensemble"); it != doc.end()) c.ensemble = parse_ensemble(*it, "ensemble");
  if (auto it = doc.find("search"); it != doc.end()) c.search = parse_search_config(*it);
  read_optional(doc, "methods", "", c.methods);
  read_optional(doc, "ablation", "", c.ablation);
  read_optional(doc, "seed", "", c.seed);
  read_optional(doc, "workers", "", c.workers);
  rethrow_as_config([&] {
    c.validate();
    return 0;
  });
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path), path.parent_path());
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
  return parse_bench_config(read_json_file(path));
}

PromptTemplates load_prompts(const PromptPaths& paths) {
  auto t = PromptTemplates::defaults();
  if (paths.generate) t.generate = read_text_file(*paths.generate);
  if (paths.evaluate) t.evaluate = read_text_file(*paths.evaluate);
  if (paths.reflect) {
    t.reflect = read_text_file(*paths.reflect);
    while (!t.reflect.empty() && (t.reflect.back() == '\n' || t.reflect.back() == '\r'))
      t.reflect.pop_back();
  }
  return t;
}

Ensemble make_ensemble(const std::vector<PolicyDescriptor>& descriptors,
                       const PromptTemplates& prompts, std::shared_ptr<const TaskBook> book,
                       std::uint64_t run_seed) {
  Ensemble out;
  for (const auto& d : descriptors) {
    if (d.kind == BackendKind::scripted) {
      if (!book) throw ConfigError("scripted model '" + d.name + "' needs a task book");
      out.push_back(std::make_shared<ScriptedBackend>(d.name, *d.profile, book, run_seed, d.max_tokens));
    } else {
      out.push_back(std::make_shared<HttpChatBackend>(d, prompts));
    }
  }
  return out;
}

}  // namespace comcts
