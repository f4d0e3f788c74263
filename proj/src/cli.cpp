#include "comcts/cli.hpp"

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "comcts/config.hpp"
#include "comcts/dataset_io.hpp"
#include "comcts/random.hpp"
#include "comcts/reflection.hpp"
#include "comcts/sim_bench.hpp"

namespace comcts::cli {

namespace {

using nlohmann::ordered_json;

volatile std::sig_atomic_t g_interrupted = 0;

bool interrupted() { return g_interrupted != 0; }

struct GlobalOptions {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 0;
  bool workers_set = false;
  std::string format = "text";

  bool machine() const { return format == "machine"; }
};

/// Maps library exceptions onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DatasetError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  }
}

void report_line_errors(std::ostream& err, const std::string& file,
                        const std::vector<LineError>& errors) {
  for (const auto& e : errors) err << file << ":" << e.line << ": " << e.message << "\n";
}

ordered_json summary_json(std::size_t questions, std::size_t succeeded, double avg_iterations,
                          const std::optional<StepStats>& stats) {
  ordered_json j;
  j["questions"] = questions;
  j["succeeded"] = succeeded;
  j["success_rate"] = questions ? static_cast<double>(succeeded) / static_cast<double>(questions) : 0.0;
  j["avg_iterations"] = avg_iterations;
  j["step_stats"] = stats ? stats_to_json(*stats) : ordered_json(nullptr);
  return j;
}

void print_summary(std::ostream& out, const ordered_json& s) {
  out << "questions:      " << s["questions"].get<std::size_t>() << "\n"
      << "succeeded:      " << s["succeeded"].get<std::size_t>() << "\n"
      << std::fixed << std::setprecision(1)
      << "success rate:   " << 100.0 * s["success_rate"].get<double>() << "%\n"
      << std::setprecision(2)
      << "avg iterations: " << s["avg_iterations"].get<double>()
      << " (failures count as max_iterations)\n";
  if (!s["step_stats"].is_null())
    out << "mean steps:     " << s["step_stats"]["mean"].get<double>() << "\n";
  out.unsetf(std::ios::floatfield);
}

int cmd_search(const GlobalOptions& g, const std::string& questions_path,
               const std::string& out_path, std::ostream& out, std::ostream& err) {
  if (g.config.empty()) {
    err << "search needs --config\n";
    return kExitUsage;
  }
  RunConfig config = load_run_config(g.config);
  if (g.seed_set) config.seed = g.seed;
  if (g.workers_set) config.workers = g.workers;
  config.validate();

  auto load = load_questions(questions_path);
  report_line_errors(err, questions_path, load.errors);
  const auto& questions = load.records;

  auto book = std::make_shared<TaskBook>();
  for (const auto& q : questions) book->add(derive_synthetic_task(q.question(), q.ground_truth));
  const auto prompts = load_prompts(config.prompts);
  Ensemble ensemble;
  try {
    ensemble = make_ensemble(config.ensemble, prompts, book, config.seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  RecordWriter writer(out_path);

  const std::size_t n = questions.size();
  enum Slot : char { pending, ready, skipped };
  std::vector<Slot> state(n, pending);
  std::vector<std::optional<SearchRecord>> slots(n);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      std::optional<SearchRecord> record;
      if (!interrupted()) {
        try {
          const auto& q = questions[i];
          auto outcome = search(q.question(), q.ground_truth, ensemble, config.search, config.seed);
          record = make_record(q, outcome);
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          err << "question '" << questions[i].id << "' failed: " << e.what() << "\n";
        }
      }
      std::lock_guard lock(mu);
      state[i] = interrupted() && !record ? skipped : ready;
      slots[i] = std::move(record);
      cv.notify_all();
    }
  };

  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  double iteration_sum = 0.0;
  std::vector<std::size_t> lengths;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(config.workers, std::max<std::size_t>(n, 1)); ++w)
      pool.emplace_back(worker);

    for (std::size_t i = 0; i < n; ++i) {
      std::optional<SearchRecord> record;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return state[i] != pending; });
        if (state[i] == skipped) break;
        record = std::move(slots[i]);
      }
      ++attempted;
      if (!record) {
        iteration_sum += static_cast<double>(config.search.max_iterations);
        continue;
      }
      writer.write(*record);
      if (record->telemetry.succeeded) {
        ++succeeded;
        iteration_sum += static_cast<double>(record->telemetry.iterations_used);
        lengths.push_back(record->effective_path.size());
      } else {
        iteration_sum += static_cast<double>(config.search.max_iterations);
      }
    }
  }

  std::optional<StepStats> stats;
  if (!lengths.empty()) stats = step_stats_of(lengths);
  const auto summary =
      summary_json(attempted, succeeded, attempted ? iteration_sum / static_cast<double>(attempted) : 0.0, stats);
  if (g.machine()) {
    out << summary.dump() << "\n";
  } else {
    print_summary(out, summary);
  }
  if (interrupted()) {
    err << "interrupted; " << attempted << " of " << n << " questions written\n";
    return kExitInterrupted;
  }
  if (attempted > 0 && succeeded == 0) return kExitAllFailed;
  return kExitOk;
}

int cmd_build_dataset(const GlobalOptions& g, const std::string& records_path,
                      const std::string& out_path, std::string sft_path, std::optional<double> ratio_flag,
                      std::ostream& out, std::ostream& err) {
  double ratio = kDefaultReflectionRatio;
  std::uint64_t seed = 0;
  double exploration_c = SearchConfig{}.exploration_c;
  std::string reflect_prompt(kDefaultReflectPrompt);
  if (!g.config.empty()) {
    const auto config = load_run_config(g.config);
    ratio = config.reflection_ratio;
    seed = config.seed;
    exploration_c = config.search.exploration_c;
    reflect_prompt = load_prompts(config.prompts).reflect;
  }
  if (ratio_flag) ratio = *ratio_flag;
  if (g.seed_set) seed = g.seed;
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    err << "reflection ratio must lie in [0, 1], got " << ratio << "\n";
    return kExitUsage;
  }
  if (sft_path.empty()) {
    const std::filesystem::path p(out_path);
    sft_path = (p.parent_path() / (p.stem().string() + ".sft.jsonl")).string();
  }

  auto read = read_records(records_path);
  report_line_errors(err, records_path, read.errors);
  std::vector<SearchRecord> kept;
  for (auto& r : read.records)
    if (r.telemetry.succeeded && r.has_effective_path()) kept.push_back(std::move(r));
  if (kept.empty()) err << "warning: no succeeded records; writing an empty dataset\n";

  std::vector<std::optional<ReflectivePath>> candidates;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& r = kept[i];
    candidates.push_back(build_reflective_path(r.tree, r.effective_node_ids,
                                               mix_seed({seed, fnv1a(r.question.id)}), exploration_c,
                                               reflect_prompt));
    if (candidates.back()) eligible.push_back(i);
  }
  std::size_t with_reflection = 0;
  if (ratio > 0.0 && !kept.empty()) {
    const auto sample = sample_reflection_subset(eligible, kept.size(), ratio, seed);
    if (sample.clamped)
      err << "warning: requested " << sample.requested << " reflective paths but only "
          << eligible.size() << " records are eligible\n";
    for (std::size_t i : sample.indices) kept[i].reflective_path = candidates[i];
    with_reflection = sample.indices.size();
  }

  write_records(out_path, kept);
  std::ofstream sft(sft_path);
  if (!sft) throw IoError("cannot write " + sft_path);
  for (const auto& r : kept) {
    sft << sft_to_json(flatten_for_sft(r, PathKind::effective)).dump() << "\n";
    if (r.reflective_path) sft << sft_to_json(flatten_for_sft(r, PathKind::reflective)).dump() << "\n";
  }

  if (g.machine()) {
    ordered_json j;
    j["records"] = kept.size();
    j["reflective"] = with_reflection;
    j["dataset"] = out_path;
    j["sft"] = sft_path;
    out << j.dump() << "\n";
  } else {
    out << "records:    " << kept.size() << "\n"
        << "reflective: " << with_reflection << "\n"
        << "dataset:    " << out_path << "\n"
        << "sft view:   " << sft_path << "\n";
  }
  return kExitOk;
}

int cmd_analyze(const GlobalOptions& g, const std::string& records_path, std::ostream& out,
                std::ostream& err) {
  auto read = read_records(records_path);
  report_line_errors(err, records_path, read.errors);
  std::size_t succeeded = 0;
  for (const auto& r : read.records) succeeded += r.has_effective_path() ? 1 : 0;
  if (succeeded == 0) {
    err << "no records with an effective path in " << records_path << "\n";
    return read.records.empty() ? kExitOk : kExitAllFailed;
  }
  const auto overall = step_stats(read.records, false);
  const auto by_topic = step_stats(read.records, true);
  if (g.machine()) {
    ordered_json j;
    j["records"] = read.records.size();
    j["with_effective_path"] = succeeded;
    j["overall"] = stats_to_json(overall.front());
    j["by_topic"] = ordered_json::array();
    for (const auto& s : by_topic) j["by_topic"].push_back(stats_to_json(s));
    out << j.dump() << "\n";
    return kExitOk;
  }
  auto print = [&](const StepStats& s, const char* unnamed) {
    out << std::left << std::setw(16) << s.group_key.value_or(unnamed) << std::right
        << std::setw(8) << s.count << std::setw(10) << std::fixed << std::setprecision(2) << s.mean
        << "  ";
    for (const auto& [steps, freq] : s.histogram) out << steps << ":" << freq << " ";
    out << "\n";
  };
  out << "records: " << read.records.size() << ", with effective path: " << succeeded << "\n";
  out << std::left << std::setw(16) << "group" << std::right << std::setw(8) << "paths"
      << std::setw(10) << "mean" << "  histogram (steps:count)\n";
  print(overall.front(), "(all)");
  if (!(by_topic.size() == 1 && !by_topic.front().group_key))
    for (const auto& s : by_topic) print(s, "(untagged)");
  out.unsetf(std::ios::floatfield);
  return kExitOk;
}

int cmd_bench(const GlobalOptions& g, const std::string& report_path, std::ostream& out) {
  BenchConfig config = g.config.empty() ? default_bench_config() : load_bench_config(g.config);
  if (g.seed_set) config.seed = g.seed;
  if (g.workers_set) config.workers = g.workers;
  config.validate();
  const auto world = generate_world(config.n_tasks, config.topic_mix, config.world_seed);
  const auto report = run_bench(world, config);
  const auto doc = bench_to_json(report);
  if (!report_path.empty()) {
    std::ofstream file(report_path);
    if (!file) throw IoError("cannot write " + report_path);
    file << doc.dump(2) << "\n";
  }
  if (g.machine()) {
    out << doc.dump() << "\n";
  } else {
    out << bench_table(report);
  }
  return kExitOk;
}

}  // namespace

void request_interrupt() noexcept { g_interrupted = 1; }
void clear_interrupt() noexcept { g_interrupted = 0; }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Collective Monte Carlo tree search over reasoning paths", "comcts"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Run config (search, build-dataset) or bench config (bench)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Global seed");
  auto* workers_opt = app.add_option("--workers", g.workers, "Questions searched in parallel")
                          ->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "machine"}));

  std::string questions, out_path, records, sft_out, report_out;
  double ratio = 0.0;

  auto* search_cmd = app.add_subcommand("search", "Search reasoning trees for a question file");
  search_cmd->add_option("--questions", questions, "Question file (JSON lines)")->required();
  search_cmd->add_option("--out", out_path, "Record file to write")->required();

  auto* build_cmd = app.add_subcommand("build-dataset", "Build the training dataset from records");
  build_cmd->add_option("--records", records, "Search records")->required();
  build_cmd->add_option("--out", out_path, "Dataset file to write")->required();
  build_cmd->add_option("--sft-out", sft_out, "Flattened prompt/target file");
  auto* ratio_opt = build_cmd->add_option("--ratio", ratio, "Share of records given a reflective path");

  auto* analyze_cmd = app.add_subcommand("analyze", "Step-count distribution of effective paths");
  analyze_cmd->add_option("--records", records, "Search records")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Compare collective search with single-model MCTS");
  bench_cmd->add_option("--out", report_out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;
  g.workers_set = workers_opt->count() > 0;

  return guarded(err, [&] {
    if (*search_cmd) return cmd_search(g, questions, out_path, out, err);
    if (*build_cmd)
      return cmd_build_dataset(g, records, out_path, sft_out,
                               ratio_opt->count() ? std::optional<double>(ratio) : std::nullopt, out, err);
    if (*analyze_cmd) return cmd_analyze(g, records, out, err);
    return cmd_bench(g, report_out, out);
  });
}

}  // namespace comcts::cli
