#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "comcts/engine.hpp"
#include "comcts/reasoning_tree.hpp"
#include "comcts/reflection.hpp"

namespace comcts {

inline constexpr int kRecordSchemaVersion = 1;

/// Unreadable or unwritable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Content that cannot be accepted as a whole (e.g. duplicate ids).
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuestionRecord {
  std::string id;
  std::string text;
  std::optional<std::string> image;
  std::string ground_truth;
  std::optional<std::string> topic;

  Question question() const { return {id, text, image, topic}; }

  bool operator==(const QuestionRecord&) const = default;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct QuestionLoad {
  std::vector<QuestionRecord> records;
  std::vector<LineError> errors;  // rejected lines
};

/// Line-delimited question records (id, text, image, ground_truth, topic).
/// Invalid lines are skipped and reported; duplicate ids throw DatasetError.
QuestionLoad load_questions(const std::filesystem::path& path);
QuestionLoad parse_questions(std::istream& in);

struct IterationSummary {
  NodeId start_node = 0;
  std::size_t nodes_added = 0;
  std::size_t nodes_pruned = 0;
  std::size_t generation_failures = 0;
  std::size_t vote_failures = 0;

  bool operator==(const IterationSummary&) const = default;
};

/// Deterministic part of the search telemetry; wall-clock timings are not
/// stored so that seeded runs serialize to identical bytes.
struct RecordTelemetry {
  std::size_t iterations_used = 0;
  bool succeeded = false;
  std::vector<IterationSummary> iterations;

  bool operator==(const RecordTelemetry&) const = default;
};

/// One dataset entry: question, effective path, optional reflective path and
/// the full tree.
struct SearchRecord {
  QuestionRecord question;
  ReasoningTree tree;
  std::vector<NodeId> effective_node_ids;  // root-first, empty when the search failed
  std::vector<std::string> effective_path;  // step texts without the root
  std::optional<ReflectivePath> reflective_path;
  RecordTelemetry telemetry;

  bool has_effective_path() const { return !effective_path.empty(); }

  bool operator==(const SearchRecord&) const = default;
};

SearchRecord make_record(const QuestionRecord& question, const SearchOutcome& outcome);

nlohmann::ordered_json tree_to_json(const ReasoningTree& tree);
ReasoningTree tree_from_json(const nlohmann::json& doc);
nlohmann::ordered_json record_to_json(const SearchRecord& record);
SearchRecord record_from_json(const nlohmann::json& doc);

/// Canonical single-line form: fixed field order, shortest round-trip numbers.
std::string serialize_record(const SearchRecord& record);
SearchRecord parse_record(std::string_view line);

/// Appends records one line at a time, flushing after each line.
class RecordWriter {
 public:
  explicit RecordWriter(const std::filesystem::path& path);
  void write(const SearchRecord& record);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

struct RecordRead {
  std::vector<SearchRecord> records;
  std::vector<LineError> errors;  // corrupt lines, schema mismatches
};

RecordRead read_records(const std::filesystem::path& path);
RecordRead read_records(std::istream& in);
void write_records(const std::filesystem::path& path, std::span<const SearchRecord> records);

enum class PathKind { effective, reflective };

struct SftSample {
  std::string id;
  PathKind kind = PathKind::effective;
  std::string prompt;
  std::string target;
};

/// Question text with its image reference, as used for SFT prompts.
std::string render_question(const QuestionRecord& question);

/// Prompt/target pair; targets use the canonical step delimiters.
/// Throws std::invalid_argument when the requested path is absent.
SftSample flatten_for_sft(const SearchRecord& record, PathKind which);
nlohmann::ordered_json sft_to_json(const SftSample& sample);

struct StepStats {
  std::map<std::size_t, std::size_t> histogram;  // step count -> frequency
  double mean = 0.0;
  std::size_t count = 0;
  std::optional<std::string> group_key;
};

StepStats step_stats_of(std::span<const std::size_t> lengths,
                        std::optional<std::string> group_key = std::nullopt);

/// Step-count distribution of effective paths, overall or one entry per
/// topic (untagged records grouped under no key). Records without an
/// effective path are ignored; throws std::invalid_argument when none remain.
std::vector<StepStats> step_stats(std::span<const SearchRecord> records, bool group_by_topic);
nlohmann::ordered_json stats_to_json(const StepStats& stats);

}  // namespace comcts
