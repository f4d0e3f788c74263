#include "comcts/dataset_io.hpp"

#include <algorithm>
#include <istream>
#include <unordered_map>

#include "comcts/policy.hpp"
#include "comcts/text.hpp"

namespace comcts {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <class T>
ordered_json optional_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<std::string> optional_string(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string required_text(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  std::string value;
  if (it->is_string()) {
    value = it->get<std::string>();
  } else if (it->is_number()) {
    value = it->dump();
  } else {
    throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  }
  if (trim(value).empty()) throw std::invalid_argument(std::string("field '") + key + "' is empty");
  return value;
}

ordered_json question_to_json(const QuestionRecord& q) {
  ordered_json j;
  j["id"] = q.id;
  j["text"] = q.text;
  j["image"] = optional_json(q.image);
  j["ground_truth"] = q.ground_truth;
  j["topic"] = optional_json(q.topic);
  return j;
}

QuestionRecord question_from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("question must be an object");
  QuestionRecord q;
  q.id = required_text(doc, "id");
  q.text = required_text(doc, "text");
  q.image = optional_string(doc, "image");
  q.ground_truth = required_text(doc, "ground_truth");
  q.topic = optional_string(doc, "topic");
  return q;
}

std::vector<Step> path_steps(std::span<const std::string> texts) {
  std::vector<Step> steps;
  for (std::size_t i = 0; i < texts.size(); ++i) steps.push_back({texts[i], i + 1 == texts.size()});
  return steps;
}

}  // namespace

QuestionLoad parse_questions(std::istream& in) {
  QuestionLoad out;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto q = question_from_json(json::parse(line));
      if (auto [it, fresh] = seen.emplace(q.id, line_no); !fresh)
        throw DatasetError("duplicate question id '" + q.id + "' on lines " +
                           std::to_string(it->second) + " and " + std::to_string(line_no));
      out.records.push_back(std::move(q));
    } catch (const DatasetError&) {
      throw;
    } catch (const std::exception& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  return out;
}

QuestionLoad load_questions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read question file " + path.string());
  return parse_questions(in);
}

SearchRecord make_record(const QuestionRecord& question, const SearchOutcome& outcome) {
  SearchRecord r{question, outcome.tree, {}, {}, std::nullopt, {}};
  if (outcome.succeeded && outcome.effective_path) {
    r.effective_node_ids = *outcome.effective_path;
    for (NodeId n : r.effective_node_ids)
      if (n != outcome.tree.root_id()) r.effective_path.push_back(outcome.tree.node(n).step_text);
  }
  r.telemetry.iterations_used = outcome.iterations_used;
  r.telemetry.succeeded = outcome.succeeded;
  for (const auto& it : outcome.telemetry)
    r.telemetry.iterations.push_back(
        {it.start_node, it.nodes_added, it.nodes_pruned, it.generation_failures, it.vote_failures});
  return r;
}

ordered_json tree_to_json(const ReasoningTree& tree) {
  ordered_json j;
  const auto& q = tree.question();
  ordered_json qj;
  qj["id"] = q.id;
  qj["text"] = q.text;
  qj["image"] = optional_json(q.image);
  qj["topic"] = optional_json(q.topic);
  j["question"] = std::move(qj);
  j["ground_truth"] = tree.ground_truth();
  j["rng_seed"] = tree.rng_seed();
  j["root_id"] = tree.root_id();
  ordered_json nodes = ordered_json::array();
  for (const auto& n : tree.nodes()) {
    ordered_json nj;
    nj["id"] = n.id;
    nj["step_text"] = n.step_text;
    nj["origin_model"] = n.origin_model;
    nj["score_r"] = optional_json(n.score_r);
    nj["value_v"] = n.value_v;
    nj["visits_n"] = n.visits_n;
    nj["is_terminal"] = n.is_terminal;
    nj["pruned"] = n.pruned;
    nj["parent_id"] = optional_json(n.parent_id);
    nj["child_ids"] = n.child_ids;
    nodes.push_back(std::move(nj));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

ReasoningTree tree_from_json(const json& doc) {
  const auto& qj = doc.at("question");
  Question q{qj.at("id").get<std::string>(), qj.at("text").get<std::string>(),
             optional_string(qj, "image"), optional_string(qj, "topic")};
  if (doc.at("root_id").get<NodeId>() != 0) throw TreeError("root_id must be 0");
  std::vector<ReasoningNode> nodes;
  for (const auto& nj : doc.at("nodes")) {
    ReasoningNode n;
    n.id = nj.at("id").get<NodeId>();
    n.step_text = nj.at("step_text").get<std::string>();
    n.origin_model = nj.at("origin_model").get<std::string>();
    if (!nj.at("score_r").is_null()) n.score_r = nj.at("score_r").get<double>();
    n.value_v = nj.at("value_v").get<double>();
    n.visits_n = nj.at("visits_n").get<std::uint64_t>();
    n.is_terminal = nj.at("is_terminal").get<bool>();
    n.pruned = nj.at("pruned").get<bool>();
    if (!nj.at("parent_id").is_null()) n.parent_id = nj.at("parent_id").get<NodeId>();
    n.child_ids = nj.at("child_ids").get<std::vector<NodeId>>();
    nodes.push_back(std::move(n));
  }
  return ReasoningTree::from_nodes(std::move(q), doc.at("ground_truth").get<std::string>(),
                                   doc.at("rng_seed").get<std::uint64_t>(), std::move(nodes));
}

ordered_json record_to_json(const SearchRecord& r) {
  ordered_json j;
  j["schema_version"] = kRecordSchemaVersion;
  j["question"] = question_to_json(r.question);
  j["effective_node_ids"] = r.effective_node_ids;
  j["effective_path"] = r.effective_path;
  if (r.reflective_path) {
    ordered_json rj;
    rj["replaced_node"] = r.reflective_path->replaced_node;
    rj["negative_node"] = r.reflective_path->negative_node;
    rj["reflect_prompt"] = r.reflective_path->reflect_prompt;
    rj["sequence"] = r.reflective_path->sequence;
    j["reflective_path"] = std::move(rj);
  } else {
    j["reflective_path"] = nullptr;
  }
  ordered_json tj;
  tj["iterations_used"] = r.telemetry.iterations_used;
  tj["succeeded"] = r.telemetry.succeeded;
  ordered_json its = ordered_json::array();
  for (const auto& it : r.telemetry.iterations) {
    ordered_json ij;
    ij["start_node"] = it.start_node;
    ij["nodes_added"] = it.nodes_added;
    ij["nodes_pruned"] = it.nodes_pruned;
    ij["generation_failures"] = it.generation_failures;
    ij["vote_failures"] = it.vote_failures;
    its.push_back(std::move(ij));
  }
  tj["iterations"] = std::move(its);
  j["telemetry"] = std::move(tj);
  j["tree"] = tree_to_json(r.tree);
  return j;
}

SearchRecord record_from_json(const json& doc) {
  const auto version = doc.at("schema_version").get<int>();
  if (version != kRecordSchemaVersion)
    throw DatasetError("unsupported schema_version " + std::to_string(version) + " (expected " +
                       std::to_string(kRecordSchemaVersion) + ")");
  SearchRecord r{question_from_json(doc.at("question")), tree_from_json(doc.at("tree")),
                 doc.at("effective_node_ids").get<std::vector<NodeId>>(),
                 doc.at("effective_path").get<std::vector<std::string>>(), std::nullopt, {}};
  if (const auto& rj = doc.at("reflective_path"); !rj.is_null()) {
    ReflectivePath p;
    p.base_path = r.effective_node_ids;
    p.replaced_node = rj.at("replaced_node").get<NodeId>();
    p.negative_node = rj.at("negative_node").get<NodeId>();
    p.reflect_prompt = rj.at("reflect_prompt").get<std::string>();
    p.sequence = rj.at("sequence").get<std::vector<std::string>>();
    r.reflective_path = std::move(p);
  }
  const auto& tj = doc.at("telemetry");
  r.telemetry.iterations_used = tj.at("iterations_used").get<std::size_t>();
  r.telemetry.succeeded = tj.at("succeeded").get<bool>();
  for (const auto& ij : tj.at("iterations"))
    r.telemetry.iterations.push_back({ij.at("start_node").get<NodeId>(),
                                      ij.at("nodes_added").get<std::size_t>(),
                                      ij.at("nodes_pruned").get<std::size_t>(),
                                      ij.at("generation_failures").get<std::size_t>(),
                                      ij.at("vote_failures").get<std::size_t>()});
  for (NodeId n : r.effective_node_ids)
    if (!r.tree.contains(n)) throw DatasetError("effective path references an unknown node");
  return r;
}

std::string serialize_record(const SearchRecord& record) { return record_to_json(record).dump(); }

SearchRecord parse_record(std::string_view line) {
  return record_from_json(json::parse(line.begin(), line.end()));
}

RecordWriter::RecordWriter(const std::filesystem::path& path) : out_(path), path_(path) {
  if (!out_) throw IoError("cannot write " + path.string());
}

void RecordWriter::write(const SearchRecord& record) {
  // One write per line keeps every completed line valid if the run stops.
  out_ << serialize_record(record) + '\n';
  out_.flush();
  if (!out_) throw IoError("write failed on " + path_.string());
}

RecordRead read_records(std::istream& in) {
  RecordRead out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.records.push_back(parse_record(line));
    } catch (const std::exception& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  return out;
}

RecordRead read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read record file " + path.string());
  return read_records(in);
}

void write_records(const std::filesystem::path& path, std::span<const SearchRecord> records) {
  RecordWriter writer(path);
  for (const auto& r : records) writer.write(r);
}

std::string render_question(const QuestionRecord& question) {
  std::string out;
  if (question.image) out += "[image: " + *question.image + "]\n";
  out += question.text;
  return out;
}

SftSample flatten_for_sft(const SearchRecord& record, PathKind which) {
  SftSample s;
  s.id = record.question.id;
  s.kind = which;
  s.prompt = render_question(record.question);
  if (which == PathKind::effective) {
    if (!record.has_effective_path()) throw std::invalid_argument("record has no effective path");
    s.target = render_steps(path_steps(record.effective_path));
  } else {
    if (!record.reflective_path) throw std::invalid_argument("record has no reflective path");
    s.target = render_steps(path_steps(record.reflective_path->sequence));
  }
  return s;
}

ordered_json sft_to_json(const SftSample& sample) {
  ordered_json j;
  j["id"] = sample.id;
  j["kind"] = sample.kind == PathKind::effective ? "effective" : "reflective";
  j["prompt"] = sample.prompt;
  j["target"] = sample.target;
  return j;
}

StepStats step_stats_of(std::span<const std::size_t> lengths, std::optional<std::string> group_key) {
  if (lengths.empty()) throw std::invalid_argument("step statistics need at least one path");
  StepStats s;
  s.group_key = std::move(group_key);
  std::size_t total = 0;
  for (std::size_t len : lengths) {
    ++s.histogram[len];
    total += len;
  }
  s.count = lengths.size();
  s.mean = static_cast<double>(total) / static_cast<double>(s.count);
  return s;
}

std::vector<StepStats> step_stats(std::span<const SearchRecord> records, bool group_by_topic) {
  std::map<std::optional<std::string>, std::vector<std::size_t>> groups;
  for (const auto& r : records) {
    if (!r.has_effective_path()) continue;
    const auto key = group_by_topic ? r.question.topic : std::nullopt;
    groups[key].push_back(r.effective_path.size());
  }
  if (groups.empty()) throw std::invalid_argument("no records with an effective path");
  std::vector<StepStats> out;
  for (const auto& [key, lengths] : groups) out.push_back(step_stats_of(lengths, key));
  return out;
}

ordered_json stats_to_json(const StepStats& stats) {
  ordered_json j;
  j["group"] = optional_json(stats.group_key);
  j["count"] = stats.count;
  j["mean"] = stats.mean;
  ordered_json hist = ordered_json::object();
  for (const auto& [steps, freq] : stats.histogram) hist[std::to_string(steps)] = freq;
  j["histogram"] = std::move(hist);
  return j;
}

}  // namespace comcts
