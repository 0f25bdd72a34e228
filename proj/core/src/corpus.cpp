#include "algotag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "algotag/error.hpp"

namespace algotag::corpus {
namespace {

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

const std::unordered_set<std::string_view>& known_fields() {
  static const std::unordered_set<std::string_view> fields = {
      "id",        "title",      "time_limit_s", "memory_limit_mb", "statement",
      "input_spec", "output_spec", "notes",       "tags"};
  return fields;
}

std::string at_line(std::size_t line) { return " at line " + std::to_string(line); }

const Json& require(const Json& record, const char* field, std::size_t line) {
  const auto it = record.find(field);
  if (it == record.end() || it->is_null()) {
    throw InputFormatError(std::string("missing field ") + field + at_line(line));
  }
  return *it;
}

std::string require_string(const Json& record, const char* field, std::size_t line) {
  const Json& value = require(record, field, line);
  if (!value.is_string()) {
    throw InputFormatError(std::string("field ") + field + " must be a string" + at_line(line));
  }
  return value.get<std::string>();
}

}  // namespace

std::string_view to_string(TextPart part) {
  switch (part) {
    case TextPart::kFull: return "full";
    case TextPart::kStatementOnly: return "statement";
    case TextPart::kIoAndConstraints: return "io";
  }
  return "full";
}

TextPart parse_text_part(std::string_view name) {
  if (name == "full") return TextPart::kFull;
  if (name == "statement") return TextPart::kStatementOnly;
  if (name == "io") return TextPart::kIoAndConstraints;
  throw ParameterError("unknown problem part '" + std::string(name) +
                       "' (expected full, statement or io)");
}

void validate(const Problem& problem) {
  const std::string who = "problem " + problem.id + ": ";
  if (problem.id.empty()) throw InputFormatError("problem with empty id");
  if (is_blank(problem.statement)) throw InputFormatError(who + "statement is empty");
  if (is_blank(problem.input_spec)) throw InputFormatError(who + "input_spec is empty");
  if (is_blank(problem.output_spec)) throw InputFormatError(who + "output_spec is empty");
  if (!(problem.time_limit_s > 0.0)) throw InputFormatError(who + "time_limit_s must be positive");
  if (problem.memory_limit_mb <= 0) throw InputFormatError(who + "memory_limit_mb must be positive");
}

Json to_json(const Problem& problem) {
  Json record = {
      {"id", problem.id},
      {"title", problem.title},
      {"time_limit_s", problem.time_limit_s},
      {"memory_limit_mb", problem.memory_limit_mb},
      {"statement", problem.statement},
      {"input_spec", problem.input_spec},
      {"output_spec", problem.output_spec},
  };
  if (problem.notes) record["notes"] = *problem.notes;
  record["tags"] = Json::array();
  for (const auto& tag : problem.tags) record["tags"].push_back(tag);
  return record;
}

Problem problem_from_json(const Json& record, std::size_t line) {
  if (!record.is_object()) throw InputFormatError("malformed record" + at_line(line));
  Problem p;
  p.id = require_string(record, "id", line);
  p.title = require_string(record, "title", line);

  const Json& time = require(record, "time_limit_s", line);
  if (!time.is_number()) throw InputFormatError("field time_limit_s must be a number" + at_line(line));
  p.time_limit_s = time.get<double>();
  if (!(p.time_limit_s > 0.0)) throw InputFormatError("time_limit_s must be positive" + at_line(line));

  const Json& memory = require(record, "memory_limit_mb", line);
  if (!memory.is_number_integer()) {
    throw InputFormatError("field memory_limit_mb must be an integer" + at_line(line));
  }
  p.memory_limit_mb = memory.get<long long>();
  if (p.memory_limit_mb <= 0) throw InputFormatError("memory_limit_mb must be positive" + at_line(line));

  p.statement = require_string(record, "statement", line);
  p.input_spec = require_string(record, "input_spec", line);
  p.output_spec = require_string(record, "output_spec", line);
  if (const auto it = record.find("notes"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw InputFormatError("field notes must be a string" + at_line(line));
    p.notes = it->get<std::string>();
  }
  const Json& tags = require(record, "tags", line);
  if (!tags.is_array()) throw InputFormatError("field tags must be an array" + at_line(line));
  for (const auto& tag : tags) {
    if (!tag.is_string()) throw InputFormatError("tags must be strings" + at_line(line));
    p.tags.insert(tag.get<std::string>());
  }
  return p;
}

std::vector<Problem> parse_corpus_text(std::string_view text, Diagnostics* diagnostics) {
  std::vector<Problem> problems;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_blank(line)) {
      if (end == text.size()) break;
      continue;
    }
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error&) {
      throw InputFormatError("malformed record" + at_line(line_no));
    }
    Problem p = problem_from_json(record, line_no);
    if (diagnostics) {
      for (const auto& [key, value] : record.items()) {
        if (!known_fields().contains(key)) {
          diagnostics->warnings.push_back("unknown field " + key + " ignored" + at_line(line_no));
        }
      }
    }
    if (!seen.insert(p.id).second) {
      throw InputFormatError("duplicate id " + p.id + at_line(line_no));
    }
    problems.push_back(std::move(p));
    if (end == text.size()) break;
  }
  return problems;
}

std::vector<Problem> parse_corpus(const std::filesystem::path& path, Diagnostics* diagnostics) {
  return parse_corpus_text(read_file(path), diagnostics);
}

std::string render_corpus(const std::vector<Problem>& problems) {
  std::string out;
  for (const auto& p : problems) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems) {
  write_file_atomic(path, render_corpus(problems));
}

std::string constraint_lines(const Problem& problem) {
  return "time limit per test: " + format_number(problem.time_limit_s) +
         " seconds\nmemory limit per test: " + std::to_string(problem.memory_limit_mb) +
         " megabytes";
}

ProblemText full_text(const Problem& problem) {
  validate(problem);
  std::string text = problem.title + "\n" + constraint_lines(problem) + "\n" +
                     problem.statement + "\n" + problem.input_spec + "\n" + problem.output_spec;
  if (problem.notes) text += "\n" + *problem.notes;
  return {std::move(text), TextPart::kFull};
}

std::pair<ProblemText, ProblemText> component_split(const Problem& problem) {
  validate(problem);
  std::string statement = problem.statement;
  if (problem.notes) statement += "\n" + *problem.notes;
  std::string io = constraint_lines(problem) + "\n" + problem.input_spec + "\n" + problem.output_spec;
  return {ProblemText{std::move(statement), TextPart::kStatementOnly},
          ProblemText{std::move(io), TextPart::kIoAndConstraints}};
}

ProblemText select_text(const Problem& problem, TextPart part) {
  switch (part) {
    case TextPart::kFull: return full_text(problem);
    case TextPart::kStatementOnly: return component_split(problem).first;
    case TextPart::kIoAndConstraints: return component_split(problem).second;
  }
  return full_text(problem);
}

}  // namespace algotag::corpus
