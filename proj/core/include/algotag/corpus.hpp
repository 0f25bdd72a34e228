#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "algotag/serialization.hpp"

namespace algotag::corpus {

// One programming word problem as it appears in the raw dump.
struct Problem {
  std::string id;
  std::string title;
  double time_limit_s = 1.0;
  long long memory_limit_mb = 256;
  std::string statement;
  std::string input_spec;
  std::string output_spec;
  std::optional<std::string> notes;
  std::set<std::string> tags;

  bool operator==(const Problem&) const = default;
};

enum class TextPart { kFull, kStatementOnly, kIoAndConstraints };

std::string_view to_string(TextPart part);
TextPart parse_text_part(std::string_view name);

struct ProblemText {
  std::string text;
  TextPart part = TextPart::kFull;
};

// Non-fatal findings while reading a corpus (unknown fields and the like).
struct Diagnostics {
  std::vector<std::string> warnings;
};

// Throws InputFormatError when statement, input or output is blank or a limit
// is not positive.
void validate(const Problem& problem);

Json to_json(const Problem& problem);

// `line` is only used to locate errors.
Problem problem_from_json(const Json& record, std::size_t line);

// Reads the line-delimited corpus format. Blank lines are skipped; every other
// line must hold one JSON object.
std::vector<Problem> parse_corpus(const std::filesystem::path& path,
                                  Diagnostics* diagnostics = nullptr);
std::vector<Problem> parse_corpus_text(std::string_view text,
                                       Diagnostics* diagnostics = nullptr);

std::string render_corpus(const std::vector<Problem>& problems);
void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems);

// "time limit per test: {t} seconds\nmemory limit per test: {m} megabytes"
std::string constraint_lines(const Problem& problem);

ProblemText full_text(const Problem& problem);

// Statement (plus notes) and constraints with I/O format. The title is in
// neither part.
std::pair<ProblemText, ProblemText> component_split(const Problem& problem);

ProblemText select_text(const Problem& problem, TextPart part);

}  // namespace algotag::corpus
