#pragma once

// Data model for sampled generations and the JSON-lines dataset format.
//
// All probabilities are stored as natural-log values. Character spans are
// byte offsets into the UTF-8 response text.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace wse {

// Half-open interval [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end > start ? end - start : 0; }
  bool operator==(const Span&) const = default;
};

struct Token {
  std::string text;
  double logprob = 0.0;  // ln p(token | prefix), always <= 0
  Span span;

  bool operator==(const Token&) const = default;
};

struct GenerationRecord {
  std::string text;
  std::vector<Token> tokens;

  bool operator==(const GenerationRecord&) const = default;
};

struct QASample {
  std::string id;
  std::string question;
  std::optional<std::string> context;
  std::vector<std::string> references;
  GenerationRecord most_likely;
  std::vector<GenerationRecord> responses;
  // 1-based line in the source file; 0 when built in memory.
  std::size_t line = 0;

  std::size_t k() const { return responses.size(); }

  // Equality ignores the diagnostic line number.
  bool operator==(const QASample& other) const {
    return id == other.id && question == other.question && context == other.context &&
           references == other.references && most_likely == other.most_likely &&
           responses == other.responses;
  }
};

struct DatasetManifest {
  std::string name;
  std::vector<QASample> samples;
  std::string provenance;

  bool operator==(const DatasetManifest&) const = default;
};

struct SequenceLogprob {
  double logprob = 0.0;

  // Derived view; underflows to 0 for long sequences.
  double prob() const;
};

// Sum of token log-probabilities. Log space is authoritative.
SequenceLogprob sequence_logprob(const GenerationRecord& record);

// Throws DataError naming the violated invariant. `where` prefixes the message.
void validate_record(const GenerationRecord& record, const std::string& where);
void validate_sample(const QASample& sample);

DatasetManifest load_samples(const std::filesystem::path& path);
DatasetManifest parse_samples(std::istream& in, const std::string& name);

// Writes the header line followed by one sample per line (log base e).
void write_samples(std::ostream& out, const DatasetManifest& manifest);

}  // namespace wse
