#include "wse/records.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "wse/errors.hpp"

namespace wse {

using json = nlohmann::json;

namespace {

constexpr const char* kFormat = "wse-records";
constexpr int kVersion = 1;

double log_base_factor(const std::string& base) {
  if (base == "e") return 1.0;
  if (base == "2") return std::log(2.0);
  if (base == "10") return std::log(10.0);
  throw DataError("header: unsupported log_base '" + base + "' (expected e, 2 or 10)",
                  "data.header");
}

bool is_blank(const std::string& s) {
  for (unsigned char ch : s) {
    if (!std::isspace(ch)) return false;
  }
  return true;
}

class LineParser {
 public:
  LineParser(std::size_t line, double base_factor) : line_(line), base_factor_(base_factor) {}

  QASample sample(const json& j) const {
    if (!j.is_object()) fail("", "expected a JSON object");
    QASample s;
    s.line = line_;
    s.id = string_field(j, "id");
    s.question = string_field(j, "question");
    if (auto it = j.find("context"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) fail("context", "expected string or null");
      s.context = it->get<std::string>();
    }
    const json& refs = required(j, "references");
    if (!refs.is_array()) fail("references", "expected array of strings");
    for (const auto& r : refs) {
      if (!r.is_string()) fail("references", "expected array of strings");
      s.references.push_back(r.get<std::string>());
    }
    s.most_likely = record(required(j, "most_likely"), "most_likely");
    const json& resp = required(j, "responses");
    if (!resp.is_array()) fail("responses", "expected array");
    for (std::size_t i = 0; i < resp.size(); ++i) {
      s.responses.push_back(record(resp[i], "responses[" + std::to_string(i) + "]"));
    }
    return s;
  }

 private:
  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    std::string msg = "line " + std::to_string(line_) + ": ";
    if (!field.empty()) msg += "field '" + field + "': ";
    throw DataError(msg + what, "data.malformed");
  }

  const json& required(const json& j, const std::string& key) const {
    auto it = j.find(key);
    if (it == j.end()) fail(key, "missing");
    return *it;
  }

  std::string string_field(const json& j, const std::string& key) const {
    const json& v = required(j, key);
    if (!v.is_string()) fail(key, "expected string");
    return v.get<std::string>();
  }

  std::size_t offset_field(const json& j, const std::string& key, const std::string& where) const {
    const json& v = required(j, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(where + "." + key, "expected non-negative integer");
    }
    return v.get<std::size_t>();
  }

  GenerationRecord record(const json& j, const std::string& where) const {
    if (!j.is_object()) fail(where, "expected object");
    GenerationRecord r;
    r.text = string_field(j, "text");
    const json& toks = required(j, "tokens");
    if (!toks.is_array()) fail(where + ".tokens", "expected array");
    for (std::size_t t = 0; t < toks.size(); ++t) {
      const json& tj = toks[t];
      const std::string tw = where + ".tokens[" + std::to_string(t) + "]";
      if (!tj.is_object()) fail(tw, "expected object");
      Token tok;
      tok.text = string_field(tj, "text");
      const json& lp = required(tj, "logprob");
      if (!lp.is_number()) fail(tw + ".logprob", "expected number");
      tok.logprob = lp.get<double>() * base_factor_;
      tok.span.start = offset_field(tj, "start", tw);
      tok.span.end = offset_field(tj, "end", tw);
      r.tokens.push_back(std::move(tok));
    }
    return r;
  }

  std::size_t line_;
  double base_factor_;
};

json record_to_json(const GenerationRecord& r) {
  json toks = json::array();
  for (const auto& t : r.tokens) {
    toks.push_back({{"text", t.text}, {"logprob", t.logprob}, {"start", t.span.start},
                    {"end", t.span.end}});
  }
  return {{"text", r.text}, {"tokens", std::move(toks)}};
}

}  // namespace

double SequenceLogprob::prob() const { return std::exp(logprob); }

SequenceLogprob sequence_logprob(const GenerationRecord& record) {
  double sum = 0.0;
  for (const auto& t : record.tokens) sum += t.logprob;
  return {sum};
}

void validate_record(const GenerationRecord& record, const std::string& where) {
  auto fail = [&](const std::string& invariant, const std::string& detail) {
    throw DataError(where + ": invariant '" + invariant + "' violated: " + detail,
                    "data.invariant");
  };
  if (is_blank(record.text)) fail("text non-empty", "response text is empty after trimming");
  if (record.tokens.empty()) fail("at least one token", "token list is empty");

  for (std::size_t t = 0; t < record.tokens.size(); ++t) {
    const Token& tok = record.tokens[t];
    const std::string at = "token " + std::to_string(t);
    if (!std::isfinite(tok.logprob) || tok.logprob > 0.0) {
      fail("logprob <= 0", at + " has logprob " + std::to_string(tok.logprob));
    }
    if (tok.span.end < tok.span.start) fail("spans non-overlapping", at + " has end < start");
    if (t > 0 && tok.span.start < record.tokens[t - 1].span.end) {
      fail("spans non-overlapping", at + " starts before the previous token ends");
    }
  }
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < record.tokens.size(); ++t) {
    const Token& tok = record.tokens[t];
    const std::string at = "token " + std::to_string(t);
    if (tok.span.start != cursor) fail("tokens must tile text", at + " leaves a gap");
    if (tok.span.end > record.text.size()) fail("tokens must tile text", at + " runs past the text");
    if (record.text.compare(tok.span.start, tok.span.length(), tok.text) != 0 ||
        tok.text.size() != tok.span.length()) {
      fail("tokens must tile text", at + " text does not match its span");
    }
    cursor = tok.span.end;
  }
  if (cursor != record.text.size()) fail("tokens must tile text", "tokens stop before the text ends");
}

void validate_sample(const QASample& s) {
  const std::string where = "sample '" + s.id + "' (line " + std::to_string(s.line) + ")";
  if (s.id.empty()) throw DataError(where + ": empty id", "data.invariant");
  if (s.references.empty()) {
    throw DataError(where + ": invariant 'references non-empty' violated", "data.invariant");
  }
  validate_record(s.most_likely, where + " most_likely");
  if (s.responses.empty()) {
    throw DataError(where + ": invariant 'at least one response' violated", "data.invariant");
  }
  for (std::size_t i = 0; i < s.responses.size(); ++i) {
    validate_record(s.responses[i], where + " response " + std::to_string(i));
  }
}

DatasetManifest parse_samples(std::istream& in, const std::string& name) {
  DatasetManifest manifest;
  manifest.name = name;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  double factor = 1.0;
  std::unordered_set<std::string> ids;

  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what(),
                      "data.malformed");
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kFormat) {
        throw DataError("line " + std::to_string(lineno) +
                            ": expected header {\"format\":\"wse-records\",...}",
                        "data.header");
      }
      if (j.value("version", 0) != kVersion) {
        throw DataError("line " + std::to_string(lineno) + ": unsupported version",
                        "data.header");
      }
      factor = log_base_factor(j.value("log_base", std::string("e")));
      if (j.contains("name") && j["name"].is_string()) manifest.name = j["name"];
      if (j.contains("provenance") && j["provenance"].is_string()) {
        manifest.provenance = j["provenance"];
      }
      have_header = true;
      continue;
    }
    QASample s = LineParser(lineno, factor).sample(j);
    validate_sample(s);
    if (!ids.insert(s.id).second) {
      throw DataError("line " + std::to_string(lineno) + ": duplicate sample id '" + s.id + "'",
                      "data.invariant");
    }
    manifest.samples.push_back(std::move(s));
  }
  if (!have_header) throw DataError(name + ": empty file", "data.empty");
  if (manifest.samples.empty()) throw DataError(name + ": no samples after header", "data.empty");
  return manifest;
}

DatasetManifest load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string(), "data.io");
  return parse_samples(in, path.stem().string());
}

void write_samples(std::ostream& out, const DatasetManifest& m) {
  json header = {{"format", kFormat}, {"version", kVersion}, {"log_base", "e"}};
  if (!m.name.empty()) header["name"] = m.name;
  if (!m.provenance.empty()) header["provenance"] = m.provenance;
  out << header.dump() << '\n';
  for (const auto& s : m.samples) {
    json j = {{"id", s.id}, {"question", s.question}};
    j["context"] = s.context ? json(*s.context) : json(nullptr);
    j["references"] = s.references;
    j["most_likely"] = record_to_json(s.most_likely);
    json resp = json::array();
    for (const auto& r : s.responses) resp.push_back(record_to_json(r));
    j["responses"] = std::move(resp);
    out << j.dump() << '\n';
  }
}

}  // namespace wse
