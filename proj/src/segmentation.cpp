#include "wse/segmentation.hpp"

#include <algorithm>

#include "wse/errors.hpp"

namespace wse {

namespace {

struct CodePoint {
  char32_t value;
  std::size_t begin;
  std::size_t end;
};

// Lenient UTF-8 decoding: an invalid byte decodes as itself.
std::vector<CodePoint> decode(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = lead;
    if (lead >= 0xC0 && lead < 0xE0) {
      len = 2;
      cp = lead & 0x1F;
    } else if (lead >= 0xE0 && lead < 0xF0) {
      len = 3;
      cp = lead & 0x0F;
    } else if (lead >= 0xF0 && lead < 0xF8) {
      len = 4;
      cp = lead & 0x07;
    }
    bool ok = len == 1 || i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (cont & 0x3F);
      }
    }
    if (!ok) {
      len = 1;
      cp = lead;
    }
    out.push_back({cp, i, i + len});
    i += len;
  }
  return out;
}

}  // namespace

bool is_space_codepoint(char32_t cp) {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\v':
    case U'\f':
    case U'\r':
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct_codepoint(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  // Latin-1 punctuation, general punctuation block (dashes, quotes, ellipsis),
  // CJK comma and full stop.
  return cp == 0xA1 || cp == 0xA7 || cp == 0xAB || cp == 0xB6 || cp == 0xB7 || cp == 0xBB ||
         cp == 0xBF || (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         cp == 0x3001 || cp == 0x3002;
}

std::vector<WordSpan> segment_words(std::string_view text) {
  const auto cps = decode(text);
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < cps.size()) {
    if (is_space_codepoint(cps[i].value)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < cps.size() && !is_space_codepoint(cps[j].value)) ++j;
    // [i, j) is a whitespace-delimited run; trim boundary punctuation.
    std::size_t lo = i;
    std::size_t hi = j;
    while (lo < hi && is_punct_codepoint(cps[lo].value)) ++lo;
    while (hi > lo && is_punct_codepoint(cps[hi - 1].value)) --hi;
    if (lo < hi) {
      const Span span{cps[lo].begin, cps[hi - 1].end};
      words.push_back({std::string(text.substr(span.start, span.length())), span, words.size()});
    }
    i = j;
  }
  return words;
}

WordAlignment align_tokens(std::span<const Token> tokens, std::span<const WordSpan> words) {
  WordAlignment a;
  a.words.assign(words.begin(), words.end());
  a.tokens_of.resize(words.size());
  a.token_owner.resize(tokens.size());
  if (tokens.empty()) return a;
  if (words.empty()) {
    throw DataError("alignment: response has tokens but no words", "data.alignment");
  }

  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Span ts = tokens[t].span;
    // First word whose end is past the token start.
    auto first = std::upper_bound(words.begin(), words.end(), ts.start,
                                  [](std::size_t pos, const WordSpan& w) { return pos < w.span.end; });
    std::size_t best = words.size();
    std::size_t best_overlap = 0;
    for (auto it = first; it != words.end() && it->span.start < ts.end; ++it) {
      const std::size_t lo = std::max(ts.start, it->span.start);
      const std::size_t hi = std::min(ts.end, it->span.end);
      const std::size_t overlap = hi > lo ? hi - lo : 0;
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = static_cast<std::size_t>(it - words.begin());
      }
    }
    if (best == words.size()) {
      // No overlap: nearest word ending at or before the token start.
      best = first == words.begin() ? 0 : static_cast<std::size_t>(first - words.begin()) - 1;
    }
    a.token_owner[t] = best;
    a.tokens_of[best].push_back(t);
  }
  return a;
}

WordAlignment align_record(const GenerationRecord& record) {
  const auto words = segment_words(record.text);
  return align_tokens(record.tokens, words);
}

std::vector<std::string> lowercase_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : segment_words(text)) {
    std::string s = std::move(w.text);
    for (char& ch : s) {
      if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace wse
