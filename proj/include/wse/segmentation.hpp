#pragma once

// Word segmentation and sub-token to word alignment.
//
// A word is a maximal run of non-whitespace code points with leading and
// trailing punctuation removed. Internal punctuation stays, so hyphenated or
// slashed compounds ("Mother-to-child", "and/or") and tokens like "HIV-1" are
// single words. A run made only of punctuation yields no word.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wse/records.hpp"

namespace wse {

struct WordSpan {
  std::string text;
  Span span;
  std::size_t index = 0;

  bool operator==(const WordSpan&) const = default;
};

struct WordAlignment {
  std::vector<WordSpan> words;
  // token index -> owning word index
  std::vector<std::size_t> token_owner;
  // word index -> ascending, contiguous token indices (may be empty)
  std::vector<std::vector<std::size_t>> tokens_of;

  std::size_t word_count() const { return words.size(); }
  std::size_t token_count() const { return token_owner.size(); }
};

// Code point classes used by the segmenter. Exposed for tests.
bool is_space_codepoint(char32_t cp);
bool is_punct_codepoint(char32_t cp);

std::vector<WordSpan> segment_words(std::string_view text);

// Every token goes to the word it overlaps most (earliest on ties). Tokens that
// overlap no word go to the nearest preceding word, or word 0 if none precedes.
// Throws DataError when `words` is empty but `tokens` is not.
WordAlignment align_tokens(std::span<const Token> tokens, std::span<const WordSpan> words);

// segment_words + align_tokens for a validated record.
WordAlignment align_record(const GenerationRecord& record);

// ASCII lowercasing of every word, for bag-of-words comparisons.
std::vector<std::string> lowercase_words(std::string_view text);

}  // namespace wse
