#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "dvp/error.hpp"

namespace dvp {

enum class ElementSource { Llm, Fallback, User };

std::string_view to_string(ElementSource s);
ElementSource element_source_from_string(std::string_view s);

struct KeyElement {
  std::size_t index = 0;
  std::string phrase;
  ElementSource source = ElementSource::Fallback;

  friend bool operator==(const KeyElement&, const KeyElement&) = default;
};

struct LlmRequest {
  std::string instruction;
  std::string prompt;
  std::size_t n = 3;
};

// Builds the extraction instruction for n elements. A reprompt appends a
// reminder of the numbered-list answer format.
std::string extraction_instruction(std::size_t n, bool reprompt = false);

// Returns the phrases in the model's answer. Throws DecodeError when the
// answer deviates from the wire contract, BackendUnavailable/Timeout when
// the model cannot be reached.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> extract(const LlmRequest& request) = 0;
};

// Strict "1. phrase" / "1) phrase" list, numbered from 1 without gaps.
// Throws DecodeError on anything else.
std::vector<std::string> parse_numbered_list(std::string_view text);

struct ExtractionRequest {
  std::string prompt;
  std::size_t n = 3;
  LlmBackend* backend = nullptr;  // nullptr: rule-based extraction only
};

// Exactly n elements ordered by importance. The LLM path gets one reprompt
// on a malformed answer; anything still wrong, or an unreachable backend,
// falls back to the rules. Short LLM answers are padded from the rules.
std::vector<KeyElement> extract_elements(const ExtractionRequest& req);

// Rule-based extraction: noun-like spans and capitalized names, names
// first, then by position; padded with the whole prompt.
std::vector<std::string> fallback_phrases(std::string_view prompt, std::size_t n);

std::vector<KeyElement> override_elements(std::span<const std::string> elements);

}  // namespace dvp
