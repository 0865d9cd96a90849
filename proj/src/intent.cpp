#include "dvp/intent.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <string_view>

namespace dvp {
namespace {

constexpr std::string_view kDeterminers[] = {
    "a",     "an",   "the",  "this",  "that",  "these", "those", "my",    "your", "his",
    "her",   "its",  "our",  "their", "some",  "every", "each",  "another", "any", "several",
    "many",  "few",  "two",  "three", "four",  "five",
};

constexpr std::string_view kPrepositions[] = {
    "on",      "in",     "at",      "of",      "with",   "by",     "for",     "from",
    "to",      "into",   "onto",    "over",    "under",  "above",  "below",   "near",
    "beside",  "behind", "through", "across",  "around", "along",  "among",   "between",
    "inside",  "outside", "toward", "towards", "upon",   "against", "beneath", "beyond",
    "within",  "without", "during", "past",    "like",
};

constexpr std::string_view kOtherStopwords[] = {
    "and",  "or",    "but",   "while", "as",    "then",  "he",    "she",  "it",   "they",
    "we",   "i",     "you",   "him",   "them",  "us",    "me",    "is",   "are",  "was",
    "were", "be",    "been",  "being", "am",    "has",   "have",  "had",  "do",   "does",
    "did",  "will",  "would", "can",   "could", "should", "may",  "might", "must", "very",
    "not",  "no",    "there", "here",  "who",   "which", "what",  "where", "when", "how",
    "up",   "down",  "off",   "out",   "so",    "too",   "just",  "also",
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <std::size_t N>
bool contains(const std::string_view (&words)[N], const std::string& w) {
  return std::find(std::begin(words), std::end(words), w) != std::end(words);
}

bool is_determiner(const std::string& lw) { return contains(kDeterminers, lw); }
bool is_preposition(const std::string& lw) { return contains(kPrepositions, lw); }
bool is_stopword(const std::string& lw) {
  return is_determiner(lw) || is_preposition(lw) || contains(kOtherStopwords, lw);
}

bool verb_like(const std::string& lw) {
  return lw.size() > 4 && (lw.ends_with("ing") || lw.ends_with("ed"));
}

struct Token {
  std::string text;
  std::string lower;
  bool capitalized = false;
  bool boundary_after = false;  // clause punctuation follows
};

bool is_clause_punct(char c) {
  return c == ',' || c == '.' || c == ';' || c == ':' || c == '!' || c == '?';
}

std::vector<Token> tokenize(std::string_view prompt) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < prompt.size()) {
    while (i < prompt.size() && std::isspace(static_cast<unsigned char>(prompt[i]))) ++i;
    std::size_t start = i;
    while (i < prompt.size() && !std::isspace(static_cast<unsigned char>(prompt[i]))) ++i;
    std::string_view raw = prompt.substr(start, i - start);
    bool boundary = false;
    while (!raw.empty() && !std::isalnum(static_cast<unsigned char>(raw.back()))) {
      boundary = boundary || is_clause_punct(raw.back());
      raw.remove_suffix(1);
    }
    while (!raw.empty() && !std::isalnum(static_cast<unsigned char>(raw.front()))) {
      if (is_clause_punct(raw.front()) && !tokens.empty()) tokens.back().boundary_after = true;
      raw.remove_prefix(1);
    }
    if (raw.empty()) {
      if (boundary && !tokens.empty()) tokens.back().boundary_after = true;
      continue;
    }
    Token t;
    t.text = std::string(raw);
    t.lower = lower(raw);
    t.capitalized = std::isupper(static_cast<unsigned char>(raw.front())) != 0;
    t.boundary_after = boundary;
    tokens.push_back(std::move(t));
  }
  return tokens;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out.push_back(' ');
      out.push_back(c);
      space = false;
    }
  }
  return out;
}

struct Phrase {
  std::string text;
  bool capitalized;
  std::size_t position;
};

bool name_token(const Token& t) { return t.capitalized && !is_stopword(t.lower); }

std::vector<Phrase> candidate_phrases(const std::vector<Token>& tokens) {
  constexpr std::size_t kMaxPhraseTokens = 3;
  std::vector<Phrase> phrases;
  std::vector<bool> used(tokens.size(), false);

  // Capitalized (multi-word) names.
  for (std::size_t i = 0; i < tokens.size();) {
    if (!name_token(tokens[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string text = tokens[i].text;
    used[i] = true;
    while (!tokens[j].boundary_after && j + 1 < tokens.size() && name_token(tokens[j + 1])) {
      ++j;
      text += " " + tokens[j].text;
      used[j] = true;
    }
    phrases.push_back({std::move(text), true, i});
    i = j + 1;
  }

  // Noun-like spans introduced by a determiner or preposition.
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& lw = tokens[i].lower;
    if (!(is_determiner(lw) || is_preposition(lw)) || tokens[i].boundary_after) continue;
    std::size_t j = i + 1;
    while (j < tokens.size() && is_determiner(tokens[j].lower) && !tokens[j].boundary_after) ++j;
    std::string text;
    std::size_t start = j, taken = 0;
    while (j < tokens.size() && taken < kMaxPhraseTokens && !used[j] &&
           !is_stopword(tokens[j].lower) && !verb_like(tokens[j].lower)) {
      if (!text.empty()) text += ' ';
      text += tokens[j].text;
      used[j] = true;
      ++taken;
      if (tokens[j].boundary_after) break;
      ++j;
    }
    if (!text.empty()) phrases.push_back({std::move(text), false, start});
  }

  std::stable_sort(phrases.begin(), phrases.end(), [](const Phrase& a, const Phrase& b) {
    if (a.capitalized != b.capitalized) return a.capitalized;
    return a.position < b.position;
  });
  return phrases;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string_view to_string(ElementSource s) {
  switch (s) {
    case ElementSource::Llm: return "llm";
    case ElementSource::Fallback: return "fallback";
    case ElementSource::User: return "user";
  }
  return "fallback";
}

ElementSource element_source_from_string(std::string_view s) {
  if (s == "llm") return ElementSource::Llm;
  if (s == "fallback") return ElementSource::Fallback;
  if (s == "user") return ElementSource::User;
  throw Error(Errc::InvalidArgument, "unknown element source '" + std::string(s) + "'");
}

std::string extraction_instruction(std::size_t n, bool reprompt) {
  std::string text = "Please extract " + std::to_string(n) + " key visual elements from this paragraph.";
  if (reprompt) {
    text += " Answer with a numbered list only: one element per line, formatted as \"1. element\".";
  }
  return text;
}

std::vector<std::string> parse_numbered_list(std::string_view text) {
  std::vector<std::string> items;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    if (digits == 0 || digits + 1 >= line.size() || (line[digits] != '.' && line[digits] != ')')) {
      throw Error(Errc::DecodeError, "not a numbered list line: '" + line + "'");
    }
    if (std::stoul(line.substr(0, digits)) != items.size() + 1) {
      throw Error(Errc::DecodeError, "list numbering is not sequential");
    }
    std::string phrase = trim(std::string_view(line).substr(digits + 1));
    if (phrase.empty()) throw Error(Errc::DecodeError, "empty list item");
    items.push_back(std::move(phrase));
    if (end == text.size()) break;
  }
  if (items.empty()) throw Error(Errc::DecodeError, "empty answer");
  return items;
}

std::vector<std::string> fallback_phrases(std::string_view prompt, std::size_t n) {
  std::string whole = collapse_whitespace(prompt);
  if (whole.empty()) throw Error(Errc::EmptyPrompt, "prompt is empty");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& p : candidate_phrases(tokenize(whole))) {
    if (out.size() == n) break;
    if (seen.insert(lower(p.text)).second) out.push_back(std::move(p.text));
  }
  while (out.size() < n) out.push_back(whole);
  return out;
}

std::vector<KeyElement> extract_elements(const ExtractionRequest& req) {
  if (req.n == 0) throw Error(Errc::InvalidArgument, "n must be at least 1");
  std::string whole = collapse_whitespace(req.prompt);
  if (whole.empty()) throw Error(Errc::EmptyPrompt, "prompt is empty");

  std::vector<std::string> llm_phrases;
  if (req.backend != nullptr) {
    for (int attempt = 0; attempt < 2 && llm_phrases.empty(); ++attempt) {
      try {
        auto got = req.backend->extract({extraction_instruction(req.n, attempt > 0), whole, req.n});
        for (auto& p : got) {
          p = trim(p);
          if (p.empty()) throw Error(Errc::DecodeError, "empty phrase in LLM answer");
        }
        if (got.empty()) throw Error(Errc::DecodeError, "LLM returned no phrases");
        llm_phrases = std::move(got);
      } catch (const Error& ex) {
        if (ex.code() != Errc::DecodeError) break;  // unreachable backend: no reprompt
      }
    }
  }

  std::vector<KeyElement> out;
  std::set<std::string> seen;
  for (auto& p : llm_phrases) {
    if (out.size() == req.n) break;
    seen.insert(lower(p));
    out.push_back({out.size(), std::move(p), ElementSource::Llm});
  }
  if (out.size() < req.n) {
    for (auto& p : fallback_phrases(whole, req.n)) {
      if (out.size() == req.n) break;
      if (p != whole && !seen.insert(lower(p)).second) continue;
      out.push_back({out.size(), std::move(p), ElementSource::Fallback});
    }
    while (out.size() < req.n) out.push_back({out.size(), whole, ElementSource::Fallback});
  }
  return out;
}

std::vector<KeyElement> override_elements(std::span<const std::string> elements) {
  if (elements.empty()) throw Error(Errc::EmptyElement, "at least one element is required");
  std::vector<KeyElement> out;
  for (const auto& e : elements) {
    if (trim(e).empty()) {
      throw Error(Errc::EmptyElement, "element " + std::to_string(out.size()) + " is empty");
    }
    out.push_back({out.size(), e, ElementSource::User});
  }
  return out;
}

}  // namespace dvp
