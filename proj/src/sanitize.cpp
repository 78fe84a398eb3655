#include <cctype>
#include <optional>

#include "ebg/llm.hpp"

namespace ebg::llm {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool strip_prefix(std::string_view& s, std::string_view prefix) {
  if (!s.starts_with(prefix)) return false;
  s.remove_prefix(prefix.size());
  s = trim(s);
  return true;
}

struct Line {
  std::string_view text;  // expression candidate after stripping
  bool fenced;
  bool prefixed;
};

Line clean(std::string_view raw, bool fenced) {
  std::string_view s = trim(raw);
  if (const auto hash = s.find('#'); hash != std::string_view::npos) s = trim(s.substr(0, hash));
  while (s.size() >= 2 && s.front() == '`' && s.back() == '`') s = trim(s.substr(1, s.size() - 2));
  bool prefixed = strip_prefix(s, "Problem:");
  prefixed = strip_prefix(s, "f(x) =") || strip_prefix(s, "f(x)=") || prefixed;
  strip_prefix(s, "return ");
  while (!s.empty() && (s.back() == ';' || s.back() == '`')) s = trim(s.substr(0, s.size() - 1));
  while (!s.empty() && s.front() == '`') s = trim(s.substr(1));
  return {s, fenced, prefixed};
}

std::optional<std::string_view> choose_candidate(std::string_view raw) {
  std::vector<Line> lines;
  bool in_fence = false;
  bool saw_fence = false;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    const std::string_view line = raw.substr(start, end - start);
    if (trim(line).starts_with("```")) {
      in_fence = !in_fence;
      saw_fence = true;
    } else {
      lines.push_back(clean(line, in_fence));
    }
    start = end + 1;
  }

  if (saw_fence)
    for (const Line& l : lines)
      if (l.fenced && !l.text.empty()) return l.text;
  for (const Line& l : lines)
    if (l.prefixed && !l.text.empty()) return l.text;
  for (const Line& l : lines)
    if (!l.text.empty()) return l.text;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(RejectionCause cause) {
  switch (cause) {
    case RejectionCause::empty:
      return "empty";
    case RejectionCause::unparseable:
      return "unparseable";
    case RejectionCause::non_whitelisted:
      return "non-whitelisted";
    case RejectionCause::bad_index:
      return "bad-index";
  }
  return "unknown";
}

namespace {

// True when the identifier starting at `pos` is immediately applied to an argument list.
bool called_at(std::string_view text, std::size_t pos) {
  while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_' ||
                               text[pos] == '.'))
    ++pos;
  while (pos < text.size() && text[pos] == ' ') ++pos;
  return pos < text.size() && text[pos] == '(';
}

}  // namespace

Sanitized sanitize_response(std::string_view raw, std::size_t dimension, const expr::FunctionWhitelist& whitelist) {
  const auto candidate = choose_candidate(raw);
  if (!candidate) return Rejection{RejectionCause::empty, "response contains no candidate line"};
  try {
    return expr::parse(*candidate, dimension, whitelist);
  } catch (const expr::ParseError& e) {
    switch (e.kind()) {
      case expr::ParseError::Kind::unknown_function:
        if (called_at(*candidate, e.position())) return Rejection{RejectionCause::non_whitelisted, e.what()};
        break;
      case expr::ParseError::Kind::index_out_of_range:
        return Rejection{RejectionCause::bad_index, e.what()};
      case expr::ParseError::Kind::syntax:
        break;
    }
    return Rejection{RejectionCause::unparseable, e.what()};
  }
}

}  // namespace ebg::llm
