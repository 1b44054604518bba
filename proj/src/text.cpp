#include "annot/text.hpp"

#include <cctype>

namespace annot {

namespace {
inline bool ascii_space(unsigned char c) { return std::isspace(c) != 0; }
inline bool ascii_punct(unsigned char c) { return std::ispunct(c) != 0; }
}  // namespace

std::string normalize_token(std::string_view raw) {
  size_t b = 0, e = raw.size();
  while (b < e && ascii_punct(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && ascii_punct(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string out;
  out.reserve(e - b);
  for (size_t i = b; i < e; ++i)
    out.push_back(
        static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i]))));
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    while (i < n && ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < n && !ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      std::string_view raw = text.substr(start, i - start);
      tokens.push_back(Token{std::string(raw), normalize_token(raw)});
    }
  }
  return tokens;
}

bool is_markup_token(std::string_view raw) {
  return raw.size() >= 2 && raw.front() == '<' && raw.back() == '>';
}

}  // namespace annot
