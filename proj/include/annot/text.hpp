#ifndef ANNOT_TEXT_HPP
#define ANNOT_TEXT_HPP

#include <string>
#include <string_view>
#include <vector>

namespace annot {

// One whitespace-delimited span. `raw` is the exact source text; `norm` is
// the matching view: ASCII-case-folded with leading/trailing ASCII
// punctuation stripped. Hyphens and apostrophes inside a token are kept, so
// "well-known" and "don't" stay single tokens.
struct Token {
  std::string raw;
  std::string norm;
};

// Case-fold + strip edge punctuation. "CONSIDERS," -> "considers".
std::string normalize_token(std::string_view raw);

// Maximal whitespace-delimited spans, in order. Empty input -> empty list.
std::vector<Token> tokenize(std::string_view text);

// True for tokens of the shape "<...>", dropped when markup stripping is on.
bool is_markup_token(std::string_view raw);

}  // namespace annot

#endif  // ANNOT_TEXT_HPP
