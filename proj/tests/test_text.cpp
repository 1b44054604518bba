#include <doctest.h>

#include "annot/text.hpp"
#include "annot/util.hpp"

using namespace annot;

TEST_SUITE("text") {

TEST_CASE("normalize_token folds case and strips edge punctuation") {
  CHECK(normalize_token("CONSIDERS,") == "considers");
  CHECK(normalize_token("Considered.") == "considered");
  CHECK(normalize_token("\"consider\"") == "consider");
  CHECK(normalize_token("(considering)") == "considering");
  CHECK(normalize_token("plain") == "plain");
  CHECK(normalize_token("...") == "");
}

TEST_CASE("internal hyphens and apostrophes survive") {
  CHECK(normalize_token("well-known") == "well-known");
  CHECK(normalize_token("don't") == "don't");
  CHECK(normalize_token("'tis") == "tis");  // edge apostrophe is punctuation
}

TEST_CASE("tokenize yields maximal whitespace-delimited spans in order") {
  auto toks = tokenize("  The critics\tconsider\nhim   smart. ");
  REQUIRE(toks.size() == 5);
  CHECK(toks[0].raw == "The");
  CHECK(toks[0].norm == "the");
  CHECK(toks[2].raw == "consider");
  CHECK(toks[4].raw == "smart.");
  CHECK(toks[4].norm == "smart");
}

TEST_CASE("tokenize of empty and all-space input") {
  CHECK(tokenize("").empty());
  CHECK(tokenize(" \t\n").empty());
}

TEST_CASE("markup tokens") {
  CHECK(is_markup_token("<p>"));
  CHECK(is_markup_token("</p>"));
  CHECK(!is_markup_token("a<b"));
  CHECK(!is_markup_token("<"));
  CHECK(!is_markup_token("plain"));
}

TEST_CASE("label_key canonical form") {
  CHECK(label_key("to_be") == "to_be");
  CHECK(label_key("To Be") == "to_be");
  CHECK(label_key("non-evaluative") == "non_evaluative");
  CHECK(label_key("  Non  Evaluative  ") == "non_evaluative");
  CHECK(label_key("ZERO") == "zero");
  CHECK(label_key("as") == "as");
}

TEST_CASE("trim and split behave") {
  CHECK(trim("  a b  ") == "a b");
  CHECK(trim("") == "");
  auto parts = split("a,b,,c", ',');
  REQUIRE(parts.size() == 4);
  CHECK(parts[2] == "");
}

TEST_CASE("fnv1a64 matches reference vectors") {
  // Published FNV-1a test vectors.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("hash_mix separates nearby inputs") {
  CHECK(hash_mix(1, 1) != hash_mix(1, 2));
  CHECK(hash_mix(1, 2) != hash_mix(2, 1));
}

}  // TEST_SUITE
