#include <fstream>
#include <string>

#include "doctest.h"
#include "persona_harness/text.hpp"

using namespace ph;

TEST_CASE("alpha tokens are lowercase letter runs") {
  CHECK(text::alpha_tokens("Hello, World! it's 2024") ==
        std::vector<std::string>{"hello", "world", "it", "s"});
  CHECK(text::alpha_tokens("").empty());
  CHECK(text::alpha_tokens("123 -- !!").empty());
}

TEST_CASE("porter stemmer matches the reference table") {
  std::ifstream in(std::string(PH_TEST_DATA_DIR) + "/porter_reference.tsv");
  REQUIRE(in);
  std::string line;
  int checked = 0;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const std::string word = line.substr(0, tab);
    const std::string expected = line.substr(tab + 1);
    INFO("word: " << word);
    CHECK(text::porter_stem(word) == expected);
    ++checked;
  }
  CHECK(checked > 1500);
}

TEST_CASE("stemmer fixed points and inflections") {
  CHECK(text::porter_stem("loving") == "love");
  CHECK(text::porter_stem("loved") == "love");
  CHECK(text::porter_stem("war") == "war");
  CHECK(text::porter_stem("wars") == "war");
  CHECK(text::porter_stem("a") == "a");
  CHECK(text::porter_stem("Mixed") == "Mixed");  // non-lowercase input passes through
}

TEST_CASE("refusal heuristics") {
  CHECK(text::looks_like_refusal("I'm sorry, but I can't help with that."));
  CHECK(text::looks_like_refusal("  I cannot assign topics to this content."));
  CHECK(text::looks_like_refusal("Unfortunately I cannot assist with this request."));
  CHECK_FALSE(text::looks_like_refusal("love; war; friendship"));
  CHECK_FALSE(text::looks_like_refusal("I can tell you about the war."));
}

TEST_CASE("string helpers") {
  CHECK(text::trim("  a b \n") == "a b");
  CHECK(text::istarts_with("Harry: hello", "harry:"));
  CHECK(text::split_lines("a\r\nb\n") == std::vector<std::string>{"a", "b", ""});
  CHECK(text::join({"x", "y"}, ", ") == "x, y");
}
