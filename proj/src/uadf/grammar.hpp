#pragma once

#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace uadf {

// Context-free template grammar. Text format, one rule per line:
//
//   S -> show me flights from CITY to CITY
//   CITY -> boston | denver | dallas
//
// Symbols that appear on a left-hand side are nonterminals; everything else
// is a terminal word. Alternatives are chosen uniformly. Expansion starts at
// S. An optional JOIN rule lets the sampler chain clauses to reach a target
// sentence length.
class Grammar {
 public:
  static Grammar parse(std::string_view text);
  static Grammar builtin();  // airline-information domain, ~200 words

  std::vector<std::string> expand(const std::string& symbol, std::mt19937_64& rng) const;
  bool has_rule(const std::string& symbol) const { return rules_.contains(symbol); }
  // All terminal words, sorted.
  std::vector<std::string> terminals() const;

 private:
  void expand_into(const std::string& symbol, std::mt19937_64& rng, std::vector<std::string>& out, int depth) const;

  std::map<std::string, std::vector<std::vector<std::string>>> rules_;
};

extern const char* const kBuiltinGrammar;

}  // namespace uadf
