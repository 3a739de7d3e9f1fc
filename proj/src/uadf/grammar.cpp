#include "uadf/grammar.hpp"

#include <set>

#include "uadf/error.hpp"
#include "uadf/vocabulary.hpp"

namespace uadf {

const char* const kBuiltinGrammar = R"(# airline information requests
S -> show me FLIGHTPHRASE from CITY to CITY DATEPHRASE
S -> i would like to fly from CITY to CITY DATEPHRASE
S -> i want a TIMEWORD flight from CITY to CITY
S -> what is the FAREWORD fare from CITY to CITY on AIRLINE
S -> list all AIRLINE flights from CITY to CITY that leave TIMEPHRASE
S -> please give me information on FLIGHTPHRASE to CITY DATEPHRASE
S -> which airlines fly from CITY to CITY with a stop in CITY
S -> how much does it cost to fly to CITY in CLASSWORD class
S -> does AIRLINE have a flight leaving CITY TIMEPHRASE
S -> what time does flight NUMBER arrive in CITY
S -> i need a ground transportation option in CITY DATEPHRASE
S -> are there any MEALWORD flights between CITY and CITY
S -> show me the cheapest round trip ticket to CITY for PASSENGERS
S -> what kind of aircraft is used on flight NUMBER from CITY
S -> can you book a seat in CLASSWORD class on AIRLINE flight NUMBER
S -> list the nonstop flights arriving in CITY TIMEPHRASE
S -> give me the schedule of AIRLINE from CITY DATEPHRASE
S -> find a hotel near the airport in CITY for PASSENGERS
JOIN -> and | and then | and also | or
FLIGHTPHRASE -> flights | all flights | the flights | early flights | late flights | direct flights
DATEPHRASE -> on DAY | on MONTH ORDINAL | next DAY | this DAY morning | DAY evening | tomorrow | today
TIMEPHRASE -> before CLOCK | after CLOCK | in the morning | in the afternoon | in the evening | around CLOCK
CLOCK -> NUMBER am | NUMBER pm | noon | midnight
TIMEWORD -> morning | afternoon | evening | night | early | late
FAREWORD -> lowest | cheapest | highest | standard | discount | economy
CLASSWORD -> first | business | coach | economy | premium
MEALWORD -> breakfast | lunch | dinner | snack
PASSENGERS -> NUMBER adults | NUMBER children | one adult | two people | my family
NUMBER -> one | two | three | four | five | six | seven | eight | nine | ten | eleven | twelve | twenty | thirty | forty | fifty | hundred
ORDINAL -> first | second | third | fourth | fifth | sixth | seventh | eighth | ninth | tenth | eleventh | twelfth | fifteenth | twentieth | thirtieth
DAY -> monday | tuesday | wednesday | thursday | friday | saturday | sunday
MONTH -> january | february | march | april | may | june | july | august | september | october | november | december
AIRLINE -> united | delta | american | continental | northwest | southwest | alaska | lufthansa | midwest | frontier | jetblue | spirit | hawaiian | sunwing | virgin
CITY -> boston | denver | dallas | atlanta | baltimore | pittsburgh | philadelphia | oakland | chicago | seattle | houston | miami | phoenix | memphis | detroit | cleveland | nashville | orlando | tampa | portland | milwaukee | toronto | montreal | newark | charlotte | columbus | indianapolis | minneapolis | cincinnati | kansas | sacramento | salem | austin | omaha | tucson | fresno | buffalo | richmond | raleigh | louisville
)";

Grammar Grammar::parse(std::string_view text) {
  Grammar g;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto arrow = line.find("->");
    if (arrow == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        fail(ErrorCode::kParse, "grammar line " + std::to_string(line_no) + " has no '->'");
      }
      continue;
    }
    std::string lhs = line.substr(0, arrow);
    lhs.erase(0, lhs.find_first_not_of(" \t"));
    lhs.erase(lhs.find_last_not_of(" \t") + 1);
    if (lhs.empty()) fail(ErrorCode::kParse, "grammar line " + std::to_string(line_no) + " has an empty left side");
    std::string rhs = line.substr(arrow + 2);
    std::size_t start = 0;
    for (;;) {
      const auto bar = rhs.find('|', start);
      std::vector<std::string> alt;
      std::string cur;
      for (char c : rhs.substr(start, bar == std::string::npos ? std::string::npos : bar - start)) {
        if (c == ' ' || c == '\t' || c == '\r') {
          if (!cur.empty()) alt.push_back(std::move(cur)), cur.clear();
        } else {
          cur += c;
        }
      }
      if (!cur.empty()) alt.push_back(std::move(cur));
      if (alt.empty()) fail(ErrorCode::kParse, "grammar line " + std::to_string(line_no) + " has an empty alternative");
      g.rules_[lhs].push_back(std::move(alt));
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    if (nl == text.size()) break;
  }
  if (!g.rules_.contains("S")) fail(ErrorCode::kInvalidInput, "grammar has no start rule S");
  return g;
}

Grammar Grammar::builtin() { return parse(kBuiltinGrammar); }

void Grammar::expand_into(const std::string& symbol, std::mt19937_64& rng, std::vector<std::string>& out,
                          int depth) const {
  if (depth > 64) fail(ErrorCode::kInvalidInput, "grammar recursion too deep");
  const auto it = rules_.find(symbol);
  if (it == rules_.end()) {
    for (auto& w : split_words(symbol)) out.push_back(std::move(w));
    return;
  }
  const auto& alts = it->second;
  std::uniform_int_distribution<std::size_t> pick(0, alts.size() - 1);
  for (const auto& sym : alts[pick(rng)]) expand_into(sym, rng, out, depth + 1);
}

std::vector<std::string> Grammar::expand(const std::string& symbol, std::mt19937_64& rng) const {
  std::vector<std::string> out;
  expand_into(symbol, rng, out, 0);
  return out;
}

std::vector<std::string> Grammar::terminals() const {
  std::set<std::string> words;
  for (const auto& [lhs, alts] : rules_) {
    for (const auto& alt : alts) {
      for (const auto& sym : alt) {
        if (rules_.contains(sym)) continue;
        for (auto& w : split_words(sym)) words.insert(std::move(w));
      }
    }
  }
  return {words.begin(), words.end()};
}

}  // namespace uadf
