#pragma once

// Fixed word lists shared by the reference rule tagger's gazetteer and the
// synthetic corpus generator. Name pools are produced combinatorially from
// fixed syllable tables, so they are identical on every build.

#include <string>
#include <vector>

namespace finrex::lexicon {

namespace detail {

inline std::vector<std::string> combine(const std::vector<std::string>& heads,
                                        const std::vector<std::string>& tails) {
  std::vector<std::string> out;
  out.reserve(heads.size() * tails.size());
  for (const auto& h : heads)
    for (const auto& t : tails) out.push_back(h + t);
  return out;
}

}  // namespace detail

// 400 single-token company names plus a handful of real ones.
inline const std::vector<std::string>& organizations() {
  static const std::vector<std::string> pool = [] {
    auto names = detail::combine(
        {"Al", "Bel", "Cor", "Dra", "Ev", "Fal", "Gran", "Hol", "Ix", "Jor",
         "Kal", "Lum", "Mar", "Nor", "Ox", "Pra", "Quin", "Ros", "Sol", "Tar"},
        {"tex", "vion", "dyne", "corp", "gen", "tron", "sys", "lux", "net", "wave",
         "ford", "mark", "ica", "path", "core", "star", "link", "tide", "rock", "field"});
    for (const char* real : {"Google", "Fitbit", "Microsoft", "Apple", "Amazon", "Intel",
                             "Oracle", "Cisco", "Tesla", "Pfizer"})
      names.emplace_back(real);
    return names;
  }();
  return pool;
}

// 400 single-token surnames.
inline const std::vector<std::string>& persons() {
  static const std::vector<std::string> pool = detail::combine(
      {"Ok", "Ban", "Chen", "Dal", "Est", "Fer", "Gor", "Hal", "Ibs", "Jan",
       "Kov", "Lind", "Mor", "Nak", "Ols", "Pet", "Ram", "San", "Tor", "Vas"},
      {"afor", "erg", "ovic", "sson", "ley", "ano", "ski", "ura", "ton", "ez",
       "ami", "ardt", "elli", "ova", "ani", "berg", "dale", "ier", "ston", "wick"});
  return pool;
}

inline const std::vector<std::string>& places() {
  static const std::vector<std::string> pool = {
      "Germany",   "France",   "Japan",     "Brazil",   "Canada",    "Mexico",
      "India",     "China",    "Singapore", "Ireland",  "Texas",     "Delaware",
      "Nevada",    "Ohio",     "Florida",   "Georgia",  "Virginia",  "Oregon",
      "London",    "Paris",    "Tokyo",     "Boston",   "Chicago",   "Seattle",
      "Denver",    "Atlanta",  "Dallas",    "Houston",  "Toronto",   "Sydney",
      "Dublin",    "Zurich",   "Munich",    "Madrid",   "Seoul",     "Mumbai",
      "Shanghai",  "Austin",   "Phoenix",   "Vienna"};
  return pool;
}

inline const std::vector<std::string>& agencies() {
  static const std::vector<std::string> pool = {"SEC", "FTC", "IRS", "FDA", "FCC",
                                                "EPA", "FDIC", "CFTC", "DOJ", "FAA"};
  return pool;
}

// Tokens that, following a name, make the pair an organization.
inline const std::vector<std::string>& organization_suffixes() {
  static const std::vector<std::string> pool = {"Inc", "Corp", "Ltd", "LLC", "Holdings",
                                                "Group", "University", "College", "Bank"};
  return pool;
}

inline const std::vector<std::string>& months() {
  static const std::vector<std::string> pool = {
      "January", "February", "March",     "April",   "May",      "June",
      "July",    "August",   "September", "October", "November", "December"};
  return pool;
}

inline const std::vector<std::string>& titles() {
  static const std::vector<std::string> pool = {"director", "chairman", "treasurer",
                                                "president", "officer", "secretary"};
  return pool;
}

// Past-tense trigger verbs for the synthetic generator, three per cue group.
inline const std::vector<std::string>& trigger_verbs() {
  static const std::vector<std::string> pool = {
      "acquired",   "purchased",  "absorbed",    "founded",    "established", "launched",
      "joined",     "served",     "represented", "hired",      "appointed",   "named",
      "reported",   "posted",     "recorded",    "expanded",   "operated",    "opened",
      "licensed",   "signed",     "partnered",   "invested",   "financed",    "funded",
      "listed",     "registered", "relocated",   "attended",   "graduated",   "studied",
      "chaired",    "directed",   "advised",     "controlled", "divested",    "settled"};
  return pool;
}

// Lower-case connective phrases that carry no entity or relation signal.
inline const std::vector<std::vector<std::string>>& filler_phrases() {
  static const std::vector<std::vector<std::string>> pool = {
      {"according", "to", "the", "filing"},
      {"the", "company", "said"},
      {"in", "a", "regulatory", "statement"},
      {"during", "the", "fiscal", "quarter"},
      {"as", "previously", "disclosed"},
      {"under", "the", "agreement"},
      {"in", "its", "annual", "report"},
      {"for", "the", "reporting", "period"},
      {"as", "noted", "below"},
      {"according", "to", "people", "familiar", "with", "the", "matter"},
      {"in", "a", "brief", "announcement"},
      {"after", "lengthy", "negotiations"}};
  return pool;
}

inline const std::vector<std::string>& adverbs() {
  static const std::vector<std::string> pool = {"reportedly", "formally", "quietly",
                                                "recently", "publicly", "officially"};
  return pool;
}

}  // namespace finrex::lexicon
