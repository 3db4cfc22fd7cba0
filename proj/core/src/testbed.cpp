#include "tailret/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return uniform() < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }
  std::int64_t log_uniform(std::int64_t lo, std::int64_t hi) {
    const double x = std::log(static_cast<double>(lo)) +
                     uniform() * (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo)));
    return std::clamp(static_cast<std::int64_t>(std::exp(x)), lo, hi - 1);
  }

 private:
  std::mt19937_64 gen_;
};

const std::vector<std::string> kFirst = {"john",  "mary",  "peter",  "anna",   "paul",  "maria", "james", "elena",
                                         "mark",  "sara",  "david",  "laura",  "thomas", "julia", "george", "helen",
                                         "robert", "clara", "william", "alice", "henry", "emma",  "frank", "lucy"};

const std::vector<std::string> kSecond = {
    "ii",     "iii",    "iv",     "v",      "vi",     "vii",    "viii",  "ix",     "x",      "xi",
    "xii",    "xiii",   "xiv",    "xv",     "xvi",    "xvii",   "xviii", "xix",    "xx",     "smith",
    "brown",  "miller", "wilson", "taylor", "clark",  "hall",   "young", "king",   "wright", "green",
    "baker",  "adams",  "nelson", "hill",   "scott",  "moore",  "walker", "turner", "cooper", "ward",
    "morris", "cook",   "bell",   "murphy", "bailey", "rivera", "price", "wood",   "barnes", "ross"};

const std::vector<std::string> kOccupations = {
    "teacher",   "painter",    "composer",  "surgeon",   "architect",    "sculptor",   "poet",
    "chemist",   "lawyer",     "farmer",    "sailor",    "weaver",       "carpenter",  "novelist",
    "engineer",  "botanist",   "astronomer", "journalist", "priest",     "merchant",   "soldier",
    "diplomat",  "librarian",  "photographer", "physician", "geologist", "historian", "mathematician",
    "potter",    "blacksmith", "tailor",    "jeweller",  "dancer",       "translator", "economist",
    "inventor",  "cartographer", "glassblower", "beekeeper", "clockmaker"};

const std::vector<std::string> kCities = {
    "easton",    "norwell",   "brookfield", "ashford",   "millbrook", "westport",  "oakridge",  "riverton",
    "fairhaven", "lakewood",  "redcliff",   "stonebridge", "greenville", "hollowell", "kingsbury", "marston",
    "northgate", "pembrook",  "queensford", "ravenhill", "southwick", "thornbury", "yardley",   "calder",
    "dunmore",   "elmstead",  "foxley",     "glenrock",  "harwick",   "ivybridge", "kelso",     "linford",
    "moorcroft", "newhall",   "rushden",    "selby",     "tamworth",  "wexcombe",  "brackley",  "crondall"};

const std::vector<std::string> kEmployerAdj = {"harbor", "crown", "silver", "northern", "royal",
                                               "eastern", "granite", "golden", "meadow", "summit"};
const std::vector<std::string> kEmployerNoun = {"mills", "foundry", "press", "bank", "works", "college", "theatre",
                                                "railway"};

const std::vector<std::string> kInstruments = {"piano",   "violin", "cello", "flute",    "oboe",  "trumpet",
                                               "clarinet", "bassoon", "organ", "guitar", "viola", "mandolin",
                                               "accordion", "banjo", "zither", "tuba"};

const std::vector<std::string> kCountries = {"aldoria", "brevania", "castellan", "dunmark",  "eskaria",
                                             "forlund", "galwen",   "hestria",   "istoria",  "jorvania",
                                             "kaldera", "lorwick",  "maravia",   "norvendt"};

const std::vector<std::string> kFillers = {
    "little else is recorded about this period.",
    "several letters survive from those years.",
    "the family later moved to a larger house.",
    "details of the early years remain unclear.",
    "a short memoir was published after the war.",
    "contemporary accounts describe a quiet and careful person.",
    "the archive holds a number of drawings and notes.",
    "what is known comes mostly from parish records.",
    "who kept the diaries of that time is still debated."};

struct Relation {
  std::string name;
  std::string question;  // contains {subject}
  std::vector<std::string> sentences;  // contain {n} and {v}
};

const std::vector<Relation> kRelations = {
    {"occupation", "What is {subject}'s occupation?",
     {"{n} worked as a {v} for most of a long life.", "{n} trained as a {v} at an early age."}},
    {"birthplace", "In what city was {subject} born?", {"{n} was born in {v}.", "{n} grew up in {v}."}},
    {"employer", "Who was {subject} employed by?",
     {"{n} spent many years at {v}.", "{n} took a position with {v}."}},
    {"instrument", "What instrument did {subject} play?",
     {"{n} played the {v} in a local ensemble.", "{n} was devoted to the {v}."}},
    {"country", "What country is {subject} a citizen of?",
     {"{n} holds citizenship of {v}.", "{n} later settled in {v}."}},
};

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string title_case(const std::string& s) {
  std::string out;
  bool start = true;
  for (char c : s) {
    out += (start && c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
    start = c == ' ';
  }
  return out;
}

// Accented tokens from a small syllable inventory; every token carries at
// least one non-ASCII letter.
class ComplexNames {
 public:
  explicit ComplexNames(Rng& rng) : rng_(rng) {}

  std::string token() {
    static const std::vector<std::string> onsets = {"sz", "zs", "gy", "ny", "cs", "ty", "dž", "ł", "ř",
                                                    "č",  "ś",  "ż",  "k",  "v",  "m",  "b",  "t", "r"};
    static const std::vector<std::string> vowels = {"ő", "ű", "á", "é", "ó", "ö", "ü",
                                                    "í", "ą", "ę", "a", "e", "o"};
    static const std::vector<std::string> codas = {"", "", "n", "k", "ł", "š", "ř"};
    for (;;) {
      std::string t;
      const std::size_t syllables = 2 + rng_.below(2);
      for (std::size_t i = 0; i < syllables; ++i) t += rng_.pick(onsets) + rng_.pick(vowels);
      t += rng_.pick(codas);
      const bool accented = std::any_of(t.begin(), t.end(), [](char c) { return static_cast<unsigned char>(c) > 0x7f; });
      if (accented && used_.insert(t).second) return t;
    }
  }

  std::string name() { return capitalize(token()) + " " + capitalize(token()); }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string phantom_surname(Rng& rng, std::set<std::string>& used) {
  static const std::vector<std::string> consonants = {"q", "x", "z", "v", "k", "j", "w", "rk", "th"};
  static const std::vector<std::string> vowels = {"a", "e", "o", "u", "y"};
  for (;;) {
    std::string s = rng.pick(consonants) + rng.pick(vowels) + rng.pick(consonants) + rng.pick(vowels) +
                    rng.pick(consonants);
    if (used.insert(s).second) return s;
  }
}

const std::vector<std::string> kPreambles = {
    "According to the surviving letters and the parish records of those years,",
    "Going by the family archive, the diaries and the contemporary accounts,",
    "Based on what little else is recorded about this period in the letters,",
    "If the notes and drawings kept in the archive are to be believed,"};

bool is_numeral_name(const std::string& name) {
  const std::string last = name.substr(name.rfind(' ') + 1);
  return last.find_first_not_of("IVX") == std::string::npos;
}

// Replaces one interior letter of the surname with a different one.
std::string with_typo(Rng& rng, const std::string& name) {
  const std::size_t start = name.rfind(' ') + 1;
  const std::size_t len = name.size() - start;
  std::string out = name;
  const std::size_t pos = start + 1 + rng.below(len - 2);
  static const std::string letters = "aeioukrtln";
  char c = out[pos];
  while (c == out[pos]) c = letters[rng.below(letters.size())];
  out[pos] = c;
  return out;
}

enum class Kind { kSimpleTail, kComplexTail, kInfrequent, kFrequent };

struct Entity {
  std::string name;
  Kind kind = Kind::kSimpleTail;
  std::int64_t popularity = 0;
  std::map<std::string, std::string> facts;  // relation -> value
};

std::string fill(const std::string& pattern, const std::string& name, const std::string& value) {
  return replace_all(replace_all(pattern, "{n}", name), "{v}", value);
}

}  // namespace

Testbed generate_testbed(const TestbedConfig& c) {
  Rng rng(c.seed);
  ComplexNames complex_names(rng);
  Testbed tb;

  // Answer vocabularies; a few birthplaces and countries are accented.
  std::vector<std::string> cities;
  for (const auto& s : kCities) cities.push_back(title_case(s));
  for (int i = 0; i < 20; ++i) cities.push_back(capitalize(complex_names.token()));
  std::vector<std::string> employers;
  for (const auto& a : kEmployerAdj) {
    for (const auto& n : kEmployerNoun) employers.push_back(title_case(a + " " + n));
  }
  rng.shuffle(employers);
  employers.resize(36);
  std::vector<std::string> countries;
  for (const auto& s : kCountries) countries.push_back(title_case(s));
  for (int i = 0; i < 6; ++i) countries.push_back(capitalize(complex_names.token()));
  const std::map<std::string, const std::vector<std::string>*> values = {
      {"occupation", &kOccupations}, {"birthplace", &cities},  {"employer", &employers},
      {"instrument", &kInstruments}, {"country", &countries}};

  std::map<std::string, std::string> templates;
  for (const auto& r : kRelations) templates[r.name] = r.question;
  tb.templates = TemplateSet(templates);

  // Entities.
  std::vector<std::pair<std::string, std::string>> simple_pairs;
  for (const auto& f : kFirst) {
    for (const auto& s : kSecond) simple_pairs.emplace_back(f, s);
  }
  rng.shuffle(simple_pairs);
  const std::size_t simple_needed = c.simple_tail + c.infrequent + c.frequent;
  if (simple_needed > simple_pairs.size()) throw Error("testbed: not enough simple names");
  std::size_t next_simple = 0;
  auto make_simple = [&] {
    const auto& [f, s] = simple_pairs[next_simple++];
    const bool numeral = s.find_first_not_of("ivx") == std::string::npos;
    std::string second = s;
    if (numeral) {
      for (char& ch : second) ch = static_cast<char>(ch - 'a' + 'A');
    } else {
      second = capitalize(second);
    }
    return capitalize(f) + " " + second;
  };

  std::vector<Entity> entities;
  auto add_entity = [&](std::string name, Kind kind, std::int64_t popularity) {
    Entity e;
    e.name = std::move(name);
    e.kind = kind;
    e.popularity = popularity;
    for (const auto& r : kRelations) e.facts[r.name] = rng.pick(*values.at(r.name));
    entities.push_back(std::move(e));
  };
  for (std::size_t i = 0; i < c.simple_tail; ++i) add_entity(make_simple(), Kind::kSimpleTail, 10 + rng.below(90));
  for (std::size_t added = 0; added < c.complex_tail;) {
    add_entity(complex_names.name(), Kind::kComplexTail, 10 + rng.below(90));
    ++added;
  }
  for (std::size_t i = 0; i < c.infrequent; ++i) {
    add_entity(make_simple(), Kind::kInfrequent, rng.log_uniform(100, 10000));
  }
  for (std::size_t i = 0; i < c.frequent; ++i) {
    add_entity(make_simple(), Kind::kFrequent, rng.log_uniform(10000, 500000));
  }

  std::vector<std::size_t> frequent_ids;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (entities[i].kind == Kind::kFrequent) frequent_ids.push_back(i);
  }

  bool self_is_town = false;
  auto distractor = [&](const std::string& self) {
    const Entity& other = rng.chance(0.5) ? entities[rng.pick(frequent_ids)] : entities[rng.below(entities.size())];
    if (other.name == self) return std::string("little is said about rivals.");
    if (self_is_town) return other.name + " once lived in " + self + ".";
    switch (rng.below(3)) {
      case 0: return other.name + " was a close friend of " + self + ".";
      case 1: return self + " corresponded with " + other.name + " for years.";
      default: return self + " met " + other.name + " while visiting " + rng.pick(cities) + ".";
    }
  };

  // Passages: one per long-tail entity, several for popular ones, filler
  // town descriptions for the remainder.
  std::vector<std::pair<std::string, std::string>> raw_passages;
  std::vector<std::set<std::size_t>> planted(entities.size());
  for (std::size_t ei = 0; ei < entities.size(); ++ei) {
    const Entity& e = entities[ei];
    std::size_t copies = 1;
    if (e.kind == Kind::kInfrequent) copies = c.infrequent_passages;
    if (e.kind == Kind::kFrequent) copies = c.frequent_passages;
    // Each fact lands in one of the entity's passages with plant_probability.
    std::vector<std::vector<std::string>> bodies(copies);
    for (std::size_t ri = 0; ri < kRelations.size(); ++ri) {
      const Relation& r = kRelations[ri];
      if (!rng.chance(c.plant_probability)) continue;
      planted[ei].insert(ri);
      bodies[rng.below(copies)].push_back(fill(rng.pick(r.sentences), e.name, e.facts.at(r.name)));
    }
    for (auto& sentences : bodies) {
      const std::size_t n_distract = 1 + rng.below(e.kind == Kind::kFrequent ? 3 : 2);
      for (std::size_t i = 0; i < n_distract; ++i) sentences.push_back(distractor(e.name));
      sentences.push_back(rng.pick(kFillers));
      rng.shuffle(sentences);
      std::string body;
      for (const auto& s : sentences) body += (body.empty() ? "" : " ") + capitalize(s);
      raw_passages.emplace_back(e.name, body);
    }
  }
  if (raw_passages.size() > c.passages) throw Error("testbed: entity passages exceed the passage budget");
  self_is_town = true;
  while (raw_passages.size() < c.passages) {
    const std::string& town = rng.pick(cities);
    std::string body = town + " is a small town known for its " + rng.pick(kOccupations) + "s and an annual " +
                       rng.pick(kInstruments) + " festival. " + capitalize(distractor(town));
    raw_passages.emplace_back(town, body);
  }
  rng.shuffle(raw_passages);
  for (std::size_t i = 0; i < raw_passages.size(); ++i) {
    tb.passages.push_back({static_cast<PassageId>(i), raw_passages[i].first, raw_passages[i].second});
  }

  // Knowledge base: every corpus fact plus phantom subjects.
  for (const Entity& e : entities) {
    for (const auto& r : kRelations) tb.triples.push_back({e.name, r.name, e.facts.at(r.name), e.popularity});
  }
  std::set<std::string> used_surnames;
  for (std::size_t i = 0; i < c.phantoms; ++i) {
    const std::string name = capitalize(rng.pick(kFirst)) + " " + capitalize(phantom_surname(rng, used_surnames));
    std::vector<std::size_t> rel(kRelations.size());
    for (std::size_t k = 0; k < rel.size(); ++k) rel[k] = k;
    rng.shuffle(rel);
    const auto popularity = static_cast<std::int64_t>(10 + rng.below(90));
    for (std::size_t k = 0; k < std::min(c.relations_per_phantom, rel.size()); ++k) {
      const Relation& r = kRelations[rel[k]];
      tb.triples.push_back({name, r.name, rng.pick(*values.at(r.name)), popularity});
    }
  }
  rng.shuffle(tb.triples);

  auto make_sample = [&](std::size_t e, std::size_t r, std::vector<QASample>& out, std::string question) {
    const Entity& ent = entities[e];
    QASample s;
    s.id = static_cast<std::int64_t>(out.size());
    s.question = std::move(question);
    s.answers = {ent.facts.at(kRelations[r].name)};
    s.subject_entity = ent.name;
    s.answer_entity = s.answers.front();
    s.relation = kRelations[r].name;
    s.frequency = ent.popularity;
    out.push_back(std::move(s));
  };
  auto question_of = [&](std::size_t e, std::size_t r) {
    return tb.templates.instantiate(kRelations[r].name, entities[e].name);
  };

  // Evaluation questions: distinct (subject, relation) pairs whose fact is
  // stated somewhere in the corpus.
  std::set<std::pair<std::size_t, std::size_t>> used_pairs;
  auto draw_eval = [&](const std::vector<std::size_t>& pool_ids, std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t e : pool_ids) {
      for (std::size_t r : planted[e]) pairs.emplace_back(e, r);
    }
    rng.shuffle(pairs);
    pairs.resize(std::min(n, pairs.size()));
    for (const auto& [e, r] : pairs) {
      make_sample(e, r, tb.eval, question_of(e, r));
      used_pairs.insert({e, r});
    }
  };
  std::vector<std::size_t> tail_ids;
  std::vector<std::size_t> infrequent_ids;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (entities[i].kind == Kind::kSimpleTail || entities[i].kind == Kind::kComplexTail) tail_ids.push_back(i);
    if (entities[i].kind == Kind::kInfrequent) infrequent_ids.push_back(i);
  }
  draw_eval(tail_ids, c.eval_tail);
  draw_eval(infrequent_ids, c.eval_infrequent);
  draw_eval(frequent_ids, c.eval_frequent);

  // Routing split over unused pairs: accented names asked verbosely, where
  // the many common words swamp a pooled embedding but barely move BM25, and
  // plain names with a one-letter surname typo, which only character
  // n-grams survive.
  std::vector<std::pair<std::size_t, std::size_t>> routing_pairs;
  for (std::size_t e = 0; e < entities.size(); ++e) {
    if (entities[e].kind == Kind::kFrequent || is_numeral_name(entities[e].name)) continue;
    for (std::size_t r : planted[e]) {
      if (!used_pairs.contains({e, r})) routing_pairs.emplace_back(e, r);
    }
  }
  rng.shuffle(routing_pairs);
  for (std::size_t i = 0; i < std::min(routing_pairs.size(), c.routing_train + c.routing_eval); ++i) {
    const auto [e, r] = routing_pairs[i];
    std::string q = question_of(e, r);
    if (entities[e].kind == Kind::kComplexTail) {
      q = rng.pick(kPreambles) + " " + static_cast<char>(q[0] - 'A' + 'a') + q.substr(1);
    } else {
      const std::string& name = entities[e].name;
      q = replace_all(q, name, with_typo(rng, name));
    }
    make_sample(e, r, i < c.routing_train ? tb.routing_train : tb.routing_eval, std::move(q));
  }

  // Questions built from common vocabulary only.
  auto random_simple = [&] { return capitalize(rng.pick(kFirst)) + " " + capitalize(rng.pick(kSecond)); };
  auto question_text = [&] {
    const Relation& r = kRelations[rng.below(kRelations.size())];
    return tb.templates.instantiate(r.name, random_simple());
  };
  for (std::size_t i = 0; i < c.inverse_small; ++i) tb.inverse_small.push_back(question_text());

  // Constructed routing labels over held-out questions.
  for (const Entity& e : entities) {
    if (e.kind != Kind::kSimpleTail && e.kind != Kind::kComplexTail) continue;
    const Relation& r = kRelations[rng.below(kRelations.size())];
    tb.routing_labels.emplace_back(tb.templates.instantiate(r.name, e.name),
                                   e.kind == Kind::kComplexTail ? Route::kSparse : Route::kDense);
  }
  return tb;
}

void write_testbed(const std::filesystem::path& dir, const Testbed& tb) {
  std::filesystem::create_directories(dir);
  std::string corpus;
  for (const Passage& p : tb.passages) {
    nlohmann::json j;
    j["title"] = p.title;
    j["body"] = p.body;
    corpus += j.dump() + "\n";
  }
  write_file(dir / "corpus.jsonl", corpus);
  save_triples(dir / "triples.jsonl", tb.triples);
  save_templates(dir / "templates.tsv", tb.templates);
  save_samples(dir / "eval.jsonl", tb.eval);
  save_samples(dir / "routing_train.jsonl", tb.routing_train);
  save_samples(dir / "routing_eval.jsonl", tb.routing_eval);
  write_file(dir / "inverse_200.txt", join(tb.inverse_small, "\n") + "\n");
  std::string routing;
  for (const auto& [query, label] : tb.routing_labels) {
    nlohmann::json j;
    j["query"] = query;
    j["label"] = to_string(label);
    routing += j.dump() + "\n";
  }
  write_file(dir / "routing_labels.jsonl", routing);
}

std::vector<std::string> load_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("text file not found: " + path.string());
  std::vector<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!is_valid_utf8(line)) throw FormatError("invalid UTF-8", line_no);
    out.push_back(normalize_text(line));
  }
  return out;
}

}  // namespace tailret
