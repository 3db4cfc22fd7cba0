#include "tailret/synthgen.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

TemplateSet::TemplateSet(std::map<std::string, std::string> templates) : templates_(std::move(templates)) {
  for (const auto& [relation, tmpl] : templates_) {
    if (count_occurrences(tmpl, kSubjectPlaceholder) != 1) {
      throw FormatError("template for relation '" + relation + "' must contain {subject} exactly once");
    }
  }
}

const std::string& TemplateSet::at(const std::string& relation) const {
  auto it = templates_.find(relation);
  if (it == templates_.end()) throw Error("no template for relation '" + relation + "'");
  return it->second;
}

std::string TemplateSet::instantiate(const std::string& relation, const std::string& subject) const {
  std::string q = at(relation);
  q.replace(q.find(kSubjectPlaceholder), kSubjectPlaceholder.size(), subject);
  return q;
}

std::vector<Triple> load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("triples file not found: " + path.string());
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!is_valid_utf8(line)) throw FormatError("invalid UTF-8", line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      Triple t;
      t.subject = normalize_text(j.at("subject").get<std::string>());
      t.relation = j.at("relation").get<std::string>();
      t.object = normalize_text(j.at("object").get<std::string>());
      t.popularity = j.at("popularity").get<std::int64_t>();
      if (t.subject.empty() || t.relation.empty() || t.object.empty()) {
        throw FormatError("empty text field", line_no);
      }
      if (t.popularity < 0) throw FormatError("negative popularity", line_no);
      triples.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return triples;
}

void save_triples(const std::filesystem::path& path, std::span<const Triple> triples) {
  std::string out;
  for (const auto& t : triples) {
    nlohmann::json j;
    j["subject"] = t.subject;
    j["relation"] = t.relation;
    j["object"] = t.object;
    j["popularity"] = t.popularity;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

TemplateSet load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("templates file not found: " + path.string());
  std::map<std::string, std::string> templates;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("expected relation<TAB>template", line_no);
    std::string relation = line.substr(0, tab);
    if (relation.empty()) throw FormatError("empty relation label", line_no);
    if (!templates.emplace(relation, line.substr(tab + 1)).second) {
      throw FormatError("duplicate relation '" + relation + "'", line_no);
    }
  }
  return TemplateSet(std::move(templates));
}

void save_templates(const std::filesystem::path& path, const TemplateSet& templates) {
  std::string out;
  for (const auto& [relation, tmpl] : templates.all()) out += relation + "\t" + tmpl + "\n";
  write_file(path, out);
}

std::vector<QASample> generate_candidates(std::span<const Triple> triples, const TemplateSet& templates) {
  std::vector<QASample> pool;
  pool.reserve(triples.size());
  for (const Triple& t : triples) {
    if (!templates.contains(t.relation)) throw Error("no template for relation '" + t.relation + "'");
    QASample s;
    s.id = static_cast<std::int64_t>(pool.size());
    s.question = normalize_text(templates.instantiate(t.relation, t.subject));
    s.answers = {t.object};
    s.subject_entity = t.subject;
    s.answer_entity = t.object;
    s.relation = t.relation;
    s.frequency = t.popularity;
    pool.push_back(std::move(s));
  }
  return pool;
}

std::vector<QASample> filter_popularity(std::span<const QASample> pool, std::int64_t max_popularity) {
  std::vector<QASample> kept;
  std::copy_if(pool.begin(), pool.end(), std::back_inserter(kept),
               [&](const QASample& s) { return s.frequency < max_popularity; });
  return kept;
}

bool answer_present(const QASample& sample, const SparseIndex& index, const PassageStore& store,
                    std::size_t depth) {
  const std::vector<std::string> answers = fold_all(sample.answers);
  for (const ScoredPassage& hit : sparse_top_k(index, tokenize(sample.question), depth)) {
    if (passage_contains_answer(store, hit.id, answers)) return true;
  }
  return false;
}

std::vector<QASample> filter_answer_presence(std::span<const QASample> pool, const SparseIndex& index,
                                             const PassageStore& store, std::size_t depth) {
  if (depth == 0) throw Error("answer-presence depth must be >= 1");
  std::vector<QASample> kept;
  for (const QASample& s : pool) {
    if (answer_present(s, index, store, depth)) kept.push_back(s);
  }
  return kept;
}

std::vector<QASample> dedupe_against(std::span<const QASample> pool, std::span<const QASample> reserved) {
  std::set<std::pair<std::string, std::string>> taken;
  for (const QASample& r : reserved) taken.emplace(case_fold(r.subject_entity), r.relation);
  std::vector<QASample> kept;
  for (const QASample& s : pool) {
    if (!taken.count({case_fold(s.subject_entity), s.relation})) kept.push_back(s);
  }
  return kept;
}

}  // namespace tailret
