#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/lexical.hpp"

namespace tailret {

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
  std::int64_t popularity = 0;

  bool operator==(const Triple&) const = default;
};

inline constexpr std::string_view kSubjectPlaceholder = "{subject}";

// relation -> question template containing "{subject}" exactly once.
class TemplateSet {
 public:
  TemplateSet() = default;
  explicit TemplateSet(std::map<std::string, std::string> templates);

  bool contains(const std::string& relation) const { return templates_.count(relation) > 0; }
  const std::string& at(const std::string& relation) const;
  std::string instantiate(const std::string& relation, const std::string& subject) const;
  const std::map<std::string, std::string>& all() const { return templates_; }

 private:
  std::map<std::string, std::string> templates_;
};

// JSONL records with subject, relation, object, popularity.
std::vector<Triple> load_triples(const std::filesystem::path& path);
void save_triples(const std::filesystem::path& path, std::span<const Triple> triples);
// Tab separated "relation<TAB>template" lines; '#' starts a comment line.
TemplateSet load_templates(const std::filesystem::path& path);
void save_templates(const std::filesystem::path& path, const TemplateSet& templates);

// One sample per triple, ids 0..n-1. Throws Error naming the first relation
// without a template.
std::vector<QASample> generate_candidates(std::span<const Triple> triples, const TemplateSet& templates);

// Keeps samples with frequency < max_popularity, order preserved.
std::vector<QASample> filter_popularity(std::span<const QASample> pool, std::int64_t max_popularity);

// True if an answer string occurs in one of the top-`depth` BM25 passages
// for the question.
bool answer_present(const QASample& sample, const SparseIndex& index, const PassageStore& store,
                    std::size_t depth);
std::vector<QASample> filter_answer_presence(std::span<const QASample> pool, const SparseIndex& index,
                                             const PassageStore& store, std::size_t depth);

// Drops samples whose (subject_entity, relation) pair occurs in reserved.
std::vector<QASample> dedupe_against(std::span<const QASample> pool, std::span<const QASample> reserved);

}  // namespace tailret
