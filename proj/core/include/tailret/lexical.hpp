#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/text.hpp"

namespace tailret {

struct Posting {
  PassageId doc = 0;
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

struct ScoredPassage {
  PassageId id = 0;
  double score = 0.0;

  bool operator==(const ScoredPassage&) const = default;
};
using Ranking = std::vector<ScoredPassage>;

// Descending score, ties by ascending id. Shared by every top-k routine.
inline bool ranks_before(const ScoredPassage& a, const ScoredPassage& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

// Keeps the k best entries of `scores` (index = passage id) in rank order.
Ranking top_k_of(const std::vector<double>& scores, std::size_t k);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 inverted index over title + body. Immutable after build.
class SparseIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  SparseIndex() = default;

  std::size_t doc_count() const { return doc_lengths_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  double k1() const { return params_.k1; }
  double b() const { return params_.b; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  std::size_t term_count() const { return terms_.size(); }

  // Empty list for unseen terms.
  const std::vector<Posting>& postings(const std::string& term) const;
  std::size_t doc_frequency(const std::string& term) const { return postings(term).size(); }
  std::uint32_t term_frequency(const std::string& term, PassageId doc) const;

  // ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
  double idf(std::size_t df) const;
  double term_weight(double idf, std::uint32_t tf, std::uint32_t doc_length) const;

  void save(const std::filesystem::path& path) const;
  static SparseIndex load(const std::filesystem::path& path);

  bool operator==(const SparseIndex& other) const;

 private:
  friend SparseIndex build_sparse_index(const PassageStore& store, Bm25Params params);

  void rebuild_lookup();

  Bm25Params params_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::vector<std::string> terms_;                // sorted
  std::vector<std::vector<Posting>> postings_;    // parallel to terms_, sorted by doc
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

// Throws Error for an empty store, k1 <= 0, or b outside [0, 1].
SparseIndex build_sparse_index(const PassageStore& store, Bm25Params params = {});

// Sum over query tokens (duplicates count) of term_weight; out_of_range for a
// bad doc id.
double bm25_score(const SparseIndex& index, const TokenStream& query, PassageId doc);

// Exact top-k by BM25. Returns min(k, doc_count) entries; k must be >= 1.
Ranking sparse_top_k(const SparseIndex& index, const TokenStream& query, std::size_t k);

}  // namespace tailret
