#include "tailret/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {

Ranking top_k_of(const std::vector<double>& scores, std::size_t k) {
  if (k == 0) throw Error("top-k requires k >= 1");
  Ranking all(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) all[i] = {static_cast<PassageId>(i), scores[i]};
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    ranks_before);
  all.resize(keep);
  return all;
}

const std::vector<Posting>& SparseIndex::postings(const std::string& term) const {
  static const std::vector<Posting> kEmpty;
  auto it = lookup_.find(term);
  return it == lookup_.end() ? kEmpty : postings_[it->second];
}

std::uint32_t SparseIndex::term_frequency(const std::string& term, PassageId doc) const {
  const auto& list = postings(term);
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, PassageId d) { return p.doc < d; });
  return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

double SparseIndex::idf(std::size_t df) const {
  const double n = static_cast<double>(doc_count());
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double SparseIndex::term_weight(double idf, std::uint32_t tf, std::uint32_t doc_length) const {
  if (tf == 0) return 0.0;
  const double f = static_cast<double>(tf);
  const double ratio = avg_doc_length_ > 0.0 ? static_cast<double>(doc_length) / avg_doc_length_ : 0.0;
  return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * ratio));
}

void SparseIndex::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) lookup_.emplace(terms_[i], static_cast<std::uint32_t>(i));
}

bool SparseIndex::operator==(const SparseIndex& other) const {
  return params_.k1 == other.params_.k1 && params_.b == other.params_.b &&
         doc_lengths_ == other.doc_lengths_ && avg_doc_length_ == other.avg_doc_length_ &&
         terms_ == other.terms_ && postings_ == other.postings_;
}

void SparseIndex::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, "SIDX", kFormatVersion);
  w.write(params_.k1);
  w.write(params_.b);
  w.write(avg_doc_length_);
  w.write_array<std::uint32_t>(doc_lengths_);
  w.write<std::uint64_t>(terms_.size());
  std::vector<std::uint32_t> flat;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    w.write_string(terms_[i]);
    flat.clear();
    for (const Posting& p : postings_[i]) {
      flat.push_back(p.doc);
      flat.push_back(p.tf);
    }
    w.write_array<std::uint32_t>(flat);
  }
  w.close();
}

SparseIndex SparseIndex::load(const std::filesystem::path& path) {
  BinaryReader r(path, "SIDX", kFormatVersion);
  SparseIndex index;
  index.params_.k1 = r.read<double>();
  index.params_.b = r.read<double>();
  index.avg_doc_length_ = r.read<double>();
  index.doc_lengths_ = r.read_array<std::uint32_t>();
  const auto n_terms = r.read<std::uint64_t>();
  index.terms_.reserve(n_terms);
  index.postings_.reserve(n_terms);
  for (std::uint64_t i = 0; i < n_terms; ++i) {
    index.terms_.push_back(r.read_string());
    const auto flat = r.read_array<std::uint32_t>();
    if (flat.size() % 2 != 0) throw FormatError(path.string() + ": corrupt posting list");
    std::vector<Posting> list(flat.size() / 2);
    for (std::size_t j = 0; j < list.size(); ++j) list[j] = {flat[2 * j], flat[2 * j + 1]};
    index.postings_.push_back(std::move(list));
  }
  r.expect_end();
  index.rebuild_lookup();
  return index;
}

SparseIndex build_sparse_index(const PassageStore& store, Bm25Params params) {
  if (store.empty()) throw Error("cannot index an empty passage store");
  if (!(params.k1 > 0.0)) throw Error("BM25 k1 must be > 0");
  if (!(params.b >= 0.0 && params.b <= 1.0)) throw Error("BM25 b must lie in [0, 1]");

  SparseIndex index;
  index.params_ = params;
  std::map<std::string, std::vector<Posting>> postings;
  std::map<std::string, std::uint32_t> counts;
  index.doc_lengths_.reserve(store.size());
  for (const Passage& p : store.passages()) {
    const TokenStream tokens = tokenize(store.text(p.id));
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    counts.clear();
    for (const auto& t : tokens.tokens) ++counts[t];
    for (const auto& [term, tf] : counts) postings[term].push_back({p.id, tf});
  }
  const double total = std::accumulate(index.doc_lengths_.begin(), index.doc_lengths_.end(), 0.0);
  index.avg_doc_length_ = total / static_cast<double>(store.size());
  index.terms_.reserve(postings.size());
  index.postings_.reserve(postings.size());
  for (auto& [term, list] : postings) {
    index.terms_.push_back(term);
    index.postings_.push_back(std::move(list));
  }
  index.rebuild_lookup();
  return index;
}

double bm25_score(const SparseIndex& index, const TokenStream& query, PassageId doc) {
  if (doc >= index.doc_count()) throw std::out_of_range("passage id " + std::to_string(doc) + " out of range");
  const std::uint32_t len = index.doc_lengths()[doc];
  double score = 0.0;
  for (const auto& term : query.tokens) {
    const auto& list = index.postings(term);
    if (list.empty()) continue;
    score += index.term_weight(index.idf(list.size()), index.term_frequency(term, doc), len);
  }
  return score;
}

Ranking sparse_top_k(const SparseIndex& index, const TokenStream& query, std::size_t k) {
  if (k == 0) throw Error("sparse_top_k requires k >= 1");
  std::vector<double> scores(index.doc_count(), 0.0);
  const auto& lengths = index.doc_lengths();
  for (const auto& term : query.tokens) {
    const auto& list = index.postings(term);
    if (list.empty()) continue;
    const double idf = index.idf(list.size());
    for (const Posting& p : list) scores[p.doc] += index.term_weight(idf, p.tf, lengths[p.doc]);
  }
  return top_k_of(scores, k);
}

}  // namespace tailret
