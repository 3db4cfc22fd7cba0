#include "tailret/evalkit.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::kLongTail: return "long-tail";
    case Bucket::kInfrequent: return "infrequent";
    case Bucket::kFrequent: return "frequent";
  }
  return "?";
}

void validate(const BucketSpec& spec) {
  if (spec.low < 0) throw ConfigError("eval.low", "must be >= 0");
  if (spec.tail_max <= spec.low) throw ConfigError("eval.tail_max", "must exceed eval.low");
  if (spec.frequent_min <= spec.tail_max) throw ConfigError("eval.frequent_min", "must exceed eval.tail_max");
}

std::string describe(const BucketSpec& spec) {
  return "long-tail [" + std::to_string(spec.low) + ", " + std::to_string(spec.tail_max) + "), infrequent [" +
         std::to_string(spec.tail_max) + ", " + std::to_string(spec.frequent_min) + "), frequent [" +
         std::to_string(spec.frequent_min) + ", inf); half-open, lower-inclusive; frequencies below " +
         std::to_string(spec.low) + " count as long-tail";
}

Bucket bucket_of(std::int64_t frequency, const BucketSpec& spec) {
  if (frequency < 0) throw Error("frequency must be >= 0");
  if (frequency < spec.tail_max) return Bucket::kLongTail;
  if (frequency < spec.frequent_min) return Bucket::kInfrequent;
  return Bucket::kFrequent;
}

bool hit_at_k(std::span<const PassageId> retrieved, const PassageStore& store,
              std::span<const std::string> answers, std::size_t k) {
  if (k == 0) throw Error("hit_at_k requires k >= 1");
  const std::vector<std::string> folded = fold_all(answers);
  const std::size_t n = std::min(k, retrieved.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (passage_contains_answer(store, retrieved[i], folded)) return true;
  }
  return false;
}

const BucketResult* EvalReport::find(std::string_view bucket) const {
  if (bucket == "all") return &overall;
  for (const auto& b : buckets) {
    if (b.bucket == bucket) return &b;
  }
  return nullptr;
}

std::optional<double> EvalReport::recall(std::string_view bucket, std::size_t k) const {
  const BucketResult* b = find(bucket);
  if (!b || b->n == 0) return std::nullopt;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return b->recall[i];
  }
  return std::nullopt;
}

EvalReport evaluate(std::string system, const RetrievalFn& retrieve, std::span<const QASample> samples,
                    const PassageStore& store, std::span<const std::size_t> ks, const BucketSpec& spec) {
  validate(spec);
  if (ks.empty()) throw Error("evaluate requires at least one k");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0 || (i > 0 && ks[i] <= ks[i - 1])) throw Error("ks must be ascending and >= 1");
  }
  const std::size_t max_k = ks.back();
  EvalReport report;
  report.system = std::move(system);
  report.ks.assign(ks.begin(), ks.end());
  report.bucket_description = describe(spec);

  constexpr std::size_t kBuckets = std::size(kAllBuckets);
  std::vector<std::size_t> counts(kBuckets, 0);
  std::vector<std::vector<std::size_t>> hits(kBuckets, std::vector<std::size_t>(ks.size(), 0));
  std::vector<std::size_t> all_hits(ks.size(), 0);
  for (const QASample& s : samples) {
    const std::vector<PassageId> ranked = retrieve(s, max_k);
    const std::vector<std::string> folded = fold_all(s.answers);
    std::size_t first = 0;
    for (std::size_t r = 0; r < std::min(max_k, ranked.size()); ++r) {
      if (passage_contains_answer(store, ranked[r], folded)) {
        first = r + 1;
        break;
      }
    }
    report.first_hit.push_back(first);
    const auto b = static_cast<std::size_t>(bucket_of(s.frequency, spec));
    ++counts[b];
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (first != 0 && first <= ks[i]) {
        ++hits[b][i];
        ++all_hits[i];
      }
    }
  }
  for (std::size_t b = 0; b < kBuckets; ++b) {
    if (counts[b] == 0) continue;
    BucketResult r;
    r.bucket = std::string(to_string(kAllBuckets[b]));
    r.n = counts[b];
    for (std::size_t i = 0; i < ks.size(); ++i) {
      r.recall.push_back(static_cast<double>(hits[b][i]) / static_cast<double>(counts[b]));
    }
    report.buckets.push_back(std::move(r));
  }
  report.overall.bucket = "all";
  report.overall.n = samples.size();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    report.overall.recall.push_back(samples.empty() ? 0.0
                                                    : static_cast<double>(all_hits[i]) /
                                                          static_cast<double>(samples.size()));
  }
  return report;
}

std::string format_table(std::span<const EvalReport> reports) {
  if (reports.empty()) return "";
  // Column set: union of buckets in canonical order, then "all".
  std::vector<std::string> buckets;
  for (Bucket b : kAllBuckets) {
    const std::string name(to_string(b));
    for (const auto& r : reports) {
      if (r.find(name)) {
        buckets.push_back(name);
        break;
      }
    }
  }
  buckets.push_back("all");
  const std::vector<std::size_t>& ks = reports.front().ks;

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"system"};
  std::vector<std::string> counts{"n"};
  for (const auto& b : buckets) {
    for (std::size_t k : ks) header.push_back(b + " R@" + std::to_string(k));
  }
  for (const auto& b : buckets) {
    const BucketResult* found = reports.front().find(b);
    for (std::size_t i = 0; i < ks.size(); ++i) counts.push_back(found ? std::to_string(found->n) : "-");
  }
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row{r.system};
    for (const auto& b : buckets) {
      for (std::size_t k : ks) {
        const auto v = r.recall(b, k);
        row.push_back(v ? percent(*v) : "-");
      }
    }
    rows.push_back(std::move(row));
  }
  rows.push_back(counts);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += "  ";
      out += pad(row[c], width[c], c > 0);
    }
    out += '\n';
  }
  out += "buckets: " + reports.front().bucket_description + "\n";
  return out;
}

std::string format_records(std::span<const EvalReport> reports, std::string_view split) {
  std::string out;
  for (const auto& r : reports) {
    auto emit = [&](const BucketResult& b) {
      for (std::size_t i = 0; i < r.ks.size(); ++i) {
        nlohmann::json j;
        j["split"] = split;
        j["system"] = r.system;
        j["bucket"] = b.bucket;
        j["k"] = r.ks[i];
        j["value"] = b.recall[i];
        j["n"] = b.n;
        out += j.dump();
        out += '\n';
      }
    };
    for (const auto& b : r.buckets) emit(b);
    emit(r.overall);
  }
  return out;
}

}  // namespace tailret
