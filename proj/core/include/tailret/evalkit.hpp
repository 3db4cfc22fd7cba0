#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/lexical.hpp"

namespace tailret {

enum class Bucket { kLongTail, kInfrequent, kFrequent };

inline constexpr Bucket kAllBuckets[] = {Bucket::kLongTail, Bucket::kInfrequent, Bucket::kFrequent};

std::string_view to_string(Bucket b);

// Half-open, lower-inclusive: long-tail [low, tail_max), infrequent
// [tail_max, frequent_min), frequent [frequent_min, ∞). Frequencies below
// low still count as long-tail.
struct BucketSpec {
  std::int64_t low = 0;
  std::int64_t tail_max = 100;
  std::int64_t frequent_min = 10000;
};

void validate(const BucketSpec& spec);
std::string describe(const BucketSpec& spec);

// Throws Error for a negative frequency.
Bucket bucket_of(std::int64_t frequency, const BucketSpec& spec);

// True iff a case-folded answer is a substring of one of the first k passages.
bool hit_at_k(std::span<const PassageId> retrieved, const PassageStore& store,
              std::span<const std::string> answers, std::size_t k);

// Retrieves at least k ranked passages for a question.
using RetrievalFn = std::function<std::vector<PassageId>(const QASample& sample, std::size_t k)>;

struct BucketResult {
  std::string bucket;
  std::size_t n = 0;
  std::vector<double> recall;  // parallel to EvalReport::ks
};

struct EvalReport {
  std::string system;
  std::vector<std::size_t> ks;
  std::vector<BucketResult> buckets;  // non-empty buckets in spec order
  BucketResult overall;               // every sample, bucket "all"
  // 1-based rank of the first answer-bearing passage within max(ks); 0 if none.
  std::vector<std::size_t> first_hit;
  std::string bucket_description;

  const BucketResult* find(std::string_view bucket) const;
  // Recall at k for a bucket ("all" for overall); nullopt when absent.
  std::optional<double> recall(std::string_view bucket, std::size_t k) const;
};

// ks must be non-empty, strictly ascending and >= 1.
EvalReport evaluate(std::string system, const RetrievalFn& retrieve, std::span<const QASample> samples,
                    const PassageStore& store, std::span<const std::size_t> ks, const BucketSpec& spec);

// Aligned text table, one row per system, R@k as percentages.
std::string format_table(std::span<const EvalReport> reports);

// One JSON object per (system, bucket, k) with value and n, tagged with the
// name of the evaluated question set.
std::string format_records(std::span<const EvalReport> reports, std::string_view split = "eval");

}  // namespace tailret
