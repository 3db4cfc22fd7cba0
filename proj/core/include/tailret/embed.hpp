#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/lexical.hpp"

namespace tailret {

// Hashing space shared by the featurizer and the encoder.
struct FeatureSpace {
  std::uint32_t dim = 1u << 18;
  std::uint32_t seed = 0x7a11u;

  bool operator==(const FeatureSpace&) const = default;
};

struct FeatureEntry {
  std::uint32_t index = 0;
  double count = 0.0;

  bool operator==(const FeatureEntry&) const = default;
};

// Sparse counts sorted by index; every count > 0 and every index < dim.
struct FeatureVector {
  std::vector<FeatureEntry> entries;
  std::uint32_t dim = 0;

  bool empty() const { return entries.empty(); }
  bool operator==(const FeatureVector&) const = default;
};

// Hashed indices (with repeats) contributed by one token: the word unigram
// plus character 3-, 4- and 5-grams of "^token$".
std::vector<std::uint32_t> token_feature_indices(std::string_view token, const FeatureSpace& space);

// Features of a text are the sum of the features of its tokens.
FeatureVector featurize(std::string_view text, const FeatureSpace& space);
FeatureVector featurize_tokens(const TokenStream& tokens, const FeatureSpace& space);

enum class Side { kQuery, kPassage };

// Linear bi-encoder. Weights are stored feature-major (row j holds the d
// weights of feature j) so encoding a sparse vector touches contiguous rows.
// With shared = true the passage side reuses the query matrix.
class EncoderParams {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  EncoderParams() = default;
  // Entries drawn i.i.d. N(0, 1/d) from init_seed.
  static EncoderParams random(std::uint32_t d, FeatureSpace space, bool shared, std::uint64_t init_seed);

  std::uint32_t d() const { return d_; }
  const FeatureSpace& space() const { return space_; }
  bool shared() const { return shared_; }

  std::span<const double> weights(Side side) const;
  std::span<double> weights(Side side);
  std::span<const double> row(Side side, std::uint32_t feature) const {
    return weights(side).subspan(std::size_t{feature} * d_, d_);
  }
  std::span<double> row(Side side, std::uint32_t feature) {
    return weights(side).subspan(std::size_t{feature} * d_, d_);
  }

  bool all_finite() const;

  void save(const std::filesystem::path& path) const;
  static EncoderParams load(const std::filesystem::path& path);

  bool operator==(const EncoderParams&) const = default;

 private:
  std::uint32_t d_ = 0;
  FeatureSpace space_;
  bool shared_ = true;
  std::vector<double> query_;
  std::vector<double> passage_;
};

// Unit norm, or all zeros when the underlying feature vector is empty.
struct Embedding {
  std::vector<double> v;

  std::size_t dim() const { return v.size(); }
  bool is_zero() const;
  bool operator==(const Embedding&) const = default;
};

// W · f before normalisation. Throws DimensionError if f.dim != space.dim.
std::vector<double> raw_encode(const EncoderParams& params, const FeatureVector& f, Side side = Side::kQuery);
Embedding normalize(std::vector<double> raw);
Embedding encode(const EncoderParams& params, const FeatureVector& f, Side side = Side::kQuery);
Embedding encode_text(const EncoderParams& params, std::string_view text, Side side = Side::kQuery);

double similarity(const Embedding& a, const Embedding& b);

// Exact dense index: row i is the passage-side embedding of passage i.
class DenseIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  DenseIndex() = default;
  DenseIndex(std::uint32_t d, std::vector<double> rows);

  std::size_t size() const { return d_ == 0 ? 0 : rows_.size() / d_; }
  std::uint32_t d() const { return d_; }
  std::span<const double> row(PassageId id) const {
    return std::span<const double>(rows_).subspan(std::size_t{id} * d_, d_);
  }

  void save(const std::filesystem::path& path) const;
  static DenseIndex load(const std::filesystem::path& path);

  bool operator==(const DenseIndex&) const = default;

 private:
  std::uint32_t d_ = 0;
  std::vector<double> rows_;
};

DenseIndex build_dense_index(const EncoderParams& params, const PassageStore& store);

// Exact top-k by inner product, ties by ascending id.
Ranking dense_top_k(const DenseIndex& index, const Embedding& query, std::size_t k);

}  // namespace tailret
