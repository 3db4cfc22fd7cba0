#include "tailret/embed.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tailret/binio.hpp"
#include "tailret/errors.hpp"
#include "tailret/hashing.hpp"

namespace tailret {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

FeatureVector compress(std::vector<std::uint32_t> indices, std::uint32_t dim) {
  std::sort(indices.begin(), indices.end());
  FeatureVector f;
  f.dim = dim;
  for (std::size_t i = 0; i < indices.size();) {
    std::size_t j = i;
    while (j < indices.size() && indices[j] == indices[i]) ++j;
    f.entries.push_back({indices[i], static_cast<double>(j - i)});
    i = j;
  }
  return f;
}

}  // namespace

std::vector<std::uint32_t> token_feature_indices(std::string_view token, const FeatureSpace& space) {
  std::vector<std::uint32_t> out;
  if (token.empty()) return out;
  std::string key = "w\x1f";
  key.append(token);
  out.push_back(murmur3_32(key, space.seed) % space.dim);

  std::u32string marked = U"^";
  marked += to_utf32(token);
  marked += U'$';
  for (std::size_t n = 3; n <= 5; ++n) {
    if (marked.size() < n) break;
    for (std::size_t i = 0; i + n <= marked.size(); ++i) {
      key = "c\x1f";
      key += to_utf8(std::u32string_view(marked).substr(i, n));
      out.push_back(murmur3_32(key, space.seed) % space.dim);
    }
  }
  return out;
}

FeatureVector featurize_tokens(const TokenStream& tokens, const FeatureSpace& space) {
  std::vector<std::uint32_t> indices;
  for (const auto& t : tokens.tokens) {
    auto part = token_feature_indices(t, space);
    indices.insert(indices.end(), part.begin(), part.end());
  }
  return compress(std::move(indices), space.dim);
}

FeatureVector featurize(std::string_view text, const FeatureSpace& space) {
  return featurize_tokens(tokenize(text), space);
}

EncoderParams EncoderParams::random(std::uint32_t d, FeatureSpace space, bool shared,
                                    std::uint64_t init_seed) {
  if (d < 2) throw Error("embedding dimension must be >= 2");
  if (space.dim == 0) throw Error("feature dimension must be >= 1");
  EncoderParams p;
  p.d_ = d;
  p.space_ = space;
  p.shared_ = shared;
  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  const std::size_t n = std::size_t{space.dim} * d;
  p.query_.resize(n);
  for (double& w : p.query_) w = normal(rng);
  if (!shared) {
    p.passage_.resize(n);
    for (double& w : p.passage_) w = normal(rng);
  }
  return p;
}

std::span<const double> EncoderParams::weights(Side side) const {
  return (side == Side::kPassage && !shared_) ? std::span<const double>(passage_)
                                              : std::span<const double>(query_);
}

std::span<double> EncoderParams::weights(Side side) {
  return (side == Side::kPassage && !shared_) ? std::span<double>(passage_) : std::span<double>(query_);
}

bool EncoderParams::all_finite() const {
  auto finite = [](double w) { return std::isfinite(w); };
  return std::all_of(query_.begin(), query_.end(), finite) &&
         std::all_of(passage_.begin(), passage_.end(), finite);
}

void EncoderParams::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, "ENCP", kFormatVersion);
  w.write(d_);
  w.write(space_.dim);
  w.write(space_.seed);
  w.write<std::uint8_t>(shared_);
  w.write_array<double>(query_);
  w.write_array<double>(passage_);
  w.close();
}

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
  BinaryReader r(path, "ENCP", kFormatVersion);
  EncoderParams p;
  p.d_ = r.read<std::uint32_t>();
  p.space_.dim = r.read<std::uint32_t>();
  p.space_.seed = r.read<std::uint32_t>();
  p.shared_ = r.read<std::uint8_t>() != 0;
  p.query_ = r.read_array<double>();
  p.passage_ = r.read_array<double>();
  r.expect_end();
  const std::size_t n = std::size_t{p.space_.dim} * p.d_;
  if (p.d_ < 2 || p.query_.size() != n || (!p.shared_ && p.passage_.size() != n) ||
      (p.shared_ && !p.passage_.empty())) {
    throw FormatError(path.string() + ": inconsistent encoder dimensions");
  }
  return p;
}

bool Embedding::is_zero() const {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

std::vector<double> raw_encode(const EncoderParams& params, const FeatureVector& f, Side side) {
  if (f.dim != params.space().dim) {
    throw DimensionError("feature dimension " + std::to_string(f.dim) + " does not match encoder " +
                         std::to_string(params.space().dim));
  }
  const std::uint32_t d = params.d();
  std::vector<double> u(d, 0.0);
  for (const FeatureEntry& e : f.entries) {
    const auto w = params.row(side, e.index);
    for (std::uint32_t k = 0; k < d; ++k) u[k] += e.count * w[k];
  }
  return u;
}

Embedding normalize(std::vector<double> raw) {
  const double norm = std::sqrt(dot(raw, raw));
  if (norm > 0.0) {
    for (double& x : raw) x /= norm;
  }
  return Embedding{std::move(raw)};
}

Embedding encode(const EncoderParams& params, const FeatureVector& f, Side side) {
  return normalize(raw_encode(params, f, side));
}

Embedding encode_text(const EncoderParams& params, std::string_view text, Side side) {
  return encode(params, featurize(text, params.space()), side);
}

double similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("embedding dimensions differ: " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
  return dot(a.v, b.v);
}

DenseIndex::DenseIndex(std::uint32_t d, std::vector<double> rows) : d_(d), rows_(std::move(rows)) {
  if (d_ == 0 || rows_.size() % d_ != 0) throw DimensionError("dense index rows do not match dimension");
}

void DenseIndex::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, "DIDX", kFormatVersion);
  w.write(d_);
  w.write_array<double>(rows_);
  w.close();
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
  BinaryReader r(path, "DIDX", kFormatVersion);
  const auto d = r.read<std::uint32_t>();
  auto rows = r.read_array<double>();
  r.expect_end();
  return DenseIndex(d, std::move(rows));
}

DenseIndex build_dense_index(const EncoderParams& params, const PassageStore& store) {
  if (store.empty()) throw Error("cannot index an empty passage store");
  std::vector<double> rows;
  rows.reserve(store.size() * params.d());
  for (const Passage& p : store.passages()) {
    const Embedding e = encode_text(params, store.text(p.id), Side::kPassage);
    rows.insert(rows.end(), e.v.begin(), e.v.end());
  }
  return DenseIndex(params.d(), std::move(rows));
}

Ranking dense_top_k(const DenseIndex& index, const Embedding& query, std::size_t k) {
  if (k == 0) throw Error("dense_top_k requires k >= 1");
  if (query.dim() != index.d()) {
    throw DimensionError("query dimension " + std::to_string(query.dim()) + " does not match index " +
                         std::to_string(index.d()));
  }
  std::vector<double> scores(index.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = dot(index.row(static_cast<PassageId>(i)), query.v);
  }
  return top_k_of(scores, k);
}

}  // namespace tailret
