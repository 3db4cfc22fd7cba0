#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailret/lexical.hpp"

namespace tailret {

inline constexpr std::size_t kRouterFeatureCount = 8;

// [char length, token count, mean token length, non-ASCII ratio,
//  log(1 + max df), log(1 + min df), OOV fraction, digit ratio]
// Lengths count code points; unseen tokens have df 0.
using RouterFeatures = std::array<double, kRouterFeatureCount>;

RouterFeatures extract_features(std::string_view query, const SparseIndex& sparse);

enum class Route { kSparse, kDense };

std::string_view to_string(Route r);
Route route_from_string(std::string_view s);

struct LabeledQuery {
  std::string query;
  RouterFeatures features{};
  Route label = Route::kSparse;
};

struct RouterConfig {
  int epochs = 200;
  double learning_rate = 0.5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 5;
};

class RouterModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  RouterModel() = default;
  RouterModel(RouterFeatures weights, double bias, RouterFeatures mean, RouterFeatures scale);

  const RouterFeatures& weights() const { return weights_; }
  double bias() const { return bias_; }
  const RouterFeatures& mean() const { return mean_; }
  const RouterFeatures& scale() const { return scale_; }

  // Probability that the dense retriever should answer.
  double probability(const RouterFeatures& features) const;
  Route decide(const RouterFeatures& features) const;

  void save(const std::filesystem::path& path) const;
  static RouterModel load(const std::filesystem::path& path);

  bool operator==(const RouterModel&) const = default;

 private:
  RouterFeatures weights_{};
  double bias_ = 0.0;
  RouterFeatures mean_{};
  RouterFeatures scale_ = {1, 1, 1, 1, 1, 1, 1, 1};
};

// Logistic regression on standardised features, zero initialised, seeded
// mini-batch order. Throws Error unless both labels occur.
RouterModel train_router(std::span<const LabeledQuery> labeled, const RouterConfig& config);

// sigmoid(w·x + b) >= 0.5 routes to dense.
Route route(const RouterModel& model, std::string_view query, const SparseIndex& sparse);

// Queries where exactly one retriever hits become labels (the winner);
// the larger class is then downsampled with the seed to the size of the
// smaller one. Input order is kept.
std::vector<LabeledQuery> make_router_labels(std::span<const std::string> queries,
                                             const std::vector<bool>& sparse_hit,
                                             const std::vector<bool>& dense_hit, const SparseIndex& sparse,
                                             std::uint64_t seed);

void save_labeled(const std::filesystem::path& path, std::span<const LabeledQuery> labeled);
std::vector<LabeledQuery> load_labeled(const std::filesystem::path& path);

}  // namespace tailret
