#include "tailret/router.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

RouterFeatures standardize(const RouterFeatures& x, const RouterFeatures& mean, const RouterFeatures& scale) {
  RouterFeatures z{};
  for (std::size_t i = 0; i < kRouterFeatureCount; ++i) z[i] = (x[i] - mean[i]) / scale[i];
  return z;
}

}  // namespace

RouterFeatures extract_features(std::string_view query, const SparseIndex& sparse) {
  RouterFeatures f{};
  const std::u32string cps = to_utf32(query);
  const TokenStream tokens = tokenize(query);
  std::size_t non_ascii = 0;
  std::size_t digits = 0;
  for (char32_t c : cps) {
    if (c > 0x7f) ++non_ascii;
    if (c >= U'0' && c <= U'9') ++digits;
  }
  const double n_chars = static_cast<double>(cps.size());
  f[0] = n_chars;
  f[1] = static_cast<double>(tokens.size());
  if (!tokens.empty()) {
    double total_len = 0.0;
    std::size_t max_df = 0;
    std::size_t min_df = std::numeric_limits<std::size_t>::max();
    std::size_t oov = 0;
    for (const auto& t : tokens.tokens) {
      total_len += static_cast<double>(to_utf32(t).size());
      const std::size_t df = sparse.doc_frequency(t);
      max_df = std::max(max_df, df);
      min_df = std::min(min_df, df);
      if (df == 0) ++oov;
    }
    const double n = static_cast<double>(tokens.size());
    f[2] = total_len / n;
    f[4] = std::log1p(static_cast<double>(max_df));
    f[5] = std::log1p(static_cast<double>(min_df));
    f[6] = static_cast<double>(oov) / n;
  }
  if (n_chars > 0) {
    f[3] = static_cast<double>(non_ascii) / n_chars;
    f[7] = static_cast<double>(digits) / n_chars;
  }
  return f;
}

std::string_view to_string(Route r) { return r == Route::kDense ? "dense" : "sparse"; }

Route route_from_string(std::string_view s) {
  if (s == "dense") return Route::kDense;
  if (s == "sparse") return Route::kSparse;
  throw FormatError("unknown route label: " + std::string(s));
}

RouterModel::RouterModel(RouterFeatures weights, double bias, RouterFeatures mean, RouterFeatures scale)
    : weights_(weights), bias_(bias), mean_(mean), scale_(scale) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights_.begin(), weights_.end(), finite) || !std::isfinite(bias_) ||
      !std::all_of(mean_.begin(), mean_.end(), finite) ||
      !std::all_of(scale_.begin(), scale_.end(), [](double v) { return std::isfinite(v) && v > 0.0; })) {
    throw Error("router parameters must be finite with positive scales");
  }
}

double RouterModel::probability(const RouterFeatures& features) const {
  const RouterFeatures z = standardize(features, mean_, scale_);
  double s = bias_;
  for (std::size_t i = 0; i < kRouterFeatureCount; ++i) s += weights_[i] * z[i];
  return sigmoid(s);
}

Route RouterModel::decide(const RouterFeatures& features) const {
  return probability(features) >= 0.5 ? Route::kDense : Route::kSparse;
}

void RouterModel::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, "RTRM", kFormatVersion);
  w.write<std::uint32_t>(kRouterFeatureCount);
  w.write_array<double>(weights_);
  w.write(bias_);
  w.write_array<double>(mean_);
  w.write_array<double>(scale_);
  w.close();
}

RouterModel RouterModel::load(const std::filesystem::path& path) {
  BinaryReader r(path, "RTRM", kFormatVersion);
  if (r.read<std::uint32_t>() != kRouterFeatureCount) throw FormatError(path.string() + ": feature count mismatch");
  auto to_array = [&](const std::vector<double>& v) {
    if (v.size() != kRouterFeatureCount) throw FormatError(path.string() + ": feature count mismatch");
    RouterFeatures a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
  };
  const RouterFeatures weights = to_array(r.read_array<double>());
  const double bias = r.read<double>();
  const RouterFeatures mean = to_array(r.read_array<double>());
  const RouterFeatures scale = to_array(r.read_array<double>());
  r.expect_end();
  return RouterModel(weights, bias, mean, scale);
}

RouterModel train_router(std::span<const LabeledQuery> labeled, const RouterConfig& config) {
  if (config.epochs < 1) throw ConfigError("router.epochs", "must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("router.learning_rate", "must be > 0");
  if (config.batch_size < 1) throw ConfigError("router.batch_size", "must be >= 1");
  const bool has_dense = std::any_of(labeled.begin(), labeled.end(),
                                     [](const LabeledQuery& q) { return q.label == Route::kDense; });
  const bool has_sparse = std::any_of(labeled.begin(), labeled.end(),
                                      [](const LabeledQuery& q) { return q.label == Route::kSparse; });
  if (!has_dense || !has_sparse) throw Error("router training data must contain both labels");

  const double n = static_cast<double>(labeled.size());
  RouterFeatures mean{};
  RouterFeatures scale{};
  for (const auto& q : labeled) {
    for (std::size_t i = 0; i < kRouterFeatureCount; ++i) mean[i] += q.features[i] / n;
  }
  for (const auto& q : labeled) {
    for (std::size_t i = 0; i < kRouterFeatureCount; ++i) {
      scale[i] += (q.features[i] - mean[i]) * (q.features[i] - mean[i]) / n;
    }
  }
  for (double& s : scale) s = s > 1e-24 ? std::sqrt(s) : 1.0;

  std::vector<RouterFeatures> z;
  z.reserve(labeled.size());
  for (const auto& q : labeled) z.push_back(standardize(q.features, mean, scale));

  RouterFeatures w{};
  double b = 0.0;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      RouterFeatures gw{};
      double gb = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        double s = b;
        for (std::size_t j = 0; j < kRouterFeatureCount; ++j) s += w[j] * z[i][j];
        const double y = labeled[i].label == Route::kDense ? 1.0 : 0.0;
        const double err = sigmoid(s) - y;
        for (std::size_t j = 0; j < kRouterFeatureCount; ++j) gw[j] += err * z[i][j];
        gb += err;
      }
      const double step = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t j = 0; j < kRouterFeatureCount; ++j) w[j] -= step * gw[j];
      b -= step * gb;
    }
  }
  return RouterModel(w, b, mean, scale);
}

Route route(const RouterModel& model, std::string_view query, const SparseIndex& sparse) {
  return model.decide(extract_features(query, sparse));
}

std::vector<LabeledQuery> make_router_labels(std::span<const std::string> queries,
                                             const std::vector<bool>& sparse_hit,
                                             const std::vector<bool>& dense_hit, const SparseIndex& sparse,
                                             std::uint64_t seed) {
  if (sparse_hit.size() != queries.size() || dense_hit.size() != queries.size()) {
    throw Error("router labels: hit vectors do not match the queries");
  }
  std::vector<std::size_t> sparse_wins;
  std::vector<std::size_t> dense_wins;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (sparse_hit[i] && !dense_hit[i]) sparse_wins.push_back(i);
    if (dense_hit[i] && !sparse_hit[i]) dense_wins.push_back(i);
  }
  std::mt19937_64 rng(seed);
  auto downsample = [&](std::vector<std::size_t>& v, std::size_t n) {
    if (v.size() <= n) return;
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(n);
  };
  const std::size_t n = std::min(sparse_wins.size(), dense_wins.size());
  downsample(sparse_wins, n);
  downsample(dense_wins, n);
  std::vector<std::pair<std::size_t, Route>> keep;
  for (std::size_t i : sparse_wins) keep.emplace_back(i, Route::kSparse);
  for (std::size_t i : dense_wins) keep.emplace_back(i, Route::kDense);
  std::sort(keep.begin(), keep.end());
  std::vector<LabeledQuery> out;
  out.reserve(keep.size());
  for (const auto& [i, label] : keep) {
    out.push_back({queries[i], extract_features(queries[i], sparse), label});
  }
  return out;
}

void save_labeled(const std::filesystem::path& path, std::span<const LabeledQuery> labeled) {
  std::string out;
  for (const auto& q : labeled) {
    nlohmann::json j;
    j["query"] = q.query;
    j["label"] = to_string(q.label);
    j["features"] = q.features;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<LabeledQuery> load_labeled(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("labeled query file not found: " + path.string());
  std::vector<LabeledQuery> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledQuery q;
      q.query = j.at("query").get<std::string>();
      q.label = route_from_string(j.at("label").get<std::string>());
      q.features = j.at("features").get<RouterFeatures>();
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace tailret
