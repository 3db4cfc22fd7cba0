#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/embed.hpp"
#include "tailret/lexical.hpp"

namespace tailret {

struct TrainingExample {
  std::string query;
  PassageId positive = 0;
  std::vector<PassageId> negatives;

  bool operator==(const TrainingExample&) const = default;
};

// Throws Error unless negatives are non-empty, distinct and exclude the positive.
void check_example(const TrainingExample& example);

enum class Optimizer { kSgd, kAdamW };

std::string_view to_string(Optimizer o);
Optimizer optimizer_from_string(std::string_view s);

struct TrainConfig {
  std::size_t batch_size = 32;
  int epochs = 15;
  double learning_rate = 1e-2;
  std::size_t m = 4;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  // Also score each query against the other positives of its batch.
  bool in_batch = false;
};

// Throws ConfigError naming the first invalid field.
void validate(const TrainConfig& config);

struct MiningResult {
  std::vector<TrainingExample> examples;
  std::size_t dropped = 0;  // samples without an answer-bearing passage
};

// Positive: best BM25-ranked passage containing an answer. Negatives: the
// best-ranked answer-free passages, up to m. Search stops at `depth`.
MiningResult mine_examples(std::span<const QASample> selected, const SparseIndex& sparse,
                           const PassageStore& store, std::size_t m, std::size_t depth = 50);

// -log(exp(f+) / (exp(f+) + Σ exp(f-))) with f the dot product.
double nll_loss(const Embedding& query, const Embedding& positive, std::span<const Embedding> negatives);

// Gradient restricted to the rows of W it touches. Rows are sorted and each
// row holds d values.
struct SparseGradient {
  std::uint32_t d = 0;
  std::vector<std::uint32_t> rows;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * d, d);
  }
  // Value at (feature, k), 0 when the row is absent.
  double at(std::uint32_t feature, std::uint32_t k) const;
  double squared_norm() const;
};

struct Gradient {
  SparseGradient query;    // the shared matrix when weights are shared
  SparseGradient passage;  // empty when weights are shared
  double loss = 0.0;       // mean over used examples
  std::size_t used = 0;
  std::size_t skipped = 0;  // examples with a zero-feature query or passage
};

// Feature vectors of every passage, computed once.
class FeatureCache {
 public:
  FeatureCache(const PassageStore& store, const FeatureSpace& space);
  const FeatureVector& passage(PassageId id) const { return passages_.at(id); }
  std::size_t size() const { return passages_.size(); }

 private:
  std::vector<FeatureVector> passages_;
};

// Exact gradient of the mean batch loss with respect to W, through the
// normalisation of both encoders. Each candidate list is the positive
// followed by the negatives (plus other batch positives when in_batch).
Gradient loss_gradient(const EncoderParams& params, std::span<const TrainingExample> batch,
                       const PassageStore& store, bool in_batch = false);
Gradient loss_gradient(const EncoderParams& params, std::span<const TrainingExample> batch,
                       const FeatureCache& cache, bool in_batch = false);

// Mean loss of the batch under params, skipping degenerate examples.
double batch_loss(const EncoderParams& params, std::span<const TrainingExample> batch,
                  const PassageStore& store, bool in_batch = false);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochRecord> log;
  std::size_t skipped = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch descent over a seeded shuffle of the examples. AdamW updates
// only the rows a batch touches, with bias correction from the global step.
// Throws DivergenceError on a non-finite loss or parameter.
TrainResult train_retriever(const EncoderParams& init, std::span<const TrainingExample> examples,
                            const PassageStore& store, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

void save_examples(const std::filesystem::path& path, std::span<const TrainingExample> examples);
std::vector<TrainingExample> load_examples(const std::filesystem::path& path);

}  // namespace tailret
