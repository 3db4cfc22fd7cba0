#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tailret/embed.hpp"

namespace tailret {

struct InverseConfig {
  int epochs = 30;
  double learning_rate = 0.1;
  std::uint64_t seed = 17;
  std::size_t batch_size = 32;
  std::size_t max_vocab = 50000;
  std::size_t max_len = 16;
  std::size_t beam = 8;
};

// Linear bag-of-tokens decoder: logits = Vᵀ e over an ordered vocabulary.
class InverseModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  InverseModel() = default;
  InverseModel(std::vector<std::string> vocab, Eigen::MatrixXd decoder, std::size_t max_len,
               std::size_t beam);

  const std::vector<std::string>& vocab() const { return vocab_; }
  // d x |vocab|
  const Eigen::MatrixXd& decoder() const { return decoder_; }
  Eigen::MatrixXd& decoder() { return decoder_; }
  std::size_t max_len() const { return max_len_; }
  std::size_t beam() const { return beam_; }
  std::uint32_t d() const { return static_cast<std::uint32_t>(decoder_.rows()); }

  // -1 for out-of-vocabulary tokens.
  long token_index(const std::string& token) const;
  Eigen::VectorXd logits(const Embedding& e) const;

  void save(const std::filesystem::path& path) const;
  static InverseModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> vocab_;
  Eigen::MatrixXd decoder_;
  std::size_t max_len_ = 16;
  std::size_t beam_ = 8;
  std::unordered_map<std::string, long> index_;
};

struct InverseTrainingResult {
  InverseModel model;
  // Mean per-text log-likelihood before training (entry 0) and after each epoch.
  std::vector<double> log_likelihood;
};

// Vocabulary: all tokens of `texts`, most frequent first (ties
// lexicographic), capped at config.max_vocab.
std::vector<std::string> build_vocab(std::span<const std::string> texts, std::size_t max_vocab);

// Maximises the bag-of-tokens likelihood Σ_x Σ_{t∈x} log softmax(Vᵀφ(x))[t]
// with mini-batch gradient ascent. Throws Error on an empty text list or
// empty vocabulary, DivergenceError on a non-finite objective.
InverseTrainingResult train_inverse(const EncoderParams& encoder, std::span<const std::string> texts,
                                    const InverseConfig& config);

double mean_log_likelihood(const InverseModel& model, const EncoderParams& encoder,
                           std::span<const std::string> texts);

struct ReconstructionResult {
  std::string x_hat;
  std::vector<std::string> tokens;
  // Cosine to the target after each accepted append.
  std::vector<double> score_trace;
  std::size_t encodings = 0;

  double final_cosine() const { return score_trace.empty() ? 0.0 : score_trace.back(); }
};

// Round-trip greedy search bound to one (model, encoder) pair. Token
// embeddings W·f(token) are cached, so each tentative append costs O(d).
class Inverter {
 public:
  Inverter(const InverseModel& model, const EncoderParams& encoder);

  // Starting from the empty text, each step tries the `beam` highest-logit
  // vocabulary tokens not yet used and keeps the append that maximises
  // cos(φ(x̂), e); stops when no append improves the cosine by more than
  // 1e-9 or after max_len tokens.
  ReconstructionResult invert(const Embedding& e) const;

  const InverseModel& model() const { return model_; }
  const EncoderParams& encoder() const { return encoder_; }

 private:
  const InverseModel& model_;
  const EncoderParams& encoder_;
  std::vector<double> token_raw_;  // |vocab| x d
};

ReconstructionResult invert_embedding(const InverseModel& model, const EncoderParams& encoder,
                                      const Embedding& e);

}  // namespace tailret
