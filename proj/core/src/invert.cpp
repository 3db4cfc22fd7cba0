#include "tailret/invert.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

struct EncodedText {
  Eigen::VectorXd embedding;
  std::vector<std::pair<long, double>> counts;  // vocab index, count
  double n_tokens = 0.0;
};

std::vector<EncodedText> encode_texts(const InverseModel& model, const EncoderParams& encoder,
                                      std::span<const std::string> texts) {
  std::vector<EncodedText> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const TokenStream tokens = tokenize(text);
    EncodedText et;
    const Embedding e = encode(encoder, featurize_tokens(tokens, encoder.space()));
    et.embedding = Eigen::Map<const Eigen::VectorXd>(e.v.data(), static_cast<Eigen::Index>(e.v.size()));
    std::map<long, double> counts;
    for (const auto& t : tokens.tokens) {
      const long idx = model.token_index(t);
      if (idx >= 0) counts[idx] += 1.0;
    }
    for (const auto& [idx, c] : counts) {
      et.counts.emplace_back(idx, c);
      et.n_tokens += c;
    }
    out.push_back(std::move(et));
  }
  return out;
}

// Column-wise log-softmax in place.
void log_softmax_columns(Eigen::MatrixXd& logits) {
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    auto col = logits.col(j);
    const double m = col.maxCoeff();
    const double lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }
}

double batch_log_likelihood(const Eigen::MatrixXd& log_probs, std::span<const EncodedText* const> batch) {
  double total = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    for (const auto& [idx, c] : batch[j]->counts) total += c * log_probs(idx, static_cast<Eigen::Index>(j));
  }
  return total;
}

double mean_ll(const InverseModel& model, const std::vector<EncodedText>& encoded) {
  if (encoded.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  const Eigen::Index d = model.decoder().rows();
  double total = 0.0;
  std::vector<const EncodedText*> chunk;
  for (std::size_t start = 0; start < encoded.size(); start += kChunk) {
    const std::size_t end = std::min(encoded.size(), start + kChunk);
    Eigen::MatrixXd E(d, static_cast<Eigen::Index>(end - start));
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) {
      E.col(static_cast<Eigen::Index>(i - start)) = encoded[i].embedding;
      chunk.push_back(&encoded[i]);
    }
    Eigen::MatrixXd log_probs = model.decoder().transpose() * E;
    log_softmax_columns(log_probs);
    total += batch_log_likelihood(log_probs, chunk);
  }
  return total / static_cast<double>(encoded.size());
}

}  // namespace

InverseModel::InverseModel(std::vector<std::string> vocab, Eigen::MatrixXd decoder, std::size_t max_len,
                           std::size_t beam)
    : vocab_(std::move(vocab)), decoder_(std::move(decoder)), max_len_(max_len), beam_(beam) {
  if (vocab_.empty()) throw Error("inverse model vocabulary is empty");
  if (static_cast<std::size_t>(decoder_.cols()) != vocab_.size()) {
    throw DimensionError("decoder columns do not match vocabulary size");
  }
  if (beam_ == 0) throw Error("beam must be >= 1");
  index_.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<long>(i)).second) {
      throw Error("duplicate vocabulary token: " + vocab_[i]);
    }
  }
}

long InverseModel::token_index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

Eigen::VectorXd InverseModel::logits(const Embedding& e) const {
  if (e.dim() != d()) throw DimensionError("embedding dimension does not match inverse model");
  return decoder_.transpose() *
         Eigen::Map<const Eigen::VectorXd>(e.v.data(), static_cast<Eigen::Index>(e.v.size()));
}

void InverseModel::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, "INVM", kFormatVersion);
  w.write<std::uint32_t>(d());
  w.write<std::uint64_t>(max_len_);
  w.write<std::uint64_t>(beam_);
  w.write<std::uint64_t>(vocab_.size());
  for (const auto& t : vocab_) w.write_string(t);
  w.write_array<double>(std::span<const double>(decoder_.data(), static_cast<std::size_t>(decoder_.size())));
  w.close();
}

InverseModel InverseModel::load(const std::filesystem::path& path) {
  BinaryReader r(path, "INVM", kFormatVersion);
  const auto d = r.read<std::uint32_t>();
  const auto max_len = r.read<std::uint64_t>();
  const auto beam = r.read<std::uint64_t>();
  const auto n = r.read<std::uint64_t>();
  std::vector<std::string> vocab;
  vocab.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) vocab.push_back(r.read_string());
  const auto flat = r.read_array<double>();
  r.expect_end();
  if (flat.size() != std::size_t{d} * n) throw FormatError(path.string() + ": decoder size mismatch");
  Eigen::MatrixXd decoder = Eigen::Map<const Eigen::MatrixXd>(flat.data(), d, static_cast<Eigen::Index>(n));
  return InverseModel(std::move(vocab), std::move(decoder), max_len, beam);
}

std::vector<std::string> build_vocab(std::span<const std::string> texts, std::size_t max_vocab) {
  std::map<std::string, std::size_t> freq;
  for (const auto& text : texts) {
    for (auto& t : tokenize(text).tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);
  std::vector<std::string> vocab;
  vocab.reserve(ranked.size());
  for (auto& [t, c] : ranked) vocab.push_back(t);
  return vocab;
}

InverseTrainingResult train_inverse(const EncoderParams& encoder, std::span<const std::string> texts,
                                    const InverseConfig& config) {
  if (texts.empty()) throw Error("train_inverse: empty text list");
  if (config.batch_size == 0) throw Error("train_inverse: batch_size must be >= 1");
  std::vector<std::string> vocab = build_vocab(texts, config.max_vocab);
  if (vocab.empty()) throw Error("train_inverse: texts contain no tokens");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  const Eigen::Index d = encoder.d();
  const auto n_vocab = static_cast<Eigen::Index>(vocab.size());
  Eigen::MatrixXd decoder(d, n_vocab);
  for (Eigen::Index j = 0; j < n_vocab; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) decoder(i, j) = normal(rng);
  }
  InverseTrainingResult result{InverseModel(std::move(vocab), std::move(decoder), config.max_len, config.beam), {}};
  InverseModel& model = result.model;

  const std::vector<EncodedText> encoded = encode_texts(model, encoder, texts);
  result.log_likelihood.push_back(mean_ll(model, encoded));

  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const EncodedText*> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd E(d, b);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        E.col(static_cast<Eigen::Index>(i - start)) = encoded[order[i]].embedding;
        batch.push_back(&encoded[order[i]]);
      }
      Eigen::MatrixXd probs = model.decoder().transpose() * E;
      log_softmax_columns(probs);
      probs = probs.array().exp();
      // d/dV Σ_t c_t log p_t = e (c - n p)ᵀ
      Eigen::MatrixXd residual = -probs;
      for (Eigen::Index j = 0; j < b; ++j) {
        residual.col(j) *= batch[static_cast<std::size_t>(j)]->n_tokens;
        for (const auto& [idx, c] : batch[static_cast<std::size_t>(j)]->counts) residual(idx, j) += c;
      }
      model.decoder().noalias() += (config.learning_rate / static_cast<double>(b)) * E * residual.transpose();
    }
    const double ll = mean_ll(model, encoded);
    if (!std::isfinite(ll)) throw DivergenceError("inverse model objective is not finite", epoch);
    result.log_likelihood.push_back(ll);
  }
  return result;
}

double mean_log_likelihood(const InverseModel& model, const EncoderParams& encoder,
                           std::span<const std::string> texts) {
  return mean_ll(model, encode_texts(model, encoder, texts));
}

Inverter::Inverter(const InverseModel& model, const EncoderParams& encoder)
    : model_(model), encoder_(encoder) {
  if (model.d() != encoder.d()) throw DimensionError("inverse model and encoder dimensions differ");
  const std::uint32_t d = encoder.d();
  token_raw_.assign(model.vocab().size() * d, 0.0);
  for (std::size_t t = 0; t < model.vocab().size(); ++t) {
    const FeatureVector f = featurize_tokens(TokenStream{{model.vocab()[t]}}, encoder.space());
    const std::vector<double> raw = raw_encode(encoder, f);
    std::copy(raw.begin(), raw.end(), token_raw_.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
}

ReconstructionResult Inverter::invert(const Embedding& e) const {
  const std::uint32_t d = encoder_.d();
  if (e.dim() != d) throw DimensionError("embedding dimension does not match encoder");
  constexpr double kMinGain = 1e-9;

  const Eigen::VectorXd logits = model_.logits(e);
  std::vector<long> order(static_cast<std::size_t>(logits.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](long a, long b) { return logits(a) > logits(b); });

  ReconstructionResult result;
  std::vector<bool> used(order.size(), false);
  std::vector<double> current(d, 0.0);
  std::vector<double> candidate(d);
  double current_cos = 0.0;

  while (result.tokens.size() < model_.max_len()) {
    long best = -1;
    double best_cos = current_cos;
    std::size_t tried = 0;
    for (std::size_t r = 0; r < order.size() && tried < model_.beam(); ++r) {
      const long tok = order[r];
      if (used[static_cast<std::size_t>(tok)]) continue;
      ++tried;
      const double* row = token_raw_.data() + static_cast<std::size_t>(tok) * d;
      double norm2 = 0.0;
      double dot = 0.0;
      for (std::uint32_t k = 0; k < d; ++k) {
        candidate[k] = current[k] + row[k];
        norm2 += candidate[k] * candidate[k];
        dot += candidate[k] * e.v[k];
      }
      ++result.encodings;
      const double cos = norm2 > 0.0 ? dot / std::sqrt(norm2) : 0.0;
      if (cos > best_cos) {
        best_cos = cos;
        best = tok;
      }
    }
    if (best < 0 || best_cos <= current_cos + kMinGain) break;
    used[static_cast<std::size_t>(best)] = true;
    const double* row = token_raw_.data() + static_cast<std::size_t>(best) * d;
    for (std::uint32_t k = 0; k < d; ++k) current[k] += row[k];
    current_cos = best_cos;
    result.tokens.push_back(model_.vocab()[static_cast<std::size_t>(best)]);
    result.score_trace.push_back(best_cos);
  }
  result.x_hat = join(result.tokens, " ");
  return result;
}

ReconstructionResult invert_embedding(const InverseModel& model, const EncoderParams& encoder,
                                      const Embedding& e) {
  return Inverter(model, encoder).invert(e);
}

}  // namespace tailret
