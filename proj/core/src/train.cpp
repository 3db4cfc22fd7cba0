#include "tailret/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Row-sparse accumulator; rows get slots in first-touch order, which is
// deterministic for a fixed batch.
class RowAccumulator {
 public:
  explicit RowAccumulator(std::uint32_t d) : d_(d) {}

  void add(const FeatureVector& f, std::span<const double> direction, double scale) {
    for (const FeatureEntry& e : f.entries) {
      auto [it, inserted] = slot_.try_emplace(e.index, rows_.size());
      if (inserted) {
        rows_.push_back(e.index);
        values_.resize(values_.size() + d_, 0.0);
      }
      double* out = values_.data() + it->second * d_;
      const double c = e.count * scale;
      for (std::uint32_t k = 0; k < d_; ++k) out[k] += c * direction[k];
    }
  }

  SparseGradient finish() const {
    std::vector<std::size_t> order(rows_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows_[a] < rows_[b]; });
    SparseGradient g;
    g.d = d_;
    g.rows.reserve(rows_.size());
    g.values.reserve(values_.size());
    for (std::size_t i : order) {
      g.rows.push_back(rows_[i]);
      g.values.insert(g.values.end(), values_.begin() + static_cast<long>(i * d_),
                      values_.begin() + static_cast<long>((i + 1) * d_));
    }
    return g;
  }

 private:
  std::uint32_t d_;
  std::unordered_map<std::uint32_t, std::size_t> slot_;
  std::vector<std::uint32_t> rows_;
  std::vector<double> values_;
};

struct RawVector {
  std::vector<double> raw;
  double norm = 0.0;
  std::vector<double> unit;
};

RawVector encode_raw(const EncoderParams& params, const FeatureVector& f, Side side) {
  RawVector r;
  r.raw = raw_encode(params, f, side);
  r.norm = std::sqrt(dot(r.raw, r.raw));
  r.unit = r.raw;
  if (r.norm > 0.0) {
    for (double& x : r.unit) x /= r.norm;
  }
  return r;
}

// Gradient through x = u / |u|: (g - (g·x) x) / |u|.
std::vector<double> through_normalization(std::span<const double> g, const RawVector& r) {
  const double gx = dot(g, r.unit);
  std::vector<double> out(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) out[k] = (g[k] - gx * r.unit[k]) / r.norm;
  return out;
}

std::vector<PassageId> candidates_of(std::span<const TrainingExample> batch, std::size_t i, bool in_batch) {
  std::vector<PassageId> c;
  c.push_back(batch[i].positive);
  c.insert(c.end(), batch[i].negatives.begin(), batch[i].negatives.end());
  if (in_batch) {
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == i) continue;
      const PassageId p = batch[j].positive;
      if (std::find(c.begin(), c.end(), p) == c.end()) c.push_back(p);
    }
  }
  return c;
}

// Softmax cross-entropy with the first score as the target; returns the loss
// and writes d loss / d score into grad.
double softmax_nll(std::span<const double> scores, std::vector<double>* grad) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  const double lse = mx + std::log(z);
  if (grad) {
    grad->resize(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) (*grad)[j] = std::exp(scores[j] - lse);
    (*grad)[0] -= 1.0;
  }
  return lse - scores[0];
}

class PassageFeatures {
 public:
  virtual ~PassageFeatures() = default;
  virtual const FeatureVector& get(PassageId id) = 0;
};

class StoreFeatures : public PassageFeatures {
 public:
  StoreFeatures(const PassageStore& store, const FeatureSpace& space) : store_(store), space_(space) {}
  const FeatureVector& get(PassageId id) override {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, featurize(store_.text(id), space_)).first;
    return it->second;
  }

 private:
  const PassageStore& store_;
  FeatureSpace space_;
  std::unordered_map<PassageId, FeatureVector> cache_;
};

class CachedFeatures : public PassageFeatures {
 public:
  explicit CachedFeatures(const FeatureCache& cache) : cache_(cache) {}
  const FeatureVector& get(PassageId id) override { return cache_.passage(id); }

 private:
  const FeatureCache& cache_;
};

Gradient compute_gradient(const EncoderParams& params, std::span<const TrainingExample> batch,
                          PassageFeatures& features, bool in_batch, bool with_gradient) {
  if (batch.empty()) throw Error("loss_gradient requires a non-empty batch");
  const std::uint32_t d = params.d();
  const FeatureSpace& space = params.space();
  RowAccumulator acc_q(d);
  RowAccumulator acc_p(d);
  RowAccumulator& acc_passage = params.shared() ? acc_q : acc_p;

  std::unordered_map<PassageId, RawVector> passage_raw;
  auto passage_vec = [&](PassageId id) -> const RawVector& {
    auto it = passage_raw.find(id);
    if (it == passage_raw.end()) it = passage_raw.emplace(id, encode_raw(params, features.get(id), Side::kPassage)).first;
    return it->second;
  };

  // Forward pass first so the mean scale is known before accumulating.
  struct Forward {
    FeatureVector fq;
    RawVector q;
    std::vector<PassageId> cands;
    std::vector<double> dscore;
  };
  std::vector<Forward> forwards;
  Gradient out;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Forward fw;
    fw.fq = featurize(batch[i].query, space);
    fw.q = encode_raw(params, fw.fq, Side::kQuery);
    fw.cands = candidates_of(batch, i, in_batch);
    // An overflowing norm means the weights have blown up; surface it as a non-finite loss.
    bool overflow = !std::isfinite(fw.q.norm);
    for (PassageId c : fw.cands) overflow = overflow || !std::isfinite(passage_vec(c).norm);
    if (overflow) {
      out.used = 1;
      out.loss = std::numeric_limits<double>::infinity();
      return out;
    }
    bool degenerate = fw.q.norm == 0.0;
    for (PassageId c : fw.cands) degenerate = degenerate || passage_vec(c).norm == 0.0;
    if (degenerate) {
      ++out.skipped;
      continue;
    }
    std::vector<double> scores;
    scores.reserve(fw.cands.size());
    for (PassageId c : fw.cands) scores.push_back(dot(fw.q.unit, passage_vec(c).unit));
    loss_sum += softmax_nll(scores, with_gradient ? &fw.dscore : nullptr);
    forwards.push_back(std::move(fw));
  }
  out.used = forwards.size();
  if (out.used == 0) return out;
  out.loss = loss_sum / static_cast<double>(out.used);
  if (!with_gradient) return out;

  const double scale = 1.0 / static_cast<double>(out.used);
  std::vector<double> dq(d);
  std::vector<double> dp(d);
  for (const Forward& fw : forwards) {
    std::fill(dq.begin(), dq.end(), 0.0);
    for (std::size_t j = 0; j < fw.cands.size(); ++j) {
      const RawVector& p = passage_vec(fw.cands[j]);
      const double g = fw.dscore[j];
      for (std::uint32_t k = 0; k < d; ++k) {
        dq[k] += g * p.unit[k];
        dp[k] = g * fw.q.unit[k];
      }
      acc_passage.add(features.get(fw.cands[j]), through_normalization(dp, p), scale);
    }
    acc_q.add(fw.fq, through_normalization(dq, fw.q), scale);
  }
  out.query = acc_q.finish();
  if (!params.shared()) out.passage = acc_p.finish();
  return out;
}

class Stepper {
 public:
  Stepper(const TrainConfig& config, EncoderParams& params) : config_(config), params_(params) {
    if (config_.optimizer == Optimizer::kAdamW) {
      const std::size_t n = std::size_t{params.space().dim} * params.d();
      m_[0].assign(n, 0.0);
      v_[0].assign(n, 0.0);
      if (!params.shared()) {
        m_[1].assign(n, 0.0);
        v_[1].assign(n, 0.0);
      }
    }
  }

  void step(const Gradient& g) {
    ++t_;
    apply(g.query, Side::kQuery, 0);
    if (!params_.shared()) apply(g.passage, Side::kPassage, 1);
  }

 private:
  void apply(const SparseGradient& g, Side side, int slot) {
    auto w = params_.weights(side);
    const double lr = config_.learning_rate;
    const double wd = config_.weight_decay;
    const std::uint32_t d = g.d;
    if (config_.optimizer == Optimizer::kSgd) {
      for (std::size_t r = 0; r < g.rows.size(); ++r) {
        double* wr = w.data() + std::size_t{g.rows[r]} * d;
        const auto gr = g.row(r);
        for (std::uint32_t k = 0; k < d; ++k) wr[k] -= lr * (gr[k] + wd * wr[k]);
      }
      return;
    }
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    auto& m = m_[slot];
    auto& v = v_[slot];
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      const std::size_t base = std::size_t{g.rows[r]} * d;
      const auto gr = g.row(r);
      for (std::uint32_t k = 0; k < d; ++k) {
        const std::size_t i = base + k;
        m[i] = b1 * m[i] + (1.0 - b1) * gr[k];
        v[i] = b2 * v[i] + (1.0 - b2) * gr[k] * gr[k];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + config_.epsilon) + wd * w[i]);
      }
    }
  }

  const TrainConfig& config_;
  EncoderParams& params_;
  std::vector<double> m_[2];
  std::vector<double> v_[2];
  std::uint64_t t_ = 0;
};

}  // namespace

void check_example(const TrainingExample& example) {
  if (example.negatives.empty()) throw Error("training example needs at least one negative");
  std::set<PassageId> seen;
  for (PassageId n : example.negatives) {
    if (n == example.positive) throw Error("positive passage listed as a negative");
    if (!seen.insert(n).second) throw Error("duplicate negative passage");
  }
}

std::string_view to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adamw"; }

Optimizer optimizer_from_string(std::string_view s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adamw") return Optimizer::kAdamW;
  throw ConfigError("train.optimizer", "expected 'sgd' or 'adamw', got '" + std::string(s) + "'");
}

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (c.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("train.learning_rate", "must be finite and >= 0");
  }
  if (c.m < 1) throw ConfigError("train.m", "must be >= 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("train.beta1", "must be in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("train.beta2", "must be in [0, 1)");
  if (!(c.epsilon > 0.0)) throw ConfigError("train.epsilon", "must be > 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be >= 0");
}

MiningResult mine_examples(std::span<const QASample> selected, const SparseIndex& sparse,
                           const PassageStore& store, std::size_t m, std::size_t depth) {
  if (m < 1) throw Error("mine_examples requires m >= 1");
  if (depth < 2) throw Error("mining depth must be >= 2");
  MiningResult result;
  for (const QASample& s : selected) {
    const std::vector<std::string> answers = fold_all(s.answers);
    TrainingExample ex;
    ex.query = s.question;
    bool have_positive = false;
    for (const ScoredPassage& hit : sparse_top_k(sparse, tokenize(s.question), depth)) {
      if (passage_contains_answer(store, hit.id, answers)) {
        if (!have_positive) {
          ex.positive = hit.id;
          have_positive = true;
        }
      } else if (ex.negatives.size() < m) {
        ex.negatives.push_back(hit.id);
      }
      if (have_positive && ex.negatives.size() == m) break;
    }
    if (!have_positive || ex.negatives.empty()) {
      ++result.dropped;
      continue;
    }
    result.examples.push_back(std::move(ex));
  }
  return result;
}

double nll_loss(const Embedding& query, const Embedding& positive, std::span<const Embedding> negatives) {
  if (negatives.empty()) throw Error("nll_loss requires at least one negative");
  std::vector<double> scores;
  scores.push_back(similarity(query, positive));
  for (const Embedding& n : negatives) scores.push_back(similarity(query, n));
  return softmax_nll(scores, nullptr);
}

double SparseGradient::at(std::uint32_t feature, std::uint32_t k) const {
  auto it = std::lower_bound(rows.begin(), rows.end(), feature);
  if (it == rows.end() || *it != feature) return 0.0;
  return values[static_cast<std::size_t>(it - rows.begin()) * d + k];
}

double SparseGradient::squared_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

FeatureCache::FeatureCache(const PassageStore& store, const FeatureSpace& space) {
  passages_.reserve(store.size());
  for (const Passage& p : store.passages()) passages_.push_back(featurize(store.text(p.id), space));
}

Gradient loss_gradient(const EncoderParams& params, std::span<const TrainingExample> batch,
                       const PassageStore& store, bool in_batch) {
  StoreFeatures features(store, params.space());
  return compute_gradient(params, batch, features, in_batch, true);
}

Gradient loss_gradient(const EncoderParams& params, std::span<const TrainingExample> batch,
                       const FeatureCache& cache, bool in_batch) {
  CachedFeatures features(cache);
  return compute_gradient(params, batch, features, in_batch, true);
}

double batch_loss(const EncoderParams& params, std::span<const TrainingExample> batch,
                  const PassageStore& store, bool in_batch) {
  StoreFeatures features(store, params.space());
  return compute_gradient(params, batch, features, in_batch, false).loss;
}

TrainResult train_retriever(const EncoderParams& init, std::span<const TrainingExample> examples,
                            const PassageStore& store, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  validate(config);
  if (examples.empty()) throw Error("train_retriever requires at least one example");
  for (const auto& ex : examples) {
    check_example(ex);
    if (ex.positive >= store.size()) throw Error("training example references an unknown passage");
    for (PassageId n : ex.negatives) {
      if (n >= store.size()) throw Error("training example references an unknown passage");
    }
  }
  TrainResult result{init, {}, 0};
  const FeatureCache cache(store, init.space());
  Stepper stepper(config, result.params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(examples[order[i]]);
      }
      const Gradient g = loss_gradient(result.params, batch, cache, config.in_batch);
      if (epoch == 1) result.skipped += g.skipped;
      if (g.used == 0) continue;
      if (!std::isfinite(g.loss)) throw DivergenceError("non-finite training loss", epoch);
      loss_sum += g.loss * static_cast<double>(g.used);
      used += g.used;
      stepper.step(g);
    }
    if (!result.params.all_finite()) throw DivergenceError("non-finite encoder weights", epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = used == 0 ? 0.0 : loss_sum / static_cast<double>(used);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

void save_examples(const std::filesystem::path& path, std::span<const TrainingExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["query"] = ex.query;
    j["positive"] = ex.positive;
    j["negatives"] = ex.negatives;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<TrainingExample> load_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("examples file not found: " + path.string());
  std::vector<TrainingExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrainingExample ex;
      ex.query = j.at("query").get<std::string>();
      ex.positive = j.at("positive").get<PassageId>();
      ex.negatives = j.at("negatives").get<std::vector<PassageId>>();
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace tailret
