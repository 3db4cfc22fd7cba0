#include "tailret/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tailret/errors.hpp"

namespace tailret {
namespace {

std::string trim(std::string s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(const std::map<std::string, std::string>& values, std::filesystem::path base)
      : values_(values), base_(std::move(base)) {}

  const std::string& raw(const std::string& key) const { return values_.at(key); }

  std::int64_t integer(const std::string& key, std::int64_t min_value) const {
    const std::string& s = raw(key);
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(s, &used, 0);
    } catch (const std::exception&) {
      throw ConfigError(key, "expected an integer, got '" + s + "'");
    }
    if (used != s.size()) throw ConfigError(key, "expected an integer, got '" + s + "'");
    if (v < min_value) throw ConfigError(key, "must be >= " + std::to_string(min_value));
    return v;
  }

  std::size_t count(const std::string& key, std::int64_t min_value = 1) const {
    return static_cast<std::size_t>(integer(key, min_value));
  }

  double real(const std::string& key) const {
    const std::string& s = raw(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ConfigError(key, "expected a number, got '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw ConfigError(key, "expected a finite number, got '" + s + "'");
    return v;
  }

  bool boolean(const std::string& key) const {
    const std::string& s = raw(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key, "expected a boolean, got '" + s + "'");
  }

  std::filesystem::path path(const std::string& key, bool required) const {
    const std::string& s = raw(key);
    if (s.empty()) {
      if (required) throw ConfigError(key, "path is required");
      return {};
    }
    std::filesystem::path p(s);
    return p.is_absolute() ? p : (base_ / p).lexically_normal();
  }

 private:
  const std::map<std::string, std::string>& values_;
  std::filesystem::path base_;
};

}  // namespace

const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> defaults = {
      {"seed", "13"},
      {"paths.corpus", ""},
      {"paths.triples", ""},
      {"paths.templates", ""},
      {"paths.eval", ""},
      {"paths.inverse_texts", ""},
      {"paths.routing_train", ""},
      {"paths.routing_eval", ""},
      {"paths.workdir", "work"},
      {"bm25.k1", "1.2"},
      {"bm25.b", "0.75"},
      {"encoder.d", "64"},
      {"encoder.features", "262144"},
      {"encoder.feature_seed", "31249"},
      {"encoder.shared", "true"},
      {"inverse.epochs", "30"},
      {"inverse.learning_rate", "0.1"},
      {"inverse.batch_size", "32"},
      {"inverse.max_vocab", "50000"},
      {"inverse.max_len", "16"},
      {"inverse.beam", "8"},
      {"inverse.max_texts", "1500"},
      {"synth.max_popularity", "100"},
      {"synth.depth", "50"},
      {"selection.threshold", "0.6"},
      {"selection.cap", "0"},
      {"train.batch_size", "32"},
      {"train.epochs", "15"},
      {"train.learning_rate", "0.01"},
      {"train.m", "4"},
      {"train.optimizer", "adamw"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.epsilon", "1e-8"},
      {"train.weight_decay", "0"},
      {"train.in_batch", "false"},
      {"train.mine_depth", "50"},
      {"router.epochs", "200"},
      {"router.learning_rate", "0.5"},
      {"router.batch_size", "32"},
      {"eval.ks", "10,20"},
      {"eval.low", "0"},
      {"eval.tail_max", "100"},
      {"eval.frequent_min", "10000"},
      {"eval.systems", "bm25,dense-untrained,dense-rpdr,dense-random,dense-full,routed"},
  };
  return defaults;
}

const std::vector<std::string>& known_systems() {
  static const std::vector<std::string> systems = {"bm25",       "dense-untrained", "dense-rpdr", "dense-random",
                                                   "dense-full", "dense-qwaw",      "routed"};
  return systems;
}

PipelineConfig load_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(path.string(), e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  std::map<std::string, std::string> values = config_defaults();
  auto set = [&](const std::string& key, const std::string& value) {
    if (!values.count(key)) throw ConfigError(key, "unknown key");
    values[key] = trim(value);
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set(name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) set(name + "." + key, leaf.data());
  }
  for (const auto& [key, value] : overrides) set(key, value);
  return make_config(std::move(values), path.parent_path());
}

PipelineConfig make_config(std::map<std::string, std::string> values, const std::filesystem::path& base_dir) {
  for (const auto& [key, value] : config_defaults()) values.try_emplace(key, value);
  for (const auto& [key, value] : values) {
    if (!config_defaults().count(key)) throw ConfigError(key, "unknown key");
  }
  const Reader r(values, base_dir);
  PipelineConfig c;
  c.seed = static_cast<std::uint64_t>(r.integer("seed", 0));

  c.paths.corpus = r.path("paths.corpus", true);
  c.paths.triples = r.path("paths.triples", true);
  c.paths.templates = r.path("paths.templates", true);
  c.paths.eval = r.path("paths.eval", true);
  c.paths.inverse_texts = r.path("paths.inverse_texts", false);
  c.paths.routing_train = r.path("paths.routing_train", false);
  c.paths.routing_eval = r.path("paths.routing_eval", false);
  c.paths.workdir = r.path("paths.workdir", true);

  c.bm25.k1 = r.real("bm25.k1");
  if (!(c.bm25.k1 > 0.0)) throw ConfigError("bm25.k1", "must be > 0");
  c.bm25.b = r.real("bm25.b");
  if (c.bm25.b < 0.0 || c.bm25.b > 1.0) throw ConfigError("bm25.b", "must be in [0, 1]");

  c.encoder.d = static_cast<std::uint32_t>(r.integer("encoder.d", 2));
  c.encoder.space.dim = static_cast<std::uint32_t>(r.integer("encoder.features", 1));
  if (r.integer("encoder.features", 1) > (std::int64_t{1} << 26)) {
    throw ConfigError("encoder.features", "must be <= 67108864");
  }
  c.encoder.space.seed = static_cast<std::uint32_t>(r.integer("encoder.feature_seed", 0));
  c.encoder.shared = r.boolean("encoder.shared");

  c.inverse.epochs = static_cast<int>(r.integer("inverse.epochs", 0));
  c.inverse.learning_rate = r.real("inverse.learning_rate");
  if (!(c.inverse.learning_rate >= 0.0)) throw ConfigError("inverse.learning_rate", "must be >= 0");
  c.inverse.batch_size = r.count("inverse.batch_size");
  c.inverse.max_vocab = r.count("inverse.max_vocab");
  c.inverse.max_len = r.count("inverse.max_len");
  c.inverse.beam = r.count("inverse.beam");
  c.inverse_max_texts = r.count("inverse.max_texts");

  c.synth.max_popularity = r.integer("synth.max_popularity", 1);
  c.synth.depth = r.count("synth.depth");

  c.selection.threshold = r.real("selection.threshold");
  if (c.selection.threshold > 1.0) throw ConfigError("selection.threshold", "must be <= 1");
  if (const std::size_t cap = r.count("selection.cap", 0); cap > 0) c.selection.cap = cap;

  c.train.batch_size = r.count("train.batch_size");
  c.train.epochs = static_cast<int>(r.integer("train.epochs", 1));
  c.train.learning_rate = r.real("train.learning_rate");
  c.train.m = r.count("train.m");
  c.train.optimizer = optimizer_from_string(r.raw("train.optimizer"));
  c.train.beta1 = r.real("train.beta1");
  c.train.beta2 = r.real("train.beta2");
  c.train.epsilon = r.real("train.epsilon");
  c.train.weight_decay = r.real("train.weight_decay");
  c.train.in_batch = r.boolean("train.in_batch");
  c.mine_depth = r.count("train.mine_depth", 2);
  validate(c.train);

  c.router.epochs = static_cast<int>(r.integer("router.epochs", 1));
  c.router.learning_rate = r.real("router.learning_rate");
  if (!(c.router.learning_rate > 0.0)) throw ConfigError("router.learning_rate", "must be > 0");
  c.router.batch_size = r.count("router.batch_size");

  c.ks.clear();
  for (const auto& item : split_list(r.raw("eval.ks"))) {
    std::size_t used = 0;
    long long k = 0;
    try {
      k = std::stoll(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("eval.ks", "expected comma separated integers");
    }
    if (used != item.size() || k < 1) throw ConfigError("eval.ks", "expected comma separated integers >= 1");
    c.ks.push_back(static_cast<std::size_t>(k));
  }
  if (c.ks.empty()) throw ConfigError("eval.ks", "must list at least one k");
  for (std::size_t i = 1; i < c.ks.size(); ++i) {
    if (c.ks[i] <= c.ks[i - 1]) throw ConfigError("eval.ks", "must be strictly ascending");
  }
  c.buckets.low = r.integer("eval.low", 0);
  c.buckets.tail_max = r.integer("eval.tail_max", 1);
  c.buckets.frequent_min = r.integer("eval.frequent_min", 1);
  validate(c.buckets);
  c.systems = split_list(r.raw("eval.systems"));
  if (c.systems.empty()) throw ConfigError("eval.systems", "must list at least one system");
  for (const auto& s : c.systems) {
    if (std::find(known_systems().begin(), known_systems().end(), s) == known_systems().end()) {
      throw ConfigError("eval.systems", "unknown system '" + s + "'");
    }
  }
  c.values = std::move(values);
  return c;
}

std::string canonical_text(const PipelineConfig& config) {
  std::string out;
  for (const auto& [key, value] : config.values) out += key + "=" + value + "\n";
  return out;
}

std::uint64_t derived_seed(const PipelineConfig& config, SeedUse use) {
  // splitmix64 of (seed, use) so nearby seeds give unrelated streams.
  std::uint64_t z = config.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(use) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace tailret
