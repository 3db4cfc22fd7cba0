#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tailret/evalkit.hpp"
#include "tailret/invert.hpp"
#include "tailret/lexical.hpp"
#include "tailret/roundtrip.hpp"
#include "tailret/router.hpp"
#include "tailret/train.hpp"

namespace tailret {

struct PathsConfig {
  std::filesystem::path corpus;
  std::filesystem::path triples;
  std::filesystem::path templates;
  std::filesystem::path eval;
  // Texts for the inverse model; empty means the pool questions plus the
  // first sentence of every passage.
  std::filesystem::path inverse_texts;
  std::filesystem::path routing_train;  // optional router questions; replaces the pool
  std::filesystem::path routing_eval;   // optional second evaluation split
  std::filesystem::path workdir;
};

struct EncoderConfig {
  std::uint32_t d = 64;
  FeatureSpace space;
  bool shared = true;
};

struct SynthConfig {
  std::int64_t max_popularity = 100;
  std::size_t depth = 50;
};

struct PipelineConfig {
  std::uint64_t seed = 13;
  PathsConfig paths;
  Bm25Params bm25;
  EncoderConfig encoder;
  InverseConfig inverse;
  std::size_t inverse_max_texts = 1500;
  SynthConfig synth;
  SelectionConfig selection;
  TrainConfig train;
  std::size_t mine_depth = 50;
  RouterConfig router;
  std::vector<std::size_t> ks = {10, 20};
  BucketSpec buckets;
  std::vector<std::string> systems;

  // Effective key/value pairs after defaults, file and overrides.
  std::map<std::string, std::string> values;
};

// Every recognised dotted key with its default value.
const std::map<std::string, std::string>& config_defaults();

// Systems the pipeline knows how to evaluate.
const std::vector<std::string>& known_systems();

// Reads an INI file (sections become key prefixes), applies overrides on
// top and validates. Relative paths resolve against the file's directory.
// Throws ConfigError naming the offending key.
PipelineConfig load_config(const std::filesystem::path& path,
                           const std::map<std::string, std::string>& overrides = {});
PipelineConfig make_config(std::map<std::string, std::string> values, const std::filesystem::path& base_dir);

// "key=value" lines in key order; hashed into the manifest.
std::string canonical_text(const PipelineConfig& config);

// Module seeds derived from the global seed.
enum class SeedUse : std::uint64_t { kEncoderInit = 0, kInverse = 1, kTrain = 2, kRandomSelection = 3, kRouter = 4, kInverseSample = 5 };
std::uint64_t derived_seed(const PipelineConfig& config, SeedUse use);

}  // namespace tailret
