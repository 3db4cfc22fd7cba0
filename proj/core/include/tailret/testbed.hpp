#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/router.hpp"
#include "tailret/synthgen.hpp"

namespace tailret {

// Knobs of the synthetic entity world used for the bundled experiment.
struct TestbedConfig {
  std::uint64_t seed = 2024;
  std::size_t passages = 2000;
  std::size_t simple_tail = 600;    // long-tail entities named from common parts
  std::size_t complex_tail = 200;   // long-tail entities with rare, accented names
  std::size_t infrequent = 200;
  std::size_t frequent = 60;
  std::size_t infrequent_passages = 2;
  std::size_t frequent_passages = 5;
  std::size_t phantoms = 1500;      // knowledge-base subjects absent from the corpus
  std::size_t relations_per_phantom = 5;
  double plant_probability = 0.8;
  std::size_t eval_tail = 250;
  std::size_t eval_infrequent = 150;
  std::size_t eval_frequent = 100;
  std::size_t routing_train = 300;
  std::size_t routing_eval = 300;
  std::size_t inverse_small = 200;
};

struct Testbed {
  std::vector<Passage> passages;
  std::vector<Triple> triples;
  TemplateSet templates;
  std::vector<QASample> eval;
  // Questions whose best retriever differs by construction: verbose ones
  // about accented names favour BM25, misspelt names favour the encoder.
  std::vector<QASample> routing_train;
  std::vector<QASample> routing_eval;
  // Small question corpus for exercising the inverse model on its own.
  std::vector<std::string> inverse_small;
  // Queries labelled by construction: accented or unseen names go to sparse.
  std::vector<std::pair<std::string, Route>> routing_labels;
};

Testbed generate_testbed(const TestbedConfig& config);

// Writes corpus.jsonl, triples.jsonl, templates.tsv, eval.jsonl,
// routing_train.jsonl, routing_eval.jsonl, inverse_200.txt and
// routing_labels.jsonl into dir.
void write_testbed(const std::filesystem::path& dir, const Testbed& testbed);

// One text per non-empty line.
std::vector<std::string> load_lines(const std::filesystem::path& path);

}  // namespace tailret
