#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailret/corpus.hpp"
#include "tailret/embed.hpp"
#include "tailret/invert.hpp"

namespace tailret {

enum class Category { kQcAc, kQwAc, kQwAw, kQcAw };

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);
Category category_of(bool q_correct, bool a_correct);

struct ReconstructionReport {
  std::int64_t sample_id = 0;
  std::string x_hat;
  std::string x_hat_answer;
  double score = 0.0;  // S(x); meaningless when degenerate
  bool q_correct = false;
  bool a_correct = false;
  Category category = Category::kQwAw;
  bool degenerate = false;  // φ(question) was zero
};

struct SelectionConfig {
  double threshold = 0.6;
  std::optional<std::size_t> cap;
};

// S = 1 - ‖φ(x̂) - φ(x)‖² / ‖φ(x)‖². Throws DegenerateInputError when φ(x) = 0.
double reconstruction_score(const Embedding& original, const Embedding& reconstructed);
double reconstruction_score(const EncoderParams& encoder, std::string_view x, std::string_view x_hat);

// An entity counts as recovered when every one of its tokens occurs among
// the tokens of the reconstruction (case folded). Entities without tokens
// are never recovered.
bool entity_recovered(std::string_view entity, std::string_view x_hat);

// Answer side uses answer_entity when present, otherwise the first answer.
std::string_view answer_text(const QASample& sample);

Category categorize(const QASample& sample, std::string_view x_hat_q, std::string_view x_hat_a);

struct SelectionResult {
  std::vector<QASample> selected;             // pool order
  std::vector<ReconstructionReport> reports;  // one per pool sample, pool order
};

// Round-trip every question and answer, score S on the question, and keep
// samples with S >= threshold and category QcAc. With a cap, only the cap
// highest-S survivors are kept (ties by pool order).
SelectionResult select(std::span<const QASample> pool, const EncoderParams& encoder,
                       const InverseModel& inverse, const SelectionConfig& config);

// Re-applies the selection rule to existing reports.
std::vector<QASample> apply_selection(std::span<const QASample> pool,
                                      std::span<const ReconstructionReport> reports,
                                      const SelectionConfig& config);

void save_reports(const std::filesystem::path& path, std::span<const ReconstructionReport> reports);
std::vector<ReconstructionReport> load_reports(const std::filesystem::path& path);

}  // namespace tailret
