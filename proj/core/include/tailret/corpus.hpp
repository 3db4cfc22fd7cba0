#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailret/text.hpp"

namespace tailret {

using PassageId = std::uint32_t;

struct Passage {
  PassageId id = 0;
  std::string title;
  std::string body;

  bool operator==(const Passage&) const = default;
};

struct QASample {
  std::int64_t id = 0;
  std::string question;
  std::vector<std::string> answers;
  std::string subject_entity;
  std::optional<std::string> answer_entity;
  std::string relation;
  std::int64_t frequency = 0;

  bool operator==(const QASample&) const = default;
};

// Immutable passage collection with ids 0..size()-1 in file order. Safe for
// concurrent reads.
class PassageStore {
 public:
  PassageStore() = default;
  // Throws FormatError unless ids are 0..n-1 in order and bodies non-empty.
  PassageStore(std::vector<Passage> passages, NormalizationOptions normalization);

  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }
  const Passage& at(PassageId id) const;
  std::span<const Passage> passages() const { return passages_; }
  const NormalizationOptions& normalization() const { return normalization_; }

  // Title and body joined by one space; the text every retriever indexes.
  const std::string& text(PassageId id) const;
  // case_fold(text(id)), used for answer-string containment.
  const std::string& folded(PassageId id) const;

  void save(const std::filesystem::path& path) const;
  static PassageStore load(const std::filesystem::path& path);

  bool operator==(const PassageStore& other) const {
    return passages_ == other.passages_ && normalization_ == other.normalization_;
  }

 private:
  std::vector<Passage> passages_;
  NormalizationOptions normalization_;
  std::vector<std::string> text_;
  std::vector<std::string> folded_;
};

// Reads a line-delimited corpus file ({"title": ..., "body": ...} per line).
// Blank lines are skipped; ids follow file order.
PassageStore ingest_passages(const std::filesystem::path& path,
                             const NormalizationOptions& normalization = {});

// Reads a line-delimited QA sample file. Answers are deduplicated keeping the
// first occurrence. A record may carry an explicit "id"; otherwise the
// zero-based record index is used.
std::vector<QASample> load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, std::span<const QASample> samples);

// True if any answer string occurs, case folded, in passage id.
bool passage_contains_answer(const PassageStore& store, PassageId id,
                             std::span<const std::string> folded_answers);
std::vector<std::string> fold_all(std::span<const std::string> texts);

}  // namespace tailret
