#include "tailret/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {
namespace {

constexpr std::uint32_t kStoreVersion = 1;

using json = nlohmann::json;

std::string required_string(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) throw FormatError(std::string("missing field '") + field + "'", line);
  if (!it->is_string()) throw FormatError(std::string("field '") + field + "' is not a string", line);
  return it->get<std::string>();
}

json parse_line(const std::string& line, std::size_t line_no) {
  if (!is_valid_utf8(line)) throw FormatError("invalid UTF-8", line_no);
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed record: ") + e.what(), line_no);
  }
  if (!record.is_object()) throw FormatError("record is not an object", line_no);
  return record;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

PassageStore::PassageStore(std::vector<Passage> passages, NormalizationOptions normalization)
    : passages_(std::move(passages)), normalization_(normalization) {
  text_.reserve(passages_.size());
  folded_.reserve(passages_.size());
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const Passage& p = passages_[i];
    if (p.id != i) throw FormatError("passage ids must be contiguous from 0; found " + std::to_string(p.id) + " at " + std::to_string(i));
    if (p.body.empty()) throw FormatError("passage " + std::to_string(i) + " has an empty body");
    text_.push_back(p.title.empty() ? p.body : p.title + " " + p.body);
    folded_.push_back(case_fold(text_.back()));
  }
}

const Passage& PassageStore::at(PassageId id) const {
  if (id >= passages_.size()) throw std::out_of_range("passage id " + std::to_string(id) + " out of range");
  return passages_[id];
}

const std::string& PassageStore::text(PassageId id) const {
  at(id);
  return text_[id];
}

const std::string& PassageStore::folded(PassageId id) const {
  at(id);
  return folded_[id];
}

void PassageStore::save(const std::filesystem::path& path) const {
  BinaryWriter w(path, "PSTO", kStoreVersion);
  w.write<std::uint8_t>(normalization_.case_fold);
  w.write<std::uint8_t>(normalization_.collapse_whitespace);
  w.write<std::uint64_t>(passages_.size());
  for (const Passage& p : passages_) {
    w.write_string(p.title);
    w.write_string(p.body);
  }
  w.close();
}

PassageStore PassageStore::load(const std::filesystem::path& path) {
  BinaryReader r(path, "PSTO", kStoreVersion);
  NormalizationOptions norm;
  norm.case_fold = r.read<std::uint8_t>() != 0;
  norm.collapse_whitespace = r.read<std::uint8_t>() != 0;
  const auto n = r.read<std::uint64_t>();
  std::vector<Passage> passages;
  passages.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Passage p;
    p.id = static_cast<PassageId>(i);
    p.title = r.read_string();
    p.body = r.read_string();
    passages.push_back(std::move(p));
  }
  r.expect_end();
  return PassageStore(std::move(passages), norm);
}

PassageStore ingest_passages(const std::filesystem::path& path,
                             const NormalizationOptions& normalization) {
  std::ifstream in(path);
  if (!in) throw Error("corpus file not found: " + path.string());
  std::vector<Passage> passages;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const json record = parse_line(line, line_no);
    Passage p;
    p.id = static_cast<PassageId>(passages.size());
    p.title = normalize_text(required_string(record, "title", line_no), normalization);
    p.body = normalize_text(required_string(record, "body", line_no), normalization);
    if (p.body.empty()) throw FormatError("empty body after normalization", line_no);
    passages.push_back(std::move(p));
  }
  if (passages.empty()) throw FormatError("empty corpus: " + path.string());
  return PassageStore(std::move(passages), normalization);
}

std::vector<QASample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("sample file not found: " + path.string());
  std::vector<QASample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const json record = parse_line(line, line_no);
    QASample s;
    s.id = static_cast<std::int64_t>(samples.size());
    if (auto it = record.find("id"); it != record.end()) {
      if (!it->is_number_integer()) throw FormatError("field 'id' is not an integer", line_no);
      s.id = it->get<std::int64_t>();
    }
    s.question = normalize_text(required_string(record, "question", line_no));
    if (s.question.empty()) throw FormatError("empty question", line_no);

    auto answers = record.find("answers");
    if (answers == record.end()) throw FormatError("missing field 'answers'", line_no);
    if (!answers->is_array()) throw FormatError("field 'answers' is not an array", line_no);
    for (const json& a : *answers) {
      if (!a.is_string()) throw FormatError("answer is not a string", line_no);
      std::string norm = normalize_text(a.get<std::string>());
      if (norm.empty()) continue;
      if (std::find(s.answers.begin(), s.answers.end(), norm) == s.answers.end()) {
        s.answers.push_back(std::move(norm));
      }
    }
    if (s.answers.empty()) throw FormatError("'answers' is empty", line_no);

    s.subject_entity = normalize_text(required_string(record, "subject_entity", line_no));
    auto ae = record.find("answer_entity");
    if (ae == record.end()) throw FormatError("missing field 'answer_entity'", line_no);
    if (ae->is_string()) {
      s.answer_entity = normalize_text(ae->get<std::string>());
    } else if (!ae->is_null()) {
      throw FormatError("field 'answer_entity' must be a string or null", line_no);
    }
    s.relation = required_string(record, "relation", line_no);

    auto freq = record.find("frequency");
    if (freq == record.end()) throw FormatError("missing field 'frequency'", line_no);
    if (!freq->is_number_integer()) throw FormatError("field 'frequency' is not an integer", line_no);
    s.frequency = freq->get<std::int64_t>();
    if (s.frequency < 0) throw FormatError("negative frequency", line_no);
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_samples(const std::filesystem::path& path, std::span<const QASample> samples) {
  std::string out;
  for (const QASample& s : samples) {
    json record;
    record["id"] = s.id;
    record["question"] = s.question;
    record["answers"] = s.answers;
    record["subject_entity"] = s.subject_entity;
    record["answer_entity"] = s.answer_entity ? json(*s.answer_entity) : json(nullptr);
    record["relation"] = s.relation;
    record["frequency"] = s.frequency;
    out += record.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<std::string> fold_all(std::span<const std::string> texts) {
  std::vector<std::string> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(case_fold(t));
  return out;
}

bool passage_contains_answer(const PassageStore& store, PassageId id,
                             std::span<const std::string> folded_answers) {
  const std::string& hay = store.folded(id);
  return std::any_of(folded_answers.begin(), folded_answers.end(),
                     [&](const std::string& a) { return contains_folded(hay, a); });
}

}  // namespace tailret
