#include "tailret/roundtrip.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/errors.hpp"

namespace tailret {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::kQcAc: return "QcAc";
    case Category::kQwAc: return "QwAc";
    case Category::kQwAw: return "QwAw";
    case Category::kQcAw: return "QcAw";
  }
  return "?";
}

Category category_from_string(std::string_view s) {
  if (s == "QcAc") return Category::kQcAc;
  if (s == "QwAc") return Category::kQwAc;
  if (s == "QwAw") return Category::kQwAw;
  if (s == "QcAw") return Category::kQcAw;
  throw FormatError("unknown category: " + std::string(s));
}

Category category_of(bool q_correct, bool a_correct) {
  if (q_correct) return a_correct ? Category::kQcAc : Category::kQcAw;
  return a_correct ? Category::kQwAc : Category::kQwAw;
}

double reconstruction_score(const Embedding& original, const Embedding& reconstructed) {
  if (original.dim() != reconstructed.dim()) throw DimensionError("embedding dimensions differ");
  double diff2 = 0.0;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < original.dim(); ++i) {
    const double delta = reconstructed.v[i] - original.v[i];
    diff2 += delta * delta;
    norm2 += original.v[i] * original.v[i];
  }
  if (norm2 == 0.0) throw DegenerateInputError("reconstruction score undefined for a zero embedding");
  return 1.0 - diff2 / norm2;
}

double reconstruction_score(const EncoderParams& encoder, std::string_view x, std::string_view x_hat) {
  return reconstruction_score(encode_text(encoder, x), encode_text(encoder, x_hat));
}

bool entity_recovered(std::string_view entity, std::string_view x_hat) {
  const TokenStream wanted = tokenize(entity);
  if (wanted.empty()) return false;
  const TokenStream got = tokenize(x_hat);
  const std::set<std::string> have(got.tokens.begin(), got.tokens.end());
  return std::all_of(wanted.tokens.begin(), wanted.tokens.end(),
                     [&](const std::string& t) { return have.count(t) > 0; });
}

std::string_view answer_text(const QASample& sample) {
  if (sample.answer_entity && !sample.answer_entity->empty()) return *sample.answer_entity;
  return sample.answers.empty() ? std::string_view{} : std::string_view(sample.answers.front());
}

Category categorize(const QASample& sample, std::string_view x_hat_q, std::string_view x_hat_a) {
  return category_of(entity_recovered(sample.subject_entity, x_hat_q),
                     entity_recovered(answer_text(sample), x_hat_a));
}

std::vector<QASample> apply_selection(std::span<const QASample> pool,
                                      std::span<const ReconstructionReport> reports,
                                      const SelectionConfig& config) {
  if (pool.size() != reports.size()) throw Error("selection: reports do not cover the pool");
  if (config.cap && *config.cap == 0) throw Error("selection cap must be >= 1");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& r = reports[i];
    if (!r.degenerate && r.category == Category::kQcAc && r.score >= config.threshold) keep.push_back(i);
  }
  if (config.cap && keep.size() > *config.cap) {
    std::stable_sort(keep.begin(), keep.end(),
                     [&](std::size_t a, std::size_t b) { return reports[a].score > reports[b].score; });
    keep.resize(*config.cap);
    std::sort(keep.begin(), keep.end());
  }
  std::vector<QASample> selected;
  selected.reserve(keep.size());
  for (std::size_t i : keep) selected.push_back(pool[i]);
  return selected;
}

SelectionResult select(std::span<const QASample> pool, const EncoderParams& encoder,
                       const InverseModel& inverse, const SelectionConfig& config) {
  const Inverter inverter(inverse, encoder);
  SelectionResult result;
  result.reports.reserve(pool.size());
  for (const QASample& sample : pool) {
    ReconstructionReport report;
    report.sample_id = sample.id;
    const Embedding q = encode_text(encoder, sample.question);
    const ReconstructionResult rq = inverter.invert(q);
    report.x_hat = rq.x_hat;
    const Embedding a = encode_text(encoder, answer_text(sample));
    report.x_hat_answer = inverter.invert(a).x_hat;
    if (q.is_zero()) {
      report.degenerate = true;
    } else {
      report.score = reconstruction_score(q, encode_text(encoder, report.x_hat));
    }
    report.q_correct = entity_recovered(sample.subject_entity, report.x_hat);
    report.a_correct = entity_recovered(answer_text(sample), report.x_hat_answer);
    report.category = category_of(report.q_correct, report.a_correct);
    result.reports.push_back(std::move(report));
  }
  result.selected = apply_selection(pool, result.reports, config);
  return result;
}

void save_reports(const std::filesystem::path& path, std::span<const ReconstructionReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::json j;
    j["sample_id"] = r.sample_id;
    j["S"] = r.score;
    j["category"] = to_string(r.category);
    j["x_hat_q"] = r.x_hat;
    j["x_hat_a"] = r.x_hat_answer;
    j["q_correct"] = r.q_correct;
    j["a_correct"] = r.a_correct;
    j["degenerate"] = r.degenerate;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<ReconstructionReport> load_reports(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("report file not found: " + path.string());
  std::vector<ReconstructionReport> reports;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ReconstructionReport r;
      r.sample_id = j.at("sample_id").get<std::int64_t>();
      r.score = j.at("S").get<double>();
      r.category = category_from_string(j.at("category").get<std::string>());
      r.x_hat = j.at("x_hat_q").get<std::string>();
      r.x_hat_answer = j.at("x_hat_a").get<std::string>();
      r.q_correct = j.at("q_correct").get<bool>();
      r.a_correct = j.at("a_correct").get<bool>();
      r.degenerate = j.value("degenerate", false);
      reports.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  return reports;
}

}  // namespace tailret
