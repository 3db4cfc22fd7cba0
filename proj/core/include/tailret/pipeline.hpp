#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tailret/config.hpp"
#include "tailret/evalkit.hpp"

namespace tailret {

using LogFn = std::function<void(const std::string&)>;

struct PipelineOptions {
  bool force = false;
  LogFn log;
};

// Subcommands in execution order; "pipeline" runs all of them.
const std::vector<std::string>& pipeline_steps();

// Artifact file names inside the work directory.
namespace artifact {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kPassages = "passages.bin";
inline constexpr const char* kSparse = "sparse.bin";
inline constexpr const char* kEncoderUntrained = "encoder-untrained.bin";
inline constexpr const char* kPool = "pool.jsonl";
inline constexpr const char* kInverse = "inverse.bin";
inline constexpr const char* kReports = "reports.jsonl";
inline constexpr const char* kSelected = "selected.jsonl";
inline constexpr const char* kRouter = "router.bin";
inline constexpr const char* kReport = "eval-report.txt";
inline constexpr const char* kRecords = "eval-records.jsonl";
}  // namespace artifact

// Training variant behind a dense system ("dense-rpdr" -> "rpdr").
std::string variant_of(std::string_view system);
std::string encoder_file(std::string_view variant);
std::string dense_file(std::string_view variant);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, PipelineOptions options = {});
  ~Pipeline();

  // Runs one subcommand (or "pipeline"). Steps whose config slice, inputs and
  // outputs match the manifest are skipped unless options.force is set.
  // Throws MissingArtifactError when an upstream artifact is absent.
  void run(std::string_view subcommand);

  // Ad-hoc retrieval with any evaluated system.
  Ranking retrieve(std::string_view system, const std::string& query, std::size_t k);

  // Evaluation reports of the last eval step, one per system.
  const std::vector<EvalReport>& reports() const { return reports_; }
  // Reports on paths.routing_eval; empty when that split is not configured.
  const std::vector<EvalReport>& routing_reports() const { return routing_reports_; }

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path work_path(std::string_view name) const;

 private:
  struct Cache;

  void run_step(const std::string& step);
  void log(const std::string& message) const;

  PipelineConfig config_;
  PipelineOptions options_;
  std::unique_ptr<Cache> cache_;
  std::vector<EvalReport> reports_;
  std::vector<EvalReport> routing_reports_;
};

}  // namespace tailret
