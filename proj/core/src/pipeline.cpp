#include "tailret/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"
#include "tailret/binio.hpp"
#include "tailret/corpus.hpp"
#include "tailret/embed.hpp"
#include "tailret/errors.hpp"
#include "tailret/invert.hpp"
#include "tailret/lexical.hpp"
#include "tailret/roundtrip.hpp"
#include "tailret/router.hpp"
#include "tailret/synthgen.hpp"
#include "tailret/testbed.hpp"
#include "tailret/train.hpp"

namespace tailret {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Input {
  fs::path path;
  std::string producer;  // empty for files outside the work directory
};

struct StepPlan {
  std::vector<std::string> config_prefixes;
  std::vector<Input> inputs;
  std::vector<std::string> outputs;
  std::function<void()> action;
};

bool has_prefix(const std::string& key, const std::string& prefix) {
  return key == prefix || key.rfind(prefix + ".", 0) == 0;
}

// Seeded subset of size n, kept in input order.
template <typename T>
std::vector<T> sample_in_order(std::span<const T> items, std::size_t n, std::uint64_t seed) {
  if (n >= items.size()) return {items.begin(), items.end()};
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

std::vector<std::string> trained_variants(const PipelineConfig& config) {
  std::vector<std::string> out;
  auto add = [&](const std::string& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  for (const auto& s : config.systems) {
    if (s == "routed") add("rpdr");
    if (s.rfind("dense-", 0) == 0 && s != "dense-untrained") add(variant_of(s));
  }
  return out;
}

bool wants_router(const PipelineConfig& config) {
  return std::find(config.systems.begin(), config.systems.end(), "routed") != config.systems.end();
}

std::string json_line(const json& j) { return j.dump() + "\n"; }

std::string first_sentence(const std::string& body) {
  const auto end = body.find_first_of(".?!");
  return end == std::string::npos ? body : body.substr(0, end + 1);
}

}  // namespace

const std::vector<std::string>& pipeline_steps() {
  static const std::vector<std::string> steps = {"ingest", "index-sparse",    "index-dense",  "synth",
                                                 "train-inverse", "select", "train-retriever", "train-router",
                                                 "eval"};
  return steps;
}

std::string variant_of(std::string_view system) {
  if (system.rfind("dense-", 0) != 0) throw Error("not a dense system: " + std::string(system));
  return std::string(system.substr(6));
}

std::string encoder_file(std::string_view variant) { return "encoder-" + std::string(variant) + ".bin"; }
std::string dense_file(std::string_view variant) { return "dense-" + std::string(variant) + ".bin"; }

struct Pipeline::Cache {
  std::unique_ptr<PassageStore> store;
  std::unique_ptr<SparseIndex> sparse;
  std::map<std::string, EncoderParams> encoders;
  std::map<std::string, DenseIndex> dense;
  std::unique_ptr<RouterModel> router;
};

Pipeline::Pipeline(PipelineConfig config, PipelineOptions options)
    : config_(std::move(config)), options_(std::move(options)), cache_(std::make_unique<Cache>()) {}

Pipeline::~Pipeline() = default;

fs::path Pipeline::work_path(std::string_view name) const { return config_.paths.workdir / std::string(name); }

void Pipeline::log(const std::string& message) const {
  if (options_.log) options_.log(message);
}

void Pipeline::run(std::string_view subcommand) {
  const auto& steps = pipeline_steps();
  *cache_ = Cache{};
  fs::create_directories(config_.paths.workdir);
  write_file(work_path("config.effective"), canonical_text(config_));
  if (subcommand == "pipeline") {
    for (const auto& s : steps) run_step(s);
    return;
  }
  if (std::find(steps.begin(), steps.end(), subcommand) == steps.end()) {
    throw Error("unknown subcommand: " + std::string(subcommand));
  }
  run_step(std::string(subcommand));
}

void Pipeline::run_step(const std::string& step) {
  const PipelineConfig& c = config_;
  auto wp = [&](const std::string& name) { return work_path(name); };
  auto need = [&](const std::string& name, const std::string& producer) { return Input{wp(name), producer}; };
  auto load_store = [&] { return PassageStore::load(wp(artifact::kPassages)); };

  StepPlan plan;
  if (step == "ingest") {
    plan.config_prefixes = {"paths.corpus"};
    plan.inputs = {{c.paths.corpus, ""}};
    plan.outputs = {artifact::kPassages};
    plan.action = [&] {
      const PassageStore store = ingest_passages(c.paths.corpus);
      store.save(wp(artifact::kPassages));
      log("ingest: " + std::to_string(store.size()) + " passages");
    };
  } else if (step == "index-sparse") {
    plan.config_prefixes = {"bm25"};
    plan.inputs = {need(artifact::kPassages, "ingest")};
    plan.outputs = {artifact::kSparse};
    plan.action = [&] {
      const SparseIndex index = build_sparse_index(load_store(), c.bm25);
      index.save(wp(artifact::kSparse));
      log("index-sparse: " + std::to_string(index.term_count()) + " terms");
    };
  } else if (step == "index-dense") {
    plan.config_prefixes = {"encoder", "seed"};
    plan.inputs = {need(artifact::kPassages, "ingest")};
    plan.outputs = {artifact::kEncoderUntrained, dense_file("untrained")};
    plan.action = [&] {
      const EncoderParams enc = EncoderParams::random(c.encoder.d, c.encoder.space, c.encoder.shared,
                                                      derived_seed(c, SeedUse::kEncoderInit));
      enc.save(wp(artifact::kEncoderUntrained));
      build_dense_index(enc, load_store()).save(wp(dense_file("untrained")));
      log("index-dense: d=" + std::to_string(c.encoder.d) + " features=" + std::to_string(c.encoder.space.dim));
    };
  } else if (step == "synth") {
    plan.config_prefixes = {"synth", "paths.triples", "paths.templates", "paths.eval", "paths.routing_train",
                            "paths.routing_eval"};
    plan.inputs = {need(artifact::kPassages, "ingest"), need(artifact::kSparse, "index-sparse"),
                   {c.paths.triples, ""}, {c.paths.templates, ""}, {c.paths.eval, ""}};
    for (const auto& path : {c.paths.routing_train, c.paths.routing_eval}) {
      if (!path.empty()) plan.inputs.push_back({path, ""});
    }
    plan.outputs = {artifact::kPool};
    plan.action = [&] {
      const PassageStore store = load_store();
      const SparseIndex sparse = SparseIndex::load(wp(artifact::kSparse));
      const auto triples = load_triples(c.paths.triples);
      const auto candidates = generate_candidates(triples, load_templates(c.paths.templates));
      const auto tail = filter_popularity(candidates, c.synth.max_popularity);
      const auto present = filter_answer_presence(tail, sparse, store, c.synth.depth);
      // Held-out questions of every split are kept out of the pool.
      std::vector<QASample> held_out = load_samples(c.paths.eval);
      for (const auto& path : {c.paths.routing_train, c.paths.routing_eval}) {
        if (path.empty()) continue;
        const auto more = load_samples(path);
        held_out.insert(held_out.end(), more.begin(), more.end());
      }
      auto pool = dedupe_against(present, held_out);
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i].id = static_cast<std::int64_t>(i);
      save_samples(wp(artifact::kPool), pool);
      log("synth: " + std::to_string(candidates.size()) + " candidates, " + std::to_string(tail.size()) +
          " long-tail, " + std::to_string(present.size()) + " answer-present, " + std::to_string(pool.size()) +
          " after dedupe");
    };
  } else if (step == "train-inverse") {
    plan.config_prefixes = {"inverse", "paths.inverse_texts", "seed"};
    plan.inputs = {need(artifact::kEncoderUntrained, "index-dense"), need(artifact::kPassages, "ingest")};
    if (c.paths.inverse_texts.empty()) {
      plan.inputs.push_back(need(artifact::kPool, "synth"));
    } else {
      plan.inputs.push_back({c.paths.inverse_texts, ""});
    }
    plan.outputs = {artifact::kInverse, "inverse-log.jsonl"};
    plan.action = [&] {
      std::vector<std::string> texts;
      if (c.paths.inverse_texts.empty()) {
        for (const QASample& s : load_samples(wp(artifact::kPool))) texts.push_back(s.question);
        const PassageStore store = load_store();
        for (const Passage& p : store.passages()) texts.push_back(first_sentence(p.body));
      } else {
        texts = load_lines(c.paths.inverse_texts);
      }
      texts = sample_in_order<std::string>(texts, c.inverse_max_texts, derived_seed(c, SeedUse::kInverseSample));
      InverseConfig cfg = c.inverse;
      cfg.seed = derived_seed(c, SeedUse::kInverse);
      const EncoderParams enc = EncoderParams::load(wp(artifact::kEncoderUntrained));
      const InverseTrainingResult result = train_inverse(enc, texts, cfg);
      result.model.save(wp(artifact::kInverse));
      std::string log_text;
      for (std::size_t e = 0; e < result.log_likelihood.size(); ++e) {
        log_text += json_line({{"epoch", e}, {"log_likelihood", result.log_likelihood[e]}});
      }
      write_file(wp("inverse-log.jsonl"), log_text);
      log("train-inverse: " + std::to_string(texts.size()) + " texts, vocab " +
          std::to_string(result.model.vocab().size()) + ", log-likelihood " +
          std::to_string(result.log_likelihood.front()) + " -> " + std::to_string(result.log_likelihood.back()));
    };
  } else if (step == "select") {
    plan.config_prefixes = {"selection"};
    plan.inputs = {need(artifact::kPool, "synth"), need(artifact::kEncoderUntrained, "index-dense"),
                   need(artifact::kInverse, "train-inverse")};
    plan.outputs = {artifact::kReports, artifact::kSelected};
    plan.action = [&] {
      const auto pool = load_samples(wp(artifact::kPool));
      const EncoderParams enc = EncoderParams::load(wp(artifact::kEncoderUntrained));
      const InverseModel inverse = InverseModel::load(wp(artifact::kInverse));
      const SelectionResult result = select(pool, enc, inverse, c.selection);
      save_reports(wp(artifact::kReports), result.reports);
      save_samples(wp(artifact::kSelected), result.selected);
      std::map<std::string, std::size_t> counts;
      for (const auto& r : result.reports) ++counts[std::string(to_string(r.category))];
      std::string summary;
      for (const auto& [cat, n] : counts) summary += " " + cat + "=" + std::to_string(n);
      log("select: " + std::to_string(result.selected.size()) + " of " + std::to_string(pool.size()) +
          " selected;" + summary);
    };
  } else if (step == "train-retriever") {
    plan.config_prefixes = {"train", "seed", "selection"};
    plan.inputs = {need(artifact::kPassages, "ingest"), need(artifact::kSparse, "index-sparse"),
                   need(artifact::kEncoderUntrained, "index-dense"), need(artifact::kPool, "synth"),
                   need(artifact::kReports, "select"), need(artifact::kSelected, "select")};
    for (const auto& v : trained_variants(c)) {
      plan.outputs.push_back(encoder_file(v));
      plan.outputs.push_back(dense_file(v));
      plan.outputs.push_back("examples-" + v + ".jsonl");
      plan.outputs.push_back("train-log-" + v + ".jsonl");
    }
    plan.action = [&] {
      const PassageStore store = load_store();
      const SparseIndex sparse = SparseIndex::load(wp(artifact::kSparse));
      const EncoderParams init = EncoderParams::load(wp(artifact::kEncoderUntrained));
      const auto pool = load_samples(wp(artifact::kPool));
      const auto selected = load_samples(wp(artifact::kSelected));
      const auto reports = load_reports(wp(artifact::kReports));
      if (reports.size() != pool.size()) throw Error("reports do not match the pool; rerun 'select'");
      TrainConfig cfg = c.train;
      cfg.seed = derived_seed(c, SeedUse::kTrain);
      for (const auto& v : trained_variants(c)) {
        std::vector<QASample> data;
        if (v == "rpdr") {
          data = selected;
        } else if (v == "random") {
          data = sample_in_order<QASample>(pool, selected.size(), derived_seed(c, SeedUse::kRandomSelection));
        } else if (v == "full") {
          data = pool;
        } else if (v == "qwaw") {
          std::vector<QASample> qwaw;
          for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!reports[i].degenerate && reports[i].category == Category::kQwAw) qwaw.push_back(pool[i]);
          }
          data = sample_in_order<QASample>(qwaw, selected.size(), derived_seed(c, SeedUse::kRandomSelection));
        } else {
          throw Error("unknown training variant: " + v);
        }
        const MiningResult mined = mine_examples(data, sparse, store, cfg.m, c.mine_depth);
        if (mined.examples.empty()) throw Error("variant '" + v + "' has no trainable examples");
        save_examples(wp("examples-" + v + ".jsonl"), mined.examples);
        std::string train_log;
        const TrainResult result = train_retriever(init, mined.examples, store, cfg, [&](const EpochRecord& r) {
          train_log += json_line({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"seconds", r.seconds}});
        });
        write_file(wp("train-log-" + v + ".jsonl"), train_log);
        result.params.save(wp(encoder_file(v)));
        build_dense_index(result.params, store).save(wp(dense_file(v)));
        log("train-retriever[" + v + "]: " + std::to_string(data.size()) + " samples, " +
            std::to_string(mined.examples.size()) + " examples (" + std::to_string(mined.dropped) +
            " dropped), loss " + std::to_string(result.log.front().mean_loss) + " -> " +
            std::to_string(result.log.back().mean_loss));
      }
    };
  } else if (step == "train-router") {
    plan.config_prefixes = {"router", "seed", "eval.ks", "eval.systems", "paths.routing_train"};
    if (wants_router(c)) {
      plan.inputs = {need(artifact::kPassages, "ingest"), need(artifact::kSparse, "index-sparse"),
                     need(encoder_file("rpdr"), "train-retriever"), need(dense_file("rpdr"), "train-retriever")};
      plan.inputs.push_back(c.paths.routing_train.empty() ? need(artifact::kPool, "synth")
                                                          : Input{c.paths.routing_train, ""});
      plan.outputs = {artifact::kRouter, "router-labels.jsonl"};
    }
    plan.action = [&] {
      if (!wants_router(c)) {
        log("train-router: 'routed' not among eval.systems, nothing to do");
        return;
      }
      const PassageStore store = load_store();
      const SparseIndex sparse = SparseIndex::load(wp(artifact::kSparse));
      const EncoderParams enc = EncoderParams::load(wp(encoder_file("rpdr")));
      const DenseIndex dense = DenseIndex::load(wp(dense_file("rpdr")));
      // A dedicated routing question set replaces the pool when configured.
      const auto queries_from = c.paths.routing_train.empty() ? load_samples(wp(artifact::kPool))
                                                              : load_samples(c.paths.routing_train);
      const std::size_t k = c.ks.front();
      std::vector<std::string> queries;
      std::vector<bool> sparse_hit;
      std::vector<bool> dense_hit;
      auto ids = [](const Ranking& r) {
        std::vector<PassageId> out;
        for (const auto& s : r) out.push_back(s.id);
        return out;
      };
      for (const QASample& s : queries_from) {
        queries.push_back(s.question);
        sparse_hit.push_back(hit_at_k(ids(sparse_top_k(sparse, tokenize(s.question), k)), store, s.answers, k));
        dense_hit.push_back(hit_at_k(ids(dense_top_k(dense, encode_text(enc, s.question), k)), store, s.answers, k));
      }
      const auto labeled = make_router_labels(queries, sparse_hit, dense_hit, sparse, derived_seed(c, SeedUse::kRouter));
      save_labeled(wp("router-labels.jsonl"), labeled);
      RouterConfig cfg = c.router;
      cfg.seed = derived_seed(c, SeedUse::kRouter);
      const RouterModel model = train_router(labeled, cfg);
      model.save(wp(artifact::kRouter));
      log("train-router: " + std::to_string(labeled.size()) + " labeled queries");
    };
  } else if (step == "eval") {
    plan.config_prefixes = {"eval", "paths.eval", "paths.routing_eval"};
    plan.inputs = {need(artifact::kPassages, "ingest"), need(artifact::kSparse, "index-sparse"), {c.paths.eval, ""}};
    if (!c.paths.routing_eval.empty()) plan.inputs.push_back({c.paths.routing_eval, ""});
    std::set<std::string> added;
    for (const auto& s : c.systems) {
      if (s == "routed") {
        for (const auto& name : {encoder_file("rpdr"), dense_file("rpdr")}) {
          if (added.insert(name).second) plan.inputs.push_back(need(name, "train-retriever"));
        }
        plan.inputs.push_back(need(artifact::kRouter, "train-router"));
      } else if (s == "dense-untrained") {
        for (const auto& name : {std::string(artifact::kEncoderUntrained), dense_file("untrained")}) {
          if (added.insert(name).second) plan.inputs.push_back(need(name, "index-dense"));
        }
      } else if (s != "bm25") {
        const std::string v = variant_of(s);
        for (const auto& name : {encoder_file(v), dense_file(v)}) {
          if (added.insert(name).second) plan.inputs.push_back(need(name, "train-retriever"));
        }
      }
    }
    plan.outputs = {artifact::kReport, artifact::kRecords};
    plan.action = [&] {
      retrieve("bm25", "", 1);  // loads the shared store and sparse index
      auto run_split = [&](const fs::path& path) {
        const auto samples = load_samples(path);
        std::vector<EvalReport> out;
        for (const auto& system : c.systems) {
          RetrievalFn fn = [&](const QASample& s, std::size_t k) {
            std::vector<PassageId> ids;
            for (const auto& r : retrieve(system, s.question, k)) ids.push_back(r.id);
            return ids;
          };
          out.push_back(evaluate(system, fn, samples, *cache_->store, c.ks, c.buckets));
        }
        return out;
      };
      reports_ = run_split(c.paths.eval);
      routing_reports_.clear();
      std::string table = format_table(reports_);
      std::string records = format_records(reports_, "eval");
      if (!c.paths.routing_eval.empty()) {
        routing_reports_ = run_split(c.paths.routing_eval);
        table += "\nrouting split\n" + format_table(routing_reports_);
        records += format_records(routing_reports_, "routing");
      }
      write_file(wp(artifact::kReport), table);
      write_file(wp(artifact::kRecords), records);
      log("eval:\n" + table);
    };
  } else {
    throw Error("unknown step: " + step);
  }

  // Missing upstream artifacts are reported before anything else.
  for (const Input& in : plan.inputs) {
    if (fs::exists(in.path)) continue;
    if (in.producer.empty()) throw Error("input file not found: " + in.path.string());
    throw MissingArtifactError(in.path.filename().string(), in.producer);
  }

  std::string slice;
  for (const auto& [key, value] : c.values) {
    for (const auto& prefix : plan.config_prefixes) {
      if (has_prefix(key, prefix)) {
        slice += key + "=" + value + "\n";
        break;
      }
    }
  }
  const std::string config_hash = sha256_hex(slice);
  json inputs = json::object();
  for (const Input& in : plan.inputs) inputs[in.path.string()] = sha256_file(in.path);

  json manifest = json::object();
  const fs::path manifest_path = wp(artifact::kManifest);
  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  if (!options_.force && manifest.contains("steps") && manifest["steps"].contains(step)) {
    const json& prev = manifest["steps"][step];
    bool fresh = prev.value("config_sha256", "") == config_hash && prev.value("inputs", json::object()) == inputs;
    const json outputs = prev.value("outputs", json::object());
    for (const auto& name : plan.outputs) {
      const fs::path p = wp(name);
      fresh = fresh && fs::exists(p) && outputs.contains(name) && outputs[name] == sha256_file(p);
    }
    if (fresh) {
      log(step + ": up to date");
      return;
    }
  }

  const auto start = std::chrono::steady_clock::now();
  plan.action();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json entry;
  entry["config_sha256"] = config_hash;
  entry["inputs"] = inputs;
  json outputs = json::object();
  for (const auto& name : plan.outputs) outputs[name] = sha256_file(wp(name));
  entry["outputs"] = outputs;
  manifest["config_sha256"] = sha256_hex(canonical_text(c));
  manifest["steps"][step] = entry;
  write_file(manifest_path, manifest.dump(2) + "\n");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", seconds);
  log(step + ": done in " + buf + " s");
}

Ranking Pipeline::retrieve(std::string_view system, const std::string& query, std::size_t k) {
  Cache& cache = *cache_;
  auto require = [&](const std::string& name, const std::string& producer) {
    const fs::path p = work_path(name);
    if (!fs::exists(p)) throw MissingArtifactError(name, producer);
    return p;
  };
  if (!cache.store) cache.store = std::make_unique<PassageStore>(PassageStore::load(require(artifact::kPassages, "ingest")));
  if (!cache.sparse) {
    cache.sparse = std::make_unique<SparseIndex>(SparseIndex::load(require(artifact::kSparse, "index-sparse")));
  }
  auto dense_for = [&](const std::string& variant) -> Ranking {
    const std::string producer = variant == "untrained" ? "index-dense" : "train-retriever";
    if (!cache.encoders.count(variant)) {
      cache.encoders.emplace(variant, EncoderParams::load(require(encoder_file(variant), producer)));
      cache.dense.emplace(variant, DenseIndex::load(require(dense_file(variant), producer)));
    }
    return dense_top_k(cache.dense.at(variant), encode_text(cache.encoders.at(variant), query), k);
  };
  if (system == "bm25") return sparse_top_k(*cache.sparse, tokenize(query), k);
  if (system == "routed") {
    if (!cache.router) {
      cache.router = std::make_unique<RouterModel>(RouterModel::load(require(artifact::kRouter, "train-router")));
    }
    if (route(*cache.router, query, *cache.sparse) == Route::kSparse) {
      return sparse_top_k(*cache.sparse, tokenize(query), k);
    }
    return dense_for("rpdr");
  }
  if (std::find(known_systems().begin(), known_systems().end(), system) == known_systems().end()) {
    throw Error("unknown system: " + std::string(system));
  }
  return dense_for(variant_of(system));
}

}  // namespace tailret
