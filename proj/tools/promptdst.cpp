// promptdst command-line front end. Talks to the library only through the
// C interface in promptdst/promptdst.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "promptdst/promptdst.h"

#ifndef PROMPTDST_DATA_DIR
#define PROMPTDST_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kBackend = 3, kData = 4 };

struct Failure : std::runtime_error {
  Exit code;
  Failure(Exit c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

Exit exit_for(pdst_status s) {
  switch (s) {
    case PDST_OK: return kOk;
    case PDST_E_CONFIG: return kConfig;
    case PDST_E_BACKEND: return kBackend;
    default: return kData;
  }
}

void check(pdst_status s, const std::string& what) {
  if (s != PDST_OK)
    throw Failure(exit_for(s), what + ": " + pdst_last_error() + " [" + pdst_status_name(s) + "]");
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pdst_string_free(s);
  return out;
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Ontology = std::unique_ptr<pdst_ontology, Deleter<pdst_ontology, pdst_ontology_free>>;
using Examples = std::unique_ptr<pdst_examples, Deleter<pdst_examples, pdst_examples_free>>;
using Prompts = std::unique_ptr<pdst_prompts, Deleter<pdst_prompts, pdst_prompts_free>>;
using Keywords = std::unique_ptr<pdst_keywords, Deleter<pdst_keywords, pdst_keywords_free>>;
using Backend = std::unique_ptr<pdst_backend, Deleter<pdst_backend, pdst_backend_free>>;
using Pipeline = std::unique_ptr<pdst_pipeline, Deleter<pdst_pipeline, pdst_pipeline_free>>;
using Report = std::unique_ptr<pdst_report, Deleter<pdst_report, pdst_report_free>>;

const std::vector<std::string> kMetrics = {"full_accuracy",          "partial_accuracy",
                                           "strict_slot_accuracy",   "flexible_slot_accuracy",
                                           "joint_accuracy",         "slot_accuracy"};

// ---------------------------------------------------------------- config

const std::set<std::string> kKnownKeys = {
    "ontology", "prompts", "keywords", "corpus.train", "corpus.test", "seed",
    "grid.distributions", "grid.sizes", "grid.per_slot",
    "train.objective", "loss.kind", "loss.ul_weight",
    "finetune.lr", "finetune.epochs", "finetune.batch",
    "slot_finetune.preset", "slot_finetune.lr", "slot_finetune.epochs", "slot_finetune.batch",
    "ga.population", "ga.generations", "ga.mutation_rate", "ga.mutation_sigma",
    "ga.crossover_rate", "ga.elitism", "ga.tournament",
    "pipeline.strategy", "pipeline.slot_mode", "pipeline.all_slots", "pipeline.weights",
    "generation.beam_size", "generation.max_new_tokens", "generation.suppress_eos_until",
    "keywords.prefix_stems", "history.style", "history.include_system_turns",
    "history.max_turns", "predict.slot_per_slot", "evaluate.partial_mode"};

const char* kBackendFields[] = {"kind", "table", "url", "model", "max_retries", "timeout_ms",
                                "poll_interval_ms", "max_polls"};

struct Cell {
  std::string name;  // "P<i>_n<size>"
  std::array<double, 4> dist;
  std::size_t size;
};

class Config {
 public:
  Config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw Failure(kConfig, "cannot read config " + path.string());
    try {
      raw_ = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Failure(kConfig, path.string() + ": " + e.what());
    }
    if (!raw_.is_object()) throw Failure(kConfig, path.string() + ": expected a JSON object");
    base_ = path.parent_path();
    for (const auto& [key, value] : raw_.items()) {
      if (value.is_object()) throw Failure(kConfig, "key '" + key + "': nested objects not allowed");
      if (kKnownKeys.count(key)) continue;
      bool backend_key = false;
      for (const char* role : {"backend.domain.", "backend.slot."})
        for (const char* f : kBackendFields)
          backend_key = backend_key || key == std::string(role) + f;
      if (!backend_key) throw Failure(kConfig, "unknown config key '" + key + "'");
    }
    if (seed_override) raw_["seed"] = *seed_override;
    if (const char* url = std::getenv("PROMPTDST_BACKEND_URL"); url && *url)
      for (const char* role : {"domain", "slot"}) {
        const std::string prefix = std::string("backend.") + role + ".";
        raw_[prefix + "kind"] = "remote";
        raw_[prefix + "url"] = url;
        raw_.erase(prefix + "table");
      }
    char hex[17];
    const std::string canon = raw_.dump();
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(pdst_hash64(canon.data(), canon.size())));
    hash_ = hex;
  }

  const std::string& hash() const { return hash_; }
  std::uint64_t seed() const { return get<std::uint64_t>("seed", 0); }

  bool has(const std::string& key) const { return raw_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    auto it = raw_.find(key);
    if (it == raw_.end()) return fallback;
    try {
      return it->get<T>();
    } catch (const json::exception&) {
      throw Failure(kConfig, "config key '" + key + "' has the wrong type");
    }
  }

  fs::path path(const std::string& key, const fs::path& fallback = {}) const {
    auto it = raw_.find(key);
    if (it == raw_.end()) {
      if (fallback.empty()) throw Failure(kConfig, "missing config key '" + key + "'");
      return fallback;
    }
    if (!it->is_string()) throw Failure(kConfig, "config key '" + key + "' must be a path");
    return existing(key, it->get<std::string>());
  }

  std::vector<fs::path> paths(const std::string& key) const {
    auto it = raw_.find(key);
    if (it == raw_.end()) throw Failure(kConfig, "missing config key '" + key + "'");
    std::vector<fs::path> out;
    if (it->is_string()) {
      out.push_back(existing(key, it->get<std::string>()));
    } else if (it->is_array()) {
      for (const auto& p : *it) {
        if (!p.is_string()) throw Failure(kConfig, "config key '" + key + "' must list paths");
        out.push_back(existing(key, p.get<std::string>()));
      }
    } else {
      throw Failure(kConfig, "config key '" + key + "' must be a path or list of paths");
    }
    if (out.empty()) throw Failure(kConfig, "config key '" + key + "' is empty");
    return out;
  }

  // Backend descriptor for "domain" or "slot".
  std::string backend(const std::string& role) const {
    json d = json::object();
    const std::string prefix = "backend." + role + ".";
    for (const char* f : kBackendFields)
      if (auto it = raw_.find(prefix + f); it != raw_.end()) d[f] = *it;
    if (d.empty()) throw Failure(kConfig, "no " + prefix + "* keys in config");
    if (d.contains("table") && d["table"].is_string())
      d["table"] = existing(prefix + "table", d["table"].get<std::string>()).string();
    return d.dump();
  }

  std::vector<Cell> cells() const {
    std::vector<std::array<double, 4>> dists = {{0.4, 0.3, 0.2, 0.1},   {0.35, 0.35, 0.15, 0.15},
                                                {0.25, 0.25, 0.25, 0.25}, {0.2, 0.2, 0.3, 0.3},
                                                {0.15, 0.15, 0.35, 0.35}, {0.1, 0.2, 0.3, 0.4}};
    if (has("grid.distributions")) {
      dists.clear();
      for (const auto& row : raw_.at("grid.distributions")) {
        if (!row.is_array() || row.size() != 4)
          throw Failure(kConfig, "grid.distributions rows need four proportions");
        std::array<double, 4> d{};
        for (int i = 0; i < 4; ++i) d[i] = row[i].get<double>();
        dists.push_back(d);
      }
    }
    const auto sizes = get<std::vector<std::size_t>>("grid.sizes", {16, 32, 64, 128, 256});
    if (dists.empty() || sizes.empty()) throw Failure(kConfig, "the sampling grid is empty");
    std::vector<Cell> out;
    for (std::size_t i = 0; i < dists.size(); ++i)
      for (std::size_t s : sizes) {
        std::size_t counts[4];
        if (pdst_stratum_counts(s, dists[i].data(), counts) != PDST_OK)
          throw Failure(kConfig, "grid.distributions row " + std::to_string(i + 1) + ": " +
                                     pdst_last_error());
        out.push_back({"P" + std::to_string(i + 1) + "_n" + std::to_string(s), dists[i], s});
      }
    return out;
  }

  std::vector<std::size_t> per_slot() const {
    return get<std::vector<std::size_t>>("grid.per_slot", {0, 3, 5, 7});
  }

  pdst_history_options history() const {
    pdst_history_options h;
    pdst_history_options_default(&h);
    const auto style = get<std::string>("history.style", h.speaker_tagged ? "speaker_tagged" : "plain");
    if (style != "plain" && style != "speaker_tagged")
      throw Failure(kConfig, "history.style must be plain or speaker_tagged");
    h.speaker_tagged = style == "speaker_tagged";
    h.include_system_turns = get<bool>("history.include_system_turns", h.include_system_turns != 0);
    h.max_turns = get<std::size_t>("history.max_turns", h.max_turns);
    return h;
  }

  pdst_domain_strategy strategy() const {
    const auto s = get<std::string>("pipeline.strategy", "clm");
    if (s == "mlm_wgs") return PDST_STRATEGY_MLM_WGS;
    if (s == "clm") return PDST_STRATEGY_CLM;
    if (s == "known_k") return PDST_STRATEGY_KNOWN_K;
    if (s == "keyword") return PDST_STRATEGY_KEYWORD;
    throw Failure(kConfig, "unknown pipeline.strategy '" + s + "'");
  }

  pdst_domain_objective objective() const {
    const bool mlm_default = strategy() == PDST_STRATEGY_MLM_WGS || strategy() == PDST_STRATEGY_KNOWN_K;
    const auto o = get<std::string>("train.objective", mlm_default ? "mlm" : "clm");
    if (o == "mlm") return PDST_OBJECTIVE_MLM;
    if (o == "clm") return PDST_OBJECTIVE_CLM;
    throw Failure(kConfig, "train.objective must be mlm or clm");
  }

  pdst_finetune_config finetune(bool slot) const {
    pdst_finetune_config c;
    const std::string prefix = slot ? "slot_finetune." : "finetune.";
    if (slot) {
      const auto preset = get<std::string>("slot_finetune.preset", "seq2seq");
      if (preset == "seq2seq")
        pdst_finetune_config_seq2seq_default(&c);
      else if (preset == "clm")
        pdst_finetune_config_default(PDST_OBJECTIVE_CLM, &c);
      else
        throw Failure(kConfig, "slot_finetune.preset must be seq2seq or clm");
    } else {
      pdst_finetune_config_default(objective(), &c);
    }
    c.learning_rate = get<double>(prefix + "lr", c.learning_rate);
    c.epochs = get<int>(prefix + "epochs", c.epochs);
    c.batch_size = get<int>(prefix + "batch", c.batch_size);
    c.seed = seed();
    const auto loss = get<std::string>("loss.kind", "NLL");
    if (loss == "NLL")
      c.loss = PDST_LOSS_NLL;
    else if (loss == "NLL_PLUS_UL_EOS")
      c.loss = PDST_LOSS_NLL_PLUS_UL_EOS;
    else
      throw Failure(kConfig, "loss.kind must be NLL or NLL_PLUS_UL_EOS");
    c.ul_weight = get<double>("loss.ul_weight", c.ul_weight);
    return c;
  }

  pdst_ga_config ga() const {
    pdst_ga_config g;
    pdst_ga_config_default(&g);
    g.population_size = get<int>("ga.population", g.population_size);
    g.generations = get<int>("ga.generations", g.generations);
    g.mutation_rate = get<double>("ga.mutation_rate", g.mutation_rate);
    g.mutation_sigma = get<double>("ga.mutation_sigma", g.mutation_sigma);
    g.crossover_rate = get<double>("ga.crossover_rate", g.crossover_rate);
    g.elitism_count = get<int>("ga.elitism", g.elitism_count);
    g.tournament_size = get<int>("ga.tournament", g.tournament_size);
    g.seed = seed();
    return g;
  }

  pdst_pipeline_config pipeline() const {
    pdst_pipeline_config c;
    pdst_pipeline_config_default(&c);
    c.strategy = strategy();
    const auto mode = get<std::string>("pipeline.slot_mode", "generative");
    if (mode == "generative")
      c.slot_mode = PDST_SLOTS_GENERATIVE;
    else if (mode == "categorical_when_available")
      c.slot_mode = PDST_SLOTS_CATEGORICAL;
    else
      throw Failure(kConfig, "unknown pipeline.slot_mode '" + mode + "'");
    c.all_slots = get<bool>("pipeline.all_slots", false);
    c.beam_size = get<int>("generation.beam_size", c.beam_size);
    c.max_new_tokens = get<int>("generation.max_new_tokens", c.max_new_tokens);
    c.suppress_eos_until = get<int>("generation.suppress_eos_until", c.suppress_eos_until);
    if (has("pipeline.weights")) {
      const auto w = get<std::vector<double>>("pipeline.weights", {});
      if (w.size() != 4) throw Failure(kConfig, "pipeline.weights needs four numbers");
      for (int i = 0; i < 4; ++i) c.weights[i] = w[i];
    }
    c.keyword_prefix_stems = get<bool>("keywords.prefix_stems", false);
    c.history = history();
    return c;
  }

  pdst_partial_mode partial_mode() const {
    const auto m = get<std::string>("evaluate.partial_mode", "recall");
    if (m == "recall") return PDST_PARTIAL_RECALL;
    if (m == "jaccard") return PDST_PARTIAL_JACCARD;
    throw Failure(kConfig, "evaluate.partial_mode must be recall or jaccard");
  }

 private:
  fs::path existing(const std::string& key, const std::string& p) const {
    fs::path full = fs::path(p).is_absolute() ? fs::path(p) : base_ / p;
    if (!fs::exists(full))
      throw Failure(kConfig, "config key '" + key + "': " + full.string() + " does not exist");
    return full;
  }

  json raw_;
  fs::path base_;
  std::string hash_;
};

// ---------------------------------------------------------------- context

struct Context {
  const Config& config;
  fs::path out;
  unsigned workers;
  std::string subcommand;

  void write(const fs::path& path, const std::string& contents) const {
    check(pdst_write_file_atomic(path.c_str(), contents.data(), contents.size()),
          "writing " + path.string());
    write_meta(path);
  }

  void write_meta(const fs::path& path) const {
    const json meta = {{"config_hash", config.hash()},
                       {"seed", config.seed()},
                       {"subcommand", subcommand},
                       {"artifact", path.filename().string()}};
    const auto text = meta.dump(2) + "\n";
    const fs::path mp = path.string() + ".meta.json";
    check(pdst_write_file_atomic(mp.c_str(), text.data(), text.size()), "writing " + mp.string());
  }

  Ontology ontology() const {
    pdst_ontology* o = nullptr;
    const auto p = config.path("ontology", fs::path(PROMPTDST_DATA_DIR) / "multiwoz22_schema.json");
    check(pdst_ontology_load(p.c_str(), &o), "loading ontology");
    return Ontology(o);
  }

  Prompts prompts(const pdst_ontology* o) const {
    pdst_prompts* p = nullptr;
    const auto path = config.path("prompts", fs::path(PROMPTDST_DATA_DIR) / "prompts.json");
    check(pdst_prompts_load(o, path.c_str(), &p), "loading prompts");
    return Prompts(p);
  }

  Keywords keywords() const {
    pdst_keywords* k = nullptr;
    const auto path = config.path("keywords", fs::path(PROMPTDST_DATA_DIR) / "keywords.json");
    check(pdst_keywords_load(path.c_str(), &k), "loading keywords");
    return Keywords(k);
  }

  Examples read_examples(const pdst_ontology* o, const fs::path& path) const {
    if (!fs::exists(path))
      throw Failure(kData, path.string() + " does not exist (run the earlier subcommands first)");
    pdst_examples* e = nullptr;
    check(pdst_examples_read(o, path.c_str(), &e), "reading " + path.string());
    return Examples(e);
  }

  Backend open(const std::string& descriptor) const {
    pdst_backend* b = nullptr;
    check(pdst_backend_open(descriptor.c_str(), &b), "opening backend");
    return Backend(b);
  }

  // Trained model for the cell if present, else the configured base model.
  Backend model_or_base(const fs::path& model, const std::string& role) const {
    if (fs::exists(model)) {
      std::ifstream in(model);
      std::stringstream ss;
      ss << in.rdbuf();
      return open(ss.str());
    }
    return open(config.backend(role));
  }

  fs::path examples_path(const std::string& split) const { return out / "examples" / (split + ".jsonl"); }
  fs::path dataset_path(const Cell& c) const { return out / "datasets" / ("domain_" + c.name + ".jsonl"); }
  fs::path slot_dataset_path(std::size_t k) const {
    return out / "datasets" / ("slot_k" + std::to_string(k) + ".jsonl");
  }
  fs::path domain_model_path(const Cell& c) const { return out / "models" / ("domain_" + c.name + ".json"); }
  fs::path slot_model_path(std::size_t k) const {
    return out / "models" / ("slot_k" + std::to_string(k) + ".json");
  }
  fs::path weights_path(const Cell& c) const { return out / "weights" / (c.name + ".txt"); }
  fs::path dump_path(const Cell& c) const { return out / "predictions" / (c.name + ".jsonl"); }
  fs::path report_path(const Cell& c, const char* ext) const {
    return out / "reports" / (c.name + ext);
  }
};

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the
// failure with the lowest index.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::min<std::size_t>(workers, n); ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- subcommands

void run_ingest(const Context& ctx) {
  auto ontology = ctx.ontology();
  for (const std::string split : {"train", "test"}) {
    const std::string key = "corpus." + split;
    if (!ctx.config.has(key)) continue;
    Examples all;
    for (const auto& p : ctx.config.paths(key)) {
      pdst_examples* e = nullptr;
      check(pdst_corpus_load(ontology.get(), p.c_str(), &e), "loading corpus");
      Examples part(e);
      if (!all)
        all = std::move(part);
      else
        check(pdst_examples_append(all.get(), part.get()), "merging corpora");
    }
    const auto path = ctx.examples_path(split);
    check(pdst_examples_write(all.get(), path.c_str()), "writing " + path.string());
    ctx.write_meta(path);
    std::cout << split << ": " << pdst_examples_count(all.get()) << " turns -> " << path.string()
              << "\n";
  }
}

void run_sample(const Context& ctx) {
  const auto cells = ctx.config.cells();
  auto ontology = ctx.ontology();
  auto pool = ctx.read_examples(ontology.get(), ctx.examples_path("train"));
  for (const auto& cell : cells) {
    pdst_examples* e = nullptr;
    std::size_t counts[4];
    check(pdst_sample_domain(pool.get(), cell.size, cell.dist.data(), ctx.config.seed(), &e, counts),
          "sampling " + cell.name);
    Examples ds(e);
    const auto path = ctx.dataset_path(cell);
    check(pdst_examples_write(ds.get(), path.c_str()), "writing " + path.string());
    ctx.write_meta(path);
    std::cout << cell.name << ": strata " << counts[0] << "," << counts[1] << "," << counts[2]
              << "," << counts[3] << "\n";
  }
  for (std::size_t k : ctx.config.per_slot()) {
    if (k == 0) continue;  // zero-shot needs no data
    pdst_examples* e = nullptr;
    check(pdst_sample_slot(pool.get(), ontology.get(), k, ctx.config.seed(), &e),
          "sampling per-slot " + std::to_string(k));
    Examples ds(e);
    const auto path = ctx.slot_dataset_path(k);
    check(pdst_examples_write(ds.get(), path.c_str()), "writing " + path.string());
    ctx.write_meta(path);
    std::cout << "slot_k" << k << ": " << pdst_examples_count(ds.get()) << " examples\n";
  }
}

void run_train_domain(const Context& ctx) {
  auto ontology = ctx.ontology();
  auto prompts = ctx.prompts(ontology.get());
  auto base = ctx.open(ctx.config.backend("domain"));
  const auto cfg = ctx.config.finetune(false);
  const auto history = ctx.config.history();
  const auto objective = ctx.config.objective();
  const auto cells = ctx.config.cells();
  parallel_for(cells.size(), ctx.workers, [&](std::size_t i) {
    auto train = ctx.read_examples(ontology.get(), ctx.dataset_path(cells[i]));
    pdst_backend* tuned = nullptr;
    std::size_t n_pairs = 0;
    check(pdst_train_domain(base.get(), train.get(), prompts.get(), objective, &cfg, &history,
                            &tuned, &n_pairs),
          "training " + cells[i].name);
    Backend model(tuned);
    char* desc = nullptr;
    check(pdst_backend_descriptor(model.get(), &desc), "describing model");
    ctx.write(ctx.domain_model_path(cells[i]), take(desc) + "\n");
  });
  std::cout << "trained " << cells.size() << " domain models\n";
}

void run_train_slot(const Context& ctx) {
  auto ontology = ctx.ontology();
  auto prompts = ctx.prompts(ontology.get());
  auto base = ctx.open(ctx.config.backend("slot"));
  const auto cfg = ctx.config.finetune(true);
  const auto history = ctx.config.history();
  std::vector<std::size_t> ks;
  for (std::size_t k : ctx.config.per_slot())
    if (k > 0) ks.push_back(k);
  parallel_for(ks.size(), ctx.workers, [&](std::size_t i) {
    auto train = ctx.read_examples(ontology.get(), ctx.slot_dataset_path(ks[i]));
    pdst_backend* tuned = nullptr;
    check(pdst_train_slot(base.get(), train.get(), ontology.get(), prompts.get(), &cfg, &history,
                          &tuned, nullptr),
          "training slot_k" + std::to_string(ks[i]));
    Backend model(tuned);
    char* desc = nullptr;
    check(pdst_backend_descriptor(model.get(), &desc), "describing model");
    ctx.write(ctx.slot_model_path(ks[i]), take(desc) + "\n");
  });
  std::cout << "trained " << ks.size() << " slot models\n";
}

void run_ga_weights(const Context& ctx) {
  auto ontology = ctx.ontology();
  auto prompts = ctx.prompts(ontology.get());
  const auto ga = ctx.config.ga();
  const auto history = ctx.config.history();
  const auto cells = ctx.config.cells();
  parallel_for(cells.size(), ctx.workers, [&](std::size_t i) {
    auto train = ctx.read_examples(ontology.get(), ctx.dataset_path(cells[i]));
    auto mlm = ctx.model_or_base(ctx.domain_model_path(cells[i]), "domain");
    double w[4], fitness = 0.0;
    check(pdst_ga_learn_weights(mlm.get(), train.get(), ontology.get(), prompts.get(), &ga,
                                &history, w, &fitness),
          "learning weights for " + cells[i].name);
    const auto path = ctx.weights_path(cells[i]);
    check(pdst_weights_write(w, path.c_str()), "writing " + path.string());
    ctx.write_meta(path);
  });
  std::cout << "learned weights for " << cells.size() << " cells\n";
}

void run_predict(const Context& ctx) {
  auto ontology = ctx.ontology();
  auto prompts = ctx.prompts(ontology.get());
  auto cfg = ctx.config.pipeline();
  Keywords keywords;
  if (cfg.strategy == PDST_STRATEGY_KEYWORD) keywords = ctx.keywords();
  auto test = ctx.read_examples(ontology.get(), ctx.examples_path("test"));

  Backend slot;
  if (ctx.config.has("predict.slot_per_slot")) {
    const auto k = ctx.config.get<std::size_t>("predict.slot_per_slot", 0);
    const auto path = ctx.slot_model_path(k);
    if (k > 0 && !fs::exists(path))
      throw Failure(kConfig, "predict.slot_per_slot=" + std::to_string(k) + " but " +
                                 path.string() + " is missing");
    slot = ctx.model_or_base(path, "slot");
  } else {
    slot = ctx.open(ctx.config.backend("slot"));
  }

  for (const auto& cell : ctx.config.cells()) {
    Backend domain;
    if (cfg.strategy != PDST_STRATEGY_KEYWORD)
      domain = ctx.model_or_base(ctx.domain_model_path(cell), "domain");
    auto cell_cfg = cfg;
    if (cfg.strategy == PDST_STRATEGY_MLM_WGS && fs::exists(ctx.weights_path(cell)))
      check(pdst_weights_read(ctx.weights_path(cell).c_str(), cell_cfg.weights), "reading weights");
    pdst_pipeline* pl = nullptr;
    check(pdst_pipeline_create(ontology.get(), prompts.get(), keywords.get(), domain.get(),
                               slot.get(), &cell_cfg, &pl),
          "building pipeline");
    Pipeline pipeline(pl);
    const auto path = ctx.dump_path(cell);
    check(pdst_pipeline_dump(pipeline.get(), test.get(), ctx.workers, path.c_str()),
          "predicting " + cell.name);
    ctx.write_meta(path);
    std::cout << cell.name << ": " << pdst_examples_count(test.get()) << " turns -> "
              << path.string() << "\n";
  }
}

void run_evaluate(const Context& ctx) {
  auto ontology = ctx.ontology();
  auto gold = ctx.read_examples(ontology.get(), ctx.examples_path("test"));
  const auto mode = ctx.config.partial_mode();
  const auto cells = ctx.config.cells();
  std::vector<std::string> summaries(cells.size());
  parallel_for(cells.size(), ctx.workers, [&](std::size_t i) {
    const auto dump = ctx.dump_path(cells[i]);
    if (!fs::exists(dump)) throw Failure(kData, dump.string() + " does not exist (run predict)");
    pdst_report* r = nullptr;
    check(pdst_evaluate(ontology.get(), dump.c_str(), gold.get(), mode, &r),
          "evaluating " + cells[i].name);
    Report report(r);
    char* js = nullptr;
    check(pdst_report_json(report.get(), 1, &js), "serializing report");
    ctx.write(ctx.report_path(cells[i], ".json"), take(js));
    char* csv = nullptr;
    check(pdst_report_csv(report.get(), &csv), "serializing report");
    ctx.write(ctx.report_path(cells[i], ".csv"), take(csv));
    double joint = 0, slot = 0, full = 0;
    pdst_report_metric(report.get(), "full_accuracy", &full);
    pdst_report_metric(report.get(), "joint_accuracy", &joint);
    pdst_report_metric(report.get(), "slot_accuracy", &slot);
    std::ostringstream os;
    os << cells[i].name << ": full " << full << " joint " << joint << " slot " << slot;
    summaries[i] = os.str();
  });
  for (const auto& s : summaries) std::cout << s << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void run_report(const Context& ctx) {
  std::string grid = "cell,p1,p2,p3,p4,size,metric,value,n\n";
  std::string strata = "cell,p1,p2,p3,p4,size,k,full_accuracy,n\n";
  for (const auto& cell : ctx.config.cells()) {
    const auto path = ctx.report_path(cell, ".json");
    if (!fs::exists(path)) throw Failure(kData, path.string() + " does not exist (run evaluate)");
    pdst_report* r = nullptr;
    check(pdst_report_read(path.c_str(), &r), "reading " + path.string());
    Report report(r);
    std::string prefix = cell.name;
    for (double p : cell.dist) prefix += "," + fmt(p);
    prefix += "," + std::to_string(cell.size);
    const auto n = std::to_string(pdst_report_examples(report.get()));
    for (const auto& m : kMetrics) {
      double v = 0;
      check(pdst_report_metric(report.get(), m.c_str(), &v), "reading " + m);
      grid += prefix + "," + m + "," + fmt(v) + "," + n + "\n";
    }
    char* js = nullptr;
    check(pdst_report_json(report.get(), 0, &js), "serializing report");
    const json j = json::parse(take(js));
    for (const auto& [k, s] : j.at("per_stratum").items())
      strata += prefix + "," + k + "," + fmt(s.at("full_accuracy").get<double>()) + "," +
                std::to_string(s.at("n").get<std::size_t>()) + "\n";
  }
  ctx.write(ctx.out / "report" / "grid.csv", grid);
  ctx.write(ctx.out / "report" / "strata.csv", strata);

  char* ref = nullptr;
  check(pdst_reference_tables(&ref), "reference tables");
  std::string csv = "table,model,setting,metric,value\n";
  for (const auto& row : json::parse(take(ref)))
    csv += row.at("table").get<std::string>() + "," + row.at("model").get<std::string>() + "," +
           row.at("setting").get<std::string>() + "," + row.at("metric").get<std::string>() + "," +
           fmt(row.at("value").get<double>()) + "\n";
  ctx.write(ctx.out / "report" / "reference.csv", csv);
  std::cout << "wrote " << (ctx.out / "report").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-based few-shot dialogue state tracking experiments"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string out = "out";

  using Runner = void (*)(const Context&);
  const std::vector<std::tuple<std::string, std::string, Runner>> commands = {
      {"ingest", "parse corpora into the example cache", run_ingest},
      {"sample", "draw the domain and per-slot datasets of the grid", run_sample},
      {"train-domain", "fine-tune the domain model for each grid cell", run_train_domain},
      {"train-slot", "fine-tune the slot model for each per-slot count", run_train_slot},
      {"ga-weights", "learn WGS weights for each grid cell", run_ga_weights},
      {"predict", "dump per-turn predictions on the test split", run_predict},
      {"evaluate", "score prediction dumps against the test split", run_evaluate},
      {"report", "aggregate the grid into CSV tables", run_report},
  };
  std::map<CLI::App*, Runner> runners;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config (flat JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", workers, "parallel jobs")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "artifact directory")->capture_default_str();
    runners[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const Config config(config_path, seed);
    const Context ctx{config, fs::path(out), workers, sub->get_name()};
    runners.at(sub)(ctx);
  } catch (const Failure& f) {
    std::cerr << "promptdst " << sub->get_name() << ": " << f.what() << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "promptdst " << sub->get_name() << ": " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
