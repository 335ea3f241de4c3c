#include "promptdst/promptdst.h"

#include <atomic>
#include <cstring>
#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "promptdst/corpus.hpp"
#include "promptdst/domain_predictor.hpp"
#include "promptdst/error.hpp"
#include "promptdst/evaluation.hpp"
#include "promptdst/slot_predictor.hpp"
#include "util.hpp"

using namespace promptdst;

struct pdst_ontology {
  std::shared_ptr<const Ontology> ontology;
};
struct pdst_examples {
  SampledDataset data;
};
struct pdst_prompts {
  PromptConfig prompts;
};
struct pdst_keywords {
  KeywordTable table;
};
struct pdst_backend {
  BackendPtr backend;
};
struct pdst_pipeline {
  std::shared_ptr<const Ontology> ontology;  // keeps the pipeline's reference alive
  std::unique_ptr<BeliefStatePipeline> pipeline;
  HistoryOptions history;
};
struct pdst_report {
  MetricReport report;
};

namespace {

thread_local std::string g_last_error;

pdst_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return PDST_E_INVALID_ARGUMENT;
    case ErrorKind::parse: return PDST_E_PARSE;
    case ErrorKind::ontology: return PDST_E_ONTOLOGY;
    case ErrorKind::range: return PDST_E_RANGE;
    case ErrorKind::lookup: return PDST_E_LOOKUP;
    case ErrorKind::backend: return PDST_E_BACKEND;
    case ErrorKind::data: return PDST_E_DATA;
    case ErrorKind::io: return PDST_E_IO;
    case ErrorKind::numeric: return PDST_E_NUMERIC;
    case ErrorKind::config: return PDST_E_CONFIG;
  }
  return PDST_E_INTERNAL;
}

template <typename Fn>
pdst_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PDST_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return PDST_E_PARSE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PDST_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return PDST_E_INTERNAL;
  }
}

template <typename T>
const T& need(const T* p, const char* what) {
  if (!p) throw Error(ErrorKind::invalid_argument, std::string(what) + " is null");
  return *p;
}

const char* need(const char* p, const char* what) {
  if (!p) throw Error(ErrorKind::invalid_argument, std::string(what) + " is null");
  return p;
}

template <typename T>
T* need_out(T* p, const char* what) {
  if (!p) throw Error(ErrorKind::invalid_argument, std::string(what) + " is null");
  return p;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

HistoryOptions to_history(const pdst_history_options* h) {
  HistoryOptions out;
  if (!h) return out;
  out.style = h->speaker_tagged ? HistoryStyle::speaker_tagged : HistoryStyle::plain;
  out.include_system_turns = h->include_system_turns != 0;
  out.max_turns = h->max_turns;
  return out;
}

FineTuneConfig to_finetune(const pdst_finetune_config& c, LossSpec& loss) {
  FineTuneConfig cfg{c.learning_rate, c.epochs, c.batch_size, c.seed};
  cfg.validate();
  if (c.loss != PDST_LOSS_NLL && c.loss != PDST_LOSS_NLL_PLUS_UL_EOS)
    throw Error(ErrorKind::config, "unknown loss kind " + std::to_string(c.loss));
  loss.kind = c.loss == PDST_LOSS_NLL ? LossKind::nll : LossKind::nll_plus_ul_eos;
  loss.ul_weight = c.ul_weight;
  return cfg;
}

void fill_finetune(const FineTuneConfig& f, pdst_finetune_config* out) {
  out->learning_rate = f.learning_rate;
  out->epochs = f.epochs;
  out->batch_size = f.batch_size;
  out->seed = f.seed;
  out->loss = PDST_LOSS_NLL;
  out->ul_weight = LossSpec{}.ul_weight;
}

}  // namespace

extern "C" {

const char* pdst_last_error(void) { return g_last_error.c_str(); }

const char* pdst_status_name(pdst_status status) {
  switch (status) {
    case PDST_OK: return "ok";
    case PDST_E_INVALID_ARGUMENT: return "invalid_argument";
    case PDST_E_PARSE: return "parse";
    case PDST_E_ONTOLOGY: return "ontology";
    case PDST_E_RANGE: return "range";
    case PDST_E_LOOKUP: return "lookup";
    case PDST_E_BACKEND: return "backend";
    case PDST_E_DATA: return "data";
    case PDST_E_IO: return "io";
    case PDST_E_NUMERIC: return "numeric";
    case PDST_E_CONFIG: return "config";
    case PDST_E_INTERNAL: return "internal";
  }
  return "unknown";
}

void pdst_string_free(char* s) { std::free(s); }

void pdst_history_options_default(pdst_history_options* out) {
  if (!out) return;
  const HistoryOptions h;
  out->speaker_tagged = h.style == HistoryStyle::speaker_tagged;
  out->include_system_turns = h.include_system_turns;
  out->max_turns = h.max_turns;
}

void pdst_finetune_config_default(pdst_domain_objective objective, pdst_finetune_config* out) {
  if (!out) return;
  fill_finetune(objective == PDST_OBJECTIVE_MLM ? FineTuneConfig::mlm_defaults()
                                                : FineTuneConfig::clm_defaults(),
                out);
}

void pdst_finetune_config_seq2seq_default(pdst_finetune_config* out) {
  if (out) fill_finetune(FineTuneConfig::seq2seq_defaults(), out);
}

void pdst_ga_config_default(pdst_ga_config* out) {
  if (!out) return;
  const GaConfig g;
  out->population_size = g.population_size;
  out->generations = g.generations;
  out->mutation_rate = g.mutation_rate;
  out->mutation_sigma = g.mutation_sigma;
  out->crossover_rate = g.crossover_rate;
  out->elitism_count = g.elitism_count;
  out->tournament_size = g.tournament_size;
  out->seed = g.seed;
}

void pdst_pipeline_config_default(pdst_pipeline_config* out) {
  if (!out) return;
  const PipelineConfig c;
  out->strategy = static_cast<pdst_domain_strategy>(c.strategy);
  out->slot_mode = c.slot_mode == SlotMode::generative ? PDST_SLOTS_GENERATIVE
                                                       : PDST_SLOTS_CATEGORICAL;
  out->all_slots = c.all_slots;
  out->beam_size = c.generation.beam_size;
  out->max_new_tokens = c.generation.max_new_tokens;
  out->suppress_eos_until = c.generation.suppress_eos_until;
  for (int i = 0; i < 4; ++i) out->weights[i] = c.weights.w[i];
  out->keyword_prefix_stems = c.keyword.allow_prefix_stems;
  pdst_history_options_default(&out->history);
}

uint64_t pdst_hash64(const char* data, size_t len) {
  return detail::fnv1a64(std::string_view(data ? data : "", data ? len : 0));
}

pdst_status pdst_write_file_atomic(const char* path, const char* data, size_t len) {
  return guarded([&] {
    detail::write_file_atomic(need(path, "path"), data ? std::string_view(data, len) : std::string_view());
  });
}

pdst_status pdst_stratum_counts(size_t size, const double dist[4], size_t counts[4]) {
  return guarded([&] {
    need(dist, "dist");
    need_out(counts, "counts");
    const auto c =
        largest_remainder_counts(size, DomainDistribution(dist[0], dist[1], dist[2], dist[3]));
    for (int i = 0; i < 4; ++i) counts[i] = c[i];
  });
}

// ---- ontology

pdst_status pdst_ontology_load(const char* path, pdst_ontology** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    auto o = std::make_shared<const Ontology>(Ontology::load(need(path, "path")));
    *out = new pdst_ontology{std::move(o)};
  });
}

void pdst_ontology_free(pdst_ontology* o) { delete o; }

size_t pdst_ontology_slot_count(const pdst_ontology* o) { return o ? o->ontology->size() : 0; }

// ---- examples

pdst_status pdst_corpus_load(const pdst_ontology* o, const char* path, pdst_examples** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    SampledDataset ds;
    ds.examples = load_corpus(need(path, "path"), *need(o, "ontology").ontology);
    *out = new pdst_examples{std::move(ds)};
  });
}

pdst_status pdst_examples_read(const pdst_ontology* o, const char* path, pdst_examples** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    const char* p = need(path, "path");
    try {
      auto ds = read_dataset_lines(detail::read_file(p), *need(o, "ontology").ontology);
      *out = new pdst_examples{std::move(ds)};
    } catch (const Error& e) {
      throw e.with_context(p);
    }
  });
}

pdst_status pdst_examples_write(const pdst_examples* e, const char* path) {
  return guarded([&] {
    detail::write_file_atomic(need(path, "path"), write_dataset_lines(need(e, "examples").data));
  });
}

pdst_status pdst_examples_append(pdst_examples* dst, const pdst_examples* src) {
  return guarded([&] {
    auto& d = need_out(dst, "dst")->data;
    const auto& s = need(src, "src").data;
    const bool d_targeted = !d.target_slots.empty();
    const bool s_targeted = !s.target_slots.empty();
    if (!d.examples.empty() && !s.examples.empty() && d_targeted != s_targeted)
      throw Error(ErrorKind::data, "cannot mix per-slot and domain datasets");
    d.examples.insert(d.examples.end(), s.examples.begin(), s.examples.end());
    d.target_slots.insert(d.target_slots.end(), s.target_slots.begin(), s.target_slots.end());
  });
}

size_t pdst_examples_count(const pdst_examples* e) { return e ? e->data.examples.size() : 0; }

void pdst_examples_free(pdst_examples* e) { delete e; }

pdst_status pdst_sample_domain(const pdst_examples* pool, size_t size, const double dist[4],
                               uint64_t seed, pdst_examples** out, size_t counts[4]) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    need(dist, "dist");
    auto ds = sample_domain_dataset(need(pool, "pool").data.examples, size,
                                    DomainDistribution(dist[0], dist[1], dist[2], dist[3]), seed);
    if (counts)
      for (int i = 0; i < 4; ++i) counts[i] = ds.stratum_counts[i];
    *out = new pdst_examples{std::move(ds)};
  });
}

pdst_status pdst_sample_slot(const pdst_examples* pool, const pdst_ontology* o, size_t per_slot,
                             uint64_t seed, pdst_examples** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    auto ds = sample_slot_dataset(need(pool, "pool").data.examples,
                                  *need(o, "ontology").ontology, per_slot, seed);
    *out = new pdst_examples{std::move(ds)};
  });
}

// ---- prompts, keywords

pdst_status pdst_prompts_load(const pdst_ontology* o, const char* path, pdst_prompts** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    auto p = PromptConfig::load(need(path, "path"), *need(o, "ontology").ontology);
    *out = new pdst_prompts{std::move(p)};
  });
}

void pdst_prompts_free(pdst_prompts* p) { delete p; }

pdst_status pdst_keywords_load(const char* path, pdst_keywords** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    *out = new pdst_keywords{KeywordTable::load(need(path, "path"))};
  });
}

void pdst_keywords_free(pdst_keywords* k) { delete k; }

// ---- backends

pdst_status pdst_backend_open(const char* descriptor_json, pdst_backend** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    nlohmann::json d;
    try {
      d = nlohmann::json::parse(need(descriptor_json, "descriptor"));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::config, std::string("backend descriptor: ") + e.what());
    }
    *out = new pdst_backend{open_backend(d)};
  });
}

pdst_status pdst_backend_descriptor(const pdst_backend* b, char** out_json) {
  return guarded([&] {
    *need_out(out_json, "out") = nullptr;
    *out_json = dup_string(need(b, "backend").backend->descriptor().dump());
  });
}

void pdst_backend_free(pdst_backend* b) { delete b; }

pdst_status pdst_train_domain(const pdst_backend* b, const pdst_examples* train,
                              const pdst_prompts* p, pdst_domain_objective objective,
                              const pdst_finetune_config* config,
                              const pdst_history_options* history, pdst_backend** out,
                              size_t* n_pairs) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    LossSpec loss;
    const FineTuneConfig cfg = to_finetune(need(config, "config"), loss);
    const auto& examples = need(train, "train").data.examples;
    const auto& prompts = need(p, "prompts").prompts;
    const HistoryOptions h = to_history(history);
    TrainingPairs pairs;
    if (objective == PDST_OBJECTIVE_MLM) {
      if (loss.kind != LossKind::nll)
        throw Error(ErrorKind::config, "unlikelihood loss applies to generation only");
      pairs = make_mlm_training_pairs(examples, prompts.family, h);
    } else {
      pairs = make_clm_training_pairs(examples, h, prompts.domain_question);
    }
    if (n_pairs) *n_pairs = pairs.pairs.size();
    *out = new pdst_backend{need(b, "backend").backend->fine_tune(pairs.pairs, loss, cfg)};
  });
}

pdst_status pdst_train_slot(const pdst_backend* b, const pdst_examples* train,
                            const pdst_ontology* o, const pdst_prompts* p,
                            const pdst_finetune_config* config,
                            const pdst_history_options* history, pdst_backend** out,
                            size_t* n_pairs) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    LossSpec loss;
    const FineTuneConfig cfg = to_finetune(need(config, "config"), loss);
    const auto pairs = make_slot_training_pairs(need(train, "train").data,
                                                *need(o, "ontology").ontology,
                                                need(p, "prompts").prompts.slots,
                                                to_history(history));
    if (n_pairs) *n_pairs = pairs.pairs.size();
    *out = new pdst_backend{need(b, "backend").backend->fine_tune(pairs.pairs, loss, cfg)};
  });
}

// ---- weights

pdst_status pdst_ga_learn_weights(const pdst_backend* mlm, const pdst_examples* train,
                                  const pdst_ontology* o, const pdst_prompts* p,
                                  const pdst_ga_config* config,
                                  const pdst_history_options* history, double weights[4],
                                  double* fitness) {
  return guarded([&] {
    need_out(weights, "weights");
    const auto& c = need(config, "config");
    GaConfig g;
    g.population_size = c.population_size;
    g.generations = c.generations;
    g.mutation_rate = c.mutation_rate;
    g.mutation_sigma = c.mutation_sigma;
    g.crossover_rate = c.crossover_rate;
    g.elitism_count = c.elitism_count;
    g.tournament_size = c.tournament_size;
    g.seed = c.seed;
    const DomainSet ds = need(o, "ontology").ontology->domains();
    const std::vector<Domain> vocab(ds.begin(), ds.end());
    const auto result = learn_weights_ga(need(train, "train").data.examples,
                                         *need(mlm, "backend").backend,
                                         need(p, "prompts").prompts.family, vocab, g,
                                         to_history(history));
    for (int i = 0; i < 4; ++i) weights[i] = result.best.w[i];
    if (fitness) *fitness = result.best_fitness;
  });
}

pdst_status pdst_weights_write(const double weights[4], const char* path) {
  return guarded([&] {
    need(weights, "weights");
    WgsWeights w{{weights[0], weights[1], weights[2], weights[3]}};
    w.validate();
    detail::write_file_atomic(need(path, "path"), w.serialize());
  });
}

pdst_status pdst_weights_read(const char* path, double weights[4]) {
  return guarded([&] {
    need_out(weights, "weights");
    const auto w = WgsWeights::load(need(path, "path"));
    for (int i = 0; i < 4; ++i) weights[i] = w.w[i];
  });
}

// ---- prediction

pdst_status pdst_pipeline_create(const pdst_ontology* o, const pdst_prompts* p,
                                 const pdst_keywords* k, const pdst_backend* domain_backend,
                                 const pdst_backend* slot_backend,
                                 const pdst_pipeline_config* config, pdst_pipeline** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    const auto& c = need(config, "config");
    PipelineConfig pc;
    switch (c.strategy) {
      case PDST_STRATEGY_MLM_WGS: pc.strategy = DomainStrategy::mlm_wgs; break;
      case PDST_STRATEGY_CLM: pc.strategy = DomainStrategy::clm; break;
      case PDST_STRATEGY_KNOWN_K: pc.strategy = DomainStrategy::known_k; break;
      case PDST_STRATEGY_KEYWORD: pc.strategy = DomainStrategy::keyword; break;
      default: throw Error(ErrorKind::config, "unknown domain strategy");
    }
    pc.slot_mode = c.slot_mode == PDST_SLOTS_CATEGORICAL ? SlotMode::categorical_when_available
                                                         : SlotMode::generative;
    pc.all_slots = c.all_slots != 0;
    pc.generation.beam_size = c.beam_size;
    pc.generation.max_new_tokens = c.max_new_tokens;
    pc.generation.suppress_eos_until = c.suppress_eos_until;
    pc.weights = WgsWeights{{c.weights[0], c.weights[1], c.weights[2], c.weights[3]}};
    pc.keyword.allow_prefix_stems = c.keyword_prefix_stems != 0;
    if (pc.strategy == DomainStrategy::keyword && !k)
      throw Error(ErrorKind::config, "keyword strategy needs a keyword table");

    PipelineComponents comps;
    comps.domain_backend = domain_backend ? domain_backend->backend : nullptr;
    comps.slot_backend = need(slot_backend, "slot backend").backend;
    comps.prompts = need(p, "prompts").prompts;
    if (k) comps.keywords = k->table;

    auto handle = std::make_unique<pdst_pipeline>();
    handle->ontology = need(o, "ontology").ontology;
    handle->history = to_history(&c.history);
    handle->pipeline =
        std::make_unique<BeliefStatePipeline>(*handle->ontology, std::move(comps), pc);
    *out = handle.release();
  });
}

void pdst_pipeline_free(pdst_pipeline* pl) { delete pl; }

pdst_status pdst_pipeline_predict(const pdst_pipeline* pl, const char* dialogue_history,
                                  int known_k, char** out_json) {
  return guarded([&] {
    *need_out(out_json, "out") = nullptr;
    PredictionRecord r;
    r.prediction = need(pl, "pipeline")
                       .pipeline->predict(need(dialogue_history, "dialogue history"),
                                          known_k > 0 ? std::optional<int>(known_k)
                                                      : std::nullopt);
    *out_json = dup_string(to_json(r).dump());
  });
}

pdst_status pdst_pipeline_dump(const pdst_pipeline* pl, const pdst_examples* turns,
                               unsigned workers, const char* path) {
  return guarded([&] {
    const auto& pipe = need(pl, "pipeline");
    const auto& examples = need(turns, "turns").data.examples;
    need(path, "path");
    if (workers == 0) throw Error(ErrorKind::invalid_argument, "workers must be at least 1");

    std::vector<PredictionRecord> records(examples.size());
    std::vector<std::exception_ptr> errors(examples.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < examples.size();) {
        const auto& ex = examples[i];
        try {
          const std::string dh = format_history(ex.history, pipe.history);
          records[i].dialogue_id = ex.dialogue_id;
          records[i].turn_index = ex.turn_index;
          const auto k = static_cast<int>(ex.gold_domains.size());
          records[i].prediction =
              pipe.pipeline->predict(dh, k > 0 ? std::optional<int>(k) : std::nullopt);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const unsigned n = std::min<std::size_t>(workers, std::max<std::size_t>(examples.size(), 1));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    // Report the earliest failing turn so the message does not depend on scheduling.
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (!errors[i]) continue;
      const std::string id = examples[i].dialogue_id + "#" + std::to_string(examples[i].turn_index);
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        throw e.with_context("turn " + id);
      }
    }
    detail::write_file_atomic(path, write_prediction_lines(records));
  });
}

// ---- evaluation

pdst_status pdst_evaluate(const pdst_ontology* o, const char* dump_path,
                          const pdst_examples* gold, pdst_partial_mode mode, pdst_report** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    const Ontology& ont = *need(o, "ontology").ontology;
    std::vector<PredictionRecord> dump;
    try {
      dump = read_prediction_lines(detail::read_file(need(dump_path, "dump path")), ont);
    } catch (const Error& e) {
      throw e.with_context(dump_path);
    }
    ReportOptions opts;
    opts.partial_mode = mode == PDST_PARTIAL_JACCARD ? PartialMode::jaccard : PartialMode::recall;
    *out = new pdst_report{build_report(dump, need(gold, "gold").data.examples, ont, opts)};
  });
}

pdst_status pdst_report_read(const char* json_path, pdst_report** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    *out = new pdst_report{report_from_json(detail::parse_json_file(need(json_path, "path")))};
  });
}

pdst_status pdst_report_json(const pdst_report* r, int with_reference, char** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    *out = dup_string(
        detail::dump_precise(report_to_json(need(r, "report").report, with_reference != 0)) +
        "\n");
  });
}

pdst_status pdst_report_csv(const pdst_report* r, char** out) {
  return guarded([&] {
    *need_out(out, "out") = nullptr;
    *out = dup_string(report_to_csv(need(r, "report").report));
  });
}

pdst_status pdst_report_metric(const pdst_report* r, const char* name, double* out) {
  return guarded([&] {
    const auto& rep = need(r, "report").report;
    const std::string n = need(name, "name");
    need_out(out, "out");
    if (n == "full_accuracy") *out = rep.full_accuracy;
    else if (n == "partial_accuracy") *out = rep.partial_accuracy;
    else if (n == "strict_slot_accuracy") *out = rep.strict_slot_accuracy;
    else if (n == "flexible_slot_accuracy") *out = rep.flexible_slot_accuracy;
    else if (n == "joint_accuracy") *out = rep.joint_accuracy;
    else if (n == "slot_accuracy") *out = rep.slot_accuracy;
    else throw Error(ErrorKind::lookup, "unknown metric '" + n + "'");
  });
}

size_t pdst_report_examples(const pdst_report* r) { return r ? r->report.n_examples : 0; }

void pdst_report_free(pdst_report* r) { delete r; }

pdst_status pdst_reference_tables(char** out_json) {
  return guarded([&] {
    *need_out(out_json, "out") = nullptr;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : reference_tables())
      arr.push_back({{"table", row.table},
                     {"model", row.model},
                     {"setting", row.setting},
                     {"metric", row.metric},
                     {"value", row.value}});
    *out_json = dup_string(detail::dump_precise(arr));
  });
}

}  // extern "C"
