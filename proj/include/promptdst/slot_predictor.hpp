#pragma once

// Stage 2: fill the slots of the predicted domains and assemble the belief
// state. Also defines the per-turn prediction dump record.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptdst/core_model.hpp"
#include "promptdst/corpus.hpp"
#include "promptdst/domain_predictor.hpp"
#include "promptdst/lm_backend.hpp"
#include "promptdst/prompting.hpp"

namespace promptdst {

// Value <-> first-token maps for one categorical slot. Construction fails
// unless every value has a distinct first token.
class CategoricalIndex {
 public:
  CategoricalIndex(const SlotDef& slot, std::map<std::string, std::string> value_to_token);
  static CategoricalIndex build(const SlotDef& slot, const LmBackend& backend);

  const std::vector<std::string>& values() const { return values_; }
  const std::string& token_of(const std::string& value) const;
  const std::string& value_of(const std::string& token) const;

 private:
  std::vector<std::string> values_;  // categorical_values order
  std::map<std::string, std::string> to_token_;
  std::map<std::string, std::string> to_value_;
};

// Generates from the slot prompt; absent when the trimmed output is empty
// or the "none" sentinel.
std::optional<std::string> predict_slot_value(const LmBackend& backend, std::string_view dh,
                                              const SlotDef& slot,
                                              const SlotPromptTable& table,
                                              const GenerateOptions& options = {},
                                              std::string* raw_generation = nullptr);

struct CategoricalPrediction {
  std::string value;
  double probability = 0.0;
  // Normalized P(V | X, S) for every value, categorical_values order.
  std::vector<std::pair<std::string, double>> distribution;
};

// P(V|X,S) = P(first = I(V)) / sum_{V'} P(first = I(V')); argmax with ties
// going to the earliest value.
CategoricalPrediction predict_categorical(const LmBackend& backend, std::string_view dh,
                                          const SlotDef& slot, const SlotPromptTable& table,
                                          const CategoricalIndex& index);

enum class DomainStrategy { mlm_wgs, clm, known_k, keyword };
enum class SlotMode { generative, categorical_when_available };

std::string_view to_string(DomainStrategy s);
DomainStrategy domain_strategy_from_string(std::string_view s);
std::string_view to_string(SlotMode m);
SlotMode slot_mode_from_string(std::string_view s);

struct PipelineConfig {
  DomainStrategy strategy = DomainStrategy::clm;
  SlotMode slot_mode = SlotMode::generative;
  // Diagnostic: query every ontology slot, not just the predicted domains'.
  bool all_slots = false;
  GenerateOptions generation;
  WgsWeights weights;
  KeywordOptions keyword;
};

struct PipelineComponents {
  BackendPtr domain_backend;  // MLM for mlm_wgs/known_k, CLM for clm
  BackendPtr slot_backend;
  PromptConfig prompts;
  KeywordTable keywords;
};

struct TurnPrediction {
  DomainSet domains;
  std::string domain_raw;  // CLM generation, when used
  std::map<SlotKey, std::string> raw_generations;
  std::map<SlotKey, std::vector<std::pair<std::string, double>>> categorical;
  BeliefState state;
  // Slots sharing a value with another slot in this turn.
  int duplicate_values = 0;
};

class BeliefStatePipeline {
 public:
  BeliefStatePipeline(const Ontology& ontology, PipelineComponents components,
                      PipelineConfig config);

  // known_k is required by the known_k strategy and ignored otherwise.
  TurnPrediction predict(std::string_view dh, std::optional<int> known_k = std::nullopt) const;

  // Slots whose categorical index could not be built (shared first tokens);
  // they fall back to generation.
  const std::vector<SlotKey>& index_failures() const { return index_failures_; }

  const PipelineConfig& config() const { return config_; }

 private:
  DomainSet predict_domains(std::string_view dh, std::optional<int> known_k,
                            std::string* raw) const;

  const Ontology* ontology_;
  PipelineComponents components_;
  PipelineConfig config_;
  std::vector<Domain> vocab_;
  std::map<SlotKey, CategoricalIndex> indices_;
  std::vector<SlotKey> index_failures_;
};

BeliefState predict_belief_state(const BeliefStatePipeline& pipeline, std::string_view dh,
                                 std::optional<int> known_k = std::nullopt);

// Slot fine-tuning pairs. Per-slot datasets give one pair per example for
// its target slot; otherwise every slot of the gold domains is used, with
// "none" for unfilled slots.
TrainingPairs make_slot_training_pairs(const SampledDataset& dataset, const Ontology& ontology,
                                       const SlotPromptTable& table,
                                       const HistoryOptions& history = {});

// ---------------------------------------------------------------- dump

struct PredictionRecord {
  std::string dialogue_id;
  int turn_index = 0;
  TurnPrediction prediction;
};

nlohmann::json to_json(const PredictionRecord& record);
PredictionRecord record_from_json(const nlohmann::json& j, const Ontology& ontology);

std::string write_prediction_lines(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_prediction_lines(std::string_view text,
                                                    const Ontology& ontology);

}  // namespace promptdst
