#pragma once

// Stage 1: predict the set of domains mentioned in a dialogue history.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptdst/core_model.hpp"
#include "promptdst/corpus.hpp"
#include "promptdst/lm_backend.hpp"
#include "promptdst/prompting.hpp"

namespace promptdst {

struct WgsWeights {
  static constexpr double kMin = 0.05;
  static constexpr double kMax = 1.0;

  std::array<double, 4> w{0.35, 0.35, 0.35, 0.8};

  double operator[](int k) const { return w.at(k - 1); }
  void validate() const;

  // Four decimal numbers, one per line, w_1 first.
  static WgsWeights load(const std::filesystem::path& path);
  static WgsWeights parse(std::string_view text);
  std::string serialize() const;
};

struct ScoredDomain {
  Domain domain;
  double q;  // restricted-softmax score of the mask's top pick
};

// D_k: the k mask-wise top-1 picks of the k-mask prompt, before dedup.
using GroupedPicks = std::map<int, std::vector<ScoredDomain>>;

struct WgsOutcome {
  std::array<double, 4> scores{};  // S_1..S_4
  int chosen_k = 1;
  DomainSet domains;
};

// S_k = (1 / (k * w_k)) * sum_{d in D_k} q(d), summing before dedup;
// argmax over k with ties going to the smaller k.
WgsOutcome wgs_score(const GroupedPicks& picks, const WgsWeights& weights);

std::vector<ScoredDomain> top_picks(const MaskFillResult& result);

// Runs the 1..4-mask prompts and collects the per-mask top picks.
GroupedPicks collect_grouped_picks(const LmBackend& backend, std::string_view dh,
                                   const MaskedPromptFamily& family,
                                   std::span<const Domain> vocab);

DomainSet predict_domains_mlm(const LmBackend& backend, std::string_view dh,
                              const MaskedPromptFamily& family,
                              const WgsWeights& weights,
                              std::span<const Domain> vocab);

DomainSet predict_domains_mlm_known_k(const LmBackend& backend, std::string_view dh,
                                      const MaskedPromptFamily& family, int k,
                                      std::span<const Domain> vocab);

// ---------------------------------------------------------------- GA

struct GaConfig {
  int population_size = 40;
  int generations = 60;
  double mutation_rate = 0.2;
  double mutation_sigma = 0.1;
  double crossover_rate = 0.7;
  int elitism_count = 2;
  int tournament_size = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

using WeightVector = std::array<double, 4>;
using FitnessFn = std::function<double(const WeightVector&)>;

struct GaResult {
  WgsWeights best;
  double best_fitness = 0.0;
  std::vector<double> initial_fitness;
  std::vector<double> best_fitness_per_generation;  // index 0 = initial population
};

// Generational GA over [0.05, 1]^4: tournament selection, uniform
// crossover, Gaussian mutation clipped to the box, elitism. Returns the
// best individual ever evaluated. Deterministic for a given seed.
GaResult optimize_weights(const FitnessFn& fitness, const GaConfig& config);

// Fitness = full accuracy of WGS prediction on the training set, computed
// from mask-fill scores fetched once per example.
GaResult learn_weights_ga(std::span<const LabeledExample> train,
                          const LmBackend& backend,
                          const MaskedPromptFamily& family,
                          std::span<const Domain> vocab, const GaConfig& config,
                          const HistoryOptions& history = {});

// Fitness used by learn_weights_ga, exposed for tests and tooling.
double wgs_full_accuracy(std::span<const GroupedPicks> picks,
                         std::span<const DomainSet> golds, const WeightVector& w);

// ---------------------------------------------------------------- CLM

// Split on commas, "and" and whitespace, lower-case, keep ontology names.
DomainSet parse_domain_generation(std::string_view text);

DomainSet predict_domains_clm(const LmBackend& backend, std::string_view dh,
                              const GenerateOptions& options = {},
                              std::string* raw_generation = nullptr);

struct TrainingPairs {
  std::vector<TrainingPair> pairs;
  std::vector<std::string> skipped;  // "dialogue_id#turn"
};

// input = QA prompt; target = gold domains in ontology order joined by ", ".
TrainingPairs make_clm_training_pairs(std::span<const LabeledExample> examples,
                                      const HistoryOptions& history = {},
                                      std::string_view question = kDomainQuestion);

// input = |gold|-mask prompt; target = gold domain names, one per mask.
TrainingPairs make_mlm_training_pairs(std::span<const LabeledExample> examples,
                                      const MaskedPromptFamily& family,
                                      const HistoryOptions& history = {});

// ---------------------------------------------------------------- keywords

class KeywordTable {
 public:
  KeywordTable() = default;
  // Throws Error(config) on blank, non-lower-case or untrimmed keywords.
  explicit KeywordTable(std::map<Domain, std::vector<std::string>> entries);

  static KeywordTable from_json(const nlohmann::json& j);
  static KeywordTable load(const std::filesystem::path& path);

  const std::map<Domain, std::vector<std::string>>& entries() const { return entries_; }

 private:
  std::map<Domain, std::vector<std::string>> entries_;
};

struct KeywordOptions {
  // When set, "hotel" also matches "hotels".
  bool allow_prefix_stems = false;
};

DomainSet keyword_classify(std::string_view dh, const KeywordTable& table,
                           const KeywordOptions& options = {});

}  // namespace promptdst
