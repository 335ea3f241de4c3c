#include "promptdst/domain_predictor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

// ---------------------------------------------------------------- weights

void WgsWeights::validate() const {
  for (double v : w)
    if (!(v >= kMin && v <= kMax))
      throw Error(ErrorKind::range, "WGS weight " + std::to_string(v) +
                                        " outside [0.05, 1.0]");
}

WgsWeights WgsWeights::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  WgsWeights out;
  for (double& v : out.w)
    if (!(in >> v)) throw Error(ErrorKind::parse, "weights file needs 4 numbers");
  std::string extra;
  if (in >> extra) throw Error(ErrorKind::parse, "weights file has trailing content");
  out.validate();
  return out;
}

WgsWeights WgsWeights::load(const std::filesystem::path& path) {
  try {
    return parse(detail::read_file(path));
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

std::string WgsWeights::serialize() const {
  std::string out;
  char buf[40];
  for (double v : w) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------- WGS

WgsOutcome wgs_score(const GroupedPicks& picks, const WgsWeights& weights) {
  WgsOutcome out;
  for (int k = 1; k <= 4; ++k) {
    auto it = picks.find(k);
    if (it == picks.end())
      throw Error(ErrorKind::invalid_argument,
                  "missing " + std::to_string(k) + "-mask predictions");
    if (it->second.size() != static_cast<std::size_t>(k))
      throw Error(ErrorKind::invalid_argument,
                  std::to_string(k) + "-mask group holds " +
                      std::to_string(it->second.size()) + " picks");
    double sum = 0.0;
    for (const auto& p : it->second) {
      if (!(p.q >= 0.0 && p.q <= 1.0))
        throw Error(ErrorKind::invalid_argument, "mask score outside [0,1]");
      sum += p.q;
    }
    const double wk = weights[k];
    if (!(wk > 0.0)) throw Error(ErrorKind::invalid_argument, "WGS weight must be positive");
    out.scores[k - 1] = (1.0 / (k * wk)) * sum;
  }
  out.chosen_k = 1;
  for (int k = 2; k <= 4; ++k)
    if (out.scores[k - 1] > out.scores[out.chosen_k - 1]) out.chosen_k = k;
  for (const auto& p : picks.at(out.chosen_k)) out.domains.insert(p.domain);
  return out;
}

std::vector<ScoredDomain> top_picks(const MaskFillResult& result) {
  std::vector<ScoredDomain> out;
  for (std::size_t m = 0; m < result.per_mask.size(); ++m) {
    const auto& [name, q] = result.top1(m);
    out.push_back({domain_from_string(name), q});
  }
  return out;
}

namespace {

std::vector<std::string> vocab_names(std::span<const Domain> vocab) {
  if (vocab.empty()) throw Error(ErrorKind::invalid_argument, "empty domain vocabulary");
  std::vector<std::string> out;
  for (Domain d : vocab) out.emplace_back(to_string(d));
  return out;
}

}  // namespace

GroupedPicks collect_grouped_picks(const LmBackend& backend, std::string_view dh,
                                   const MaskedPromptFamily& family,
                                   std::span<const Domain> vocab) {
  const auto candidates = vocab_names(vocab);
  GroupedPicks picks;
  for (int k = 1; k <= 4; ++k)
    picks[k] = top_picks(backend.mask_fill(build_masked_input(dh, k, family), candidates));
  return picks;
}

DomainSet predict_domains_mlm(const LmBackend& backend, std::string_view dh,
                              const MaskedPromptFamily& family,
                              const WgsWeights& weights,
                              std::span<const Domain> vocab) {
  return wgs_score(collect_grouped_picks(backend, dh, family, vocab), weights).domains;
}

DomainSet predict_domains_mlm_known_k(const LmBackend& backend, std::string_view dh,
                                      const MaskedPromptFamily& family, int k,
                                      std::span<const Domain> vocab) {
  const std::string input = build_masked_input(dh, k, family);
  const auto candidates = vocab_names(vocab);
  DomainSet out;
  for (const auto& p : top_picks(backend.mask_fill(input, candidates))) out.insert(p.domain);
  return out;
}

// ---------------------------------------------------------------- GA

void GaConfig::validate() const {
  if (population_size < 2)
    throw Error(ErrorKind::invalid_argument, "population_size must be at least 2");
  if (generations < 0) throw Error(ErrorKind::invalid_argument, "generations must be >= 0");
  if (elitism_count < 0 || elitism_count >= population_size)
    throw Error(ErrorKind::invalid_argument, "elitism_count must be < population_size");
  for (double r : {mutation_rate, crossover_rate})
    if (!(r >= 0.0 && r <= 1.0))
      throw Error(ErrorKind::invalid_argument, "GA rates must lie in [0,1]");
  if (!(mutation_sigma > 0.0))
    throw Error(ErrorKind::invalid_argument, "mutation_sigma must be positive");
  if (tournament_size < 1)
    throw Error(ErrorKind::invalid_argument, "tournament_size must be positive");
}

GaResult optimize_weights(const FitnessFn& fitness, const GaConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> gene(WgsWeights::kMin, WgsWeights::kMax);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, config.mutation_sigma);
  std::uniform_int_distribution<int> pick(0, config.population_size - 1);

  const auto n = static_cast<std::size_t>(config.population_size);
  std::vector<WeightVector> pop(n);
  for (auto& ind : pop)
    for (double& g : ind) g = gene(rng);
  std::vector<double> fit(n);
  for (std::size_t i = 0; i < n; ++i) fit[i] = fitness(pop[i]);

  GaResult result;
  result.initial_fitness = fit;
  std::size_t best0 = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (fit[i] > fit[best0]) best0 = i;
  result.best.w = pop[best0];
  result.best_fitness = fit[best0];
  result.best_fitness_per_generation.push_back(result.best_fitness);

  auto tournament = [&]() -> const WeightVector& {
    int best = pick(rng);
    for (int t = 1; t < config.tournament_size; ++t) {
      const int c = pick(rng);
      if (fit[c] > fit[best]) best = c;
    }
    return pop[best];
  };

  for (int gen = 0; gen < config.generations; ++gen) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });

    std::vector<WeightVector> next;
    std::vector<double> next_fit;
    next.reserve(n);
    for (int e = 0; e < config.elitism_count; ++e) {
      next.push_back(pop[order[e]]);
      next_fit.push_back(fit[order[e]]);
    }
    while (next.size() < n) {
      const WeightVector& a = tournament();
      const WeightVector& b = tournament();
      WeightVector child = a;
      if (unit(rng) < config.crossover_rate)
        for (int g = 0; g < 4; ++g)
          if (unit(rng) < 0.5) child[g] = b[g];
      for (double& g : child)
        if (unit(rng) < config.mutation_rate)
          g = std::clamp(g + noise(rng), WgsWeights::kMin, WgsWeights::kMax);
      next.push_back(child);
      next_fit.push_back(std::nan(""));
    }
    for (std::size_t i = static_cast<std::size_t>(config.elitism_count); i < n; ++i)
      next_fit[i] = fitness(next[i]);
    pop = std::move(next);
    fit = std::move(next_fit);
    for (std::size_t i = 0; i < n; ++i)
      if (fit[i] > result.best_fitness) {
        result.best_fitness = fit[i];
        result.best.w = pop[i];
      }
    result.best_fitness_per_generation.push_back(result.best_fitness);
  }
  return result;
}

double wgs_full_accuracy(std::span<const GroupedPicks> picks,
                         std::span<const DomainSet> golds, const WeightVector& w) {
  if (picks.size() != golds.size() || picks.empty())
    throw Error(ErrorKind::invalid_argument, "fitness needs aligned, non-empty inputs");
  const WgsWeights weights{w};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < picks.size(); ++i)
    if (wgs_score(picks[i], weights).domains == golds[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(picks.size());
}

GaResult learn_weights_ga(std::span<const LabeledExample> train,
                          const LmBackend& backend,
                          const MaskedPromptFamily& family,
                          std::span<const Domain> vocab, const GaConfig& config,
                          const HistoryOptions& history) {
  if (train.empty()) throw Error(ErrorKind::invalid_argument, "empty training set");
  config.validate();
  std::vector<GroupedPicks> cache;
  std::vector<DomainSet> golds;
  cache.reserve(train.size());
  for (const auto& ex : train) {
    cache.push_back(
        collect_grouped_picks(backend, format_history(ex.history, history), family, vocab));
    golds.push_back(ex.gold_domains);
  }
  return optimize_weights(
      [&](const WeightVector& w) { return wgs_full_accuracy(cache, golds, w); }, config);
}

// ---------------------------------------------------------------- CLM

DomainSet parse_domain_generation(std::string_view text) {
  std::string cleaned = detail::to_lower(text);
  for (char& c : cleaned)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = ' ';
  DomainSet out;
  for (const auto& tok : detail::split_whitespace(cleaned))
    if (auto d = parse_domain(tok)) out.insert(*d);
  return out;
}

DomainSet predict_domains_clm(const LmBackend& backend, std::string_view dh,
                              const GenerateOptions& options, std::string* raw_generation) {
  const GenerationResult gen = backend.generate(build_domain_qa_input(dh), options);
  if (raw_generation) *raw_generation = gen.text;
  return parse_domain_generation(gen.text);
}

namespace {

std::string example_tag(const LabeledExample& ex) {
  return ex.dialogue_id + "#" + std::to_string(ex.turn_index);
}

}  // namespace

TrainingPairs make_clm_training_pairs(std::span<const LabeledExample> examples,
                                      const HistoryOptions& history,
                                      std::string_view question) {
  TrainingPairs out;
  for (const auto& ex : examples) {
    if (ex.gold_domains.empty()) {
      out.skipped.push_back(example_tag(ex));
      continue;
    }
    out.pairs.push_back({build_domain_qa_input(format_history(ex.history, history), question),
                         detail::join(domain_names(ex.gold_domains), ", "), true});
  }
  return out;
}

TrainingPairs make_mlm_training_pairs(std::span<const LabeledExample> examples,
                                      const MaskedPromptFamily& family,
                                      const HistoryOptions& history) {
  TrainingPairs out;
  for (const auto& ex : examples) {
    const auto k = ex.gold_domains.size();
    if (k == 0 || k > 4) {
      out.skipped.push_back(example_tag(ex));
      continue;
    }
    out.pairs.push_back({build_masked_input(format_history(ex.history, history),
                                            static_cast<int>(k), family),
                         detail::join(domain_names(ex.gold_domains), " "), false});
  }
  return out;
}

// ---------------------------------------------------------------- keywords

KeywordTable::KeywordTable(std::map<Domain, std::vector<std::string>> entries)
    : entries_(std::move(entries)) {
  for (const auto& [d, words] : entries_)
    for (const auto& w : words) {
      if (w.empty() || detail::trim(w) != w || detail::to_lower(w) != w)
        throw Error(ErrorKind::config, "keyword '" + w + "' for " + std::string(to_string(d)) +
                                           " must be non-empty, trimmed and lower-case");
    }
}

KeywordTable KeywordTable::from_json(const json& j) {
  std::map<Domain, std::vector<std::string>> entries;
  try {
    for (const auto& [name, words] : j.items())
      entries[domain_from_string(name)] = words.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("keyword table: ") + e.what());
  }
  return KeywordTable(std::move(entries));
}

KeywordTable KeywordTable::load(const std::filesystem::path& path) {
  return from_json(detail::parse_json_file(path));
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool contains_keyword(const std::string& text, const std::string& kw, bool allow_stems) {
  for (auto pos = text.find(kw); pos != std::string::npos; pos = text.find(kw, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const std::size_t end = pos + kw.size();
    const bool right_ok = allow_stems || end == text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

}  // namespace

DomainSet keyword_classify(std::string_view dh, const KeywordTable& table,
                           const KeywordOptions& options) {
  const std::string text = detail::to_lower(dh);
  DomainSet out;
  for (const auto& [domain, words] : table.entries())
    for (const auto& w : words)
      if (contains_keyword(text, w, options.allow_prefix_stems)) {
        out.insert(domain);
        break;
      }
  return out;
}

}  // namespace promptdst
