#include "promptdst/slot_predictor.hpp"

#include <algorithm>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

// ---------------------------------------------------------------- categorical

CategoricalIndex::CategoricalIndex(const SlotDef& slot,
                                   std::map<std::string, std::string> value_to_token)
    : values_(slot.categorical_values), to_token_(std::move(value_to_token)) {
  if (!slot.is_categorical || values_.empty())
    throw Error(ErrorKind::invalid_argument, slot.key.qualified() + " is not categorical");
  for (const auto& v : values_) {
    auto it = to_token_.find(v);
    if (it == to_token_.end())
      throw Error(ErrorKind::invalid_argument, "no first token for value '" + v + "'");
    auto [pos, inserted] = to_value_.emplace(it->second, v);
    if (!inserted)
      throw Error(ErrorKind::invalid_argument,
                  slot.key.qualified() + ": values '" + pos->second + "' and '" + v +
                      "' share first token '" + it->second + "'");
  }
}

CategoricalIndex CategoricalIndex::build(const SlotDef& slot, const LmBackend& backend) {
  std::map<std::string, std::string> tokens;
  for (const auto& v : slot.categorical_values) tokens[v] = backend.first_token_of(v);
  return CategoricalIndex(slot, std::move(tokens));
}

const std::string& CategoricalIndex::token_of(const std::string& value) const {
  auto it = to_token_.find(value);
  if (it == to_token_.end()) throw Error(ErrorKind::lookup, "unknown value '" + value + "'");
  return it->second;
}

const std::string& CategoricalIndex::value_of(const std::string& token) const {
  auto it = to_value_.find(token);
  if (it == to_value_.end()) throw Error(ErrorKind::lookup, "unknown token '" + token + "'");
  return it->second;
}

std::optional<std::string> predict_slot_value(const LmBackend& backend, std::string_view dh,
                                              const SlotDef& slot,
                                              const SlotPromptTable& table,
                                              const GenerateOptions& options,
                                              std::string* raw_generation) {
  const GenerationResult gen = backend.generate(build_slot_input(dh, slot.key, table), options);
  if (raw_generation) *raw_generation = gen.text;
  std::string value = detail::trim(gen.text);
  if (value.empty() || value == kNoneSentinel) return std::nullopt;
  return value;
}

CategoricalPrediction predict_categorical(const LmBackend& backend, std::string_view dh,
                                          const SlotDef& slot, const SlotPromptTable& table,
                                          const CategoricalIndex& index) {
  std::vector<std::string> tokens;
  for (const auto& v : index.values()) tokens.push_back(index.token_of(v));
  const auto raw =
      backend.first_token_distribution(build_slot_input(dh, slot.key, table), tokens);

  double z = 0.0;
  for (const auto& t : tokens) z += raw.at(t);
  if (!(z > 0.0))
    throw Error(ErrorKind::numeric,
                "degenerate distribution for " + slot.key.qualified());

  CategoricalPrediction out;
  std::size_t best = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double p = raw.at(tokens[i]) / z;
    out.distribution.emplace_back(index.values()[i], p);
    if (p > out.distribution[best].second) best = i;
  }
  out.value = out.distribution[best].first;
  out.probability = out.distribution[best].second;
  return out;
}

// ---------------------------------------------------------------- pipeline

std::string_view to_string(DomainStrategy s) {
  switch (s) {
    case DomainStrategy::mlm_wgs: return "mlm_wgs";
    case DomainStrategy::clm: return "clm";
    case DomainStrategy::known_k: return "known_k";
    case DomainStrategy::keyword: return "keyword";
  }
  return "?";
}

DomainStrategy domain_strategy_from_string(std::string_view s) {
  for (auto v : {DomainStrategy::mlm_wgs, DomainStrategy::clm, DomainStrategy::known_k,
                 DomainStrategy::keyword})
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::config, "unknown domain strategy '" + std::string(s) + "'");
}

std::string_view to_string(SlotMode m) {
  return m == SlotMode::generative ? "generative" : "categorical_when_available";
}

SlotMode slot_mode_from_string(std::string_view s) {
  for (auto v : {SlotMode::generative, SlotMode::categorical_when_available})
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::config, "unknown slot mode '" + std::string(s) + "'");
}

BeliefStatePipeline::BeliefStatePipeline(const Ontology& ontology,
                                         PipelineComponents components,
                                         PipelineConfig config)
    : ontology_(&ontology), components_(std::move(components)), config_(config) {
  config_.generation.validate();
  const bool needs_domain_backend = config_.strategy != DomainStrategy::keyword;
  if (needs_domain_backend && !components_.domain_backend)
    throw Error(ErrorKind::config, "domain strategy " +
                                       std::string(to_string(config_.strategy)) +
                                       " needs a domain backend");
  if (!components_.slot_backend) throw Error(ErrorKind::config, "no slot backend");
  if (config_.strategy == DomainStrategy::mlm_wgs) config_.weights.validate();
  for (Domain d : ontology.domains()) vocab_.push_back(d);

  if (config_.slot_mode == SlotMode::categorical_when_available)
    for (const auto& slot : ontology.slots()) {
      if (!slot.is_categorical) continue;
      try {
        indices_.emplace(slot.key, CategoricalIndex::build(slot, *components_.slot_backend));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::invalid_argument) throw;
        index_failures_.push_back(slot.key);
      }
    }
}

DomainSet BeliefStatePipeline::predict_domains(std::string_view dh,
                                               std::optional<int> known_k,
                                               std::string* raw) const {
  const auto& family = components_.prompts.family;
  switch (config_.strategy) {
    case DomainStrategy::mlm_wgs:
      return predict_domains_mlm(*components_.domain_backend, dh, family, config_.weights,
                                 vocab_);
    case DomainStrategy::known_k:
      if (!known_k)
        throw Error(ErrorKind::invalid_argument, "known_k strategy needs the domain count");
      return predict_domains_mlm_known_k(*components_.domain_backend, dh, family, *known_k,
                                         vocab_);
    case DomainStrategy::clm: {
      const GenerationResult gen = components_.domain_backend->generate(
          build_domain_qa_input(dh, components_.prompts.domain_question), config_.generation);
      if (raw) *raw = gen.text;
      return parse_domain_generation(gen.text);
    }
    case DomainStrategy::keyword:
      return keyword_classify(dh, components_.keywords, config_.keyword);
  }
  return {};
}

TurnPrediction BeliefStatePipeline::predict(std::string_view dh,
                                            std::optional<int> known_k) const {
  TurnPrediction out;
  try {
    out.domains = predict_domains(dh, known_k, &out.domain_raw);
  } catch (const Error& e) {
    throw e.with_context("domain prediction");
  }

  const LmBackend& backend = *components_.slot_backend;
  const auto& table = components_.prompts.slots;
  for (const SlotDef& slot : ontology_->slots()) {
    if (!config_.all_slots && !out.domains.count(slot.key.domain)) continue;
    try {
      auto idx = indices_.find(slot.key);
      if (idx != indices_.end()) {
        auto cat = predict_categorical(backend, dh, slot, table, idx->second);
        out.raw_generations[slot.key] = cat.value;
        out.categorical[slot.key] = std::move(cat.distribution);
        out.state.set(slot.key, cat.value);
      } else {
        std::string raw;
        auto value = predict_slot_value(backend, dh, slot, table, config_.generation, &raw);
        out.raw_generations[slot.key] = std::move(raw);
        if (value) out.state.set(slot.key, *value);
      }
    } catch (const Error& e) {
      throw e.with_context("slot prediction (" + slot.key.qualified() + ")");
    }
  }

  std::map<std::string, int> seen;
  for (const auto& [k, v] : out.state.entries()) ++seen[v];
  for (const auto& [v, n] : seen)
    if (n > 1) out.duplicate_values += n;
  return out;
}

BeliefState predict_belief_state(const BeliefStatePipeline& pipeline, std::string_view dh,
                                 std::optional<int> known_k) {
  return pipeline.predict(dh, known_k).state;
}

TrainingPairs make_slot_training_pairs(const SampledDataset& dataset, const Ontology& ontology,
                                       const SlotPromptTable& table,
                                       const HistoryOptions& history) {
  TrainingPairs out;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    const std::string dh = format_history(ex.history, history);
    if (!dataset.target_slots.empty()) {
      const SlotKey& key = dataset.target_slots[i];
      out.pairs.push_back({build_slot_input(dh, key, table),
                           ex.gold_state.get(key).value_or(std::string(kNoneSentinel)), true});
      continue;
    }
    if (ex.gold_domains.empty()) {
      out.skipped.push_back(ex.dialogue_id + "#" + std::to_string(ex.turn_index));
      continue;
    }
    for (const SlotDef& slot : ontology.slots()) {
      if (!ex.gold_domains.count(slot.key.domain)) continue;
      out.pairs.push_back({build_slot_input(dh, slot.key, table),
                           ex.gold_state.get(slot.key).value_or(std::string(kNoneSentinel)),
                           true});
    }
  }
  return out;
}

// ---------------------------------------------------------------- dump

json to_json(const PredictionRecord& record) {
  const TurnPrediction& p = record.prediction;
  json raw = json::object();
  for (const auto& [k, v] : p.raw_generations) raw[k.qualified()] = v;
  json cat = json::object();
  for (const auto& [k, dist] : p.categorical) {
    json d = json::object();
    for (const auto& [value, prob] : dist) d[value] = prob;
    cat[k.qualified()] = std::move(d);
  }
  json state = json::object();
  for (const auto& [k, v] : p.state.entries()) state[k.qualified()] = v;
  return json{{"dialogue_id", record.dialogue_id},
              {"turn_index", record.turn_index},
              {"predicted_domains", domain_names(p.domains)},
              {"domain_generation", p.domain_raw},
              {"raw_generations", std::move(raw)},
              {"categorical", std::move(cat)},
              {"state", std::move(state)},
              {"duplicate_values", p.duplicate_values}};
}

PredictionRecord record_from_json(const json& j, const Ontology& ontology) {
  PredictionRecord r;
  try {
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    r.turn_index = j.at("turn_index").get<int>();
    for (const auto& d : j.at("predicted_domains"))
      r.prediction.domains.insert(domain_from_string(d.get<std::string>()));
    r.prediction.domain_raw = j.value("domain_generation", std::string());
    if (auto raw = j.find("raw_generations"); raw != j.end())
      for (const auto& [k, v] : raw->items())
        r.prediction.raw_generations[SlotKey::parse(k)] = v.get<std::string>();
    if (auto cat = j.find("categorical"); cat != j.end())
      for (const auto& [k, dist] : cat->items()) {
        auto& out = r.prediction.categorical[SlotKey::parse(k)];
        for (const auto& [value, prob] : dist.items()) out.emplace_back(value, prob.get<double>());
      }
    for (const auto& [k, v] : j.at("state").items())
      r.prediction.state.set(SlotKey::parse(k), v.get<std::string>());
    r.prediction.duplicate_values = j.value("duplicate_values", 0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("prediction record: ") + e.what());
  }
  r.prediction.state.check_against(ontology);
  return r;
}

std::string write_prediction_lines(std::span<const PredictionRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> read_prediction_lines(std::string_view text,
                                                    const Ontology& ontology) {
  std::vector<PredictionRecord> out;
  detail::for_each_json_line(text, [&](const json& j) {
    out.push_back(record_from_json(j, ontology));
  });
  return out;
}

}  // namespace promptdst
