#include "promptdst/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

namespace {

// Best-effort attribution of a parse failure to the dialogue being read.
std::string last_dialogue_id_before(std::string_view text, std::size_t offset) {
  static const std::regex re(R"re("dialogue_id"\s*:\s*"([^"]*)")re");
  const std::string prefix(text.substr(0, std::min(offset, text.size())));
  std::string last = "<none>";
  for (std::sregex_iterator it(prefix.begin(), prefix.end(), re), end;
       it != end; ++it)
    last = (*it)[1];
  return last;
}

LabeledExample make_example(const std::string& dialogue_id, int turn_index,
                            const std::vector<DialogueTurn>& turns_so_far,
                            const json& frames, const Ontology& ontology) {
  LabeledExample ex;
  ex.dialogue_id = dialogue_id;
  ex.turn_index = turn_index;
  ex.history = DialogueHistory(turns_so_far);
  for (const auto& frame : frames) {
    const auto service = frame.at("service").get<std::string>();
    const Domain domain = domain_from_string(service);
    const auto state = frame.find("state");
    if (state == frame.end()) continue;
    const auto slot_values = state->find("slot_values");
    if (slot_values == state->end()) continue;
    bool filled = false;
    for (const auto& [name, values] : slot_values->items()) {
      if (!values.is_array() || values.empty()) continue;
      SlotKey key = SlotKey::parse(name);
      if (key.domain != domain)
        throw Error(ErrorKind::ontology, "slot " + name + " listed under service " + service);
      if (!ontology.contains(key))
        throw Error(ErrorKind::ontology, "slot " + name + " not in ontology");
      const auto before = ex.gold_state.size();
      ex.gold_state.set(key, values.front().get<std::string>());
      filled = filled || ex.gold_state.size() > before;
    }
    if (filled) ex.gold_domains.insert(domain);
  }
  return ex;
}

}  // namespace

std::vector<LabeledExample> parse_corpus(std::string_view text,
                                         const Ontology& ontology) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse,
                "malformed dialogue JSON at byte " + std::to_string(e.byte) +
                    " (dialogue_id " + last_dialogue_id_before(text, e.byte) +
                    "): " + e.what());
  }
  if (!root.is_array())
    throw Error(ErrorKind::parse, "dialogue JSON must be a list of dialogues");

  std::vector<LabeledExample> out;
  for (const auto& dialogue : root) {
    std::string id = "<unknown>";
    try {
      id = dialogue.at("dialogue_id").get<std::string>();
      if (auto services = dialogue.find("services"); services != dialogue.end())
        for (const auto& s : *services) domain_from_string(s.get<std::string>());
      std::vector<DialogueTurn> turns;
      int position = 0;
      for (const auto& turn : dialogue.at("turns")) {
        const Speaker speaker =
            speaker_from_string(turn.at("speaker").get<std::string>());
        turns.emplace_back(speaker, turn.at("utterance").get<std::string>());
        if (speaker == Speaker::user) {
          static const json kNoFrames = json::array();
          auto frames = turn.find("frames");
          out.push_back(make_example(id, position, turns,
                                     frames == turn.end() ? kNoFrames : *frames,
                                     ontology));
        }
        ++position;
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, "dialogue " + id + ": " + e.what());
    } catch (const Error& e) {
      throw e.with_context("dialogue " + id);
    }
  }
  return out;
}

std::vector<LabeledExample> load_corpus(const std::filesystem::path& path,
                                        const Ontology& ontology) {
  try {
    return parse_corpus(detail::read_file(path), ontology);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

std::string write_example_lines(std::span<const LabeledExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}


std::vector<LabeledExample> read_example_lines(std::string_view text,
                                               const Ontology& ontology) {
  std::vector<LabeledExample> out;
  detail::for_each_json_line(text, [&](const json& j) {
    out.push_back(example_from_json(j, ontology));
  });
  return out;
}

// ---------------------------------------------------------------- sampling

Strata stratify_by_domain_count(std::span<const LabeledExample> examples) {
  Strata s;
  for (const auto& ex : examples) {
    const std::size_t k = ex.gold_domains.size();
    if (k == 0)
      ++s.discarded_zero;
    else if (k > 4)
      ++s.discarded_over_four;
    else
      s.by_k[k - 1].push_back(ex);
  }
  return s;
}

DomainDistribution::DomainDistribution(double p1, double p2, double p3, double p4)
    : p_{p1, p2, p3, p4} {
  double sum = 0.0;
  for (double p : p_) {
    if (!(p >= 0.0) || p > 1.0)
      throw Error(ErrorKind::invalid_argument,
                  "distribution entries must lie in [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_argument,
                "distribution must sum to 1 (got " + std::to_string(sum) + ")");
}

std::array<std::size_t, 4> largest_remainder_counts(
    std::size_t size, const DomainDistribution& dist) {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 4; ++i) {
    double quota = static_cast<double>(size) * dist.p()[i];
    // 128 * 0.25 must land on 32, not 31.999...
    if (std::abs(quota - std::round(quota)) < 1e-9) quota = std::round(quota);
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < size; ++i, ++assigned) ++counts[order[i % 4]];
  return counts;
}

SampledDataset sample_domain_dataset(std::span<const LabeledExample> examples,
                                     std::size_t size,
                                     const DomainDistribution& dist,
                                     std::uint64_t seed) {
  const Strata strata = stratify_by_domain_count(examples);
  const auto counts = largest_remainder_counts(size, dist);
  for (int k = 1; k <= 4; ++k) {
    const std::size_t have = strata.stratum(k).size();
    if (have < counts[k - 1])
      throw Error(ErrorKind::data,
                  "stratum " + std::to_string(k) + "-domain has " +
                      std::to_string(have) + " examples, needs " +
                      std::to_string(counts[k - 1]) + " (short by " +
                      std::to_string(counts[k - 1] - have) + ")");
  }

  SampledDataset ds;
  ds.seed = seed;
  ds.distribution = dist;
  ds.stratum_counts = counts;
  std::mt19937_64 rng(seed);
  for (int k = 1; k <= 4; ++k) {
    const auto& pool = strata.stratum(k);
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < counts[k - 1]; ++i)
      ds.examples.push_back(pool[idx[i]]);
  }
  return ds;
}

SampledDataset sample_slot_dataset(std::span<const LabeledExample> examples,
                                   const Ontology& ontology,
                                   std::size_t per_slot, std::uint64_t seed) {
  if (per_slot < 1)
    throw Error(ErrorKind::invalid_argument, "per_slot must be at least 1");
  SampledDataset ds;
  ds.seed = seed;
  ds.per_slot = per_slot;
  std::mt19937_64 rng(seed);
  for (const SlotDef& slot : ontology.slots()) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (examples[i].gold_state.get(slot.key)) pool.push_back(i);
    if (pool.empty()) {
      ds.skipped_slots.push_back(slot.key);
      continue;
    }
    if (pool.size() < per_slot) ds.short_slots.push_back(slot.key);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(per_slot, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      ds.examples.push_back(examples[pool[i]]);
      ds.target_slots.push_back(slot.key);
    }
  }
  return ds;
}

std::string write_dataset_lines(const SampledDataset& dataset) {
  std::string out;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    json j = to_json(dataset.examples[i]);
    if (i < dataset.target_slots.size())
      j["target_slot"] = dataset.target_slots[i].qualified();
    out += j.dump();
    out += '\n';
  }
  return out;
}

SampledDataset read_dataset_lines(std::string_view text,
                                  const Ontology& ontology) {
  SampledDataset ds;
  detail::for_each_json_line(text, [&](const json& j) {
    ds.examples.push_back(example_from_json(j, ontology));
    if (auto t = j.find("target_slot"); t != j.end())
      ds.target_slots.push_back(SlotKey::parse(t->get<std::string>()));
  });
  if (!ds.target_slots.empty() && ds.target_slots.size() != ds.examples.size())
    throw Error(ErrorKind::data, "dataset mixes targeted and untargeted lines");
  return ds;
}

}  // namespace promptdst
