#include "fixtures.hpp"

#include "promptdst/corpus.hpp"

namespace promptdst::testing {

using nlohmann::json;

std::filesystem::path data_dir() { return PROMPTDST_DATA_DIR; }
std::filesystem::path test_data_dir() { return PROMPTDST_TEST_DATA_DIR; }

const Ontology& ontology() {
  static const Ontology o = Ontology::load(data_dir() / "multiwoz22_schema.json");
  return o;
}

const PromptConfig& prompts() {
  static const PromptConfig p = PromptConfig::load(data_dir() / "prompts.json", ontology());
  return p;
}

std::vector<LabeledExample> e2e_examples() {
  return load_corpus(test_data_dir() / "e2e_dialogues.json", ontology());
}

DomainSet script_domains(const DomainSet& gold, DomainScript script) {
  if (script == DomainScript::gold) return gold;
  DomainSet out = gold;
  if (!out.empty()) out.erase(out.begin());  // std::set keeps ontology order
  for (Domain d : kAllDomains)
    if (!gold.count(d)) {
      out.insert(d);
      break;
    }
  return out;
}

json domain_generate_table(std::span<const LabeledExample> examples, const PromptConfig& prompts,
                           const HistoryOptions& history, DomainScript script) {
  json gen = json::array();
  for (const auto& ex : examples) {
    const auto names = domain_names(script_domains(ex.gold_domains, script));
    std::string text;
    for (const auto& n : names) text += (text.empty() ? "" : ", ") + n;
    gen.push_back({{"input", build_domain_qa_input(format_history(ex.history, history),
                                                   prompts.domain_question)},
                   {"output", text.empty() ? std::string(kNoneSentinel) : text}});
  }
  return {{"generate", gen}};
}

json slot_generate_table(std::span<const LabeledExample> examples, const Ontology& ontology,
                         const PromptConfig& prompts, const HistoryOptions& history) {
  json gen = json::array();
  for (const auto& ex : examples) {
    const std::string dh = format_history(ex.history, history);
    for (const SlotDef& slot : ontology.slots())
      gen.push_back({{"input", build_slot_input(dh, slot.key, prompts.slots)},
                     {"output", ex.gold_state.get(slot.key).value_or(std::string(kNoneSentinel))}});
  }
  return {{"generate", gen}};
}

}  // namespace promptdst::testing
