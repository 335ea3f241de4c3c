#pragma once

// Shared fixtures for the unit, acceptance and CLI tests.

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "promptdst/core_model.hpp"
#include "promptdst/prompting.hpp"

namespace promptdst::testing {

std::filesystem::path data_dir();       // shipped ontology, prompts, keywords
std::filesystem::path test_data_dir();  // tests/data

const Ontology& ontology();
const PromptConfig& prompts();

std::vector<LabeledExample> e2e_examples();

enum class DomainScript {
  gold,        // answer with the gold domains
  swap_first,  // drop the first gold domain, add the first non-gold one
};

DomainSet script_domains(const DomainSet& gold, DomainScript script);

// Mock tables answering the domain QA prompt and every slot prompt of every
// example from its gold labels. Slot prompts without a gold value answer "none".
nlohmann::json domain_generate_table(std::span<const LabeledExample> examples,
                                     const PromptConfig& prompts,
                                     const HistoryOptions& history, DomainScript script);
nlohmann::json slot_generate_table(std::span<const LabeledExample> examples,
                                   const Ontology& ontology, const PromptConfig& prompts,
                                   const HistoryOptions& history);

}  // namespace promptdst::testing
