#pragma once

// Prompt construction for masked domain prediction, the domain QA prompt,
// and the slot-to-question mapping.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptdst/core_model.hpp"

namespace promptdst {

// Backend-neutral mask spelling. Backends substitute their own mask token.
inline constexpr std::string_view kMaskPlaceholder = "[MASK]";
inline constexpr std::string_view kDomainQuestion = "What are the mentioned domains?";
// Marks where the dialogue history goes in catalog templates.
inline constexpr std::string_view kHistoryPlaceholder = "{DH}";

std::size_t count_placeholders(std::string_view text);

struct MaskedPromptFamily {
  // templates[k-1] holds exactly k placeholders.
  std::array<std::string, 4> templates;

  static MaskedPromptFamily defaults();
  // Throws Error(config) when a template has the wrong placeholder count.
  void validate() const;
  const std::string& for_k(int k) const;
};

class SlotPromptTable {
 public:
  SlotPromptTable() = default;
  explicit SlotPromptTable(std::map<SlotKey, std::string> entries)
      : entries_(std::move(entries)) {}

  // Every ontology slot has a prompt and each prompt ends with '?'.
  void validate(const Ontology& ontology) const;
  const std::string& at(const SlotKey& key) const;
  bool contains(const SlotKey& key) const { return entries_.count(key) != 0; }
  const std::map<SlotKey, std::string>& entries() const { return entries_; }

 private:
  std::map<SlotKey, std::string> entries_;
};

struct PromptCatalog {
  // Candidate domain prompts, best zero-shot first.
  std::vector<std::string> ranked_domain_prompts;

  std::string render(std::size_t rank, std::string_view dh) const;
};

// Everything the prompt catalog file carries.
struct PromptConfig {
  MaskedPromptFamily family;
  std::string domain_question{kDomainQuestion};
  SlotPromptTable slots;
  PromptCatalog catalog;

  static PromptConfig from_json(const nlohmann::json& j, const Ontology& ontology);
  static PromptConfig load(const std::filesystem::path& path,
                           const Ontology& ontology);
};

std::string build_masked_input(std::string_view dh, int k,
                               const MaskedPromptFamily& family);
std::string build_domain_qa_input(std::string_view dh,
                                  std::string_view question = kDomainQuestion);
std::string build_slot_input(std::string_view dh, const SlotKey& slot,
                             const SlotPromptTable& table);

}  // namespace promptdst
