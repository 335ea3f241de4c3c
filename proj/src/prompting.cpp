#include "promptdst/prompting.hpp"

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

std::size_t count_placeholders(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kMaskPlaceholder); pos != std::string_view::npos;
       pos = text.find(kMaskPlaceholder, pos + kMaskPlaceholder.size()))
    ++n;
  return n;
}

MaskedPromptFamily MaskedPromptFamily::defaults() {
  return MaskedPromptFamily{{
      "Excited to see the [MASK].",
      "Excited to see the [MASK] and [MASK].",
      "Excited to see the [MASK] and [MASK] and [MASK].",
      "Excited to see the [MASK] and [MASK] and [MASK] and [MASK].",
  }};
}

void MaskedPromptFamily::validate() const {
  for (int k = 1; k <= 4; ++k)
    if (count_placeholders(templates[k - 1]) != static_cast<std::size_t>(k))
      throw Error(ErrorKind::config, "masked template for k=" + std::to_string(k) +
                                         " must contain exactly " +
                                         std::to_string(k) + " placeholders");
}

const std::string& MaskedPromptFamily::for_k(int k) const {
  if (k < 1 || k > 4)
    throw Error(ErrorKind::range,
                "mask count " + std::to_string(k) + " outside 1..4");
  return templates[k - 1];
}

void SlotPromptTable::validate(const Ontology& ontology) const {
  for (const auto& slot : ontology.slots())
    if (!contains(slot.key))
      throw Error(ErrorKind::config, "no prompt for slot " + slot.key.qualified());
  for (const auto& [key, prompt] : entries_) {
    if (!ontology.contains(key))
      throw Error(ErrorKind::config, "prompt for unknown slot " + key.qualified());
    if (prompt.empty() || prompt.back() != '?')
      throw Error(ErrorKind::config,
                  "prompt for " + key.qualified() + " must end with '?'");
  }
}

const std::string& SlotPromptTable::at(const SlotKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw Error(ErrorKind::lookup, "no prompt for slot " + key.qualified());
  return it->second;
}

std::string PromptCatalog::render(std::size_t rank, std::string_view dh) const {
  if (rank >= ranked_domain_prompts.size())
    throw Error(ErrorKind::range, "catalog rank out of range");
  std::string out = ranked_domain_prompts[rank];
  const auto pos = out.find(kHistoryPlaceholder);
  if (pos == std::string::npos)
    throw Error(ErrorKind::config, "catalog entry lacks " +
                                       std::string(kHistoryPlaceholder));
  out.replace(pos, kHistoryPlaceholder.size(), dh);
  return out;
}

PromptConfig PromptConfig::from_json(const json& j, const Ontology& ontology) {
  PromptConfig cfg;
  try {
    const auto& masked = j.at("masked");
    for (int k = 1; k <= 4; ++k)
      cfg.family.templates[k - 1] = masked.at(std::to_string(k)).get<std::string>();
    cfg.domain_question = j.value("domain_question", std::string(kDomainQuestion));
    if (auto c = j.find("catalog"); c != j.end())
      cfg.catalog.ranked_domain_prompts = c->get<std::vector<std::string>>();
    std::map<SlotKey, std::string> slots;
    for (const auto& [name, q] : j.at("slots").items())
      slots.emplace(SlotKey::parse(name), q.get<std::string>());
    cfg.slots = SlotPromptTable(std::move(slots));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("prompt catalog: ") + e.what());
  }
  cfg.family.validate();
  cfg.slots.validate(ontology);
  return cfg;
}

PromptConfig PromptConfig::load(const std::filesystem::path& path,
                                const Ontology& ontology) {
  return from_json(detail::parse_json_file(path), ontology);
}

std::string build_masked_input(std::string_view dh, int k,
                               const MaskedPromptFamily& family) {
  const std::string& tmpl = family.for_k(k);
  std::string out(dh);
  out += ' ';
  out += tmpl;
  return out;
}

std::string build_domain_qa_input(std::string_view dh, std::string_view question) {
  if (detail::is_blank(dh))
    throw Error(ErrorKind::invalid_argument, "empty dialogue history");
  std::string out(dh);
  out += ' ';
  out += question;
  return out;
}

std::string build_slot_input(std::string_view dh, const SlotKey& slot,
                             const SlotPromptTable& table) {
  const std::string& prompt = table.at(slot);
  std::string out(dh);
  out += ' ';
  out += prompt;
  return out;
}

}  // namespace promptdst
