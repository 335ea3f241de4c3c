#include "promptdst/core_model.hpp"

#include <algorithm>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 8> kDomainNames = {
    "restaurant", "train", "attraction", "hotel",
    "taxi",       "hospital", "police",  "bus",
};

constexpr std::string_view kUserTag = "USER: ";
constexpr std::string_view kSystemTag = "SYSTEM: ";

}  // namespace

std::string_view to_string(Domain d) {
  return kDomainNames[static_cast<std::size_t>(d)];
}

std::optional<Domain> parse_domain(std::string_view name) {
  for (std::size_t i = 0; i < kDomainNames.size(); ++i)
    if (kDomainNames[i] == name) return static_cast<Domain>(i);
  return std::nullopt;
}

Domain domain_from_string(std::string_view name) {
  if (auto d = parse_domain(name)) return *d;
  throw Error(ErrorKind::ontology, "unknown domain '" + std::string(name) + "'");
}

std::vector<std::string> domain_names(const DomainSet& domains) {
  std::vector<std::string> out;
  out.reserve(domains.size());
  for (Domain d : domains) out.emplace_back(to_string(d));
  return out;
}

std::string SlotKey::qualified() const {
  return std::string(to_string(domain)) + "-" + slot;
}

SlotKey SlotKey::parse(std::string_view qualified) {
  const auto dash = qualified.find('-');
  if (dash == std::string_view::npos || dash + 1 >= qualified.size())
    throw Error(ErrorKind::ontology,
                "malformed slot name '" + std::string(qualified) + "'");
  return SlotKey{domain_from_string(qualified.substr(0, dash)),
                 std::string(qualified.substr(dash + 1))};
}

// ---------------------------------------------------------------- Ontology

Ontology::Ontology(std::vector<SlotDef> slots) : slots_(std::move(slots)) {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const SlotDef& s = slots_[i];
    if (s.key.slot.empty())
      throw Error(ErrorKind::ontology, "slot with empty name");
    if (!index_.emplace(s.key, i).second)
      throw Error(ErrorKind::ontology,
                  "duplicate slot " + s.key.qualified());
    if (s.is_categorical) {
      if (s.categorical_values.empty())
        throw Error(ErrorKind::ontology, "categorical slot " +
                                             s.key.qualified() +
                                             " has no values");
      std::set<std::string> seen(s.categorical_values.begin(),
                                 s.categorical_values.end());
      if (seen.size() != s.categorical_values.size())
        throw Error(ErrorKind::ontology, "categorical slot " +
                                             s.key.qualified() +
                                             " has duplicate values");
    }
  }
}

Ontology Ontology::from_json(const json& schema) {
  if (!schema.is_array())
    throw Error(ErrorKind::parse, "ontology schema must be a list of services");
  std::vector<SlotDef> slots;
  try {
    for (const auto& service : schema) {
      const auto name = service.at("service_name").get<std::string>();
      const Domain domain = domain_from_string(name);
      const std::string prefix = name + "-";
      for (const auto& js : service.at("slots")) {
        SlotDef def;
        std::string slot_name = js.at("name").get<std::string>();
        if (slot_name.starts_with(prefix)) slot_name.erase(0, prefix.size());
        def.key = SlotKey{domain, slot_name};
        def.is_categorical = js.value("is_categorical", false);
        def.description = js.value("description", std::string());
        if (def.is_categorical)
          def.categorical_values =
              js.at("possible_values").get<std::vector<std::string>>();
        slots.push_back(std::move(def));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("ontology schema: ") + e.what());
  }
  return Ontology(std::move(slots));
}

Ontology Ontology::load(const std::filesystem::path& path) {
  return from_json(detail::parse_json_file(path));
}

const SlotDef* Ontology::find(const SlotKey& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &slots_[it->second];
}

const SlotDef& Ontology::at(const SlotKey& key) const {
  if (const SlotDef* s = find(key)) return *s;
  throw Error(ErrorKind::lookup, "slot " + key.qualified() + " not in ontology");
}

std::vector<const SlotDef*> Ontology::slots_of(Domain d) const {
  std::vector<const SlotDef*> out;
  for (const auto& s : slots_)
    if (s.key.domain == d) out.push_back(&s);
  return out;
}

DomainSet Ontology::domains() const {
  DomainSet out;
  for (const auto& s : slots_) out.insert(s.key.domain);
  return out;
}

// ---------------------------------------------------------------- dialogue

std::string_view to_string(Speaker s) {
  return s == Speaker::user ? "USER" : "SYSTEM";
}

Speaker speaker_from_string(std::string_view s) {
  if (s == "USER") return Speaker::user;
  if (s == "SYSTEM") return Speaker::system;
  throw Error(ErrorKind::parse, "unknown speaker '" + std::string(s) + "'");
}

DialogueTurn::DialogueTurn(Speaker speaker, std::string utterance)
    : speaker_(speaker), utterance_(std::move(utterance)) {
  if (detail::is_blank(utterance_))
    throw Error(ErrorKind::invalid_argument, "empty utterance");
}

DialogueHistory DialogueHistory::truncated_front(std::size_t max_turns) const {
  if (max_turns == 0 || turns_.size() <= max_turns) return *this;
  return DialogueHistory(std::vector<DialogueTurn>(
      turns_.end() - static_cast<std::ptrdiff_t>(max_turns), turns_.end()));
}

DialogueHistory DialogueHistory::user_turns_only() const {
  std::vector<DialogueTurn> kept;
  for (const auto& t : turns_)
    if (t.speaker() == Speaker::user) kept.push_back(t);
  return DialogueHistory(std::move(kept));
}

std::string render_history(const DialogueHistory& history, HistoryStyle style) {
  if (history.empty())
    throw Error(ErrorKind::invalid_argument, "empty dialogue history");
  std::string out;
  for (const auto& turn : history.turns()) {
    if (!out.empty()) out += ' ';
    if (style == HistoryStyle::speaker_tagged)
      out += turn.speaker() == Speaker::user ? kUserTag : kSystemTag;
    out += detail::trim(turn.utterance());
  }
  return out;
}

DialogueHistory parse_tagged_history(std::string_view text) {
  struct Mark {
    std::size_t pos;
    Speaker speaker;
    std::size_t len;
  };
  std::vector<Mark> marks;
  for (std::size_t p = 0; p < text.size(); ++p) {
    if (p != 0 && text[p - 1] != ' ') continue;
    const auto rest = text.substr(p);
    if (rest.starts_with(kUserTag))
      marks.push_back({p, Speaker::user, kUserTag.size()});
    else if (rest.starts_with(kSystemTag))
      marks.push_back({p, Speaker::system, kSystemTag.size()});
  }
  if (marks.empty() || marks.front().pos != 0)
    throw Error(ErrorKind::parse, "tagged history must start with a speaker tag");
  std::vector<DialogueTurn> turns;
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const std::size_t begin = marks[i].pos + marks[i].len;
    const std::size_t end = i + 1 < marks.size() ? marks[i + 1].pos : text.size();
    turns.emplace_back(marks[i].speaker,
                       detail::trim(text.substr(begin, end - begin)));
  }
  return DialogueHistory(std::move(turns));
}

std::string format_history(const DialogueHistory& history,
                           const HistoryOptions& options) {
  DialogueHistory h =
      options.include_system_turns ? history : history.user_turns_only();
  return render_history(h.truncated_front(options.max_turns), options.style);
}

// ---------------------------------------------------------------- belief state

void BeliefState::set(const SlotKey& key, std::string value) {
  value = detail::trim(value);
  if (value.empty() || value == kNoneSentinel) {
    entries_.erase(key);
    return;
  }
  entries_[key] = std::move(value);
}

std::optional<std::string> BeliefState::get(const SlotKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

DomainSet BeliefState::domains() const {
  DomainSet out;
  for (const auto& [k, v] : entries_) out.insert(k.domain);
  return out;
}

void BeliefState::check_against(const Ontology& ontology) const {
  for (const auto& [k, v] : entries_)
    if (!ontology.contains(k))
      throw Error(ErrorKind::ontology,
                  "belief state slot " + k.qualified() + " not in ontology");
}

// ---------------------------------------------------------------- JSON

json to_json(const LabeledExample& ex) {
  json history = json::array();
  for (const auto& t : ex.history.turns())
    history.push_back({{"speaker", to_string(t.speaker())},
                       {"utterance", t.utterance()}});
  json state = json::object();
  for (const auto& [k, v] : ex.gold_state.entries()) state[k.qualified()] = v;
  return json{{"dialogue_id", ex.dialogue_id},
              {"turn_index", ex.turn_index},
              {"history", std::move(history)},
              {"gold_domains", domain_names(ex.gold_domains)},
              {"gold_state", std::move(state)}};
}

LabeledExample example_from_json(const json& j, const Ontology& ontology) {
  LabeledExample ex;
  try {
    ex.dialogue_id = j.at("dialogue_id").get<std::string>();
    ex.turn_index = j.at("turn_index").get<int>();
    std::vector<DialogueTurn> turns;
    for (const auto& t : j.at("history"))
      turns.emplace_back(speaker_from_string(t.at("speaker").get<std::string>()),
                         t.at("utterance").get<std::string>());
    ex.history = DialogueHistory(std::move(turns));
    for (const auto& d : j.at("gold_domains"))
      ex.gold_domains.insert(domain_from_string(d.get<std::string>()));
    for (const auto& [k, v] : j.at("gold_state").items())
      ex.gold_state.set(SlotKey::parse(k), v.get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "example record: " + std::string(e.what()));
  }
  if (ex.turn_index < 0)
    throw Error(ErrorKind::data, "negative turn_index in " + ex.dialogue_id);
  ex.gold_state.check_against(ontology);
  if (!ex.gold_state.empty() && ex.gold_state.domains() != ex.gold_domains)
    throw Error(ErrorKind::data, "gold_domains disagree with gold_state in " +
                                     ex.dialogue_id + " turn " +
                                     std::to_string(ex.turn_index));
  return ex;
}

}  // namespace promptdst
