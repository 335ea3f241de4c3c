#pragma once

// Domain types shared by every stage: the closed domain set, the slot
// ontology, dialogue histories and belief states.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace promptdst {

// Declaration order is the canonical ontology order used for sorting and
// for training targets.
enum class Domain : std::uint8_t {
  restaurant,
  train,
  attraction,
  hotel,
  taxi,
  hospital,
  police,
  bus,
};

inline constexpr std::array<Domain, 8> kAllDomains = {
    Domain::restaurant, Domain::train,    Domain::attraction, Domain::hotel,
    Domain::taxi,       Domain::hospital, Domain::police,     Domain::bus,
};

std::string_view to_string(Domain d);
std::optional<Domain> parse_domain(std::string_view name);
// Throws Error(ontology) for anything outside the eight names.
Domain domain_from_string(std::string_view name);

using DomainSet = std::set<Domain>;

std::vector<std::string> domain_names(const DomainSet& domains);

inline constexpr std::string_view kNoneSentinel = "none";

struct SlotKey {
  Domain domain = Domain::restaurant;
  std::string slot;

  // "hotel-name"
  std::string qualified() const;
  // Accepts "hotel-name"; throws Error(ontology) on unknown domains.
  static SlotKey parse(std::string_view qualified);

  auto operator<=>(const SlotKey&) const = default;
  bool operator==(const SlotKey&) const = default;
};

struct SlotDef {
  SlotKey key;
  bool is_categorical = false;
  std::vector<std::string> categorical_values;
  std::string description;
};

class Ontology {
 public:
  Ontology() = default;
  explicit Ontology(std::vector<SlotDef> slots);

  // MultiWOZ-2.2 schema layout: [{"service_name", "slots": [{"name",
  // "is_categorical", "possible_values"}]}].
  static Ontology from_json(const nlohmann::json& schema);
  static Ontology load(const std::filesystem::path& path);

  std::span<const SlotDef> slots() const { return slots_; }
  std::size_t size() const { return slots_.size(); }

  const SlotDef* find(const SlotKey& key) const;
  const SlotDef& at(const SlotKey& key) const;
  bool contains(const SlotKey& key) const { return find(key) != nullptr; }

  std::vector<const SlotDef*> slots_of(Domain d) const;
  DomainSet domains() const;

 private:
  std::vector<SlotDef> slots_;
  std::map<SlotKey, std::size_t> index_;
};

enum class Speaker { user, system };

std::string_view to_string(Speaker s);
Speaker speaker_from_string(std::string_view s);

class DialogueTurn {
 public:
  // Throws Error(invalid_argument) if the utterance is blank.
  DialogueTurn(Speaker speaker, std::string utterance);

  Speaker speaker() const { return speaker_; }
  const std::string& utterance() const { return utterance_; }

  bool operator==(const DialogueTurn&) const = default;

 private:
  Speaker speaker_;
  std::string utterance_;
};

class DialogueHistory {
 public:
  DialogueHistory() = default;
  explicit DialogueHistory(std::vector<DialogueTurn> turns)
      : turns_(std::move(turns)) {}

  std::span<const DialogueTurn> turns() const { return turns_; }
  std::size_t size() const { return turns_.size(); }
  bool empty() const { return turns_.empty(); }

  // Keeps only the newest max_turns turns.
  DialogueHistory truncated_front(std::size_t max_turns) const;
  DialogueHistory user_turns_only() const;

  bool operator==(const DialogueHistory&) const = default;

 private:
  std::vector<DialogueTurn> turns_;
};

enum class HistoryStyle { plain, speaker_tagged };

// plain joins utterances with single spaces; speaker_tagged prefixes each
// turn with "USER: " / "SYSTEM: ".
std::string render_history(const DialogueHistory& history, HistoryStyle style);

// Inverse of the speaker_tagged rendering.
DialogueHistory parse_tagged_history(std::string_view text);

struct HistoryOptions {
  HistoryStyle style = HistoryStyle::speaker_tagged;
  bool include_system_turns = true;
  std::size_t max_turns = 0;  // 0 = unlimited
};

std::string format_history(const DialogueHistory& history,
                           const HistoryOptions& options);

class BeliefState {
 public:
  using Entries = std::map<SlotKey, std::string>;

  BeliefState() = default;

  // The "none" sentinel and blank values clear the slot instead of storing.
  void set(const SlotKey& key, std::string value);
  void erase(const SlotKey& key) { entries_.erase(key); }

  const Entries& entries() const { return entries_; }
  std::optional<std::string> get(const SlotKey& key) const;
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  DomainSet domains() const;
  // Throws Error(ontology) naming the first key not in the ontology.
  void check_against(const Ontology& ontology) const;

  bool operator==(const BeliefState&) const = default;

 private:
  Entries entries_;
};

struct LabeledExample {
  DialogueHistory history;
  DomainSet gold_domains;
  BeliefState gold_state;
  std::string dialogue_id;
  int turn_index = 0;
};

nlohmann::json to_json(const LabeledExample& ex);
LabeledExample example_from_json(const nlohmann::json& j,
                                 const Ontology& ontology);

}  // namespace promptdst
