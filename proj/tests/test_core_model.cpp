#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "promptdst/error.hpp"

using namespace promptdst;

namespace {

DialogueHistory two_turns() {
  return DialogueHistory({{Speaker::user, "i need a hotel"}, {Speaker::system, "which area?"}});
}

std::string random_word(std::mt19937_64& rng, std::size_t max_len) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz:-'";
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  std::string w;
  for (std::size_t n = len(rng); n > 0; --n) w += alphabet[ch(rng)];
  return w;
}

}  // namespace

TEST_CASE("domain names round-trip and reject everything else") {
  for (Domain d : kAllDomains) CHECK(domain_from_string(to_string(d)) == d);
  CHECK_THROWS_AS(domain_from_string("flight"), Error);
  CHECK_THROWS_AS(domain_from_string("Hotel"), Error);
  CHECK_THROWS_AS(domain_from_string(""), Error);
}

TEST_CASE("domain parsing is total over random strings") {
  std::mt19937_64 rng(17);
  int accepted = 0;
  for (int i = 0; i < 5000; ++i) {
    const std::string s = random_word(rng, 10);
    const bool legal = std::any_of(kAllDomains.begin(), kAllDomains.end(),
                                   [&](Domain d) { return to_string(d) == s; });
    CHECK(parse_domain(s).has_value() == legal);
    accepted += legal;
  }
  for (Domain d : kAllDomains) CHECK(parse_domain(to_string(d)) == d);
  CHECK(accepted < 5000);
}

TEST_CASE("shipped ontology has 61 unique slots over eight domains") {
  const Ontology& o = testing::ontology();
  CHECK(o.size() == 61);
  CHECK(o.domains().size() == 8);
  std::set<SlotKey> seen;
  for (const SlotDef& s : o.slots()) {
    CHECK(seen.insert(s.key).second);
    if (s.is_categorical) {
      CHECK_FALSE(s.categorical_values.empty());
      std::set<std::string> vals(s.categorical_values.begin(), s.categorical_values.end());
      CHECK(vals.size() == s.categorical_values.size());
    }
  }
  CHECK(o.contains(SlotKey::parse("hotel-name")));
  CHECK_FALSE(o.contains(SlotKey{Domain::police, "stars"}));
  CHECK_THROWS_AS(o.at(SlotKey{Domain::police, "stars"}), Error);
}

TEST_CASE("ontology rejects duplicate pairs and bad categorical slots") {
  const SlotKey k{Domain::hotel, "area"};
  CHECK_THROWS_AS(Ontology({SlotDef{k, false, {}, ""}, SlotDef{k, false, {}, ""}}), Error);
  CHECK_THROWS_AS(Ontology({SlotDef{k, true, {}, ""}}), Error);
  CHECK_THROWS_AS(Ontology({SlotDef{k, true, {"north", "north"}, ""}}), Error);
  CHECK_NOTHROW(Ontology({SlotDef{k, true, {"north", "south"}, ""}}));
}

TEST_CASE("slot keys parse qualified names") {
  const SlotKey k = SlotKey::parse("train-arriveby");
  CHECK(k.domain == Domain::train);
  CHECK(k.slot == "arriveby");
  CHECK(k.qualified() == "train-arriveby");
  CHECK_THROWS_AS(SlotKey::parse("plane-day"), Error);
  CHECK_THROWS(SlotKey::parse("hotel"));
}

TEST_CASE("turns reject blank utterances") {
  CHECK_THROWS_AS(DialogueTurn(Speaker::user, "   "), Error);
  CHECK_THROWS_AS(DialogueTurn(Speaker::system, ""), Error);
}

TEST_CASE("render_history") {
  CHECK(render_history(DialogueHistory({{Speaker::user, "i need a hotel"}}), HistoryStyle::plain) ==
        "i need a hotel");
  CHECK(render_history(two_turns(), HistoryStyle::speaker_tagged) ==
        "USER: i need a hotel SYSTEM: which area?");
  CHECK(render_history(two_turns(), HistoryStyle::plain) == "i need a hotel which area?");
  try {
    render_history(DialogueHistory{}, HistoryStyle::plain);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "empty dialogue history");
  }
}

TEST_CASE("speaker_tagged rendering round-trips turn count and speakers") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    std::vector<DialogueTurn> turns;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int t = 0; t < n; ++t) {
      std::string utt;
      const int words = 1 + static_cast<int>(rng() % 6);
      for (int w = 0; w < words; ++w) utt += (w ? " " : "") + random_word(rng, 7);
      turns.emplace_back(rng() % 2 ? Speaker::user : Speaker::system, utt);
    }
    const DialogueHistory h(turns);
    const DialogueHistory back = parse_tagged_history(render_history(h, HistoryStyle::speaker_tagged));
    REQUIRE(back.size() == h.size());
    for (std::size_t t = 0; t < h.size(); ++t) {
      CHECK(back.turns()[t].speaker() == h.turns()[t].speaker());
      CHECK(back.turns()[t].utterance() == h.turns()[t].utterance());
    }
  }
}

TEST_CASE("front truncation drops the oldest turns") {
  const DialogueHistory h({{Speaker::user, "a"}, {Speaker::system, "b"}, {Speaker::user, "c"}});
  const auto t = h.truncated_front(2);
  REQUIRE(t.size() == 2);
  CHECK(t.turns()[0].utterance() == "b");
  CHECK(t.turns()[1].utterance() == "c");
  CHECK(h.truncated_front(0) == h);
  CHECK(h.truncated_front(10) == h);

  HistoryOptions opt;
  opt.include_system_turns = false;
  CHECK(format_history(h, opt) == "USER: a USER: c");
  opt.max_turns = 1;
  CHECK(format_history(h, opt) == "USER: c");
}

TEST_CASE("belief state drops the none sentinel and compares as a set") {
  BeliefState a;
  a.set({Domain::hotel, "name"}, "acorn");
  a.set({Domain::train, "day"}, "monday");
  a.set({Domain::taxi, "leaveat"}, "none");
  a.set({Domain::taxi, "arriveby"}, "  ");
  CHECK(a.size() == 2);
  CHECK_FALSE(a.get({Domain::taxi, "leaveat"}).has_value());

  BeliefState b;
  b.set({Domain::train, "day"}, "monday");
  b.set({Domain::hotel, "name"}, "acorn");
  CHECK(a == b);
  CHECK(a.domains() == DomainSet{Domain::train, Domain::hotel});

  b.set({Domain::hotel, "name"}, "none");
  CHECK(b.size() == 1);
  CHECK_FALSE(a == b);
}

TEST_CASE("belief state keys are checked against the ontology") {
  BeliefState s;
  s.set({Domain::police, "stars"}, "4");
  CHECK_THROWS_AS(s.check_against(testing::ontology()), Error);
}

TEST_CASE("labeled examples round-trip through JSON") {
  LabeledExample ex;
  ex.history = two_turns();
  ex.gold_state.set({Domain::hotel, "area"}, "north");
  ex.gold_domains = {Domain::hotel};
  ex.dialogue_id = "X.json";
  ex.turn_index = 2;
  const auto back = example_from_json(to_json(ex), testing::ontology());
  CHECK(back.history == ex.history);
  CHECK(back.gold_state == ex.gold_state);
  CHECK(back.gold_domains == ex.gold_domains);
  CHECK(back.dialogue_id == "X.json");
  CHECK(back.turn_index == 2);

  auto j = to_json(ex);
  j["gold_domains"] = {"train"};
  CHECK_THROWS_AS(example_from_json(j, testing::ontology()), Error);
}
