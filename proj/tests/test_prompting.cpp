#include <doctest.h>

#include "fixtures.hpp"
#include "promptdst/error.hpp"

using namespace promptdst;

TEST_CASE("masked inputs") {
  const auto family = MaskedPromptFamily::defaults();
  CHECK(build_masked_input("i need a room", 1, family) ==
        "i need a room Excited to see the [MASK].");
  for (int k = 1; k <= 4; ++k)
    CHECK(count_placeholders(build_masked_input("i need a room", k, family)) == std::size_t(k));
  CHECK(build_masked_input("x", 2, family) == "x Excited to see the [MASK] and [MASK].");
  for (int k : {0, 5, -1}) {
    try {
      build_masked_input("i need a room", k, family);
      FAIL("expected range error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::range);
    }
  }
}

TEST_CASE("shipped family matches the defaults") {
  const auto& p = testing::prompts();
  const auto d = MaskedPromptFamily::defaults();
  for (int k = 1; k <= 4; ++k) CHECK(p.family.for_k(k) == d.for_k(k));
  CHECK_NOTHROW(p.family.validate());
}

TEST_CASE("family validation counts placeholders") {
  auto f = MaskedPromptFamily::defaults();
  f.templates[2] = "only [MASK] and [MASK]";
  CHECK_THROWS_AS(f.validate(), Error);
}

TEST_CASE("domain QA input") {
  CHECK(build_domain_qa_input("i need a room") == "i need a room What are the mentioned domains?");
  CHECK_THROWS_AS(build_domain_qa_input(""), Error);
  for (const char* dh : {"a", "USER: hello SYSTEM: hi", "x y z"}) {
    const std::string s = build_domain_qa_input(dh);
    CHECK(s.ends_with(kDomainQuestion));
    CHECK(s.starts_with(dh));
  }
}

TEST_CASE("slot inputs") {
  const auto& p = testing::prompts();
  CHECK(build_slot_input("dh", {Domain::hotel, "name"}, p.slots) ==
        "dh What is the name of the hotel?");
  try {
    build_slot_input("dh", {Domain::police, "stars"}, p.slots);
    FAIL("expected lookup error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::lookup);
  }
  for (const SlotDef& s : testing::ontology().slots()) {
    const std::string in = build_slot_input("USER: some history", s.key, p.slots);
    CHECK(in.starts_with("USER: some history "));
    CHECK(in.ends_with("?"));
  }
}

TEST_CASE("slot table covers the ontology") {
  const auto& p = testing::prompts();
  CHECK(p.slots.entries().size() == testing::ontology().size());
  CHECK_NOTHROW(p.slots.validate(testing::ontology()));

  auto entries = p.slots.entries();
  entries[{Domain::hotel, "name"}] = "Name of the hotel";
  CHECK_THROWS_AS(SlotPromptTable(entries).validate(testing::ontology()), Error);
  entries.erase({Domain::hotel, "name"});
  CHECK_THROWS_AS(SlotPromptTable(entries).validate(testing::ontology()), Error);
}

TEST_CASE("catalog ships the fourteen ranked candidates") {
  const auto& c = testing::prompts().catalog;
  REQUIRE(c.ranked_domain_prompts.size() == 14);
  CHECK(c.render(0, "i need a room") == "i need a room Excited to see the [MASK]");
  CHECK(c.render(3, "i need a room") == "Can you help me out about a [MASK] i need a room");
  CHECK_THROWS_AS(c.render(14, "x"), Error);
  for (std::size_t r = 0; r < 14; ++r)
    CHECK(count_placeholders(c.render(r, "dh")) >= 1);
}

TEST_CASE("builders are deterministic") {
  const auto& p = testing::prompts();
  for (int k = 1; k <= 4; ++k)
    CHECK(build_masked_input("dh", k, p.family) == build_masked_input("dh", k, p.family));
  CHECK(build_slot_input("dh", {Domain::train, "day"}, p.slots) ==
        build_slot_input("dh", {Domain::train, "day"}, p.slots));
}
