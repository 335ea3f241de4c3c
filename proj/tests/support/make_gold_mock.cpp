// Writes gold-scripted mock tables for a corpus, for the CLI tests.
//
//   make_gold_mock <corpus.json> <domain_out.json> <slot_out.json> [--swap]

#include <cstring>
#include <fstream>
#include <iostream>

#include "fixtures.hpp"
#include "promptdst/corpus.hpp"

using namespace promptdst;

int main(int argc, char** argv) {
  if (argc < 4) {
    std::cerr << "usage: make_gold_mock <corpus.json> <domain_out> <slot_out> [--swap]\n";
    return 1;
  }
  const bool swap = argc > 4 && std::strcmp(argv[4], "--swap") == 0;
  const auto examples = load_corpus(argv[1], testing::ontology());
  const HistoryOptions history;
  std::ofstream(argv[2]) << testing::domain_generate_table(
                                examples, testing::prompts(), history,
                                swap ? testing::DomainScript::swap_first
                                     : testing::DomainScript::gold)
                                .dump(1)
                         << "\n";
  std::ofstream(argv[3]) << testing::slot_generate_table(examples, testing::ontology(),
                                                         testing::prompts(), history)
                                .dump(1)
                         << "\n";
  return 0;
}
