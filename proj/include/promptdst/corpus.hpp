#pragma once

// MultiWOZ-2.2 dialogue ingestion and distribution-controlled few-shot
// sampling.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptdst/core_model.hpp"

namespace promptdst {

// One LabeledExample per USER turn.
std::vector<LabeledExample> parse_corpus(std::string_view text,
                                         const Ontology& ontology);
std::vector<LabeledExample> load_corpus(const std::filesystem::path& path,
                                        const Ontology& ontology);

// Example cache: one JSON object per line.
std::string write_example_lines(std::span<const LabeledExample> examples);
std::vector<LabeledExample> read_example_lines(std::string_view text,
                                               const Ontology& ontology);

struct Strata {
  std::array<std::vector<LabeledExample>, 4> by_k;  // index k-1
  std::size_t discarded_zero = 0;
  std::size_t discarded_over_four = 0;

  const std::vector<LabeledExample>& stratum(int k) const { return by_k.at(k - 1); }
};

Strata stratify_by_domain_count(std::span<const LabeledExample> examples);

class DomainDistribution {
 public:
  // Throws Error(invalid_argument) unless every p_k >= 0 and they sum to 1
  // within 1e-9.
  DomainDistribution(double p1, double p2, double p3, double p4);
  explicit DomainDistribution(const std::array<double, 4>& p)
      : DomainDistribution(p[0], p[1], p[2], p[3]) {}

  const std::array<double, 4>& p() const { return p_; }
  double operator[](int k) const { return p_.at(k - 1); }

 private:
  std::array<double, 4> p_;
};

// Stratum sizes by largest-remainder rounding; always sums to size. Ties in
// the fractional parts go to the smaller k.
std::array<std::size_t, 4> largest_remainder_counts(
    std::size_t size, const DomainDistribution& dist);

struct SampledDataset {
  std::vector<LabeledExample> examples;
  // Filled only for per-slot datasets: the slot each example was drawn for.
  std::vector<SlotKey> target_slots;
  std::uint64_t seed = 0;
  std::optional<DomainDistribution> distribution;
  std::optional<std::size_t> per_slot;

  // Diagnostics.
  std::array<std::size_t, 4> stratum_counts{};
  std::vector<SlotKey> short_slots;    // fewer occurrences than per_slot
  std::vector<SlotKey> skipped_slots;  // never filled
};

SampledDataset sample_domain_dataset(std::span<const LabeledExample> examples,
                                     std::size_t size,
                                     const DomainDistribution& dist,
                                     std::uint64_t seed);

SampledDataset sample_slot_dataset(std::span<const LabeledExample> examples,
                                   const Ontology& ontology,
                                   std::size_t per_slot, std::uint64_t seed);

// Dataset file: example lines, each carrying "target_slot" when present.
std::string write_dataset_lines(const SampledDataset& dataset);
SampledDataset read_dataset_lines(std::string_view text,
                                  const Ontology& ontology);

}  // namespace promptdst
