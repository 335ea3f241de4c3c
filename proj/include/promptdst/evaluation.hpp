#pragma once

// Domain, slot and belief-state metrics over prediction dumps.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptdst/core_model.hpp"
#include "promptdst/slot_predictor.hpp"

namespace promptdst {

// Mean exact set equality. Throws on length mismatch or empty input.
double full_accuracy(std::span<const DomainSet> preds, std::span<const DomainSet> golds);

enum class PartialMode { recall, jaccard };
std::string_view to_string(PartialMode m);
PartialMode partial_mode_from_string(std::string_view s);

struct PartialAccuracy {
  double value = 0.0;
  std::size_t n = 0;        // examples scored
  std::size_t skipped = 0;  // examples with an empty gold set
};

// recall:  |pred ∩ gold| / |gold|
// jaccard: |pred ∩ gold| / |pred ∪ gold|
// Throws Error(data) if every gold set is empty.
PartialAccuracy partial_accuracy(std::span<const DomainSet> preds,
                                 std::span<const DomainSet> golds,
                                 PartialMode mode = PartialMode::recall);

// Lower-case, trim, drop . , ! ? ' " ; and collapse whitespace runs.
std::string normalize_value(std::string_view v);

enum class MatchMode { strict, flexible };

struct SlotValue {
  SlotKey slot;
  std::string value;
};

// Pairs must be aligned slot by slot. An empty input scores 1.
double slot_value_accuracy(std::span<const SlotValue> preds, std::span<const SlotValue> golds,
                           MatchMode mode);

struct JointSlotAccuracy {
  double joint = 0.0;
  double slot = 0.0;
};

// Per turn, over every ontology slot; values compared after normalize_value
// and both-absent counts as agreement.
JointSlotAccuracy joint_and_slot_accuracy(std::span<const BeliefState> preds,
                                          std::span<const BeliefState> golds,
                                          const Ontology& ontology);

struct StratumAccuracy {
  double full_accuracy = 0.0;
  std::size_t n = 0;
};

struct MetricReport {
  std::size_t n_examples = 0;         // matched turns
  std::size_t n_domain_examples = 0;  // turns with a non-empty gold domain set
  std::size_t n_slot_pairs = 0;       // gold-filled slots scored for slot-value accuracy
  PartialMode partial_mode = PartialMode::recall;

  double full_accuracy = 0.0;
  double partial_accuracy = 0.0;
  double strict_slot_accuracy = 0.0;
  double flexible_slot_accuracy = 0.0;
  double joint_accuracy = 0.0;
  double slot_accuracy = 0.0;

  std::map<int, StratumAccuracy> per_stratum;  // by gold domain count
};

struct ReportOptions {
  PartialMode partial_mode = PartialMode::recall;
};

// Joins records to gold examples on (dialogue_id, turn_index). Domain metrics
// use the turns with at least one gold domain; slot-value accuracy uses the
// gold-filled slots, with an absent prediction scored as a miss.
MetricReport build_report(std::span<const PredictionRecord> dump,
                          std::span<const LabeledExample> gold, const Ontology& ontology,
                          const ReportOptions& options = {});

struct ReferenceRow {
  std::string table;    // "domain_mlm", "domain_clm", "domain_size", "slot", "combined"
  std::string model;
  std::string setting;  // distribution, data size, per-slot count, ...
  std::string metric;
  double value = 0.0;
};

// Published numbers, shipped for report footers only.
const std::vector<ReferenceRow>& reference_tables();

nlohmann::json report_to_json(const MetricReport& report, bool with_reference = true);
MetricReport report_from_json(const nlohmann::json& j);

// Header "metric,value,n,stratum"; per-stratum rows carry k, the others "all".
std::string report_to_csv(const MetricReport& report);
// Rows excluding the header.
std::vector<std::vector<std::string>> report_csv_rows(const MetricReport& report);

}  // namespace promptdst
