#include "promptdst/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <tuple>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw Error(ErrorKind::invalid_argument, std::string(what) + ": " + std::to_string(a) +
                                                 " predictions vs " + std::to_string(b) +
                                                 " gold entries");
}

std::size_t intersection_size(const DomainSet& a, const DomainSet& b) {
  std::size_t n = 0;
  for (Domain d : a) n += b.count(d);
  return n;
}

bool values_agree(const std::optional<std::string>& p, const std::optional<std::string>& g) {
  if (!p || !g) return !p && !g;
  return normalize_value(*p) == normalize_value(*g);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double full_accuracy(std::span<const DomainSet> preds, std::span<const DomainSet> golds) {
  check_lengths(preds.size(), golds.size(), "full_accuracy");
  if (preds.empty()) throw Error(ErrorKind::invalid_argument, "full_accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::string_view to_string(PartialMode m) {
  return m == PartialMode::recall ? "recall" : "jaccard";
}

PartialMode partial_mode_from_string(std::string_view s) {
  if (s == "recall") return PartialMode::recall;
  if (s == "jaccard") return PartialMode::jaccard;
  throw Error(ErrorKind::config, "unknown partial accuracy mode '" + std::string(s) + "'");
}

PartialAccuracy partial_accuracy(std::span<const DomainSet> preds,
                                 std::span<const DomainSet> golds, PartialMode mode) {
  check_lengths(preds.size(), golds.size(), "partial_accuracy");
  PartialAccuracy out;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (golds[i].empty()) {
      ++out.skipped;
      continue;
    }
    const auto inter = static_cast<double>(intersection_size(preds[i], golds[i]));
    const auto denom = mode == PartialMode::recall
                           ? golds[i].size()
                           : preds[i].size() + golds[i].size() -
                                 intersection_size(preds[i], golds[i]);
    sum += inter / static_cast<double>(denom);
    ++out.n;
  }
  if (out.n == 0)
    throw Error(ErrorKind::data, "partial_accuracy: every gold domain set is empty");
  out.value = sum / static_cast<double>(out.n);
  return out;
}

std::string normalize_value(std::string_view v) {
  std::string out;
  out.reserve(v.size());
  bool pending_space = false;
  for (char c : v) {
    if (std::string_view(".,!?'\";").find(c) != std::string_view::npos) continue;
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

double slot_value_accuracy(std::span<const SlotValue> preds, std::span<const SlotValue> golds,
                           MatchMode mode) {
  check_lengths(preds.size(), golds.size(), "slot_value_accuracy");
  if (preds.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].slot != golds[i].slot)
      throw Error(ErrorKind::invalid_argument,
                  "slot_value_accuracy: pair " + std::to_string(i) + " aligns " +
                      preds[i].slot.qualified() + " with " + golds[i].slot.qualified());
    hits += mode == MatchMode::strict
                ? preds[i].value == golds[i].value
                : normalize_value(preds[i].value) == normalize_value(golds[i].value);
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

JointSlotAccuracy joint_and_slot_accuracy(std::span<const BeliefState> preds,
                                          std::span<const BeliefState> golds,
                                          const Ontology& ontology) {
  check_lengths(preds.size(), golds.size(), "joint_and_slot_accuracy");
  if (preds.empty())
    throw Error(ErrorKind::invalid_argument, "joint_and_slot_accuracy: no turns");
  std::size_t joint_hits = 0, slot_hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].check_against(ontology);
    golds[i].check_against(ontology);
    bool all = true;
    for (const SlotDef& slot : ontology.slots()) {
      const bool ok = values_agree(preds[i].get(slot.key), golds[i].get(slot.key));
      slot_hits += ok;
      all = all && ok;
    }
    joint_hits += all;
  }
  const auto turns = static_cast<double>(preds.size());
  return {static_cast<double>(joint_hits) / turns,
          static_cast<double>(slot_hits) / (turns * static_cast<double>(ontology.size()))};
}

MetricReport build_report(std::span<const PredictionRecord> dump,
                          std::span<const LabeledExample> gold, const Ontology& ontology,
                          const ReportOptions& options) {
  if (dump.empty()) throw Error(ErrorKind::data, "empty prediction dump");

  std::map<std::pair<std::string, int>, const LabeledExample*> by_id;
  for (const auto& ex : gold) by_id.emplace(std::pair{ex.dialogue_id, ex.turn_index}, &ex);

  std::vector<std::string> unmatched, duplicated;
  std::set<std::pair<std::string, int>> seen;
  std::vector<const LabeledExample*> matched;
  for (const auto& r : dump) {
    const std::pair key{r.dialogue_id, r.turn_index};
    const std::string id = r.dialogue_id + "#" + std::to_string(r.turn_index);
    if (!seen.insert(key).second) duplicated.push_back(id);
    auto it = by_id.find(key);
    if (it == by_id.end())
      unmatched.push_back(id);
    else
      matched.push_back(it->second);
  }
  auto list = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > 20) s += ", ... (" + std::to_string(ids.size()) + " total)";
    return s;
  };
  if (!unmatched.empty())
    throw Error(ErrorKind::data, "prediction records without gold: " + list(unmatched));
  if (!duplicated.empty())
    throw Error(ErrorKind::data, "duplicate prediction records: " + list(duplicated));

  MetricReport rep;
  rep.partial_mode = options.partial_mode;
  rep.n_examples = dump.size();

  std::vector<DomainSet> pd, gd;
  std::map<int, std::pair<std::size_t, std::size_t>> strata;  // k -> (hits, n)
  std::vector<SlotValue> sp, sg;
  std::vector<BeliefState> ps, gs;
  // Score in key order so float sums do not depend on dump order.
  std::vector<std::size_t> order(dump.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(dump[a].dialogue_id, dump[a].turn_index) <
           std::tie(dump[b].dialogue_id, dump[b].turn_index);
  });
  for (std::size_t i : order) {
    const TurnPrediction& p = dump[i].prediction;
    const LabeledExample& g = *matched[i];
    if (!g.gold_domains.empty()) {
      pd.push_back(p.domains);
      gd.push_back(g.gold_domains);
      auto& s = strata[static_cast<int>(g.gold_domains.size())];
      s.first += p.domains == g.gold_domains;
      ++s.second;
    }
    for (const auto& [key, value] : g.gold_state.entries()) {
      sg.push_back({key, value});
      sp.push_back({key, p.state.get(key).value_or(std::string(kNoneSentinel))});
    }
    ps.push_back(p.state);
    gs.push_back(g.gold_state);
  }

  rep.n_domain_examples = pd.size();
  if (!pd.empty()) {
    rep.full_accuracy = full_accuracy(pd, gd);
    rep.partial_accuracy = partial_accuracy(pd, gd, options.partial_mode).value;
  } else {
    // No gold domains anywhere: an empty prediction is the only correct one.
    std::size_t hits = 0;
    for (const auto& r : dump) hits += r.prediction.domains.empty();
    rep.full_accuracy = rep.partial_accuracy =
        static_cast<double>(hits) / static_cast<double>(dump.size());
  }
  for (const auto& [k, s] : strata)
    rep.per_stratum[k] = {static_cast<double>(s.first) / static_cast<double>(s.second),
                          s.second};

  rep.n_slot_pairs = sp.size();
  rep.strict_slot_accuracy = slot_value_accuracy(sp, sg, MatchMode::strict);
  rep.flexible_slot_accuracy = slot_value_accuracy(sp, sg, MatchMode::flexible);
  const auto js = joint_and_slot_accuracy(ps, gs, ontology);
  rep.joint_accuracy = js.joint;
  rep.slot_accuracy = js.slot;
  return rep;
}

const std::vector<ReferenceRow>& reference_tables() {
  static const std::vector<ReferenceRow> rows = [] {
    std::vector<ReferenceRow> r;
    const char* dists[] = {"zero-shot",           "0.4/0.3/0.2/0.1",     "0.35/0.35/0.15/0.15",
                           "0.25/0.25/0.25/0.25", "0.2/0.2/0.3/0.3",     "0.15/0.15/0.35/0.35",
                           "0.1/0.2/0.3/0.4"};
    const double mlm[7][3] = {{0.36, 0.60, 0.45}, {0.47, 0.70, 0.71}, {0.47, 0.70, 0.69},
                              {0.43, 0.68, 0.73}, {0.41, 0.67, 0.72}, {0.42, 0.67, 0.74},
                              {0.33, 0.63, 0.75}};
    for (int i = 0; i < 7; ++i) {
      r.push_back({"domain_mlm", "BERT MLM", dists[i], "full_accuracy", mlm[i][0]});
      r.push_back({"domain_mlm", "BERT MLM", dists[i], "partial_accuracy", mlm[i][1]});
      r.push_back({"domain_mlm", "BERT MLM", dists[i], "known_k_full_accuracy", mlm[i][2]});
    }
    const double clm[7][2] = {{0.21, 0.28}, {0.46, 0.66}, {0.46, 0.66}, {0.48, 0.68},
                              {0.43, 0.64}, {0.41, 0.61}, {0.36, 0.59}};
    const double clm_ul[7][2] = {{-1, -1},     {0.47, 0.67}, {0.49, 0.69}, {0.46, 0.67},
                                 {0.42, 0.65}, {0.35, 0.60}, {0.31, 0.57}};
    for (int i = 0; i < 7; ++i) {
      r.push_back({"domain_clm", "GPT2 LM", dists[i], "full_accuracy", clm[i][0]});
      r.push_back({"domain_clm", "GPT2 LM", dists[i], "partial_accuracy", clm[i][1]});
      if (clm_ul[i][0] < 0) continue;  // not reported
      r.push_back({"domain_clm", "GPT2 LM UL", dists[i], "full_accuracy", clm_ul[i][0]});
      r.push_back({"domain_clm", "GPT2 LM UL", dists[i], "partial_accuracy", clm_ul[i][1]});
    }
    const int sizes[] = {16, 32, 64, 128, 256};
    const double by_size[5][4] = {{0.20, 0.28, 0.33, 0.60}, {0.20, 0.29, 0.30, 0.59},
                                  {0.28, 0.45, 0.37, 0.64}, {0.49, 0.69, 0.47, 0.70},
                                  {0.44, 0.65, 0.47, 0.73}};
    for (int i = 0; i < 5; ++i) {
      const auto s = std::to_string(sizes[i]);
      r.push_back({"domain_size", "GPT2 LM UL", s, "full_accuracy", by_size[i][0]});
      r.push_back({"domain_size", "GPT2 LM UL", s, "partial_accuracy", by_size[i][1]});
      r.push_back({"domain_size", "BERT MLM", s, "full_accuracy", by_size[i][2]});
      r.push_back({"domain_size", "BERT MLM", s, "partial_accuracy", by_size[i][3]});
    }
    const char* slot_models[] = {"GPT2", "T5", "GPT-neo"};
    const char* per_slot[] = {"0", "3 (54)", "5 (80)", "7 (125)"};
    const double slot[3][4][2] = {
        {{0.025, 0.048}, {0.062, 0.086}, {0.109, 0.132}, {0.164, 0.180}},
        {{0.288, 0.311}, {0.300, 0.314}, {0.343, 0.361}, {0.256, 0.259}},
        {{0.056, 0.059}, {0.432, 0.432}, {0.417, 0.425}, {0.440, 0.446}}};
    for (int m = 0; m < 3; ++m)
      for (int i = 0; i < 4; ++i) {
        r.push_back({"slot", slot_models[m], per_slot[i], "strict_slot_accuracy", slot[m][i][0]});
        r.push_back(
            {"slot", slot_models[m], per_slot[i], "flexible_slot_accuracy", slot[m][i][1]});
      }
    r.push_back({"combined", "GPT2 LM + T5 LM", "multi-domain", "slot_accuracy", 0.56});
    r.push_back({"combined", "GPT2 LM + T5 LM", "multi-domain", "joint_accuracy", 0.01});
    r.push_back({"combined", "GPT2 LM + T5 LM", "single-domain", "slot_accuracy", 0.58});
    r.push_back({"combined", "GPT2 LM + T5 LM", "single-domain", "joint_accuracy", 0.02});
    r.push_back({"combined", "BERT MLM + T5 LM", "multi-domain", "slot_accuracy", 0.51});
    r.push_back({"combined", "BERT MLM + T5 LM", "multi-domain", "joint_accuracy", 0.00});
    r.push_back({"combined", "BERT MLM + T5 LM", "single-domain", "slot_accuracy", 0.61});
    r.push_back({"combined", "BERT MLM + T5 LM", "single-domain", "joint_accuracy", 0.02});
    return r;
  }();
  return rows;
}

json report_to_json(const MetricReport& rep, bool with_reference) {
  json strata = json::object();
  for (const auto& [k, s] : rep.per_stratum)
    strata[std::to_string(k)] = {{"full_accuracy", s.full_accuracy}, {"n", s.n}};
  json j = {{"n_examples", rep.n_examples},
            {"n_domain_examples", rep.n_domain_examples},
            {"n_slot_pairs", rep.n_slot_pairs},
            {"partial_mode", std::string(to_string(rep.partial_mode))},
            {"full_accuracy", rep.full_accuracy},
            {"partial_accuracy", rep.partial_accuracy},
            {"strict_slot_accuracy", rep.strict_slot_accuracy},
            {"flexible_slot_accuracy", rep.flexible_slot_accuracy},
            {"joint_accuracy", rep.joint_accuracy},
            {"slot_accuracy", rep.slot_accuracy},
            {"per_stratum", std::move(strata)}};
  if (with_reference) {
    json ref = json::array();
    for (const auto& r : reference_tables())
      ref.push_back({{"table", r.table},
                     {"model", r.model},
                     {"setting", r.setting},
                     {"metric", r.metric},
                     {"value", r.value}});
    j["reference"] = std::move(ref);
  }
  return j;
}

MetricReport report_from_json(const json& j) {
  MetricReport rep;
  try {
    rep.n_examples = j.at("n_examples").get<std::size_t>();
    rep.n_domain_examples = j.value("n_domain_examples", std::size_t{0});
    rep.n_slot_pairs = j.value("n_slot_pairs", std::size_t{0});
    rep.partial_mode = partial_mode_from_string(j.value("partial_mode", std::string("recall")));
    rep.full_accuracy = j.at("full_accuracy").get<double>();
    rep.partial_accuracy = j.at("partial_accuracy").get<double>();
    rep.strict_slot_accuracy = j.at("strict_slot_accuracy").get<double>();
    rep.flexible_slot_accuracy = j.at("flexible_slot_accuracy").get<double>();
    rep.joint_accuracy = j.at("joint_accuracy").get<double>();
    rep.slot_accuracy = j.at("slot_accuracy").get<double>();
    if (auto s = j.find("per_stratum"); s != j.end())
      for (const auto& [k, v] : s->items())
        rep.per_stratum[std::stoi(k)] = {v.at("full_accuracy").get<double>(),
                                         v.at("n").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("metric report: ") + e.what());
  }
  return rep;
}

std::vector<std::vector<std::string>> report_csv_rows(const MetricReport& rep) {
  const auto n = std::to_string(rep.n_examples);
  const auto nd = std::to_string(rep.n_domain_examples);
  const auto ns = std::to_string(rep.n_slot_pairs);
  std::vector<std::vector<std::string>> rows = {
      {"full_accuracy", fmt(rep.full_accuracy), nd, "all"},
      {"partial_accuracy", fmt(rep.partial_accuracy), nd, "all"},
      {"strict_slot_accuracy", fmt(rep.strict_slot_accuracy), ns, "all"},
      {"flexible_slot_accuracy", fmt(rep.flexible_slot_accuracy), ns, "all"},
      {"joint_accuracy", fmt(rep.joint_accuracy), n, "all"},
      {"slot_accuracy", fmt(rep.slot_accuracy), n, "all"},
  };
  for (const auto& [k, s] : rep.per_stratum)
    rows.push_back({"full_accuracy", fmt(s.full_accuracy), std::to_string(s.n),
                    std::to_string(k)});
  return rows;
}

std::string report_to_csv(const MetricReport& rep) {
  std::string out = "metric,value,n,stratum\n";
  for (const auto& row : report_csv_rows(rep)) out += detail::join(row, ",") + "\n";
  return out;
}

}  // namespace promptdst
