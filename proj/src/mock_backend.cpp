#include "promptdst/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

namespace {

constexpr std::string_view kDefaultKey = "*";

std::map<std::string, double> read_probs(const json& j, const std::string& where) {
  std::map<std::string, double> out;
  double sum = 0.0;
  for (const auto& [tok, p] : j.items()) {
    const double v = p.get<double>();
    if (!(v >= 0.0 && v <= 1.0))
      throw Error(ErrorKind::config, where + ": probability for '" + tok +
                                         "' outside [0,1]");
    sum += v;
    out.emplace(tok, v);
  }
  if (sum > 1.0 + 1e-9)
    throw Error(ErrorKind::config, where + ": probabilities sum above 1");
  return out;
}

double log_or_ninf(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

std::vector<std::string> target_tokens(std::string_view target) {
  std::string cleaned(target);
  for (char& c : cleaned)
    if (c == ',') c = ' ';
  return detail::split_whitespace(cleaned);
}

}  // namespace

MockBackend::MockBackend(const json& table,
                         std::optional<std::filesystem::path> source)
    : source_(std::move(source)) {
  try {
    if (auto it = table.find("mask_fill"); it != table.end())
      for (const auto& e : *it) {
        const auto input = e.at("input").get<std::string>();
        std::vector<ProbTable> masks;
        for (const auto& m : e.at("masks")) masks.push_back(read_probs(m, "mask_fill"));
        mask_fill_[input] = std::move(masks);
      }
    if (auto it = table.find("generate"); it != table.end())
      for (const auto& e : *it)
        generate_[e.at("input").get<std::string>()] = e.at("output").get<std::string>();
    if (auto it = table.find("first_token"); it != table.end())
      for (const auto& e : *it)
        first_token_[e.at("input").get<std::string>()] =
            read_probs(e.at("probs"), "first_token");
    if (auto it = table.find("first_tokens"); it != table.end())
      for (const auto& [value, tok] : it->items())
        first_tokens_[value] = tok.get<std::string>();
    if (auto it = table.find("multi_token"); it != table.end())
      for (const auto& s : *it) multi_token_.insert(s.get<std::string>());
    if (auto it = table.find("memorized"); it != table.end())
      for (const auto& e : *it)
        memorized_[e.at("input").get<std::string>()] = e.at("target").get<std::string>();
    filler_token_ = table.value("filler_token", filler_token_);
    if (auto it = table.find("training_log"); it != table.end()) training_log_ = *it;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("mock table: ") + e.what());
  }
  if (detail::is_blank(filler_token_) ||
      detail::split_whitespace(filler_token_).size() != 1)
    throw Error(ErrorKind::config, "mock filler_token must be one token");
}

std::shared_ptr<const MockBackend> MockBackend::load(const std::filesystem::path& path) {
  return std::make_shared<MockBackend>(detail::parse_json_file(path), path);
}

template <typename T>
const T* MockBackend::lookup(const std::map<std::string, T, std::less<>>& m,
                             std::string_view input) {
  if (auto it = m.find(input); it != m.end()) return &it->second;
  if (auto it = m.find(kDefaultKey); it != m.end()) return &it->second;
  return nullptr;
}

std::string MockBackend::first_token_of(std::string_view value) const {
  const std::string v = detail::trim(value);
  if (auto it = first_tokens_.find(v); it != first_tokens_.end()) return it->second;
  const auto words = detail::split_whitespace(v);
  if (words.empty()) throw Error(ErrorKind::invalid_argument, "cannot tokenize an empty value");
  return words.front();
}

std::vector<std::vector<double>> MockBackend::mask_log_scores(
    std::string_view input, std::span<const std::string> candidates,
    std::size_t mask_count) const {
  for (const auto& c : candidates)
    if (c.empty() || detail::split_whitespace(c).size() != 1 || multi_token_.count(c))
      throw Error(ErrorKind::invalid_argument,
                  "candidate '" + c + "' is not a single vocabulary token");

  if (auto it = memorized_.find(input); it != memorized_.end()) {
    const auto tokens = target_tokens(it->second);
    bool usable = tokens.size() == mask_count;
    for (std::size_t i = 0; usable && i < mask_count; ++i)
      usable = std::find(candidates.begin(), candidates.end(), tokens[i]) != candidates.end();
    if (usable) {
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < mask_count; ++i) {
        std::vector<double> row;
        for (const auto& c : candidates) row.push_back(log_or_ninf(c == tokens[i] ? 1.0 : 0.0));
        rows.push_back(std::move(row));
      }
      return rows;
    }
  }

  const auto* masks = lookup(mask_fill_, input);
  if (!masks)
    throw Error(ErrorKind::lookup, "mock has no mask_fill entry for input '" +
                                       std::string(input) + "'");
  if (masks->size() < mask_count)
    throw Error(ErrorKind::lookup, "mock mask_fill entry has " +
                                       std::to_string(masks->size()) + " masks, input has " +
                                       std::to_string(mask_count));
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < mask_count; ++i) {
    std::vector<double> row;
    for (const auto& c : candidates) {
      auto p = (*masks)[i].find(c);
      row.push_back(log_or_ninf(p == (*masks)[i].end() ? 0.0 : p->second));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

GenerationResult MockBackend::do_generate(std::string_view input,
                                          const GenerateOptions& options) const {
  const std::string* script = nullptr;
  if (auto it = memorized_.find(input); it != memorized_.end())
    script = &it->second;
  else
    script = lookup(generate_, input);
  if (!script)
    throw Error(ErrorKind::lookup,
                "mock has no generate entry for input '" + std::string(input) + "'");

  const auto tokens = detail::split_whitespace(*script);
  std::vector<std::string> emitted;
  for (int step = 0; step < options.max_new_tokens; ++step) {
    const auto s = static_cast<std::size_t>(step);
    if (s < tokens.size())
      emitted.push_back(tokens[s]);
    else if (step < options.suppress_eos_until)
      emitted.push_back(filler_token_);
    else
      break;  // EOS
  }
  return GenerationResult{detail::join(emitted, " "), static_cast<int>(emitted.size())};
}

std::vector<double> MockBackend::first_token_probs(
    std::string_view input, std::span<const std::string> tokens) const {
  std::vector<double> out;
  if (auto it = memorized_.find(input); it != memorized_.end()) {
    const std::string first = first_token_of(it->second);
    for (const auto& t : tokens) out.push_back(t == first ? 1.0 : 0.0);
    return out;
  }
  const auto* probs = lookup(first_token_, input);
  if (!probs)
    throw Error(ErrorKind::lookup, "mock has no first_token entry for input '" +
                                       std::string(input) + "'");
  for (const auto& t : tokens) {
    auto p = probs->find(t);
    out.push_back(p == probs->end() ? 0.0 : p->second);
  }
  return out;
}

std::shared_ptr<const LmBackend> MockBackend::do_fine_tune(
    std::span<const TrainingPair> dataset, const LossSpec& spec,
    const FineTuneConfig& config) const {
  json t = table();
  json& mem = t["memorized"];
  // Later pairs override earlier ones with the same input.
  std::map<std::string, std::string, std::less<>> merged = memorized_;
  for (const auto& pair : dataset) merged[pair.input] = detail::trim(pair.target);
  mem = json::array();
  for (const auto& [in, target] : merged) mem.push_back({{"input", in}, {"target", target}});
  t["training_log"].push_back({{"loss", to_string(spec.kind)},
                               {"ul_weight", spec.ul_weight},
                               {"learning_rate", config.learning_rate},
                               {"epochs", config.epochs},
                               {"batch_size", config.batch_size},
                               {"seed", config.seed},
                               {"pairs", dataset.size()}});
  return std::make_shared<MockBackend>(t);
}

json MockBackend::table() const {
  json t = json::object();
  auto& mf = t["mask_fill"] = json::array();
  for (const auto& [in, masks] : mask_fill_) {
    json jm = json::array();
    for (const auto& m : masks) jm.push_back(m);
    mf.push_back({{"input", in}, {"masks", std::move(jm)}});
  }
  auto& gen = t["generate"] = json::array();
  for (const auto& [in, out] : generate_) gen.push_back({{"input", in}, {"output", out}});
  auto& ft = t["first_token"] = json::array();
  for (const auto& [in, probs] : first_token_) ft.push_back({{"input", in}, {"probs", probs}});
  t["first_tokens"] = json::object();
  for (const auto& [v, tok] : first_tokens_) t["first_tokens"][v] = tok;
  t["multi_token"] = json::array();
  for (const auto& s : multi_token_) t["multi_token"].push_back(s);
  t["filler_token"] = filler_token_;
  auto& mem = t["memorized"] = json::array();
  for (const auto& [in, target] : memorized_) mem.push_back({{"input", in}, {"target", target}});
  t["training_log"] = training_log_;
  return t;
}

json MockBackend::descriptor() const {
  if (source_) return {{"kind", "mock"}, {"table", source_->string()}};
  return {{"kind", "mock"}, {"inline", table()}};
}

}  // namespace promptdst
