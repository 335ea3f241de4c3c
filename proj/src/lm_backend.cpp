#include "promptdst/lm_backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "promptdst/error.hpp"
#include "promptdst/mock_backend.hpp"
#include "promptdst/prompting.hpp"
#include "promptdst/remote_backend.hpp"

namespace promptdst {

const std::pair<std::string, double>& MaskFillResult::top1(std::size_t mask) const {
  const CandidateScores& scores = per_mask.at(mask);
  if (scores.empty()) throw Error(ErrorKind::data, "mask has no candidates");
  auto best = scores.begin();
  for (auto it = scores.begin(); it != scores.end(); ++it)
    if (it->second > best->second) best = it;
  return *best;
}

void GenerateOptions::validate() const {
  if (beam_size < 1)
    throw Error(ErrorKind::invalid_argument, "beam_size must be at least 1");
  if (max_new_tokens < 1)
    throw Error(ErrorKind::invalid_argument, "max_new_tokens must be at least 1");
  if (suppress_eos_until < 0 || suppress_eos_until > max_new_tokens)
    throw Error(ErrorKind::invalid_argument,
                "suppress_eos_until must lie in [0, max_new_tokens]");
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::nll ? "NLL" : "NLL_PLUS_UL_EOS";
}

LossKind loss_kind_from_string(std::string_view s) {
  if (s == "NLL" || s == "nll") return LossKind::nll;
  if (s == "NLL_PLUS_UL_EOS" || s == "nll_ul_eos" || s == "nll_plus_ul_eos")
    return LossKind::nll_plus_ul_eos;
  throw Error(ErrorKind::config, "unknown loss kind '" + std::string(s) + "'");
}

void FineTuneConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw Error(ErrorKind::invalid_argument, "learning_rate must be positive");
  if (epochs < 1) throw Error(ErrorKind::invalid_argument, "epochs must be positive");
  if (batch_size < 1)
    throw Error(ErrorKind::invalid_argument, "batch_size must be positive");
}

// ---------------------------------------------------------------- loss

namespace {

void check_probability(double p, bool allow_zero, const char* what) {
  if (!(p <= 1.0) || (allow_zero ? p < 0.0 : !(p > 0.0)))
    throw Error(ErrorKind::invalid_argument,
                std::string(what) + " probability outside " +
                    (allow_zero ? "[0,1]" : "(0,1]"));
}

}  // namespace

double eos_unlikelihood_term(std::span<const PositionProbs> positions) {
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < positions.size(); ++t) {
    const double p = positions[t].eos_prob;
    check_probability(p, true, "eos");
    if (p >= 1.0)
      throw Error(ErrorKind::numeric, "infinite unlikelihood loss: eos_prob = 1 at position " +
                                          std::to_string(t));
    sum += -std::log1p(-p);
  }
  return sum;
}

double eos_unlikelihood_derivative(double eos_prob) {
  if (!(eos_prob >= 0.0 && eos_prob < 1.0))
    throw Error(ErrorKind::numeric, "derivative undefined at eos_prob >= 1");
  return 1.0 / (1.0 - eos_prob);
}

double compute_loss(std::span<const PositionProbs> positions, const LossSpec& spec) {
  double nll = 0.0;
  for (const auto& pos : positions) {
    check_probability(pos.target_prob, false, "target");
    nll += -std::log(pos.target_prob);
  }
  if (spec.kind == LossKind::nll) return nll;
  if (!(spec.ul_weight >= 0.0))
    throw Error(ErrorKind::invalid_argument, "ul_weight must be nonnegative");
  return nll + spec.ul_weight * eos_unlikelihood_term(positions);
}

std::vector<double> restricted_softmax(std::span<const double> log_scores) {
  if (log_scores.empty())
    throw Error(ErrorKind::invalid_argument, "no candidates to normalize");
  const double ninf = -std::numeric_limits<double>::infinity();
  double max = ninf;
  for (double s : log_scores) {
    if (std::isnan(s)) throw Error(ErrorKind::numeric, "NaN candidate score");
    max = std::max(max, s);
  }
  if (max == ninf)
    throw Error(ErrorKind::numeric, "all candidate scores are zero");
  std::vector<double> out(log_scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = log_scores[i] == ninf ? 0.0 : std::exp(log_scores[i] - max);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

// ---------------------------------------------------------------- LmBackend

MaskFillResult LmBackend::mask_fill(std::string_view input,
                                    std::span<const std::string> candidates) const {
  const std::size_t masks = count_placeholders(input);
  if (masks == 0)
    throw Error(ErrorKind::invalid_argument, "input contains no mask placeholder");
  if (candidates.empty())
    throw Error(ErrorKind::invalid_argument, "empty candidate list");
  const auto raw = mask_log_scores(input, candidates, masks);
  if (raw.size() != masks)
    throw Error(ErrorKind::backend, "backend returned " + std::to_string(raw.size()) +
                                        " mask rows for " + std::to_string(masks) +
                                        " masks");
  MaskFillResult result;
  for (const auto& row : raw) {
    if (row.size() != candidates.size())
      throw Error(ErrorKind::backend, "backend returned wrong candidate count");
    const auto probs = restricted_softmax(row);
    CandidateScores scores;
    scores.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
      scores.emplace_back(candidates[i], probs[i]);
    result.per_mask.push_back(std::move(scores));
  }
  return result;
}

GenerationResult LmBackend::generate(std::string_view input,
                                     const GenerateOptions& options) const {
  options.validate();
  return do_generate(input, options);
}

std::map<std::string, double> LmBackend::first_token_distribution(
    std::string_view input, std::span<const std::string> first_tokens) const {
  if (first_tokens.empty())
    throw Error(ErrorKind::invalid_argument, "empty first-token list");
  std::set<std::string_view> seen;
  for (const auto& t : first_tokens)
    if (!seen.insert(t).second)
      throw Error(ErrorKind::invalid_argument, "duplicate first token '" + t + "'");
  const auto probs = first_token_probs(input, first_tokens);
  if (probs.size() != first_tokens.size())
    throw Error(ErrorKind::backend, "backend returned wrong token count");
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
      throw Error(ErrorKind::backend, "first-token probability outside [0,1]");
    out.emplace(first_tokens[i], probs[i]);
  }
  return out;
}

std::shared_ptr<const LmBackend> LmBackend::fine_tune(
    std::span<const TrainingPair> dataset, const LossSpec& spec,
    const FineTuneConfig& config) const {
  if (dataset.empty())
    throw Error(ErrorKind::invalid_argument, "empty fine-tuning dataset");
  config.validate();
  if (!(spec.ul_weight >= 0.0))
    throw Error(ErrorKind::invalid_argument, "ul_weight must be nonnegative");
  return do_fine_tune(dataset, spec, config);
}

BackendPtr open_backend(const nlohmann::json& descriptor) {
  const std::string kind = descriptor.value("kind", std::string());
  if (kind == "mock") {
    if (auto t = descriptor.find("table"); t != descriptor.end())
      return MockBackend::load(t->get<std::string>());
    if (auto t = descriptor.find("inline"); t != descriptor.end())
      return std::make_shared<MockBackend>(*t);
    throw Error(ErrorKind::config, "mock backend needs \"table\" or \"inline\"");
  }
  if (kind == "remote") {
    RemoteOptions options;
    options.url = descriptor.value("url", std::string());
    options.model = descriptor.value("model", std::string());
    options.max_retries = descriptor.value("max_retries", options.max_retries);
    options.timeout_ms = descriptor.value("timeout_ms", options.timeout_ms);
    options.poll_interval_ms =
        descriptor.value("poll_interval_ms", options.poll_interval_ms);
    options.max_polls = descriptor.value("max_polls", options.max_polls);
    return std::make_shared<RemoteBackend>(std::move(options));
  }
  throw Error(ErrorKind::config, "unknown backend kind '" + kind + "'");
}

}  // namespace promptdst
