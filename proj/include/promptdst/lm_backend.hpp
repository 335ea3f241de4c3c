#pragma once

// Language-model backend contract: restricted-vocabulary mask filling,
// beam-search generation, first-token distributions and fine-tuning.
// Concrete backends: MockBackend (mock_backend.hpp) and RemoteBackend
// (remote_backend.hpp).

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace promptdst {

using CandidateScores = std::vector<std::pair<std::string, double>>;

struct MaskFillResult {
  // One entry per mask in input order; candidate order preserved and the
  // scores of each entry sum to 1.
  std::vector<CandidateScores> per_mask;

  // Highest score; ties go to the earlier candidate.
  const std::pair<std::string, double>& top1(std::size_t mask) const;
};

struct GenerationResult {
  std::string text;  // continuation only
  int token_count = 0;
};

struct GenerateOptions {
  int beam_size = 5;
  int max_new_tokens = 32;
  // EOS is masked out of the next-token distribution for this many steps.
  int suppress_eos_until = 0;

  void validate() const;
};

enum class LossKind { nll, nll_plus_ul_eos };

struct LossSpec {
  LossKind kind = LossKind::nll;
  double ul_weight = 1.0;
};

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view s);

struct FineTuneConfig {
  double learning_rate = 1e-7;
  int epochs = 20;
  int batch_size = 8;
  std::uint64_t seed = 0;

  static FineTuneConfig mlm_defaults() { return {1e-7, 20, 8, 0}; }
  static FineTuneConfig clm_defaults() { return {1e-7, 50, 2, 0}; }
  static FineTuneConfig seq2seq_defaults() { return {1e-5, 30, 8, 0}; }

  void validate() const;
};

struct TrainingPair {
  std::string input;
  std::string target;
  // The trainer appends its tokenizer's end-of-sequence token to target.
  bool eos_terminated = true;
};

struct PositionProbs {
  double target_prob = 1.0;
  double eos_prob = 0.0;
};

// NLL = sum_t -ln(target_prob_t). With nll_plus_ul_eos the unlikelihood term
// ul_weight * sum_{t < last} -ln(1 - eos_prob_t) is added; the final
// position (where EOS is the correct token) is never penalised.
double compute_loss(std::span<const PositionProbs> positions, const LossSpec& spec);
double eos_unlikelihood_term(std::span<const PositionProbs> positions);
// d/dp of -ln(1 - p).
double eos_unlikelihood_derivative(double eos_prob);

// Softmax over the candidates' raw log-scores. -inf entries get zero mass;
// throws Error(numeric) if every entry is -inf.
std::vector<double> restricted_softmax(std::span<const double> log_scores);

class LmBackend {
 public:
  virtual ~LmBackend() = default;

  // Validates inputs, then renormalizes the backend's raw candidate scores.
  // Errors: no placeholder, empty candidate list, multi-token candidate.
  MaskFillResult mask_fill(std::string_view input,
                           std::span<const std::string> candidates) const;

  GenerationResult generate(std::string_view input,
                            const GenerateOptions& options) const;

  // Raw next-token probabilities for exactly the listed tokens; not
  // renormalized over the list.
  std::map<std::string, double> first_token_distribution(
      std::string_view input, std::span<const std::string> first_tokens) const;

  virtual std::string first_token_of(std::string_view value) const = 0;

  // Returns a new handle; this one is left untouched.
  std::shared_ptr<const LmBackend> fine_tune(std::span<const TrainingPair> dataset,
                                             const LossSpec& spec,
                                             const FineTuneConfig& config) const;

  // Enough to reopen this backend later (see open_backend).
  virtual nlohmann::json descriptor() const = 0;

 protected:
  // [mask][candidate] log-scores; mask_count placeholders already verified.
  virtual std::vector<std::vector<double>> mask_log_scores(
      std::string_view input, std::span<const std::string> candidates,
      std::size_t mask_count) const = 0;
  virtual GenerationResult do_generate(std::string_view input,
                                       const GenerateOptions& options) const = 0;
  virtual std::vector<double> first_token_probs(
      std::string_view input, std::span<const std::string> tokens) const = 0;
  virtual std::shared_ptr<const LmBackend> do_fine_tune(
      std::span<const TrainingPair> dataset, const LossSpec& spec,
      const FineTuneConfig& config) const = 0;
};

using BackendPtr = std::shared_ptr<const LmBackend>;

// {"kind": "mock", "table": <path>} | {"kind": "mock", "inline": {...}} |
// {"kind": "remote", "url": ..., "model": ...}
BackendPtr open_backend(const nlohmann::json& descriptor);

}  // namespace promptdst
