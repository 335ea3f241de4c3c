#pragma once

#include <string>

#include "promptdst/lm_backend.hpp"

namespace promptdst {

struct RemoteOptions {
  std::string url;    // "http://host:port" with optional path prefix
  std::string model;  // model name on the service
  int max_retries = 3;
  int timeout_ms = 30000;
  int poll_interval_ms = 1000;
  int max_polls = 3600;
};

// HTTP+JSON client for an external inference/training service.
//
// Every request is a POST with a JSON body carrying "model" and a
// "request_id" derived from the endpoint and body, so a retried request is
// byte-identical to the original. Floats go over the wire with 17
// significant digits. Endpoints:
//
//   /score-mask   {input, candidates, mask_count} -> {per_mask_logits: [[..]]}
//   /generate     {input, beam_size, max_new_tokens, suppress_eos_until}
//                   -> {text, token_count}
//   /first-token  {input, first_tokens} -> {probs: [..]}
//                 {values} -> {first_tokens: [..]}      (tokenizer query)
//   /train        {dataset: [{input, target, eos}], loss, config} -> {job_id}
//   /train-status {job_id} -> {state: running|succeeded|failed, model, message}
//
// Non-2xx replies with an {"error": ...} body become Error(backend) carrying
// the service message; transport failures and 5xx are retried.
class RemoteBackend final : public LmBackend {
 public:
  explicit RemoteBackend(RemoteOptions options);

  const RemoteOptions& options() const { return options_; }

  std::string first_token_of(std::string_view value) const override;
  nlohmann::json descriptor() const override;

  // The exact body that would be sent (request_id included).
  nlohmann::json make_request(std::string_view endpoint, nlohmann::json body) const;

 protected:
  std::vector<std::vector<double>> mask_log_scores(
      std::string_view input, std::span<const std::string> candidates,
      std::size_t mask_count) const override;
  GenerationResult do_generate(std::string_view input,
                               const GenerateOptions& options) const override;
  std::vector<double> first_token_probs(
      std::string_view input, std::span<const std::string> tokens) const override;
  std::shared_ptr<const LmBackend> do_fine_tune(
      std::span<const TrainingPair> dataset, const LossSpec& spec,
      const FineTuneConfig& config) const override;

 private:
  nlohmann::json post(std::string_view endpoint, nlohmann::json body) const;

  RemoteOptions options_;
  std::string host_;    // scheme://host:port
  std::string prefix_;  // path prefix without trailing slash
};

}  // namespace promptdst
