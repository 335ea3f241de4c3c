#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "promptdst/lm_backend.hpp"

namespace promptdst {

// Table-driven backend for tests and desk-scale runs. Lookups are by exact
// input text, with "*" as the fallback entry. Table layout:
//
//   {
//     "mask_fill":   [{"input": "...", "masks": [{"hotel": 0.9, "train": 0.1}]}],
//     "generate":    [{"input": "...", "output": "hotel , train"}],
//     "first_token": [{"input": "...", "probs": {"mon": 0.2, "tue": 0.6}}],
//     "first_tokens": {"monday": "mon"},   // tokenization overrides
//     "multi_token": ["guest house"],      // strings that are not one token
//     "filler_token": "<pad>",             // emitted while EOS is suppressed
//     "memorized":   [{"input": "...", "target": "..."}]
//   }
//
// Table probabilities are full-vocabulary probabilities, so any subset sums
// to at most 1. Generation emits the scripted whitespace tokens, then EOS;
// an EOS falling inside the suppression window is replaced by the filler.
// Fine-tuning memorizes the pairs: memorized inputs answer with their target
// before the tables are consulted.
class MockBackend final : public LmBackend {
 public:
  explicit MockBackend(const nlohmann::json& table,
                       std::optional<std::filesystem::path> source = std::nullopt);
  static std::shared_ptr<const MockBackend> load(const std::filesystem::path& path);

  std::string first_token_of(std::string_view value) const override;
  nlohmann::json descriptor() const override;
  nlohmann::json table() const;

  std::size_t memorized_count() const { return memorized_.size(); }

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
  using ProbTable = std::map<std::string, double>;

  template <typename T>
  static const T* lookup(const std::map<std::string, T, std::less<>>& m,
                         std::string_view input);

  std::map<std::string, std::vector<ProbTable>, std::less<>> mask_fill_;
  std::map<std::string, std::string, std::less<>> generate_;
  std::map<std::string, ProbTable, std::less<>> first_token_;
  std::map<std::string, std::string, std::less<>> first_tokens_;
  std::set<std::string, std::less<>> multi_token_;
  std::map<std::string, std::string, std::less<>> memorized_;
  std::string filler_token_ = "<pad>";
  nlohmann::json training_log_ = nlohmann::json::array();
  std::optional<std::filesystem::path> source_;
};

}  // namespace promptdst
