#include "promptdst/remote_backend.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include <httplib.h>

#include "promptdst/error.hpp"
#include "util.hpp"

namespace promptdst {

using nlohmann::json;

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  if (options_.url.empty()) throw Error(ErrorKind::config, "remote backend needs a url");
  if (options_.model.empty()) throw Error(ErrorKind::config, "remote backend needs a model name");
  const auto scheme = options_.url.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorKind::config, "remote url must include a scheme: " + options_.url);
  const auto slash = options_.url.find('/', scheme + 3);
  host_ = options_.url.substr(0, slash);
  prefix_ = slash == std::string::npos ? "" : options_.url.substr(slash);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (options_.max_retries < 0) options_.max_retries = 0;
}

json RemoteBackend::descriptor() const {
  return {{"kind", "remote"}, {"url", options_.url}, {"model", options_.model}};
}

json RemoteBackend::make_request(std::string_view endpoint, json body) const {
  body["model"] = options_.model;
  body.erase("request_id");
  std::string key(endpoint);
  key += '\n';
  key += detail::dump_precise(body);
  body["request_id"] = detail::hex64(detail::fnv1a64(key));
  return body;
}

json RemoteBackend::post(std::string_view endpoint, json body) const {
  const std::string payload = detail::dump_precise(make_request(endpoint, std::move(body)));
  const std::string path = prefix_ + "/" + std::string(endpoint);

  std::string last_failure;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    httplib::Client client(host_);
    const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_failure = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::backend, std::string(endpoint) + ": malformed reply: " + e.what());
    }
    if (res->status < 200 || res->status >= 300 || reply.contains("error")) {
      const std::string msg = reply.is_object() && reply.contains("error")
                                  ? reply["error"].get<std::string>()
                                  : "HTTP " + std::to_string(res->status);
      throw Error(ErrorKind::backend, std::string(endpoint) + ": " + msg);
    }
    return reply;
  }
  throw Error(ErrorKind::backend, std::string(endpoint) + ": giving up after " +
                                      std::to_string(options_.max_retries + 1) +
                                      " attempts (" + last_failure + ")");
}

namespace {

template <typename T>
T field(const json& reply, const char* name, std::string_view endpoint) {
  try {
    return reply.at(name).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::backend, std::string(endpoint) + ": bad reply field '" + name +
                                        "': " + e.what());
  }
}

}  // namespace

std::vector<std::vector<double>> RemoteBackend::mask_log_scores(
    std::string_view input, std::span<const std::string> candidates,
    std::size_t mask_count) const {
  json body{{"input", input},
            {"candidates", std::vector<std::string>(candidates.begin(), candidates.end())},
            {"mask_count", mask_count}};
  const json reply = post("score-mask", std::move(body));
  // null encodes -inf (zero probability).
  std::vector<std::vector<double>> rows;
  for (const auto& row : field<json>(reply, "per_mask_logits", "score-mask")) {
    std::vector<double> r;
    for (const auto& v : row)
      r.push_back(v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>());
    rows.push_back(std::move(r));
  }
  return rows;
}

GenerationResult RemoteBackend::do_generate(std::string_view input,
                                            const GenerateOptions& options) const {
  json body{{"input", input},
            {"beam_size", options.beam_size},
            {"max_new_tokens", options.max_new_tokens},
            {"suppress_eos_until", options.suppress_eos_until}};
  const json reply = post("generate", std::move(body));
  GenerationResult out;
  out.text = field<std::string>(reply, "text", "generate");
  out.token_count = field<int>(reply, "token_count", "generate");
  if (out.token_count < 0)
    throw Error(ErrorKind::backend, "generate: negative token_count");
  return out;
}

std::vector<double> RemoteBackend::first_token_probs(
    std::string_view input, std::span<const std::string> tokens) const {
  json body{{"input", input},
            {"first_tokens", std::vector<std::string>(tokens.begin(), tokens.end())}};
  return field<std::vector<double>>(post("first-token", std::move(body)), "probs",
                                    "first-token");
}

std::string RemoteBackend::first_token_of(std::string_view value) const {
  json body{{"values", std::vector<std::string>{std::string(value)}}};
  const auto toks = field<std::vector<std::string>>(post("first-token", std::move(body)),
                                                    "first_tokens", "first-token");
  if (toks.size() != 1) throw Error(ErrorKind::backend, "first-token: expected one token");
  return toks.front();
}

std::shared_ptr<const LmBackend> RemoteBackend::do_fine_tune(
    std::span<const TrainingPair> dataset, const LossSpec& spec,
    const FineTuneConfig& config) const {
  json pairs = json::array();
  for (const auto& p : dataset)
    pairs.push_back({{"input", p.input}, {"target", p.target}, {"eos", p.eos_terminated}});
  json body{{"dataset", std::move(pairs)},
            {"loss", {{"kind", to_string(spec.kind)}, {"ul_weight", spec.ul_weight}}},
            {"config",
             {{"learning_rate", config.learning_rate},
              {"epochs", config.epochs},
              {"batch_size", config.batch_size},
              {"seed", config.seed}}}};
  const json started = post("train", std::move(body));
  const auto job = field<std::string>(started, "job_id", "train");

  for (int poll = 0; poll < options_.max_polls; ++poll) {
    const json status = post("train-status", json{{"job_id", job}});
    const auto state = field<std::string>(status, "state", "train-status");
    if (state == "succeeded") {
      RemoteOptions next = options_;
      next.model = field<std::string>(status, "model", "train-status");
      return std::make_shared<RemoteBackend>(std::move(next));
    }
    if (state == "failed")
      throw Error(ErrorKind::backend,
                  "remote training failed: " + status.value("message", std::string("no message")));
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.poll_interval_ms));
  }
  throw Error(ErrorKind::backend, "remote training job " + job + " did not finish");
}

}  // namespace promptdst
