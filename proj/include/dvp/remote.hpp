#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>

#include "dvp/generation.hpp"
#include "dvp/intent.hpp"
#include "dvp/similarity.hpp"

namespace dvp {

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

// Runs fn, retrying BackendUnavailable with exponential backoff. Other
// errors propagate on first occurrence.
template <typename F>
auto with_retries(const RetryPolicy& policy, F&& fn) -> decltype(fn()) {
  auto delay = policy.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Error& ex) {
      if (ex.code() != Errc::BackendUnavailable || attempt >= policy.max_retries) throw;
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(policy.max_backoff,
                     std::chrono::milliseconds(static_cast<long long>(delay.count() * policy.multiplier)));
  }
}

struct RemoteConfig {
  std::string url;  // http://host:port/path
  std::string token;
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
  std::size_t max_in_flight = 2;
};

// Reads <PREFIX>_URL, <PREFIX>_TOKEN and <PREFIX>_TIMEOUT_S. Returns
// nullopt when the URL is unset.
std::optional<RemoteConfig> remote_config_from_env(const std::string& prefix,
                                                   std::chrono::seconds default_timeout);

struct HttpResult {
  int status = 0;
  std::string body;
};

// POSTs a JSON body; maps transport failures to BackendUnavailable/Timeout
// and 429/5xx to BackendUnavailable. Other statuses are returned.
HttpResult post_json(const RemoteConfig& cfg, const std::string& body);

// Wire: {composite_png, mask_png (base64 PNG), prompt, guidance_scale, steps,
// seed} -> {image_png} | {error: {code, message}}.
std::string inpaint_request_json(const VisualPrompt& vp, const GenerationParams& params);
RasterImage parse_inpaint_response(const HttpResult& res);

class RemoteInpaintBackend : public InpaintBackend {
 public:
  explicit RemoteInpaintBackend(RemoteConfig cfg);

  std::string name() const override { return "remote"; }
  RasterImage inpaint(const VisualPrompt& vp, const GenerationParams& params) override;

 private:
  RemoteConfig cfg_;
  std::unique_ptr<std::counting_semaphore<64>> slots_;
};

// Wire: {modality, payload: [text | base64 PNG]} -> {dim, vectors}.
class RemoteEmbeddingBackend : public EmbeddingBackend {
 public:
  RemoteEmbeddingBackend(RemoteConfig cfg, EmbeddingBackendDescriptor desc);

  EmbeddingBackendDescriptor descriptor() const override { return desc_; }
  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) override;
  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) override;

 private:
  std::vector<EmbeddingVector> call(std::string_view modality, std::vector<std::string> payload);

  RemoteConfig cfg_;
  EmbeddingBackendDescriptor desc_;
};

// Wire: {instruction, prompt, n} -> {phrases: [...]} or {text: "1. ..."}.
class RemoteLlmBackend : public LlmBackend {
 public:
  explicit RemoteLlmBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

  std::string name() const override { return "remote"; }
  std::vector<std::string> extract(const LlmRequest& request) override;

 private:
  RemoteConfig cfg_;
};

}  // namespace dvp
