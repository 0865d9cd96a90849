#include "dvp/remote.hpp"

#include <cstdlib>
#include <iostream>

#include <httplib.h>
#include <json.hpp>

namespace dvp {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidArgument, "backend URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string env_or(const std::string& key, const std::string& fallback) {
  const char* v = std::getenv(key.c_str());
  return v != nullptr ? std::string(v) : fallback;
}

}  // namespace

std::optional<RemoteConfig> remote_config_from_env(const std::string& prefix,
                                                   std::chrono::seconds default_timeout) {
  std::string url = env_or(prefix + "_URL", "");
  if (url.empty()) return std::nullopt;
  RemoteConfig cfg;
  cfg.url = url;
  cfg.token = env_or(prefix + "_TOKEN", "");
  cfg.timeout = default_timeout;
  std::string t = env_or(prefix + "_TIMEOUT_S", "");
  if (!t.empty()) {
    try {
      cfg.timeout = std::chrono::seconds(std::stol(t));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, prefix + "_TIMEOUT_S is not an integer: " + t);
    }
  }
  return cfg;
}

HttpResult post_json(const RemoteConfig& cfg, const std::string& body) {
  auto [origin, path] = split_url(cfg.url);
  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(cfg.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (!cfg.token.empty()) headers.emplace("Authorization", "Bearer " + cfg.token);

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || elapsed >= cfg.timeout * 9 / 10) {
      throw Error(Errc::Timeout, "backend " + cfg.url + " timed out");
    }
    throw Error(Errc::BackendUnavailable, "backend " + cfg.url + ": " + httplib::to_string(err));
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(Errc::BackendUnavailable,
                "backend " + cfg.url + " answered HTTP " + std::to_string(res->status));
  }
  return {res->status, res->body};
}

std::string inpaint_request_json(const VisualPrompt& vp, const GenerationParams& params) {
  json req;
  req["composite_png"] = base64_encode(encode_png(vp.composite));
  req["mask_png"] = base64_encode(encode_png(vp.mask));
  req["prompt"] = params.prompt;
  req["guidance_scale"] = params.guidance_scale;
  req["steps"] = params.steps;
  req["seed"] = params.seed;
  return req.dump();
}

RasterImage parse_inpaint_response(const HttpResult& res) {
  json doc;
  try {
    doc = json::parse(res.body);
  } catch (const json::exception&) {
    throw Error(Errc::BackendUnavailable, "inpaint backend returned non-JSON (HTTP " + std::to_string(res.status) + ")");
  }
  if (doc.contains("error")) {
    const auto& e = doc["error"];
    std::string code = e.is_object() ? e.value("code", "") : "";
    std::string msg = e.is_object() ? e.value("message", "") : e.dump();
    if (code == "content_rejected" || code == "ContentRejected" || res.status == 422) {
      throw Error(Errc::ContentRejected, "inpaint backend rejected the request: " + msg);
    }
    if (code == "timeout" || code == "Timeout" || res.status == 408) {
      throw Error(Errc::Timeout, "inpaint backend timed out: " + msg);
    }
    throw Error(Errc::InvalidArgument, "inpaint backend error (HTTP " + std::to_string(res.status) + "): " + msg);
  }
  if (res.status != 200 || !doc.contains("image_png") || !doc["image_png"].is_string()) {
    throw Error(Errc::InvalidArgument, "inpaint backend answered HTTP " + std::to_string(res.status) +
                                           " without an image");
  }
  return decode_image(base64_decode(doc["image_png"].get<std::string>()));
}

RemoteInpaintBackend::RemoteInpaintBackend(RemoteConfig cfg)
    : cfg_(std::move(cfg)),
      slots_(std::make_unique<std::counting_semaphore<64>>(
          static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(cfg_.max_in_flight, 1, 64)))) {}

RasterImage RemoteInpaintBackend::inpaint(const VisualPrompt& vp, const GenerationParams& params) {
  params.validate();
  const std::string body = inpaint_request_json(vp, params);
  slots_->acquire();
  struct Release {
    std::counting_semaphore<64>* s;
    ~Release() { s->release(); }
  } release{slots_.get()};
  RasterImage out = with_retries(cfg_.retry, [&] { return parse_inpaint_response(post_json(cfg_, body)); });
  if (out.width != vp.composite.width || out.height != vp.composite.height) {
    throw Error(Errc::DimensionMismatch, "inpaint backend returned " + std::to_string(out.width) + "x" +
                                             std::to_string(out.height) + " for a " +
                                             std::to_string(vp.composite.width) + "x" +
                                             std::to_string(vp.composite.height) + " prompt");
  }
  if (double mad = unmasked_mean_abs_diff(out, vp); mad > 2.0 / 255.0) {
    std::cerr << "warning: inpaint backend altered unmasked pixels (mean abs diff " << mad * 255.0
              << "/255)\n";
  }
  return out;
}

RemoteEmbeddingBackend::RemoteEmbeddingBackend(RemoteConfig cfg, EmbeddingBackendDescriptor desc)
    : cfg_(std::move(cfg)), desc_(std::move(desc)) {
  if (desc_.dim <= 0) throw Error(Errc::InvalidArgument, "remote embedding backend needs a positive dim");
}

std::vector<EmbeddingVector> RemoteEmbeddingBackend::call(std::string_view modality,
                                                          std::vector<std::string> payload) {
  json req;
  req["modality"] = modality;
  req["payload"] = std::move(payload);
  const std::string body = req.dump();
  const std::size_t expected = req["payload"].size();
  return with_retries(cfg_.retry, [&] {
    HttpResult res = post_json(cfg_, body);
    if (res.status != 200) {
      throw Error(Errc::InvalidArgument, "embedding backend answered HTTP " + std::to_string(res.status));
    }
    std::vector<EmbeddingVector> out;
    try {
      json doc = json::parse(res.body);
      const int dim = doc.at("dim").get<int>();
      if (dim != desc_.dim) {
        throw Error(Errc::DimensionMismatch, "embedding backend dim " + std::to_string(dim) +
                                                 ", expected " + std::to_string(desc_.dim));
      }
      for (const auto& v : doc.at("vectors")) {
        auto values = v.get<std::vector<float>>();
        if (values.size() != static_cast<std::size_t>(dim)) {
          throw Error(Errc::DimensionMismatch, "embedding vector length differs from declared dim");
        }
        out.push_back(Eigen::Map<const EmbeddingVector>(values.data(), dim));
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::BackendUnavailable, std::string("malformed embedding response: ") + ex.what());
    }
    if (out.size() != expected) {
      throw Error(Errc::BackendUnavailable, "embedding backend returned " + std::to_string(out.size()) +
                                                " vectors for " + std::to_string(expected) + " inputs");
    }
    return out;
  });
}

std::vector<EmbeddingVector> RemoteEmbeddingBackend::embed_texts(std::span<const std::string> texts) {
  return call("text", {texts.begin(), texts.end()});
}

std::vector<EmbeddingVector> RemoteEmbeddingBackend::embed_images(std::span<const RasterImage> images) {
  std::vector<std::string> payload;
  payload.reserve(images.size());
  for (const auto& img : images) payload.push_back(base64_encode(encode_png(img)));
  return call("image", std::move(payload));
}

std::vector<std::string> RemoteLlmBackend::extract(const LlmRequest& request) {
  json req;
  req["instruction"] = request.instruction;
  req["prompt"] = request.prompt;
  req["n"] = request.n;
  HttpResult res = with_retries(cfg_.retry, [&] { return post_json(cfg_, req.dump()); });
  if (res.status != 200) {
    throw Error(Errc::BackendUnavailable, "LLM backend answered HTTP " + std::to_string(res.status));
  }
  json doc;
  try {
    doc = json::parse(res.body);
  } catch (const json::exception&) {
    throw Error(Errc::DecodeError, "LLM answer is not JSON");
  }
  if (doc.contains("phrases")) {
    if (!doc["phrases"].is_array()) throw Error(Errc::DecodeError, "'phrases' is not a list");
    std::vector<std::string> out;
    for (const auto& p : doc["phrases"]) {
      if (!p.is_string()) throw Error(Errc::DecodeError, "non-string phrase in LLM answer");
      out.push_back(p.get<std::string>());
    }
    return out;
  }
  if (doc.contains("text") && doc["text"].is_string()) return parse_numbered_list(doc["text"].get<std::string>());
  throw Error(Errc::DecodeError, "LLM answer has neither 'phrases' nor 'text'");
}

}  // namespace dvp
