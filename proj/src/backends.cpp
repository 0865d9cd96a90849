#include "dvp/backends.hpp"

#include <cstdlib>

#include "dvp/embedders.hpp"
#include "dvp/remote.hpp"

namespace dvp {

namespace {

RemoteConfig require_remote(const std::string& prefix, std::chrono::seconds timeout) {
  auto cfg = remote_config_from_env(prefix, timeout);
  if (!cfg) throw Error(Errc::BackendUnavailable, prefix + "_URL is not set; use --mock-backends for offline runs");
  return *cfg;
}

}  // namespace

std::unique_ptr<EmbeddingBackend> make_embedder(const std::string& name) {
  if (name == "mock") return std::make_unique<MockJointEmbedder>();
  if (name == "hash") return std::make_unique<HashEmbedder>();
  if (name == "remote") {
    RemoteConfig cfg = require_remote("DVP_EMBED", std::chrono::seconds(60));
    int dim = 512;
    if (const char* d = std::getenv("DVP_EMBED_DIM")) {
      try {
        dim = std::stoi(d);
      } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, std::string("DVP_EMBED_DIM is not an integer: ") + d);
      }
    }
    const char* n = std::getenv("DVP_EMBED_NAME");
    return std::make_unique<RemoteEmbeddingBackend>(
        cfg, EmbeddingBackendDescriptor{n != nullptr ? n : "remote", dim, Modality::Joint});
  }
  throw Error(Errc::InvalidArgument, "unknown embedding backend '" + name + "' (mock, hash, remote)");
}

BackendSet make_backends(bool mock, const std::string& embedder_name, std::size_t max_in_flight) {
  BackendSet set;
  if (mock) {
    set.embedder = make_embedder("mock");
    set.inpainter = std::make_unique<MockInpaintBackend>();
    return set;
  }
  set.embedder = make_embedder(embedder_name);
  RemoteConfig inpaint = require_remote("DVP_GEN", std::chrono::seconds(120));
  inpaint.max_in_flight = max_in_flight;
  set.inpainter = std::make_unique<RemoteInpaintBackend>(inpaint);
  if (auto llm = remote_config_from_env("DVP_LLM", std::chrono::seconds(30))) {
    set.llm = std::make_unique<RemoteLlmBackend>(*llm);
  }
  return set;
}

}  // namespace dvp
