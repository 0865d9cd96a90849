#pragma once

#include <memory>
#include <string>

#include "dvp/engine.hpp"

namespace dvp {

// Owns the backends behind a Backends view.
struct BackendSet {
  std::unique_ptr<EmbeddingBackend> embedder;
  std::unique_ptr<InpaintBackend> inpainter;
  std::unique_ptr<LlmBackend> llm;

  Backends view() const { return {embedder.get(), inpainter.get(), llm.get(), nullptr}; }
};

// "mock", "hash" or "remote". Remote reads DVP_EMBED_URL, DVP_EMBED_TOKEN,
// DVP_EMBED_TIMEOUT_S, DVP_EMBED_DIM (default 512) and DVP_EMBED_NAME.
std::unique_ptr<EmbeddingBackend> make_embedder(const std::string& name);

// mock: offline embedder, mean-fill inpainting, rule-based extraction.
// Otherwise the embedder is chosen by name, inpainting comes from
// DVP_GEN_URL and extraction uses DVP_LLM_URL when set.
BackendSet make_backends(bool mock, const std::string& embedder_name = "remote", std::size_t max_in_flight = 2);

}  // namespace dvp
