#pragma once

#include <cstdint>
#include <span>

#include "dvp/similarity.hpp"

namespace dvp {

// Seeded pseudo-random unit vector determined by `bytes`: the same bytes,
// dim and seed always give the same vector, bit for bit, on any IEEE-754
// platform.
EmbeddingVector hash_to_unit_vector(std::span<const std::uint8_t> bytes, int dim,
                                    std::uint64_t seed);

// Deterministic test embedder: both modalities hash their input bytes.
class HashEmbedder : public EmbeddingBackend {
 public:
  explicit HashEmbedder(int dim = 64, std::uint64_t seed = 0, std::string name = "hash");

  EmbeddingBackendDescriptor descriptor() const override;
  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) override;
  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) override;

 private:
  int dim_;
  std::uint64_t seed_;
  std::string name_;
};

// Offline joint embedder used by --mock-backends. Text hashes like
// HashEmbedder; images map through a fixed random projection of a 4x4
// area-averaged colour thumbnail, so visually similar images land close
// together and the projection is linear in pixel values.
class MockJointEmbedder : public EmbeddingBackend {
 public:
  static constexpr int kThumb = 4;

  explicit MockJointEmbedder(int dim = 64, std::uint64_t seed = 0, std::string name = "mock");

  EmbeddingBackendDescriptor descriptor() const override;
  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) override;
  std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) override;

  // Centered thumbnail features in [-0.5, 0.5], length kThumb*kThumb*3.
  static Eigen::VectorXd thumbnail_features(const RasterImage& image);

 private:
  int dim_;
  std::uint64_t seed_;
  std::string name_;
  Eigen::MatrixXd projection_;
};

}  // namespace dvp
