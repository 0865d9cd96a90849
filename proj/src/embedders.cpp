#include "dvp/embedders.hpp"

#include <algorithm>
#include <cmath>

namespace dvp {
namespace {

std::vector<std::uint8_t> tagged(char tag, std::span<const std::uint8_t> body) {
  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 2);
  out.push_back(static_cast<std::uint8_t>(tag));
  out.push_back(':');
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::uint8_t> canonical_pixels(const RasterImage& image) {
  std::vector<std::uint8_t> buf;
  buf.reserve(8 + image.pixels.size());
  for (auto v : {image.width, image.height}) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(std::uint32_t(v) >> (8 * i)));
  }
  buf.insert(buf.end(), image.pixels.begin(), image.pixels.end());
  return buf;
}

void check_dim(int dim) {
  if (dim <= 0) throw Error(Errc::InvalidArgument, "embedding dim must be positive");
}

}  // namespace

EmbeddingVector hash_to_unit_vector(std::span<const std::uint8_t> bytes, int dim,
                                    std::uint64_t seed) {
  check_dim(dim);
  SplitMix64 rng(digest_seed(sha256(bytes)) ^ seed);
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.next_signed_unit();
  } while (is_zero(v));
  v /= v.norm();
  return v.cast<float>();
}

HashEmbedder::HashEmbedder(int dim, std::uint64_t seed, std::string name)
    : dim_(dim), seed_(seed), name_(std::move(name)) {
  check_dim(dim);
}

EmbeddingBackendDescriptor HashEmbedder::descriptor() const {
  return {name_, dim_, Modality::Joint};
}

std::vector<EmbeddingVector> HashEmbedder::embed_texts(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto body = std::span(reinterpret_cast<const std::uint8_t*>(t.data()), t.size());
    out.push_back(hash_to_unit_vector(tagged('t', body), dim_, seed_));
  }
  return out;
}

std::vector<EmbeddingVector> HashEmbedder::embed_images(std::span<const RasterImage> images) {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    out.push_back(hash_to_unit_vector(tagged('i', canonical_pixels(img)), dim_, seed_));
  }
  return out;
}

MockJointEmbedder::MockJointEmbedder(int dim, std::uint64_t seed, std::string name)
    : dim_(dim), seed_(seed), name_(std::move(name)) {
  check_dim(dim);
  constexpr int features = kThumb * kThumb * 3;
  projection_.resize(dim, features);
  SplitMix64 rng(seed ^ 0x6D6F636B6A6F696EULL);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < features; ++c) projection_(r, c) = rng.next_signed_unit();
  }
}

EmbeddingBackendDescriptor MockJointEmbedder::descriptor() const {
  return {name_, dim_, Modality::Joint};
}

std::vector<EmbeddingVector> MockJointEmbedder::embed_texts(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto body = std::span(reinterpret_cast<const std::uint8_t*>(t.data()), t.size());
    out.push_back(hash_to_unit_vector(tagged('t', body), dim_, seed_));
  }
  return out;
}

Eigen::VectorXd MockJointEmbedder::thumbnail_features(const RasterImage& image) {
  if (image.empty()) throw Error(Errc::InvalidArgument, "cannot embed an empty image");
  Eigen::VectorXd f(kThumb * kThumb * 3);
  auto span_of = [](int i, int extent) {
    int lo = i * extent / kThumb;
    int hi = std::max((i + 1) * extent / kThumb, lo + 1);
    return std::pair{std::min(lo, extent - 1), std::min(hi, extent)};
  };
  for (int ty = 0; ty < kThumb; ++ty) {
    auto [y0, y1] = span_of(ty, image.height);
    for (int tx = 0; tx < kThumb; ++tx) {
      auto [x0, x1] = span_of(tx, image.width);
      std::uint64_t sum[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const auto* p = image.at(x, y);
          for (int c = 0; c < 3; ++c) sum[c] += p[c];
        }
      }
      const double count = static_cast<double>(y1 - y0) * (x1 - x0);
      for (int c = 0; c < 3; ++c) {
        f[(ty * kThumb + tx) * 3 + c] = static_cast<double>(sum[c]) / count / 255.0 - 0.5;
      }
    }
  }
  return f;
}

std::vector<EmbeddingVector> MockJointEmbedder::embed_images(std::span<const RasterImage> images) {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    Eigen::VectorXd v = projection_ * thumbnail_features(img);
    if (is_zero(v)) v[0] = 1.0;
    out.push_back((v / v.norm()).cast<float>());
  }
  return out;
}

}  // namespace dvp
