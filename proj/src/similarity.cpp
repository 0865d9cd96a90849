#include "dvp/similarity.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace dvp {

std::vector<ScoredId> top_k_scored(std::span<const ScoredId> scores, std::size_t k) {
  if (k > scores.size()) {
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " exceeds " +
                                     std::to_string(scores.size()) + " scores");
  }
  std::vector<ScoredId> sorted(scores.begin(), scores.end());
  auto better = [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                    better);
  sorted.resize(k);
  return sorted;
}

std::vector<ImageId> top_k(std::span<const ScoredId> scores, std::size_t k) {
  std::vector<ImageId> ids;
  for (auto& s : top_k_scored(scores, k)) ids.push_back(std::move(s.id));
  return ids;
}

std::vector<std::uint8_t> table_bytes(const CandidateTable& table) {
  std::vector<std::uint8_t> out;
  auto put64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put64(table.k);
  put64(table.rows.size());
  for (const auto& row : table.rows) {
    put64(row.size());
    for (const auto& m : row) {
      put64(m.element_index);
      put64(m.image_id.size());
      out.insert(out.end(), m.image_id.begin(), m.image_id.end());
      put64(std::bit_cast<std::uint64_t>(m.score));
    }
  }
  return out;
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Image: return "image";
    case Modality::Joint: return "joint";
  }
  return "joint";
}

Modality modality_from_string(std::string_view s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  if (s == "joint") return Modality::Joint;
  throw Error(Errc::InvalidArgument, "unknown modality '" + std::string(s) + "'");
}

EmbeddingVector EmbeddingBackend::embed_text(const std::string& text) {
  auto v = embed_texts(std::span(&text, 1));
  if (v.size() != 1) throw Error(Errc::BackendUnavailable, "backend returned no vector");
  return std::move(v.front());
}

EmbeddingVector EmbeddingBackend::embed_image(const RasterImage& image) {
  auto v = embed_images(std::span(&image, 1));
  if (v.size() != 1) throw Error(Errc::BackendUnavailable, "backend returned no vector");
  return std::move(v.front());
}

}  // namespace dvp
