#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dvp/error.hpp"
#include "dvp/image.hpp"

namespace dvp {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One embedding per row.
template <typename Scalar>
using EmbeddingMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using EmbeddingVector = Embedding<float>;

// Bank identity: 64-char lowercase hex content hash.
using ImageId = std::string;

template <typename DerivedA, typename DerivedB>
void check_same_dim(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw Error(Errc::DimensionMismatch, "embedding dims differ: " + std::to_string(a.size()) +
                                             " vs " + std::to_string(b.size()));
  }
}

template <typename Derived>
bool is_zero(const Eigen::MatrixBase<Derived>& v) {
  return (v.array() == typename Derived::Scalar(0)).all();
}

// dot(a,b) / (|a| |b|). Symmetric to the bit: the element-wise products
// commute and are reduced in the same order for either argument order.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  check_same_dim(a, b);
  if (a.size() == 0 || is_zero(a) || is_zero(b)) {
    throw Error(Errc::ZeroVector, "cosine of a zero vector is undefined");
  }
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  return a.dot(b) / (na * nb);
}

template <typename Derived>
Embedding<typename Derived::Scalar> normalized(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0 || is_zero(v)) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
  return v / v.norm();
}

template <typename Scalar>
void normalize_rows(EmbeddingMatrix<Scalar>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (is_zero(m.row(i))) {
      throw Error(Errc::ZeroVector, "row " + std::to_string(i) + " is a zero vector");
    }
    m.row(i) /= m.row(i).norm();
  }
}

template <typename Scalar>
EmbeddingMatrix<Scalar> stack_rows(std::span<const Embedding<Scalar>> vecs) {
  if (vecs.empty()) return {};
  const Eigen::Index dim = vecs.front().size();
  EmbeddingMatrix<Scalar> m(static_cast<Eigen::Index>(vecs.size()), dim);
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    check_same_dim(vecs.front(), vecs[i]);
    m.row(static_cast<Eigen::Index>(i)) = vecs[i].transpose();
  }
  return m;
}

struct ScoredId {
  ImageId id;
  double score = 0.0;
};

// Ids of the k largest scores, descending; equal scores order by ascending id.
std::vector<ImageId> top_k(std::span<const ScoredId> scores, std::size_t k);

// Same selection returning the scored entries.
std::vector<ScoredId> top_k_scored(std::span<const ScoredId> scores, std::size_t k);

struct MatchScore {
  std::size_t element_index = 0;
  ImageId image_id;
  double score = 0.0;

  friend bool operator==(const MatchScore&, const MatchScore&) = default;
};

struct CandidateTable {
  std::size_t k = 0;
  std::vector<std::vector<MatchScore>> rows;  // one row per key element

  std::size_t n() const { return rows.size(); }
  friend bool operator==(const CandidateTable&, const CandidateTable&) = default;
};

// Canonical byte form of a table (ids, then scores as IEEE-754 bits).
std::vector<std::uint8_t> table_bytes(const CandidateTable& table);

// For every element row, the top-k bank images by cosine similarity. Vectors
// are normalized once so the N x M score block is a single product.
template <typename Scalar>
CandidateTable match_elements(const EmbeddingMatrix<Scalar>& elements,
                              const EmbeddingMatrix<Scalar>& bank,
                              std::span<const ImageId> bank_ids, std::size_t k) {
  if (elements.rows() == 0) throw Error(Errc::InvalidArgument, "need at least one element");
  if (static_cast<std::size_t>(bank.rows()) != bank_ids.size()) {
    throw Error(Errc::InvalidArgument, "bank ids and vectors differ in count");
  }
  if (bank.rows() > 0 && elements.cols() != bank.cols()) {
    throw Error(Errc::DimensionMismatch, "element dim " + std::to_string(elements.cols()) +
                                             " vs bank dim " + std::to_string(bank.cols()));
  }
  if (k > bank_ids.size()) {
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " exceeds bank size " +
                                     std::to_string(bank_ids.size()));
  }
  EmbeddingMatrix<Scalar> e = elements;
  EmbeddingMatrix<Scalar> b = bank;
  normalize_rows(e);
  normalize_rows(b);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sims = e * b.transpose();

  CandidateTable table;
  table.k = k;
  std::vector<ScoredId> row_scores(bank_ids.size());
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    for (Eigen::Index j = 0; j < sims.cols(); ++j) {
      row_scores[static_cast<std::size_t>(j)] = {bank_ids[static_cast<std::size_t>(j)],
                                                 static_cast<double>(sims(i, j))};
    }
    auto best = top_k_scored(row_scores, k);
    std::vector<MatchScore> row;
    row.reserve(k);
    for (auto& s : best) row.push_back({static_cast<std::size_t>(i), std::move(s.id), s.score});
    table.rows.push_back(std::move(row));
  }
  return table;
}

enum class Modality { Text, Image, Joint };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct EmbeddingBackendDescriptor {
  std::string name;
  int dim = 0;
  Modality modality = Modality::Joint;

  friend bool operator==(const EmbeddingBackendDescriptor&,
                         const EmbeddingBackendDescriptor&) = default;
};

// Contract every embedding backend satisfies. Joint backends return text and
// image vectors of identical dim. Implementations must be callable from
// several threads at once.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual EmbeddingBackendDescriptor descriptor() const = 0;
  virtual std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) = 0;
  virtual std::vector<EmbeddingVector> embed_images(std::span<const RasterImage> images) = 0;

  EmbeddingVector embed_text(const std::string& text);
  EmbeddingVector embed_image(const RasterImage& image);
};

}  // namespace dvp
