#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dvp/similarity.hpp"

namespace dvp {

inline constexpr const char* kManifestFile = "bank.manifest.json";
inline constexpr int kManifestVersion = 1;
inline constexpr std::uint32_t kCacheVersion = 1;
// Banks below this size still work but ingest records a warning.
inline constexpr std::size_t kRecommendedBankSize = 15;

struct BankEntry {
  ImageId image_id;
  std::string path;  // relative to the bank directory
  int width = 0;
  int height = 0;
  std::vector<std::string> tags;

  friend bool operator==(const BankEntry&, const BankEntry&) = default;
};

struct SkippedFile {
  std::string path;
  std::string reason;

  friend bool operator==(const SkippedFile&, const SkippedFile&) = default;
};

struct BankManifest {
  int version = kManifestVersion;
  std::string theme_name;
  std::string created_at;
  std::vector<BankEntry> entries;
  std::vector<SkippedFile> skipped;
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
  const BankEntry* find(const ImageId& id) const;
};

std::string manifest_to_json(const BankManifest& m);
BankManifest manifest_from_json(const std::string& text);

// Scans `dir` (non-recursive, sorted by file name) without writing anything.
// Throws UnreadableDirectory or EmptyBank.
BankManifest scan_bank(const std::filesystem::path& dir, const std::string& theme_name);

// scan_bank + atomic manifest write under the bank lock. Tags already
// recorded for an image id survive re-ingestion.
BankManifest ingest(const std::filesystem::path& dir, const std::string& theme_name);

BankManifest load_manifest(const std::filesystem::path& dir);
void save_manifest(const std::filesystem::path& dir, const BankManifest& m);

struct EmbeddingCache {
  EmbeddingBackendDescriptor backend;
  std::map<ImageId, EmbeddingVector> records;
};

std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& backend_name);

// Binary layout, little-endian: "DVPE", u32 version, u32 dim, u32 count,
// then count x {32-byte raw hash, dim x f32}. Records are sorted by hash.
std::vector<std::uint8_t> serialize_cache(const EmbeddingCache& cache);
EmbeddingCache parse_cache(std::span<const std::uint8_t> bytes, const std::string& backend_name);

std::optional<EmbeddingCache> load_cache(const std::filesystem::path& dir,
                                         const EmbeddingBackendDescriptor& backend);
void save_cache(const std::filesystem::path& dir, const EmbeddingCache& cache);

struct BuildStats {
  std::size_t backend_calls = 0;
  std::size_t reused = 0;
  std::size_t dropped_orphans = 0;
};

// Thrown when some entries could not be embedded. Carries what was built so
// the caller can persist it and retry later.
class PartialCacheError : public Error {
 public:
  PartialCacheError(EmbeddingCache cache, std::vector<ImageId> missing);

  const EmbeddingCache& cache() const { return cache_; }
  const std::vector<ImageId>& missing() const { return missing_; }

 private:
  EmbeddingCache cache_;
  std::vector<ImageId> missing_;
};

// One backend call per entry lacking a (hash, backend) record; records for
// ids no longer in the manifest are dropped.
EmbeddingCache build_cache(const BankManifest& manifest, const std::filesystem::path& dir,
                           EmbeddingBackend& backend, const EmbeddingCache* existing = nullptr,
                           BuildStats* stats = nullptr);

// load manifest + existing cache, build_cache, save. Holds the bank lock.
EmbeddingCache index_bank(const std::filesystem::path& dir, EmbeddingBackend& backend,
                          BuildStats* stats = nullptr);

struct VerifyReport {
  bool clean = true;
  std::vector<ImageId> stale;     // file on disk no longer hashes to its id
  std::vector<ImageId> missing;   // manifest entry without a cache record
  std::vector<ImageId> orphaned;  // cache record without a manifest entry
};

VerifyReport verify_cache(const BankManifest& manifest, const EmbeddingCache& cache,
                          const std::filesystem::path& dir);

// Exclusive writer lock (`bank.lock`, created with O_EXCL). A lock left by a
// dead process is reclaimed.
class BankLock {
 public:
  explicit BankLock(const std::filesystem::path& dir);
  ~BankLock();
  BankLock(const BankLock&) = delete;
  BankLock& operator=(const BankLock&) = delete;

  static bool is_locked(const std::filesystem::path& dir);

 private:
  std::filesystem::path path_;
};

// A loaded, indexed bank: manifest plus embeddings for one backend, with
// lazy decoded-image access.
class ThemeBank {
 public:
  static std::shared_ptr<ThemeBank> open(const std::filesystem::path& dir,
                                         const EmbeddingBackendDescriptor& backend);

  const std::filesystem::path& dir() const { return dir_; }
  const BankManifest& manifest() const { return manifest_; }
  const EmbeddingCache& cache() const { return cache_; }

  // Manifest order.
  const std::vector<ImageId>& ids() const { return ids_; }
  const EmbeddingMatrix<float>& embeddings() const { return embeddings_; }

  bool contains(const ImageId& id) const;
  RasterImage image(const ImageId& id) const;

  // sha256 over the ordered image ids and cached vectors.
  std::string digest() const;

 private:
  ThemeBank() = default;

  std::filesystem::path dir_;
  BankManifest manifest_;
  EmbeddingCache cache_;
  std::vector<ImageId> ids_;
  EmbeddingMatrix<float> embeddings_;
  mutable std::mutex mu_;
  mutable std::map<ImageId, std::shared_ptr<const RasterImage>> decoded_;
};

}  // namespace dvp
