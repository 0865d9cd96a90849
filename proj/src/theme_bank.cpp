#include "dvp/theme_bank.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

namespace dvp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now_iso8601() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_bank_owned(const std::string& name) {
  return name.starts_with("bank.") || name.starts_with(".");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

}  // namespace

const BankEntry* BankManifest::find(const ImageId& id) const {
  for (const auto& e : entries) {
    if (e.image_id == id) return &e;
  }
  return nullptr;
}

std::string manifest_to_json(const BankManifest& m) {
  json doc;
  doc["version"] = m.version;
  doc["theme_name"] = m.theme_name;
  doc["created_at"] = m.created_at;
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"image_id", e.image_id},
                       {"path", e.path},
                       {"width", e.width},
                       {"height", e.height},
                       {"tags", e.tags}});
  }
  doc["entries"] = std::move(entries);
  json skipped = json::array();
  for (const auto& s : m.skipped) skipped.push_back({{"path", s.path}, {"reason", s.reason}});
  doc["skipped"] = std::move(skipped);
  doc["warnings"] = m.warnings;
  return doc.dump(2) + "\n";
}

BankManifest manifest_from_json(const std::string& text) {
  BankManifest m;
  try {
    json doc = json::parse(text);
    m.version = doc.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw Error(Errc::InvalidArgument, "unsupported manifest version " + std::to_string(m.version));
    }
    m.theme_name = doc.at("theme_name").get<std::string>();
    m.created_at = doc.value("created_at", "");
    for (const auto& e : doc.at("entries")) {
      m.entries.push_back({e.at("image_id").get<std::string>(), e.at("path").get<std::string>(),
                           e.at("width").get<int>(), e.at("height").get<int>(),
                           e.value("tags", std::vector<std::string>{})});
    }
    for (const auto& s : doc.value("skipped", json::array())) {
      m.skipped.push_back({s.at("path").get<std::string>(), s.at("reason").get<std::string>()});
    }
    m.warnings = doc.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& ex) {
    throw Error(Errc::DecodeError, std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

BankManifest scan_bank(const fs::path& dir, const std::string& theme_name) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(Errc::UnreadableDirectory, dir.string() + " is not a readable directory");
  }
  std::vector<fs::path> files;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_regular_file() && !is_bank_owned(it->path().filename().string())) {
      files.push_back(it->path());
    }
  }
  if (ec) throw Error(Errc::UnreadableDirectory, dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());

  BankManifest m;
  m.theme_name = theme_name;
  std::set<ImageId> seen;
  for (const auto& file : files) {
    const std::string rel = file.filename().string();
    RasterImage img;
    try {
      img = load_image(file.string());
    } catch (const Error& ex) {
      m.skipped.push_back({rel, ex.what()});
      continue;
    }
    ImageId id = to_hex(pixel_digest(img));
    if (!seen.insert(id).second) {
      m.skipped.push_back({rel, "duplicate of image " + id});
      continue;
    }
    m.entries.push_back({std::move(id), rel, img.width, img.height, {}});
  }
  if (m.entries.empty()) {
    throw Error(Errc::EmptyBank, dir.string() + " contains no decodable image");
  }
  if (m.entries.size() < kRecommendedBankSize) {
    m.warnings.push_back("bank has " + std::to_string(m.entries.size()) +
                         " images; at least " + std::to_string(kRecommendedBankSize) +
                         " diverse images are recommended");
  }
  return m;
}

BankManifest ingest(const fs::path& dir, const std::string& theme_name) {
  BankManifest m = scan_bank(dir, theme_name);
  BankLock lock(dir);
  if (fs::exists(dir / kManifestFile)) {
    try {
      BankManifest previous = load_manifest(dir);
      for (auto& e : m.entries) {
        if (const auto* old = previous.find(e.image_id)) e.tags = old->tags;
      }
    } catch (const Error&) {
      // unreadable previous manifest: tags are lost, nothing else depends on it
    }
  }
  m.created_at = utc_now_iso8601();
  save_manifest(dir, m);
  return m;
}

BankManifest load_manifest(const fs::path& dir) {
  fs::path p = dir / kManifestFile;
  if (!fs::exists(p)) throw Error(Errc::UnknownBank, "no manifest at " + p.string());
  auto bytes = read_file(p.string());
  return manifest_from_json(std::string(bytes.begin(), bytes.end()));
}

void save_manifest(const fs::path& dir, const BankManifest& m) {
  write_file_atomic((dir / kManifestFile).string(), manifest_to_json(m));
}

fs::path cache_path(const fs::path& dir, const std::string& backend_name) {
  return dir / ("bank." + backend_name + ".emb");
}

std::vector<std::uint8_t> serialize_cache(const EmbeddingCache& cache) {
  const auto dim = static_cast<std::uint32_t>(cache.backend.dim);
  std::vector<std::uint8_t> out = {'D', 'V', 'P', 'E'};
  put_u32(out, kCacheVersion);
  put_u32(out, dim);
  put_u32(out, static_cast<std::uint32_t>(cache.records.size()));
  // std::map orders hex ids, which orders the raw hashes identically.
  for (const auto& [id, vec] : cache.records) {
    if (static_cast<std::uint32_t>(vec.size()) != dim) {
      throw Error(Errc::DimensionMismatch, "record " + id + " has wrong dim");
    }
    auto raw = from_hex(id);
    if (raw.size() != 32) throw Error(Errc::InvalidArgument, "image id is not a sha256: " + id);
    out.insert(out.end(), raw.begin(), raw.end());
    for (Eigen::Index i = 0; i < vec.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(vec[i]));
  }
  return out;
}

EmbeddingCache parse_cache(std::span<const std::uint8_t> bytes, const std::string& backend_name) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "DVPE", 4) != 0) {
    throw Error(Errc::DecodeError, "not an embedding cache (bad magic)");
  }
  if (get_u32(bytes, 4) != kCacheVersion) {
    throw Error(Errc::DecodeError, "unsupported cache version " + std::to_string(get_u32(bytes, 4)));
  }
  const std::uint32_t dim = get_u32(bytes, 8);
  const std::uint32_t count = get_u32(bytes, 12);
  const std::size_t record = 32 + std::size_t(dim) * 4;
  if (dim == 0 || bytes.size() != 16 + record * count) {
    throw Error(Errc::DecodeError, "embedding cache size does not match its header");
  }
  EmbeddingCache cache;
  cache.backend = {backend_name, static_cast<int>(dim), Modality::Joint};
  std::size_t at = 16;
  for (std::uint32_t r = 0; r < count; ++r) {
    ImageId id = to_hex(bytes.subspan(at, 32));
    at += 32;
    EmbeddingVector v(dim);
    for (std::uint32_t i = 0; i < dim; ++i, at += 4) v[i] = std::bit_cast<float>(get_u32(bytes, at));
    cache.records.emplace(std::move(id), std::move(v));
  }
  return cache;
}

std::optional<EmbeddingCache> load_cache(const fs::path& dir,
                                         const EmbeddingBackendDescriptor& backend) {
  fs::path p = cache_path(dir, backend.name);
  if (!fs::exists(p)) return std::nullopt;
  EmbeddingCache cache = parse_cache(read_file(p.string()), backend.name);
  cache.backend.modality = backend.modality;
  if (cache.backend.dim != backend.dim) return std::nullopt;  // backend changed shape: rebuild
  return cache;
}

void save_cache(const fs::path& dir, const EmbeddingCache& cache) {
  write_file_atomic(cache_path(dir, cache.backend.name).string(), serialize_cache(cache));
}

namespace {

std::string join_ids(const std::vector<ImageId>& ids) {
  std::string s;
  for (const auto& id : ids) {
    if (!s.empty()) s += ", ";
    s += id.substr(0, 12);
  }
  return s;
}

}  // namespace

PartialCacheError::PartialCacheError(EmbeddingCache cache, std::vector<ImageId> missing)
    : Error(Errc::PartialCache, "embedding cache incomplete; missing " +
                                    std::to_string(missing.size()) + " id(s): " + join_ids(missing)),
      cache_(std::move(cache)),
      missing_(std::move(missing)) {}

EmbeddingCache build_cache(const BankManifest& manifest, const fs::path& dir,
                           EmbeddingBackend& backend, const EmbeddingCache* existing,
                           BuildStats* stats) {
  if (manifest.entries.empty()) throw Error(Errc::EmptyBank, "manifest has no entries");
  const auto desc = backend.descriptor();
  BuildStats local;
  EmbeddingCache cache;
  cache.backend = desc;

  if (existing != nullptr && existing->backend.dim == desc.dim) {
    for (const auto& [id, vec] : existing->records) {
      if (manifest.find(id) != nullptr) {
        cache.records.emplace(id, vec);
        ++local.reused;
      } else {
        ++local.dropped_orphans;
      }
    }
  }

  std::vector<ImageId> missing;
  std::size_t failures_unavailable = 0;
  std::optional<Error> last_error;
  for (const auto& entry : manifest.entries) {
    if (cache.records.contains(entry.image_id)) continue;
    RasterImage img;
    try {
      img = load_image((dir / entry.path).string());
    } catch (const Error&) {
      missing.push_back(entry.image_id);
      continue;
    }
    if (to_hex(pixel_digest(img)) != entry.image_id) {
      missing.push_back(entry.image_id);  // file changed since ingest
      continue;
    }
    try {
      ++local.backend_calls;
      EmbeddingVector v = backend.embed_image(img);
      if (v.size() != desc.dim) {
        throw Error(Errc::DimensionMismatch, "backend '" + desc.name + "' returned dim " +
                                                 std::to_string(v.size()) + ", expected " +
                                                 std::to_string(desc.dim));
      }
      cache.records.emplace(entry.image_id, std::move(v));
    } catch (const Error& ex) {
      if (!ex.retryable()) throw;
      ++failures_unavailable;
      last_error = ex;
      missing.push_back(entry.image_id);
    }
  }
  if (stats != nullptr) *stats = local;
  if (!missing.empty()) {
    if (cache.records.empty() && failures_unavailable > 0) throw *last_error;
    throw PartialCacheError(std::move(cache), std::move(missing));
  }
  return cache;
}

EmbeddingCache index_bank(const fs::path& dir, EmbeddingBackend& backend, BuildStats* stats) {
  BankManifest manifest = load_manifest(dir);
  BankLock lock(dir);
  auto existing = load_cache(dir, backend.descriptor());
  try {
    EmbeddingCache cache = build_cache(manifest, dir, backend, existing ? &*existing : nullptr, stats);
    save_cache(dir, cache);
    return cache;
  } catch (const PartialCacheError& ex) {
    save_cache(dir, ex.cache());
    throw;
  }
}

VerifyReport verify_cache(const BankManifest& manifest, const EmbeddingCache& cache,
                          const fs::path& dir) {
  VerifyReport report;
  for (const auto& entry : manifest.entries) {
    std::string actual;
    try {
      actual = to_hex(pixel_digest(load_image((dir / entry.path).string())));
    } catch (const Error&) {
      actual.clear();
    }
    if (actual != entry.image_id) report.stale.push_back(entry.image_id);
    if (!cache.records.contains(entry.image_id)) report.missing.push_back(entry.image_id);
  }
  for (const auto& [id, vec] : cache.records) {
    if (manifest.find(id) == nullptr) report.orphaned.push_back(id);
  }
  report.clean = report.stale.empty() && report.missing.empty() && report.orphaned.empty();
  return report;
}

BankLock::BankLock(const fs::path& dir) : path_(dir / "bank.lock") {
  for (int attempt = 0; attempt < 2; ++attempt) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      std::string pid = std::to_string(::getpid());
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) {
      throw Error(Errc::IoError, "cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
    // Reclaim a lock whose owner is gone.
    std::ifstream in(path_);
    long owner = 0;
    in >> owner;
    if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) != 0 && errno == ESRCH) {
      std::error_code ec;
      fs::remove(path_, ec);
      continue;
    }
    break;
  }
  throw Error(Errc::BankLocked, "bank " + path_.parent_path().string() + " is locked by another writer");
}

BankLock::~BankLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

bool BankLock::is_locked(const fs::path& dir) {
  return fs::exists(dir / "bank.lock");
}

std::shared_ptr<ThemeBank> ThemeBank::open(const fs::path& dir,
                                           const EmbeddingBackendDescriptor& backend) {
  std::shared_ptr<ThemeBank> bank(new ThemeBank());
  bank->dir_ = dir;
  bank->manifest_ = load_manifest(dir);
  auto cache = load_cache(dir, backend);
  if (!cache) {
    throw Error(Errc::PartialCache, "bank " + dir.string() + " is not indexed for backend '" +
                                        backend.name + "'");
  }
  std::vector<ImageId> missing;
  for (const auto& e : bank->manifest_.entries) {
    if (!cache->records.contains(e.image_id)) missing.push_back(e.image_id);
  }
  if (!missing.empty()) throw PartialCacheError(*cache, missing);
  bank->cache_ = std::move(*cache);
  const auto m = static_cast<Eigen::Index>(bank->manifest_.entries.size());
  bank->embeddings_.resize(m, backend.dim);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& id = bank->manifest_.entries[static_cast<std::size_t>(i)].image_id;
    bank->ids_.push_back(id);
    bank->embeddings_.row(i) = bank->cache_.records.at(id).transpose();
  }
  return bank;
}

bool ThemeBank::contains(const ImageId& id) const { return manifest_.find(id) != nullptr; }

RasterImage ThemeBank::image(const ImageId& id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = decoded_.find(id); it != decoded_.end()) return *it->second;
  }
  const BankEntry* entry = manifest_.find(id);
  if (entry == nullptr) throw Error(Errc::UnknownImage, "image " + id + " is not in the bank");
  auto img = std::make_shared<const RasterImage>(load_image((dir_ / entry->path).string()));
  std::lock_guard lock(mu_);
  decoded_.emplace(id, img);
  return *img;
}

std::string ThemeBank::digest() const {
  std::vector<std::uint8_t> bytes;
  for (const auto& id : ids_) {
    bytes.insert(bytes.end(), id.begin(), id.end());
    const auto& v = cache_.records.at(id);
    for (Eigen::Index i = 0; i < v.size(); ++i) put_u32(bytes, std::bit_cast<std::uint32_t>(v[i]));
  }
  return to_hex(sha256(bytes));
}

}  // namespace dvp
