#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvp/engine.hpp"

namespace dvp {

inline constexpr int kSessionVersion = 1;

struct CandidateSummary {
  std::size_t arrangement_id = 0;
  double text_score = 0.0;
  double image_score = 0.0;
  double quality_score = 0.0;
  double combined = 0.0;
  std::string canvas_digest;

  friend bool operator==(const CandidateSummary&, const CandidateSummary&) = default;
};

struct RunRecord {
  std::string run_id;
  nlohmann::json config;  // config echo of the run
  std::vector<CandidateSummary> candidates;
  std::size_t selected_id = 0;              // engine argmax
  std::optional<std::size_t> user_selected;  // human override, if any
  bool partial = false;
  std::string run_dir;
};

struct Session {
  std::string session_id;
  std::string bank_dir;
  std::string theme;
  std::size_t n = 3;
  std::size_t k = 3;
  PreparedPrompt prepared;
  Pins pins;
  std::map<ImageId, std::string> extra_images;  // uploaded image id -> PNG path
  ScoreWeights weights;
  std::size_t runs_started = 0;    // run ids are <session_id>-r<count>
  std::vector<RunRecord> history;  // append-only
};

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);
nlohmann::json run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

RunRecord summarize_run(const RunResult& run);

// One JSON document per session under root/<id>/session.json, plus the
// session's uploaded images. Writes are atomic; mutation of one session is
// serialized through mutex_for().
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  // Assigns the next id ("s-000001", ...) and persists.
  Session create(Session s);
  Session load(const std::string& id) const;  // throws UnknownSession
  void save(const Session& s);
  bool exists(const std::string& id) const;
  std::vector<std::string> list() const;

  std::shared_ptr<std::mutex> mutex_for(const std::string& id);

  // Stores canonical PNG bytes for an uploaded image; returns its id.
  ImageId add_image(Session& s, const RasterImage& image);
  std::map<ImageId, RasterImage> load_images(const Session& s) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

Session open_session(SessionStore& store, const ThemeBank& bank, const std::string& prompt, std::size_t n,
                     std::size_t k, const std::vector<std::string>& elements_override, const Backends& backends);

struct RefineRequest {
  std::optional<Pins> pins;  // replaces the session pins when set
  std::optional<std::string> new_prompt;
  std::optional<ScoreWeights> weights;
};

// Throws UnknownImage for a pin naming neither a bank nor an uploaded image.
void check_pins(const Session& s, const ThemeBank& bank, const Pins& pins, const GridSpec& grid);

// First half of a refinement: validates and applies the request to the
// session, allocates the next run id and persists. Returns the run config
// built from `base` (grid, stars, params, runs_dir) and the session state.
GenerateConfig apply_refinement(SessionStore& store, Session& session, const ThemeBank& bank,
                                const RefineRequest& request, const GenerateConfig& base, const Backends& backends);

// Second half: reloads the session and appends the finished run.
void record_run(SessionStore& store, Session& session, const RunResult& run);

// apply_refinement + execute_run + record_run.
RunResult refine(SessionStore& store, Session& session, const ThemeBank& bank, const RefineRequest& request,
                 const GenerateConfig& base, const Backends& backends);

// Records a human choice for history[run_index]; the id must be one of
// that run's candidates.
void select_candidate(SessionStore& store, Session& session, std::size_t run_index, std::size_t arrangement_id);

}  // namespace dvp
