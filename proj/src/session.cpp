#include "dvp/session.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace dvp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json cell_to_json(const Cell& c) { return json::array({c.row, c.col}); }

Cell cell_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(Errc::InvalidArgument, "cell must be [row, col]");
  return {j[0].get<int>(), j[1].get<int>()};
}

json pins_to_json(const Pins& pins) {
  json out = json::array();
  for (const auto& [cell, id] : pins) out.push_back({{"cell", cell_to_json(cell)}, {"image_id", id}});
  return out;
}

Pins pins_from_json(const json& j) {
  Pins pins;
  for (const auto& p : j) pins[cell_from_json(p.at("cell"))] = p.at("image_id").get<std::string>();
  return pins;
}

fs::path session_file(const fs::path& root, const std::string& id) { return root / id / "session.json"; }

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() < 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

}  // namespace

json run_record_to_json(const RunRecord& r) {
  json cands = json::array();
  for (const auto& c : r.candidates) {
    cands.push_back({{"arrangement_id", c.arrangement_id},
                     {"text_score", c.text_score},
                     {"image_score", c.image_score},
                     {"quality_score", c.quality_score},
                     {"combined", c.combined},
                     {"canvas_digest", c.canvas_digest}});
  }
  return {{"run_id", r.run_id},
          {"config", r.config},
          {"candidates", cands},
          {"selected_id", r.selected_id},
          {"user_selected", r.user_selected ? json(*r.user_selected) : json(nullptr)},
          {"partial", r.partial},
          {"run_dir", r.run_dir}};
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.config = j.at("config");
  for (const auto& c : j.at("candidates")) {
    r.candidates.push_back({c.at("arrangement_id").get<std::size_t>(), c.at("text_score").get<double>(),
                            c.at("image_score").get<double>(), c.at("quality_score").get<double>(),
                            c.at("combined").get<double>(), c.at("canvas_digest").get<std::string>()});
  }
  r.selected_id = j.at("selected_id").get<std::size_t>();
  if (!j.at("user_selected").is_null()) r.user_selected = j["user_selected"].get<std::size_t>();
  r.partial = j.at("partial").get<bool>();
  r.run_dir = j.at("run_dir").get<std::string>();
  return r;
}

json session_to_json(const Session& s) {
  json elements = json::array();
  for (const auto& e : s.prepared.elements) {
    elements.push_back({{"index", e.index}, {"phrase", e.phrase}, {"source", to_string(e.source)}});
  }
  json table = json::array();
  for (const auto& row : s.prepared.table.rows) {
    json r = json::array();
    for (const auto& m : row) r.push_back({{"image_id", m.image_id}, {"score", m.score}});
    table.push_back(std::move(r));
  }
  json history = json::array();
  for (const auto& h : s.history) history.push_back(run_record_to_json(h));
  return {{"version", kSessionVersion},
          {"session_id", s.session_id},
          {"bank_dir", s.bank_dir},
          {"theme", s.theme},
          {"n", s.n},
          {"k", s.k},
          {"prompt", s.prepared.prompt},
          {"elements", elements},
          {"candidate_table", table},
          {"pins", pins_to_json(s.pins)},
          {"extra_images", s.extra_images},
          {"weights", {{"text", s.weights.text}, {"image", s.weights.image}, {"quality", s.weights.quality}}},
          {"runs_started", s.runs_started},
          {"history", history}};
}

Session session_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != kSessionVersion) {
      throw Error(Errc::DecodeError, "unsupported session version");
    }
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.bank_dir = j.at("bank_dir").get<std::string>();
    s.theme = j.at("theme").get<std::string>();
    s.n = j.at("n").get<std::size_t>();
    s.k = j.at("k").get<std::size_t>();
    s.prepared.prompt = j.at("prompt").get<std::string>();
    for (const auto& e : j.at("elements")) {
      s.prepared.elements.push_back({e.at("index").get<std::size_t>(), e.at("phrase").get<std::string>(),
                                     element_source_from_string(e.at("source").get<std::string>())});
    }
    s.prepared.table.k = s.k;
    const auto& rows = j.at("candidate_table");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<MatchScore> row;
      for (const auto& m : rows[i]) row.push_back({i, m.at("image_id").get<std::string>(), m.at("score").get<double>()});
      s.prepared.table.rows.push_back(std::move(row));
    }
    s.pins = pins_from_json(j.at("pins"));
    s.extra_images = j.at("extra_images").get<std::map<std::string, std::string>>();
    const auto& w = j.at("weights");
    s.weights = {w.at("text").get<double>(), w.at("image").get<double>(), w.at("quality").get<double>()};
    s.runs_started = j.at("runs_started").get<std::size_t>();
    for (const auto& h : j.at("history")) s.history.push_back(run_record_from_json(h));
    return s;
  } catch (const json::exception& ex) {
    throw Error(Errc::DecodeError, std::string("malformed session document: ") + ex.what());
  }
}

RunRecord summarize_run(const RunResult& run) {
  RunRecord r;
  r.run_id = run.run_id;
  r.config = run.report.value("config", json::object());
  for (const auto& o : run.outcomes) {
    if (!o.candidate) continue;
    const auto& c = *o.candidate;
    r.candidates.push_back({c.arrangement_id, c.text_score, c.image_score, c.quality_score, c.combined,
                            o.canvas_digest});
  }
  r.selected_id = run.selected_id;
  r.partial = run.partial;
  r.run_dir = run.run_dir.string();
  return r;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(Errc::IoError, "cannot create session store " + root_.string() + ": " + ec.message());
}

Session SessionStore::create(Session s) {
  std::lock_guard lock(mu_);
  std::size_t next = 1;
  for (const auto& e : fs::directory_iterator(root_)) {
    unsigned long v = 0;
    if (std::sscanf(e.path().filename().c_str(), "s-%lu", &v) == 1) next = std::max<std::size_t>(next, v + 1);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "s-%06zu", next);
  s.session_id = buf;
  write_file_atomic(session_file(root_, s.session_id).string(), session_to_json(s).dump(2) + "\n");
  return s;
}

bool SessionStore::exists(const std::string& id) const {
  return valid_id(id) && fs::exists(session_file(root_, id));
}

Session SessionStore::load(const std::string& id) const {
  if (!exists(id)) throw Error(Errc::UnknownSession, "no session " + id);
  auto bytes = read_file(session_file(root_, id).string());
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& ex) {
    throw Error(Errc::DecodeError, std::string("session file is not JSON: ") + ex.what());
  }
  return session_from_json(j);
}

void SessionStore::save(const Session& s) {
  if (!valid_id(s.session_id)) throw Error(Errc::UnknownSession, "invalid session id " + s.session_id);
  write_file_atomic(session_file(root_, s.session_id).string(), session_to_json(s).dump(2) + "\n");
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (fs::exists(e.path() / "session.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::shared_ptr<std::mutex> SessionStore::mutex_for(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

ImageId SessionStore::add_image(Session& s, const RasterImage& image) {
  const ImageId id = to_hex(pixel_digest(image));
  const fs::path path = root_ / s.session_id / "images" / (id + ".png");
  if (!fs::exists(path)) save_png(path.string(), image);
  s.extra_images[id] = fs::relative(path, root_).string();
  return id;
}

std::map<ImageId, RasterImage> SessionStore::load_images(const Session& s) const {
  std::map<ImageId, RasterImage> out;
  for (const auto& [id, rel] : s.extra_images) out[id] = load_image((root_ / rel).string());
  return out;
}

Session open_session(SessionStore& store, const ThemeBank& bank, const std::string& prompt, std::size_t n,
                     std::size_t k, const std::vector<std::string>& elements_override, const Backends& backends) {
  Session s;
  s.bank_dir = bank.dir().string();
  s.theme = bank.manifest().theme_name;
  s.prepared = prepare_prompt(bank, prompt, n, k, elements_override, backends);
  s.n = s.prepared.elements.size();
  s.k = k;
  return store.create(std::move(s));
}

void check_pins(const Session& s, const ThemeBank& bank, const Pins& pins, const GridSpec& grid) {
  validate_pins(pins, grid);
  for (const auto& [cell, id] : pins) {
    if (!bank.contains(id) && !s.extra_images.contains(id)) {
      throw Error(Errc::UnknownImage, "image " + id + " is not in the bank or uploaded to session " + s.session_id);
    }
  }
}

GenerateConfig apply_refinement(SessionStore& store, Session& session, const ThemeBank& bank,
                                const RefineRequest& request, const GenerateConfig& base, const Backends& backends) {
  if (!store.exists(session.session_id)) throw Error(Errc::UnknownSession, "no session " + session.session_id);
  Session next = session;
  if (request.pins) next.pins = *request.pins;
  check_pins(next, bank, next.pins, base.grid);
  if (request.weights) {
    request.weights->validate();
    next.weights = *request.weights;
  }
  if (request.new_prompt) next.prepared = prepare_prompt(bank, *request.new_prompt, next.n, next.k, {}, backends);
  next.runs_started += 1;

  GenerateConfig cfg = base;
  cfg.n = next.n;
  cfg.k = next.k;
  cfg.elements.clear();
  cfg.pins = next.pins;
  cfg.weights = next.weights;
  cfg.extra_images = store.load_images(next);
  cfg.run_id = next.session_id + "-r" + std::to_string(next.runs_started);
  store.save(next);
  session = std::move(next);
  return cfg;
}

void record_run(SessionStore& store, Session& session, const RunResult& run) {
  session = store.load(session.session_id);
  session.history.push_back(summarize_run(run));
  store.save(session);
}

RunResult refine(SessionStore& store, Session& session, const ThemeBank& bank, const RefineRequest& request,
                 const GenerateConfig& base, const Backends& backends) {
  GenerateConfig cfg = apply_refinement(store, session, bank, request, base, backends);
  RunResult run = execute_run(bank, session.prepared, cfg, backends);
  record_run(store, session, run);
  return run;
}

void select_candidate(SessionStore& store, Session& session, std::size_t run_index, std::size_t arrangement_id) {
  if (run_index >= session.history.size()) {
    throw Error(Errc::UnknownJob, "session " + session.session_id + " has no run #" + std::to_string(run_index));
  }
  auto& rec = session.history[run_index];
  bool found = std::any_of(rec.candidates.begin(), rec.candidates.end(),
                           [&](const CandidateSummary& c) { return c.arrangement_id == arrangement_id; });
  if (!found) {
    throw Error(Errc::InvalidArgument, "arrangement " + std::to_string(arrangement_id) + " is not a candidate of " +
                                           rec.run_id);
  }
  rec.user_selected = arrangement_id;
  store.save(session);
}

}  // namespace dvp
