#include "dvp/service.hpp"

#include <algorithm>
#include <cctype>

#include <httplib.h>

namespace dvp {

namespace fs = std::filesystem;
using nlohmann::json;

int http_status(Errc code) {
  switch (code) {
    case Errc::UnknownJob:
    case Errc::UnknownSession:
    case Errc::UnknownBank:
    case Errc::UnknownImage:
      return 404;
    case Errc::BankLocked:
    case Errc::PartialCache:
      return 409;
    case Errc::ContentRejected:
      return 422;
    case Errc::BackendUnavailable:
    case Errc::Timeout:
      return 503;
    case Errc::PartialRun:
      return 502;
    case Errc::IoError:
      return 500;
    default:
      return 400;
  }
}

json error_body(Errc code, const std::string& message) {
  return {{"error", {{"code", std::string(to_string(code))}, {"message", message}, {"retryable", is_retryable(code)}}}};
}

std::string bank_id_for(const fs::path& dir) {
  std::error_code ec;
  fs::path canon = fs::weakly_canonical(fs::absolute(dir), ec);
  if (ec) canon = fs::absolute(dir);
  return "b-" + to_hex(sha256(canon.string())).substr(0, 12);
}

namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, Errc code, const std::string& message) {
  send_json(res, error_body(code, message), http_status(code));
}

Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& ex) {
      send_error(res, ex.code(), ex.what());
    } catch (const json::exception& ex) {
      send_error(res, Errc::InvalidArgument, std::string("bad request body: ") + ex.what());
    } catch (const std::exception& ex) {
      send_error(res, Errc::IoError, ex.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::InvalidArgument, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& ex) {
    throw Error(Errc::DecodeError, std::string("request body is not JSON: ") + ex.what());
  }
}

bool safe_id(const std::string& id) {
  return !id.empty() && id.size() < 96 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

Cell cell_arg(const json& j) {
  if (j.is_string()) {
    auto cells = parse_cells(j.get<std::string>());
    if (cells.size() != 1) throw Error(Errc::InvalidArgument, "cell must be \"row,col\"");
    return cells.front();
  }
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw Error(Errc::InvalidArgument, "cell must be [row, col]");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

Pins pins_arg(const json& j) {
  if (!j.is_array()) throw Error(Errc::InvalidArgument, "pins must be a list of {cell, image_id}");
  Pins pins;
  for (const auto& p : j) pins[cell_arg(p.at("cell"))] = p.at("image_id").get<std::string>();
  return pins;
}

ScoreWeights weights_arg(const json& j) {
  ScoreWeights w;
  if (j.is_array() && j.size() == 3) {
    w = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } else if (j.is_object()) {
    w = {j.value("text", w.text), j.value("image", w.image), j.value("quality", w.quality)};
  } else {
    throw Error(Errc::InvalidArgument, "weights must be [text, image, quality] or an object");
  }
  w.validate();
  return w;
}

}  // namespace

Service::Service(ServiceOptions options, BackendSet backends)
    : options_(std::move(options)),
      backend_set_(std::move(backends)),
      backends_(backend_set_.view()),
      store_(options_.store_dir),
      server_(std::make_unique<httplib::Server>()) {
  if (backends_.embedder == nullptr || backends_.inpainter == nullptr) {
    throw Error(Errc::InvalidArgument, "service needs an embedder and an inpainting backend");
  }
  options_.defaults.grid.validate();
  fs::create_directories(options_.store_dir / "runs");
  fs::create_directories(options_.store_dir / "blobs");
  routes();
  const std::size_t n = std::max<std::size_t>(1, options_.run_workers);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { work(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

int Service::start_background(const std::string& host) {
  int port = server_->bind_to_any_port(host);
  if (port <= 0) throw Error(Errc::IoError, "cannot bind " + host);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_->is_running()) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

void Service::drain() {
  std::unique_lock lock(queue_mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && active_ == 0; });
}

std::shared_ptr<ThemeBank> Service::bank_by_dir(const std::string& dir) {
  std::lock_guard lock(banks_mu_);
  auto it = banks_.find(dir);
  if (it != banks_.end()) return it->second;
  auto bank = ThemeBank::open(dir, backends_.embedder->descriptor());
  banks_[dir] = bank;
  return bank;
}

std::shared_ptr<ThemeBank> Service::bank_by_id(const std::string& id) {
  const fs::path registry = options_.store_dir / "banks.json";
  if (safe_id(id) && fs::exists(registry)) {
    auto bytes = read_file(registry.string());
    json reg = json::parse(bytes.begin(), bytes.end());
    if (reg.contains(id)) return bank_by_dir(reg[id].at("dir").get<std::string>());
  }
  throw Error(Errc::UnknownBank, "no bank " + id);
}

std::shared_ptr<std::mutex> Service::run_lock(const std::string& session_id) {
  std::lock_guard lock(queue_mu_);
  auto& m = run_locks_[session_id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

std::string Service::publish_blob(const fs::path& file) {
  auto bytes = read_file(file.string());
  const std::string hex = to_hex(sha256(bytes));
  const fs::path dst = options_.store_dir / "blobs" / hex;
  if (!fs::exists(dst)) write_file_atomic(dst.string(), bytes);
  return "/v1/blobs/" + hex;
}

void Service::write_run_status(const json& status) {
  write_file_atomic((options_.store_dir / "runs" / (status.at("run_id").get<std::string>() + ".json")).string(),
                    status.dump(2) + "\n");
}

json Service::session_view(const Session& s) {
  json j = session_to_json(s);
  const std::string bid = bank_id_for(s.bank_dir);
  j["bank_id"] = bid;
  for (auto& row : j["candidate_table"]) {
    for (auto& m : row) m["thumbnail"] = "/v1/banks/" + bid + "/images/" + m["image_id"].get<std::string>();
  }
  for (auto& p : j["pins"]) {
    const std::string id = p["image_id"].get<std::string>();
    p["url"] = s.extra_images.contains(id) ? "/v1/sessions/" + s.session_id + "/images/" + id
                                           : "/v1/banks/" + bid + "/images/" + id;
  }
  j.erase("bank_dir");
  j.erase("extra_images");
  json uploads = json::array();
  for (const auto& [id, path] : s.extra_images) uploads.push_back(id);
  j["uploaded_images"] = uploads;
  return j;
}

void Service::work() {
  for (;;) {
    PendingRun job;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++active_;
    }
    execute(job);
    {
      std::lock_guard lock(queue_mu_);
      --active_;
    }
    idle_cv_.notify_all();
  }
}

void Service::execute(const PendingRun& job) {
  auto serial = run_lock(job.session_id);
  std::lock_guard run_guard(*serial);
  json status = {{"run_id", job.run_id}, {"session_id", job.session_id}, {"status", "running"}};
  write_run_status(status);
  try {
    auto bank = bank_by_dir(job.bank_dir);
    RunResult run = execute_run(*bank, job.prepared, job.config, backends_);
    {
      auto m = store_.mutex_for(job.session_id);
      std::lock_guard lock(*m);
      Session session = store_.load(job.session_id);
      record_run(store_, session, run);
    }
    json arrangements = json::array();
    for (const auto& a : run.report.at("arrangements")) {
      json entry = a;
      if (a.contains("artifacts")) {
        json urls = json::object();
        for (const auto& [name, rel] : a["artifacts"].items()) {
          urls[name] = publish_blob(run.run_dir / rel.get<std::string>());
        }
        entry["artifacts"] = urls;
      }
      arrangements.push_back(std::move(entry));
    }
    status["status"] = "done";
    status["selected_arrangement_id"] = run.selected_id;
    status["partial"] = run.partial;
    status["failures"] = run.report.at("failures");
    status["arrangements"] = arrangements;
    status["report"] = publish_blob(run.run_dir / "report.json");
  } catch (const Error& ex) {
    status["status"] = "failed";
    status.update(error_body(ex.code(), ex.what()));
  } catch (const std::exception& ex) {
    status["status"] = "failed";
    status.update(error_body(Errc::IoError, ex.what()));
  }
  write_run_status(status);
}

void Service::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin}});
  s.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  s.Get("/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
          send_json(res, {{"status", "ok"}, {"version", 1}});
        }));

  s.Post("/v1/banks", guarded([this](const httplib::Request& req, httplib::Response& res) {
           json body = parse_body(req);
           if (!body.contains("dir") || !body["dir"].is_string()) {
             throw Error(Errc::InvalidArgument, "'dir' is required");
           }
           const fs::path dir = body["dir"].get<std::string>();
           const std::string theme = body.value("theme", dir.filename().string());
           BankManifest m = ingest(dir, theme);
           BuildStats stats;
           index_bank(dir, *backends_.embedder, &stats);
           const std::string id = bank_id_for(dir);
           {
             std::lock_guard lock(banks_mu_);
             banks_.erase(dir.string());
             const fs::path registry = options_.store_dir / "banks.json";
             json reg = json::object();
             if (fs::exists(registry)) {
               auto bytes = read_file(registry.string());
               reg = json::parse(bytes.begin(), bytes.end());
             }
             reg[id] = {{"dir", dir.string()}, {"theme", theme}};
             write_file_atomic(registry.string(), reg.dump(2) + "\n");
           }
           bank_by_dir(dir.string());
           json skipped = json::array();
           for (const auto& sk : m.skipped) skipped.push_back({{"path", sk.path}, {"reason", sk.reason}});
           send_json(res, {{"bank_id", id},
                           {"theme", m.theme_name},
                           {"size", m.size()},
                           {"skipped", skipped},
                           {"warnings", m.warnings},
                           {"backend", backends_.embedder->descriptor().name},
                           {"embedded", stats.backend_calls},
                           {"reused", stats.reused}});
         }));

  s.Get(R"(/v1/banks/([A-Za-z0-9-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto bank = bank_by_id(req.matches[1]);
          json images = json::array();
          for (const auto& e : bank->manifest().entries) {
            images.push_back({{"image_id", e.image_id},
                              {"width", e.width},
                              {"height", e.height},
                              {"url", "/v1/banks/" + std::string(req.matches[1]) + "/images/" + e.image_id}});
          }
          send_json(res, {{"bank_id", req.matches[1]},
                          {"theme", bank->manifest().theme_name},
                          {"size", bank->manifest().size()},
                          {"digest", bank->digest()},
                          {"images", images}});
        }));

  s.Get(R"(/v1/banks/([A-Za-z0-9-]+)/images/([A-Za-z0-9]+))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto bank = bank_by_id(req.matches[1]);
          const std::string id = req.matches[2];
          if (!bank->contains(id)) throw Error(Errc::UnknownImage, "no image " + id + " in bank");
          auto png = encode_png(bank->image(id));
          res.set_header("Cache-Control", "public, max-age=31536000, immutable");
          res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));

  s.Get(R"(/v1/blobs/([0-9a-f]{64}))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const fs::path p = options_.store_dir / "blobs" / std::string(req.matches[1]);
          if (!fs::exists(p)) throw Error(Errc::UnknownImage, "no blob " + std::string(req.matches[1]));
          auto bytes = read_file(p.string());
          const bool png = bytes.size() > 8 && bytes[0] == 0x89 && bytes[1] == 'P';
          res.set_header("Cache-Control", "public, max-age=31536000, immutable");
          res.set_header("ETag", "\"" + std::string(req.matches[1]) + "\"");
          res.set_content(std::string(bytes.begin(), bytes.end()), png ? "image/png" : "application/json");
        }));

  s.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           json body = parse_body(req);
           if (!body.contains("bank_id") || !body.contains("prompt")) {
             throw Error(Errc::InvalidArgument, "'bank_id' and 'prompt' are required");
           }
           auto bank = bank_by_id(body["bank_id"].get<std::string>());
           std::vector<std::string> elements = body.value("elements", std::vector<std::string>{});
           if (body.contains("elements") && elements.empty()) throw Error(Errc::EmptyElement, "elements list is empty");
           Session sess = open_session(store_, *bank, body["prompt"].get<std::string>(),
                                       body.value("n", std::size_t{3}), body.value("k", options_.defaults.k),
                                       elements, backends_);
           send_json(res, session_view(sess));
         }));

  s.Get(R"(/v1/sessions/([A-Za-z0-9-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, session_view(store_.load(req.matches[1])));
        }));

  s.Post(R"(/v1/sessions/([A-Za-z0-9-]+)/images)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string sid = req.matches[1];
           RasterImage image;
           const bool raw = req.body.size() > 3 && (static_cast<unsigned char>(req.body[0]) == 0x89 ||
                                                    static_cast<unsigned char>(req.body[0]) == 0xFF);
           if (raw) {
             image = decode_image({reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()});
           } else {
             json body = parse_body(req);
             image = decode_image(base64_decode(body.at("image_png").get<std::string>()));
           }
           auto m = store_.mutex_for(sid);
           std::lock_guard lock(*m);
           Session sess = store_.load(sid);
           ImageId id = store_.add_image(sess, image);
           store_.save(sess);
           send_json(res, {{"image_id", id}, {"url", "/v1/sessions/" + sid + "/images/" + id}});
         }));

  s.Get(R"(/v1/sessions/([A-Za-z0-9-]+)/images/([0-9a-f]+))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          Session sess = store_.load(req.matches[1]);
          auto it = sess.extra_images.find(req.matches[2]);
          if (it == sess.extra_images.end()) throw Error(Errc::UnknownImage, "no uploaded image " + std::string(req.matches[2]));
          auto bytes = read_file((options_.store_dir / it->second).string());
          res.set_header("Cache-Control", "public, max-age=31536000, immutable");
          res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        }));

  s.Post(R"(/v1/sessions/([A-Za-z0-9-]+)/pins)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string sid = req.matches[1];
           json body = parse_body(req);
           const Cell cell = cell_arg(body.at("cell"));
           const std::string image = body.at("image_id").get<std::string>();
           auto m = store_.mutex_for(sid);
           std::lock_guard lock(*m);
           Session sess = store_.load(sid);
           Pins pins = sess.pins;
           pins[cell] = image;
           check_pins(sess, *bank_by_dir(sess.bank_dir), pins, options_.defaults.grid);
           sess.pins = std::move(pins);
           store_.save(sess);
           send_json(res, session_view(sess));
         }));

  s.Delete(R"(/v1/sessions/([A-Za-z0-9-]+)/pins)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const std::string sid = req.matches[1];
             Cell cell;
             if (req.has_param("cell")) {
               auto cells = parse_cells(req.get_param_value("cell"));
               if (cells.size() != 1) throw Error(Errc::InvalidArgument, "cell must be 'row,col'");
               cell = cells.front();
             } else {
               cell = cell_arg(parse_body(req).at("cell"));
             }
             auto m = store_.mutex_for(sid);
             std::lock_guard lock(*m);
             Session sess = store_.load(sid);
             validate_pins({{cell, "-"}}, options_.defaults.grid);
             sess.pins.erase(cell);
             store_.save(sess);
             send_json(res, session_view(sess));
           }));

  s.Post(R"(/v1/sessions/([A-Za-z0-9-]+)/runs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string sid = req.matches[1];
           json body = parse_body(req);
           RefineRequest request;
           if (body.contains("pins")) request.pins = pins_arg(body["pins"]);
           if (body.contains("weights")) request.weights = weights_arg(body["weights"]);
           if (body.contains("prompt")) request.new_prompt = body["prompt"].get<std::string>();
           GenerateConfig base = options_.defaults;
           base.runs_dir = options_.runs_dir;
           base.write_artifacts = true;
           if (body.contains("params")) {
             const auto& p = body["params"];
             base.params.seed = p.value("seed", base.params.seed);
             base.params.guidance_scale = p.value("guidance_scale", base.params.guidance_scale);
             base.params.steps = p.value("steps", base.params.steps);
             base.params.validate();
           }
           PendingRun job;
           {
             auto m = store_.mutex_for(sid);
             std::lock_guard lock(*m);
             Session sess = store_.load(sid);
             auto bank = bank_by_dir(sess.bank_dir);
             job.config = apply_refinement(store_, sess, *bank, request, base, backends_);
             job.run_id = job.config.run_id;
             job.session_id = sid;
             job.bank_dir = sess.bank_dir;
             job.prepared = sess.prepared;
           }
           write_run_status({{"run_id", job.run_id}, {"session_id", sid}, {"status", "pending"}});
           {
             std::lock_guard lock(queue_mu_);
             queue_.push_back(job);
           }
           queue_cv_.notify_one();
           send_json(res, {{"run_id", job.run_id}, {"status", "pending"}, {"url", "/v1/runs/" + job.run_id}}, 202);
         }));

  s.Get(R"(/v1/runs/([A-Za-z0-9-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string id = req.matches[1];
          const fs::path p = options_.store_dir / "runs" / (id + ".json");
          if (!safe_id(id) || !fs::exists(p)) throw Error(Errc::UnknownJob, "no run " + id);
          auto bytes = read_file(p.string());
          res.status = 200;
          res.set_content(std::string(bytes.begin(), bytes.end()), "application/json");
        }));

  s.Post(R"(/v1/sessions/([A-Za-z0-9-]+)/selection)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string sid = req.matches[1];
           json body = parse_body(req);
           const std::string run_id = body.at("run_id").get<std::string>();
           const std::size_t arrangement = body.at("arrangement_id").get<std::size_t>();
           auto m = store_.mutex_for(sid);
           std::lock_guard lock(*m);
           Session sess = store_.load(sid);
           auto it = std::find_if(sess.history.begin(), sess.history.end(),
                                  [&](const RunRecord& r) { return r.run_id == run_id; });
           if (it == sess.history.end()) throw Error(Errc::UnknownJob, "run " + run_id + " is not in session " + sid);
           select_candidate(store_, sess, static_cast<std::size_t>(it - sess.history.begin()), arrangement);
           send_json(res, session_view(sess));
         }));
}

}  // namespace dvp
