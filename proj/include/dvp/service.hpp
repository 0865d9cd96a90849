#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dvp/backends.hpp"
#include "dvp/session.hpp"

namespace httplib {
class Server;
}

namespace dvp {

struct ServiceOptions {
  std::filesystem::path store_dir = "sessions";
  std::filesystem::path runs_dir = "runs";
  std::size_t run_workers = 2;
  std::string cors_origin = "*";
  GenerateConfig defaults;  // grid, stars, params for every run
};

// HTTP status for an engine error code.
int http_status(Errc code);
nlohmann::json error_body(Errc code, const std::string& message);

// Stable id for a bank directory (hash of its absolute path).
std::string bank_id_for(const std::filesystem::path& dir);

// /v1 JSON API over a file-backed session store. Runs execute on a small
// worker pool; their status lives in the store so a restarted service
// answers GETs identically.
class Service {
 public:
  Service(ServiceOptions options, BackendSet backends);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves until stop(). Returns false if the address is taken.
  bool listen(const std::string& host, int port);
  // Binds to a free port and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  // Blocks until the run queue is empty and no run is executing.
  void drain();

 private:
  struct PendingRun {
    std::string run_id;
    std::string session_id;
    std::string bank_dir;
    PreparedPrompt prepared;  // snapshot at submission
    GenerateConfig config;
  };

  void routes();
  void work();
  void execute(const PendingRun& job);
  std::shared_ptr<ThemeBank> bank_by_dir(const std::string& dir);
  std::shared_ptr<ThemeBank> bank_by_id(const std::string& id);
  nlohmann::json session_view(const Session& s);
  std::string publish_blob(const std::filesystem::path& file);
  void write_run_status(const nlohmann::json& status);
  std::shared_ptr<std::mutex> run_lock(const std::string& session_id);

  ServiceOptions options_;
  BackendSet backend_set_;
  Backends backends_;
  SessionStore store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;

  std::mutex banks_mu_;
  std::map<std::string, std::shared_ptr<ThemeBank>> banks_;  // by directory

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<PendingRun> queue_;
  std::size_t active_ = 0;
  bool stopping_ = false;
  std::map<std::string, std::shared_ptr<std::mutex>> run_locks_;
  std::vector<std::thread> workers_;
};

}  // namespace dvp
