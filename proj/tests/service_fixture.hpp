#pragma once

#include <chrono>
#include <thread>

#include "dvp/service.hpp"
#include "test_support.hpp"

#include <httplib.h>
#include <json.hpp>

namespace testing {

// Inpainter that always fails with a fixed code.
class FailingInpainter : public dvp::InpaintBackend {
 public:
  explicit FailingInpainter(dvp::Errc code) : code_(code) {}
  std::string name() const override { return "failing"; }
  dvp::RasterImage inpaint(const dvp::VisualPrompt&, const dvp::GenerationParams&) override {
    throw dvp::Error(code_, "injected failure");
  }

 private:
  dvp::Errc code_;
};

struct ServiceHarness {
  TempDir tmp{"service"};
  std::unique_ptr<dvp::Service> service;
  std::unique_ptr<httplib::Client> client;
  int port = 0;

  explicit ServiceHarness(std::unique_ptr<dvp::InpaintBackend> inpainter = nullptr) {
    dvp::ServiceOptions opt;
    opt.store_dir = tmp.path / "store";
    opt.runs_dir = tmp.path / "runs";
    opt.defaults.grid = dvp::default_grid(32);
    opt.defaults.params.seed = 7;
    dvp::BackendSet set = dvp::make_backends(true);
    if (inpainter) set.inpainter = std::move(inpainter);
    service = std::make_unique<dvp::Service>(opt, std::move(set));
    port = service->start_background();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(30, 0);
  }
  ~ServiceHarness() { service->stop(); }

  std::string bank_dir(const std::string& theme = "tintin", int count = 16) {
    auto dir = tmp.path / ("bank-" + theme);
    if (!std::filesystem::exists(dir)) dvp::fixtures::write_bank(dir, theme, count, 5);
    return dir.string();
  }

  struct Reply {
    int status = 0;
    nlohmann::json body;
    std::string raw;
    std::string content_type;
  };

  static Reply wrap(const httplib::Result& r) {
    Reply out;
    if (!r) return out;
    out.status = r->status;
    out.raw = r->body;
    out.content_type = r->get_header_value("Content-Type");
    if (out.content_type.find("json") != std::string::npos && !r->body.empty()) {
      out.body = nlohmann::json::parse(r->body);
    }
    return out;
  }

  Reply get(const std::string& path) { return wrap(client->Get(path)); }
  Reply post(const std::string& path, const nlohmann::json& body) {
    return wrap(client->Post(path, body.dump(), "application/json"));
  }
  Reply del(const std::string& path) { return wrap(client->Delete(path)); }

  // Polls a run until it leaves pending/running.
  Reply wait_run(const std::string& run_id) {
    for (int i = 0; i < 600; ++i) {
      auto r = get("/v1/runs/" + run_id);
      const auto s = r.body.value("status", "");
      if (s != "pending" && s != "running") return r;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return {};
  }
};

}  // namespace testing
