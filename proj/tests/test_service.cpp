#include <catch_amalgamated.hpp>

#include "service_fixture.hpp"

using namespace dvp;
using nlohmann::json;
using testing::ServiceHarness;

TEST_CASE("every error code maps to one HTTP status") {
  CHECK(http_status(Errc::UnknownJob) == 404);
  CHECK(http_status(Errc::UnknownSession) == 404);
  CHECK(http_status(Errc::UnknownBank) == 404);
  CHECK(http_status(Errc::UnknownImage) == 404);
  CHECK(http_status(Errc::BankLocked) == 409);
  CHECK(http_status(Errc::PartialCache) == 409);
  CHECK(http_status(Errc::ContentRejected) == 422);
  CHECK(http_status(Errc::BackendUnavailable) == 503);
  CHECK(http_status(Errc::Timeout) == 503);
  CHECK(http_status(Errc::PartialRun) == 502);
  CHECK(http_status(Errc::IoError) == 500);
  for (Errc c : {Errc::InvalidArgument, Errc::DimensionMismatch, Errc::ZeroVector, Errc::KTooLarge, Errc::EmptyBank,
                 Errc::UnreadableDirectory, Errc::DecodeError, Errc::EmptyPrompt, Errc::EmptyElement, Errc::QTooLarge,
                 Errc::TooManyElements, Errc::PinOutOfBounds, Errc::PinOnCanvas, Errc::InsufficientCandidates,
                 Errc::MissingImage, Errc::ZeroSizeCell, Errc::EmptyInput}) {
    CHECK(http_status(c) == 400);
  }
  auto body = error_body(Errc::Timeout, "slow");
  CHECK(body["error"]["code"] == "Timeout");
  CHECK(body["error"]["retryable"] == true);
  CHECK(error_body(Errc::PinOnCanvas, "x")["error"]["retryable"] == false);
}

TEST_CASE("bank, session, pin and run lifecycle") {
  ServiceHarness h;
  CHECK(h.get("/v1/health").body["status"] == "ok");

  auto bank = h.post("/v1/banks", {{"dir", h.bank_dir()}, {"theme", "tintin"}});
  REQUIRE(bank.status == 200);
  CHECK(bank.body["size"] == 16);
  const std::string bank_id = bank.body["bank_id"];
  CHECK(bank_id == bank_id_for(h.bank_dir()));

  auto summary = h.get("/v1/banks/" + bank_id);
  REQUIRE(summary.status == 200);
  const std::string image_id = summary.body["images"][0]["image_id"];
  auto png = h.get("/v1/banks/" + bank_id + "/images/" + image_id);
  CHECK(png.status == 200);
  CHECK(png.content_type == "image/png");
  CHECK(to_hex(pixel_digest(decode_image({reinterpret_cast<const std::uint8_t*>(png.raw.data()), png.raw.size()}))) ==
        image_id);

  auto sess = h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "Tintin rides a horse on the grassland"}});
  REQUIRE(sess.status == 200);
  const std::string sid = sess.body["session_id"];
  CHECK(sess.body["elements"].size() == 3);
  CHECK(sess.body["candidate_table"].size() == 3);
  CHECK(sess.body["candidate_table"][0][0].contains("thumbnail"));

  auto pinned = h.post("/v1/sessions/" + sid + "/pins", {{"cell", "0,0"}, {"image_id", image_id}});
  REQUIRE(pinned.status == 200);
  CHECK(pinned.body["pins"].size() == 1);

  auto started = h.post("/v1/sessions/" + sid + "/runs", json::object());
  REQUIRE(started.status == 202);
  CHECK(started.body["status"] == "pending");
  const std::string run_id = started.body["run_id"];
  auto done = h.wait_run(run_id);
  REQUIRE(done.body["status"] == "done");
  REQUIRE(done.body["arrangements"].size() == 6);
  for (const auto& a : done.body["arrangements"]) {
    CHECK(a["status"] == "done");
    const std::string canvas = a["artifacts"]["canvas"];
    auto blob = h.get(canvas);
    CHECK(blob.status == 200);
    CHECK(blob.raw.substr(1, 3) == "PNG");
  }
  CHECK(h.get(done.body["report"].get<std::string>()).status == 200);
  // Replaying the GET gives the same bytes.
  CHECK(h.get("/v1/runs/" + run_id).raw == done.raw);

  auto view = h.get("/v1/sessions/" + sid);
  REQUIRE(view.body["history"].size() == 1);
  const std::size_t selected = done.body["selected_arrangement_id"];
  const std::size_t other = (selected + 1) % 6;
  auto sel = h.post("/v1/sessions/" + sid + "/selection", {{"run_id", run_id}, {"arrangement_id", other}});
  REQUIRE(sel.status == 200);
  CHECK(sel.body["history"][0]["user_selected"] == other);

  auto unpinned = h.del("/v1/sessions/" + sid + "/pins?cell=0,0");
  INFO(unpinned.raw);
  CHECK(unpinned.status == 200);
  CHECK(unpinned.body["pins"].empty());

  auto opts = h.client->Options("/v1/sessions");
  REQUIRE(opts);
  CHECK(opts->status == 204);
  CHECK(opts->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("element override and k on session creation") {
  ServiceHarness h;
  const std::string bank_id = h.post("/v1/banks", {{"dir", h.bank_dir()}}).body["bank_id"];
  auto sess = h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "anything"}, {"elements", {"Tintin", "Snowy", "rocket"}}, {"k", 6}});
  REQUIRE(sess.status == 200);
  CHECK(sess.body["n"] == 3);
  CHECK(sess.body["elements"][2]["phrase"] == "rocket");
  CHECK(sess.body["elements"][2]["source"] == "user");
  CHECK(sess.body["candidate_table"][0].size() == 6);
  auto empty = h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "x"}, {"elements", json::array()}});
  CHECK(empty.status == 400);
  CHECK(empty.body["error"]["code"] == "EmptyElement");
}

TEST_CASE("uploaded images can be pinned") {
  ServiceHarness h;
  const std::string bank_id = h.post("/v1/banks", {{"dir", h.bank_dir()}}).body["bank_id"];
  const std::string sid = h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "Tintin"}}).body["session_id"];
  auto png = encode_png(RasterImage(30, 20, 90));
  auto up = ServiceHarness::wrap(
      h.client->Post("/v1/sessions/" + sid + "/images", std::string(png.begin(), png.end()), "image/png"));
  REQUIRE(up.status == 200);
  const std::string iid = up.body["image_id"];
  CHECK(h.get("/v1/sessions/" + sid + "/images/" + iid).status == 200);
  auto b64 = h.post("/v1/sessions/" + sid + "/images", {{"image_png", base64_encode(png)}});
  CHECK(b64.body["image_id"] == iid);
  CHECK(h.post("/v1/sessions/" + sid + "/pins", {{"cell", "2,2"}, {"image_id", iid}}).status == 200);
  auto run = h.wait_run(h.post("/v1/sessions/" + sid + "/runs", json::object()).body["run_id"]);
  CHECK(run.body["status"] == "done");
}

TEST_CASE("error responses carry the documented status and code") {
  ServiceHarness h;
  auto expect = [](const ServiceHarness::Reply& r, int status, const std::string& code) {
    INFO(r.raw);
    CHECK(r.status == status);
    CHECK(r.body["error"]["code"] == code);
  };
  expect(h.get("/v1/runs/run-nope"), 404, "UnknownJob");
  expect(h.get("/v1/sessions/s-424242"), 404, "UnknownSession");
  expect(h.get("/v1/banks/b-000000000000"), 404, "UnknownBank");
  expect(h.post("/v1/sessions", {{"bank_id", "b-000000000000"}, {"prompt", "x"}}), 404, "UnknownBank");
  expect(h.post("/v1/banks", json::object()), 400, "InvalidArgument");
  expect(h.post("/v1/banks", {{"dir", (h.tmp.path / "absent").string()}}), 400, "UnreadableDirectory");
  std::filesystem::create_directories(h.tmp.path / "empty");
  expect(h.post("/v1/banks", {{"dir", (h.tmp.path / "empty").string()}}), 400, "EmptyBank");

  const std::string dir = h.bank_dir();
  {
    BankLock lock(dir);
    expect(h.post("/v1/banks", {{"dir", dir}}), 409, "BankLocked");
  }
  const std::string bank_id = h.post("/v1/banks", {{"dir", dir}}).body["bank_id"];
  expect(h.get("/v1/banks/" + bank_id + "/images/abc"), 404, "UnknownImage");
  expect(h.get("/v1/blobs/" + std::string(64, 'a')), 404, "UnknownImage");
  expect(h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "   "}}), 400, "EmptyPrompt");
  expect(h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "x"}, {"k", 99}}), 400, "KTooLarge");
  expect(h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "x"}, {"n", 9}}), 400, "TooManyElements");
  auto bad_json = ServiceHarness::wrap(h.client->Post("/v1/sessions", "{nope", "application/json"));
  expect(bad_json, 400, "DecodeError");

  const std::string sid = h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "Tintin"}}).body["session_id"];
  expect(h.post("/v1/sessions/" + sid + "/pins", {{"cell", "1,1"}, {"image_id", "x"}}), 400, "PinOnCanvas");
  expect(h.post("/v1/sessions/" + sid + "/pins", {{"cell", "5,0"}, {"image_id", "x"}}), 400, "PinOutOfBounds");
  expect(h.post("/v1/sessions/" + sid + "/pins", {{"cell", "0,0"}, {"image_id", std::string(64, 'f')}}), 404,
         "UnknownImage");
  expect(h.get("/v1/sessions/" + sid + "/images/" + std::string(64, 'f')), 404, "UnknownImage");
  expect(h.post("/v1/sessions/" + sid + "/runs", {{"weights", {0, 0, 0}}}), 400, "InvalidArgument");
  expect(h.post("/v1/sessions/" + sid + "/selection", {{"run_id", "s-000001-r9"}, {"arrangement_id", 0}}), 404,
         "UnknownJob");
  auto upload = ServiceHarness::wrap(h.client->Post("/v1/sessions/" + sid + "/images", "\x89PNGgarbage", "image/png"));
  expect(upload, 400, "DecodeError");

}

TEST_CASE("backend failures surface on the run resource") {
  for (auto [code, name] : {std::pair{Errc::ContentRejected, "ContentRejected"},
                            std::pair{Errc::BackendUnavailable, "BackendUnavailable"}}) {
    ServiceHarness h(std::make_unique<testing::FailingInpainter>(code));
    const std::string bank_id = h.post("/v1/banks", {{"dir", h.bank_dir()}}).body["bank_id"];
    const std::string sid = h.post("/v1/sessions", {{"bank_id", bank_id}, {"prompt", "Tintin"}}).body["session_id"];
    auto run = h.wait_run(h.post("/v1/sessions/" + sid + "/runs", json::object()).body["run_id"]);
    CHECK(run.status == 200);
    CHECK(run.body["status"] == "failed");
    CHECK(run.body["error"]["code"] == name);
    CHECK(http_status(code) == (code == Errc::ContentRejected ? 422 : 503));
  }
}

TEST_CASE("run status survives a restart") {
  testing::TempDir shared("restart");
  std::string run_id, first;
  const auto bank = shared.path / "bank";
  fixtures::write_bank(bank, "tintin", 16, 5);
  auto make = [&] {
    ServiceOptions opt;
    opt.store_dir = shared.path / "store";
    opt.runs_dir = shared.path / "runs";
    opt.defaults.grid = default_grid(32);
    return std::make_unique<Service>(opt, make_backends(true));
  };
  {
    auto svc = make();
    httplib::Client c("127.0.0.1", svc->start_background());
    auto b = json::parse(c.Post("/v1/banks", json{{"dir", bank.string()}}.dump(), "application/json")->body);
    auto s = json::parse(
        c.Post("/v1/sessions", json{{"bank_id", b["bank_id"]}, {"prompt", "Tintin"}}.dump(), "application/json")->body);
    auto r = json::parse(c.Post("/v1/sessions/" + s["session_id"].get<std::string>() + "/runs", "{}", "application/json")->body);
    run_id = r["run_id"];
    svc->drain();
    first = c.Get("/v1/runs/" + run_id)->body;
    svc->stop();
  }
  auto svc = make();
  httplib::Client c("127.0.0.1", svc->start_background());
  CHECK(c.Get("/v1/runs/" + run_id)->body == first);
  CHECK(json::parse(first)["status"] == "done");
  svc->stop();
}

TEST_CASE("a bank whose cache went missing answers PartialCache") {
  testing::TempDir shared("stale");
  const auto bank = shared.path / "bank";
  fixtures::write_bank(bank, "tintin", 16, 5);
  ServiceOptions opt;
  opt.store_dir = shared.path / "store";
  opt.runs_dir = shared.path / "runs";
  opt.defaults.grid = default_grid(32);
  std::string bank_id;
  {
    Service svc(opt, make_backends(true));
    httplib::Client c("127.0.0.1", svc.start_background());
    bank_id = json::parse(c.Post("/v1/banks", json{{"dir", bank.string()}}.dump(), "application/json")->body)["bank_id"];
    svc.stop();
  }
  std::filesystem::remove(cache_path(bank, "mock"));
  Service svc(opt, make_backends(true));
  httplib::Client c("127.0.0.1", svc.start_background());
  auto r = c.Post("/v1/sessions", json{{"bank_id", bank_id}, {"prompt", "Tintin"}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 409);
  CHECK(json::parse(r->body)["error"]["code"] == "PartialCache");
  svc.stop();
}
