#include "dvp/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dvp/backends.hpp"
#include "dvp/service.hpp"
#include "dvp/session.hpp"

namespace dvp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::string env_key(const std::string& name) {
  std::string k = "DVP_";
  for (char c : name) k += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return k;
}

struct RunFlags {
  std::size_t n = 3;
  std::size_t k = 3;
  std::string elements;
  std::string grid = "3x3";
  std::string canvas = "center";
  int cell_px = 512;
  int border_px = 0;
  std::string stars = "auto";
  std::string prior;
  std::size_t star_count = 2;
  std::vector<std::string> pins;
  std::uint64_t seed = 0;
  double guidance = kDefaultGuidanceScale;
  int steps = kDefaultSteps;
  std::string weights = "0.5,0.5,0";
  bool seed_per_arrangement = false;
  std::size_t concurrency = 2;
  std::string runs_dir = "runs";
  bool mock = false;
  std::string embedder = "remote";
};

void add_backend_flags(CLI::App* app, RunFlags& f) {
  app->add_flag("--mock-backends", f.mock, "Offline mock embedder, mean-fill inpainting and rule-based extraction");
  app->add_option("--embedder", f.embedder, "Embedding backend when not mocked: mock, hash or remote");
}

void add_run_flags(CLI::App* app, RunFlags& f, bool with_pins) {
  app->add_option("--n", f.n, "Number of key elements to extract (1-5)");
  app->add_option("--k", f.k, "Candidate images kept per element");
  app->add_option("--elements", f.elements, "Comma-separated key elements; skips extraction");
  app->add_option("--grid", f.grid, "Grid size, ROWSxCOLS");
  app->add_option("--canvas", f.canvas, "Canvas cells: center, r,c or r0,c0:r1,c1");
  app->add_option("--cell-px", f.cell_px, "Cell edge in pixels");
  app->add_option("--border-px", f.border_px, "Border inside each reference cell");
  app->add_option("--stars", f.stars, "Star cells: auto or r,c;r,c");
  app->add_option("--prior", f.prior, "Attention prior JSON used when --stars is auto");
  app->add_option("--star-count", f.star_count, "Star cells taken from the prior");
  if (with_pins) app->add_option("--pin", f.pins, "Pin r,c=IMAGE_ID or r,c=PATH (repeatable)");
  app->add_option("--seed", f.seed, "Generation seed");
  app->add_option("--guidance", f.guidance, "Guidance scale");
  app->add_option("--steps", f.steps, "Denoising steps");
  app->add_option("--weights", f.weights, "Score weights text,image,quality");
  app->add_flag("--seed-per-arrangement", f.seed_per_arrangement, "Offset the seed by the arrangement id");
  app->add_option("--concurrency", f.concurrency, "Arrangements generated in parallel");
  app->add_option("--runs-dir", f.runs_dir, "Directory for run artifacts");
  add_backend_flags(app, f);
}

GenerateConfig build_config(const RunFlags& f) {
  GenerateConfig c;
  c.n = f.n;
  c.k = f.k;
  if (!trim(f.elements).empty()) c.elements = split(f.elements, ',');
  c.grid = parse_grid(f.grid, f.canvas, f.cell_px);
  c.grid.border_px = f.border_px;
  c.grid.validate();
  if (f.stars != "auto") c.stars = parse_cells(f.stars);
  if (!f.prior.empty()) {
    auto bytes = read_file(f.prior);
    c.prior = parse_prior(std::string(bytes.begin(), bytes.end()), c.grid);
  }
  c.star_count = f.star_count;
  for (const auto& p : f.pins) {
    auto eq = p.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidArgument, "pin must be r,c=IMAGE: " + p);
    auto cells = parse_cells(p.substr(0, eq));
    if (cells.size() != 1) throw Error(Errc::InvalidArgument, "pin names one cell: " + p);
    const std::string value = p.substr(eq + 1);
    if (fs::is_regular_file(value)) {
      RasterImage img = load_image(value);
      const ImageId id = to_hex(pixel_digest(img));
      c.extra_images[id] = std::move(img);
      c.pins[cells.front()] = id;
    } else {
      c.pins[cells.front()] = value;
    }
  }
  c.weights = parse_weights(f.weights);
  c.params.seed = f.seed;
  c.params.guidance_scale = f.guidance;
  c.params.steps = f.steps;
  c.params.validate();
  c.seed_per_arrangement = f.seed_per_arrangement;
  c.concurrency = f.concurrency;
  c.runs_dir = f.runs_dir;
  return c;
}

json run_summary(const RunResult& run) {
  json arrangements = json::array();
  for (const auto& a : run.report.at("arrangements")) {
    json e = {{"id", a.at("id")}, {"row_assignment", a.at("row_assignment")}, {"status", a.at("status")}};
    if (a.contains("scores")) e["scores"] = a["scores"];
    if (a.contains("error")) e["error"] = a["error"];
    arrangements.push_back(std::move(e));
  }
  return {{"run_id", run.run_id},
          {"run_dir", run.run_dir.string()},
          {"selected_arrangement_id", run.selected_id},
          {"selected_canvas_digest", run.report.at("selected_canvas_digest")},
          {"partial", run.partial},
          {"elements", run.report.at("elements")},
          {"arrangements", arrangements}};
}

void print_run(std::ostream& out, const RunResult& run) {
  out << "run-id: " << run.run_id << "\n";
  out << "selected arrangement: " << run.selected_id << "\n";
  if (!run.run_dir.empty()) out << "artifacts: " << run.run_dir.string() << "\n";
  out << "elements:";
  for (const auto& e : run.prepared.elements) out << " [" << e.phrase << "]";
  out << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& o : run.outcomes) {
    out << "  arrangement " << o.arrangement.id << " rows(";
    for (std::size_t i = 0; i < o.arrangement.row_assignment.size(); ++i) {
      out << (i ? "," : "") << o.arrangement.row_assignment[i];
    }
    out << ")";
    if (o.candidate) {
      out << " text=" << o.candidate->text_score << " image=" << o.candidate->image_score
          << " combined=" << o.candidate->combined << (o.arrangement.id == run.selected_id ? " *" : "");
    } else {
      out << " failed: " << o.error;
    }
    out << "\n";
  }
  out << std::defaultfloat;
  if (run.partial) out << "warning: some arrangements failed; selection is over the successes\n";
}

json manifest_summary(const fs::path& dir, const BankManifest& m) {
  json skipped = json::array();
  for (const auto& s : m.skipped) skipped.push_back({{"path", s.path}, {"reason", s.reason}});
  return {{"bank", dir.string()},
          {"theme", m.theme_name},
          {"size", m.size()},
          {"skipped", skipped},
          {"warnings", m.warnings}};
}

class Layering {
 public:
  Layering(const EnvLookup& env, std::map<std::string, std::string> file) : env_(env), file_(std::move(file)) {}

  // Fills options the user did not pass on the command line.
  void apply(CLI::App* app, const std::string& section) const {
    for (CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->count() > 0) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      std::optional<std::string> value;
      if (const char* v = env_(env_key(name).c_str()); v != nullptr) {
        value = v;
      } else if (auto it = file_.find(section + "." + name); it != file_.end()) {
        value = it->second;
      } else if (auto top = file_.find(name); top != file_.end()) {
        value = top->second;
      }
      if (!value) continue;
      if (name == "pin") {
        std::stringstream ss(*value);
        std::string item;
        while (ss >> item) opt->add_result(item);
      } else {
        opt->add_result(*value);
      }
      opt->run_callback();
    }
  }

 private:
  const EnvLookup& env_;
  std::map<std::string, std::string> file_;
};

void print_json(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw Error(Errc::InvalidArgument, "config line " + std::to_string(lineno) + ": bad section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::InvalidArgument, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (!value.empty() && value.front() == '"') {
      auto close = value.find('"', 1);
      if (close == std::string::npos) {
        throw Error(Errc::InvalidArgument, "config line " + std::to_string(lineno) + ": unterminated string");
      }
      value = value.substr(1, close - 1);
    } else if (auto hash = value.find(" #"); hash != std::string::npos) {
      value = trim(value.substr(0, hash));
    }
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_command(args, out, err, [](const char* k) -> const char* { return std::getenv(k); });
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Visual-prompt image generation from a theme bank", "dvp"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path = "dvp.toml";
  app.add_option("--config", config_path, "Key/value config file (flags > DVP_* env > file > defaults)");

  bool as_json = false;
  auto json_flag = [&](CLI::App* sub) { sub->add_flag("--json", as_json, "Machine-readable output"); };

  auto* bank = app.add_subcommand("bank", "Theme bank management");
  bank->require_subcommand(1);

  std::string ingest_dir, ingest_theme;
  auto* ingest_cmd = bank->add_subcommand("ingest", "Scan a directory and write its manifest");
  ingest_cmd->add_option("dir", ingest_dir, "Bank directory")->required();
  ingest_cmd->add_option("--theme", ingest_theme, "Theme name (defaults to the directory name)");
  json_flag(ingest_cmd);

  std::string bank_dir;
  std::string index_backend = "mock";
  auto* index_cmd = bank->add_subcommand("index", "Embed every bank image and write the cache");
  index_cmd->add_option("--bank", bank_dir, "Bank directory");
  index_cmd->add_option("--backend", index_backend, "Embedding backend: mock, hash or remote");
  json_flag(index_cmd);

  auto* verify_cmd = bank->add_subcommand("verify", "Check the cache against the manifest and files");
  verify_cmd->add_option("--bank", bank_dir, "Bank directory");
  verify_cmd->add_option("--backend", index_backend, "Embedding backend: mock, hash or remote");
  json_flag(verify_cmd);

  RunFlags gen;
  std::string prompt;
  auto* gen_cmd = app.add_subcommand("generate", "Run every arrangement and select the best canvas");
  gen_cmd->add_option("--bank", bank_dir, "Indexed bank directory (required)");
  gen_cmd->add_option("--prompt", prompt, "Text prompt (required)");
  add_run_flags(gen_cmd, gen, true);
  json_flag(gen_cmd);

  RunFlags ref;
  std::string store_dir = "sessions";
  std::string session_id;
  bool clear_pins = false;
  auto* ref_cmd = app.add_subcommand("refine", "Start or continue a session and run it again");
  ref_cmd->add_option("--store", store_dir, "Session store directory");
  ref_cmd->add_option("--session", session_id, "Existing session id; omit to start one");
  ref_cmd->add_option("--bank", bank_dir, "Bank directory for a new session");
  ref_cmd->add_option("--prompt", prompt, "Prompt for a new session, or a replacement prompt");
  ref_cmd->add_flag("--clear-pins", clear_pins, "Drop the session's pins before applying --pin");
  add_run_flags(ref_cmd, ref, true);
  json_flag(ref_cmd);

  RunFlags ev;
  std::string protocol_path, eval_out;
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run the evaluation protocol and score the selected canvases");
  eval_cmd->add_option("--protocol", protocol_path, "JSON {themes: [{bank, prompts}], seeds?, base_seed?} (required)");
  eval_cmd->add_option("--seeds", seeds, "Seeds per prompt");
  eval_cmd->add_option("--base-seed", base_seed, "First seed");
  eval_cmd->add_option("--out", eval_out, "Report path (defaults to <runs-dir>/evaluation.json)");
  add_run_flags(eval_cmd, ev, false);
  json_flag(eval_cmd);

  RunFlags srv;
  std::string addr = "127.0.0.1:8080";
  std::size_t workers = 2;
  std::string cors = "*";
  auto* serve_cmd = app.add_subcommand("serve", "Serve the /v1 HTTP API");
  serve_cmd->add_option("--addr", addr, "Bind address host:port");
  serve_cmd->add_option("--store", store_dir, "Session store directory");
  serve_cmd->add_option("--workers", workers, "Runs executed in parallel");
  serve_cmd->add_option("--cors-origin", cors, "Access-Control-Allow-Origin value");
  add_run_flags(serve_cmd, srv, false);
  json_flag(serve_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* where = &app;
    while (!where->get_subcommands().empty()) where = where->get_subcommands().front();
    err << where->help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  CLI::App* leaf = sub->get_subcommands().empty() ? sub : sub->get_subcommands().front();
  const std::string section = leaf == sub ? sub->get_name() : sub->get_name() + "." + leaf->get_name();

  auto usage = [&](const std::string& msg) {
    err << "error: " << msg << "\n\n" << leaf->help();
    return kExitUsage;
  };

  try {
    std::map<std::string, std::string> file_cfg;
    const bool explicit_config = app.get_option("--config")->count() > 0 || env("DVP_CONFIG") != nullptr;
    if (app.get_option("--config")->count() == 0) {
      if (const char* c = env("DVP_CONFIG")) config_path = c;
    }
    if (fs::exists(config_path)) {
      auto bytes = read_file(config_path);
      file_cfg = parse_config_text(std::string(bytes.begin(), bytes.end()));
    } else if (explicit_config) {
      return usage("config file not found: " + config_path);
    }
    Layering layering(env, std::move(file_cfg));
    layering.apply(&app, "");
    layering.apply(leaf, section);
  } catch (const CLI::ParseError& e) {
    return usage(std::string("invalid configured value: ") + e.what());
  } catch (const Error& e) {
    return usage(e.what());
  }

  try {
    if (leaf == ingest_cmd) {
      const fs::path dir = ingest_dir;
      std::string theme = ingest_theme.empty() ? fs::absolute(dir).lexically_normal().filename().string() : ingest_theme;
      if (theme.empty()) theme = fs::absolute(dir).parent_path().filename().string();
      BankManifest m = ingest(dir, theme);
      if (as_json) {
        print_json(out, manifest_summary(dir, m));
      } else {
        out << "manifest written: " << (dir / kManifestFile).string() << " (" << m.size() << " images, theme "
            << m.theme_name << ")\n";
        for (const auto& s : m.skipped) out << "  skipped " << s.path << ": " << s.reason << "\n";
        for (const auto& w : m.warnings) out << "  warning: " << w << "\n";
      }
      return kExitOk;
    }

    if (leaf == index_cmd || leaf == verify_cmd) {
      if (bank_dir.empty()) return usage("--bank is required");
      auto embedder = make_embedder(index_backend);
      if (leaf == index_cmd) {
        BuildStats stats;
        index_bank(bank_dir, *embedder, &stats);
        if (as_json) {
          print_json(out, {{"bank", bank_dir},
                           {"backend", embedder->descriptor().name},
                           {"embedded", stats.backend_calls},
                           {"reused", stats.reused},
                           {"dropped_orphans", stats.dropped_orphans}});
        } else {
          out << "indexed " << bank_dir << " with " << embedder->descriptor().name << ": " << stats.backend_calls
              << " embedded, " << stats.reused << " reused, " << stats.dropped_orphans << " orphans dropped\n";
        }
        return kExitOk;
      }
      BankManifest m = load_manifest(bank_dir);
      auto cache = load_cache(bank_dir, embedder->descriptor());
      VerifyReport r = verify_cache(m, cache.value_or(EmbeddingCache{embedder->descriptor(), {}}), bank_dir);
      if (as_json) {
        print_json(out, {{"bank", bank_dir},
                         {"clean", r.clean},
                         {"stale", r.stale},
                         {"missing", r.missing},
                         {"orphaned", r.orphaned}});
      } else {
        out << (r.clean ? "clean" : "dirty") << ": " << r.stale.size() << " stale, " << r.missing.size()
            << " missing, " << r.orphaned.size() << " orphaned\n";
      }
      if (!r.clean) {
        err << error_body(Errc::PartialCache, "cache does not match the bank; run `dvp bank index`").dump() << "\n";
        return kExitDomain;
      }
      return kExitOk;
    }

    if (leaf == gen_cmd) {
      if (bank_dir.empty()) return usage("--bank is required");
      if (prompt.empty()) return usage("--prompt is required");
      GenerateConfig cfg = build_config(gen);
      BackendSet set = make_backends(gen.mock, gen.embedder, gen.concurrency);
      auto tb = ThemeBank::open(bank_dir, set.embedder->descriptor());
      RunResult run = generate(*tb, prompt, cfg, set.view());
      if (as_json) {
        print_json(out, run_summary(run));
      } else {
        print_run(out, run);
      }
      return kExitOk;
    }

    if (leaf == ref_cmd) {
      SessionStore store(store_dir);
      GenerateConfig cfg = build_config(ref);
      BackendSet set = make_backends(ref.mock, ref.embedder, ref.concurrency);
      Session session;
      RefineRequest request;
      std::shared_ptr<ThemeBank> tb;
      if (session_id.empty()) {
        if (bank_dir.empty() || prompt.empty()) return usage("a new session needs --bank and --prompt");
        tb = ThemeBank::open(bank_dir, set.embedder->descriptor());
        session = open_session(store, *tb, prompt, cfg.n, cfg.k, cfg.elements, set.view());
      } else {
        session = store.load(session_id);
        tb = ThemeBank::open(session.bank_dir, set.embedder->descriptor());
        if (!prompt.empty()) request.new_prompt = prompt;
      }
      if (ref_cmd->get_option("--weights")->count() > 0) request.weights = cfg.weights;
      if (clear_pins || !cfg.pins.empty()) {
        Pins pins = clear_pins ? Pins{} : session.pins;
        for (const auto& [cell, id] : cfg.pins) {
          if (auto it = cfg.extra_images.find(id); it != cfg.extra_images.end()) store.add_image(session, it->second);
          pins[cell] = id;
        }
        store.save(session);
        request.pins = pins;
      }
      RunResult run = refine(store, session, *tb, request, cfg, set.view());
      if (as_json) {
        json j = run_summary(run);
        j["session_id"] = session.session_id;
        j["history_length"] = session.history.size();
        print_json(out, j);
      } else {
        out << "session: " << session.session_id << " (" << session.history.size() << " runs)\n";
        print_run(out, run);
      }
      return kExitOk;
    }

    if (leaf == eval_cmd) {
      if (protocol_path.empty()) return usage("--protocol is required");
      auto bytes = read_file(protocol_path);
      json doc;
      try {
        doc = json::parse(bytes.begin(), bytes.end());
      } catch (const json::exception& ex) {
        throw Error(Errc::DecodeError, std::string("protocol is not JSON: ") + ex.what());
      }
      EvalProtocol protocol;
      const fs::path base = fs::path(protocol_path).parent_path();
      for (const auto& t : doc.at("themes")) {
        fs::path dir = t.at("bank").get<std::string>();
        if (dir.is_relative()) dir = base / dir;
        protocol.themes.push_back({dir, t.at("prompts").get<std::vector<std::string>>()});
      }
      protocol.seeds = eval_cmd->get_option("--seeds")->count() > 0 ? seeds : doc.value("seeds", seeds);
      protocol.base_seed = eval_cmd->get_option("--base-seed")->count() > 0 ? base_seed : doc.value("base_seed", base_seed);
      protocol.config = build_config(ev);
      BackendSet set = make_backends(ev.mock, ev.embedder, ev.concurrency);
      EvalReport report = run_evaluation(protocol, set.view());
      json j = report.to_json();
      const fs::path out_path = eval_out.empty() ? fs::path(ev.runs_dir) / "evaluation.json" : fs::path(eval_out);
      write_file_atomic(out_path.string(), j.dump(2) + "\n");
      if (as_json) {
        print_json(out, j);
      } else {
        out << std::fixed << std::setprecision(6);
        for (const auto& t : report.themes) {
          out << t.theme << ": image_similarity=" << t.scores.image_similarity
              << " text_similarity=" << t.scores.text_similarity << " (" << t.scores.images << " images)\n";
        }
        out << "overall: image_similarity=" << report.overall.image_similarity
            << " text_similarity=" << report.overall.text_similarity << " (" << report.overall.images
            << " images)\nreport: " << out_path.string() << "\n";
      }
      return kExitOk;
    }

    if (leaf == serve_cmd) {
      auto colon = addr.rfind(':');
      if (colon == std::string::npos) return usage("--addr must be host:port");
      int port = 0;
      try {
        port = std::stoi(addr.substr(colon + 1));
      } catch (const std::exception&) {
        return usage("--addr must be host:port");
      }
      ServiceOptions opts;
      opts.store_dir = store_dir;
      opts.runs_dir = srv.runs_dir;
      opts.run_workers = workers;
      opts.cors_origin = cors;
      opts.defaults = build_config(srv);
      Service service(opts, make_backends(srv.mock, srv.embedder, srv.concurrency));
      const std::string host = addr.substr(0, colon);
      if (as_json) {
        print_json(out, {{"listening", addr}});
      } else {
        out << "listening on http://" << addr << "/v1\n";
      }
      out.flush();
      if (!service.listen(host, port)) throw Error(Errc::IoError, "cannot listen on " + addr);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << error_body(e.code(), e.what()).dump() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << error_body(Errc::IoError, e.what()).dump() << "\n";
    return kExitDomain;
  }
  return usage("unknown command");
}

}  // namespace dvp
