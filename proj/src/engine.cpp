#include "dvp/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

namespace dvp {

namespace fs = std::filesystem;
using nlohmann::json;

void ScoreWeights::validate() const {
  for (double w : {text, image, quality}) {
    if (!std::isfinite(w) || w < 0.0) throw Error(Errc::InvalidArgument, "score weights must be finite and >= 0");
  }
  if (text + image + quality <= 0.0) throw Error(Errc::InvalidArgument, "score weights must not all be zero");
}

ScoreWeights parse_weights(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "weights must be three numbers 'text,image,quality': " + text);
    }
  }
  if (parts.size() != 3) throw Error(Errc::InvalidArgument, "weights must be three numbers 'text,image,quality': " + text);
  ScoreWeights w{parts[0], parts[1], parts[2]};
  w.validate();
  return w;
}

CandidateScores score_candidate(const RasterImage& image, const EmbeddingVector& prompt_embedding,
                                const EmbeddingMatrix<float>& reference_embeddings,
                                const ScoreWeights& weights, EmbeddingBackend& embedder,
                                QualityScorer* quality, const std::string& prompt) {
  if (reference_embeddings.rows() == 0) throw Error(Errc::EmptyInput, "need at least one reference image");
  const EmbeddingVector v = embedder.embed_image(image);
  CandidateScores s;
  s.text_score = cosine(prompt_embedding.cast<double>(), v.cast<double>());
  s.image_score = mean_cosine(v, reference_embeddings);
  if (quality != nullptr) {
    s.quality_score = quality->score(image, prompt);
    if (!(s.quality_score >= 0.0 && s.quality_score <= 1.0)) {
      throw Error(Errc::InvalidArgument, "quality scorer returned a value outside [0, 1]");
    }
  }
  s.combined = weights.combine(s.text_score, s.image_score, s.quality_score);
  return s;
}

CandidateScores score_candidate(const RasterImage& image, const std::string& prompt,
                                std::span<const RasterImage> references, const ScoreWeights& weights,
                                EmbeddingBackend& embedder, QualityScorer* quality) {
  if (references.empty()) throw Error(Errc::EmptyInput, "need at least one reference image");
  weights.validate();
  auto refs = embedder.embed_images(references);
  return score_candidate(image, embedder.embed_text(prompt), stack_rows<float>(refs), weights, embedder,
                         quality, prompt);
}

std::size_t select_best(std::span<const double> combined) {
  if (combined.empty()) throw Error(Errc::EmptyInput, "nothing to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < combined.size(); ++i) {
    if (combined[i] > combined[best]) best = i;
  }
  return best;
}

const ScoredCandidate& RunResult::selected() const {
  for (const auto& o : outcomes) {
    if (o.arrangement.id == selected_id && o.candidate) return *o.candidate;
  }
  throw Error(Errc::PartialRun, "run has no selected candidate");
}

std::vector<const ScoredCandidate*> RunResult::candidates() const {
  std::vector<const ScoredCandidate*> out;
  for (const auto& o : outcomes) {
    if (o.candidate) out.push_back(&*o.candidate);
  }
  return out;
}

namespace {

void check_backends(const Backends& b) {
  if (b.embedder == nullptr) throw Error(Errc::InvalidArgument, "no embedding backend configured");
  if (b.inpainter == nullptr) throw Error(Errc::InvalidArgument, "no inpainting backend configured");
}

json cell_json(const Cell& c) { return json::array({c.row, c.col}); }

json grid_json(const GridSpec& g) {
  json canvas = json::array();
  for (const auto& c : g.canvas_cells) canvas.push_back(cell_json(c));
  return {{"rows", g.rows}, {"cols", g.cols}, {"cell_px", g.cell_px}, {"border_px", g.border_px},
          {"canvas", canvas}};
}

json table_json(const CandidateTable& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = json::array();
    for (const auto& m : row) r.push_back({{"image_id", m.image_id}, {"score", m.score}});
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string short_digest(const json& j) {
  return to_hex(sha256(j.dump())).substr(0, 16);
}

}  // namespace

json config_echo(const GenerateConfig& c, const Backends& b) {
  json stars = json::array();
  if (c.stars) {
    for (const auto& s : *c.stars) stars.push_back(cell_json(s));
  }
  json pins = json::array();
  for (const auto& [cell, id] : c.pins) pins.push_back({{"cell", cell_json(cell)}, {"image_id", id}});
  json prior = nullptr;
  if (c.prior) {
    json entries = json::array();
    for (const auto& [cell, v] : c.prior->intensities) entries.push_back({cell.row, cell.col, v});
    prior = {{"intensities", entries}, {"source", c.prior->source}, {"q", c.star_count}};
  }
  return {
      {"n", c.n},
      {"k", c.k},
      {"elements_override", c.elements},
      {"grid", grid_json(c.grid)},
      {"stars", c.stars ? json(stars) : json("auto")},
      {"attention_prior", prior},
      {"pins", pins},
      {"weights", {{"text", c.weights.text}, {"image", c.weights.image}, {"quality", c.weights.quality}}},
      {"params", {{"guidance_scale", c.params.guidance_scale}, {"steps", c.params.steps}, {"seed", c.params.seed}}},
      {"seed_per_arrangement", c.seed_per_arrangement},
      {"backends",
       {{"embedding", b.embedder ? b.embedder->descriptor().name : ""},
        {"inpaint", b.inpainter ? b.inpainter->name() : ""},
        {"llm", b.llm ? b.llm->name() : "rules"},
        {"quality", b.quality ? b.quality->name() : "none"}}},
  };
}

PreparedPrompt prepare_prompt(const ThemeBank& bank, const std::string& prompt, std::size_t n, std::size_t k,
                              const std::vector<std::string>& elements_override, const Backends& backends) {
  check_backends(backends);
  PreparedPrompt p;
  p.prompt = prompt;
  const std::size_t requested = elements_override.empty() ? n : elements_override.size();
  if (requested > kMaxElements) {
    throw Error(Errc::TooManyElements, std::to_string(requested) + " elements exceed the limit of " +
                                           std::to_string(kMaxElements));
  }
  if (!elements_override.empty()) {
    if (prompt.find_first_not_of(" \t\r\n") == std::string::npos) throw Error(Errc::EmptyPrompt, "prompt is empty");
    p.elements = override_elements(elements_override);
  } else {
    p.elements = extract_elements({prompt, n, backends.llm});
  }
  std::vector<std::string> phrases;
  for (const auto& e : p.elements) phrases.push_back(e.phrase);
  auto vecs = backends.embedder->embed_texts(phrases);
  if (vecs.size() != phrases.size()) throw Error(Errc::BackendUnavailable, "embedding backend dropped inputs");
  p.table = match_elements<float>(stack_rows<float>(vecs), bank.embeddings(), bank.ids(), k);
  return p;
}

std::vector<Cell> resolve_stars(const GenerateConfig& config) {
  if (config.stars) return *config.stars;
  if (config.prior) {
    validate_prior(*config.prior, config.grid);
    return star_cells(*config.prior, config.star_count);
  }
  return default_stars(config.grid);
}

namespace {

json outcome_json(const ArrangementOutcome& o, const std::string& dir_name) {
  json placements = json::array();
  for (const auto& [cell, id] : o.assignment.placements) {
    int element = o.assignment.element_of.at(cell);
    placements.push_back({{"cell", cell_json(cell)},
                          {"image_id", id},
                          {"element", element < 0 ? json(nullptr) : json(element)},
                          {"pinned", element < 0}});
  }
  json j = {{"id", o.arrangement.id},
            {"row_assignment", o.arrangement.row_assignment},
            {"status", o.candidate ? "done" : "failed"},
            {"placements", placements}};
  if (!o.composite_digest.empty()) j["composite_digest"] = o.composite_digest;
  if (o.candidate) {
    const auto& c = *o.candidate;
    j["scores"] = {{"text", c.text_score}, {"image", c.image_score}, {"quality", c.quality_score},
                   {"combined", c.combined}};
    j["canvas_digest"] = o.canvas_digest;
    j["artifacts"] = {{"composite", dir_name + "/prompt.composite.png"},
                      {"mask", dir_name + "/prompt.mask.png"},
                      {"result", dir_name + "/result.png"},
                      {"canvas", dir_name + "/canvas.png"}};
  } else {
    j["error"] = {{"code", o.error_code ? std::string(to_string(*o.error_code)) : "Unknown"},
                  {"message", o.error}};
  }
  return j;
}

}  // namespace

RunResult execute_run(const ThemeBank& bank, const PreparedPrompt& prepared, const GenerateConfig& config,
                      const Backends& backends) {
  check_backends(backends);
  config.weights.validate();
  config.params.validate();
  config.grid.validate();
  const auto started = std::chrono::steady_clock::now();

  RunResult run;
  run.prepared = prepared;
  run.stars = resolve_stars(config);
  for (const auto& [cell, id] : config.pins) {
    if (!bank.contains(id) && !config.extra_images.contains(id)) {
      throw Error(Errc::UnknownImage, "pinned image " + id + " is neither in the bank nor supplied");
    }
  }

  const auto arrangements = enumerate_arrangements(prepared.table.n());
  run.outcomes.resize(arrangements.size());
  for (std::size_t i = 0; i < arrangements.size(); ++i) {
    run.outcomes[i].arrangement = arrangements[i];
    run.outcomes[i].assignment = assign_slots(prepared.table, arrangements[i], config.grid, run.stars, config.pins);
  }

  const json echo = config_echo(config, backends);
  json identity = {{"bank", bank.digest()}, {"prompt", prepared.prompt}, {"config", echo}};
  run.run_id = config.run_id.empty() ? "run-" + short_digest(identity) : config.run_id;
  if (config.write_artifacts) run.run_dir = config.runs_dir / run.run_id;

  ImageSource source = [&](const ImageId& id) -> RasterImage {
    if (auto it = config.extra_images.find(id); it != config.extra_images.end()) return it->second;
    if (!bank.contains(id)) throw Error(Errc::MissingImage, "no pixels for image " + id);
    return bank.image(id);
  };
  const EmbeddingVector prompt_vec = backends.embedder->embed_text(prepared.prompt);

  auto run_one = [&](ArrangementOutcome& out) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      VisualPrompt vp = compose(out.assignment, source, config.grid);
      out.composite_digest = to_hex(pixel_digest(vp.composite));
      GenerationParams params = config.params;
      params.prompt = prepared.prompt;
      if (config.seed_per_arrangement) params.seed += out.arrangement.id;
      RasterImage result = backends.inpainter->inpaint(vp, params);
      RasterImage canvas = crop_canvas(result, config.grid);
      CandidateScores s = score_candidate(canvas, prompt_vec, bank.embeddings(), config.weights,
                                          *backends.embedder, backends.quality, prepared.prompt);
      out.canvas_digest = to_hex(pixel_digest(canvas));
      if (!run.run_dir.empty()) {
        const fs::path dir = run.run_dir / ("arrangement-" + std::to_string(out.arrangement.id));
        save_png((dir / "prompt.composite.png").string(), vp.composite);
        save_png((dir / "prompt.mask.png").string(), vp.mask);
        save_png((dir / "result.png").string(), result);
        save_png((dir / "canvas.png").string(), canvas);
      }
      out.candidate = ScoredCandidate{out.arrangement.id, std::move(canvas), s.text_score, s.image_score,
                                      s.quality_score, s.combined};
    } catch (const Error& ex) {
      out.error_code = ex.code();
      out.error = ex.what();
    } catch (const std::exception& ex) {
      out.error_code = Errc::BackendUnavailable;
      out.error = ex.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const std::size_t workers = std::clamp<std::size_t>(config.concurrency, 1, run.outcomes.size());
  if (workers == 1) {
    for (auto& o : run.outcomes) run_one(o);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < run.outcomes.size(); i = next++) run_one(run.outcomes[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<double> combined;
  std::vector<std::size_t> ids;
  json failures = json::array();
  for (const auto& o : run.outcomes) {
    if (o.candidate) {
      combined.push_back(o.candidate->combined);
      ids.push_back(o.arrangement.id);
    } else {
      failures.push_back({{"arrangement_id", o.arrangement.id},
                          {"code", std::string(to_string(o.error_code.value_or(Errc::BackendUnavailable)))},
                          {"message", o.error}});
    }
  }
  if (combined.empty()) {
    Errc first = run.outcomes.front().error_code.value_or(Errc::BackendUnavailable);
    bool same = std::all_of(run.outcomes.begin(), run.outcomes.end(),
                            [&](const ArrangementOutcome& o) { return o.error_code == first; });
    throw Error(same ? first : Errc::PartialRun,
                "all " + std::to_string(run.outcomes.size()) + " arrangements failed; first: " +
                    run.outcomes.front().error);
  }
  run.selected_id = ids[select_best(combined)];
  run.partial = !failures.empty();

  json elements = json::array();
  for (const auto& e : prepared.elements) {
    elements.push_back({{"index", e.index}, {"phrase", e.phrase}, {"source", to_string(e.source)}});
  }
  json stars = json::array();
  for (const auto& s : run.stars) stars.push_back(cell_json(s));
  json outcomes = json::array();
  for (const auto& o : run.outcomes) outcomes.push_back(outcome_json(o, "arrangement-" + std::to_string(o.arrangement.id)));
  run.report = {
      {"version", kReportVersion},
      {"run_id", run.run_id},
      {"bank", {{"theme", bank.manifest().theme_name}, {"digest", bank.digest()}, {"size", bank.ids().size()}}},
      {"prompt", prepared.prompt},
      {"config", echo},
      {"elements", elements},
      {"candidate_table", table_json(prepared.table)},
      {"stars", stars},
      {"arrangements", outcomes},
      {"selected_arrangement_id", run.selected_id},
      {"selected_canvas_digest", run.outcomes[run.selected_id].canvas_digest},
      {"partial", run.partial},
      {"failures", failures},
  };

  if (!run.run_dir.empty()) {
    write_file_atomic((run.run_dir / "report.json").string(), run.report.dump(2) + "\n");
    json timings = {{"run_id", run.run_id},
                    {"total_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
    json per = json::array();
    for (const auto& o : run.outcomes) per.push_back({{"arrangement_id", o.arrangement.id}, {"seconds", o.seconds}});
    timings["arrangements"] = per;
    write_file_atomic((run.run_dir / "timings.json").string(), timings.dump(2) + "\n");
  }
  return run;
}

RunResult generate(const ThemeBank& bank, const std::string& prompt, const GenerateConfig& config,
                   const Backends& backends) {
  return execute_run(bank, prepare_prompt(bank, prompt, config.n, config.k, config.elements, backends), config,
                     backends);
}

EvalScores evaluate_embeddings(const EmbeddingMatrix<float>& generated, const EmbeddingMatrix<float>& texts,
                               const EmbeddingMatrix<float>& references) {
  if (generated.rows() == 0 || references.rows() == 0) {
    throw Error(Errc::EmptyInput, "evaluation needs generated images and references");
  }
  if (texts.rows() != generated.rows()) {
    throw Error(Errc::InvalidArgument, "one prompt embedding per generated image is required");
  }
  EvalScores s;
  s.images = static_cast<std::size_t>(generated.rows());
  s.pairs = s.images * static_cast<std::size_t>(references.rows());
  double image_sum = 0.0, text_sum = 0.0;
  for (Eigen::Index g = 0; g < generated.rows(); ++g) {
    const Embedding<float> v = generated.row(g).transpose();
    image_sum += mean_cosine(v, references) * static_cast<double>(references.rows());
    text_sum += cosine(texts.row(g).transpose().cast<double>(), v.cast<double>());
  }
  s.image_similarity = image_sum / static_cast<double>(s.pairs);
  s.text_similarity = text_sum / static_cast<double>(s.images);
  return s;
}

EvalScores evaluate_run(std::span<const GeneratedSample> generated, const EmbeddingMatrix<float>& references,
                        EmbeddingBackend& embedder) {
  if (generated.empty()) throw Error(Errc::EmptyInput, "no generated images");
  std::vector<RasterImage> images;
  std::vector<std::string> prompts;
  for (const auto& g : generated) {
    images.push_back(g.image);
    prompts.push_back(g.prompt);
  }
  auto iv = embedder.embed_images(images);
  auto tv = embedder.embed_texts(prompts);
  return evaluate_embeddings(stack_rows<float>(iv), stack_rows<float>(tv), references);
}

EvalScores evaluate_run(std::span<const GeneratedSample> generated, std::span<const RasterImage> references,
                        EmbeddingBackend& embedder) {
  if (references.empty()) throw Error(Errc::EmptyInput, "no reference images");
  auto rv = embedder.embed_images(references);
  return evaluate_run(generated, stack_rows<float>(rv), embedder);
}

json EvalReport::to_json() const {
  auto scores = [](const EvalScores& s) {
    return json{{"image_similarity", s.image_similarity}, {"text_similarity", s.text_similarity},
                {"images", s.images}, {"pairs", s.pairs}};
  };
  json themes_j = json::array();
  for (const auto& t : themes) themes_j.push_back({{"theme", t.theme}, {"bank", t.bank_dir}, {"scores", scores(t.scores)}});
  json runs_j = json::array();
  for (const auto& r : runs) {
    runs_j.push_back({{"theme", r.theme}, {"prompt", r.prompt}, {"seed", r.seed}, {"run_id", r.run_id},
                      {"selected_arrangement_id", r.selected_id}, {"canvas_digest", r.canvas_digest},
                      {"canvas", r.canvas_path.string()}});
  }
  return {{"version", kReportVersion}, {"themes", themes_j}, {"runs", runs_j}, {"overall", scores(overall)}};
}

EvalReport run_evaluation(const EvalProtocol& protocol, const Backends& backends) {
  check_backends(backends);
  if (protocol.themes.empty() || protocol.seeds == 0) throw Error(Errc::EmptyInput, "evaluation protocol is empty");
  EvalReport report;
  double image_total = 0.0, text_total = 0.0;
  for (const auto& theme : protocol.themes) {
    if (theme.prompts.empty()) throw Error(Errc::EmptyInput, "theme " + theme.bank_dir.string() + " has no prompts");
    auto bank = ThemeBank::open(theme.bank_dir, backends.embedder->descriptor());
    std::vector<GeneratedSample> samples;
    for (const auto& prompt : theme.prompts) {
      PreparedPrompt prepared =
          prepare_prompt(*bank, prompt, protocol.config.n, protocol.config.k, protocol.config.elements, backends);
      for (std::size_t s = 0; s < protocol.seeds; ++s) {
        GenerateConfig cfg = protocol.config;
        cfg.params.seed = protocol.base_seed + s;
        RunResult run = execute_run(*bank, prepared, cfg, backends);
        const auto& best = run.selected();
        samples.push_back({best.image, prompt});
        fs::path canvas;
        if (!run.run_dir.empty()) canvas = run.run_dir / ("arrangement-" + std::to_string(run.selected_id)) / "canvas.png";
        report.runs.push_back({bank->manifest().theme_name, prompt, cfg.params.seed, run.run_id, run.selected_id,
                               run.outcomes[run.selected_id].canvas_digest, canvas});
      }
    }
    EvalScores scores = evaluate_run(samples, bank->embeddings(), *backends.embedder);
    report.themes.push_back({bank->manifest().theme_name, theme.bank_dir.string(), scores});
    image_total += scores.image_similarity * static_cast<double>(scores.pairs);
    text_total += scores.text_similarity * static_cast<double>(scores.images);
    report.overall.images += scores.images;
    report.overall.pairs += scores.pairs;
  }
  report.overall.image_similarity = image_total / static_cast<double>(report.overall.pairs);
  report.overall.text_similarity = text_total / static_cast<double>(report.overall.images);
  return report;
}

}  // namespace dvp
