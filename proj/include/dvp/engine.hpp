#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvp/generation.hpp"
#include "dvp/intent.hpp"
#include "dvp/layout.hpp"
#include "dvp/theme_bank.hpp"

namespace dvp {

inline constexpr int kReportVersion = 1;

struct ScoreWeights {
  double text = 0.5;
  double image = 0.5;
  double quality = 0.0;

  void validate() const;
  double combine(double text_score, double image_score, double quality_score) const {
    return text * text_score + image * image_score + quality * quality_score;
  }

  friend bool operator==(const ScoreWeights&, const ScoreWeights&) = default;
};

// "a,b,c"
ScoreWeights parse_weights(const std::string& text);

// Visual-quality judge returning a score in [0, 1]. Pluggable; the engine
// scores quality 0 when none is configured.
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual std::string name() const = 0;
  virtual double score(const RasterImage& image, const std::string& prompt) = 0;
};

struct CandidateScores {
  double text_score = 0.0;
  double image_score = 0.0;
  double quality_score = 0.0;
  double combined = 0.0;
};

// Mean cosine between `v` and every row of `refs`, accumulated in double.
template <typename Scalar>
double mean_cosine(const Embedding<Scalar>& v, const EmbeddingMatrix<Scalar>& refs) {
  if (refs.rows() == 0) throw Error(Errc::EmptyInput, "no reference embeddings");
  const Embedding<double> a = v.template cast<double>();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < refs.rows(); ++i) {
    const Embedding<double> b = refs.row(i).transpose().template cast<double>();
    sum += cosine(a, b);
  }
  return sum / static_cast<double>(refs.rows());
}

CandidateScores score_candidate(const RasterImage& image, const EmbeddingVector& prompt_embedding,
                                const EmbeddingMatrix<float>& reference_embeddings,
                                const ScoreWeights& weights, EmbeddingBackend& embedder,
                                QualityScorer* quality, const std::string& prompt);

// Embeds the prompt and references first.
CandidateScores score_candidate(const RasterImage& image, const std::string& prompt,
                                std::span<const RasterImage> references, const ScoreWeights& weights,
                                EmbeddingBackend& embedder, QualityScorer* quality = nullptr);

struct ScoredCandidate {
  std::size_t arrangement_id = 0;
  RasterImage image;  // cropped canvas
  double text_score = 0.0;
  double image_score = 0.0;
  double quality_score = 0.0;
  double combined = 0.0;
};

// Index of the largest score; ties go to the lowest index.
std::size_t select_best(std::span<const double> combined);

struct Backends {
  EmbeddingBackend* embedder = nullptr;
  InpaintBackend* inpainter = nullptr;
  LlmBackend* llm = nullptr;
  QualityScorer* quality = nullptr;
};

struct GenerateConfig {
  std::size_t n = 3;
  std::size_t k = 3;
  std::vector<std::string> elements;  // non-empty: bypass extraction
  GridSpec grid = default_grid();
  std::optional<std::vector<Cell>> stars;  // explicit star cells
  std::optional<AttentionPrior> prior;     // used when no explicit stars
  std::size_t star_count = 2;
  Pins pins;
  std::map<ImageId, RasterImage> extra_images;  // pinned images outside the bank
  ScoreWeights weights;
  GenerationParams params;  // prompt is filled in by the engine
  bool seed_per_arrangement = false;
  std::size_t concurrency = 2;
  std::filesystem::path runs_dir = "runs";
  std::string run_id;  // empty: derived from the inputs
  bool write_artifacts = true;
};

// Extraction + matching; reused across runs of a session.
struct PreparedPrompt {
  std::string prompt;
  std::vector<KeyElement> elements;
  CandidateTable table;
};

PreparedPrompt prepare_prompt(const ThemeBank& bank, const std::string& prompt, std::size_t n, std::size_t k,
                              const std::vector<std::string>& elements_override, const Backends& backends);

struct ArrangementOutcome {
  Arrangement arrangement;
  SlotAssignment assignment;
  std::optional<ScoredCandidate> candidate;
  std::optional<Errc> error_code;
  std::string error;
  std::string composite_digest;
  std::string canvas_digest;
  double seconds = 0.0;
};

struct RunResult {
  std::string run_id;
  std::filesystem::path run_dir;  // empty when artifacts are not written
  PreparedPrompt prepared;
  std::vector<Cell> stars;
  std::vector<ArrangementOutcome> outcomes;  // arrangement id order
  std::size_t selected_id = 0;
  bool partial = false;
  nlohmann::json report;

  const ScoredCandidate& selected() const;
  std::vector<const ScoredCandidate*> candidates() const;
};

std::vector<Cell> resolve_stars(const GenerateConfig& config);

// One pass over every arrangement: assign, compose, inpaint, crop, score;
// then select the best combined score (lowest arrangement id on ties).
// Arrangements run concurrently but results merge in id order.
RunResult execute_run(const ThemeBank& bank, const PreparedPrompt& prepared, const GenerateConfig& config,
                      const Backends& backends);

RunResult generate(const ThemeBank& bank, const std::string& prompt, const GenerateConfig& config,
                   const Backends& backends);

nlohmann::json config_echo(const GenerateConfig& config, const Backends& backends);

struct EvalScores {
  double image_similarity = 0.0;
  double text_similarity = 0.0;
  std::size_t images = 0;
  std::size_t pairs = 0;
};

// generated_images and prompt_texts are row-aligned (one prompt per image).
EvalScores evaluate_embeddings(const EmbeddingMatrix<float>& generated_images,
                               const EmbeddingMatrix<float>& prompt_texts,
                               const EmbeddingMatrix<float>& references);

struct GeneratedSample {
  RasterImage image;
  std::string prompt;
};

EvalScores evaluate_run(std::span<const GeneratedSample> generated, const EmbeddingMatrix<float>& references,
                        EmbeddingBackend& embedder);
EvalScores evaluate_run(std::span<const GeneratedSample> generated, std::span<const RasterImage> references,
                        EmbeddingBackend& embedder);

struct EvalTheme {
  std::filesystem::path bank_dir;
  std::vector<std::string> prompts;
};

struct EvalProtocol {
  std::vector<EvalTheme> themes;
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  GenerateConfig config;
};

struct EvalRunEntry {
  std::string theme;
  std::string prompt;
  std::uint64_t seed = 0;
  std::string run_id;
  std::size_t selected_id = 0;
  std::string canvas_digest;
  std::filesystem::path canvas_path;
};

struct EvalThemeReport {
  std::string theme;
  std::string bank_dir;
  EvalScores scores;
};

struct EvalReport {
  std::vector<EvalThemeReport> themes;
  std::vector<EvalRunEntry> runs;
  EvalScores overall;  // pooled over every (generated, own-theme reference) pair

  nlohmann::json to_json() const;
};

// Every prompt of every theme, once per seed; each selected canvas is
// scored against its own theme bank.
EvalReport run_evaluation(const EvalProtocol& protocol, const Backends& backends);

}  // namespace dvp
