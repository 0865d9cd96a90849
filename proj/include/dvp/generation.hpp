#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dvp/composer.hpp"

namespace dvp {

inline constexpr double kDefaultGuidanceScale = 30.0;
inline constexpr int kDefaultSteps = 50;

struct GenerationParams {
  double guidance_scale = kDefaultGuidanceScale;
  int steps = kDefaultSteps;
  std::uint64_t seed = 0;
  std::string prompt;

  void validate() const;
};

// Fill-style inpainting contract: returns a raster the size of the
// composite whose unmasked pixels reproduce the composite and whose masked
// region is newly synthesized. Implementations are shareable across threads.
class InpaintBackend {
 public:
  virtual ~InpaintBackend() = default;
  virtual std::string name() const = 0;
  virtual RasterImage inpaint(const VisualPrompt& vp, const GenerationParams& params) = 0;
};

// Offline backend. Each canvas pixel becomes the rounded per-pixel mean of
// all reference cells at the same in-cell offset, plus uniform integer
// noise in [-noise_amplitude, noise_amplitude] drawn from a stream seeded by
// (composite+mask digest, seed). Unmasked pixels are copied verbatim.
class MockInpaintBackend : public InpaintBackend {
 public:
  struct Options {
    int noise_amplitude = 2;
    // Zero-based call indices that fail with BackendUnavailable.
    std::set<std::size_t> fail_calls;
  };

  MockInpaintBackend() = default;
  explicit MockInpaintBackend(Options options) : options_(std::move(options)) {}

  std::string name() const override { return "mock"; }
  RasterImage inpaint(const VisualPrompt& vp, const GenerationParams& params) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  Options options_;
  std::atomic<std::size_t> calls_{0};
};

// Mean of the reference cells only, no noise: the mock's fill before noise.
RasterImage mean_reference_fill(const VisualPrompt& vp);

// Mean absolute difference over unmasked pixels, in [0, 1].
double unmasked_mean_abs_diff(const RasterImage& result, const VisualPrompt& vp);

enum class JobStatus { Pending, Running, Done, Failed };

std::string_view to_string(JobStatus s);

struct GenerationJob {
  std::string id;
  std::shared_ptr<const VisualPrompt> visual_prompt;
  GenerationParams params;
  JobStatus status = JobStatus::Pending;
  std::optional<RasterImage> result;  // present iff status == Done
  std::optional<Errc> error_code;
  std::string error;
};

// Bounded worker pool over one backend. Jobs never change once Done/Failed.
class JobQueue {
 public:
  explicit JobQueue(InpaintBackend& backend, std::size_t workers = 2);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  std::string submit_async(std::shared_ptr<const VisualPrompt> vp, GenerationParams params);
  std::string submit_async(const VisualPrompt& vp, GenerationParams params);

  // Snapshot; throws UnknownJob.
  GenerationJob poll(const std::string& job_id) const;
  // Blocks until the job is Done or Failed.
  GenerationJob wait(const std::string& job_id) const;

  // Statuses observed by each job, in order. For lifecycle checks.
  std::vector<JobStatus> history(const std::string& job_id) const;

 private:
  struct Entry {
    GenerationJob job;
    std::vector<JobStatus> history;
  };

  void work();

  InpaintBackend& backend_;
  mutable std::mutex mu_;
  mutable std::condition_variable changed_;
  std::condition_variable queued_;
  std::deque<std::string> pending_;
  std::map<std::string, Entry> jobs_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace dvp
