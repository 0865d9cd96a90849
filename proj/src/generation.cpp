#include "dvp/generation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace dvp {

void GenerationParams::validate() const {
  if (steps < 1) throw Error(Errc::InvalidArgument, "steps must be at least 1");
  if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale)) {
    throw Error(Errc::InvalidArgument, "guidance_scale must be finite and >= 0");
  }
}

RasterImage mean_reference_fill(const VisualPrompt& vp) {
  const GridSpec& grid = vp.grid;
  const int cell = grid.cell_px;
  const auto refs = grid.reference_cells();
  RasterImage out = vp.composite;
  const auto count = static_cast<std::uint32_t>(refs.size());
  std::vector<std::uint32_t> sum(static_cast<std::size_t>(cell) * cell * 3);
  for (const auto& r : refs) {
    for (int y = 0; y < cell; ++y) {
      const std::uint8_t* src = vp.composite.at(r.col * cell, r.row * cell + y);
      std::uint32_t* dst = sum.data() + static_cast<std::size_t>(y) * cell * 3;
      for (int i = 0; i < cell * 3; ++i) dst[i] += src[i];
    }
  }
  for (const auto& c : grid.canvas_cells) {
    for (int y = 0; y < cell; ++y) {
      std::uint8_t* dst = out.at(c.col * cell, c.row * cell + y);
      const std::uint32_t* s = sum.data() + static_cast<std::size_t>(y) * cell * 3;
      for (int i = 0; i < cell * 3; ++i) dst[i] = static_cast<std::uint8_t>((s[i] + count / 2) / count);
    }
  }
  return out;
}

RasterImage MockInpaintBackend::inpaint(const VisualPrompt& vp, const GenerationParams& params) {
  params.validate();
  const std::size_t call = calls_.fetch_add(1);
  if (options_.fail_calls.contains(call)) {
    throw Error(Errc::BackendUnavailable, "mock inpaint failure injected on call " + std::to_string(call));
  }
  if (vp.composite.width != vp.mask.width || vp.composite.height != vp.mask.height) {
    throw Error(Errc::DimensionMismatch, "mask and composite differ in size");
  }
  RasterImage out = mean_reference_fill(vp);
  const int amp = options_.noise_amplitude;
  if (amp > 0) {
    std::vector<std::uint8_t> key(vp.composite.pixels);
    key.insert(key.end(), vp.mask.pixels.begin(), vp.mask.pixels.end());
    SplitMix64 rng(digest_seed(sha256(key)) ^ params.seed);
    const auto span = static_cast<std::uint64_t>(2 * amp + 1);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        if (vp.mask.at(x, y)[0] != kMaskGenerate) continue;
        std::uint8_t* p = out.at(x, y);
        for (int c = 0; c < 3; ++c) {
          int v = p[c] + static_cast<int>(rng.next() % span) - amp;
          p[c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
      }
    }
  }
  return out;
}

double unmasked_mean_abs_diff(const RasterImage& result, const VisualPrompt& vp) {
  if (result.width != vp.composite.width || result.height != vp.composite.height) {
    throw Error(Errc::DimensionMismatch, "result and composite differ in size");
  }
  std::uint64_t total = 0, count = 0;
  for (int y = 0; y < result.height; ++y) {
    for (int x = 0; x < result.width; ++x) {
      if (vp.mask.at(x, y)[0] == kMaskGenerate) continue;
      const auto* a = result.at(x, y);
      const auto* b = vp.composite.at(x, y);
      for (int c = 0; c < 3; ++c) total += static_cast<std::uint64_t>(std::abs(int(a[c]) - int(b[c])));
      count += 3;
    }
  }
  return count == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(count) / 255.0;
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Pending: return "pending";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "pending";
}

JobQueue::JobQueue(InpaintBackend& backend, std::size_t workers) : backend_(backend) {
  if (workers == 0) workers = 1;
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { work(); });
}

JobQueue::~JobQueue() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  queued_.notify_all();
  for (auto& t : workers_) t.join();
}

std::string JobQueue::submit_async(std::shared_ptr<const VisualPrompt> vp, GenerationParams params) {
  params.validate();
  std::string id;
  {
    std::lock_guard lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
    Entry e;
    e.job.id = id;
    e.job.visual_prompt = std::move(vp);
    e.job.params = std::move(params);
    e.history.push_back(JobStatus::Pending);
    jobs_.emplace(id, std::move(e));
    pending_.push_back(id);
  }
  queued_.notify_one();
  return id;
}

std::string JobQueue::submit_async(const VisualPrompt& vp, GenerationParams params) {
  return submit_async(std::make_shared<const VisualPrompt>(vp), std::move(params));
}

GenerationJob JobQueue::poll(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::UnknownJob, "unknown job " + job_id);
  return it->second.job;
}

GenerationJob JobQueue::wait(const std::string& job_id) const {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::UnknownJob, "unknown job " + job_id);
  changed_.wait(lock, [&] {
    return it->second.job.status == JobStatus::Done || it->second.job.status == JobStatus::Failed;
  });
  return it->second.job;
}

std::vector<JobStatus> JobQueue::history(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::UnknownJob, "unknown job " + job_id);
  return it->second.history;
}

void JobQueue::work() {
  for (;;) {
    std::shared_ptr<const VisualPrompt> vp;
    GenerationParams params;
    std::string id;
    {
      std::unique_lock lock(mu_);
      queued_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
      if (pending_.empty()) return;
      id = pending_.front();
      pending_.pop_front();
      Entry& e = jobs_.at(id);
      e.job.status = JobStatus::Running;
      e.history.push_back(JobStatus::Running);
      vp = e.job.visual_prompt;
      params = e.job.params;
    }
    changed_.notify_all();
    std::optional<RasterImage> result;
    std::optional<Errc> code;
    std::string message;
    try {
      result = backend_.inpaint(*vp, params);
    } catch (const Error& ex) {
      code = ex.code();
      message = ex.what();
    } catch (const std::exception& ex) {
      code = Errc::BackendUnavailable;
      message = ex.what();
    }
    {
      std::lock_guard lock(mu_);
      Entry& e = jobs_.at(id);
      if (result) {
        e.job.result = std::move(result);
        e.job.status = JobStatus::Done;
      } else {
        e.job.error_code = code;
        e.job.error = message;
        e.job.status = JobStatus::Failed;
      }
      e.history.push_back(e.job.status);
    }
    changed_.notify_all();
  }
}

}  // namespace dvp
