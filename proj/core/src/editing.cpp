// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/editing.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "lvg/error.hpp"

namespace lvg {

using nlohmann::json;

LevelRange leading_levels(int steps, double fraction) {
  if (steps < 1) throw Error(Errc::kInvalidArgument, "leading_levels needs steps >= 1");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(Errc::kOutOfRange, "fraction must be in [0, 1]");
  const int span = static_cast<int>(std::ceil(fraction * steps - 1e-12));
  return {steps - std::clamp(span, 0, steps), steps};
}

ControlKind parse_control_kind(std::string_view name) {
  if (name == "none") return ControlKind::kNone;
  if (name == "edge") return ControlKind::kEdge;
  throw Error(Errc::kUnsupported, "unsupported control kind '" + std::string(name) + "' (available: none, edge)");
}

std::string_view to_string(ControlKind kind) { return kind == ControlKind::kEdge ? "edge" : "none"; }

void EditConfig::validate() const {
  if (steps < 1) throw Error(Errc::kInvalidArgument, "edit steps must be >= 1");
  if (!(alpha_min > 0.0 && alpha_min < 1.0)) throw Error(Errc::kOutOfRange, "alpha_min must be in (0, 1)");
  if (resolution < 1) throw Error(Errc::kInvalidArgument, "resolution must be positive");
  for (const auto& h : hooks) {
    if (!(h.weight >= 0.0 && h.weight <= 1.0)) {
      throw Error(Errc::kOutOfRange, "hook '" + h.name + "' weight must be in [0, 1]");
    }
    if (h.levels && (h.levels->low < 0 || h.levels->high > steps || h.levels->low > h.levels->high)) {
      throw Error(Errc::kOutOfRange, "hook '" + h.name + "' levels [" + std::to_string(h.levels->low) + ", " +
                                         std::to_string(h.levels->high) + "] not within [0, " +
                                         std::to_string(steps) + "]");
    }
  }
}

std::string edit_config_to_json(const EditConfig& config) {
  json j;
  j["steps"] = config.steps;
  j["schedule"] = std::string(to_string(config.schedule));
  j["alpha_min"] = config.alpha_min;
  j["control"] = std::string(to_string(config.control));
  j["resolution"] = config.resolution;
  j["guidance_scale"] = config.ddim.guidance_scale ? json(*config.ddim.guidance_scale) : json(nullptr);
  j["hooks"] = json::array();
  for (const auto& h : config.hooks) {
    json hj{{"name", h.name}, {"weight", h.weight}};
    if (h.levels) hj["levels"] = {h.levels->low, h.levels->high};
    j["hooks"].push_back(hj);
  }
  return j.dump(2);
}

EditConfig edit_config_from_json(const std::string& text) {
  EditConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error(Errc::kParse, "edit config must be a JSON object");
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (j.contains("schedule")) c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
    if (j.contains("alpha_min")) c.alpha_min = j.at("alpha_min").get<double>();
    if (j.contains("control")) c.control = parse_control_kind(j.at("control").get<std::string>());
    if (j.contains("resolution")) c.resolution = j.at("resolution").get<int>();
    if (j.contains("guidance_scale") && !j.at("guidance_scale").is_null()) {
      c.ddim.guidance_scale = j.at("guidance_scale").get<double>();
    }
    if (j.contains("hooks")) {
      c.hooks.clear();
      for (const auto& hj : j.at("hooks")) {
        HookSpec h;
        if (hj.contains("name")) h.name = hj.at("name").get<std::string>();
        if (hj.contains("weight")) h.weight = hj.at("weight").get<double>();
        if (hj.contains("levels")) {
          const auto& l = hj.at("levels");
          if (!l.is_array() || l.size() != 2) throw Error(Errc::kParse, "hook levels must be [low, high]");
          h.levels = LevelRange{l[0].get<int>(), l[1].get<int>()};
        }
        c.hooks.push_back(std::move(h));
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, std::string("edit config: ") + e.what());
  }
  c.validate();
  return c;
}

PreframeInjectionHook::PreframeInjectionHook(double weight, LevelRange levels, int steps)
    : weight_(weight), levels_(levels), current_(static_cast<std::size_t>(steps) + 1) {
  if (!(weight >= 0.0 && weight <= 1.0)) throw Error(Errc::kOutOfRange, "injection weight must be in [0, 1]");
  if (levels.low < 0 || levels.high > steps || levels.low > levels.high) {
    throw Error(Errc::kOutOfRange, "injection levels outside [0, " + std::to_string(steps) + "]");
  }
}

void PreframeInjectionHook::begin_frame(std::size_t frame) {
  if (frame == 0) {
    previous_.clear();
  } else {
    previous_ = std::move(current_);
  }
  current_.assign(previous_.empty() ? current_.size() : previous_.size(), std::nullopt);
}

void PreframeInjectionHook::on_level(int level, Latent& z) {
  const auto i = static_cast<std::size_t>(level);
  if (i >= current_.size()) throw Error(Errc::kOutOfRange, "injection hook got level " + std::to_string(level));
  if (levels_.contains(level) && i < previous_.size() && previous_[i]) {
    const Latent& p = *previous_[i];
    if (!(p.shape() == z.shape())) {
      throw Error(Errc::kDimensionMismatch, "injection hook: frame latent " + to_string(z.shape()) +
                                                " differs from previous " + to_string(p.shape()));
    }
    z.values() = (1.0 - weight_) * z.values() + weight_ * p.values();
  }
  current_[i] = z;
}

std::unique_ptr<ConsistencyHook> make_hook(const HookSpec& spec, int steps) {
  if (spec.name == kPreframeInjection) {
    return std::make_unique<PreframeInjectionHook>(spec.weight, spec.levels.value_or(leading_levels(steps, 0.8)),
                                                   steps);
  }
  if (spec.name == kCrossWindowAttention || spec.name == kGlobalTokenMerging) {
    throw Error(Errc::kUnsupported, "hook '" + spec.name + "' is an extension point without an implementation");
  }
  throw Error(Errc::kInvalidArgument, "unknown hook '" + spec.name + "' (known: " + std::string(kPreframeInjection) +
                                          ", " + std::string(kCrossWindowAttention) + ", " +
                                          std::string(kGlobalTokenMerging) + ")");
}

std::vector<Latent> make_control(const std::vector<Image>& frames, ControlKind kind, Shape3 latent_shape) {
  std::vector<Latent> out;
  if (kind == ControlKind::kNone) return out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.width % latent_shape.width || f.height % latent_shape.height || f.width < latent_shape.width ||
        f.height < latent_shape.height) {
      throw Error(Errc::kDimensionMismatch, "frame " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                                                " does not pool to latent " + to_string(latent_shape));
    }
    const int w = f.width, h = f.height;
    Matrix grey(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) grey(y, x) = (f.at(x, y, 0) + f.at(x, y, 1) + f.at(x, y, 2)) / 3.0;
    Matrix mag(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gx = 0.5 * (grey(y, std::min(x + 1, w - 1)) - grey(y, std::max(x - 1, 0)));
        const double gy = 0.5 * (grey(std::min(y + 1, h - 1), x) - grey(std::max(y - 1, 0), x));
        mag(y, x) = std::sqrt(gx * gx + gy * gy);
      }
    }
    const double peak = mag.maxCoeff();
    if (peak > 0.0) mag /= peak;

    Latent c({1, latent_shape.height, latent_shape.width});
    const int bw = w / latent_shape.width, bh = h / latent_shape.height;
    for (int by = 0; by < latent_shape.height; ++by)
      for (int bx = 0; bx < latent_shape.width; ++bx)
        c.at(0, by, bx) = mag.block(by * bh, bx * bw, bh, bw).mean();
    out.push_back(std::move(c));
  }
  return out;
}

EditedSegment edit_segment(const std::vector<Image>& frames, const std::string& source_query,
                           const std::string& edited_query, const EditConfig& config,
                           const DiffusionBackend& backend) {
  if (frames.empty()) throw Error(Errc::kInvalidArgument, "edit_segment needs at least one frame");
  config.validate();
  const NoiseSchedule schedule = config.make_noise_schedule();

  std::vector<std::unique_ptr<ConsistencyHook>> hooks;
  for (const auto& spec : config.hooks) hooks.push_back(make_hook(spec, config.steps));

  std::vector<Image> resized;
  resized.reserve(frames.size());
  for (const auto& f : frames) resized.push_back(center_crop_resize(f, config.resolution));
  const auto controls = make_control(resized, config.control, backend.latent_shape(config.resolution));

  const Condition cq = backend.encode_text(source_query);
  const Condition cq_edit = backend.encode_text(edited_query);

  EditedSegment seg;
  seg.source_query = source_query;
  seg.edited_query = edited_query;
  const LevelHook level_hook = [&](int level, Latent& z) {
    for (auto& h : hooks) h->on_level(level, z);
  };
  for (std::size_t i = 0; i < resized.size(); ++i) {
    try {
      const Latent* control = controls.empty() ? nullptr : &controls[i];
      for (auto& h : hooks) h->begin_frame(i);
      Latent z0 = backend.encode(resized[i]);
      const Latent zT = ddim_invert(z0, cq, schedule, backend, control, nullptr, config.ddim);
      Latent edited = ddim_sample(zT, cq_edit, schedule, backend, hooks.empty() ? LevelHook{} : level_hook, control,
                                  nullptr, config.ddim);
      for (auto& h : hooks) h->end_frame();
      seg.frames.push_back(backend.decode(edited));
      seg.noise_digests.push_back(digest(zT));
      seg.source_latents.push_back(std::move(z0));
      seg.edited_latents.push_back(std::move(edited));
    } catch (const Error& e) {
      throw StepError(e.code(), static_cast<long>(i), "frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return seg;
}

std::string segment_audit_json(const EditedSegment& segment, const EditConfig& config) {
  json j;
  j["video_id"] = segment.video_id;
  j["start_clip"] = segment.span.start;
  j["end_clip"] = segment.span.end;
  j["source_query"] = segment.source_query;
  j["edited_query"] = segment.edited_query;
  j["frame_count"] = segment.frames.size();
  j["config"] = json::parse(edit_config_to_json(config));
  j["frames"] = json::array();
  for (std::size_t i = 0; i < segment.frames.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(segment.noise_digests[i]));
    j["frames"].push_back({{"file", frame_filename(i)}, {"noise_digest", buf}});
  }
  return j.dump(2);
}

}  // namespace lvg
