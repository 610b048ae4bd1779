#pragma once

// HTTP front end for controllable generation. `LayoutService::handle` is the
// whole API as a pure request -> response function; `mount` wires it into an
// httplib server together with static UI files.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "radm/checkpoint.hpp"
#include "radm/diffusion.hpp"
#include "radm/metrics.hpp"
#include "radm/model.hpp"
#include "radm/serialization.hpp"

namespace radm {

struct GenerateRequest {
  std::optional<std::string> sample_id;
  std::optional<std::string> image_path;
  std::vector<std::string> slogans;
  std::vector<PinnedElement> pinned;
  int steps = 100;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double score_threshold = 0.5;
  bool trajectory = false;
};

/// Request rejected before sampling; `fields` maps request paths to messages.
struct RequestError {
  int status = 400;
  std::string message;
  std::map<std::string, std::string> fields;

  nlohmann::json body() const {
    nlohmann::json j = {{"error", message}};
    if (!fields.empty()) j["fields"] = fields;
    return j;
  }
};

/// Parses and validates a request body against the model config. Malformed
/// fields give 400; constraints the model cannot satisfy give 422.
inline std::variant<GenerateRequest, RequestError> parseGenerateRequest(const nlohmann::json& j, const ModelConfig& cfg) {
  RequestError bad{400, "malformed request", {}};
  if (!j.is_object()) {
    bad.fields["body"] = "must be a JSON object";
    return bad;
  }
  GenerateRequest r;
  auto str = [&](const char* key, std::optional<std::string>& out) {
    if (!j.contains(key) || j[key].is_null()) return;
    if (j[key].is_string()) out = j[key].get<std::string>();
    else bad.fields[key] = "must be a string";
  };
  str("sample_id", r.sample_id);
  str("image_path", r.image_path);

  if (j.contains("slogans")) {
    const auto& s = j["slogans"];
    if (!s.is_array()) bad.fields["slogans"] = "must be an array of strings";
    else
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k].is_string()) r.slogans.push_back(s[k].get<std::string>());
        else bad.fields["slogans[" + std::to_string(k) + "]"] = "must be a string";
      }
  }

  if (j.contains("pinned")) {
    const auto& p = j["pinned"];
    if (!p.is_array()) bad.fields["pinned"] = "must be an array";
    else
      for (std::size_t k = 0; k < p.size(); ++k) {
        const std::string at = "pinned[" + std::to_string(k) + "]";
        if (!p[k].is_object()) {
          bad.fields[at] = "must be an object {slot, cls, box}";
          continue;
        }
        PinnedElement pe;
        bool ok = true;
        if (!p[k].contains("slot") || !p[k]["slot"].is_number_integer()) {
          bad.fields[at + ".slot"] = "must be an integer";
          ok = false;
        } else {
          pe.slot = p[k]["slot"].get<int>();
        }
        try {
          pe.element.cls = parseClass(p[k].at("cls").get<std::string>());
        } catch (const std::exception&) {
          bad.fields[at + ".cls"] = "must be one of logo, text, underlay, embellishment";
          ok = false;
        }
        try {
          pe.element.box = boxFromJson(p[k].at("box"));
          if (!isValidBox(pe.element.box)) throw std::invalid_argument("");
        } catch (const std::exception&) {
          bad.fields[at + ".box"] = "must be [cx, cy, w, h] inside the unit canvas with w, h >= 0.001";
          ok = false;
        }
        if (ok) r.pinned.push_back(pe);
      }
  }

  auto integer = [&](const char* key, auto& out, long long lo, long long hi) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer() || j[key].get<long long>() < lo || j[key].get<long long>() > hi) {
      bad.fields[key] = "must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
      return;
    }
    out = static_cast<std::remove_reference_t<decltype(out)>>(j[key].get<long long>());
  };
  integer("steps", r.steps, 1, cfg.T);
  if (j.contains("seed")) {
    if (j["seed"].is_number_unsigned()) r.seed = j["seed"].get<std::uint64_t>();
    else if (j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0) r.seed = j["seed"].get<std::uint64_t>();
    else bad.fields["seed"] = "must be a non-negative integer";
  }
  if (j.contains("eta")) {
    if (j["eta"].is_number() && j["eta"].get<double>() >= 0) r.eta = j["eta"].get<double>();
    else bad.fields["eta"] = "must be a number >= 0";
  }
  if (j.contains("score_threshold")) {
    if (j["score_threshold"].is_number()) r.score_threshold = j["score_threshold"].get<double>();
    else bad.fields["score_threshold"] = "must be a number";
  }
  if (j.contains("trajectory")) {
    if (j["trajectory"].is_boolean()) r.trajectory = j["trajectory"].get<bool>();
    else bad.fields["trajectory"] = "must be a boolean";
  }
  if (!bad.fields.empty()) return bad;

  GenerationConstraints c{r.pinned, r.slogans, r.seed};
  try {
    validateConstraints(c, cfg);
  } catch (const ConstraintError& e) {
    return RequestError{422, "infeasible constraints", {{e.field, e.what()}}};
  }
  return r;
}

inline nlohmann::json requestEcho(const GenerateRequest& r) {
  nlohmann::json pins = nlohmann::json::array();
  for (const auto& p : r.pinned) {
    auto e = elementToJson(p.element);
    e.erase("score");
    e["slot"] = p.slot;
    pins.push_back(e);
  }
  nlohmann::json j = {{"slogans", r.slogans}, {"pinned", pins}, {"steps", r.steps}, {"seed", r.seed}};
  if (r.sample_id) j["sample_id"] = *r.sample_id;
  if (r.image_path) j["image_path"] = *r.image_path;
  if (r.eta > 0) j["eta"] = r.eta;
  return j;
}

inline nlohmann::json trajectoryToJson(const TrajectoryStep& s) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : s.boxes) boxes.push_back(boxToJson(b));
  return {{"step", s.step}, {"boxes", boxes}, {"scores", s.scores}};
}

inline std::string configDigest(const ModelConfig& cfg, const AblationFlags& flags) {
  const std::string text = toJson(cfg).dump() + toJson(flags).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class LayoutService {
 public:
  struct Options {
    std::optional<std::filesystem::path> dataset_dir;
    std::optional<std::filesystem::path> static_dir;
  };

  LayoutService(std::optional<Checkpoint<float>> ck, Options opts) : opts_(std::move(opts)) {
    if (ck) {
      meta_ = ck->meta;
      model_ = std::move(ck->model);
      sched_ = makeSchedule(meta_->model.T, meta_->train.schedule);
    }
    if (opts_.dataset_dir) {
      for (auto& s : loadDataset(*opts_.dataset_dir)) {
        index_[s.id] = samples_.size();
        samples_.push_back(std::move(s));
      }
    }
  }

  /// RADM_CHECKPOINT, RADM_DATASET_DIR and RADM_STATIC_DIR; a missing or
  /// unreadable checkpoint leaves the service up but answering 503.
  static LayoutService fromEnv(std::string* warning = nullptr) {
    Options o;
    if (const char* d = std::getenv("RADM_DATASET_DIR"); d && *d) o.dataset_dir = d;
    if (const char* d = std::getenv("RADM_STATIC_DIR"); d && *d) o.static_dir = d;
    std::optional<Checkpoint<float>> ck;
    if (const char* p = std::getenv("RADM_CHECKPOINT"); p && *p) {
      try {
        ck = loadCheckpoint<float>(p);
      } catch (const std::exception& e) {
        if (warning) *warning = e.what();
      }
    } else if (warning) {
      *warning = "RADM_CHECKPOINT is not set";
    }
    return LayoutService(std::move(ck), std::move(o));
  }

  bool loaded() const { return meta_.has_value(); }
  const std::vector<PosterSample>& samples() const { return samples_; }

  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body = {}) const {
    if (path == "/api/health" && method == "GET") return health();
    if (path == "/api/samples" && method == "GET") return listSamples();
    if (path == "/api/generate" && method == "POST") return generate(body);
    const std::string prefix = "/api/samples/";
    if (method == "GET" && path.rfind(prefix, 0) == 0) return sampleAsset(path.substr(prefix.size()));
    if (path.rfind("/api/", 0) == 0) return json(404, {{"error", "no route " + method + " " + path}});
    return json(404, {{"error", "not found"}});
  }

  /// Registers the API routes and static UI files on `server`.
  void mount(httplib::Server& server) const {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      const ServiceResponse r = handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server.Get("/api/health", forward);
    server.Get("/api/samples", forward);
    server.Get(R"(/api/samples/.+)", forward);
    server.Post("/api/generate", forward);
    if (opts_.static_dir) server.set_mount_point("/", opts_.static_dir->string());
  }

 private:
  static ServiceResponse json(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }

  ServiceResponse health() const {
    nlohmann::json j = {{"status", "ok"}, {"model_loaded", loaded()}, {"samples", samples_.size()}};
    if (loaded()) {
      j["config_digest"] = configDigest(meta_->model, model_.flags());
      j["variant"] = variantName(model_.flags());
      j["model_config"] = toJson(meta_->model);
      j["step"] = meta_->step;
      j["git_describe"] = meta_->git_describe;
    }
    return json(200, j);
  }

  ServiceResponse listSamples() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : samples_)
      list.push_back({{"id", s.id}, {"canvas", {s.image.width, s.image.height}}, {"slogans", s.slogans}});
    return json(200, {{"samples", list}});
  }

  // /api/samples/<id>/image.png or /api/samples/<id>
  ServiceResponse sampleAsset(const std::string& rest) const {
    const auto slash = rest.find('/');
    const std::string id = rest.substr(0, slash);
    const auto it = index_.find(id);
    if (it == index_.end()) return json(404, {{"error", "unknown sample_id '" + id + "'"}});
    const PosterSample& s = samples_[it->second];
    if (slash == std::string::npos) {
      auto rec = sampleRecord(s);
      return json(200, rec);
    }
    const std::string asset = rest.substr(slash + 1);
    std::filesystem::path file;
    if (asset == "image.png") file = *opts_.dataset_dir / s.image_path;
    else if (asset == "saliency.png" && !s.saliency_path.empty()) file = *opts_.dataset_dir / s.saliency_path;
    else return json(404, {{"error", "unknown asset '" + asset + "'"}});
    try {
      return {200, "image/png", readTextFile(file)};
    } catch (const std::exception& e) {
      return json(404, {{"error", e.what()}});
    }
  }

  ServiceResponse generate(const std::string& body) const {
    if (!loaded()) return json(503, {{"error", "model not loaded"}});
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      return json(400, RequestError{400, "malformed request", {{"body", std::string("invalid JSON: ") + e.what()}}}.body());
    }
    auto parsed = parseGenerateRequest(j, meta_->model);
    if (auto* err = std::get_if<RequestError>(&parsed)) return json(err->status, err->body());
    const GenerateRequest& req = std::get<GenerateRequest>(parsed);

    const PosterSample* sample = nullptr;
    Raster image;
    if (req.sample_id) {
      const auto it = index_.find(*req.sample_id);
      if (it == index_.end()) return json(404, {{"error", "unknown sample_id '" + *req.sample_id + "'"}});
      sample = &samples_[it->second];
      image = sample->image;
    } else if (req.image_path) {
      if (!std::filesystem::exists(*req.image_path))
        return json(404, {{"error", "image not found: " + *req.image_path}});
      try {
        image = readPng(*req.image_path, 3);
      } catch (const std::exception& e) {
        return json(400, RequestError{400, "malformed request", {{"image_path", e.what()}}}.body());
      }
    } else {
      image = Raster(meta_->model.input_w, meta_->model.input_h, 3, 0.5f);
    }

    SamplerOptions so;
    so.steps = req.steps;
    so.eta = req.eta;
    so.score_threshold = req.score_threshold;
    so.record_trajectory = req.trajectory;
    const SampleResult res = radm::sample(model_, image, {req.pinned, req.slogans, req.seed}, *sched_, so);
    nlohmann::json out = {{"layout", layoutToJson(res.layout)}, {"constraints", requestEcho(req)}};
    if (req.trajectory) {
      nlohmann::json traj = nlohmann::json::array();
      for (const auto& s : res.trajectory) traj.push_back(trajectoryToJson(s));
      out["trajectory"] = traj;
    }
    if (sample) {
      auto m = toJson(layoutMetrics(res.layout, sample->image, sample->saliency));
      m.erase("id");
      out["metrics"] = m;
    }
    return json(200, out);
  }

  Options opts_;
  std::optional<CheckpointMeta> meta_;
  Model<float> model_;
  std::optional<DiffusionSchedule> sched_;
  std::vector<PosterSample> samples_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace radm
