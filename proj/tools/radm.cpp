// radm: synth / train / generate / eval / ablate / serve

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "radm/radm.hpp"
#include "radm/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ModelArgs {
  bool desk = false;
  std::string config_file;

  radm::ModelConfig resolve() const {
    radm::ModelConfig cfg = desk ? radm::deskConfig() : radm::ModelConfig{};
    if (!config_file.empty()) cfg = radm::modelConfigFromJson(json::parse(radm::readTextFile(config_file)), cfg);
    cfg.validate();
    return cfg;
  }

  void add(CLI::App* app) {
    app->add_flag("--desk", desk, "Use the small desk-scale model configuration");
    app->add_option("--model-config", config_file, "JSON file overriding model config fields")->check(CLI::ExistingFile);
  }
};

struct TrainArgs {
  radm::TrainConfig tc;
  std::string variant = "full";
  std::string schedule = "cosine";

  void add(CLI::App* app) {
    app->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch-size", tc.batch_size, "Batch size")->capture_default_str();
    app->add_option("--lr", tc.lr, "AdamW learning rate")->capture_default_str();
    app->add_option("--weight-decay", tc.weight_decay, "AdamW weight decay")->capture_default_str();
    app->add_option("--seed", tc.seed, "Seed for initialization, batching and noise")->capture_default_str();
    app->add_option("--max-steps", tc.max_steps, "Stop after this many updates (overrides epochs)");
    app->add_option("--variant", variant, "full | no-gram | no-vtram | no-vtram-no-gram")->capture_default_str();
    app->add_option("--schedule", schedule, "cosine | linear")->capture_default_str();
  }

  radm::TrainConfig resolve() {
    tc.flags = radm::parseVariant(variant);
    tc.schedule = radm::parseSchedule(schedule);
    tc.validate();
    return tc;
  }
};

std::vector<std::string> readLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void writeOrPrint(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else radm::writeTextFile(path, text);
}

int runSynth(const radm::SynthSpec& spec, const std::string& out) {
  const auto samples = radm::generate(spec);
  radm::saveDataset(samples, out);
  std::cerr << "wrote " << samples.size() << " samples to " << out << '\n';
  return 0;
}

int runTrain(const ModelArgs& ma, TrainArgs& ta, const std::string& data, const std::string& out,
             const std::string& log_path, int log_every) {
  const auto cfg = ma.resolve();
  const auto tc = ta.resolve();
  const auto samples = radm::loadDataset(data);
  radm::Trainer trainer(cfg, tc, samples);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw std::runtime_error("cannot write " + log_path);
  }
  const int total = trainer.totalSteps();
  try {
    trainer.run([&](long long step, const radm::LossBreakdown& lb) {
      const auto rec = radm::lossLogRecord(step, lb, tc.lr);
      if (log) log << rec.dump() << '\n';
      if (log_every > 0 && (step % log_every == 0 || step == total))
        std::cerr << "step " << step << "/" << total << " loss " << lb.total << '\n';
    });
  } catch (const radm::TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n' << e.dump << '\n';
    return 1;
  }
  trainer.save(out);
  std::cerr << "saved " << out << '\n';
  return 0;
}

struct GenerateArgs {
  std::string checkpoint, image, data, sample_id, slogans_file, constraints, out, out_dir, render, trajectory;
  std::vector<std::string> slogans;
  int steps = 100;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double threshold = 0.5;
};

int runGenerate(const GenerateArgs& a, const CLI::App& app) {
  auto ck = radm::loadCheckpoint<float>(a.checkpoint);
  const auto& cfg = ck.meta.model;
  const auto sched = radm::makeSchedule(cfg.T, ck.meta.train.schedule);

  radm::GenerateRequest req;
  if (!a.constraints.empty()) {
    auto parsed = radm::parseGenerateRequest(json::parse(radm::readTextFile(a.constraints)), cfg);
    if (auto* err = std::get_if<radm::RequestError>(&parsed)) {
      std::cerr << "error: constraints file: " << err->body().dump() << '\n';
      return 1;
    }
    req = std::get<radm::GenerateRequest>(parsed);
  }
  if (app.count("--steps")) req.steps = a.steps;
  if (app.count("--seed")) req.seed = a.seed;
  if (app.count("--eta")) req.eta = a.eta;
  if (app.count("--score-threshold")) req.score_threshold = a.threshold;
  if (!a.slogans_file.empty()) req.slogans = readLines(a.slogans_file);
  if (!a.slogans.empty()) req.slogans = a.slogans;
  if (req.steps < 1 || req.steps > cfg.T) throw std::invalid_argument("--steps must lie in [1, T]");

  radm::SamplerOptions so;
  so.steps = req.steps;
  so.eta = req.eta;
  so.score_threshold = req.score_threshold;
  so.record_trajectory = !a.trajectory.empty();

  // Whole dataset into a directory of <id>.json files.
  if (!a.out_dir.empty()) {
    if (a.data.empty()) throw std::invalid_argument("--out-dir needs --data");
    const auto samples = radm::loadDataset(a.data);
    fs::create_directories(a.out_dir);
    const auto layouts = radm::generateForDataset(ck.model, std::span<const radm::PosterSample>(samples), sched, so,
                                                  req.seed);
    for (std::size_t i = 0; i < samples.size(); ++i)
      radm::writeTextFile(fs::path(a.out_dir) / (samples[i].id + ".json"), radm::layoutToJson(layouts[i]).dump(1) + "\n");
    std::cerr << "wrote " << layouts.size() << " layouts to " << a.out_dir << '\n';
    return 0;
  }

  radm::Raster image;
  const std::string sample_id = a.sample_id.empty() ? req.sample_id.value_or("") : a.sample_id;
  if (!a.image.empty()) {
    image = radm::readPng(a.image, 3);
  } else if (!sample_id.empty()) {
    if (a.data.empty()) throw std::invalid_argument("--sample-id needs --data");
    bool found = false;
    for (auto& s : radm::loadDataset(a.data))
      if (s.id == sample_id) {
        image = std::move(s.image);
        if (a.slogans_file.empty() && a.slogans.empty() && req.slogans.empty()) req.slogans = s.slogans;
        found = true;
      }
    if (!found) throw std::invalid_argument("unknown sample id '" + sample_id + "'");
  } else if (req.image_path) {
    image = radm::readPng(*req.image_path, 3);
  } else {
    throw std::invalid_argument("one of --image, --sample-id or --out-dir is required");
  }

  const auto res = radm::sample(ck.model, image, {req.pinned, req.slogans, req.seed}, sched, so);
  writeOrPrint(a.out, radm::layoutToJson(res.layout).dump(1) + "\n");
  if (!a.render.empty()) radm::writePng(radm::renderLayout(res.layout, image), a.render);
  if (!a.trajectory.empty()) {
    std::ostringstream os;
    for (const auto& s : res.trajectory) os << radm::trajectoryToJson(s).dump() << '\n';
    radm::writeTextFile(a.trajectory, os.str());
  }
  return 0;
}

int runEval(const std::string& data, const std::string& layouts_dir, bool ground_truth, bool per_sample,
            const std::string& csv_path, const std::string& json_path) {
  const auto samples = radm::loadDataset(data);
  std::vector<radm::Layout> layouts;
  for (const auto& s : samples) {
    if (ground_truth) {
      layouts.push_back(s.gt);
      continue;
    }
    const fs::path p = fs::path(layouts_dir) / (s.id + ".json");
    if (!fs::exists(p)) throw std::runtime_error("missing layout " + p.string());
    layouts.push_back(radm::layoutFromJson(json::parse(radm::readTextFile(p))));
  }
  const auto per = radm::evaluateLayouts(samples, layouts);
  const auto report = radm::aggregate(per);

  json j = radm::toJson(report);
  if (per_sample) {
    json arr = json::array();
    for (const auto& m : per) arr.push_back(radm::toJson(m));
    j["per_sample"] = arr;
  }
  std::string csv = std::string(radm::kReportCsvHeader) + "\n" + radm::csvRow(report) + "\n";
  if (per_sample) csv += "\n" + radm::perSampleCsv(per);

  if (!csv_path.empty()) radm::writeTextFile(csv_path, csv);
  if (!json_path.empty()) radm::writeTextFile(json_path, j.dump(1) + "\n");
  if (csv_path.empty() && json_path.empty()) std::cout << j.dump(1) << '\n';
  return 0;
}

std::vector<std::string> splitComma(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int runAblate(const ModelArgs& ma, TrainArgs& ta, const std::string& data, const std::string& variants,
              const std::string& seeds, int steps, const std::string& out) {
  const auto cfg = ma.resolve();
  const auto base = ta.resolve();
  const auto samples = radm::loadDataset(data);
  radm::AblationOptions opts;
  opts.variants.clear();
  for (const auto& v : splitComma(variants)) opts.variants.push_back(radm::parseVariant(v));
  opts.seeds.clear();
  for (const auto& s : splitComma(seeds)) opts.seeds.push_back(std::stoull(s));
  opts.sampler.steps = steps;
  const auto rows = radm::runAblation(samples, cfg, base, opts, [](const radm::AblationRow& r) {
    std::cerr << r.variant << " seed " << r.seed << " r_ove " << r.report.r_ove << " r_com " << r.report.r_com << '\n';
  });
  writeOrPrint(out, radm::ablationCsv(rows));
  return 0;
}

int runServe(std::string checkpoint, std::string data, std::string static_dir, int port) {
  if (checkpoint.empty())
    if (const char* e = std::getenv("RADM_CHECKPOINT")) checkpoint = e;
  if (data.empty())
    if (const char* e = std::getenv("RADM_DATASET_DIR")) data = e;
  if (static_dir.empty())
    if (const char* e = std::getenv("RADM_STATIC_DIR")) static_dir = e;
  if (port <= 0) {
    const char* e = std::getenv("RADM_PORT");
    port = e ? std::atoi(e) : 8080;
  }
  std::optional<radm::Checkpoint<float>> ck;
  if (!checkpoint.empty()) {
    try {
      ck = radm::loadCheckpoint<float>(checkpoint);
    } catch (const std::exception& e) {
      std::cerr << "warning: " << e.what() << "; /api/generate will answer 503\n";
    }
  } else {
    std::cerr << "warning: no checkpoint; /api/generate will answer 503\n";
  }
  radm::LayoutService::Options o;
  if (!data.empty()) o.dataset_dir = data;
  if (!static_dir.empty()) o.static_dir = static_dir;
  const radm::LayoutService service(std::move(ck), o);
  httplib::Server server;
  service.mount(server);
  std::cerr << "listening on port " << port << '\n';
  if (!server.listen("0.0.0.0", port)) {
    std::cerr << "error: cannot listen on port " << port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relation-aware diffusion for poster layouts"};
  app.require_subcommand(1);

  radm::SynthSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic poster dataset");
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--count", spec.count, "Number of posters")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--canvas-w", spec.canvas_w, "Canvas width in pixels")->capture_default_str();
  synth->add_option("--canvas-h", spec.canvas_h, "Canvas height in pixels")->capture_default_str();
  synth->add_option("--blobs-min", spec.blobs_min)->capture_default_str();
  synth->add_option("--blobs-max", spec.blobs_max)->capture_default_str();
  synth->add_option("--texts-min", spec.texts_min)->capture_default_str();
  synth->add_option("--texts-max", spec.texts_max)->capture_default_str();
  synth->add_option("--underlay-prob", spec.underlay_prob)->capture_default_str();
  synth->add_option("--embellish-prob", spec.embellish_prob)->capture_default_str();

  ModelArgs train_model;
  TrainArgs train_args;
  std::string train_data, train_out, train_log;
  int log_every = 50;
  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--log", train_log, "JSONL loss log");
  train->add_option("--log-every", log_every, "Progress line interval on stderr (0 = silent)")->capture_default_str();
  train_model.add(train);
  train_args.add(train);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Sample a layout from a checkpoint");
  generate->add_option("--checkpoint", gen.checkpoint, "Checkpoint path")->required()->check(CLI::ExistingFile);
  generate->add_option("--image", gen.image, "Background PNG")->check(CLI::ExistingFile);
  generate->add_option("--data", gen.data, "Dataset directory")->check(CLI::ExistingDirectory);
  generate->add_option("--sample-id", gen.sample_id, "Sample id within --data");
  generate->add_option("--slogan", gen.slogans, "Slogan (repeatable)");
  generate->add_option("--slogans-file", gen.slogans_file, "One slogan per line")->check(CLI::ExistingFile);
  generate->add_option("--constraints", gen.constraints, "Generate request JSON (slogans, pinned, steps, seed)")
      ->check(CLI::ExistingFile);
  generate->add_option("--steps", gen.steps, "DDIM steps")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Sampling seed")->capture_default_str();
  generate->add_option("--eta", gen.eta, "DDIM stochasticity (0 = deterministic)")->capture_default_str();
  generate->add_option("--score-threshold", gen.threshold, "Drop slots below this class probability")
      ->capture_default_str();
  generate->add_option("--out", gen.out, "Layout JSON path (default stdout)");
  generate->add_option("--out-dir", gen.out_dir, "Generate for every sample in --data into this directory");
  generate->add_option("--render", gen.render, "Write an overlay PNG");
  generate->add_option("--trajectory", gen.trajectory, "Write per-step boxes as JSONL");

  std::string eval_data, eval_layouts, eval_csv, eval_json;
  bool eval_gt = false, per_sample = false;
  auto* eval = app.add_subcommand("eval", "Compute layout metrics");
  eval->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* layouts_opt = eval->add_option("--layouts", eval_layouts, "Directory of <id>.json layouts")
                          ->check(CLI::ExistingDirectory);
  auto* gt_opt = eval->add_flag("--ground-truth", eval_gt, "Evaluate the dataset's own layouts");
  layouts_opt->excludes(gt_opt);
  eval->add_flag("--per-sample", per_sample, "Include a per-layout breakdown");
  eval->add_option("--csv", eval_csv, "CSV report path");
  eval->add_option("--json", eval_json, "JSON report path");

  ModelArgs ab_model;
  TrainArgs ab_args;
  std::string ab_data, ab_variants = "full,no-gram,no-vtram", ab_seeds = "0", ab_out;
  int ab_steps = 50;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  ablate->add_option("--data", ab_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--variants", ab_variants, "Comma-separated variants")->capture_default_str();
  ablate->add_option("--seeds", ab_seeds, "Comma-separated seeds")->capture_default_str();
  ablate->add_option("--sample-steps", ab_steps, "DDIM steps for evaluation")->capture_default_str();
  ablate->add_option("--out", ab_out, "CSV path (default stdout)");
  ab_model.add(ablate);
  ab_args.add(ablate);

  std::string serve_ckpt, serve_data, serve_static;
  int serve_port = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--checkpoint", serve_ckpt, "Checkpoint (default $RADM_CHECKPOINT)");
  serve->add_option("--data", serve_data, "Dataset directory (default $RADM_DATASET_DIR)");
  serve->add_option("--static", serve_static, "UI bundle directory (default $RADM_STATIC_DIR)");
  serve->add_option("--port", serve_port, "Port (default $RADM_PORT or 8080)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return runSynth(spec, synth_out);
    if (*train) return runTrain(train_model, train_args, train_data, train_out, train_log, log_every);
    if (*generate) return runGenerate(gen, *generate);
    if (*eval) {
      if (eval_layouts.empty() && !eval_gt) throw std::invalid_argument("eval needs --layouts or --ground-truth");
      return runEval(eval_data, eval_layouts, eval_gt, per_sample, eval_csv, eval_json);
    }
    if (*ablate) return runAblate(ab_model, ab_args, ab_data, ab_variants, ab_seeds, ab_steps, ab_out);
    if (*serve) return runServe(serve_ckpt, serve_data, serve_static, serve_port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
