#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <thread>

#include "fixtures.hpp"
#include "radm/pipeline.hpp"
#include "radm/render.hpp"
#include "radm/service.hpp"
#include "radm/synthdata.hpp"

using namespace radm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Shared {
  fixture::TempDir dir{"iface"};
  fs::path data, ckpt;
  std::vector<PosterSample> samples;

  Shared() {
    SynthSpec s;
    s.count = 3;
    s.seed = 21;
    s.canvas_w = 48;
    s.canvas_h = 75;
    samples = generate(s);
    data = dir / "data";
    saveDataset(samples, data);
    TrainConfig tc;
    tc.max_steps = 2;
    tc.batch_size = 2;
    tc.seed = 5;
    Trainer tr(deskConfig(), tc, samples);
    tr.run();
    ckpt = dir / "m.ckpt";
    tr.save(ckpt);
  }
};

Shared& shared() {
  static Shared s;
  return s;
}

LayoutService loadedService() {
  LayoutService::Options o;
  o.dataset_dir = shared().data;
  return LayoutService(loadCheckpoint<float>(shared().ckpt), o);
}

json body(const ServiceResponse& r) { return json::parse(r.body); }

int runCli(const std::string& args, const fs::path& out = {}) {
  std::string cmd = std::string(RADM_CLI_PATH) + " " + args;
  cmd += out.empty() ? " > /dev/null 2>&1" : " > '" + out.string() + "' 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Service, GenerateWithoutModelIs503) {
  const LayoutService svc(std::nullopt, {});
  EXPECT_EQ(svc.handle("POST", "/api/generate", "{}").status, 503);
  const auto h = svc.handle("GET", "/api/health");
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(body(h)["model_loaded"], false);
}

TEST(Service, MalformedRequestsNameFields) {
  const auto svc = loadedService();
  auto r = svc.handle("POST", "/api/generate", "{not json");
  EXPECT_EQ(r.status, 400);
  EXPECT_TRUE(body(r)["fields"].contains("body"));
  r = svc.handle("POST", "/api/generate", R"({"steps": "many", "slogans": [3], "pinned": [{"slot": 0, "cls": "dragon", "box": [0.5, 0.5, 0.2]}]})");
  EXPECT_EQ(r.status, 400);
  const auto f = body(r)["fields"];
  EXPECT_TRUE(f.contains("steps"));
  EXPECT_TRUE(f.contains("pinned[0].cls"));
  EXPECT_TRUE(f.contains("pinned[0].box"));
  EXPECT_EQ(svc.handle("POST", "/api/generate", R"({"steps": 0})").status, 400);
}

TEST(Service, InfeasiblePinIs422) {
  const auto svc = loadedService();
  const int slot = deskConfig().N + 3;
  const json req = {{"pinned", {{{"slot", slot}, {"cls", "logo"}, {"box", {0.5, 0.1, 0.2, 0.1}}}}}};
  const auto r = svc.handle("POST", "/api/generate", req.dump());
  EXPECT_EQ(r.status, 422);
  const auto f = body(r)["fields"];
  ASSERT_TRUE(f.contains("pinned[0].slot"));
  EXPECT_NE(f["pinned[0].slot"].get<std::string>().find(std::to_string(slot)), std::string::npos);

  json many = {{"slogans", json::array()}};
  for (int k = 0; k <= deskConfig().D_n; ++k) many["slogans"].push_back("slogan " + std::to_string(k));
  EXPECT_EQ(svc.handle("POST", "/api/generate", many.dump()).status, 422);
}

TEST(Service, UnknownSampleAndRouteAre404) {
  const auto svc = loadedService();
  EXPECT_EQ(svc.handle("POST", "/api/generate", R"({"sample_id": "nope"})").status, 404);
  EXPECT_EQ(svc.handle("GET", "/api/samples/nope").status, 404);
  EXPECT_EQ(svc.handle("GET", "/api/other").status, 404);
  EXPECT_EQ(svc.handle("POST", "/api/generate", R"({"image_path": "/no/such.png"})").status, 404);
}

TEST(Service, GenerateIsDeterministic) {
  const auto svc = loadedService();
  const std::string req = R"({"steps": 5, "seed": 9, "slogans": ["summer sale"], "trajectory": true})";
  const auto a = svc.handle("POST", "/api/generate", req), b = svc.handle("POST", "/api/generate", req);
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(a.body, b.body);
  const auto j = body(a);
  EXPECT_EQ(j["trajectory"].size(), 5u);
  EXPECT_EQ(j["constraints"]["seed"], 9);
  EXPECT_FALSE(j.contains("metrics"));
  EXPECT_EQ(j["layout"]["canvas"][0], deskConfig().input_w);
}

TEST(Service, PinnedElementReturnedVerbatim) {
  const auto svc = loadedService();
  const json req = {{"steps", 4},
                    {"sample_id", shared().samples[0].id},
                    {"pinned", {{{"slot", 2}, {"cls", "logo"}, {"box", {0.25, 0.125, 0.375, 0.0625}}}}}};
  const auto r = svc.handle("POST", "/api/generate", req.dump());
  ASSERT_EQ(r.status, 200);
  const auto j = body(r);
  bool found = false;
  for (const auto& e : j["layout"]["elements"])
    if (e["cls"] == "logo" && e["box"] == json({0.25, 0.125, 0.375, 0.0625})) found = true;
  EXPECT_TRUE(found);
  EXPECT_TRUE(j.contains("metrics"));
}

TEST(Service, HealthAndSamples) {
  const auto svc = loadedService();
  const auto h = body(svc.handle("GET", "/api/health"));
  EXPECT_EQ(h["model_loaded"], true);
  EXPECT_EQ(h["variant"], "full");
  EXPECT_EQ(h["samples"], 3);
  EXPECT_EQ(h["config_digest"].get<std::string>().size(), 16u);
  const auto s = body(svc.handle("GET", "/api/samples"));
  ASSERT_EQ(s["samples"].size(), 3u);
  const std::string id = s["samples"][0]["id"];
  const auto rec = svc.handle("GET", "/api/samples/" + id);
  EXPECT_EQ(rec.status, 200);
  EXPECT_EQ(body(rec)["id"], id);
  const auto png = svc.handle("GET", "/api/samples/" + id + "/image.png");
  EXPECT_EQ(png.status, 200);
  EXPECT_EQ(png.content_type, "image/png");
  EXPECT_EQ(png.body.substr(1, 3), "PNG");
}

TEST(Service, HttpServerServesApiAndStaticFiles) {
  fixture::TempDir web("web");
  writeTextFile(web / "index.html", "<html>ui</html>");
  LayoutService::Options o;
  o.static_dir = web.path();
  const LayoutService svc(loadCheckpoint<float>(shared().ckpt), o);
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  const auto health = cli.Get("/api/health");
  const auto index = cli.Get("/index.html");
  const auto gen = cli.Post("/api/generate", R"({"steps": 2})", "application/json");
  server.stop();
  th.join();
  ASSERT_TRUE(health && index && gen);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["model_loaded"], true);
  EXPECT_EQ(index->status, 200);
  EXPECT_EQ(index->body, "<html>ui</html>");
  EXPECT_EQ(gen->status, 200);
}

TEST(Render, EmptyLayoutLeavesImage) {
  std::mt19937_64 rng(1);
  Raster img(20, 30, 3);
  for (auto& v : img.data) v = std::uniform_real_distribution<float>(0, 1)(rng);
  Layout l;
  l.canvas_w = 20;
  l.canvas_h = 30;
  EXPECT_EQ(renderLayout(l, img).data, img.data);
}

TEST(Render, TextDrawnOverUnderlay) {
  const Raster img(40, 40, 3, 1.f);
  Layout l;
  l.canvas_w = l.canvas_h = 40;
  const BBox b{0.5, 0.5, 0.5, 0.5};
  l.elements = {{b, ElementClass::Text, 1}, {b, ElementClass::Underlay, 1}};
  const Raster out = renderLayout(l, img);
  const auto text = classColor(ElementClass::Text);
  // Outline pixel: the last drawn element owns it completely.
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.at(10, 20, c), text[static_cast<std::size_t>(c)], 1.0 / 255);
  std::swap(l.elements[0], l.elements[1]);
  EXPECT_EQ(renderLayout(l, img).data, out.data);
}

TEST(Pipeline, GreedyMatch) {
  const BBox a{0.2, 0.2, 0.2, 0.2}, b{0.7, 0.7, 0.2, 0.2};
  auto r = greedyMatch({b, a}, {a, b});
  EXPECT_DOUBLE_EQ(r.mean_iou, 1.0);
  EXPECT_EQ(r.pairs.size(), 2u);
  r = greedyMatch({a}, {a, b});
  EXPECT_DOUBLE_EQ(r.mean_iou, 0.5);
  EXPECT_DOUBLE_EQ(greedyMatch({}, {}).mean_iou, 1.0);
  EXPECT_DOUBLE_EQ(greedyMatch({a}, {}).mean_iou, 0.0);
}

TEST(Pipeline, ParseVariant) {
  EXPECT_EQ(parseVariant("full"), (AblationFlags{true, true}));
  EXPECT_EQ(parseVariant("no-gram"), (AblationFlags{true, false}));
  EXPECT_EQ(parseVariant("no-vtram"), (AblationFlags{false, true}));
  EXPECT_THROW(parseVariant("half"), std::invalid_argument);
  for (const char* v : {"full", "no-gram", "no-vtram", "no-vtram-no-gram"}) EXPECT_EQ(variantName(parseVariant(v)), v);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(runCli("generate --bogus-flag"), 2);
  EXPECT_EQ(runCli(""), 2);
  EXPECT_EQ(runCli("--help"), 0);
}

TEST(Cli, GenerateIsReproducible) {
  fixture::TempDir out("cli_gen");
  const std::string base = "generate --checkpoint '" + shared().ckpt.string() + "' --data '" + shared().data.string() +
                           "' --sample-id " + shared().samples[1].id + " --steps 4 --seed 3";
  ASSERT_EQ(runCli(base + " --out '" + (out / "a.json").string() + "'"), 0);
  ASSERT_EQ(runCli(base + " --out '" + (out / "b.json").string() + "' --render '" + (out / "r.png").string() + "'"), 0);
  EXPECT_EQ(readTextFile(out / "a.json"), readTextFile(out / "b.json"));
  EXPECT_NO_THROW(layoutFromJson(json::parse(readTextFile(out / "a.json"))));
  EXPECT_EQ(readPng(out / "r.png", 3).width, shared().samples[1].image.width);
}

TEST(Cli, SlogansFileAndMissingCheckpoint) {
  fixture::TempDir out("cli_slogans");
  writeTextFile(out / "s.txt", "fresh coffee\nopen late\n");
  writePng(Raster(48, 75, 3, 0.3f), out / "bg.png");
  EXPECT_EQ(runCli("generate --checkpoint '" + shared().ckpt.string() + "' --image '" + (out / "bg.png").string() +
                   "' --slogans-file '" + (out / "s.txt").string() + "' --steps 3"),
            0);
  EXPECT_NE(runCli("generate --checkpoint /no/such.ckpt --image '" + (out / "bg.png").string() + "'"), 0);
}

TEST(Cli, EvalGroundTruth) {
  fixture::TempDir out("cli_eval");
  ASSERT_EQ(runCli("eval --ground-truth --data '" + shared().data.string() + "'", out / "r.json"), 0);
  const auto j = json::parse(readTextFile(out / "r.json"));
  EXPECT_EQ(j["layouts"], 3);
  EXPECT_EQ(j["r_occ"], 1.0);
  if (j["with_underlay"].get<int>() > 0) EXPECT_NEAR(j["r_und"].get<double>(), 1.0, 1e-9);
  EXPECT_EQ(j["r_ove"], 0.0);
  EXPECT_NE(runCli("eval --data '" + shared().data.string() + "'"), 0);
}

TEST(Cli, SynthMatchesLibrary) {
  fixture::TempDir out("cli_synth");
  ASSERT_EQ(runCli("synth --out '" + out.path().string() + "' --count 3 --seed 21 --canvas-w 48 --canvas-h 75"), 0);
  const auto back = loadDataset(out.path());
  ASSERT_EQ(back.size(), shared().samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].gt, shared().samples[i].gt);
}
