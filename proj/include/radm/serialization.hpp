#pragma once

// JSON schemas for layouts, poster samples and dataset directories.
//
//   Layout:       {"canvas":[w,h],"elements":[{"cls":"text","box":[cx,cy,w,h],"score":s}]}
//   PosterSample: {"id","image_path","saliency_path","slogans":[...],"elements":[...]}
//   Dataset dir:  manifest.json (array of PosterSample records) + images/ + saliency/

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radm/core.hpp"
#include "radm/raster.hpp"

namespace radm {

using json = nlohmann::json;

inline json boxToJson(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

inline BBox boxFromJson(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be an array of 4 numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw std::invalid_argument("box must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json elementToJson(const Element& e) {
  return {{"cls", std::string(className(e.cls))}, {"box", boxToJson(e.box)}, {"score", e.score}};
}

inline Element elementFromJson(const json& j) {
  Element e;
  e.cls = parseClass(j.at("cls").get<std::string>());
  e.box = boxFromJson(j.at("box"));
  e.score = j.value("score", 1.0);
  return e;
}

inline json layoutToJson(const Layout& l) {
  json elems = json::array();
  for (const auto& e : l.elements) elems.push_back(elementToJson(e));
  return {{"canvas", json::array({l.canvas_w, l.canvas_h})}, {"elements", std::move(elems)}};
}

inline Layout layoutFromJson(const json& j) {
  Layout l;
  const auto& canvas = j.at("canvas");
  l.canvas_w = canvas.at(0).get<int>();
  l.canvas_h = canvas.at(1).get<int>();
  if (l.canvas_w <= 0 || l.canvas_h <= 0) throw std::invalid_argument("canvas dimensions must be positive");
  for (const auto& e : j.at("elements")) l.elements.push_back(elementFromJson(e));
  return l;
}

inline json sampleRecord(const PosterSample& s) {
  json elems = json::array();
  for (const auto& e : s.gt.elements) elems.push_back(elementToJson(e));
  return {{"id", s.id},
          {"image_path", s.image_path},
          {"saliency_path", s.saliency_path},
          {"canvas", json::array({s.gt.canvas_w, s.gt.canvas_h})},
          {"slogans", s.slogans},
          {"elements", std::move(elems)}};
}

inline std::string readTextFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void writeTextFile(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

/// Writes manifest.json, images/<id>.png and saliency/<id>.png under `dir`.
inline void saveDataset(const std::vector<PosterSample>& samples, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "saliency");
  json manifest = json::array();
  for (auto s : samples) {
    s.image_path = "images/" + s.id + ".png";
    s.saliency_path = "saliency/" + s.id + ".png";
    writePng(s.image, dir / s.image_path);
    writePng(s.saliency, dir / s.saliency_path);
    manifest.push_back(sampleRecord(s));
  }
  writeTextFile(dir / "manifest.json", manifest.dump(1));
}

inline PosterSample sampleFromRecord(const json& rec, const std::filesystem::path& root) {
  PosterSample s;
  s.id = rec.at("id").get<std::string>();
  s.image_path = rec.at("image_path").get<std::string>();
  s.saliency_path = rec.value("saliency_path", std::string());
  s.slogans = rec.value("slogans", std::vector<std::string>{});
  s.image = readPng(root / s.image_path, 3);
  if (!s.saliency_path.empty() && std::filesystem::exists(root / s.saliency_path))
    s.saliency = readPng(root / s.saliency_path, 1);
  else
    s.saliency = Raster(s.image.width, s.image.height, 1, 0.0f);
  s.gt.canvas_w = s.image.width;
  s.gt.canvas_h = s.image.height;
  if (rec.contains("canvas")) {
    s.gt.canvas_w = rec["canvas"].at(0).get<int>();
    s.gt.canvas_h = rec["canvas"].at(1).get<int>();
  }
  for (const auto& e : rec.value("elements", json::array())) s.gt.elements.push_back(elementFromJson(e));
  return s;
}

inline std::vector<PosterSample> loadDataset(const std::filesystem::path& dir) {
  const json manifest = json::parse(readTextFile(dir / "manifest.json"));
  std::vector<PosterSample> out;
  for (const auto& rec : manifest) out.push_back(sampleFromRecord(rec, dir));
  return out;
}

}  // namespace radm
