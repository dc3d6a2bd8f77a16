#include "stepalign/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "stepalign/semb_io.hpp"

namespace stepalign {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<DatasetSample> load_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  std::vector<DatasetSample> samples;
  try {
    for (const auto& js : doc.at("samples")) {
      auto video = read_embedding_file(base / js.at("video").get<std::string>());
      auto phrases = read_embedding_file(base / js.at("phrases").get<std::string>());
      DatasetSample s{js.at("id").get<std::string>(), js.value("task", std::string("default")),
                      std::move(video), std::move(phrases), {}, std::nullopt, std::nullopt};
      if (js.contains("gt_segments"))
        for (const auto& g : js["gt_segments"])
          s.gt_segments.push_back({g.at("step").get<int>(), g.at("start").get<int>(), g.at("end").get<int>()});
      if (js.contains("step_texts"))
        s.gt_step_texts = read_embedding_file(base / js["step_texts"].get<std::string>());
      if (js.contains("phrase_relevance")) s.phrase_relevance = js["phrase_relevance"].get<std::vector<bool>>();
      s.validate();
      samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return samples;
}

fs::path save_dataset(const std::vector<DatasetSample>& samples, const fs::path& dir,
                      const std::string& manifest_name) {
  fs::create_directories(dir);
  json list = json::array();
  for (const auto& s : samples) {
    json js;
    js["id"] = s.id;
    js["task"] = s.task;
    const std::string video = s.id + ".video.semb";
    const std::string phrases = s.id + ".phrases.semb";
    write_embedding_file(s.video, dir / video);
    write_embedding_file(s.phrases, dir / phrases);
    js["video"] = video;
    js["phrases"] = phrases;
    if (s.gt_step_texts) {
      const std::string steps = s.id + ".steps.semb";
      write_embedding_file(*s.gt_step_texts, dir / steps);
      js["step_texts"] = steps;
    }
    json segs = json::array();
    for (const auto& g : s.gt_segments) segs.push_back({{"step", g.label}, {"start", g.start}, {"end", g.end}});
    js["gt_segments"] = segs;
    if (s.phrase_relevance) js["phrase_relevance"] = *s.phrase_relevance;
    list.push_back(std::move(js));
  }
  const fs::path out_path = dir / manifest_name;
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write " + out_path.string());
  out << json{{"version", 1}, {"samples", list}}.dump(1) << '\n';
  return out_path;
}

}  // namespace stepalign
