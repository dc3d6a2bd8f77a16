#include "stepalign/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "stepalign/align.hpp"
#include "stepalign/checkpoint.hpp"
#include "stepalign/eval.hpp"
#include "stepalign/infer.hpp"
#include "stepalign/manifest.hpp"
#include "stepalign/parallel.hpp"
#include "stepalign/semb_io.hpp"
#include "stepalign/synth.hpp"
#include "stepalign/train.hpp"

namespace stepalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// Copies known keys from a JSON object into fields; unknown keys are errors
// so typos do not silently fall back to defaults.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw DataError(where_ + " must be a JSON object");
  }
  template <typename T>
  Fields& opt(const char* key, T& field) {
    seen_.push_back(key);
    if (j_.contains(key)) {
      try {
        field = j_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw DataError(where_ + ": bad value for '" + key + "': " + e.what());
      }
    }
    return *this;
  }
  void done() const {
    for (const auto& [key, _] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw DataError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

SynthConfig synth_config(const json& j) {
  SynthConfig c;
  Fields(j, "synth config")
      .opt("dim", c.dim)
      .opt("num_tasks", c.num_tasks)
      .opt("steps_per_task", c.steps_per_task)
      .opt("videos_per_task", c.videos_per_task)
      .opt("frames_range", c.frames_range)
      .opt("step_len_range", c.step_len_range)
      .opt("background_ratio", c.background_ratio)
      .opt("distractor_phrase_ratio", c.distractor_phrase_ratio)
      .opt("noise_sigma", c.noise_sigma)
      .opt("step_presence_prob", c.step_presence_prob)
      .opt("seed", c.seed)
      .opt("video_seed", c.video_seed)
      .opt("max_prototype_cosine", c.max_prototype_cosine)
      .opt("background_subspace_dim", c.background_subspace_dim)
      .opt("max_attempts", c.max_attempts)
      .done();
  return c;
}

struct TrainSettings {
  TrainConfig cfg;
  int checkpoint_every = 5;
};

TrainSettings train_settings(const json& j) {
  TrainSettings s;
  TrainConfig& c = s.cfg;
  json model = json::object(), contrastive = json::object(), terms = json::object();
  Fields(j, "train config")
      .opt("epochs", c.epochs)
      .opt("warmup_epochs", c.warmup_epochs)
      .opt("peak_lr", c.peak_lr)
      .opt("final_lr", c.final_lr)
      .opt("weight_decay", c.weight_decay)
      .opt("batch_size", c.batch_size)
      .opt("drop_percentile", c.drop_percentile)
      .opt("seed", c.seed)
      .opt("checkpoint_every", s.checkpoint_every)
      .opt("model", model)
      .opt("contrastive", contrastive)
      .opt("terms", terms)
      .done();
  Fields(model, "model config")
      .opt("dim", c.model.dim)
      .opt("num_slots", c.model.num_slots)
      .opt("num_layers", c.model.num_layers)
      .opt("num_heads", c.model.num_heads)
      .opt("ff_multiplier", c.model.ff_multiplier)
      .opt("dropout", c.model.dropout_rate)
      .done();
  auto& cc = c.contrastive;
  Fields(contrastive, "contrastive config")
      .opt("gamma_contrastive", cc.gamma_contrastive)
      .opt("gamma_attention", cc.gamma_attention)
      .opt("alpha", cc.alpha)
      .opt("beta", cc.beta)
      .opt("neighborhood", cc.neighborhood)
      .opt("sample_count", cc.sample_count)
      .done();
  Fields(terms, "terms")
      .opt("seq", c.terms.seq)
      .opt("glob", c.terms.glob)
      .opt("div", c.terms.div)
      .opt("smooth", c.terms.smooth)
      .done();
  if (s.checkpoint_every < 1) throw DataError("checkpoint_every must be >= 1");
  return s;
}

json segments_json(const SegmentLabeling& l) {
  json a = json::array();
  for (const auto& s : l.segments()) a.push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
  return a;
}

int cmd_gen_data(const std::string& config, const fs::path& out_dir, std::optional<std::uint64_t> seed,
                 std::ostream& out) {
  SynthConfig cfg = config.empty() ? SynthConfig{} : synth_config(read_json(config));
  if (seed) cfg.seed = *seed;
  const SynthDataset data = generate(cfg);
  const fs::path manifest = save_dataset(data.samples, out_dir);
  out << manifest.string() << '\n';
  return ok;
}

int cmd_train(const std::string& config, const fs::path& manifest, const fs::path& out_dir,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  TrainSettings s = config.empty() ? TrainSettings{} : train_settings(read_json(config));
  if (seed) s.cfg.seed = *seed;
  const auto dataset = load_manifest(manifest);
  fs::create_directories(out_dir);
  const TrainResult result = train(dataset, s.cfg, [&](int epoch, const ModelParams& params, std::int64_t step) {
    if (epoch % s.checkpoint_every != 0) return;
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.sckp", epoch);
    save_checkpoint({params, step, s.cfg.seed}, out_dir / name);
  });
  std::string log;
  for (const auto& e : result.log) log += to_json_line(e) + "\n";
  write_text(out_dir / "loss_log.jsonl", log);
  save_checkpoint({result.params, static_cast<std::int64_t>(result.log.size()), s.cfg.seed}, out_dir / "final.sckp");
  out << (out_dir / "final.sckp").string() << '\n';
  return ok;
}

int cmd_localize(const fs::path& ckpt_path, const fs::path& manifest, const fs::path& out_dir, double percentile,
                 std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto dataset = load_manifest(manifest);
  std::vector<std::optional<std::pair<Matrix, Localization>>> results(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const Matrix slots = forward(ckpt.params, dataset[i].video).data();
    results[i].emplace(slots, localize_steps(slots, dataset[i].video.data(), percentile));
  });
  fs::create_directories(out_dir);
  json videos = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& [slots, loc] = *results[i];
    const std::string slots_file = dataset[i].id + ".slots.semb";
    write_embedding_file(slots, SequenceKind::slots, out_dir / slots_file);
    videos.push_back({{"id", dataset[i].id},
                      {"task", dataset[i].task},
                      {"frame_labels", loc.labeling.frame_labels()},
                      {"segments", segments_json(loc.labeling)},
                      {"slots", slots_file}});
  }
  write_text(out_dir / "predictions.json",
             json{{"mode", "unsupervised"}, {"percentile", percentile}, {"videos", videos}}.dump(1) + "\n");
  out << (out_dir / "predictions.json").string() << '\n';
  return ok;
}

int cmd_zeroshot(const fs::path& ckpt_path, const fs::path& manifest, const fs::path& out_dir, double percentile,
                 std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto dataset = load_manifest(manifest);
  for (const auto& s : dataset)
    if (!s.gt_step_texts) throw DataError(s.id + ": zero-shot localization needs step_texts");
  std::vector<std::optional<ZeroShotLocalization>> results(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const Matrix slots = forward(ckpt.params, dataset[i].video).data();
    results[i] = zero_shot_localize(slots, dataset[i].gt_step_texts->data(), dataset[i].video.data(), percentile);
  });
  fs::create_directories(out_dir);
  json videos = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    videos.push_back({{"id", dataset[i].id},
                      {"task", dataset[i].task},
                      {"frame_labels", results[i]->labeling.frame_labels()},
                      {"segments", segments_json(results[i]->labeling)},
                      {"slot_for_step", results[i]->slot_for_step}});
  }
  write_text(out_dir / "predictions.json",
             json{{"mode", "zeroshot"}, {"percentile", percentile}, {"videos", videos}}.dump(1) + "\n");
  out << (out_dir / "predictions.json").string() << '\n';
  return ok;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& manifest, const fs::path& report_path,
             const std::string& protocol, bool pooled, std::uint64_t seed, const std::string& csv, std::ostream& out) {
  const auto dataset = load_manifest(manifest);
  std::map<std::string, const DatasetSample*> by_id;
  for (const auto& s : dataset) by_id[s.id] = &s;
  const json preds = read_json(pred_dir / "predictions.json");
  MetricsReport report;
  try {
    if (protocol == "unsupervised") {
      std::vector<VideoPrediction> videos;
      for (const auto& v : preds.at("videos")) {
        const auto it = by_id.find(v.at("id").get<std::string>());
        if (it == by_id.end()) throw DataError("prediction for unknown video " + v.at("id").get<std::string>());
        const auto labels = v.at("frame_labels").get<std::vector<int>>();
        const Matrix slots = read_embedding_file(pred_dir / v.at("slots").get<std::string>()).data();
        for (int l : labels)
          if (l != kBackground && (l < 0 || l >= slots.rows())) throw DataError(it->first + ": label has no slot row");
        videos.push_back({it->second->task, SegmentLabeling::from_runs(labels), slots, gt_frame_labels(*it->second)});
      }
      report = unsupervised_protocol(videos, {0.6, seed, pooled});
    } else if (protocol == "zeroshot") {
      std::vector<ZeroShotPrediction> videos;
      for (const auto& v : preds.at("videos")) {
        const auto it = by_id.find(v.at("id").get<std::string>());
        if (it == by_id.end()) throw DataError("prediction for unknown video " + v.at("id").get<std::string>());
        std::vector<int> step_ids;
        for (const auto& seg : it->second->gt_segments) step_ids.push_back(seg.label);
        videos.push_back({it->second->task, v.at("frame_labels").get<std::vector<int>>(), step_ids,
                          gt_frame_labels(*it->second)});
      }
      report = zero_shot_protocol(videos, pooled);
    } else {
      throw CLI::ValidationError("--protocol", "must be unsupervised or zeroshot");
    }
  } catch (const json::exception& e) {
    throw DataError("malformed predictions in " + pred_dir.string() + ": " + e.what());
  } catch (const InvariantError& e) {
    throw DataError(std::string("predictions do not fit the dataset: ") + e.what());
  }
  write_text(report_path, report_json(report, protocol));
  if (!csv.empty()) write_text(csv, report_csv(report));
  out << report_path.string() << '\n';
  return ok;
}

int cmd_align(const fs::path& rows_path, const fs::path& cols_path, const std::string& mode_name, double percentile,
              const fs::path& out_path, std::ostream& out) {
  const MatchMode mode = match_mode_from_string(mode_name);
  if (mode == MatchMode::many_to_many) throw CLI::ValidationError("--mode", "must be one_to_one or many_to_one");
  const auto rows = read_embedding_file(rows_path);
  const auto cols = read_embedding_file(cols_path);
  if (rows.dim() != cols.dim()) throw DataError("row and column files have different dims");
  const CostSpec spec = percentile_cost_spec(match_cost_matrix(rows, cols), percentile);
  const Correspondence c = drop_dtw(spec, mode);
  json pairs = json::array();
  for (const auto& [i, j] : c.matched_pairs()) pairs.push_back({i, j});
  const json j = {{"mode", std::string(to_string(mode))},
                  {"drop_cost", *spec.row_drop_cost},
                  {"pairs", pairs},
                  {"dropped_rows", c.dropped_rows()},
                  {"dropped_cols", c.dropped_cols()},
                  {"total_cost", c.total_cost()}};
  write_text(out_path, j.dump(2) + "\n");
  out << out_path.string() << '\n';
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Step discovery and localization on embedding sequences", "stepalign"};
  app.require_subcommand(1);

  std::string config, data, out_dir, ckpt, pred, protocol = "unsupervised", csv, rows, cols, mode = "one_to_one";
  std::optional<std::uint64_t> seed;
  std::uint64_t eval_seed = 0;
  double percentile = kDefaultDropPercentile;
  bool pooled = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config, "Synth config JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the prototype seed");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config, "Train config JSON");
  tr->add_option("--data", data, "Dataset manifest")->required();
  tr->add_option("--out", out_dir, "Output directory")->required();
  tr->add_option("--seed", seed, "Override the training seed");

  auto* loc = app.add_subcommand("localize", "Unsupervised step localization");
  loc->add_option("--ckpt", ckpt, "Checkpoint")->required();
  loc->add_option("--data", data, "Dataset manifest")->required();
  loc->add_option("--out", out_dir, "Output directory")->required();
  loc->add_option("--percentile", percentile, "Drop-cost percentile")->check(CLI::Range(0.0, 1.0));

  auto* zs = app.add_subcommand("zeroshot", "Zero-shot localization of given step texts");
  zs->add_option("--ckpt", ckpt, "Checkpoint")->required();
  zs->add_option("--data", data, "Dataset manifest")->required();
  zs->add_option("--out", out_dir, "Output directory")->required();
  zs->add_option("--percentile", percentile, "Drop-cost percentile")->check(CLI::Range(0.0, 1.0));

  auto* ev = app.add_subcommand("eval", "Score predictions");
  ev->add_option("--pred", pred, "Prediction directory")->required();
  ev->add_option("--data", data, "Dataset manifest")->required();
  ev->add_option("--out", out_dir, "Report JSON path")->required();
  ev->add_option("--protocol", protocol, "unsupervised or zeroshot")
      ->check(CLI::IsMember({"unsupervised", "zeroshot"}));
  ev->add_flag("--pooled", pooled, "Pool frames across tasks");
  ev->add_option("--seed", eval_seed, "Clustering seed");
  ev->add_option("--csv", csv, "Also write per-task CSV");

  auto* al = app.add_subcommand("align", "Drop-DTW alignment of two SEMB files");
  al->add_option("--rows", rows, "Row sequence")->required();
  al->add_option("--cols", cols, "Column sequence")->required();
  al->add_option("--mode", mode, "one_to_one or many_to_one")->check(CLI::IsMember({"one_to_one", "many_to_one"}));
  al->add_option("--percentile", percentile, "Drop-cost percentile")->check(CLI::Range(0.0, 1.0));
  al->add_option("--out", out_dir, "Output JSON path")->required();

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(std::move(rest));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return usage;
  }

  try {
    if (*gen) return cmd_gen_data(config, out_dir, seed, out);
    if (*tr) return cmd_train(config, data, out_dir, seed, out);
    if (*loc) return cmd_localize(ckpt, data, out_dir, percentile, out);
    if (*zs) return cmd_zeroshot(ckpt, data, out_dir, percentile, out);
    if (*ev) return cmd_eval(pred, data, out_dir, protocol, pooled, eval_seed, csv, out);
    if (*al) return cmd_align(rows, cols, mode, percentile, out_dir, out);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return ExitCode::data;
  } catch (const InvariantError& e) {
    err << "invalid argument: " << e.what() << '\n';
    return usage;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return ExitCode::data;
  }
  return usage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace stepalign::cli
