#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <string>

#include "amplify/checkpoint.hpp"
#include "amplify/config.hpp"
#include "amplify/dataset.hpp"
#include "amplify/eval_tracks.hpp"
#include "amplify/plot.hpp"
#include "amplify/policy.hpp"
#include "amplify/trainers.hpp"

namespace amplify::commands {

struct Context {
  ExperimentConfig cfg;
  u64 seed = 0;
  fs::path out;
  std::map<std::string, std::string> paths;  // data, tokenizer, forward, inverse, recipe, runs

  std::string path(const std::string& key) const {
    auto it = paths.find(key);
    AMPLIFY_CHECK(it != paths.end() && !it->second.empty(),
                  "missing required artifact path --", key);
    return it->second;
  }
  bool has_path(const std::string& key) const {
    auto it = paths.find(key);
    return it != paths.end() && !it->second.empty();
  }
};

// ---------------------------------------------------------------------------
// Run-directory discipline: refuse to touch a completed run, dump the
// resolved config on entry, and mark completion with a marker file. Nothing
// written here carries wall-clock state, so identical (config, seed) runs
// are byte-identical.

inline void begin_run(const Context& ctx, const std::string& command) {
  AMPLIFY_CHECK(!fs::exists(ctx.out / "run.json"),
                "run directory already completed (immutable): ", ctx.out.string());
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  AMPLIFY_CHECK(fs::is_directory(ctx.out), "cannot create run directory: ", ctx.out.string());
  write_file_text(ctx.out / "config.txt", ctx.cfg.canonical_dump());
  (void)command;
}

inline void finish_run(const Context& ctx, const std::string& command, Json artifacts) {
  Json marker;
  marker["command"] = command;
  marker["config_hash"] = ctx.cfg.hash();
  marker["seed"] = ctx.seed;
  marker["artifacts"] = std::move(artifacts);
  marker["status"] = "complete";
  write_file_text(ctx.out / "run.json", marker.dump(2) + "\n");
}

// Architecture signature: the config keys that must agree between chained
// stages, extracted from the canonical dump.
inline std::string arch_signature(const ExperimentConfig& cfg) {
  static const std::vector<std::string> kKeys = {
      "env.resolution", "env.n_side", "env.horizon", "env.tasks_family_a", "env.tasks_family_b",
      "fsq.levels", "tok.d", "tok.hidden", "tok.layers", "tok.heads", "tok.local_window",
      "tok.mask_mode", "tok.loss_mode", "fwd.hidden", "fwd.layers", "fwd.heads",
      "fwd.vision_side", "fwd.vision_channels", "inv.hidden", "inv.layers", "inv.heads",
      "inv.gamma"};
  std::string out;
  const std::string dump = cfg.canonical_dump();
  size_t pos = 0;
  while (pos < dump.size()) {
    size_t eol = dump.find('\n', pos);
    if (eol == std::string::npos) eol = dump.size();
    const std::string line = dump.substr(pos, eol - pos);
    pos = eol + 1;
    for (const auto& key : kKeys) {
      if (line.rfind(key + " ", 0) == 0) {
        out += line;
        out += "\n";
        break;
      }
    }
  }
  return out;
}

inline void check_arch_match(const ExperimentConfig& a, const ckpt::Header& h,
                             const std::string& what) {
  ExperimentConfig b;
  b.apply_text(h.config_text);
  AMPLIFY_CHECK(arch_signature(a) == arch_signature(b),
                "config mismatch between chained stages: current config disagrees with the ",
                what, " checkpoint's architecture");
}

inline void check_dataset_match(const ExperimentConfig& cfg, const Dataset& ds) {
  AMPLIFY_CHECK(ds.resolution == static_cast<int>(cfg.get_int("env.resolution")) &&
                    ds.n_side == static_cast<int>(cfg.get_int("env.n_side")) &&
                    ds.horizon == static_cast<int>(cfg.get_int("env.horizon")),
                "dataset geometry disagrees with the current config");
}

// ---------------------------------------------------------------------------
// Checkpoint loading wrappers.

struct LoadedTokenizer {
  ExperimentConfig cfg;
  ckpt::Header header;
  std::unique_ptr<MotionTokenizer<float>> model;
};

inline LoadedTokenizer load_tokenizer(const fs::path& path) {
  LoadedTokenizer out;
  const auto h = ckpt::peek(path);
  AMPLIFY_CHECK(h.kind == "tokenizer", path.string(), " is not a tokenizer checkpoint");
  out.cfg.apply_text(h.config_text);
  out.model = std::make_unique<MotionTokenizer<float>>(TokenizerConfig::from(out.cfg), h.seed);
  out.header = ckpt::load(path, out.model->params());
  return out;
}

struct LoadedForward {
  ExperimentConfig cfg;
  ckpt::Header header;
  std::unique_ptr<ForwardModel<float>> model;
};

inline LoadedForward load_forward(const fs::path& path) {
  LoadedForward out;
  const auto h = ckpt::peek(path);
  AMPLIFY_CHECK(h.kind == "forward", path.string(), " is not a forward-dynamics checkpoint");
  out.cfg.apply_text(h.config_text);
  out.model = std::make_unique<ForwardModel<float>>(ForwardConfig::from(out.cfg), h.seed);
  out.header = ckpt::load(path, out.model->params());
  return out;
}

struct LoadedInverse {
  ExperimentConfig cfg;
  ckpt::Header header;
  std::unique_ptr<InverseModel<float>> model;
};

inline LoadedInverse load_inverse(const fs::path& path) {
  LoadedInverse out;
  const auto h = ckpt::peek(path);
  AMPLIFY_CHECK(h.kind == "inverse", path.string(), " is not an inverse-dynamics checkpoint");
  out.cfg.apply_text(h.config_text);
  out.model = std::make_unique<InverseModel<float>>(InverseConfig::from(out.cfg), h.seed);
  out.header = ckpt::load(path, out.model->params());
  return out;
}

// Accepts a comma-separated list of dataset directories; merged loading is
// how a second embodiment's video-only episodes join the training pool.
inline Dataset load_data(const std::string& paths, bool with_observations = true) {
  std::vector<std::string> dirs;
  size_t pos = 0;
  while (pos <= paths.size()) {
    size_t comma = paths.find(',', pos);
    if (comma == std::string::npos) comma = paths.size();
    const std::string item = paths.substr(pos, comma - pos);
    if (!item.empty()) dirs.push_back(item);
    pos = comma + 1;
  }
  AMPLIFY_CHECK(!dirs.empty(), "no dataset directory given");
  Dataset ds = Dataset::load(dirs[0], with_observations);
  for (size_t i = 1; i < dirs.size(); ++i) {
    ds = Dataset::merge(std::move(ds), Dataset::load(dirs[i], with_observations));
  }
  return ds;
}

inline void write_losses_csv(const fs::path& path, const TrainLog& log) {
  std::string csv = "step,loss\n";
  char buf[64];
  for (size_t i = 0; i < log.losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i, log.losses[i]);
    csv += buf;
  }
  write_file_text(path, csv);
}

// ---------------------------------------------------------------------------
// Commands. Each returns the artifacts it produced.

inline Json cmd_gen_data(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "gen-data");
  generate_dataset(ctx.cfg, ctx.seed, ctx.out);
  const Dataset ds = Dataset::load(ctx.out, false);
  Json artifacts;
  artifacts["manifest"] = "manifest.json";
  artifacts["manifest_hash"] = ds.manifest_hash();
  artifacts["episodes"] = ds.episodes.size();
  finish_run(ctx, "gen-data", artifacts);
  return artifacts;
}

inline Json cmd_train_tokenizer(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "train-tokenizer");
  Dataset ds = load_data(ctx.path("data"), false);
  check_dataset_match(ctx.cfg, ds);
  MotionTokenizer<float> tok(TokenizerConfig::from(ctx.cfg), ctx.seed);
  const TrainLog log = train_tokenizer(tok, ds, ctx.cfg, ctx.seed);
  write_losses_csv(ctx.out / "losses.csv", log);

  ckpt::Header h;
  h.kind = "tokenizer";
  h.seed = ctx.seed;
  h.config_text = ctx.cfg.canonical_dump();
  h.config_hash = ctx.cfg.hash();
  h.upstream["dataset"] = ds.manifest_hash();
  h.extra["fsq_levels"] = tok.config().fsq.levels;
  h.extra["fsq_eps"] = FsqConfig::kEps;
  h.extra["squash"] = "tanh(x) * (L - 1) * (1 + eps) / 2, digit = round(g + (L - 1) / 2)";
  const std::string hash = ckpt::save(ctx.out / "tokenizer.ckpt", h, tok.params());

  Json artifacts;
  artifacts["checkpoint"] = "tokenizer.ckpt";
  artifacts["content_hash"] = hash;
  artifacts["final_loss"] = log.last_block_mean;
  finish_run(ctx, "train-tokenizer", artifacts);
  return artifacts;
}

inline Json cmd_train_forward(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "train-forward");
  Dataset ds = load_data(ctx.path("data"));
  check_dataset_match(ctx.cfg, ds);
  auto tok = load_tokenizer(ctx.path("tokenizer"));
  check_arch_match(ctx.cfg, tok.header, "tokenizer");
  AMPLIFY_CHECK(ctx.cfg.codebook_size() == tok.model->config().fsq.codebook_size(),
                "vocabulary mismatch with the tokenizer checkpoint");

  ForwardModel<float> fwd(ForwardConfig::from(ctx.cfg), ctx.seed);
  const TrainLog log = train_forward(fwd, *tok.model, ds, ctx.cfg, ctx.seed);
  write_losses_csv(ctx.out / "losses.csv", log);

  ckpt::Header h;
  h.kind = "forward";
  h.seed = ctx.seed;
  h.config_text = ctx.cfg.canonical_dump();
  h.config_hash = ctx.cfg.hash();
  h.upstream["tokenizer"] = tok.header.content_hash;
  h.upstream["dataset"] = ds.manifest_hash();
  const std::string hash = ckpt::save(ctx.out / "forward.ckpt", h, fwd.params());

  Json artifacts;
  artifacts["checkpoint"] = "forward.ckpt";
  artifacts["content_hash"] = hash;
  artifacts["final_loss"] = log.last_block_mean;
  finish_run(ctx, "train-forward", artifacts);
  return artifacts;
}

inline Json cmd_train_inverse(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "train-inverse");
  Dataset ds = load_data(ctx.path("data"));
  check_dataset_match(ctx.cfg, ds);
  auto tok = load_tokenizer(ctx.path("tokenizer"));
  check_arch_match(ctx.cfg, tok.header, "tokenizer");

  InverseModel<float> inv(InverseConfig::from(ctx.cfg), ctx.seed);
  const TrainLog log = train_inverse(inv, *tok.model, ds, ctx.cfg, ctx.seed);
  write_losses_csv(ctx.out / "losses.csv", log);

  ckpt::Header h;
  h.kind = "inverse";
  h.seed = ctx.seed;
  h.config_text = ctx.cfg.canonical_dump();
  h.config_hash = ctx.cfg.hash();
  h.upstream["tokenizer"] = tok.header.content_hash;
  h.upstream["dataset"] = ds.manifest_hash();
  const std::string hash = ckpt::save(ctx.out / "inverse.ckpt", h, inv.params());

  Json artifacts;
  artifacts["checkpoint"] = "inverse.ckpt";
  artifacts["content_hash"] = hash;
  artifacts["final_loss"] = log.last_block_mean;
  finish_run(ctx, "train-inverse", artifacts);
  return artifacts;
}

// Continues inverse training with codes predicted by the frozen forward
// model. No tokenizer is constructed here at all: the ground-truth encoder
// cannot run in this phase by construction.
inline Json cmd_finetune_inverse(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "finetune-inverse");
  Dataset ds = load_data(ctx.path("data"));
  check_dataset_match(ctx.cfg, ds);
  auto fwd = load_forward(ctx.path("forward"));
  auto inv = load_inverse(ctx.path("inverse"));
  check_arch_match(ctx.cfg, fwd.header, "forward");
  check_arch_match(ctx.cfg, inv.header, "inverse");
  AMPLIFY_CHECK(fwd.header.upstream.at("tokenizer") == inv.header.upstream.at("tokenizer"),
                "checkpoint hash mismatch: forward and inverse were trained against different "
                "tokenizers");

  const TrainLog log = finetune_inverse(*inv.model, *fwd.model, ds, ctx.cfg, ctx.seed);
  write_losses_csv(ctx.out / "losses.csv", log);

  ckpt::Header h;
  h.kind = "inverse";
  h.seed = ctx.seed;
  h.config_text = ctx.cfg.canonical_dump();
  h.config_hash = ctx.cfg.hash();
  h.upstream["tokenizer"] = inv.header.upstream.at("tokenizer");
  h.upstream["forward"] = fwd.header.content_hash;
  h.upstream["base_inverse"] = inv.header.content_hash;
  h.upstream["dataset"] = ds.manifest_hash();
  const std::string hash = ckpt::save(ctx.out / "inverse_finetuned.ckpt", h, inv.model->params());

  Json artifacts;
  artifacts["checkpoint"] = "inverse_finetuned.ckpt";
  artifacts["content_hash"] = hash;
  artifacts["final_loss"] = log.last_block_mean;
  finish_run(ctx, "finetune-inverse", artifacts);
  return artifacts;
}

inline Json cmd_eval_tracks(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "eval-tracks");
  Dataset ds = load_data(ctx.path("data"));
  check_dataset_match(ctx.cfg, ds);
  auto tok = load_tokenizer(ctx.path("tokenizer"));
  auto fwd = load_forward(ctx.path("forward"));
  AMPLIFY_CHECK(fwd.header.upstream.at("tokenizer") == tok.header.content_hash,
                "provenance chain broken: the forward checkpoint was trained against a "
                "different tokenizer");

  const i64 stride = ctx.cfg.get_int("eval.frame_stride");
  const TrackEvalReport report =
      eval_tracks(*fwd.model, *tok.model, ds, FramePool::Member::kHoldout, stride);

  // Decoding ground-truth codes through the same decoder should bound the
  // forward path from above once both stages are trained; surfaced per run.
  const bool ordering_ok = report.tokenizer_path.delta_auc + 1e-6 >= report.forward.delta_auc;
  if (!ordering_ok) {
    std::fprintf(stderr,
                 "warning: forward-path delta AUC (%.4f) exceeds the tokenizer path (%.4f); "
                 "expected only for undertrained stages\n",
                 report.forward.delta_auc, report.tokenizer_path.delta_auc);
  }

  std::string csv = "method,mse,pixel_accuracy,delta_auc,frames,token_accuracy,distinct_codes\n";
  char buf[256];
  auto row = [&](const char* name, const TrackEvalResult& r, double token_acc, i64 codes) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%lld,%.6f,%lld\n", name, r.mse,
                  r.pixel_accuracy, r.delta_auc, static_cast<long long>(r.frames_evaluated),
                  token_acc, static_cast<long long>(codes));
    csv += buf;
  };
  row("forward", report.forward, report.token_accuracy, report.distinct_codes);
  row("tokenizer", report.tokenizer_path, 1.0, 0);
  row("zero_motion", report.zero_motion, 0.0, 0);
  write_file_text(ctx.out / "metrics.csv", csv);

  Json artifacts;
  artifacts["metrics"] = "metrics.csv";
  artifacts["forward_delta_auc"] = report.forward.delta_auc;
  artifacts["forward_pixel_accuracy"] = report.forward.pixel_accuracy;
  artifacts["forward_mse"] = report.forward.mse;
  artifacts["tokenizer_delta_auc"] = report.tokenizer_path.delta_auc;
  artifacts["zero_motion_pixel_accuracy"] = report.zero_motion.pixel_accuracy;
  artifacts["token_accuracy"] = report.token_accuracy;
  artifacts["distinct_codes"] = report.distinct_codes;
  artifacts["ordering_ok"] = ordering_ok;
  finish_run(ctx, "eval-tracks", artifacts);
  return artifacts;
}

// Writes per-variant success tables plus serialized rollout reports.
inline Json cmd_eval_policy(const Context& ctx) {
  ctx.cfg.validate();
  begin_run(ctx, "eval-policy");
  auto fwd = load_forward(ctx.path("forward"));
  auto inv = load_inverse(ctx.path("inverse"));
  AMPLIFY_CHECK(fwd.header.upstream.at("tokenizer") == inv.header.upstream.at("tokenizer"),
                "provenance chain broken: forward and inverse disagree on the tokenizer");

  const EnvConfig env = ctx.cfg.env_config();
  auto tasks = make_task_catalog(env, static_cast<int>(ctx.cfg.get_int("env.tasks_family_a")),
                                 static_cast<int>(ctx.cfg.get_int("env.tasks_family_b")));
  if (ctx.has_path("family")) {
    const char fam = ctx.paths.at("family")[0];
    std::erase_if(tasks, [&](const Task& t) { return t.family != fam; });
    AMPLIFY_CHECK(!tasks.empty(), "no tasks in family ", ctx.paths.at("family"));
  }

  EvalOptions opt;
  opt.seeds = ctx.cfg.get_int("eval.seeds");
  opt.episodes_per_task = ctx.cfg.get_int("eval.episodes_per_task");
  opt.budget = ctx.cfg.get_int("policy.budget");
  opt.threads = static_cast<int>(ctx.cfg.get_int("eval.threads"));
  opt.base_seed = ctx.seed;

  const double gamma = ctx.cfg.get_real("inv.gamma");
  std::vector<std::pair<std::string, bool>> variants;
  if (ctx.cfg.get_bool("policy.without_tracks")) {
    variants = {{"no_tracks", true}};
  } else {
    variants = {{"full", false}, {"no_tracks", true}};
  }

  std::string csv = "variant,task_id,family,successes,episodes,success_rate\n";
  char buf[256];
  Json artifacts;
  Json rollout_manifest = Json::array();
  for (const auto& [name, without_tracks] : variants) {
    const bool wt = without_tracks;
    const auto result = evaluate_policy(
        [&, wt] {
          return std::make_unique<ModelPolicy>(fwd.model.get(), inv.model.get(), gamma, wt);
        },
        tasks, env, opt);
    for (const auto& r : result.table.rows) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%c,%lld,%lld,%.4f\n", name.c_str(), r.task_id,
                    r.family, static_cast<long long>(r.successes),
                    static_cast<long long>(r.episodes), r.rate());
      csv += buf;
    }
    std::snprintf(buf, sizeof(buf), "%s,aggregate,-,%lld,%lld,%.4f\n", name.c_str(),
                  static_cast<long long>(result.table.successes),
                  static_cast<long long>(result.table.episodes), result.table.rate());
    csv += buf;
    artifacts[name + "_success_rate"] = result.table.rate();

    // Rollout reports in the dataset binary format: manifest + raw arrays.
    for (size_t i = 0; i < result.reports.size(); ++i) {
      const auto& r = result.reports[i];
      Tensor<float> log({static_cast<i64>(r.action_log.size()), 3});
      for (size_t t = 0; t < r.action_log.size(); ++t) {
        for (int a = 0; a < 3; ++a) log.at({static_cast<i64>(t), a}) = r.action_log[t][static_cast<size_t>(a)];
      }
      std::snprintf(buf, sizeof(buf), "rollout_%s_%04zu.bin", name.c_str(), i);
      write_array(ctx.out / buf, log);
      rollout_manifest.push_back(Json{{"variant", name},
                                      {"task_id", r.task_id},
                                      {"seed", r.seed},
                                      {"success", r.success},
                                      {"steps_used", r.steps_used},
                                      {"actions", {{"path", buf},
                                                   {"dtype", "f32"},
                                                   {"shape", log.shape}}}});
    }
  }
  write_file_text(ctx.out / "success.csv", csv);
  write_file_text(ctx.out / "rollouts.json", rollout_manifest.dump(2) + "\n");

  artifacts["success_table"] = "success.csv";
  artifacts["rollouts"] = "rollouts.json";
  finish_run(ctx, "eval-policy", artifacts);
  return artifacts;
}

// ---------------------------------------------------------------------------
// Experiment recipes: chained stages under one root, each stage in its own
// immutable run directory with derived seeds. Check mode turns the recipe's
// headline comparisons into hard assertions (exit code 2 on failure).

namespace detail {

inline Context stage_ctx(const Context& root, const std::string& name, u64 salt,
                         ExperimentConfig cfg, std::map<std::string, std::string> paths) {
  Context s;
  s.cfg = std::move(cfg);
  s.seed = mix_seed(root.seed, salt);
  s.out = root.out / name;
  s.paths = std::move(paths);
  return s;
}

inline double read_success(const Json& artifacts, const std::string& key) {
  AMPLIFY_CHECK(artifacts.contains(key), "missing artifact field: ", key);
  return artifacts[key].get<double>();
}

struct CheckList {
  std::vector<std::pair<std::string, bool>> results;
  bool all_ok = true;

  void check(const std::string& name, bool ok) {
    results.emplace_back(name, ok);
    all_ok = all_ok && ok;
    std::fprintf(stderr, "[check] %s: %s\n", name.c_str(), ok ? "pass" : "FAIL");
  }

  std::string csv() const {
    std::string out = "check,result\n";
    for (const auto& [name, ok] : results) out += name + "," + (ok ? "pass" : "fail") + "\n";
    return out;
  }
};

}  // namespace detail

inline int cmd_run_experiment(const Context& ctx) {
  ctx.cfg.validate();
  const std::string recipe = ctx.paths.count("recipe") ? ctx.paths.at("recipe") : "";
  AMPLIFY_CHECK(recipe == "in-distribution" || recipe == "few-shot" || recipe == "zero-shot" ||
                    recipe == "cross-embodiment",
                "unknown recipe: '", recipe,
                "' (expected in-distribution|few-shot|zero-shot|cross-embodiment)");
  const bool check_mode = ctx.paths.count("check") && ctx.paths.at("check") == "1";
  begin_run(ctx, "run-experiment");
  detail::CheckList checks;
  using detail::stage_ctx;

  if (recipe == "cross-embodiment") {
    AMPLIFY_CHECK(ctx.cfg.get_bool("exp.cross_embodiment"),
                  "the cross-embodiment recipe is disabled by default; set "
                  "exp.cross_embodiment=true to run this directional analog");
  }

  // Shared early stages: dataset, tokenizer, forward.
  ExperimentConfig data_cfg = ctx.cfg;
  data_cfg.set("data.split", recipe == "zero-shot" ? "zeroshot" : "in_distribution");
  const Context data = stage_ctx(ctx, "data", 0xD0, data_cfg, {});
  cmd_gen_data(data);

  std::string train_data = data.out.string();
  if (recipe == "cross-embodiment") {
    ExperimentConfig b_cfg = ctx.cfg;
    b_cfg.set("env.embodiment", "b");
    b_cfg.set("data.split", "video_only");
    const Context data_b = stage_ctx(ctx, "data_b", 0xD1, b_cfg, {});
    cmd_gen_data(data_b);
    train_data += "," + data_b.out.string();
  }

  const Context tok = stage_ctx(ctx, "tokenizer", 0x70, ctx.cfg, {{"data", train_data}});
  cmd_train_tokenizer(tok);
  const std::string tok_path = (tok.out / "tokenizer.ckpt").string();

  const Context fwd = stage_ctx(ctx, "forward", 0xF0, ctx.cfg,
                                {{"data", train_data}, {"tokenizer", tok_path}});
  cmd_train_forward(fwd);
  const std::string fwd_path = (fwd.out / "forward.ckpt").string();

  const Context tracks = stage_ctx(ctx, "eval_tracks", 0xE0, ctx.cfg,
                                   {{"data", train_data},
                                    {"tokenizer", tok_path},
                                    {"forward", fwd_path}});
  const Json track_art = cmd_eval_tracks(tracks);

  std::string summary = "stage,key,value\n";
  char buf[256];
  auto add_summary = [&](const std::string& stage, const std::string& key, double v) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f\n", stage.c_str(), key.c_str(), v);
    summary += buf;
  };
  add_summary("eval_tracks", "forward_delta_auc", track_art["forward_delta_auc"].get<double>());
  add_summary("eval_tracks", "forward_pixel_accuracy",
              track_art["forward_pixel_accuracy"].get<double>());
  add_summary("eval_tracks", "zero_motion_pixel_accuracy",
              track_art["zero_motion_pixel_accuracy"].get<double>());

  if (recipe == "in-distribution" || recipe == "cross-embodiment") {
    ExperimentConfig inv_cfg = ctx.cfg;
    const Context inv = stage_ctx(ctx, "inverse", 0x10, inv_cfg,
                                  {{"data", train_data}, {"tokenizer", tok_path}});
    cmd_train_inverse(inv);
    const Context ft = stage_ctx(ctx, "finetune", 0x11, inv_cfg,
                                 {{"data", train_data},
                                  {"forward", fwd_path},
                                  {"inverse", (inv.out / "inverse.ckpt").string()}});
    cmd_finetune_inverse(ft);
    const Context ev = stage_ctx(ctx, "eval_policy", 0x12, ctx.cfg,
                                 {{"forward", fwd_path},
                                  {"inverse", (ft.out / "inverse_finetuned.ckpt").string()}});
    const Json ev_art = cmd_eval_policy(ev);
    add_summary("eval_policy", "full_success_rate", detail::read_success(ev_art, "full_success_rate"));
    add_summary("eval_policy", "no_tracks_success_rate",
                detail::read_success(ev_art, "no_tracks_success_rate"));
    if (check_mode) {
      checks.check("forward_delta_auc >= 0.90",
                   track_art["forward_delta_auc"].get<double>() >= 0.90);
      checks.check("pixel_accuracy >= 2x zero-motion baseline",
                   track_art["forward_pixel_accuracy"].get<double>() >=
                       2.0 * track_art["zero_motion_pixel_accuracy"].get<double>());
    }
  } else if (recipe == "few-shot") {
    const auto sizes = ctx.cfg.get_int_list("exp.fewshot_sizes");
    AMPLIFY_CHECK(!sizes.empty(), "exp.fewshot_sizes must not be empty");
    std::map<int, std::pair<double, double>> rates;  // k -> (full, no_tracks)
    double base_rate_kmin = -1.0, tuned_rate_kmin = -1.0;
    const int k_min = *std::min_element(sizes.begin(), sizes.end());
    for (const int k : sizes) {
      ExperimentConfig inv_cfg = ctx.cfg;
      inv_cfg.set("inv.fewshot_k", strcat_all(k));
      const std::string tag = strcat_all("k", k);
      const Context inv = stage_ctx(ctx, "inverse_" + tag, 0x20 + static_cast<u64>(k), inv_cfg,
                                    {{"data", train_data}, {"tokenizer", tok_path}});
      cmd_train_inverse(inv);
      const Context ft = stage_ctx(ctx, "finetune_" + tag, 0x40 + static_cast<u64>(k), inv_cfg,
                                   {{"data", train_data},
                                    {"forward", fwd_path},
                                    {"inverse", (inv.out / "inverse.ckpt").string()}});
      cmd_finetune_inverse(ft);
      if (k == k_min) {
        // Paired evaluation of the pre-finetune checkpoint on the same seeds.
        const Context evb = stage_ctx(ctx, "eval_policy_base_" + tag, 0x60, ctx.cfg,
                                      {{"forward", fwd_path},
                                       {"inverse", (inv.out / "inverse.ckpt").string()}});
        base_rate_kmin = detail::read_success(cmd_eval_policy(evb), "full_success_rate");
      }
      const Context ev = stage_ctx(ctx, "eval_policy_" + tag, 0x60 + static_cast<u64>(k), ctx.cfg,
                                   {{"forward", fwd_path},
                                    {"inverse", (ft.out / "inverse_finetuned.ckpt").string()}});
      const Json ev_art = cmd_eval_policy(ev);
      rates[k] = {detail::read_success(ev_art, "full_success_rate"),
                  detail::read_success(ev_art, "no_tracks_success_rate")};
      if (k == k_min) tuned_rate_kmin = rates[k].first;
      add_summary(strcat_all("fewshot_", tag), "full_success_rate", rates[k].first);
      add_summary(strcat_all("fewshot_", tag), "no_tracks_success_rate", rates[k].second);
    }
    add_summary("fewshot_base_k_min", "full_success_rate", base_rate_kmin);
    if (check_mode) {
      checks.check("full(k_min) - inverse_only(k_min) >= 0.20",
                   rates[k_min].first - rates[k_min].second >= 0.20);
      checks.check("finetune does not regress (paired seeds)",
                   tuned_rate_kmin >= base_rate_kmin);
    }
  } else {  // zero-shot
    const Context inv = stage_ctx(ctx, "inverse", 0x30, ctx.cfg,
                                  {{"data", train_data}, {"tokenizer", tok_path}});
    cmd_train_inverse(inv);
    const Context ft = stage_ctx(ctx, "finetune", 0x31, ctx.cfg,
                                 {{"data", train_data},
                                  {"forward", fwd_path},
                                  {"inverse", (inv.out / "inverse.ckpt").string()}});
    cmd_finetune_inverse(ft);
    const Context ev = stage_ctx(ctx, "eval_policy_family_b", 0x32, ctx.cfg,
                                 {{"forward", fwd_path},
                                  {"inverse", (ft.out / "inverse_finetuned.ckpt").string()},
                                  {"family", "B"}});
    const Json ev_art = cmd_eval_policy(ev);
    const double full = detail::read_success(ev_art, "full_success_rate");
    const double ablated = detail::read_success(ev_art, "no_tracks_success_rate");
    add_summary("zeroshot_family_b", "full_success_rate", full);
    add_summary("zeroshot_family_b", "no_tracks_success_rate", ablated);
    if (check_mode) {
      checks.check("family-B success >= 0.40", full >= 0.40);
      checks.check("family-B no-track ablation <= 0.10", ablated <= 0.10);
    }
  }

  write_file_text(ctx.out / "summary.csv", summary);
  if (check_mode) write_file_text(ctx.out / "checks.csv", checks.csv());

  Json artifacts;
  artifacts["summary"] = "summary.csv";
  artifacts["recipe"] = recipe;
  finish_run(ctx, "run-experiment", artifacts);
  return check_mode && !checks.all_ok ? 2 : 0;
}

// ---------------------------------------------------------------------------
// Plot: grouped bar charts from experiment summaries or eval tables.

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  const std::string text = read_file_text(path);
  std::vector<std::vector<std::string>> rows;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t c = 0;
    while (c <= line.size()) {
      size_t comma = line.find(',', c);
      if (comma == std::string::npos) comma = line.size();
      cells.push_back(line.substr(c, comma - c));
      c = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

inline Json cmd_plot(const Context& ctx) {
  AMPLIFY_CHECK(ctx.has_path("runs"), "plot needs --runs <dir,dir,...>");
  std::vector<fs::path> runs;
  const std::string list = ctx.paths.at("runs");
  size_t pos = 0;
  while (pos <= list.size()) {
    size_t comma = list.find(',', pos);
    if (comma == std::string::npos) comma = list.size();
    const std::string item = list.substr(pos, comma - pos);
    if (!item.empty()) runs.emplace_back(item);
    pos = comma + 1;
  }
  AMPLIFY_CHECK(!runs.empty(), "plot needs at least one run directory");
  begin_run(ctx, "plot");

  BarChart chart;
  if (runs.size() == 1 && fs::exists(runs[0] / "summary.csv")) {
    // Experiment summary: group by stage prefix, one bar per metric series.
    const auto rows = detail::read_csv(runs[0] / "summary.csv");
    AMPLIFY_CHECK(rows.size() > 1, "summary.csv has no data rows");
    std::map<std::string, std::map<std::string, double>> by_stage;
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 3 || rows[i][1].find("success_rate") == std::string::npos) continue;
      by_stage[rows[i][0]][rows[i][1]] = std::stod(rows[i][2]);
    }
    AMPLIFY_CHECK(!by_stage.empty(), "no success-rate rows found in summary.csv");
    std::vector<std::string> series;
    for (const auto& [stage, metrics] : by_stage) {
      for (const auto& [name, v] : metrics) {
        if (std::find(series.begin(), series.end(), name) == series.end()) series.push_back(name);
      }
    }
    chart.title = "EXPERIMENT SUMMARY";
    chart.series = series;
    for (const auto& [stage, metrics] : by_stage) {
      chart.groups.push_back(stage);
      std::vector<double> vals;
      for (const auto& name : series) {
        auto it = metrics.find(name);
        vals.push_back(it == metrics.end() ? 0.0 : it->second);
      }
      chart.values.push_back(vals);
    }
  } else {
    // One group per run directory with a success.csv; series are variants.
    chart.title = "POLICY SUCCESS";
    std::vector<std::string> series;
    std::vector<std::map<std::string, double>> per_run;
    for (const auto& run : runs) {
      AMPLIFY_CHECK(fs::exists(run / "success.csv"), "missing metrics file: ",
                    (run / "success.csv").string());
      const auto rows = detail::read_csv(run / "success.csv");
      std::map<std::string, double> agg;
      for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() >= 6 && rows[i][1] == "aggregate") {
          agg[rows[i][0]] = std::stod(rows[i][5]);
          if (std::find(series.begin(), series.end(), rows[i][0]) == series.end()) {
            series.push_back(rows[i][0]);
          }
        }
      }
      AMPLIFY_CHECK(!agg.empty(), "no aggregate rows in ", (run / "success.csv").string());
      per_run.push_back(std::move(agg));
      chart.groups.push_back(run.filename().string());
    }
    chart.series = series;
    for (const auto& agg : per_run) {
      std::vector<double> vals;
      for (const auto& name : series) {
        auto it = agg.find(name);
        vals.push_back(it == agg.end() ? 0.0 : it->second);
      }
      chart.values.push_back(vals);
    }
  }

  write_png(ctx.out / "figure.png", render_bar_chart(chart));
  Json artifacts;
  artifacts["figure"] = "figure.png";
  finish_run(ctx, "plot", artifacts);
  return artifacts;
}

}  // namespace amplify::commands
