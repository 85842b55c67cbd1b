#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "amplify/commands.hpp"

namespace amplify {

// Exit codes: 0 success, 1 usage or runtime error, 2 failed --check assertion.
inline int cli_main(int argc, char** argv) {
  CLI::App app{"amplify: latent motion tokens, forward latent dynamics, and inverse dynamics "
               "on a deterministic 2D manipulation benchmark"};
  app.require_subcommand(1);

  struct Common {
    std::string config_file;
    u64 seed = 0;
    std::string out;
    std::vector<std::string> sets;
    std::string data, tokenizer, forward, inverse, family, runs, recipe;
    bool check = false;
  };

  auto add_common = [](CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_file, "flat key = value config file");
    cmd->add_option("--seed", c.seed, "64-bit run seed")->required();
    cmd->add_option("--out", c.out, "output run directory")->required();
    cmd->add_option("--set", c.sets, "override: --set key=value")->take_all();
  };

  std::map<std::string, Common> opts;
  auto* gen = app.add_subcommand("gen-data", "generate a dataset with split tags");
  add_common(gen, opts["gen-data"]);

  auto* tok = app.add_subcommand("train-tokenizer", "train the motion tokenizer on V");
  add_common(tok, opts["train-tokenizer"]);
  tok->add_option("--data", opts["train-tokenizer"].data, "dataset dir (comma-separated to merge)")
      ->required();

  auto* fwd = app.add_subcommand("train-forward", "train the forward dynamics model on V");
  add_common(fwd, opts["train-forward"]);
  fwd->add_option("--data", opts["train-forward"].data, "dataset dir")->required();
  fwd->add_option("--tokenizer", opts["train-forward"].tokenizer, "tokenizer checkpoint")
      ->required();

  auto* inv = app.add_subcommand("train-inverse", "train the inverse dynamics model on R");
  add_common(inv, opts["train-inverse"]);
  inv->add_option("--data", opts["train-inverse"].data, "dataset dir")->required();
  inv->add_option("--tokenizer", opts["train-inverse"].tokenizer, "tokenizer checkpoint")
      ->required();

  auto* ft = app.add_subcommand("finetune-inverse",
                                "fine-tune the inverse model on forward-model predictions");
  add_common(ft, opts["finetune-inverse"]);
  ft->add_option("--data", opts["finetune-inverse"].data, "dataset dir")->required();
  ft->add_option("--forward", opts["finetune-inverse"].forward, "forward checkpoint")->required();
  ft->add_option("--inverse", opts["finetune-inverse"].inverse, "inverse checkpoint")->required();

  auto* evt = app.add_subcommand("eval-tracks", "track-prediction metrics on held-out frames");
  add_common(evt, opts["eval-tracks"]);
  evt->add_option("--data", opts["eval-tracks"].data, "dataset dir")->required();
  evt->add_option("--tokenizer", opts["eval-tracks"].tokenizer, "tokenizer checkpoint")
      ->required();
  evt->add_option("--forward", opts["eval-tracks"].forward, "forward checkpoint")->required();

  auto* evp = app.add_subcommand("eval-policy", "closed-loop success rates");
  add_common(evp, opts["eval-policy"]);
  evp->add_option("--forward", opts["eval-policy"].forward, "forward checkpoint")->required();
  evp->add_option("--inverse", opts["eval-policy"].inverse, "inverse checkpoint")->required();
  evp->add_option("--family", opts["eval-policy"].family, "restrict the task suite (A or B)");

  auto* exp = app.add_subcommand("run-experiment", "chained recipe mirroring the experiment matrix");
  add_common(exp, opts["run-experiment"]);
  exp->add_option("--recipe", opts["run-experiment"].recipe,
                  "in-distribution | few-shot | zero-shot | cross-embodiment")
      ->required();
  exp->add_flag("--check", opts["run-experiment"].check,
                "assert the recipe's headline comparisons (exit 2 on failure)");

  auto* plt = app.add_subcommand("plot", "render grouped bar charts from run outputs");
  add_common(plt, opts["plot"]);
  plt->add_option("--runs", opts["plot"].runs, "comma-separated run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    const Common& c = opts[name];

    commands::Context ctx;
    if (!c.config_file.empty()) ctx.cfg = ExperimentConfig::from_file(c.config_file);
    for (const auto& kv : c.sets) {
      const size_t eq = kv.find('=');
      AMPLIFY_CHECK(eq != std::string::npos, "--set expects key=value, got: ", kv);
      ctx.cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    ctx.cfg.validate();
    ctx.seed = c.seed;
    ctx.out = c.out;
    if (!c.data.empty()) ctx.paths["data"] = c.data;
    if (!c.tokenizer.empty()) ctx.paths["tokenizer"] = c.tokenizer;
    if (!c.forward.empty()) ctx.paths["forward"] = c.forward;
    if (!c.inverse.empty()) ctx.paths["inverse"] = c.inverse;
    if (!c.family.empty()) ctx.paths["family"] = c.family;
    if (!c.runs.empty()) ctx.paths["runs"] = c.runs;
    if (!c.recipe.empty()) ctx.paths["recipe"] = c.recipe;
    if (c.check) ctx.paths["check"] = "1";

    if (name == "gen-data") {
      commands::cmd_gen_data(ctx);
    } else if (name == "train-tokenizer") {
      commands::cmd_train_tokenizer(ctx);
    } else if (name == "train-forward") {
      commands::cmd_train_forward(ctx);
    } else if (name == "train-inverse") {
      commands::cmd_train_inverse(ctx);
    } else if (name == "finetune-inverse") {
      commands::cmd_finetune_inverse(ctx);
    } else if (name == "eval-tracks") {
      commands::cmd_eval_tracks(ctx);
    } else if (name == "eval-policy") {
      commands::cmd_eval_policy(ctx);
    } else if (name == "run-experiment") {
      return commands::cmd_run_experiment(ctx);
    } else if (name == "plot") {
      commands::cmd_plot(ctx);
    } else {
      fail("unknown command: ", name);
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace amplify
