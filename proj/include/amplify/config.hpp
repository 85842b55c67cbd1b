#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/env.hpp"
#include "amplify/fsq.hpp"
#include "amplify/hash.hpp"
#include "amplify/io.hpp"

namespace amplify {

// Flat experiment configuration. Every tunable lives here under a dotted key;
// unknown keys are rejected and every run dumps its fully-resolved table, so
// ablation grids stay diffable.
class ExperimentConfig {
 public:
  enum class Type { kInt, kReal, kBool, kString, kIntList };

  struct Entry {
    Type type;
    std::string value;
  };

  ExperimentConfig() : entries_(default_entries()) {}

  static const std::map<std::string, Entry>& default_entries() {
    static const std::map<std::string, Entry> kDefaults = {
        // Environment and track preprocessing.
        {"env.resolution", {Type::kInt, "64"}},
        {"env.n_side", {Type::kInt, "8"}},
        {"env.horizon", {Type::kInt, "6"}},
        {"env.max_speed", {Type::kReal, "2.0"}},
        {"env.marker_half", {Type::kReal, "8.0"}},
        {"env.object_extent", {Type::kReal, "9.0"}},
        {"env.distractors", {Type::kInt, "3"}},
        {"env.distractor_half", {Type::kReal, "18.0"}},
        {"env.orbit_radius", {Type::kReal, "15.0"}},
        {"env.orbit_omega", {Type::kReal, "0.12"}},
        {"env.tasks_family_a", {Type::kInt, "12"}},
        {"env.tasks_family_b", {Type::kInt, "8"}},
        {"env.max_episode_steps", {Type::kInt, "200"}},
        {"env.idle_tail", {Type::kInt, "4"}},
        {"env.embodiment", {Type::kString, "a"}},
        // Dataset generation and splits.
        {"data.episodes_per_task", {Type::kInt, "25"}},
        {"data.split", {Type::kString, "in_distribution"}},
        {"data.fewshot_k", {Type::kInt, "2"}},
        {"data.holdout_per_task", {Type::kInt, "3"}},
        // Quantizer.
        {"fsq.levels", {Type::kIntList, "8,8,8,4"}},
        // Motion tokenizer.
        {"tok.d", {Type::kInt, "16"}},
        {"tok.hidden", {Type::kInt, "128"}},
        {"tok.layers", {Type::kInt, "2"}},
        {"tok.heads", {Type::kInt, "8"}},
        {"tok.local_window", {Type::kInt, "15"}},
        {"tok.mask_mode", {Type::kString, "causal"}},
        {"tok.loss_mode", {Type::kString, "window_classification"}},
        {"tok.views", {Type::kInt, "1"}},
        {"tok.dropout", {Type::kReal, "0.0"}},
        {"tok.lr", {Type::kReal, "1e-4"}},
        {"tok.lr_schedule", {Type::kString, "constant"}},
        {"tok.batch", {Type::kInt, "16"}},
        {"tok.steps", {Type::kInt, "3000"}},
        {"tok.weight_decay", {Type::kReal, "0.0"}},
        // Forward dynamics.
        {"fwd.hidden", {Type::kInt, "128"}},
        {"fwd.layers", {Type::kInt, "4"}},
        {"fwd.heads", {Type::kInt, "8"}},
        {"fwd.vision_side", {Type::kInt, "7"}},
        {"fwd.vision_channels", {Type::kIntList, "16,32,64"}},
        {"fwd.frozen_vision", {Type::kBool, "false"}},
        {"fwd.decode_mode", {Type::kString, "greedy"}},
        {"fwd.temperature", {Type::kReal, "1.0"}},
        {"fwd.dropout", {Type::kReal, "0.0"}},
        {"fwd.lr", {Type::kReal, "1e-4"}},
        {"fwd.lr_schedule", {Type::kString, "constant"}},
        {"fwd.batch", {Type::kInt, "16"}},
        {"fwd.steps", {Type::kInt, "3000"}},
        {"fwd.weight_decay", {Type::kReal, "0.0"}},
        // Inverse dynamics.
        {"inv.hidden", {Type::kInt, "128"}},
        {"inv.layers", {Type::kInt, "4"}},
        {"inv.heads", {Type::kInt, "8"}},
        {"inv.gamma", {Type::kReal, "0.99"}},
        {"inv.head", {Type::kString, "gaussian"}},
        {"inv.dropout", {Type::kReal, "0.0"}},
        {"inv.lr", {Type::kReal, "1e-4"}},
        {"inv.lr_schedule", {Type::kString, "constant"}},
        {"inv.batch", {Type::kInt, "16"}},
        {"inv.steps", {Type::kInt, "2500"}},
        {"inv.weight_decay", {Type::kReal, "0.0"}},
        {"inv.fewshot_k", {Type::kInt, "0"}},
        {"inv.finetune_steps", {Type::kInt, "600"}},
        {"inv.finetune_lr_scale", {Type::kReal, "0.1"}},
        // Closed-loop policy and evaluation.
        {"policy.budget", {Type::kInt, "200"}},
        {"policy.without_tracks", {Type::kBool, "false"}},
        {"eval.seeds", {Type::kInt, "10"}},
        {"eval.episodes_per_task", {Type::kInt, "1"}},
        {"eval.frame_stride", {Type::kInt, "2"}},
        {"eval.threads", {Type::kInt, "2"}},
        // Experiment recipes.
        {"exp.fewshot_sizes", {Type::kIntList, "2,5,10"}},
        {"exp.cross_embodiment", {Type::kBool, "false"}},
    };
    return kDefaults;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    AMPLIFY_CHECK(it != entries_.end(), "unknown config key: ", key);
    it->second.value = trim(value);
    check_parses(key, it->second);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  i64 get_int(const std::string& key) const {
    return parse_int(find(key, Type::kInt).value, key);
  }
  double get_real(const std::string& key) const {
    return parse_real(find(key, Type::kReal).value, key);
  }
  bool get_bool(const std::string& key) const {
    const std::string& v = find(key, Type::kBool).value;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("config key ", key, " expects bool, got: ", v);
  }
  std::string get_string(const std::string& key) const { return find(key, Type::kString).value; }
  std::vector<int> get_int_list(const std::string& key) const {
    const std::string& v = find(key, Type::kIntList).value;
    std::vector<int> out;
    size_t pos = 0;
    while (pos <= v.size()) {
      size_t comma = v.find(',', pos);
      if (comma == std::string::npos) comma = v.size();
      out.push_back(static_cast<int>(parse_int(v.substr(pos, comma - pos), key)));
      pos = comma + 1;
    }
    return out;
  }

  // Canonical text form: sorted "key = value" lines. Hash input and dump format.
  std::string canonical_dump() const {
    std::string out;
    for (const auto& [k, e] : entries_) {
      out += k;
      out += " = ";
      out += e.value;
      out += "\n";
    }
    return out;
  }

  std::string hash() const { return sha256_hex(canonical_dump()); }
  std::string short_hash() const { return hash().substr(0, 10); }

  // Parses "key = value" lines; '#' starts a comment.
  void apply_text(const std::string& text) {
    size_t pos = 0;
    int lineno = 0;
    while (pos < text.size()) {
      size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++lineno;
      const size_t hash_pos = line.find('#');
      if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      AMPLIFY_CHECK(eq != std::string::npos, "config line ", lineno, " missing '=': ", line);
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  static ExperimentConfig from_file(const fs::path& path) {
    ExperimentConfig cfg;
    cfg.apply_text(read_file_text(path));
    cfg.validate();
    return cfg;
  }

  void validate() const {
    EnvConfig env = env_config();
    env.validate();
    AMPLIFY_CHECK(get_int("env.n_side") >= 2, "env.n_side must be >= 2");
    AMPLIFY_CHECK(get_int("env.horizon") >= 2, "env.horizon must be >= 2");
    check_window_size(static_cast<int>(get_int("tok.local_window")));
    fsq_config().validate();
    const double gamma = get_real("inv.gamma");
    AMPLIFY_CHECK(gamma >= 0.0 && gamma <= 1.0, "inv.gamma must be in [0, 1]");
    const std::string mask = get_string("tok.mask_mode");
    AMPLIFY_CHECK(mask == "per_timestep" || mask == "causal" || mask == "full",
                  "tok.mask_mode must be per_timestep|causal|full, got ", mask);
    const std::string loss = get_string("tok.loss_mode");
    AMPLIFY_CHECK(loss == "window_classification" || loss == "mse",
                  "tok.loss_mode must be window_classification|mse, got ", loss);
    const std::string decode = get_string("fwd.decode_mode");
    AMPLIFY_CHECK(decode == "greedy" || decode == "sample",
                  "fwd.decode_mode must be greedy|sample, got ", decode);
    const std::string split = get_string("data.split");
    AMPLIFY_CHECK(split == "in_distribution" || split == "fewshot" || split == "zeroshot" ||
                      split == "video_only",
                  "data.split must be in_distribution|fewshot|zeroshot|video_only, got ", split);
    for (const char* k : {"tok.lr_schedule", "fwd.lr_schedule", "inv.lr_schedule"}) {
      const std::string sched = get_string(k);
      AMPLIFY_CHECK(sched == "constant" || sched == "cosine", k,
                    " must be constant|cosine, got ", sched);
    }
    const std::string head = get_string("inv.head");
    AMPLIFY_CHECK(head == "gaussian",
                  "inv.head: only the gaussian head is implemented (diffusion and "
                  "flow_matching are reserved names), got ",
                  head);
    const std::string emb = get_string("env.embodiment");
    AMPLIFY_CHECK(emb == "a" || emb == "b", "env.embodiment must be a|b, got ", emb);
    AMPLIFY_CHECK(get_int("tok.views") == 1, "only single-view scenes are generated; "
                  "multi-view tokenization is exposed by the encoder API");
    for (const char* k : {"tok", "fwd", "inv"}) {
      const i64 hidden = get_int(std::string(k) + ".hidden");
      const i64 heads = get_int(std::string(k) + ".heads");
      AMPLIFY_CHECK(hidden % heads == 0, k, ".hidden must divide by heads");
    }
  }

  EnvConfig env_config() const {
    EnvConfig e;
    e.resolution = static_cast<int>(get_int("env.resolution"));
    e.max_speed = static_cast<float>(get_real("env.max_speed")) *
                  static_cast<float>(e.resolution) / 64.0f;
    e.marker_half = static_cast<float>(get_real("env.marker_half"));
    e.object_extent = static_cast<float>(get_real("env.object_extent"));
    e.distractors = static_cast<int>(get_int("env.distractors"));
    e.distractor_half = static_cast<float>(get_real("env.distractor_half"));
    e.orbit_radius = static_cast<float>(get_real("env.orbit_radius"));
    e.orbit_omega = static_cast<float>(get_real("env.orbit_omega"));
    e.max_episode_steps = static_cast<int>(get_int("env.max_episode_steps"));
    if (get_string("env.embodiment") == "b") {
      // Alternate embodiment: faster, smaller end effector, video-only data.
      e.marker_half = 4.0f;
      e.max_speed *= 1.5f;
    }
    return e;
  }

  FsqConfig fsq_config() const {
    FsqConfig f;
    f.levels = get_int_list("fsq.levels");
    return f;
  }

  i64 codebook_size() const { return fsq_config().codebook_size(); }
  i64 num_tasks() const { return get_int("env.tasks_family_a") + get_int("env.tasks_family_b"); }
  i64 num_points() const { return get_int("env.n_side") * get_int("env.n_side"); }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  static i64 parse_int(const std::string& s, const std::string& key) {
    i64 v = 0;
    const std::string t = s;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    AMPLIFY_CHECK(ec == std::errc() && p == t.data() + t.size(), "config key ", key,
                  " expects integer, got: ", s);
    return v;
  }

  static double parse_real(const std::string& s, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    AMPLIFY_CHECK(end == s.c_str() + s.size() && !s.empty(), "config key ", key,
                  " expects real, got: ", s);
    return v;
  }

  const Entry& find(const std::string& key, Type t) const {
    auto it = entries_.find(key);
    AMPLIFY_CHECK(it != entries_.end(), "unknown config key: ", key);
    AMPLIFY_CHECK(it->second.type == t, "config key ", key, " accessed with wrong type");
    return it->second;
  }
  void check_parses(const std::string& key, const Entry& e) const {
    switch (e.type) {
      case Type::kInt:
        parse_int(e.value, key);
        break;
      case Type::kReal:
        parse_real(e.value, key);
        break;
      case Type::kBool:
        get_bool(key);
        break;
      case Type::kString:
        break;
      case Type::kIntList:
        get_int_list(key);
        break;
    }
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace amplify
