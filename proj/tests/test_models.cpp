#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "amplify/checkpoint.hpp"
#include "amplify/forward_model.hpp"
#include "amplify/inverse_model.hpp"
#include "amplify/tokenizer.hpp"

using namespace amplify;

namespace {

ExperimentConfig tiny_cfg() {
  ExperimentConfig cfg;
  cfg.set("env.n_side", "4");
  cfg.set("env.horizon", "4");
  cfg.set("env.tasks_family_a", "2");
  cfg.set("env.tasks_family_b", "1");
  cfg.set("fsq.levels", "4,4");
  cfg.set("tok.d", "4");
  cfg.set("tok.hidden", "32");
  cfg.set("tok.layers", "1");
  cfg.set("tok.heads", "2");
  cfg.set("fwd.hidden", "32");
  cfg.set("fwd.layers", "2");
  cfg.set("fwd.heads", "2");
  cfg.set("fwd.vision_channels", "4,8,8");
  cfg.set("inv.hidden", "32");
  cfg.set("inv.layers", "1");
  cfg.set("inv.heads", "2");
  return cfg;
}

VelocityField<float> random_field(u64 seed, i64 steps, i64 n) {
  Rng rng(seed);
  VelocityField<float> u{Tensor<float>({steps, n, 2})};
  for (auto& v : u.velocities.data) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  return u;
}

Tensor<u8> random_image(u64 seed, int res) {
  Rng rng(seed);
  Tensor<u8> img({res, res, 3});
  for (auto& v : img.data) v = static_cast<u8>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("tokenizer: shape contracts and the quantization bottleneck") {
  const auto cfg = tiny_cfg();
  MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 7);
  const auto u = random_field(1, 3, 16);

  auto seq = tok.encode(u);
  REQUIRE(static_cast<int>(seq.indices.size()) == 4);
  REQUIRE(seq.codes.size() == 4);
  for (i64 idx : seq.indices) {
    CHECK(idx >= 0);
    CHECK(idx < 16);
  }
  for (int k = 0; k < 4; ++k) {
    CHECK(code_to_index(seq.codes[static_cast<size_t>(k)], tok.config().fsq) ==
          seq.indices[static_cast<size_t>(k)]);
  }

  const auto logits = tok.decode_logits(seq.indices);
  REQUIRE(logits.shape == std::vector<i64>({16, 3 * 225}));
  const auto logits2 = tok.decode_logits(seq.indices);
  CHECK(logits.data == logits2.data);

  const auto recon = tok.reconstruct(u);
  REQUIRE(recon.velocities.shape == u.velocities.shape);
  for (float v : recon.velocities.data) {
    CHECK(v >= -7.0f);
    CHECK(v <= 7.0f);
  }

  // The training path sees exactly the level centers.
  Graph<float> g;
  auto p = tok.params().bind(g, false);
  auto enc = tok.build_encode(g, p, {g.constant(tok.pack_velocities({&u}))});
  for (size_t r = 0; r < enc.codes.size(); ++r) {
    const auto centers = fsq_centers<float>(tok.config().fsq, enc.codes[r]);
    for (int i = 0; i < 2; ++i) {
      CHECK(g.val(enc.quantized).data[r * 2 + static_cast<size_t>(i)] ==
            centers[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("tokenizer: mask semantics") {
  auto cfg = tiny_cfg();

  SECTION("causal: future-step perturbation leaves earlier latents unchanged") {
    cfg.set("tok.mask_mode", "causal");
    MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 11);
    auto u = random_field(2, 3, 16);
    auto u2 = u;
    for (i64 pnt = 0; pnt < 16; ++pnt) {
      u2.velocities.at({2, pnt, 0}) += 1.0f;
      u2.velocities.at({2, pnt, 1}) -= 2.0f;
    }
    const auto a = tok.encode(u), b = tok.encode(u2);
    for (int i = 0; i < tok.config().d; ++i) {
      if (tok.pool_step(i) < 2) {
        for (int c = 0; c < 2; ++c) {
          CHECK(a.continuous.at({i, c}) == b.continuous.at({i, c}));
        }
      }
    }
    CHECK(a.continuous.data != b.continuous.data);
  }

  SECTION("per-timestep: permuting future steps leaves earlier codes unchanged") {
    cfg.set("tok.mask_mode", "per_timestep");
    MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 11);
    auto u = random_field(3, 3, 16);
    auto u2 = u;
    for (i64 pnt = 0; pnt < 16; ++pnt) {
      for (i64 c = 0; c < 2; ++c) {
        std::swap(u2.velocities.at({1, pnt, c}), u2.velocities.at({2, pnt, c}));
      }
    }
    const auto a = tok.encode(u), b = tok.encode(u2);
    for (int i = 0; i < tok.config().d; ++i) {
      if (tok.pool_step(i) < 1) {
        for (int c = 0; c < 2; ++c) CHECK(a.continuous.at({i, c}) == b.continuous.at({i, c}));
      }
    }
  }

  SECTION("full: attends everywhere, so early latents may move") {
    cfg.set("tok.mask_mode", "full");
    MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 11);
    auto u = random_field(4, 3, 16);
    auto u2 = u;
    for (i64 pnt = 0; pnt < 16; ++pnt) u2.velocities.at({2, pnt, 0}) += 2.0f;
    const auto a = tok.encode(u), b = tok.encode(u2);
    CHECK(a.continuous.data != b.continuous.data);
  }
}

TEST_CASE("tokenizer: mse loss mode shares the pipeline") {
  auto cfg = tiny_cfg();
  cfg.set("tok.loss_mode", "mse");
  MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 5);
  const auto u = random_field(6, 3, 16);
  Graph<float> g;
  auto p = tok.params().bind(g, true);
  const int loss = tok.build_loss(g, p, {&u});
  CHECK(std::isfinite(g.val(loss).data[0]));
  g.backward(loss);
  bool any = false;
  for (i64 i = 0; i < tok.params().count(); ++i) any = any || g.has_grad(p[static_cast<size_t>(i)]);
  CHECK(any);
}

TEST_CASE("forward model: block-causal structure") {
  const auto cfg = tiny_cfg();
  ForwardModel<float> fwd(ForwardConfig::from(cfg), 13);
  const auto obs = random_image(21, 64);

  Graph<float> g;
  auto p = fwd.params().bind(g, false);
  std::vector<std::vector<i64>> teacher{{1, 2, 3, 4}};
  const int logits =
      fwd.build_logits(g, p, g.constant(frames_to_batch<float>({&obs})), {0}, teacher);
  REQUIRE(g.val(logits).shape == std::vector<i64>({1, 4, 16}));

  // Future-token perturbations never change position-k logits (bit-exact).
  for (int k = 0; k < 3; ++k) {
    std::vector<i64> prefix(teacher[0].begin(), teacher[0].begin() + k);
    const auto row = fwd.predict_logits(obs, 0, prefix);
    std::vector<std::vector<i64>> teacher2{{9, 8, 7, 6}};
    for (int i = 0; i < k; ++i) teacher2[0][static_cast<size_t>(i)] = teacher[0][static_cast<size_t>(i)];
    Graph<float> g2;
    auto p2 = fwd.params().bind(g2, false);
    const int l2 =
        fwd.build_logits(g2, p2, g2.constant(frames_to_batch<float>({&obs})), {0}, teacher2);
    for (i64 j = 0; j < 16; ++j) {
      CHECK(row.data[static_cast<size_t>(j)] == g2.val(l2).data[static_cast<size_t>(k * 16 + j)]);
    }
  }

  // The goal token reaches position 0.
  const auto row_g0 = fwd.predict_logits(obs, 0, {});
  const auto row_g1 = fwd.predict_logits(obs, 1, {});
  CHECK(row_g0.data != row_g1.data);

  CHECK_THROWS(fwd.predict_logits(obs, 0, {0, 1, 2, 3}));  // prefix too long
  CHECK_THROWS(fwd.rollout_tokens(obs, 99));               // unknown task id
}

TEST_CASE("forward model: kv-cache rollout matches the tape path") {
  const auto cfg = tiny_cfg();
  ForwardModel<float> fwd(ForwardConfig::from(cfg), 17);
  const auto obs = random_image(33, 64);

  const auto rollout = fwd.rollout_tokens(obs, 1);
  REQUIRE(static_cast<int>(rollout.indices.size()) == 4);

  std::vector<i64> prefix;
  for (int k = 0; k < 4; ++k) {
    const auto row = fwd.predict_logits(obs, 1, prefix);
    i64 best = 0;
    for (i64 j = 1; j < 16; ++j) {
      if (row.data[static_cast<size_t>(j)] > row.data[static_cast<size_t>(best)]) best = j;
    }
    CHECK(best == rollout.indices[static_cast<size_t>(k)]);
    prefix.push_back(best);
  }

  const auto again = fwd.rollout_tokens(obs, 1);
  CHECK(again.indices == rollout.indices);
  Rng sampler(5);
  const auto cold = fwd.rollout_tokens(obs, 1, false, 1e-12, &sampler);
  CHECK(cold.indices == rollout.indices);

  Rng s1(42), s2(42);
  const auto a = fwd.rollout_tokens(obs, 1, false, 1.5, &s1);
  const auto b = fwd.rollout_tokens(obs, 1, false, 1.5, &s2);
  CHECK(a.indices == b.indices);
}

TEST_CASE("forward model: training loss builds and backpropagates") {
  const auto cfg = tiny_cfg();
  ForwardModel<float> fwd(ForwardConfig::from(cfg), 19);
  const auto obs = random_image(44, 64);
  const auto o2 = random_image(45, 64);
  Graph<float> g;
  auto p = fwd.params().bind(g, true);
  std::vector<std::vector<i64>> targets{{0, 5, 10, 15}, {1, 2, 3, 4}};
  const int loss =
      fwd.build_loss(g, p, g.constant(frames_to_batch<float>({&obs, &o2})), {0, 2}, targets);
  CHECK(std::isfinite(g.val(loss).data[0]));
  g.backward(loss);
  CHECK(g.has_grad(p[0]));
}

TEST_CASE("inverse model: shapes, determinism, and the no-track ablation") {
  const auto cfg = tiny_cfg();
  InverseModel<float> inv(InverseConfig::from(cfg), 23);
  const auto obs = random_image(55, 64);
  const std::array<float, 3> prop{30.0f, 40.0f, 1.0f};
  const std::vector<i64> codes{3, 7, 11, 15};

  const auto dist = inv.decode_actions(obs, prop, codes);
  REQUIRE(dist.mu.shape == std::vector<i64>({4, 3}));
  REQUIRE(dist.sigma.shape == std::vector<i64>({4, 3}));
  for (float s : dist.sigma.data) CHECK(s > 0.0f);

  const auto dist2 = inv.decode_actions(obs, prop, codes);
  CHECK(dist.mu.data == dist2.mu.data);

  // Goal-blind by construction: inputs are (obs, proprio, codes) only.
  // Different codes change the output; zeroed code tokens erase that
  // dependence bit-exactly.
  const std::vector<i64> codes2{0, 1, 2, 3};
  const auto dist3 = inv.decode_actions(obs, prop, codes2);
  CHECK(dist.mu.data != dist3.mu.data);
  const auto ablated = inv.decode_actions(obs, prop, codes, true);
  const auto ablated2 = inv.decode_actions(obs, prop, codes2, true);
  CHECK(ablated.mu.data == ablated2.mu.data);

  CHECK_THROWS(inv.decode_actions(obs, prop, std::vector<i64>{999, 0, 0, 0}));
}

TEST_CASE("checkpoints: exact round trip and corruption refusal") {
  const auto cfg = tiny_cfg();
  MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 7);
  const auto u = random_field(61, 3, 16);
  const auto before = tok.encode(u);

  const auto dir = fs::temp_directory_path() / "amplify_tests" / "ckpt";
  fs::create_directories(dir);
  ckpt::Header h;
  h.kind = "tokenizer";
  h.seed = 7;
  h.config_text = cfg.canonical_dump();
  h.config_hash = cfg.hash();
  h.extra["fsq_levels"] = tok.config().fsq.levels;
  h.extra["fsq_eps"] = FsqConfig::kEps;
  h.extra["squash"] = "tanh(x) * (L - 1) * (1 + eps) / 2";
  const std::string hash = ckpt::save(dir / "tok.ckpt", h, tok.params());
  CHECK(hash.size() == 64);

  MotionTokenizer<float> tok2(TokenizerConfig::from(cfg), 999);
  const auto different = tok2.encode(u);
  CHECK(different.continuous.data != before.continuous.data);
  const auto loaded = ckpt::load(dir / "tok.ckpt", tok2.params());
  CHECK(loaded.content_hash == hash);
  const auto after = tok2.encode(u);
  CHECK(after.continuous.data == before.continuous.data);
  CHECK(after.indices == before.indices);

  ckpt::Header h2 = h;
  const std::string hash2 = ckpt::save(dir / "tok2.ckpt", h2, tok2.params());
  CHECK(hash2 == hash);

  auto bytes = read_file_bytes(dir / "tok.ckpt");
  bytes[bytes.size() - 3] = static_cast<char>(bytes[bytes.size() - 3] + 1);
  write_file_bytes(dir / "tok_bad.ckpt", bytes.data(), bytes.size());
  MotionTokenizer<float> tok3(TokenizerConfig::from(cfg), 1);
  CHECK_THROWS(ckpt::load(dir / "tok_bad.ckpt", tok3.params()));

  const auto peeked = ckpt::peek(dir / "tok.ckpt");
  CHECK(peeked.kind == "tokenizer");
  CHECK(peeked.content_hash == hash);
}

TEST_CASE("tiny overfit: one window drives the tokenizer loss down") {
  auto cfg = tiny_cfg();
  MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 3);
  // Integer velocities so labels are exactly representable.
  VelocityField<float> u{Tensor<float>({3, 16, 2})};
  Rng rng(9);
  for (auto& v : u.velocities.data) v = static_cast<float>(rng.below(5) - 2);

  double first = 0, last = 0;
  for (int step = 0; step < 150; ++step) {
    Graph<float> g;
    auto p = tok.params().bind(g, true);
    const int loss = tok.build_loss(g, p, {&u});
    last = g.val(loss).data[0];
    if (step == 0) first = last;
    g.backward(loss);
    tok.params().adamw_step(g, p, 0.003, 0.0);
  }
  CHECK(last < first * 0.2);

  const auto recon = tok.reconstruct(u);
  i64 hits = 0;
  for (i64 i = 0; i < u.velocities.numel(); i += 2) {
    const i64 want_x = round_even(u.velocities.data[static_cast<size_t>(i)]);
    const i64 want_y = round_even(u.velocities.data[static_cast<size_t>(i + 1)]);
    if (static_cast<i64>(recon.velocities.data[static_cast<size_t>(i)]) == want_x &&
        static_cast<i64>(recon.velocities.data[static_cast<size_t>(i + 1)]) == want_y) {
      ++hits;
    }
  }
  CHECK(hits >= 40);  // of 48 entries
}

TEST_CASE("tokenizer: multi-view windows tokenize into one code sequence") {
  const auto cfg = tiny_cfg();
  MotionTokenizer<float> tok(TokenizerConfig::from(cfg), 7);
  const auto u1 = random_field(71, 3, 16);
  const auto u2 = random_field(72, 3, 16);
  Graph<float> g;
  auto p = tok.params().bind(g, false);
  const int a = g.constant(tok.pack_velocities({&u1}));
  const int b = g.constant(tok.pack_velocities({&u2}));
  auto enc = tok.build_encode(g, p, {a, b});
  // Still exactly d codes regardless of the view count.
  CHECK(enc.codes.size() == 4);
  CHECK(g.val(enc.quantized).shape == std::vector<i64>({1, 4, 2}));
  // The second view influences the codes.
  auto enc_single = tok.build_encode(g, p, {a});
  CHECK(g.val(enc.latent).data != g.val(enc_single.latent).data);
}
