#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <vector>

#include "bcib/optim.hpp"
#include "bcib/policy.hpp"
#include "bcib/rng.hpp"

using namespace bcib;

namespace {

PolicyConfig tiny_config(FusionKind fusion) {
  PolicyConfig pc;
  pc.obs_dim = 3;
  pc.state_dim = 2;
  pc.num_tasks = 2;
  pc.e_o = 4;
  pc.e_s = 3;
  pc.e_l = 2;
  pc.tau = 3;
  pc.fusion = fusion;
  pc.latent_dim = 5;
  pc.mlp_layers = 2;
  pc.mlp_hidden = 8;
  pc.attn_width = 8;
  pc.attn_layers = 1;
  pc.attn_heads = 2;
  pc.attn_ffn_hidden = 8;
  pc.head_hidden = 8;
  pc.action_dim = 2;
  pc.seed = 5;
  return pc;
}

Window random_window(const PolicyConfig& pc, Rng& rng) {
  Window w;
  w.task = rng.below(pc.num_tasks);
  for (size_t t = 0; t < pc.tau; ++t) {
    std::vector<double> o(pc.obs_dim), s(pc.state_dim);
    for (double& v : o) v = rng.uniform(-1, 1);
    for (double& v : s) v = rng.uniform(-1, 1);
    w.obs.push_back(std::move(o));
    w.state.push_back(std::move(s));
  }
  return w;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

const FusionKind kAllFusions[] = {FusionKind::spatial_mlp, FusionKind::temporal_rnn,
                                  FusionKind::temporal_attn};

}  // namespace

TEST_CASE("forward_batch produces the contracted shapes for every fusion kind") {
  for (FusionKind fusion : kAllFusions) {
    PolicyConfig pc = tiny_config(fusion);
    Policy policy(pc);
    Rng rng(8);
    std::vector<Window> windows;
    for (int i = 0; i < 4; ++i) windows.push_back(random_window(pc, rng));

    PolicyForward fwd = policy.forward_batch(windows);
    CHECK(fwd.x_flat.rows() == 4);
    CHECK(fwd.x_flat.cols() == pc.tau * pc.step_dim());
    CHECK(fwd.z.rows() == 4);
    CHECK(fwd.z.cols() == pc.latent_dim);
    CHECK(fwd.actions.rows() == 4);
    CHECK(fwd.actions.cols() == pc.action_dim);
    for (double v : fwd.actions.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("act agrees with a single-window forward_batch") {
  for (FusionKind fusion : kAllFusions) {
    PolicyConfig pc = tiny_config(fusion);
    Policy policy(pc);
    Rng rng(9);
    Window w = random_window(pc, rng);

    std::vector<double> a = policy.act(w);
    PolicyForward fwd = policy.forward_batch({w});
    REQUIRE(a.size() == pc.action_dim);
    for (size_t j = 0; j < a.size(); ++j)
      CHECK(a[j] == doctest::Approx(fwd.actions.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("encode_concat stacks tau rows of step_dim features") {
  PolicyConfig pc = tiny_config(FusionKind::spatial_mlp);
  Policy policy(pc);
  Rng rng(10);
  Window w = random_window(pc, rng);
  Tensor steps = policy.encode_concat(w);
  CHECK(steps.rows() == pc.tau);
  CHECK(steps.cols() == pc.step_dim());

  // identical steps encode identically: a window repeating one step gives
  // identical rows
  Window flat = w;
  for (size_t t = 1; t < pc.tau; ++t) {
    flat.obs[t] = flat.obs[0];
    flat.state[t] = flat.state[0];
  }
  Tensor fs = policy.encode_concat(flat);
  for (size_t t = 1; t < pc.tau; ++t)
    for (size_t c = 0; c < fs.cols(); ++c)
      CHECK(fs.at(t, c) == fs.at(0, c));
}

TEST_CASE("fusion kinds produce genuinely different latents") {
  Rng rng(12);
  PolicyConfig base = tiny_config(FusionKind::spatial_mlp);
  Window w = random_window(base, rng);

  std::vector<std::vector<double>> latents;
  for (FusionKind fusion : kAllFusions) {
    PolicyConfig pc = tiny_config(fusion);
    Policy policy(pc);
    Tensor z = policy.fuse(policy.encode_concat(w));
    CHECK(z.rows() == 1);
    CHECK(z.cols() == pc.latent_dim);
    latents.push_back(z.values());
  }
  CHECK(latents[0] != latents[1]);
  CHECK(latents[0] != latents[2]);
  CHECK(latents[1] != latents[2]);
}

TEST_CASE("temporal fusions depend on step order, spatial flattening does not care") {
  PolicyConfig pc = tiny_config(FusionKind::temporal_rnn);
  Policy policy(pc);
  Rng rng(14);
  Window w = random_window(pc, rng);
  Window reversed = w;
  std::reverse(reversed.obs.begin(), reversed.obs.end());
  std::reverse(reversed.state.begin(), reversed.state.end());

  Tensor z1 = policy.fuse(policy.encode_concat(w));
  Tensor z2 = policy.fuse(policy.encode_concat(reversed));
  CHECK(z1.values() != z2.values());
}

TEST_CASE("same config seed gives identical parameters, different seed differs") {
  PolicyConfig pc = tiny_config(FusionKind::spatial_mlp);
  Policy a(pc), b(pc);
  for (const auto& [path, p] : a.params()) {
    REQUIRE(b.params().contains(path));
    CHECK(p.values() == b.params().at(path).values());
  }

  pc.seed = 6;
  Policy c(pc);
  bool any_diff = false;
  for (const auto& [path, p] : a.params())
    any_diff |= (p.values() != c.params().at(path).values());
  CHECK(any_diff);
}

TEST_CASE("config JSON round-trips every field") {
  PolicyConfig pc = tiny_config(FusionKind::temporal_attn);
  pc.train_obs_encoder = false;
  pc.seed = 1234;
  PolicyConfig back = PolicyConfig::from_json(pc.to_json());
  CHECK(back.obs_dim == pc.obs_dim);
  CHECK(back.state_dim == pc.state_dim);
  CHECK(back.num_tasks == pc.num_tasks);
  CHECK(back.e_o == pc.e_o);
  CHECK(back.e_s == pc.e_s);
  CHECK(back.e_l == pc.e_l);
  CHECK(back.tau == pc.tau);
  CHECK(back.fusion == pc.fusion);
  CHECK(back.latent_dim == pc.latent_dim);
  CHECK(back.mlp_layers == pc.mlp_layers);
  CHECK(back.mlp_hidden == pc.mlp_hidden);
  CHECK(back.attn_width == pc.attn_width);
  CHECK(back.attn_layers == pc.attn_layers);
  CHECK(back.attn_heads == pc.attn_heads);
  CHECK(back.attn_ffn_hidden == pc.attn_ffn_hidden);
  CHECK(back.head_hidden == pc.head_hidden);
  CHECK(back.action_dim == pc.action_dim);
  CHECK(back.train_obs_encoder == pc.train_obs_encoder);
  CHECK(back.seed == pc.seed);
}

TEST_CASE("checkpoint save/load restores parameters bitwise and round-trips bytes") {
  std::filesystem::create_directories("tmp_policy");
  for (FusionKind fusion : kAllFusions) {
    PolicyConfig pc = tiny_config(fusion);
    Policy policy(pc);
    const std::string f1 = "tmp_policy/p1.ckpt";
    const std::string f2 = "tmp_policy/p2.ckpt";
    policy.save(f1);

    Policy loaded = Policy::load(f1);
    CHECK(loaded.config().fusion == fusion);
    for (const auto& [path, p] : policy.params()) {
      REQUIRE(loaded.params().contains(path));
      CHECK(loaded.params().at(path).values() == p.values());
    }

    Rng rng(15);
    Window w = random_window(pc, rng);
    CHECK(policy.act(w) == loaded.act(w));

    loaded.save(f2);
    CHECK(read_file(f1) == read_file(f2));
  }
}

TEST_CASE("frozen encoders drop out of trainable_params but keep gradient flow") {
  PolicyConfig pc = tiny_config(FusionKind::spatial_mlp);
  pc.train_obs_encoder = false;
  Policy policy(pc);

  ParamSet trainable = policy.trainable_params();
  bool trainable_has_obs = false, full_has_obs = false;
  for (const auto& [path, p] : trainable)
    if (path.find("obs") != std::string::npos) trainable_has_obs = true;
  for (const auto& [path, p] : policy.params())
    if (path.find("obs") != std::string::npos) full_has_obs = true;
  CHECK(full_has_obs);
  CHECK(!trainable_has_obs);
  CHECK(trainable.size() < policy.params().size());

  // gradients still flow through the frozen encoder to its parameters
  Rng rng(16);
  std::vector<Window> windows = {random_window(pc, rng), random_window(pc, rng)};
  policy.params().zero_grad();
  PolicyForward fwd = policy.forward_batch(windows);
  backward(mean(fwd.actions));
  double obs_grad_mag = 0.0;
  for (const auto& [path, p] : policy.params())
    if (path.find("obs") != std::string::npos)
      for (double g : p.grad()) obs_grad_mag += std::fabs(g);
  CHECK(obs_grad_mag > 0.0);

  // and the optimizer leaves frozen weights untouched
  std::vector<double> before;
  for (const auto& [path, p] : policy.params())
    if (path.find("obs") != std::string::npos)
      before.insert(before.end(), p.values().begin(), p.values().end());
  OptimState opt;
  optimizer_step(opt, trainable, 0.1);
  std::vector<double> after;
  for (const auto& [path, p] : policy.params())
    if (path.find("obs") != std::string::npos)
      after.insert(after.end(), p.values().begin(), p.values().end());
  CHECK(before == after);
}

TEST_CASE("fusion kind names round-trip and reject junk") {
  for (FusionKind fusion : kAllFusions)
    CHECK(fusion_kind_from_name(fusion_kind_name(fusion)) == fusion);
  CHECK_THROWS_AS(fusion_kind_from_name("conv"), std::runtime_error);
}

TEST_CASE("policy rejects windows with the wrong geometry") {
  PolicyConfig pc = tiny_config(FusionKind::spatial_mlp);
  Policy policy(pc);
  Rng rng(18);
  Window w = random_window(pc, rng);
  w.obs[0].push_back(0.0);  // obs_dim + 1
  CHECK_THROWS_AS(policy.act(w), std::exception);

  Window short_w = random_window(pc, rng);
  short_w.obs.pop_back();  // tau - 1 steps
  CHECK_THROWS_AS(policy.act(short_w), std::exception);

  Window bad_task = random_window(pc, rng);
  bad_task.task = pc.num_tasks;
  CHECK_THROWS_AS(policy.act(bad_task), std::exception);
}
