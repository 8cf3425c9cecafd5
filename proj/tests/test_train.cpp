#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "miassr/losses.hpp"
#include "miassr/train.hpp"

using namespace miassr;

namespace {

// Small end-to-end setup shared by most cases: tiny generator, tiny corpus.
struct Bed {
  model::GeneratorConfig gen_cfg;
  model::CriticConfig critic_cfg;
  train::TrainSchedule sched;
  std::vector<data::Volume> vols;

  Bed() {
    gen_cfg.depth = 1;
    gen_cfg.width = 6;
    gen_cfg.meta_hidden = 8;
    critic_cfg.blocks = 2;
    critic_cfg.base_channels = 6;
    sched.batch_size = 2;
    sched.patch = 16;
    sched.lr0 = 1e-3;
    sched.lr_halving_period = 50;
    sched.scale_grid = {1.5, 2.0};
    sched.seed = 3;
    sched.log_every = 1;
    vols = data::phantom_corpus(1, 2, 3, 40, 40);
  }
};

bool states_equal(const train::TrainState& a, const train::TrainState& b) {
  if (a.step != b.step || a.phase_step != b.phase_step || a.phase != b.phase) return false;
  if (a.skipped_guard != b.skipped_guard || a.skipped_nonfinite != b.skipped_nonfinite) return false;
  if (a.rng.save_state() != b.rng.save_state()) return false;
  if (a.gen.params.size() != b.gen.params.size()) return false;
  for (size_t i = 0; i < a.gen.params.size(); ++i)
    if (!(a.gen.params[i].second == b.gen.params[i].second)) return false;
  if (a.adam_gen.t != b.adam_gen.t) return false;
  for (size_t i = 0; i < a.adam_gen.m.size(); ++i)
    if (!(a.adam_gen.m[i] == b.adam_gen.m[i]) || !(a.adam_gen.v[i] == b.adam_gen.v[i])) return false;
  if (a.has_critic != b.has_critic) return false;
  if (a.has_critic)
    for (size_t i = 0; i < a.critic.params.size(); ++i)
      if (!(a.critic.params[i].second == b.critic.params[i].second)) return false;
  return true;
}

}  // namespace

TEST_CASE("learning rate halves per period") {
  train::TrainSchedule s;
  s.lr0 = 8e-4;
  s.lr_halving_period = 100;
  CHECK(train::lr_at(0, s) == 8e-4);
  CHECK(train::lr_at(99, s) == 8e-4);
  CHECK(train::lr_at(100, s) == 4e-4);
  CHECK(train::lr_at(350, s) == 1e-4);
}

TEST_CASE("the default scale grid is 1.1 .. 4.0 in tenths") {
  const auto g = train::default_scale_grid();
  REQUIRE(g.size() == 30);
  CHECK(g.front() == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(g.back() == doctest::Approx(4.0).epsilon(1e-12));
  for (double s : g) {
    CHECK(s > 1.0);
    CHECK(s <= 4.0);
  }
}

TEST_CASE("schedule validation") {
  train::TrainSchedule s;
  s.validate();
  s.scale_grid = {4.5};
  CHECK_THROWS(s.validate());
  s = train::TrainSchedule{};
  s.batch_size = 0;
  CHECK_THROWS(s.validate());
}

TEST_CASE("warm-up training is bit-deterministic") {
  Bed bed;
  auto a = train::init_train_state(bed.gen_cfg, bed.sched);
  auto b = train::init_train_state(bed.gen_cfg, bed.sched);
  train::warmup_train(a, bed.vols, bed.sched, 5);
  train::warmup_train(b, bed.vols, bed.sched, 5);
  CHECK(states_equal(a, b));
  CHECK(a.step == 5);
  CHECK(a.phase == "warmup");
}

TEST_CASE("warm-up reduces the training L1 loss") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  std::vector<double> losses;
  train::warmup_train(st, bed.vols, bed.sched, 40,
                      [&losses](const train::StepLog& row) { losses.push_back(row.total); });
  REQUIRE(losses.size() == 40);
  double early = 0, late = 0;
  for (int i = 0; i < 8; ++i) early += losses[i];
  for (int i = 32; i < 40; ++i) late += losses[i];
  CHECK(late < early);
}

TEST_CASE("a zero loss guard skips every update") {
  Bed bed;
  bed.sched.loss_guard = 0.0;  // losses are > 0, and the guard is strict
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  const auto before = st.gen.params;
  train::warmup_train(st, bed.vols, bed.sched, 4);
  CHECK(st.skipped_guard == 4);
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].second == st.gen.params[i].second);
  CHECK(st.step == 4);  // skipped steps still advance the counters
}

TEST_CASE("the guard probe can veto single steps without touching the data stream") {
  Bed bed;
  auto a = train::init_train_state(bed.gen_cfg, bed.sched);
  auto b = train::init_train_state(bed.gen_cfg, bed.sched);
  train::GuardProbe veto_second = [](int64_t step, double total) {
    return step == 1 ? 1e18 : total;  // pretend step 1 exploded
  };
  train::warmup_train(a, bed.vols, bed.sched, 3, {}, veto_second);
  CHECK(a.skipped_guard == 1);
  train::warmup_train(b, bed.vols, bed.sched, 3);
  CHECK(b.skipped_guard == 0);
  // both consumed the same number of RNG draws
  CHECK(a.rng.save_state() == b.rng.save_state());
}

TEST_CASE("a flood of non-finite losses aborts the phase") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  train::GuardProbe nan_all = [](int64_t, double) { return std::nan(""); };
  CHECK_THROWS(train::warmup_train(st, bed.vols, bed.sched, 50, {}, nan_all));
}

TEST_CASE("rare non-finite steps are skipped, not fatal") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  train::GuardProbe one_bad = [](int64_t step, double total) {
    return step == 2 ? std::numeric_limits<double>::infinity() : total;
  };
  train::warmup_train(st, bed.vols, bed.sched, 120, {}, one_bad);
  CHECK(st.skipped_nonfinite == 1);
  CHECK(st.step == 120);
}

TEST_CASE("gamma 0 adversarial phase reproduces the warm-up trajectory bit for bit") {
  Bed bed;
  auto warm = train::init_train_state(bed.gen_cfg, bed.sched);
  train::warmup_train(warm, bed.vols, bed.sched, 6);

  auto adv = train::init_train_state(bed.gen_cfg, bed.sched);
  train::attach_critic(adv, bed.critic_cfg, bed.sched.seed);
  train::LossOptions opts;
  opts.weights.gamma = 0.0;
  opts.weights.eta = 0.0;
  opts.kind = loss::AdvKind::WganGp;
  train::adversarial_train(adv, bed.vols, bed.sched, opts, 6);

  CHECK(adv.step == warm.step);
  for (size_t i = 0; i < warm.gen.params.size(); ++i)
    CHECK(warm.gen.params[i].second == adv.gen.params[i].second);
  CHECK(warm.rng.save_state() == adv.rng.save_state());
}

TEST_CASE("adversarial phase with an active critic runs and stays finite") {
  Bed bed;
  bed.sched.scale_grid = {2.0};
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  train::attach_critic(st, bed.critic_cfg, bed.sched.seed);
  train::LossOptions opts;
  opts.weights.gamma = 0.01;
  opts.weights.eta = 0.0;
  opts.kind = loss::AdvKind::WganGp;
  std::vector<double> gp_log;
  train::adversarial_train(st, bed.vols, bed.sched, opts, 4, {}, {}, &gp_log);
  CHECK(st.step == 4);
  CHECK(st.phase == "adversarial");
  CHECK(gp_log.size() == 4);
  for (double n : gp_log) CHECK(std::isfinite(n));
  for (const auto& [name, t] : st.gen.params) CHECK(t.all_finite());
  for (const auto& [name, t] : st.critic.params) CHECK(t.all_finite());
}

TEST_CASE("every adversarial variant makes finite progress") {
  for (loss::AdvKind k :
       {loss::AdvKind::Vanilla, loss::AdvKind::Wgan, loss::AdvKind::WganGp, loss::AdvKind::Ragan}) {
    Bed bed;
    bed.sched.scale_grid = {2.0};
    if (k == loss::AdvKind::Wgan) bed.sched.wgan_clip = 0.05;
    auto st = train::init_train_state(bed.gen_cfg, bed.sched);
    train::attach_critic(st, bed.critic_cfg, bed.sched.seed);
    train::LossOptions opts;
    opts.weights.gamma = 0.01;
    opts.weights.eta = 0.0;
    opts.kind = k;
    train::adversarial_train(st, bed.vols, bed.sched, opts, 3);
    CHECK(st.step == 3);
    for (const auto& [name, t] : st.gen.params) CHECK(t.all_finite());
  }
}

TEST_CASE("attaching a critic does not perturb the generator stream") {
  Bed bed;
  auto plain = train::init_train_state(bed.gen_cfg, bed.sched);
  auto with_critic = train::init_train_state(bed.gen_cfg, bed.sched);
  train::attach_critic(with_critic, bed.critic_cfg, bed.sched.seed);
  train::warmup_train(plain, bed.vols, bed.sched, 4);
  train::warmup_train(with_critic, bed.vols, bed.sched, 4);
  for (size_t i = 0; i < plain.gen.params.size(); ++i)
    CHECK(plain.gen.params[i].second == with_critic.gen.params[i].second);
}

TEST_CASE("transfer keeps the trunk bit-exact and reinitializes the io layers") {
  model::GeneratorConfig src_cfg;
  src_cfg.depth = 2;
  src_cfg.width = 6;
  src_cfg.meta_hidden = 8;
  src_cfg.channels = 1;
  Rng r(5);
  const auto src = model::init_generator(src_cfg, r);

  model::GeneratorConfig dst_cfg = src_cfg;
  dst_cfg.channels = 3;
  Rng r2(9);
  const auto dst = train::transfer_generator(src, dst_cfg, r2);

  for (const auto& [name, t] : dst.params) {
    const bool io_layer = name.rfind("head.", 0) == 0 || name.rfind("meta_net.fc2.", 0) == 0;
    if (io_layer) continue;
    CHECK(t == src.param(name));
  }
  CHECK(dst.param("head.weight").dim(1) == 3 * 3 * 3);
  CHECK_FALSE(dst.param("head.weight") == src.param("head.weight"));

  // equal channel counts: everything is copied
  Rng r3(11);
  const auto same = train::transfer_generator(src, src_cfg, r3);
  for (const auto& [name, t] : same.params) CHECK(t == src.param(name));

  // trunk mismatch is an error
  model::GeneratorConfig wrong = dst_cfg;
  wrong.width = 8;
  Rng r4(12);
  CHECK_THROWS(train::transfer_generator(src, wrong, r4));
}

TEST_CASE("checkpoints round-trip the full state bit-exactly") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  train::attach_critic(st, bed.critic_cfg, bed.sched.seed);
  train::warmup_train(st, bed.vols, bed.sched, 3);
  const std::string path = "/tmp/miassr_test_ckpt.mckpt";
  train::save_checkpoint(path, st, "a = 1\n");
  const auto back = train::load_checkpoint(path);
  CHECK(states_equal(st, back));
  CHECK(back.gen.cfg.width == bed.gen_cfg.width);
  CHECK(back.critic.cfg.blocks == bed.critic_cfg.blocks);
  std::remove(path.c_str());
}

TEST_CASE("save, reload and continue equals an uninterrupted run") {
  Bed bed;
  auto straight = train::init_train_state(bed.gen_cfg, bed.sched);
  train::warmup_train(straight, bed.vols, bed.sched, 8);

  auto half = train::init_train_state(bed.gen_cfg, bed.sched);
  train::warmup_train(half, bed.vols, bed.sched, 4);
  const std::string path = "/tmp/miassr_test_resume.mckpt";
  train::save_checkpoint(path, half);
  auto resumed = train::load_checkpoint(path);
  train::warmup_train(resumed, bed.vols, bed.sched, 4);
  CHECK(states_equal(straight, resumed));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint writes are atomic: a dead temp file never hides the good one") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  const std::string path = "/tmp/miassr_test_atomic.mckpt";
  train::save_checkpoint(path, st);
  // a later save that died mid-write leaves only a stale .tmp behind
  std::ofstream junk(path + ".tmp", std::ios::binary);
  junk << "partial garbage";
  junk.close();
  const auto back = train::load_checkpoint(path);
  CHECK(states_equal(st, back));
  std::remove((path + ".tmp").c_str());
  std::remove(path.c_str());
}

TEST_CASE("corrupted checkpoints are rejected, not misread") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  const std::string path = "/tmp/miassr_test_corrupt.mckpt";
  train::save_checkpoint(path, st);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS(train::load_checkpoint(path));
  std::remove(path.c_str());
}

TEST_CASE("training rejects volumes whose channels mismatch the model") {
  Bed bed;
  auto st = train::init_train_state(bed.gen_cfg, bed.sched);
  const auto wrong = data::phantom_corpus(2, 1, 2, 40, 40, 3);
  CHECK_THROWS(train::warmup_train(st, wrong, bed.sched, 1));
}
