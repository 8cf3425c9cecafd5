// Acceptance checks. Each criterion prints exactly one PASS/FAIL line; the
// process exits nonzero if any fail. Tolerances are pinned here, in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "miassr/eval.hpp"
#include "miassr/image_ops.hpp"
#include "miassr/losses.hpp"
#include "miassr/metrics.hpp"
#include "miassr/train.hpp"

using namespace miassr;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_image(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform();
  return t;
}

// ---- criterion 1: parameter budget ------------------------------------

Outcome criterion_params() {
  Outcome o;
  model::GeneratorConfig cfg;  // depth 16, width 64, hidden 256, 1 channel
  const int64_t n16 = model::count_params(cfg);
  o.expect(n16 >= 1200000 && n16 <= 1800000,
           "default generator has " + std::to_string(n16) + " params, outside [1.2M, 1.8M]");
  cfg.depth = 32;
  const int64_t n32 = model::count_params(cfg);
  const int64_t extra = n32 - n16;
  o.expect(extra >= 1140000 && extra <= 1260000,
           "doubling depth added " + std::to_string(extra) + " params, outside 1.2M +- 5%");
  int64_t prev = -1;
  for (int64_t w : {4, 8, 16, 32, 64, 128}) {
    model::GeneratorConfig c;
    c.width = w;
    const int64_t n = model::count_params(c);
    o.expect(n > prev, "param count not strictly increasing at width " + std::to_string(w));
    prev = n;
  }
  prev = -1;
  for (int64_t d : {0, 2, 4, 8, 16, 32, 64}) {
    model::GeneratorConfig c;
    c.depth = d;
    const int64_t n = model::count_params(c);
    o.expect(n > prev, "param count not strictly increasing at depth " + std::to_string(d));
    prev = n;
  }
  return o;
}

// ---- criterion 2: output extent ---------------------------------------

Outcome criterion_extent() {
  Outcome o;
  model::GeneratorConfig cfg;
  cfg.depth = 1;
  cfg.width = 6;
  cfg.meta_hidden = 8;
  Rng init(101);
  const auto st = model::init_generator(cfg, init);
  Rng rng(102);
  for (int i = 0; i < 100; ++i) {
    const int64_t H = 5 + static_cast<int64_t>(rng.below(20));
    const int64_t W = 5 + static_cast<int64_t>(rng.below(20));
    double s = rng.uniform(1.0, 4.0);
    if (s <= 1.0) s = 1.0001;
    const Tensor sr = model::run_generate(st, random_image(rng, {1, H, W}), s);
    const int64_t oh = img::scaled_size(H, s), ow = img::scaled_size(W, s);
    o.expect(sr.dim(1) == oh && sr.dim(2) == ow,
             "case " + std::to_string(i) + ": " + std::to_string(H) + "x" + std::to_string(W) + " at s=" +
                 std::to_string(s) + " gave " + shape_str(sr.shape()) + ", want floor(sH) x floor(sW) = " +
                 std::to_string(oh) + "x" + std::to_string(ow));
    if (!o.ok) break;
  }
  return o;
}

// ---- criterion 3: local kernels == dense operator ---------------------

Outcome criterion_dense() {
  Outcome o;
  Rng rng(103);
  for (int i = 0; i < 20; ++i) {
    model::GeneratorConfig cfg;
    cfg.depth = 1 + static_cast<int64_t>(rng.below(2));
    cfg.width = 4 + 2 * static_cast<int64_t>(rng.below(3));
    cfg.channels = 1 + static_cast<int64_t>(rng.below(2));
    cfg.meta_hidden = 8;
    Rng init(200 + i);
    const auto st = model::init_generator(cfg, init);
    const int64_t H = 5 + static_cast<int64_t>(rng.below(8));  // <= 12
    const int64_t W = 5 + static_cast<int64_t>(rng.below(8));
    double s = rng.uniform(1.05, 4.0);
    const Tensor lr = random_image(rng, {cfg.channels, H, W});
    const Tensor feat = model::run_features(st, lr);

    ad::Tape t;
    model::GeneratorGraph gg(t, st, false);
    const int f = t.leaf(feat.reshaped({1, cfg.width, H, W}), false);
    const Tensor local = t.val(gg.upscale_local(f, s));
    const Tensor dense = model::meta_upscale_dense(st, feat, s);
    const double rel = max_rel_diff(local.reshaped(dense.shape()), dense);
    o.expect(rel < 1e-6, "case " + std::to_string(i) + ": local vs dense rel diff " + std::to_string(rel));
    if (!o.ok) break;
  }
  return o;
}

// ---- criterion 4: finite-difference gradient checks -------------------

// FD over every parameter of `params`, comparing against tape gradients
// produced by `build`. `value` recomputes the scalar eagerly.
double fd_worst_rel(std::vector<std::pair<std::string, Tensor>>& params,
                    const std::function<double()>& value, const std::vector<Tensor>& analytic,
                    double h = 1e-5) {
  double worst = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi].second;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + h;
      const double up = value();
      p.data()[i] = keep - h;
      const double dn = value();
      p.data()[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = analytic[pi].numel() ? analytic[pi].data()[i] : 0.0;
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

Outcome criterion_gradcheck() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();

  model::GeneratorConfig gcfg;
  gcfg.depth = 1;
  gcfg.width = 4;
  gcfg.meta_hidden = 6;
  Rng ri(104);
  auto gen = model::init_generator(gcfg, ri);
  Rng rng(105);
  const Tensor lr = random_image(rng, {1, 6, 6});
  const Tensor hr = random_image(rng, {1, 12, 12});
  const double s = 2.0;

  // generator pipeline under the L1 objective
  {
    auto value = [&] {
      ad::Tape t;
      model::GeneratorGraph gg(t, gen, false);
      const int sr = gg.generate(t.leaf(lr.reshaped({1, 1, 6, 6})), s);
      return t.val(loss::l1_loss(t, sr, t.leaf(hr.reshaped({1, 1, 12, 12})))).data()[0];
    };
    ad::Tape t;
    model::GeneratorGraph gg(t, gen, true);
    const int sr = gg.generate(t.leaf(lr.reshaped({1, 1, 6, 6})), s);
    const int l = loss::l1_loss(t, sr, t.leaf(hr.reshaped({1, 1, 12, 12})));
    std::vector<int> ids;
    for (const auto& [name, id] : gg.param_nodes()) ids.push_back(id);
    const auto grads = t.gradients(l, ids);
    std::vector<Tensor> analytic;
    for (size_t i = 0; i < grads.size(); ++i)
      analytic.push_back(grads[i] >= 0 ? t.val(grads[i]) : Tensor{});
    const double worst = fd_worst_rel(gen.params, value, analytic);
    o.expect(worst < 1e-3, "generate+L1 gradcheck worst rel " + std::to_string(worst));
  }

  // perceptual objective through the frozen feature stack
  {
    const auto fx = model::FeatureExtractor::desk("desk-shallow");
    const Tensor sr0 = model::run_generate(gen, lr, s);
    auto value = [&] {
      ad::Tape t;
      model::GeneratorGraph gg(t, gen, false);
      model::FeatureGraph fg(t, fx);
      const int sr = gg.generate(t.leaf(lr.reshaped({1, 1, 6, 6})), s);
      return t.val(loss::perceptual_loss(t, fg, sr, t.leaf(hr.reshaped({1, 1, 12, 12})))).data()[0];
    };
    ad::Tape t;
    model::GeneratorGraph gg(t, gen, true);
    model::FeatureGraph fg(t, fx);
    const int sr = gg.generate(t.leaf(lr.reshaped({1, 1, 6, 6})), s);
    const int l = loss::perceptual_loss(t, fg, sr, t.leaf(hr.reshaped({1, 1, 12, 12})));
    std::vector<int> ids;
    for (const auto& [name, id] : gg.param_nodes()) ids.push_back(id);
    const auto grads = t.gradients(l, ids);
    std::vector<Tensor> analytic;
    for (size_t i = 0; i < grads.size(); ++i)
      analytic.push_back(grads[i] >= 0 ? t.val(grads[i]) : Tensor{});
    const double worst = fd_worst_rel(gen.params, value, analytic);
    o.expect(worst < 1e-3, "perceptual gradcheck worst rel " + std::to_string(worst));
  }

  // adversarial objectives w.r.t. the critic parameters (wgangp includes the
  // penalty, i.e. differentiating through a first backward pass)
  model::CriticConfig ccfg;
  ccfg.blocks = 2;
  ccfg.base_channels = 4;
  Rng rc(106);
  auto critic = model::init_critic(ccfg, rc);
  const Tensor real = random_image(rng, {2, 1, 8, 8});
  const Tensor fake = random_image(rng, {2, 1, 8, 8});
  Tensor u({2});
  u.data()[0] = 0.3;
  u.data()[1] = 0.8;

  for (loss::AdvKind kind :
       {loss::AdvKind::Vanilla, loss::AdvKind::Wgan, loss::AdvKind::WganGp, loss::AdvKind::Ragan}) {
    auto critic_obj = [&](ad::Tape& t, model::CriticGraph& cg) {
      const auto pair = loss::adv_losses(t, kind, cg.logits(t.leaf(real)), cg.logits(t.leaf(fake)));
      if (kind != loss::AdvKind::WganGp) return pair.critic;
      const int gp = loss::gradient_penalty(t, cg, real, fake, u);
      return t.add(pair.critic, t.scale(gp, 10.0));
    };
    auto value = [&] {
      ad::Tape t;
      model::CriticGraph cg(t, critic, false);
      return t.val(critic_obj(t, cg)).data()[0];
    };
    ad::Tape t;
    model::CriticGraph cg(t, critic, true);
    const int l = critic_obj(t, cg);
    std::vector<int> ids;
    for (const auto& [name, id] : cg.param_nodes()) ids.push_back(id);
    const auto grads = t.gradients(l, ids);
    std::vector<Tensor> analytic;
    for (size_t i = 0; i < grads.size(); ++i)
      analytic.push_back(grads[i] >= 0 ? t.val(grads[i]) : Tensor{});
    const double worst = fd_worst_rel(critic.params, value, analytic);
    o.expect(worst < 1e-3, adv_kind_name(kind) + " critic gradcheck worst rel " + std::to_string(worst));
  }

  // critic_gradient_norm against a finite-difference probe of the score
  {
    const Tensor x = random_image(rng, {1, 1, 8, 8});
    const double norm = model::critic_gradient_norm(critic, x).data()[0];
    double sq = 0;
    const double h = 1e-5;
    for (int64_t i = 0; i < x.numel(); ++i) {
      Tensor xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double d =
          (model::run_critic(critic, xp).data()[0] - model::run_critic(critic, xm).data()[0]) / (2 * h);
      sq += d * d;
    }
    const double fd = std::sqrt(sq);
    const double rel = std::abs(norm - fd) / std::max(std::abs(fd), 1e-6);
    o.expect(rel < 1e-3, "critic_gradient_norm vs FD rel " + std::to_string(rel));
  }

  const double elapsed = seconds_since(t0);
  o.expect(elapsed < 300.0, "gradient checks took " + std::to_string(elapsed) + "s, budget 300s");
  if (o.ok) o.detail = "";
  return o;
}

// ---- criterion 5: metric fixed points ---------------------------------

Outcome criterion_metrics() {
  Outcome o;
  Tensor a({12, 12}), b({12, 12});
  for (int64_t i = 0; i < 144; ++i) {
    a.data()[i] = 0.2;
    b.data()[i] = 0.3;
  }
  o.expect(std::abs(metric::psnr(a, b, 1.0) - 20.0) < 1e-9, "uniform 0.1 offset psnr != 20 dB");

  Rng rng(107);
  const Tensor x = random_image(rng, {16, 15});
  o.expect(std::abs(metric::ssim(x, x) - 1.0) < 1e-12, "ssim(x, x) != 1");

  Tensor black({12, 12}), white({12, 12});
  for (int64_t i = 0; i < 144; ++i) white.data()[i] = 1.0;
  const double c1 = 1e-4;
  o.expect(std::abs(metric::ssim(black, white) - c1 / (1.0 + c1)) < 1e-9,
           "ssim(0, 1) != c1/(1+c1)");

  const auto fx = metric::fid_embedder();
  std::vector<Tensor> set;
  for (int i = 0; i < 5; ++i) set.push_back(random_image(rng, {16, 16}));
  o.expect(std::abs(metric::fid(fx, set, set)) < 1e-6, "fid of identical sets not ~0");

  metric::Moments ma, mb;
  ma.mu = Tensor({1});
  mb.mu = Tensor({1});
  mb.mu.data()[0] = 1.0;
  ma.cov = Tensor({1, 1});
  mb.cov = Tensor({1, 1});
  ma.cov.data()[0] = 1.0;
  mb.cov.data()[0] = 1.0;
  ma.n = mb.n = 4;
  o.expect(std::abs(metric::frechet(ma, mb) - 1.0) < 1e-9, "1-d frechet N(0,1) vs N(1,1) != 1");
  return o;
}

// ---- criterion 6: analytic gradient-penalty cases ---------------------

Outcome criterion_penalty() {
  Outcome o;
  Rng rng(108);
  const int64_t P = 49;
  const Tensor real = random_image(rng, {2, 1, 7, 7});
  const Tensor fake = random_image(rng, {2, 1, 7, 7});
  Tensor u({2});
  u.data()[0] = 0.25;
  u.data()[1] = 0.75;
  {
    ad::Tape t;
    loss::CriticFn unit = [P](ad::Tape& tape, int xx) {
      return tape.scale(tape.sum_per_sample(xx), 1.0 / std::sqrt(double(P)));
    };
    const double gp = t.val(loss::gradient_penalty(t, unit, real, fake, u)).data()[0];
    o.expect(std::abs(gp) < 1e-9, "unit-gradient critic penalty " + std::to_string(gp) + " not ~0");
  }
  {
    ad::Tape t;
    loss::CriticFn plain = [](ad::Tape& tape, int xx) { return tape.sum_per_sample(xx); };
    const double gp = t.val(loss::gradient_penalty(t, plain, real, fake, u)).data()[0];
    const double want = std::pow(std::sqrt(double(P)) - 1.0, 2.0);
    o.expect(std::abs(gp - want) < 1e-6,
             "sum critic penalty " + std::to_string(gp) + " != (sqrt(P)-1)^2 = " + std::to_string(want));
  }
  return o;
}

// ---- criteria 7 & 8: overfit run and baseline comparison --------------

struct OverfitResult {
  train::TrainState st;
  std::vector<data::Volume> vols;
  std::vector<double> scales;
  Outcome outcome;
};

OverfitResult run_overfit() {
  OverfitResult r;
  const auto t0 = std::chrono::steady_clock::now();
  r.scales = {1.5, 2.0, 3.0};
  r.vols = {data::synth_phantom(1, 4, 32, 32)};  // 4 fixed slices to memorize

  model::GeneratorConfig cfg;
  cfg.depth = 4;
  cfg.width = 16;
  cfg.meta_hidden = 32;
  train::TrainSchedule sched;
  sched.batch_size = 4;
  sched.patch = 32;
  sched.lr0 = 2e-3;
  sched.lr_halving_period = 1500;
  sched.scale_grid = r.scales;
  sched.seed = 7;
  sched.log_every = 500;

  r.st = train::init_train_state(cfg, sched);
  train::warmup_train(r.st, r.vols, sched, 2000);

  eval::EvalPlan plan;
  plan.scale_grid = r.scales;
  plan.with_fid = false;
  const auto report = eval::evaluate(plan, r.vols, eval::generator_model(r.st.gen));
  for (size_t i = 0; i < report.rows.size(); ++i)
    r.outcome.expect(report.rows[i].psnr > 40.0,
                     "train psnr at s=" + std::to_string(r.scales[i]) + " is " +
                         std::to_string(report.rows[i].psnr) + " dB, want > 40");

  // the combined objective must also run clean from the warm start
  model::CriticConfig ccfg;
  ccfg.blocks = 4;
  ccfg.base_channels = 16;
  train::attach_critic(r.st, ccfg, sched.seed);
  train::LossOptions opts;
  opts.weights.lambda = 1.0;
  opts.weights.gamma = 0.001;
  opts.weights.eta = 0.006;
  opts.kind = loss::AdvKind::WganGp;
  const auto fx = model::FeatureExtractor::desk("desk-shallow");
  opts.perceptual = &fx;
  const int64_t before_guard = r.st.skipped_guard, before_nf = r.st.skipped_nonfinite;
  train::adversarial_train(r.st, r.vols, sched, opts, 150);
  r.outcome.expect(r.st.skipped_guard == before_guard && r.st.skipped_nonfinite == before_nf,
                   "combined-objective leg skipped updates (guard " +
                       std::to_string(r.st.skipped_guard - before_guard) + ", non-finite " +
                       std::to_string(r.st.skipped_nonfinite - before_nf) + ")");

  const double elapsed = seconds_since(t0);
  r.outcome.expect(elapsed < 600.0, "overfit run took " + std::to_string(elapsed) + "s, budget 600s");
  return r;
}

Outcome criterion_beats_bicubic(const OverfitResult& r) {
  Outcome o;
  eval::EvalPlan plan;
  plan.scale_grid = r.scales;
  plan.with_fid = false;
  const auto ours = eval::evaluate(plan, r.vols, eval::generator_model(r.st.gen));
  const auto bic = eval::evaluate(plan, r.vols, eval::bicubic_model());
  for (size_t i = 0; i < r.scales.size(); ++i)
    o.expect(ours.rows[i].psnr > bic.rows[i].psnr,
             "model " + std::to_string(ours.rows[i].psnr) + " dB <= bicubic " +
                 std::to_string(bic.rows[i].psnr) + " dB at s=" + std::to_string(r.scales[i]));

  eval::EvalPlan two_four;
  two_four.scale_grid = {2.0, 4.0};
  two_four.with_fid = false;
  const auto far = eval::evaluate(two_four, r.vols, eval::bicubic_model());
  o.expect(far.rows[0].psnr > far.rows[1].psnr, "bicubic psnr(x2) not above psnr(x4)");
  return o;
}

// ---- criterion 9: fixed-scale wrapper identity ------------------------

Outcome criterion_updown(const OverfitResult& r) {
  Outcome o;
  eval::FixedScaleHandle h;
  h.scales = {2, 3};
  const auto& gen = r.st.gen;
  h.apply = [&gen](const Tensor& lr, int64_t s) { return model::run_generate(gen, lr, double(s)); };
  Rng rng(109);
  const Tensor lr = random_image(rng, {1, 11, 13});
  for (int64_t s : {2, 3}) {
    const Tensor direct = model::run_generate(gen, lr, double(s));
    const Tensor wrapped = eval::up_and_down(h, lr, double(s));
    o.expect(wrapped == direct,
             "wrapper output differs from the direct model at integer s=" + std::to_string(s));
  }
  return o;
}

// ---- criterion 10: transfer contract ----------------------------------

Outcome criterion_transfer() {
  Outcome o;
  model::GeneratorConfig src_cfg;
  src_cfg.depth = 3;
  src_cfg.width = 8;
  src_cfg.meta_hidden = 12;
  src_cfg.channels = 1;
  Rng ri(110);
  const auto src = model::init_generator(src_cfg, ri);
  model::GeneratorConfig dst_cfg = src_cfg;
  dst_cfg.channels = 4;
  Rng rt(111);
  const auto dst = train::transfer_generator(src, dst_cfg, rt);
  for (const auto& [name, t] : dst.params) {
    const bool io_layer = name.rfind("head.", 0) == 0 || name.rfind("meta_net.fc2.", 0) == 0;
    if (io_layer) continue;  // sized for the new channel count, checked below
    o.expect(t == src.param(name), "trunk tensor " + name + " not bit-identical after transfer");
  }
  o.expect(dst.param("head.weight").dim(1) == 4 * 3 * 3,
           "input conv not resized to the new channel count");
  o.expect(dst.param("meta_net.fc2.weight").dim(0) == 4 * 8 * 3 * 3,
           "meta output layer not resized to the new channel count");
  model::GeneratorConfig bad = dst_cfg;
  bad.depth = 4;
  Rng rb(112);
  bool threw = false;
  try {
    train::transfer_generator(src, bad, rb);
  } catch (const std::exception&) {
    threw = true;
  }
  o.expect(threw, "trunk mismatch was silently accepted");
  return o;
}

// ---- criterion 11: determinism and checkpoint durability ---------------

bool same_state(const train::TrainState& a, const train::TrainState& b) {
  if (a.step != b.step || a.phase != b.phase || a.phase_step != b.phase_step) return false;
  if (a.rng.save_state() != b.rng.save_state()) return false;
  for (size_t i = 0; i < a.gen.params.size(); ++i)
    if (!(a.gen.params[i].second == b.gen.params[i].second)) return false;
  if (a.has_critic != b.has_critic) return false;
  if (a.has_critic)
    for (size_t i = 0; i < a.critic.params.size(); ++i)
      if (!(a.critic.params[i].second == b.critic.params[i].second)) return false;
  for (size_t i = 0; i < a.adam_gen.m.size(); ++i)
    if (!(a.adam_gen.m[i] == b.adam_gen.m[i]) || !(a.adam_gen.v[i] == b.adam_gen.v[i])) return false;
  return true;
}

Outcome criterion_determinism() {
  Outcome o;
  const auto vols = data::phantom_corpus(2, 2, 2, 40, 40);
  model::GeneratorConfig cfg;
  cfg.depth = 1;
  cfg.width = 6;
  cfg.meta_hidden = 8;
  model::CriticConfig ccfg;
  ccfg.blocks = 2;
  ccfg.base_channels = 6;
  train::TrainSchedule sched;
  sched.batch_size = 2;
  sched.patch = 16;
  sched.lr0 = 1e-3;
  sched.scale_grid = {1.5, 2.0};
  sched.seed = 9;

  auto run = [&](bool interrupt) {
    auto st = train::init_train_state(cfg, sched);
    train::attach_critic(st, ccfg, sched.seed);
    train::LossOptions opts;
    opts.weights.gamma = 0.01;
    opts.weights.eta = 0.0;
    opts.kind = loss::AdvKind::WganGp;
    train::warmup_train(st, vols, sched, 4);
    if (interrupt) {
      train::save_checkpoint("/tmp/miassr_acc_mid.mckpt", st);
      st = train::load_checkpoint("/tmp/miassr_acc_mid.mckpt");
    }
    train::adversarial_train(st, vols, sched, opts, 3);
    if (interrupt) {
      train::save_checkpoint("/tmp/miassr_acc_mid.mckpt", st);
      st = train::load_checkpoint("/tmp/miassr_acc_mid.mckpt");
    }
    train::adversarial_train(st, vols, sched, opts, 3);
    return st;
  };

  const auto a = run(false);
  const auto b = run(false);
  o.expect(same_state(a, b), "two identical runs diverged");
  const auto c = run(true);
  o.expect(same_state(a, c), "save + reload mid-run does not reproduce the uninterrupted run");

  // durability: a save that dies mid-write must leave the old file intact
  const std::string path = "/tmp/miassr_acc_durable.mckpt";
  train::save_checkpoint(path, a);
  {
    std::ofstream dead(path + ".tmp", std::ios::binary);
    dead << "interrupted mid-write";
  }
  bool loaded = false;
  try {
    const auto back = train::load_checkpoint(path);
    loaded = same_state(a, back);
  } catch (const std::exception&) {
    loaded = false;
  }
  o.expect(loaded, "previous checkpoint unreadable after an interrupted overwrite");
  std::remove((path + ".tmp").c_str());
  std::remove(path.c_str());
  std::remove("/tmp/miassr_acc_mid.mckpt");
  return o;
}

int report(int id, const char* what, const Outcome& o) {
  std::printf("criterion %2d: %s - %s%s%s\n", id, o.ok ? "PASS" : "FAIL", what,
              o.ok || o.detail.empty() ? "" : ": ", o.ok ? "" : o.detail.c_str());
  std::fflush(stdout);
  return o.ok ? 0 : 1;
}

}  // namespace

int main() {
  int failures = 0;
  failures += report(1, "generator parameter budget and monotone growth", criterion_params());
  failures += report(2, "output extent floor(sH) x floor(sW) over 100 random cases", criterion_extent());
  failures += report(3, "per-pixel kernels equal the dense operator (20 cases, rel < 1e-6)", criterion_dense());
  failures += report(4, "finite-difference gradient checks (rel < 1e-3)", criterion_gradcheck());
  failures += report(5, "metric fixed points (psnr 20 dB, ssim 1, fid 0, frechet 1)", criterion_metrics());
  failures += report(6, "gradient-penalty analytic cases", criterion_penalty());
  OverfitResult ov = run_overfit();
  failures += report(7, "tiny-model overfit to > 40 dB and clean combined-objective leg", ov.outcome);
  failures += report(8, "trained model beats bicubic; bicubic degrades with scale", criterion_beats_bicubic(ov));
  failures += report(9, "fixed-scale wrapper bit-identical at integer scales", criterion_updown(ov));
  failures += report(10, "transfer keeps the trunk bit-exact, reinitializes io layers", criterion_transfer());
  failures += report(11, "bit-exact determinism, resume and checkpoint durability", criterion_determinism());
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
