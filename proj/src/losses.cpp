#include "miassr/losses.hpp"

#include <cmath>

namespace miassr::loss {

namespace {
constexpr double kLogEps = 1e-12;
}

AdvKind parse_adv_kind(const std::string& name) {
  if (name == "vanilla") return AdvKind::Vanilla;
  if (name == "wgan") return AdvKind::Wgan;
  if (name == "wgangp") return AdvKind::WganGp;
  if (name == "ragan") return AdvKind::Ragan;
  fail("loss: unknown adversarial kind '" + name + "' (use vanilla, wgan, wgangp or ragan)");
}

std::string adv_kind_name(AdvKind k) {
  switch (k) {
    case AdvKind::Vanilla: return "vanilla";
    case AdvKind::Wgan: return "wgan";
    case AdvKind::WganGp: return "wgangp";
    case AdvKind::Ragan: return "ragan";
  }
  fail("loss: bad adversarial kind");
}

void LossWeights::validate() const {
  check(std::isfinite(lambda) && lambda >= 0, "loss: lambda must be finite and non-negative");
  check(std::isfinite(gamma) && gamma >= 0, "loss: gamma must be finite and non-negative");
  check(std::isfinite(eta) && eta >= 0, "loss: eta must be finite and non-negative");
  check(std::isfinite(gp_weight) && gp_weight >= 0, "loss: gp_weight must be finite and non-negative");
}

int l1_loss(ad::Tape& t, int pred, int target) {
  check(t.val(pred).shape() == t.val(target).shape(), "l1 loss: shape mismatch");
  return t.mean_all(t.abs_(t.sub(pred, target)));
}

int perceptual_loss(ad::Tape& t, model::FeatureGraph& fg, int pred, int target) {
  const Tensor& pv = t.val(pred);
  check(pv.ndim() == 4, "perceptual loss: want [N,C,H,W]");
  check(pv.shape() == t.val(target).shape(), "perceptual loss: shape mismatch");
  const int64_t C = pv.dim(1);
  int acc = -1;
  for (int64_t c = 0; c < C; ++c) {
    const int fp = fg.features(C == 1 ? pred : t.slice_ch(pred, c, 1));
    const int ft = fg.features(C == 1 ? target : t.slice_ch(target, c, 1));
    const int d = t.sub(fp, ft);
    const int mse = t.mean_all(t.mul(d, d));
    acc = acc < 0 ? mse : t.add(acc, mse);
  }
  return C == 1 ? acc : t.scale(acc, 1.0 / static_cast<double>(C));
}

AdvPair vanilla_losses(ad::Tape& t, int real_logits, int fake_logits) {
  const int dr = t.sigmoid(real_logits);
  const int df = t.sigmoid(fake_logits);
  const int one_minus_df = t.add_const(t.neg(df), 1.0);
  const int critic = t.neg(t.add(t.mean_all(t.log_clamped(dr, kLogEps)),
                                 t.mean_all(t.log_clamped(one_minus_df, kLogEps))));
  const int gen = t.neg(t.mean_all(t.log_clamped(df, kLogEps)));
  return {gen, critic};
}

AdvPair wgan_losses(ad::Tape& t, int real_logits, int fake_logits) {
  const int critic = t.sub(t.mean_all(fake_logits), t.mean_all(real_logits));
  const int gen = t.neg(t.mean_all(fake_logits));
  return {gen, critic};
}

AdvPair ragan_losses(ad::Tape& t, int real_logits, int fake_logits) {
  // score of each sample relative to the other side's batch mean
  const int r_rel = t.sub(real_logits, t.fill_like(t.mean_all(fake_logits), t.val(real_logits).shape()));
  const int f_rel = t.sub(fake_logits, t.fill_like(t.mean_all(real_logits), t.val(fake_logits).shape()));
  const int pr = t.sigmoid(r_rel);
  const int pf = t.sigmoid(f_rel);
  const int one_minus_pr = t.add_const(t.neg(pr), 1.0);
  const int one_minus_pf = t.add_const(t.neg(pf), 1.0);
  const int critic = t.neg(t.add(t.mean_all(t.log_clamped(pr, kLogEps)),
                                 t.mean_all(t.log_clamped(one_minus_pf, kLogEps))));
  const int gen = t.neg(t.add(t.mean_all(t.log_clamped(pf, kLogEps)),
                              t.mean_all(t.log_clamped(one_minus_pr, kLogEps))));
  return {gen, critic};
}

AdvPair adv_losses(ad::Tape& t, AdvKind kind, int real_logits, int fake_logits) {
  switch (kind) {
    case AdvKind::Vanilla: return vanilla_losses(t, real_logits, fake_logits);
    case AdvKind::Wgan:
    case AdvKind::WganGp: return wgan_losses(t, real_logits, fake_logits);
    case AdvKind::Ragan: return ragan_losses(t, real_logits, fake_logits);
  }
  fail("loss: bad adversarial kind");
}

int gradient_penalty(ad::Tape& t, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                     const Tensor& u, int* norm_node) {
  check(real.ndim() == 4 && real.shape() == fake.shape(), "gradient penalty: want matching [N,C,H,W] batches");
  const int64_t N = real.dim(0);
  check(u.numel() == N, "gradient penalty: want one mixing weight per sample");
  for (int64_t n = 0; n < N; ++n)
    check(u.data()[n] >= 0 && u.data()[n] <= 1, "gradient penalty: mixing weights must lie in [0,1]");

  Tensor mix(real.shape());
  const int64_t chw = real.numel() / N;
  for (int64_t n = 0; n < N; ++n) {
    const Scalar a = u.data()[n];
    for (int64_t j = 0; j < chw; ++j)
      mix.data()[n * chw + j] = a * real.data()[n * chw + j] + (Scalar(1) - a) * fake.data()[n * chw + j];
  }

  const int xhat = t.leaf(std::move(mix), /*requires_grad=*/true);
  const int s = t.sum_all(critic(t, xhat));
  const std::vector<int> g = t.gradients(s, {xhat});
  check(g[0] >= 0, "gradient penalty: critic output does not depend on its input");
  const int sq = t.sum_per_sample(t.mul(g[0], g[0]));
  const int norm = t.sqrt_(t.clamp_min(sq, 1e-24));
  if (norm_node) *norm_node = norm;
  const int d = t.add_const(norm, -1.0);
  return t.mean_all(t.mul(d, d));
}

int gradient_penalty(ad::Tape& t, model::CriticGraph& cg, const Tensor& real, const Tensor& fake,
                     const Tensor& u, int* norm_node) {
  return gradient_penalty(
      t, [&cg](ad::Tape&, int x) { return cg.logits(x); }, real, fake, u, norm_node);
}

Scalar l1_value(const Tensor& pred, const Tensor& target) {
  check(pred.shape() == target.shape(), "l1: shape mismatch");
  check(pred.numel() > 0, "l1: empty tensors");
  Scalar s = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) s += std::abs(pred.data()[i] - target.data()[i]);
  return s / static_cast<Scalar>(pred.numel());
}

Scalar perceptual_value(const model::FeatureExtractor& fx, const Tensor& pred, const Tensor& target) {
  Tensor p4 = pred.ndim() == 3 ? pred.reshaped({1, pred.dim(0), pred.dim(1), pred.dim(2)}) : pred;
  Tensor t4 = target.ndim() == 3 ? target.reshaped({1, target.dim(0), target.dim(1), target.dim(2)}) : target;
  ad::Tape tape;
  model::FeatureGraph fg(tape, fx);
  const int node = perceptual_loss(tape, fg, tape.leaf(std::move(p4)), tape.leaf(std::move(t4)));
  return tape.val(node).data()[0];
}

}  // namespace miassr::loss
