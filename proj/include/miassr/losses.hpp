#pragma once

#include <functional>
#include <string>

#include "miassr/critic.hpp"
#include "miassr/features.hpp"
#include "miassr/graph.hpp"
#include "miassr/tensor.hpp"

namespace miassr::loss {

enum class AdvKind { Vanilla, Wgan, WganGp, Ragan };

AdvKind parse_adv_kind(const std::string& name);  // "vanilla" | "wgan" | "wgangp" | "ragan"
std::string adv_kind_name(AdvKind k);

// Weights of the combined generator objective
//   total = lambda * pixel + gamma * adversarial + eta * perceptual.
// gamma == 0 disables the adversarial path entirely (no critic updates).
struct LossWeights {
  double lambda = 1.0;
  double gamma = 0.001;
  double eta = 0.006;
  double gp_weight = 10.0;

  void validate() const;
};

// ---- graph builders (scalar node ids on the caller's tape) ----

// mean |pred - target|
int l1_loss(ad::Tape& t, int pred, int target);

// mean squared error between tagged feature maps, one modality at a time,
// averaged over modalities.
int perceptual_loss(ad::Tape& t, model::FeatureGraph& fg, int pred, int target);

// Adversarial losses come in generator/critic pairs.  All take the critic's
// pre-sigmoid outputs for a batch of real and generated images.
struct AdvPair {
  int gen;
  int critic;
};

// cross-entropy game: critic classifies real vs fake, generator maximizes
// log D(fake) (the non-saturating form).  Probabilities are clamped at 1e-12
// before the log.
AdvPair vanilla_losses(ad::Tape& t, int real_logits, int fake_logits);

// Wasserstein estimate: critic minimizes mean(fake) - mean(real); generator
// minimizes -mean(fake).
AdvPair wgan_losses(ad::Tape& t, int real_logits, int fake_logits);

// Relativistic average: each side is judged relative to the other side's
// batch mean.  With identical real and fake scores both losses equal 2 ln 2.
AdvPair ragan_losses(ad::Tape& t, int real_logits, int fake_logits);

AdvPair adv_losses(ad::Tape& t, AdvKind kind, int real_logits, int fake_logits);

// Gradient penalty for WGAN-GP: mean over the batch of
// (|| d critic / d x  at  x = u*real + (1-u)*fake ||_2 - 1)^2, with one mixing
// weight u[n] per sample.  Emitted so that its own gradient with respect to
// the critic parameters is well defined (double backward).  norm_node, when
// given, receives the id of the per-sample gradient-norm vector.
using CriticFn = std::function<int(ad::Tape&, int x)>;  // x -> per-sample score node
int gradient_penalty(ad::Tape& t, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                     const Tensor& u, int* norm_node = nullptr);
int gradient_penalty(ad::Tape& t, model::CriticGraph& cg, const Tensor& real, const Tensor& fake,
                     const Tensor& u, int* norm_node = nullptr);

// ---- eager convenience values ----

Scalar l1_value(const Tensor& pred, const Tensor& target);
Scalar perceptual_value(const model::FeatureExtractor& fx, const Tensor& pred, const Tensor& target);

}  // namespace miassr::loss
