#include "miassr/train.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace miassr::train {

namespace {

constexpr const char* kFormat = "miassr-checkpoint-1";
constexpr const char* kVersion = "0.1.0";

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainSchedule::validate() const {
  check(warmup_steps >= 0 && adv_steps >= 0 && finetune_steps >= 0, "schedule: step counts must be non-negative");
  check(batch_size >= 1, "schedule: batch_size must be positive");
  check(patch >= 4, "schedule: patch must be at least 4");
  check(std::isfinite(lr0) && lr0 > 0, "schedule: lr0 must be positive");
  check(lr_halving_period >= 1, "schedule: lr_halving_period must be positive");
  check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "schedule: adam betas must lie in [0,1)");
  check(std::isfinite(loss_guard) && loss_guard >= 0, "schedule: loss_guard must be non-negative");
  for (double s : scale_grid)
    check(s > 1.0 && s <= 4.0, "schedule: scale_grid entry " + fmt_g(s) + " outside (1,4]");
  check(n_critic >= 1, "schedule: n_critic must be positive");
  check(wgan_clip >= 0, "schedule: wgan_clip must be non-negative");
  check(log_every >= 1, "schedule: log_every must be positive");
  check(checkpoint_every >= 0, "schedule: checkpoint_every must be non-negative");
}

std::vector<double> TrainSchedule::grid() const {
  return scale_grid.empty() ? default_scale_grid() : scale_grid;
}

std::vector<double> default_scale_grid() {
  std::vector<double> g;
  for (int i = 11; i <= 40; ++i) g.push_back(i / 10.0);
  return g;
}

double lr_at(int64_t step, const TrainSchedule& s) {
  check(step >= 0, "lr_at: negative step");
  return s.lr0 * std::exp2(-static_cast<double>(step / s.lr_halving_period));
}

double sample_scale(Rng& rng, const std::vector<double>& grid) {
  check(!grid.empty(), "sample_scale: empty scale grid");
  return grid[rng.below(grid.size())];
}

namespace {

double pick_scale(Rng& rng, const TrainSchedule& sched, const std::vector<double>& grid) {
  if (!sched.scale_continuous) return sample_scale(rng, grid);
  check(!grid.empty(), "sample_scale: empty scale grid");
  double lo = grid.front(), hi = grid.front();
  for (double g : grid) {
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  return rng.uniform(lo, hi);
}

AdamState make_adam(const std::vector<std::pair<std::string, Tensor>>& params) {
  AdamState a;
  for (const auto& [name, t] : params) {
    a.m.emplace_back(t.shape());
    a.v.emplace_back(t.shape());
  }
  return a;
}

// one Adam update; grads aligned with params
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, const std::vector<Tensor>& grads,
               AdamState& a, double lr, double beta1, double beta2) {
  constexpr double kEps = 1e-8;
  a.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(a.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(a.t));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p].second;
    const Tensor& g = grads[p];
    Tensor& m = a.m[p];
    Tensor& v = a.v[p];
    for (int64_t i = 0; i < w.numel(); ++i) {
      const double gi = static_cast<double>(g.data()[i]);
      m.data()[i] = static_cast<Scalar>(beta1 * m.data()[i] + (1.0 - beta1) * gi);
      v.data()[i] = static_cast<Scalar>(beta2 * v.data()[i] + (1.0 - beta2) * gi * gi);
      const double mh = static_cast<double>(m.data()[i]) / bc1;
      const double vh = static_cast<double>(v.data()[i]) / bc2;
      w.data()[i] -= static_cast<Scalar>(lr * mh / (std::sqrt(vh) + kEps));
    }
  }
}

std::vector<Tensor> param_grads(ad::Tape& t, int loss_node,
                                const std::vector<std::pair<std::string, int>>& nodes) {
  std::vector<int> ids;
  ids.reserve(nodes.size());
  for (const auto& [name, id] : nodes) ids.push_back(id);
  const std::vector<int> g = t.gradients(loss_node, ids);
  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i)
    out.push_back(g[i] < 0 ? Tensor(t.val(ids[i]).shape()) : t.val(g[i]));
  return out;
}

// Guard bookkeeping for one phase call.  A step whose loss exceeds the guard
// is skipped quietly; non-finite losses are skipped and counted, and the run
// aborts once they exceed 1% of the planned steps.
struct GuardWindow {
  int64_t planned = 0;
  int64_t nonfinite = 0;

  // returns true when the update must be skipped
  bool veto(TrainState& st, const TrainSchedule& sched, double probed) {
    if (!std::isfinite(probed)) {
      st.skipped_nonfinite += 1;
      nonfinite += 1;
      check(nonfinite * 100 <= planned,
            "training: non-finite loss in " + std::to_string(nonfinite) + " of " + std::to_string(planned) +
                " planned steps (over 1%) — aborting");
      return true;
    }
    if (probed > sched.loss_guard) {
      st.skipped_guard += 1;
      return true;
    }
    return false;
  }
};

void enter_phase(TrainState& st, const std::string& phase) {
  if (st.phase != phase) {
    st.phase = phase;
    st.phase_step = 0;
  }
}

void emit(const LogSink& log, const TrainSchedule& sched, const StepLog& row) {
  if (log && (row.step % sched.log_every == 0)) log(row);
}

}  // namespace

std::string csv_header() { return "step,phase,scale,l1,adv,perc,total,lr,skipped"; }

std::string csv_row(const StepLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d",
                static_cast<long long>(r.step), r.phase.c_str(), r.scale, r.l1, r.adv, r.perc, r.total,
                r.lr, r.skipped);
  return buf;
}

TrainState init_train_state(const model::GeneratorConfig& cfg, const TrainSchedule& sched,
                            const std::string& scheme) {
  cfg.validate();
  sched.validate();
  TrainState st;
  st.rng = Rng(sched.seed);
  st.gen = model::init_generator(cfg, st.rng, scheme);
  st.adam_gen = make_adam(st.gen.params);
  return st;
}

void attach_critic(TrainState& st, const model::CriticConfig& cfg, uint64_t seed, const std::string& scheme) {
  cfg.validate();
  check(cfg.channels == st.gen.cfg.channels, "critic: channel count differs from the generator's");
  Rng rng(seed ^ 0xc417c417c417c417ULL);
  st.critic = model::init_critic(cfg, rng, scheme);
  st.adam_critic = make_adam(st.critic.params);
  st.has_critic = true;
}

void warmup_train(TrainState& st, const std::vector<data::Volume>& vols, const TrainSchedule& sched,
                  int64_t steps, const LogSink& log, const GuardProbe& probe) {
  sched.validate();
  check(steps >= 0, "warmup: negative step count");
  enter_phase(st, "warmup");
  const std::vector<double> grid = sched.grid();
  GuardWindow guard{steps, 0};

  for (int64_t k = 0; k < steps; ++k) {
    const double s = pick_scale(st.rng, sched, grid);
    const uint64_t batch_seed = st.rng.next();
    const data::PatchBatch batch = data::sample_patch_batch(vols, s, sched.patch, sched.batch_size, batch_seed);

    ad::Tape t;
    model::GeneratorGraph gg(t, st.gen, /*params_require_grad=*/true);
    const int sr = gg.generate(t.leaf(batch.lr), s);
    const int l1 = loss::l1_loss(t, sr, t.leaf(batch.hr));
    const double l1v = static_cast<double>(t.val(l1).data()[0]);
    const double lr = lr_at(st.phase_step, sched);

    const double probed = probe ? probe(st.step, l1v) : l1v;
    const bool skip = guard.veto(st, sched, probed);
    if (!skip) {
      const std::vector<Tensor> grads = param_grads(t, l1, gg.param_nodes());
      adam_step(st.gen.params, grads, st.adam_gen, lr, sched.beta1, sched.beta2);
    }
    emit(log, sched, {st.step, st.phase, s, l1v, 0.0, 0.0, l1v, lr, skip ? 1 : 0});
    st.step += 1;
    st.phase_step += 1;
  }
}

void adversarial_train(TrainState& st, const std::vector<data::Volume>& vols, const TrainSchedule& sched,
                       const LossOptions& opts, int64_t steps, const LogSink& log, const GuardProbe& probe,
                       std::vector<double>* gp_log) {
  sched.validate();
  opts.weights.validate();
  check(steps >= 0, "adversarial: negative step count");
  const double lambda = opts.weights.lambda, gamma = opts.weights.gamma, eta = opts.weights.eta;
  const bool use_critic = gamma > 0;
  const bool use_perc = eta > 0;
  if (use_critic) check(st.has_critic, "adversarial: gamma > 0 but no critic attached");
  if (use_perc) check(opts.perceptual != nullptr, "adversarial: eta > 0 but no perceptual extractor given");

  enter_phase(st, "adversarial");
  const std::vector<double> grid = sched.grid();
  if (use_critic && !sched.scale_continuous) {
    // fail fast if some sampled patch size can't feed the critic chain
    for (double s : grid) {
      const int64_t hs = data::hr_patch_size(sched.patch, s);
      model::critic_spatial_trace(st.critic.cfg, hs, hs);
    }
  }
  GuardWindow guard{steps, 0};

  for (int64_t k = 0; k < steps; ++k) {
    const double s = pick_scale(st.rng, sched, grid);
    const uint64_t batch_seed = st.rng.next();
    const data::PatchBatch batch = data::sample_patch_batch(vols, s, sched.patch, sched.batch_size, batch_seed);
    const double lr = lr_at(st.phase_step, sched);
    const int64_t B = batch.hr.dim(0);
    bool critic_skipped = false;

    if (use_critic) {
      // generator output for the critic side, detached from the generator
      Tensor sr_fixed;
      {
        ad::Tape t;
        model::GeneratorGraph gg(t, st.gen, /*params_require_grad=*/false);
        sr_fixed = t.val(gg.generate(t.leaf(batch.lr), s));
      }
      for (int64_t ic = 0; ic < sched.n_critic; ++ic) {
        ad::Tape t;
        model::CriticGraph cg(t, st.critic, /*params_require_grad=*/true);
        const int rl = cg.logits(t.leaf(batch.hr));
        const int fl = cg.logits(t.leaf(sr_fixed));
        int closs = loss::adv_losses(t, opts.kind, rl, fl).critic;
        int norm_node = -1;
        if (opts.kind == loss::AdvKind::WganGp) {
          Tensor u({B});
          for (int64_t b = 0; b < B; ++b) u.data()[b] = static_cast<Scalar>(st.rng.uniform());
          const int gp = loss::gradient_penalty(t, cg, batch.hr, sr_fixed, u, &norm_node);
          closs = t.add(closs, t.scale(gp, opts.weights.gp_weight));
        }
        const double cl = static_cast<double>(t.val(closs).data()[0]);
        if (gp_log && norm_node >= 0) {
          const Tensor& norms = t.val(norm_node);
          double acc = 0;
          for (int64_t b = 0; b < norms.numel(); ++b) acc += static_cast<double>(norms.data()[b]);
          gp_log->push_back(acc / static_cast<double>(norms.numel()));
        }
        if (!std::isfinite(cl)) {
          st.skipped_nonfinite += 1;
          critic_skipped = true;
          continue;
        }
        if (cl > sched.loss_guard) {
          st.skipped_guard += 1;
          critic_skipped = true;
          continue;
        }
        const std::vector<Tensor> grads = param_grads(t, closs, cg.param_nodes());
        adam_step(st.critic.params, grads, st.adam_critic, lr, sched.beta1, sched.beta2);
        if (opts.kind == loss::AdvKind::Wgan && sched.wgan_clip > 0) {
          const Scalar c = static_cast<Scalar>(sched.wgan_clip);
          for (auto& [name, p] : st.critic.params)
            for (int64_t i = 0; i < p.numel(); ++i) p.data()[i] = std::clamp(p.data()[i], -c, c);
        }
      }
    }

    ad::Tape t;
    model::GeneratorGraph gg(t, st.gen, /*params_require_grad=*/true);
    const int sr = gg.generate(t.leaf(batch.lr), s);
    const int hr = t.leaf(batch.hr);
    const int l1n = loss::l1_loss(t, sr, hr);
    int total_n = lambda == 1.0 ? l1n : t.scale(l1n, lambda);
    double advv = 0, percv = 0;
    if (use_critic) {
      model::CriticGraph cg(t, st.critic, /*params_require_grad=*/false);
      const int adv = loss::adv_losses(t, opts.kind, cg.logits(hr), cg.logits(sr)).gen;
      advv = static_cast<double>(t.val(adv).data()[0]);
      total_n = t.add(total_n, t.scale(adv, gamma));
    }
    if (use_perc) {
      model::FeatureGraph fg(t, *opts.perceptual);
      const int perc = loss::perceptual_loss(t, fg, sr, hr);
      percv = static_cast<double>(t.val(perc).data()[0]);
      total_n = t.add(total_n, t.scale(perc, eta));
    }
    const double l1v = static_cast<double>(t.val(l1n).data()[0]);
    const double totalv = static_cast<double>(t.val(total_n).data()[0]);

    const double probed = probe ? probe(st.step, totalv) : totalv;
    const bool skip = guard.veto(st, sched, probed);
    if (!skip) {
      const std::vector<Tensor> grads = param_grads(t, total_n, gg.param_nodes());
      adam_step(st.gen.params, grads, st.adam_gen, lr, sched.beta1, sched.beta2);
    }
    emit(log, sched, {st.step, st.phase, s, l1v, advv, percv, totalv, lr, (skip || critic_skipped) ? 1 : 0});
    st.step += 1;
    st.phase_step += 1;
  }
}

model::GeneratorState transfer_generator(const model::GeneratorState& src,
                                         const model::GeneratorConfig& dst_cfg, Rng& rng) {
  dst_cfg.validate();
  const model::GeneratorConfig& sc = src.cfg;
  check(sc.depth == dst_cfg.depth && sc.width == dst_cfg.width && sc.kernel == dst_cfg.kernel &&
            sc.meta_hidden == dst_cfg.meta_hidden,
        "transfer: source and target trunks differ (depth/width/kernel/meta_hidden must match; no reshaping)");
  model::GeneratorState dst = model::init_generator(dst_cfg, rng);
  const bool same_channels = sc.channels == dst_cfg.channels;
  for (auto& [name, t] : dst.params) {
    const bool channel_dependent = name.rfind("head.", 0) == 0 || name.rfind("meta_net.fc2.", 0) == 0;
    if (same_channels || !channel_dependent) t = src.param(name);
  }
  return dst;
}

namespace {

std::string dump_gen_config(const model::GeneratorConfig& c) {
  std::ostringstream o;
  o << "depth=" << c.depth << ";width=" << c.width << ";kernel=" << c.kernel << ";res_scale="
    << fmt_g(c.res_scale) << ";channels=" << c.channels << ";meta_hidden=" << c.meta_hidden;
  return o.str();
}

std::string dump_critic_config(const model::CriticConfig& c) {
  std::ostringstream o;
  o << "blocks=" << c.blocks << ";base_channels=" << c.base_channels << ";kernel=" << c.kernel
    << ";channels=" << c.channels << ";mode=" << c.mode;
  return o.str();
}

std::map<std::string, std::string> parse_kv(const std::string& s, const std::string& what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ';')) {
    const size_t eq = item.find('=');
    check(eq != std::string::npos, "checkpoint: malformed " + what + " entry '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

int64_t meta_i64(const io::Archive& a, const std::string& key) {
  const std::string v = a.meta(key);
  check(!v.empty(), "checkpoint: missing metadata '" + key + "'");
  return std::stoll(v);
}

}  // namespace

io::Archive state_archive(const TrainState& st, const std::string& config_dump) {
  io::Archive a;
  for (const auto& [name, t] : st.gen.params) a.put("generator/" + name, t);
  for (size_t p = 0; p < st.gen.params.size(); ++p) {
    a.put("opt/generator/" + st.gen.params[p].first + "/m", st.adam_gen.m[p]);
    a.put("opt/generator/" + st.gen.params[p].first + "/v", st.adam_gen.v[p]);
  }
  if (st.has_critic) {
    for (const auto& [name, t] : st.critic.params) a.put("critic/" + name, t);
    for (size_t p = 0; p < st.critic.params.size(); ++p) {
      a.put("opt/critic/" + st.critic.params[p].first + "/m", st.adam_critic.m[p]);
      a.put("opt/critic/" + st.critic.params[p].first + "/v", st.adam_critic.v[p]);
    }
    a.metadata["critic_config"] = dump_critic_config(st.critic.cfg);
  }
  a.metadata["format"] = kFormat;
  a.metadata["version"] = kVersion;
  a.metadata["config"] = config_dump;
  a.metadata["config_hash"] = hex64(fnv1a64(config_dump));
  a.metadata["gen_config"] = dump_gen_config(st.gen.cfg);
  a.metadata["rng"] = st.rng.save_state();
  a.metadata["step"] = std::to_string(st.step);
  a.metadata["phase_step"] = std::to_string(st.phase_step);
  a.metadata["phase"] = st.phase;
  a.metadata["skipped_guard"] = std::to_string(st.skipped_guard);
  a.metadata["skipped_nonfinite"] = std::to_string(st.skipped_nonfinite);
  a.metadata["adam_gen_t"] = std::to_string(st.adam_gen.t);
  a.metadata["adam_critic_t"] = std::to_string(st.adam_critic.t);
  return a;
}

TrainState state_from_archive(const io::Archive& a) {
  check(a.meta("format") == kFormat, "checkpoint: unrecognized format tag '" + a.meta("format") + "'");
  TrainState st;

  const auto gk = parse_kv(a.meta("gen_config"), "gen_config");
  model::GeneratorConfig gc;
  gc.depth = std::stoll(gk.at("depth"));
  gc.width = std::stoll(gk.at("width"));
  gc.kernel = std::stoll(gk.at("kernel"));
  gc.res_scale = std::stod(gk.at("res_scale"));
  gc.channels = std::stoll(gk.at("channels"));
  gc.meta_hidden = std::stoll(gk.at("meta_hidden"));
  gc.validate();

  st.gen.cfg = gc;
  for (const auto& [name, shape] : model::generator_param_shapes(gc)) {
    const Tensor& t = a.require("generator/" + name);
    check(t.shape() == shape, "checkpoint: tensor 'generator/" + name + "' has shape " + shape_str(t.shape()) +
                                  ", expected " + shape_str(shape));
    st.gen.params.emplace_back(name, t);
  }
  st.adam_gen = make_adam(st.gen.params);
  for (size_t p = 0; p < st.gen.params.size(); ++p) {
    st.adam_gen.m[p] = a.require("opt/generator/" + st.gen.params[p].first + "/m");
    st.adam_gen.v[p] = a.require("opt/generator/" + st.gen.params[p].first + "/v");
  }

  if (!a.meta("critic_config").empty()) {
    const auto ck = parse_kv(a.meta("critic_config"), "critic_config");
    model::CriticConfig cc;
    cc.blocks = std::stoll(ck.at("blocks"));
    cc.base_channels = std::stoll(ck.at("base_channels"));
    cc.kernel = std::stoll(ck.at("kernel"));
    cc.channels = std::stoll(ck.at("channels"));
    cc.mode = ck.at("mode");
    cc.validate();
    st.critic.cfg = cc;
    for (const auto& [name, shape] : model::critic_param_shapes(cc)) {
      const Tensor& t = a.require("critic/" + name);
      check(t.shape() == shape, "checkpoint: tensor 'critic/" + name + "' has shape " + shape_str(t.shape()) +
                                    ", expected " + shape_str(shape));
      st.critic.params.emplace_back(name, t);
    }
    st.adam_critic = make_adam(st.critic.params);
    for (size_t p = 0; p < st.critic.params.size(); ++p) {
      st.adam_critic.m[p] = a.require("opt/critic/" + st.critic.params[p].first + "/m");
      st.adam_critic.v[p] = a.require("opt/critic/" + st.critic.params[p].first + "/v");
    }
    st.has_critic = true;
  }

  st.rng.restore_state(a.meta("rng"));
  st.step = meta_i64(a, "step");
  st.phase_step = meta_i64(a, "phase_step");
  st.phase = a.meta("phase", "init");
  st.skipped_guard = meta_i64(a, "skipped_guard");
  st.skipped_nonfinite = meta_i64(a, "skipped_nonfinite");
  st.adam_gen.t = meta_i64(a, "adam_gen_t");
  st.adam_critic.t = meta_i64(a, "adam_critic_t");
  return st;
}

void save_checkpoint(const std::string& path, const TrainState& st, const std::string& config_dump) {
  io::write_archive_atomic(path, state_archive(st, config_dump));
}

TrainState load_checkpoint(const std::string& path) { return state_from_archive(io::read_archive(path)); }

}  // namespace miassr::train
