#include "miassr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace miassr::config {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// shortest exact decimal form; round-trips through parse
std::string fmt_real(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  check(ec == std::errc(), "config: cannot format real value");
  return std::string(buf, p);
}

int64_t to_i64(const std::string& v, const std::string& key) {
  int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  check(ec == std::errc() && p == v.data() + v.size(),
        "config: key '" + key + "' wants an integer, got '" + v + "'");
  return out;
}

uint64_t to_u64(const std::string& v, const std::string& key) {
  uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  check(ec == std::errc() && p == v.data() + v.size(),
        "config: key '" + key + "' wants a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    check(used == v.size(), "");
    return out;
  } catch (...) {
    fail("config: key '" + key + "' wants a real number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config: key '" + key + "' wants true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_real_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const std::string& item : split_list(v)) out.push_back(to_real(item, key));
  return out;
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_real(v[i]);
  return out;
}

std::string join_strs(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

void apply(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "critic.base_channels") c.critic.base_channels = to_i64(value, key);
  else if (key == "critic.blocks") c.critic.blocks = to_i64(value, key);
  else if (key == "critic.kernel") c.critic.kernel = to_i64(value, key);
  else if (key == "critic.mode") c.critic.mode = value;
  else if (key == "data.patch") c.data.patch = to_i64(value, key);
  else if (key == "data.paths") c.data.paths = split_list(value);
  else if (key == "data.phantom_count") c.data.phantom_count = to_i64(value, key);
  else if (key == "data.phantom_size") c.data.phantom_size = to_i64(value, key);
  else if (key == "data.profile") c.data.profile = value;
  else if (key == "data.seed") c.data.seed = to_u64(value, key);
  else if (key == "eval.embedder") c.eval.embedder = value;
  else if (key == "eval.embedder_archive") c.eval.embedder_archive = value;
  else if (key == "eval.max_slices") c.eval.max_slices = to_i64(value, key);
  else if (key == "eval.metrics") c.eval.metrics = split_list(value);
  else if (key == "eval.scales") c.eval.scales = to_real_list(value, key);
  else if (key == "loss.eta") c.loss.eta = to_real(value, key);
  else if (key == "loss.gamma") c.loss.gamma = to_real(value, key);
  else if (key == "loss.gp_weight") c.loss.gp_weight = to_real(value, key);
  else if (key == "loss.lambda") c.loss.lambda = to_real(value, key);
  else if (key == "loss.perceptual") c.loss.perceptual = value;
  else if (key == "loss.perceptual_archive") c.loss.perceptual_archive = value;
  else if (key == "loss.variant") c.loss.variant = value;
  else if (key == "model.channels") c.model.channels = to_i64(value, key);
  else if (key == "model.depth") c.model.depth = to_i64(value, key);
  else if (key == "model.kernel") c.model.kernel = to_i64(value, key);
  else if (key == "model.meta_hidden") c.model.meta_hidden = to_i64(value, key);
  else if (key == "model.res_scale") c.model.res_scale = to_real(value, key);
  else if (key == "model.width") c.model.width = to_i64(value, key);
  else if (key == "schedule.adv_steps") c.schedule.adv_steps = to_i64(value, key);
  else if (key == "schedule.batch_size") c.schedule.batch_size = to_i64(value, key);
  else if (key == "schedule.beta1") c.schedule.beta1 = to_real(value, key);
  else if (key == "schedule.beta2") c.schedule.beta2 = to_real(value, key);
  else if (key == "schedule.checkpoint_every") c.schedule.checkpoint_every = to_i64(value, key);
  else if (key == "schedule.finetune_steps") c.schedule.finetune_steps = to_i64(value, key);
  else if (key == "schedule.log_every") c.schedule.log_every = to_i64(value, key);
  else if (key == "schedule.loss_guard") c.schedule.loss_guard = to_real(value, key);
  else if (key == "schedule.lr0") c.schedule.lr0 = to_real(value, key);
  else if (key == "schedule.lr_halving_period") c.schedule.lr_halving_period = to_i64(value, key);
  else if (key == "schedule.n_critic") c.schedule.n_critic = to_i64(value, key);
  else if (key == "schedule.scale_continuous") c.schedule.scale_continuous = to_bool(value, key);
  else if (key == "schedule.scale_grid") c.schedule.scale_grid = to_real_list(value, key);
  else if (key == "schedule.seed") c.schedule.seed = to_u64(value, key);
  else if (key == "schedule.warmup_steps") c.schedule.warmup_steps = to_i64(value, key);
  else if (key == "schedule.wgan_clip") c.schedule.wgan_clip = to_real(value, key);
  else fail("config: unknown key '" + key + "'");
}

// ordered (key, value) pairs from file text; values may be sweep lists
std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno += 1;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos,
          "config: " + origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "config: " + origin + ":" + std::to_string(lineno) + ": empty key");
    check(seen.insert(key).second, "config: duplicate key '" + key + "'");
    pairs.emplace_back(key, value);
  }
  return pairs;
}

bool is_sweep_value(const std::string& v) { return !v.empty() && v.front() == '{'; }

std::vector<std::string> sweep_values(const std::string& v, const std::string& key) {
  check(v.size() >= 2 && v.front() == '{' && v.back() == '}',
        "config: key '" + key + "' has a malformed sweep list '" + v + "'");
  std::vector<std::string> out = split_list(v.substr(1, v.size() - 2));
  check(!out.empty(), "config: key '" + key + "' has an empty sweep list");
  return out;
}

const std::set<std::string> kProfiles = {"phantom", "oasis", "brats", "acdc", "covid_ct", "mvol"};
const std::set<std::string> kVariants = {"vanilla", "wgan", "wgangp", "ragan"};
const std::set<std::string> kDeskTags = {"desk-shallow", "desk-mid", "desk-deep"};
const std::set<std::string> kMetrics = {"psnr", "ssim", "fid"};

void req(bool ok, const std::string& msg) { check(ok, "config: " + msg); }

}  // namespace

void RunConfig::validate() const {
  req(model.depth >= 0, "model.depth must be non-negative");
  req(model.width >= 1, "model.width must be positive");
  req(model.kernel >= 1 && model.kernel % 2 == 1, "model.kernel must be odd and positive");
  req(std::isfinite(model.res_scale) && model.res_scale > 0, "model.res_scale must be positive");
  req(model.channels >= 1, "model.channels must be positive");
  req(model.meta_hidden >= 1, "model.meta_hidden must be positive");

  req(critic.blocks >= 1, "critic.blocks must be positive");
  req(critic.base_channels >= 1, "critic.base_channels must be positive");
  req(critic.kernel >= 1 && critic.kernel % 2 == 1, "critic.kernel must be odd and positive");
  req(critic.mode == "critic" || critic.mode == "classifier", "critic.mode must be 'critic' or 'classifier'");

  req(kProfiles.count(data.profile) > 0, "data.profile '" + data.profile + "' is not a known profile");
  req(data.patch >= 4, "data.patch must be at least 4");
  req(data.phantom_count >= 1, "data.phantom_count must be positive");
  req(data.phantom_size >= 32, "data.phantom_size must be at least 32");
  req(data.profile == "phantom" || !data.paths.empty(),
      "data.paths is required for profile '" + data.profile + "'");

  req(std::isfinite(loss.lambda) && loss.lambda >= 0, "loss.lambda must be finite and non-negative");
  req(std::isfinite(loss.gamma) && loss.gamma >= 0, "loss.gamma must be finite and non-negative");
  req(std::isfinite(loss.eta) && loss.eta >= 0, "loss.eta must be finite and non-negative");
  req(std::isfinite(loss.gp_weight) && loss.gp_weight >= 0, "loss.gp_weight must be finite and non-negative");
  req(kVariants.count(loss.variant) > 0,
      "loss.variant must be one of vanilla, wgan, wgangp, ragan; got '" + loss.variant + "'");
  req(!loss.perceptual_archive.empty() || kDeskTags.count(loss.perceptual) > 0,
      "loss.perceptual '" + loss.perceptual + "' is not a built-in tag and no loss.perceptual_archive is given");

  req(schedule.warmup_steps >= 0, "schedule.warmup_steps must be non-negative");
  req(schedule.adv_steps >= 0, "schedule.adv_steps must be non-negative");
  req(schedule.finetune_steps >= 0, "schedule.finetune_steps must be non-negative");
  req(schedule.batch_size >= 1, "schedule.batch_size must be positive");
  req(std::isfinite(schedule.lr0) && schedule.lr0 > 0, "schedule.lr0 must be positive");
  req(schedule.lr_halving_period >= 1, "schedule.lr_halving_period must be positive");
  req(schedule.beta1 >= 0 && schedule.beta1 < 1, "schedule.beta1 must lie in [0,1)");
  req(schedule.beta2 >= 0 && schedule.beta2 < 1, "schedule.beta2 must lie in [0,1)");
  req(std::isfinite(schedule.loss_guard) && schedule.loss_guard >= 0,
      "schedule.loss_guard must be finite and non-negative");
  for (double s : schedule.scale_grid)
    req(s > 1.0 && s <= 4.0, "schedule.scale_grid entry " + fmt_real(s) + " outside (1,4]");
  req(schedule.n_critic >= 1, "schedule.n_critic must be positive");
  req(schedule.wgan_clip >= 0, "schedule.wgan_clip must be non-negative");
  req(schedule.log_every >= 1, "schedule.log_every must be positive");
  req(schedule.checkpoint_every >= 0, "schedule.checkpoint_every must be non-negative");

  for (double s : eval.scales) req(s > 1.0 && s <= 4.0, "eval.scales entry " + fmt_real(s) + " outside (1,4]");
  for (const std::string& m : eval.metrics)
    req(kMetrics.count(m) > 0, "eval.metrics entry '" + m + "' is not psnr, ssim or fid");
  req(!eval.metrics.empty(), "eval.metrics must not be empty");
  req(eval.max_slices >= 0, "eval.max_slices must be non-negative");
  req(!eval.embedder_archive.empty() || eval.embedder == "seeded-small-conv",
      "eval.embedder '" + eval.embedder + "' needs an eval.embedder_archive");

  model.validate();
  critic_config().validate();
  schedule.validate();
}

model::CriticConfig RunConfig::critic_config() const {
  model::CriticConfig cc;
  cc.blocks = critic.blocks;
  cc.base_channels = critic.base_channels;
  cc.kernel = critic.kernel;
  cc.channels = model.channels;
  cc.mode = critic.mode;
  return cc;
}

loss::LossWeights RunConfig::loss_weights() const {
  loss::LossWeights w;
  w.lambda = loss.lambda;
  w.gamma = loss.gamma;
  w.eta = loss.eta;
  w.gp_weight = loss.gp_weight;
  return w;
}

std::vector<double> RunConfig::eval_grid() const {
  return eval.scales.empty() ? train::default_scale_grid() : eval.scales;
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig c;
  for (const auto& [key, value] : read_pairs(text, origin)) {
    check(!is_sweep_value(value),
          "config: key '" + key + "' holds a sweep list; load this file with the sweep parser");
    apply(c, key, value);
  }
  c.schedule.patch = c.data.patch;
  c.validate();
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

void apply_overrides(RunConfig& c, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const size_t eq = a.find('=');
    check(eq != std::string::npos, "config: override '" + a + "' is not of the form key=value");
    apply(c, trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
  c.schedule.patch = c.data.patch;
  c.validate();
}

std::vector<RunConfig> parse_sweep_text(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> fixed;
  std::map<std::string, std::vector<std::string>> axes;  // ordered by key path
  for (const auto& [key, value] : read_pairs(text, origin)) {
    if (is_sweep_value(value)) axes[key] = sweep_values(value, key);
    else fixed.emplace_back(key, value);
  }

  std::vector<std::map<std::string, std::string>> grids{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& g : grids)
      for (const std::string& v : values) {
        auto g2 = g;
        g2[key] = v;
        next.push_back(std::move(g2));
      }
    grids = std::move(next);
  }

  std::vector<RunConfig> out;
  for (const auto& g : grids) {
    RunConfig c;
    for (const auto& [key, value] : fixed) apply(c, key, value);
    for (const auto& [key, value] : g) apply(c, key, value);
    c.schedule.patch = c.data.patch;
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RunConfig> parse_sweep(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_sweep_text(text, path);
}

std::string canonical_dump(const RunConfig& c) {
  std::ostringstream o;
  o << "critic.base_channels = " << c.critic.base_channels << "\n";
  o << "critic.blocks = " << c.critic.blocks << "\n";
  o << "critic.kernel = " << c.critic.kernel << "\n";
  o << "critic.mode = " << c.critic.mode << "\n";
  o << "data.patch = " << c.data.patch << "\n";
  o << "data.paths = " << join_strs(c.data.paths) << "\n";
  o << "data.phantom_count = " << c.data.phantom_count << "\n";
  o << "data.phantom_size = " << c.data.phantom_size << "\n";
  o << "data.profile = " << c.data.profile << "\n";
  o << "data.seed = " << c.data.seed << "\n";
  o << "eval.embedder = " << c.eval.embedder << "\n";
  o << "eval.embedder_archive = " << c.eval.embedder_archive << "\n";
  o << "eval.max_slices = " << c.eval.max_slices << "\n";
  o << "eval.metrics = " << join_strs(c.eval.metrics) << "\n";
  o << "eval.scales = " << join_reals(c.eval.scales) << "\n";
  o << "loss.eta = " << fmt_real(c.loss.eta) << "\n";
  o << "loss.gamma = " << fmt_real(c.loss.gamma) << "\n";
  o << "loss.gp_weight = " << fmt_real(c.loss.gp_weight) << "\n";
  o << "loss.lambda = " << fmt_real(c.loss.lambda) << "\n";
  o << "loss.perceptual = " << c.loss.perceptual << "\n";
  o << "loss.perceptual_archive = " << c.loss.perceptual_archive << "\n";
  o << "loss.variant = " << c.loss.variant << "\n";
  o << "model.channels = " << c.model.channels << "\n";
  o << "model.depth = " << c.model.depth << "\n";
  o << "model.kernel = " << c.model.kernel << "\n";
  o << "model.meta_hidden = " << c.model.meta_hidden << "\n";
  o << "model.res_scale = " << fmt_real(c.model.res_scale) << "\n";
  o << "model.width = " << c.model.width << "\n";
  o << "schedule.adv_steps = " << c.schedule.adv_steps << "\n";
  o << "schedule.batch_size = " << c.schedule.batch_size << "\n";
  o << "schedule.beta1 = " << fmt_real(c.schedule.beta1) << "\n";
  o << "schedule.beta2 = " << fmt_real(c.schedule.beta2) << "\n";
  o << "schedule.checkpoint_every = " << c.schedule.checkpoint_every << "\n";
  o << "schedule.finetune_steps = " << c.schedule.finetune_steps << "\n";
  o << "schedule.log_every = " << c.schedule.log_every << "\n";
  o << "schedule.loss_guard = " << fmt_real(c.schedule.loss_guard) << "\n";
  o << "schedule.lr0 = " << fmt_real(c.schedule.lr0) << "\n";
  o << "schedule.lr_halving_period = " << c.schedule.lr_halving_period << "\n";
  o << "schedule.n_critic = " << c.schedule.n_critic << "\n";
  o << "schedule.scale_continuous = " << (c.schedule.scale_continuous ? "true" : "false") << "\n";
  o << "schedule.scale_grid = " << join_reals(c.schedule.scale_grid) << "\n";
  o << "schedule.seed = " << c.schedule.seed << "\n";
  o << "schedule.warmup_steps = " << c.schedule.warmup_steps << "\n";
  o << "schedule.wgan_clip = " << fmt_real(c.schedule.wgan_clip) << "\n";
  return o.str();
}

}  // namespace miassr::config
