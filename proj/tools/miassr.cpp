// Command-line front end: data preparation, training, transfer, evaluation,
// inference and report rendering over the miassr library.

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "miassr/config.hpp"
#include "miassr/eval.hpp"
#include "miassr/image_ops.hpp"
#include "miassr/train.hpp"

namespace fs = std::filesystem;
using namespace miassr;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open '" + path + "'");
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail("cannot write '" + tmp + "'");
    f << text;
    f.flush();
    if (!f) fail("short write to '" + tmp + "'");
  }
  check(std::rename(tmp.c_str(), path.c_str()) == 0, "cannot rename '" + tmp + "' to '" + path + "'");
}

std::string fnv1a64_hex(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Exclusive run-directory lock; removed on clean exit, survives a crash so a
// stale run is visible.
class RunLock {
 public:
  explicit RunLock(const std::string& dir) : path_(dir + "/.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST)
        fail("run directory '" + dir + "' is locked (remove " + path_ + " if no run is active)");
      fail("cannot create lock '" + path_ + "': " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] ssize_t n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~RunLock() { ::unlink(path_.c_str()); }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

void write_manifest(const std::string& dir, const std::string& command, const config::RunConfig& cfg) {
  const std::string dump = config::canonical_dump(cfg);
  nlohmann::json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = dump;
  m["config_hash"] = fnv1a64_hex(dump);
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m["created"] = stamp;
  write_text_atomic(dir + "/manifest.json", m.dump(2) + "\n");
}

config::RunConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  config::RunConfig c = path.empty() ? config::default_config() : config::parse_config(path);
  if (path.empty()) c.schedule.patch = c.data.patch;
  config::apply_overrides(c, sets);
  return c;
}

std::vector<data::Volume> load_corpus(const config::RunConfig& cfg) {
  std::vector<data::Volume> vols;
  if (cfg.data.profile == "phantom") {
    vols = data::phantom_corpus(cfg.data.seed, cfg.data.phantom_count, 6, cfg.data.phantom_size,
                                cfg.data.phantom_size, cfg.model.channels);
  } else if (cfg.data.profile == "mvol") {
    for (const auto& p : cfg.data.paths) vols.push_back(data::load_mvol(p));
  } else {
    const data::DatasetProfile prof = data::profile_by_name(cfg.data.profile);
    for (const auto& p : cfg.data.paths) vols.push_back(data::load_volume(p, prof));
  }
  for (const auto& v : vols)
    check(v.channels() == cfg.model.channels,
          "volume '" + v.id + "' has " + std::to_string(v.channels()) + " channels but model.channels is " +
              std::to_string(cfg.model.channels));
  return vols;
}

model::FeatureExtractor perceptual_extractor(const config::RunConfig& cfg) {
  if (!cfg.loss.perceptual_archive.empty())
    return model::FeatureExtractor::from_archive(cfg.loss.perceptual_archive, cfg.loss.perceptual);
  return model::FeatureExtractor::desk(cfg.loss.perceptual);
}

model::FeatureExtractor eval_embedder(const config::RunConfig& cfg) {
  if (!cfg.eval.embedder_archive.empty())
    return model::FeatureExtractor::from_archive(cfg.eval.embedder_archive, cfg.eval.embedder);
  return metric::fid_embedder();
}

// ---- PGM (P5) ----------------------------------------------------------

Tensor read_pgm(const std::string& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  check(magic == "P5", "'" + path + "' is not a binary PGM (P5) file");
  auto next_int = [&in, &path]() {
    // skip whitespace and '#' comment lines between header fields
    for (;;) {
      const int c = in.peek();
      if (c == '#') {
        std::string junk;
        std::getline(in, junk);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int64_t v = -1;
    in >> v;
    check(in.good() && v >= 0, "bad PGM header in '" + path + "'");
    return v;
  };
  const int64_t W = next_int(), H = next_int(), maxval = next_int();
  check(maxval > 0 && maxval < 65536, "PGM '" + path + "': unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace before the raster
  const size_t offset = static_cast<size_t>(in.tellg());
  const int bytes_per = maxval > 255 ? 2 : 1;
  check(offset + static_cast<size_t>(W * H * bytes_per) <= bytes.size(), "PGM '" + path + "' payload truncated");
  Tensor img({1, H, W});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (int64_t i = 0; i < H * W; ++i) {
    const int64_t raw = bytes_per == 2 ? (int64_t(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
    img.data()[i] = static_cast<Scalar>(raw) / static_cast<Scalar>(maxval);
  }
  return img;
}

void write_pgm(const std::string& path, const Tensor& img) {
  check(img.ndim() == 3 && img.dim(0) == 1, "write_pgm: wants a single-channel [1,H,W] image");
  const int64_t H = img.dim(1), W = img.dim(2);
  std::ostringstream out;
  out << "P5\n" << W << " " << H << "\n65535\n";
  for (int64_t i = 0; i < H * W; ++i) {
    const double v = std::min(1.0, std::max(0.0, static_cast<double>(img.data()[i])));
    const int raw = static_cast<int>(std::lround(v * 65535.0));
    out.put(static_cast<char>((raw >> 8) & 0xff));
    out.put(static_cast<char>(raw & 0xff));
  }
  write_text_atomic(path, out.str());
}

// ---- subcommands -------------------------------------------------------

int cmd_count_params(const config::RunConfig& cfg, bool verbose) {
  const auto gshapes = model::generator_param_shapes(cfg.model);
  if (verbose)
    for (const auto& [name, shape] : gshapes)
      std::cout << "  " << name << " " << shape_str(shape) << " " << shape_numel(shape) << "\n";
  std::cout << "generator parameters: " << model::count_params(cfg.model) << "\n";
  int64_t critic_total = 0;
  for (const auto& [name, shape] : model::critic_param_shapes(cfg.critic_config())) {
    if (verbose) std::cout << "  " << name << " " << shape_str(shape) << " " << shape_numel(shape) << "\n";
    critic_total += shape_numel(shape);
  }
  std::cout << "critic parameters: " << critic_total << "\n";
  return 0;
}

int cmd_prepare_data(const config::RunConfig& cfg, const std::string& out_dir, int64_t group) {
  RunLock lock(out_dir);
  std::vector<data::Volume> vols;
  if (cfg.data.profile == "phantom" || cfg.data.profile == "mvol") {
    vols = load_corpus(cfg);
  } else {
    const data::DatasetProfile prof = data::profile_by_name(cfg.data.profile);
    if (group > 1) {
      check(cfg.data.paths.size() % static_cast<size_t>(group) == 0,
            "data.paths count is not a multiple of --group");
      for (size_t i = 0; i < cfg.data.paths.size(); i += group) {
        std::vector<std::string> part(cfg.data.paths.begin() + i, cfg.data.paths.begin() + i + group);
        vols.push_back(data::load_volume_multi(part, prof));
      }
    } else {
      for (const auto& p : cfg.data.paths) vols.push_back(data::load_volume(p, prof));
    }
  }
  std::string index;
  for (size_t i = 0; i < vols.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "volume-%03zu.mvol", i);
    data::write_mvol(out_dir + "/" + name, vols[i]);
    index += std::string(name) + "\n";
    std::cout << name << "  [" << vols[i].slices() << "," << vols[i].channels() << "," << vols[i].height()
              << "," << vols[i].width() << "]  " << vols[i].id << "\n";
  }
  write_text_atomic(out_dir + "/corpus.txt", index);
  write_manifest(out_dir, "prepare-data", cfg);
  std::cout << "wrote " << vols.size() << " volumes to " << out_dir << "\n";
  return 0;
}

// Runs `steps` of the given phase with periodic checkpoints per the schedule.
template <typename Phase>
void run_phase(train::TrainState& st, const config::RunConfig& cfg, const std::string& dir, int64_t steps,
               std::ofstream& log_file, const Phase& phase) {
  const std::string dump = config::canonical_dump(cfg);
  train::LogSink sink = [&log_file](const train::StepLog& row) { log_file << train::csv_row(row) << "\n"; };
  const int64_t every = cfg.schedule.checkpoint_every;
  while (steps > 0) {
    const int64_t chunk = every > 0 ? std::min(steps, every) : steps;
    phase(st, chunk, sink);
    log_file.flush();
    steps -= chunk;
    if (every > 0 && steps > 0)
      train::save_checkpoint(dir + "/step_" + std::to_string(st.step) + ".mckpt", st, dump);
  }
}

int cmd_train(const config::RunConfig& cfg, const std::string& out_dir, const std::string& resume) {
  RunLock lock(out_dir);
  write_manifest(out_dir, "train", cfg);
  const std::string dump = config::canonical_dump(cfg);
  const auto vols = load_corpus(cfg);
  const train::TrainSchedule& sched = cfg.schedule;

  train::TrainState st;
  if (!resume.empty()) {
    st = train::load_checkpoint(resume);
    std::cout << "resumed from " << resume << " at step " << st.step << " (" << st.phase << ")\n";
  } else {
    st = train::init_train_state(cfg.model, sched);
  }
  if (cfg.loss.gamma > 0 && !st.has_critic) attach_critic(st, cfg.critic_config(), sched.seed);

  std::ofstream log_file(out_dir + "/train_log.csv", resume.empty() ? std::ios::trunc : std::ios::app);
  check(static_cast<bool>(log_file), "cannot open train log in '" + out_dir + "'");
  if (resume.empty()) log_file << train::csv_header() << "\n";

  const int64_t warm_done = st.phase == "warmup" ? st.phase_step : (st.phase == "init" ? 0 : sched.warmup_steps);
  const int64_t warm_left = std::max<int64_t>(0, sched.warmup_steps - warm_done);
  if (warm_left > 0) {
    std::cout << "warm-up: " << warm_left << " steps\n";
    run_phase(st, cfg, out_dir, warm_left, log_file,
              [&vols, &sched](train::TrainState& s, int64_t n, const train::LogSink& sink) {
                train::warmup_train(s, vols, sched, n, sink);
              });
  }
  if (st.phase == "warmup" || st.phase == "init")
    train::save_checkpoint(out_dir + "/warmup.mckpt", st, dump);

  const int64_t adv_done = st.phase == "adversarial" ? st.phase_step : 0;
  const int64_t adv_left = std::max<int64_t>(0, sched.adv_steps - adv_done);
  if (adv_left > 0) {
    train::LossOptions opts;
    opts.weights = cfg.loss_weights();
    opts.kind = loss::parse_adv_kind(cfg.loss.variant);
    model::FeatureExtractor fx;
    if (cfg.loss.eta > 0) {
      fx = perceptual_extractor(cfg);
      opts.perceptual = &fx;
    }
    std::cout << "adversarial (" << cfg.loss.variant << "): " << adv_left << " steps\n";
    run_phase(st, cfg, out_dir, adv_left, log_file,
              [&vols, &sched, &opts](train::TrainState& s, int64_t n, const train::LogSink& sink) {
                train::adversarial_train(s, vols, sched, opts, n, sink);
              });
    train::save_checkpoint(out_dir + "/adversarial.mckpt", st, dump);
  }

  train::save_checkpoint(out_dir + "/final.mckpt", st, dump);
  std::cout << "done at step " << st.step << "; skipped " << st.skipped_guard << " guard / "
            << st.skipped_nonfinite << " non-finite updates\n";
  std::cout << "final checkpoint: " << out_dir << "/final.mckpt\n";
  return 0;
}

int cmd_finetune(const config::RunConfig& cfg, const std::string& from, const std::string& out_dir) {
  RunLock lock(out_dir);
  write_manifest(out_dir, "finetune", cfg);
  const std::string dump = config::canonical_dump(cfg);
  const auto vols = load_corpus(cfg);
  const train::TrainSchedule& sched = cfg.schedule;

  train::TrainState src = train::load_checkpoint(from);
  train::TrainState st = train::init_train_state(cfg.model, sched);
  Rng reinit(sched.seed ^ 0xf17ef17ef17ef17eull);
  st.gen = train::transfer_generator(src.gen, cfg.model, reinit);
  std::cout << "transferred trunk from " << from << " (" << src.gen.cfg.channels << " -> "
            << cfg.model.channels << " channels)\n";

  std::ofstream log_file(out_dir + "/train_log.csv", std::ios::trunc);
  check(static_cast<bool>(log_file), "cannot open train log in '" + out_dir + "'");
  log_file << train::csv_header() << "\n";
  run_phase(st, cfg, out_dir, sched.finetune_steps, log_file,
            [&vols, &sched](train::TrainState& s, int64_t n, const train::LogSink& sink) {
              train::warmup_train(s, vols, sched, n, sink);
            });
  train::save_checkpoint(out_dir + "/final.mckpt", st, dump);
  std::cout << "fine-tuned " << sched.finetune_steps << " steps; final checkpoint: " << out_dir
            << "/final.mckpt\n";
  return 0;
}

int cmd_evaluate(const config::RunConfig& cfg, const std::string& ckpt, const std::string& baseline,
                 bool updown, const std::string& train_ids_path, const std::string& out_dir) {
  RunLock lock(out_dir);
  write_manifest(out_dir, "evaluate", cfg);
  const auto vols = load_corpus(cfg);

  eval::EvalPlan plan;
  plan.scale_grid = cfg.eval_grid();
  plan.max_slices = cfg.eval.max_slices;
  plan.with_fid = std::count(cfg.eval.metrics.begin(), cfg.eval.metrics.end(), "fid") > 0;
  plan.dataset = cfg.data.profile;
  if (!train_ids_path.empty()) {
    std::istringstream in(read_file(train_ids_path));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) plan.train_ids.push_back(line);
  }

  train::TrainState st;
  eval::SrFn fn;
  if (!baseline.empty()) {
    check(baseline == "bicubic", "unknown baseline '" + baseline + "' (expected bicubic)");
    fn = eval::bicubic_model();
    plan.checkpoint_id = "baseline:bicubic";
  } else {
    check(!ckpt.empty(), "evaluate needs --checkpoint or --baseline");
    st = train::load_checkpoint(ckpt);
    check(st.gen.cfg.channels == cfg.model.channels,
          "checkpoint channels do not match model.channels in the config");
    plan.checkpoint_id = ckpt;
    if (updown) {
      eval::FixedScaleHandle h;
      h.scales = {2, 3, 4};
      eval::SrFn base = eval::generator_model(st.gen);
      h.apply = [base](const Tensor& lr, int64_t s) { return base(lr, static_cast<double>(s)); };
      fn = eval::up_and_down_model(std::move(h));
      plan.checkpoint_id += " (fixed-scale wrap)";
    } else {
      fn = eval::generator_model(st.gen);
    }
  }

  model::FeatureExtractor fx;
  const model::FeatureExtractor* fxp = nullptr;
  if (plan.with_fid) {
    fx = eval_embedder(cfg);
    fxp = &fx;
  }
  const eval::MetricReport report = eval::evaluate(plan, vols, fn, fxp);
  eval::render_report(report, out_dir);
  std::cout << eval::report_csv(report);
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& output, double scale) {
  check(scale > 1.0 && scale <= 4.0, "scale must lie in (1,4]");
  train::TrainState st = train::load_checkpoint(ckpt);
  eval::SrFn fn = eval::generator_model(st.gen);
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with(input, ".mvol")) {
    const data::Volume v = data::load_mvol(input);
    check(v.channels() == st.gen.cfg.channels, "volume channels do not match the checkpoint");
    const int64_t oh = img::scaled_size(v.height(), scale), ow = img::scaled_size(v.width(), scale);
    data::Volume out;
    out.modalities = v.modalities;
    out.id = v.id + ":sr";
    out.voxels = Tensor({v.slices(), v.channels(), oh, ow});
    for (int64_t s = 0; s < v.slices(); ++s) {
      const Tensor sr = fn(v.slice(s), scale);
      std::copy(sr.data(), sr.data() + sr.numel(), out.voxels.data() + s * sr.numel());
      std::cout << "slice " << s << ": " << v.height() << "x" << v.width() << " -> " << oh << "x" << ow
                << "\n";
    }
    data::write_mvol(output, out);
  } else {
    check(st.gen.cfg.channels == 1, "PGM input wants a single-channel model; use an .mvol volume instead");
    const Tensor lr = read_pgm(input);
    const Tensor sr = fn(lr, scale);
    write_pgm(output, sr);
    std::cout << lr.dim(1) << "x" << lr.dim(2) << " -> " << sr.dim(1) << "x" << sr.dim(2) << "\n";
  }
  std::cout << "wrote " << output << "\n";
  return 0;
}

// Minimal reader for report.csv files produced by evaluate.
eval::MetricReport parse_report_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "empty report '" + path + "'");
  check(line.rfind("scale,psnr,ssim,fid", 0) == 0, "'" + path + "' is not an evaluation report");
  eval::MetricReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    eval::ScaleRow sr;
    const bool mean_row = cell == "mean";
    if (!mean_row) sr.scale = std::stod(cell);
    std::getline(row, cell, ',');
    sr.psnr = std::stod(cell);
    std::getline(row, cell, ',');
    sr.ssim = std::stod(cell);
    std::getline(row, cell, ',');
    sr.fid = std::stod(cell);
    if (mean_row)
      r.mean = sr;
    else
      r.rows.push_back(sr);
  }
  check(!r.rows.empty(), "report '" + path + "' has no scale rows");
  return r;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir) {
  RunLock lock(out_dir);
  std::vector<std::pair<std::string, eval::MetricReport>> parsed;
  for (const std::string& spec : runs) {
    const size_t eq = spec.find('=');
    check(eq != std::string::npos, "--run wants label=path/to/report.csv, got '" + spec + "'");
    parsed.emplace_back(spec.substr(0, eq), parse_report_csv(spec.substr(eq + 1)));
  }
  for (const std::string metric : {"psnr", "ssim", "fid"}) {
    const std::string table = eval::comparison_csv(parsed, metric);
    write_text_atomic(out_dir + "/comparison_" + metric + ".csv", table);
  }
  std::cout << "wrote comparison tables for " << parsed.size() << " runs to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arbitrary-scale single-image super-resolution for medical volumes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_dir, resume, from, ckpt, baseline, input, output, train_ids;
  std::vector<std::string> sets, runs;
  double scale = 2.0;
  int64_t group = 1;
  bool verbose = false, updown = false;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "config file (dotted key = value lines)");
    sub->add_option("--set", sets, "override, key=value (repeatable)");
  };

  CLI::App* cp = app.add_subcommand("count-params", "print generator and critic parameter counts");
  add_config(cp);
  cp->add_flag("-v,--verbose", verbose, "per-tensor breakdown");

  CLI::App* pd = app.add_subcommand("prepare-data", "materialize the training corpus as .mvol files");
  add_config(pd);
  pd->add_option("-o,--out", out_dir, "output directory")->required();
  pd->add_option("--group", group, "modality files per volume (stacked on the channel axis)");

  CLI::App* tr = app.add_subcommand("train", "warm-up then adversarial training");
  add_config(tr);
  tr->add_option("-o,--out", out_dir, "run directory for logs and checkpoints")->required();
  tr->add_option("--resume", resume, "continue from a saved checkpoint");

  CLI::App* ft = app.add_subcommand("finetune", "transfer a trained trunk to a new modality");
  add_config(ft);
  ft->add_option("--from", from, "source checkpoint")->required();
  ft->add_option("-o,--out", out_dir, "run directory")->required();

  CLI::App* ev = app.add_subcommand("evaluate", "score a checkpoint over the evaluation grid");
  add_config(ev);
  ev->add_option("--checkpoint", ckpt, "checkpoint to evaluate");
  ev->add_option("--baseline", baseline, "evaluate a no-weights baseline (bicubic) instead");
  ev->add_flag("--fixed-scale-wrap", updown,
               "wrap the model: integer-scale output, bicubic-resized to the target size");
  ev->add_option("--train-ids", train_ids, "file listing training volume ids (disjointness check)");
  ev->add_option("-o,--out", out_dir, "report directory")->required();

  CLI::App* in = app.add_subcommand("infer", "super-resolve one PGM image or .mvol volume");
  in->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  in->add_option("-i,--input", input, "input .pgm or .mvol")->required();
  in->add_option("-s,--scale", scale, "upscale factor in (1,4]")->required();
  in->add_option("-o,--output", output, "output path (format follows the input)")->required();

  CLI::App* rp = app.add_subcommand("report", "merge evaluation reports into comparison tables");
  rp->add_option("--run", runs, "label=path/to/report.csv (repeatable)")->required();
  rp->add_option("-o,--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cp->parsed()) return cmd_count_params(load_config(config_path, sets), verbose);
    if (pd->parsed()) return cmd_prepare_data(load_config(config_path, sets), out_dir, group);
    if (tr->parsed()) return cmd_train(load_config(config_path, sets), out_dir, resume);
    if (ft->parsed()) return cmd_finetune(load_config(config_path, sets), from, out_dir);
    if (ev->parsed())
      return cmd_evaluate(load_config(config_path, sets), ckpt, baseline, updown, train_ids, out_dir);
    if (in->parsed()) return cmd_infer(ckpt, input, output, scale);
    if (rp->parsed()) return cmd_report(runs, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "miassr: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
