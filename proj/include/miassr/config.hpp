#pragma once

#include <string>
#include <vector>

#include "miassr/critic.hpp"
#include "miassr/generator.hpp"
#include "miassr/losses.hpp"
#include "miassr/train.hpp"

namespace miassr::config {

// One run, fully described.  The file format is plain text, one dotted
// `section.key = value` per line, `#` comments.  Unknown keys and
// out-of-range values are rejected with the offending key path; an empty file
// means all defaults.
struct RunConfig {
  model::GeneratorConfig model;

  struct Critic {
    int64_t blocks = 7;
    int64_t base_channels = 64;
    int64_t kernel = 3;
    std::string mode = "critic";
  } critic;

  struct Data {
    std::string profile = "phantom";  // phantom | oasis | brats | acdc | covid_ct | mvol
    std::vector<std::string> paths;   // volume files for non-phantom profiles
    int64_t patch = 96;               // HR patch budget H_p
    int64_t phantom_count = 8;
    int64_t phantom_size = 96;
    uint64_t seed = 7;                // corpus synthesis seed
  } data;

  struct Loss {
    double lambda = 1.0;
    double gamma = 0.001;
    double eta = 0.006;
    double gp_weight = 10.0;
    std::string variant = "wgangp";
    std::string perceptual = "desk-deep";  // feature tag for the perceptual term
    std::string perceptual_archive;        // external conv stack; empty = built-in
  } loss;

  train::TrainSchedule schedule;  // schedule.patch/seed filled from data.patch & schedule.seed

  struct Eval {
    std::vector<double> scales;  // empty = the training default grid
    std::vector<std::string> metrics = {"psnr", "ssim", "fid"};
    int64_t max_slices = 0;
    std::string embedder = "seeded-small-conv";  // or "inception-v3-pool3" etc. with an archive
    std::string embedder_archive;
  } eval;

  void validate() const;  // every message names the offending key path

  model::CriticConfig critic_config() const;  // channels follow model.channels
  loss::LossWeights loss_weights() const;
  std::vector<double> eval_grid() const;
};

RunConfig default_config();

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config(const std::string& path);

// Command-line overrides: each assignment is "key=value" with the same keys
// as the file format.  Applied in order on top of c, then re-validated.
void apply_overrides(RunConfig& c, const std::vector<std::string>& assignments);

// Canonical form: every key, fixed order, exact value formatting.  Parsing a
// dump reproduces the config; two equal configs dump to identical bytes.
std::string canonical_dump(const RunConfig& c);

// A value of the form {a, b, c} declares a sweep axis; the file expands to
// the cross product over all such axes (ordered by key path).  A sweep-free
// file yields exactly one config.
std::vector<RunConfig> parse_sweep_text(const std::string& text, const std::string& origin = "<config>");
std::vector<RunConfig> parse_sweep(const std::string& path);

}  // namespace miassr::config
