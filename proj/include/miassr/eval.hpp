#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "miassr/generator.hpp"
#include "miassr/metrics.hpp"
#include "miassr/volume.hpp"

namespace miassr::eval {

// An SR method under test: [C,H,W] in [0,1] plus a scale, returning the
// clamped [C,floor(sH),floor(sW)] reconstruction.
using SrFn = std::function<Tensor(const Tensor& lr, double s)>;

struct EvalPlan {
  std::vector<double> scale_grid;       // each in (1,4]
  std::vector<std::string> train_ids;   // volumes the model saw; overlap with test ids is an error
  int64_t max_slices = 0;               // per volume; 0 = all
  bool with_fid = true;
  // Sanity mode: skip degradation and hand the model the ground truth itself;
  // an identity model then has to score PSNR +inf / SSIM 1 / FID 0 everywhere.
  bool identity_sanity = false;
  std::string dataset;                  // metadata labels
  std::string checkpoint_id;

  void validate() const;
};

struct ScaleRow {
  double scale = 0;
  double psnr = 0, ssim = 0, fid = 0;           // means across modalities
  std::vector<double> psnr_mod, ssim_mod, fid_mod;  // per modality
};

struct MetricReport {
  std::vector<ScaleRow> rows;  // one per grid scale, grid order
  ScaleRow mean;               // arithmetic mean over rows (scale field unused)
  std::vector<std::string> modalities;
  std::map<std::string, std::string> metadata;
};

// Degrades every test slice at every grid scale, runs the model, and scores
// PSNR/SSIM per slice pair (averaged) plus one FID per scale over the SR and
// ground-truth slice sets.  Model state is never touched.
MetricReport evaluate(const EvalPlan& plan, const std::vector<data::Volume>& test, const SrFn& model,
                      const model::FeatureExtractor* embedder = nullptr);

// Fixed-scale model adapter: super-resolve at ceil(s), then bicubic-resize to
// the (floor(sH), floor(sW)) target.  At integer s this is bit-identical to
// the wrapped model's direct output.
struct FixedScaleHandle {
  std::vector<int64_t> scales;  // declared integer scales, e.g. {2,3,4}
  std::function<Tensor(const Tensor& lr, int64_t s)> apply;
};
Tensor up_and_down(const FixedScaleHandle& h, const Tensor& lr, double s);

// Plain clamped bicubic upscale, the no-weights baseline.
Tensor bicubic_baseline(const Tensor& lr, double s);

// Wrappers turning things into SrFn.
SrFn generator_model(const model::GeneratorState& st);
SrFn bicubic_model();
SrFn up_and_down_model(FixedScaleHandle h);

// Deterministic serialization: same report -> same bytes.
std::string report_csv(const MetricReport& r);
std::string report_meta_json(const MetricReport& r);
// One aligned scale axis, one column per named run, "nan" where a run lacks
// the scale.  metric is "psnr", "ssim" or "fid".
std::string comparison_csv(const std::vector<std::pair<std::string, MetricReport>>& runs,
                           const std::string& metric);

// Writes report.csv, report_meta.json and per-metric plot_<metric>.csv under
// dir (which must exist).
void render_report(const MetricReport& r, const std::string& dir);

}  // namespace miassr::eval
