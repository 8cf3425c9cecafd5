#include "miassr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "miassr/image_ops.hpp"

namespace miassr::eval {

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor center_crop(const Tensor& img, int64_t oh, int64_t ow) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  check(oh <= H && ow <= W, "eval: crop larger than the slice");
  const int64_t y0 = (H - oh) / 2, x0 = (W - ow) / 2;
  Tensor out({C, oh, ow});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < oh; ++y)
      std::copy(img.data() + (c * H + y0 + y) * W + x0, img.data() + (c * H + y0 + y) * W + x0 + ow,
                out.data() + (c * oh + y) * ow);
  return out;
}

Tensor plane_of(const Tensor& img, int64_t c) {
  const int64_t H = img.dim(1), W = img.dim(2);
  Tensor out({H, W});
  std::copy(img.data() + c * H * W, img.data() + (c + 1) * H * W, out.data());
  return out;
}

}  // namespace

void EvalPlan::validate() const {
  check(!scale_grid.empty(), "eval: empty scale grid");
  for (double s : scale_grid)
    check(s > 1.0 && s <= 4.0, "eval: scale " + fmt9(s) + " outside (1,4]");
  check(max_slices >= 0, "eval: max_slices must be non-negative");
}

MetricReport evaluate(const EvalPlan& plan, const std::vector<data::Volume>& test, const SrFn& model,
                      const model::FeatureExtractor* embedder) {
  plan.validate();
  check(!test.empty(), "eval: no test volumes");
  check(static_cast<bool>(model), "eval: no model callable");
  {
    std::set<std::string> train(plan.train_ids.begin(), plan.train_ids.end());
    for (const data::Volume& v : test)
      check(!train.count(v.id), "eval: test volume '" + v.id + "' also appears in the training split");
  }
  const int64_t m = test[0].channels();
  for (const data::Volume& v : test)
    check(v.channels() == m, "eval: test volumes have mixed channel counts");

  model::FeatureExtractor fx_local;
  const model::FeatureExtractor* fx = embedder;
  if (plan.with_fid && !fx) {
    fx_local = metric::fid_embedder();
    fx = &fx_local;
  }

  MetricReport rep;
  rep.modalities = test[0].modalities;
  if (rep.modalities.empty())
    for (int64_t c = 0; c < m; ++c) rep.modalities.push_back("m" + std::to_string(c));
  std::vector<std::string> warnings;

  for (double s : plan.scale_grid) {
    ScaleRow row;
    row.scale = s;
    row.psnr_mod.assign(m, 0.0);
    row.ssim_mod.assign(m, 0.0);
    row.fid_mod.assign(m, 0.0);
    std::vector<std::vector<Tensor>> sr_planes(m), hr_planes(m);
    int64_t pairs = 0;

    for (const data::Volume& v : test) {
      int64_t n_slices = v.slices();
      if (plan.max_slices > 0) n_slices = std::min<int64_t>(n_slices, plan.max_slices);
      for (int64_t si = 0; si < n_slices; ++si) {
        const Tensor full = v.slice(si);  // [C,H,W]
        const int64_t lh = img::scaled_size(full.dim(1), 1.0 / s);
        const int64_t lw = img::scaled_size(full.dim(2), 1.0 / s);
        check(lh >= 1 && lw >= 1, "eval: slice too small for scale " + fmt9(s));
        const int64_t oh = img::scaled_size(lh, s), ow = img::scaled_size(lw, s);
        const Tensor hr = center_crop(full, oh, ow);
        const Tensor lr = plan.identity_sanity ? hr : img::degrade_to(hr, s, lh, lw);
        const Tensor sr = model(lr, s);
        check(sr.ndim() == 3 && sr.dim(0) == m && sr.dim(1) == oh && sr.dim(2) == ow,
              "eval: model output is " + shape_str(sr.shape()) + ", expected [" + std::to_string(m) + "," +
                  std::to_string(oh) + "," + std::to_string(ow) + "] at scale " + fmt9(s));
        for (int64_t c = 0; c < m; ++c) {
          Tensor sp = plane_of(sr, c), hp = plane_of(hr, c);
          row.psnr_mod[c] += metric::psnr(sp, hp);
          row.ssim_mod[c] += metric::ssim(sp, hp);
          if (plan.with_fid) {
            sr_planes[c].push_back(std::move(sp));
            hr_planes[c].push_back(std::move(hp));
          }
        }
        pairs += 1;
      }
    }
    check(pairs > 0, "eval: no slices to evaluate");

    for (int64_t c = 0; c < m; ++c) {
      row.psnr_mod[c] /= static_cast<double>(pairs);
      row.ssim_mod[c] /= static_cast<double>(pairs);
      if (plan.with_fid) {
        if (pairs <= fx->feature_channels() &&
            (warnings.empty() || warnings.back().find("slice set") == std::string::npos))
          warnings.push_back("slice set of " + std::to_string(pairs) + " is not above the embedding dimension " +
                             std::to_string(fx->feature_channels()) + "; FID estimates are rough");
        row.fid_mod[c] = metric::fid(*fx, sr_planes[c], hr_planes[c]);
      } else {
        row.fid_mod[c] = std::numeric_limits<double>::quiet_NaN();
      }
      row.psnr += row.psnr_mod[c];
      row.ssim += row.ssim_mod[c];
      row.fid += row.fid_mod[c];
    }
    row.psnr /= static_cast<double>(m);
    row.ssim /= static_cast<double>(m);
    row.fid /= static_cast<double>(m);
    rep.rows.push_back(std::move(row));
  }

  rep.mean.psnr_mod.assign(m, 0.0);
  rep.mean.ssim_mod.assign(m, 0.0);
  rep.mean.fid_mod.assign(m, 0.0);
  for (const ScaleRow& r : rep.rows) {
    rep.mean.psnr += r.psnr;
    rep.mean.ssim += r.ssim;
    rep.mean.fid += r.fid;
    for (int64_t c = 0; c < m; ++c) {
      rep.mean.psnr_mod[c] += r.psnr_mod[c];
      rep.mean.ssim_mod[c] += r.ssim_mod[c];
      rep.mean.fid_mod[c] += r.fid_mod[c];
    }
  }
  const double nr = static_cast<double>(rep.rows.size());
  rep.mean.psnr /= nr;
  rep.mean.ssim /= nr;
  rep.mean.fid /= nr;
  for (int64_t c = 0; c < m; ++c) {
    rep.mean.psnr_mod[c] /= nr;
    rep.mean.ssim_mod[c] /= nr;
    rep.mean.fid_mod[c] /= nr;
  }

  rep.metadata["dataset"] = plan.dataset;
  rep.metadata["checkpoint"] = plan.checkpoint_id;
  std::string grid;
  for (size_t i = 0; i < plan.scale_grid.size(); ++i) grid += (i ? "," : "") + fmt9(plan.scale_grid[i]);
  rep.metadata["scale_grid"] = grid;
  rep.metadata["embedder"] = plan.with_fid ? fx->id : "";
  std::string warn;
  for (size_t i = 0; i < warnings.size(); ++i) warn += (i ? "; " : "") + warnings[i];
  rep.metadata["warnings"] = warn;
  return rep;
}

Tensor up_and_down(const FixedScaleHandle& h, const Tensor& lr, double s) {
  check(model::scale_supported(s), "up_and_down: scale outside (1,4]");
  check(lr.ndim() == 3, "up_and_down: want [C,H,W]");
  const int64_t c = static_cast<int64_t>(std::ceil(s - 1e-12));
  check(std::find(h.scales.begin(), h.scales.end(), c) != h.scales.end(),
        "up_and_down: model does not declare the required integer scale " + std::to_string(c));
  Tensor big = h.apply(lr, c);
  const int64_t oh = img::scaled_size(lr.dim(1), s), ow = img::scaled_size(lr.dim(2), s);
  Tensor out = img::bicubic_resize_to(big, oh, ow);
  img::clamp01(out);
  return out;
}

Tensor bicubic_baseline(const Tensor& lr, double s) {
  check(model::scale_supported(s), "bicubic_baseline: scale outside (1,4]");
  Tensor out = img::bicubic_resize(lr, s);
  img::clamp01(out);
  return out;
}

SrFn generator_model(const model::GeneratorState& st) {
  return [&st](const Tensor& lr, double s) { return model::run_generate(st, lr, s); };
}

SrFn bicubic_model() {
  return [](const Tensor& lr, double s) { return bicubic_baseline(lr, s); };
}

SrFn up_and_down_model(FixedScaleHandle h) {
  return [h = std::move(h)](const Tensor& lr, double s) { return up_and_down(h, lr, s); };
}

std::string report_csv(const MetricReport& r) {
  std::string out = "scale,psnr,ssim,fid";
  const size_t m = r.modalities.size();
  if (m > 1)
    for (const std::string& name : r.modalities)
      out += ",psnr_" + name + ",ssim_" + name + ",fid_" + name;
  out += "\n";
  auto emit_row = [&](const std::string& label, const ScaleRow& row) {
    out += label + "," + fmt9(row.psnr) + "," + fmt9(row.ssim) + "," + fmt9(row.fid);
    if (m > 1)
      for (size_t c = 0; c < m; ++c)
        out += "," + fmt9(row.psnr_mod[c]) + "," + fmt9(row.ssim_mod[c]) + "," + fmt9(row.fid_mod[c]);
    out += "\n";
  };
  for (const ScaleRow& row : r.rows) emit_row(fmt9(row.scale), row);
  emit_row("mean", r.mean);
  return out;
}

std::string report_meta_json(const MetricReport& r) {
  nlohmann::json j;
  for (const auto& [k, v] : r.metadata) j[k] = v;
  j["modalities"] = r.modalities;
  j["scales"] = r.rows.size();
  return j.dump(2) + "\n";
}

std::string comparison_csv(const std::vector<std::pair<std::string, MetricReport>>& runs,
                           const std::string& metric) {
  check(!runs.empty(), "report: no runs to compare");
  check(metric == "psnr" || metric == "ssim" || metric == "fid", "report: unknown metric '" + metric + "'");
  std::vector<double> axis;
  for (const auto& [name, rep] : runs)
    for (const ScaleRow& row : rep.rows)
      if (std::find(axis.begin(), axis.end(), row.scale) == axis.end()) axis.push_back(row.scale);
  std::sort(axis.begin(), axis.end());

  std::string out = "scale";
  for (const auto& [name, rep] : runs) out += "," + name;
  out += "\n";
  for (double s : axis) {
    out += fmt9(s);
    for (const auto& [name, rep] : runs) {
      double v = std::numeric_limits<double>::quiet_NaN();
      for (const ScaleRow& row : rep.rows)
        if (row.scale == s) {
          v = metric == "psnr" ? row.psnr : metric == "ssim" ? row.ssim : row.fid;
          break;
        }
      out += "," + fmt9(v);
    }
    out += "\n";
  }
  return out;
}

void render_report(const MetricReport& r, const std::string& dir) {
  auto write = [&](const std::string& name, const std::string& body) {
    const std::string path = dir + "/" + name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("report: cannot write '" + path + "'");
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) fail("report: short write to '" + path + "'");
  };
  write("report.csv", report_csv(r));
  write("report_meta.json", report_meta_json(r));
  for (const char* metric : {"psnr", "ssim", "fid"}) {
    std::string body = "scale," + std::string(metric) + "\n";
    for (const ScaleRow& row : r.rows) {
      const double v = std::string(metric) == "psnr" ? row.psnr
                       : std::string(metric) == "ssim" ? row.ssim
                                                       : row.fid;
      body += fmt9(row.scale) + "," + fmt9(v) + "\n";
    }
    write(std::string("plot_") + metric + ".csv", body);
  }
}

}  // namespace miassr::eval
