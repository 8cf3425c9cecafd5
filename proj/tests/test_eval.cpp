#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "miassr/eval.hpp"
#include "miassr/image_ops.hpp"
#include "miassr/train.hpp"

using namespace miassr;

namespace {

model::GeneratorState tiny_gen(uint64_t seed) {
  model::GeneratorConfig cfg;
  cfg.depth = 1;
  cfg.width = 6;
  cfg.meta_hidden = 8;
  Rng rng(seed);
  return model::init_generator(cfg, rng);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("plan validation") {
  eval::EvalPlan p;
  CHECK_THROWS(p.validate());  // empty grid
  p.scale_grid = {2.0, 4.5};
  CHECK_THROWS(p.validate());
  p.scale_grid = {2.0};
  p.validate();
}

TEST_CASE("identity sanity: a perfect model scores perfect metrics") {
  const auto vols = data::phantom_corpus(21, 2, 3, 48, 48);
  eval::EvalPlan plan;
  plan.scale_grid = {1.5, 2.0, 4.0};
  plan.identity_sanity = true;
  plan.dataset = "phantom";
  const eval::SrFn identity = [](const Tensor& lr, double) { return lr; };
  const auto fx = metric::fid_embedder();
  const auto report = eval::evaluate(plan, vols, identity, &fx);
  REQUIRE(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(std::isinf(row.psnr));
    CHECK(row.psnr > 0);
    CHECK(row.ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(row.fid) < 1e-6);
  }
  CHECK(std::isinf(report.mean.psnr));
}

TEST_CASE("rows follow the grid and carry consistent per-modality values") {
  const auto vols = data::phantom_corpus(22, 2, 2, 44, 44);
  const auto st = tiny_gen(7);
  eval::EvalPlan plan;
  plan.scale_grid = {2.0, 3.0};
  plan.with_fid = false;
  const auto report = eval::evaluate(plan, vols, eval::generator_model(st));
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].scale == 2.0);
  CHECK(report.rows[1].scale == 3.0);
  for (const auto& row : report.rows) {
    CHECK(std::isfinite(row.psnr));
    CHECK(row.psnr > 0);
    CHECK(row.ssim > 0);
    CHECK(row.ssim <= 1.0);
    CHECK(std::isnan(row.fid));  // fid disabled
    REQUIRE(row.psnr_mod.size() == 1);
    CHECK(row.psnr_mod[0] == row.psnr);
  }
  CHECK(report.mean.psnr == doctest::Approx((report.rows[0].psnr + report.rows[1].psnr) / 2));
  CHECK(report.modalities.size() == 1);
}

TEST_CASE("a test volume that was trained on is rejected") {
  const auto vols = data::phantom_corpus(23, 2, 2, 40, 40);
  eval::EvalPlan plan;
  plan.scale_grid = {2.0};
  plan.with_fid = false;
  plan.train_ids = {vols[1].id};
  CHECK_THROWS(eval::evaluate(plan, vols, [](const Tensor& lr, double) { return lr; }));
}

TEST_CASE("max_slices caps the per-volume slice count") {
  const auto vols = data::phantom_corpus(24, 1, 4, 40, 40);
  const auto st = tiny_gen(8);
  eval::EvalPlan a, b;
  a.scale_grid = b.scale_grid = {2.0};
  a.with_fid = b.with_fid = false;
  b.max_slices = 1;
  const auto full = eval::evaluate(a, vols, eval::generator_model(st));
  const auto capped = eval::evaluate(b, vols, eval::generator_model(st));
  // different slice sets -> (almost surely) different means
  CHECK(full.rows[0].psnr != capped.rows[0].psnr);
}

TEST_CASE("fixed-scale wrapper is bit-identical at its declared integer scales") {
  const auto st = tiny_gen(9);
  eval::FixedScaleHandle h;
  h.scales = {2, 3};
  h.apply = [&st](const Tensor& lr, int64_t s) { return model::run_generate(st, lr, double(s)); };
  Rng rng(71);
  Tensor lr({1, 12, 14});
  for (int64_t i = 0; i < lr.numel(); ++i) lr.data()[i] = rng.uniform();
  const Tensor direct = model::run_generate(st, lr, 2.0);
  const Tensor wrapped = eval::up_and_down(h, lr, 2.0);
  CHECK(wrapped == direct);
}

TEST_CASE("fixed-scale wrapper resizes down from ceil(s) at fractional scales") {
  const auto st = tiny_gen(10);
  eval::FixedScaleHandle h;
  h.scales = {2, 3};
  h.apply = [&st](const Tensor& lr, int64_t s) { return model::run_generate(st, lr, double(s)); };
  Rng rng(72);
  Tensor lr({1, 10, 10});
  for (int64_t i = 0; i < lr.numel(); ++i) lr.data()[i] = rng.uniform();
  const Tensor out = eval::up_and_down(h, lr, 2.5);
  CHECK(out.dim(1) == 25);
  CHECK(out.dim(2) == 25);
  CHECK(out.min() >= 0.0);
  CHECK(out.max() <= 1.0);
  // the reconstruction really is resize(SR@3): check against the spelled-out form
  Tensor manual = img::bicubic_resize_to(model::run_generate(st, lr, 3.0), 25, 25);
  img::clamp01(manual);
  CHECK(max_abs_diff(out, manual) == 0.0);
  CHECK_THROWS(eval::up_and_down(h, lr, 3.5));  // ceil = 4 is not declared
}

TEST_CASE("bicubic baseline clamps and hits the target extent") {
  Rng rng(73);
  Tensor lr({1, 9, 11});
  for (int64_t i = 0; i < lr.numel(); ++i) lr.data()[i] = rng.uniform();
  const Tensor up = eval::bicubic_baseline(lr, 3.3);
  CHECK(up.dim(1) == img::scaled_size(9, 3.3));
  CHECK(up.dim(2) == img::scaled_size(11, 3.3));
  CHECK(up.min() >= 0.0);
  CHECK(up.max() <= 1.0);
}

TEST_CASE("the trained-free baseline loses to identity on clean inputs") {
  // sanity that evaluate orders methods sensibly: identity-on-clean beats bicubic
  const auto vols = data::phantom_corpus(25, 1, 2, 44, 44);
  eval::EvalPlan plan;
  plan.scale_grid = {2.0};
  plan.with_fid = false;
  const auto bic = eval::evaluate(plan, vols, eval::bicubic_model());
  eval::EvalPlan ideal = plan;
  ideal.identity_sanity = true;
  const auto id = eval::evaluate(ideal, vols, [](const Tensor& lr, double) { return lr; });
  CHECK(id.rows[0].psnr > bic.rows[0].psnr);
}

TEST_CASE("report serialization is deterministic and carries a mean row") {
  const auto vols = data::phantom_corpus(26, 2, 2, 40, 40);
  const auto st = tiny_gen(11);
  eval::EvalPlan plan;
  plan.scale_grid = {1.5, 2.0};
  plan.with_fid = false;
  plan.dataset = "phantom";
  plan.checkpoint_id = "test";
  const auto r1 = eval::evaluate(plan, vols, eval::generator_model(st));
  const auto r2 = eval::evaluate(plan, vols, eval::generator_model(st));
  CHECK(eval::report_csv(r1) == eval::report_csv(r2));
  CHECK(eval::report_meta_json(r1) == eval::report_meta_json(r2));
  const std::string csv = eval::report_csv(r1);
  CHECK(csv.rfind("scale,psnr,ssim,fid", 0) == 0);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(eval::report_meta_json(r1).find("phantom") != std::string::npos);
}

TEST_CASE("multi-modal reports add per-modality columns") {
  const auto vols = data::phantom_corpus(27, 2, 2, 40, 40, 2);
  model::GeneratorConfig cfg;
  cfg.depth = 1;
  cfg.width = 6;
  cfg.meta_hidden = 8;
  cfg.channels = 2;
  Rng rng(12);
  const auto st = model::init_generator(cfg, rng);
  eval::EvalPlan plan;
  plan.scale_grid = {2.0};
  plan.with_fid = false;
  const auto report = eval::evaluate(plan, vols, eval::generator_model(st));
  REQUIRE(report.modalities.size() == 2);
  const std::string csv = eval::report_csv(report);
  CHECK(csv.find("psnr_" + report.modalities[0]) != std::string::npos);
  CHECK(csv.find("ssim_" + report.modalities[1]) != std::string::npos);
}

TEST_CASE("comparison tables align runs on a shared scale axis") {
  eval::MetricReport a, b;
  eval::ScaleRow r;
  r.scale = 2.0;
  r.psnr = 30.0;
  a.rows.push_back(r);
  r.scale = 3.0;
  r.psnr = 28.0;
  a.rows.push_back(r);
  r.scale = 3.0;
  r.psnr = 27.0;
  b.rows.push_back(r);
  r.scale = 4.0;
  r.psnr = 25.0;
  b.rows.push_back(r);
  const std::string csv = eval::comparison_csv({{"ours", a}, {"baseline", b}}, "psnr");
  CHECK(csv.rfind("scale,ours,baseline", 0) == 0);
  CHECK(csv.find("\n2,30,nan") != std::string::npos);
  CHECK(csv.find("\n3,28,27") != std::string::npos);
  CHECK(csv.find("\n4,nan,25") != std::string::npos);
}

TEST_CASE("render_report writes the full artifact set") {
  const auto vols = data::phantom_corpus(28, 1, 2, 40, 40);
  const auto st = tiny_gen(13);
  eval::EvalPlan plan;
  plan.scale_grid = {2.0};
  plan.with_fid = false;
  const auto report = eval::evaluate(plan, vols, eval::generator_model(st));
  const std::string dir = "/tmp/miassr_test_report";
  std::filesystem::create_directories(dir);
  eval::render_report(report, dir);
  CHECK(slurp(dir + "/report.csv") == eval::report_csv(report));
  CHECK(slurp(dir + "/report_meta.json") == eval::report_meta_json(report));
  for (const char* m : {"psnr", "ssim", "fid"})
    CHECK(std::filesystem::exists(dir + "/plot_" + std::string(m) + ".csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("small slice sets trigger the embedding-dimension warning") {
  const auto vols = data::phantom_corpus(29, 1, 2, 48, 48);  // 2 slices << embedding dim
  eval::EvalPlan plan;
  plan.scale_grid = {2.0};
  plan.identity_sanity = true;
  const auto fx = metric::fid_embedder();
  const auto report = eval::evaluate(plan, vols, [](const Tensor& lr, double) { return lr; }, &fx);
  const auto it = report.metadata.find("warnings");
  REQUIRE(it != report.metadata.end());
  CHECK(it->second.find("embedding dimension") != std::string::npos);
}

TEST_CASE("evaluation does not mutate the model state") {
  const auto vols = data::phantom_corpus(30, 1, 2, 40, 40);
  const auto st = tiny_gen(14);
  const auto before = st.params;
  eval::EvalPlan plan;
  plan.scale_grid = {2.0};
  plan.with_fid = false;
  eval::evaluate(plan, vols, eval::generator_model(st));
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].second == st.params[i].second);
}
