#include "oracles.hpp"
#include "toy_data.hpp"

#include "bvsr/degradation.hpp"
#include "bvsr/errors.hpp"
#include "bvsr/evaluation.hpp"
#include "bvsr/image_io.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bvsr;
namespace fs = std::filesystem;

namespace {

Frame random_frame(int64_t h, int64_t w, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return Frame(torch::rand({3, h, w}, gen, torch::kFloat64));
}

}  // namespace

TEST(Psnr, IdenticalFramesAreInfinite) {
  auto a = random_frame(16, 16, 1);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0.0);
}

TEST(Psnr, ConstantOffsetOfOneTenthIsTwentyDb) {
  Frame a(torch::zeros({3, 8, 8}, torch::kFloat64));
  Frame b(torch::full({3, 8, 8}, 0.1, torch::kFloat64));
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, MatchesOracle) {
  auto a = random_frame(20, 24, 2);
  auto b = random_frame(20, 24, 3);
  EXPECT_NEAR(psnr(a, b), oracle::psnr(a.data(), b.data()), 1e-9);
}

TEST(Psnr, CropBorderIgnoresEdges) {
  auto a = random_frame(20, 20, 4);
  auto d = a.data().clone();
  d.slice(1, 0, 2).fill_(0.0);
  Frame b(d);
  EXPECT_FALSE(std::isinf(psnr(a, b)));
  EXPECT_TRUE(std::isinf(psnr(a, b, 2)));
  EXPECT_THROW(psnr(a, b, 10), std::invalid_argument);
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(random_frame(8, 8, 1), random_frame(8, 9, 1)), std::invalid_argument);
}

TEST(Ssim, IdenticalFramesScoreOne) {
  auto a = random_frame(24, 24, 5);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, SymmetricAndMatchesOracle) {
  auto a = random_frame(24, 30, 6);
  auto b = Frame((a.data() + 0.1 * torch::randn({3, 24, 30}, torch::kFloat64)).clamp(0, 1));
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_NEAR(ssim(a, b), oracle::ssim(a.data(), b.data()), 1e-9);
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Ssim, TooSmallFrameThrows) {
  EXPECT_THROW(ssim(random_frame(10, 10, 1), random_frame(10, 10, 2)), std::invalid_argument);
}

TEST(KernelNcc, Examples) {
  auto g5 = make_gaussian_kernel(5, 1.0, 1.0, 0.0);
  auto g7 = make_gaussian_kernel(7, 1.5, 1.5, 0.0);
  EXPECT_NEAR(kernel_ncc(g7, g7), 1.0, 1e-12);
  // zero-padded Pearson correlation, computed independently
  EXPECT_NEAR(kernel_ncc(g5, g7), 0.9435467427265578, 1e-6);
  EXPECT_NEAR(kernel_ncc(g7, g5), 0.9435467427265578, 1e-6);
  EXPECT_NEAR(kernel_ncc(Kernel::delta(3), g7), 0.4038357898552889, 1e-6);
  EXPECT_EQ(kernel_ncc(Kernel::uniform(5), g5), 0.0);
}

TEST(RegeneratedLr, TrueKernelReproducesObservation) {
  auto hr = FrameSequence::from_stacked(toy::make_hr_sequence(3, 48, 11).to(torch::kFloat64));
  auto k = make_gaussian_kernel(13, 1.5, 1.5, 0.0);
  DegradationConfig cfg;
  cfg.scale = 4;
  auto lr = degrade_sequence(hr, k, cfg, 0);
  auto r = evaluate_regenerated_lr(k, hr, lr, cfg);
  ASSERT_TRUE(r.regenerated_psnr.has_value());
  EXPECT_TRUE(std::isinf(*r.regenerated_psnr));
  EXPECT_NEAR(*r.regenerated_ssim, 1.0, 1e-12);
  EXPECT_EQ(r.to_json()["regenerated_psnr"], "inf");

  auto d = evaluate_regenerated_lr(Kernel::delta(13), hr, lr, cfg);
  EXPECT_TRUE(std::isfinite(*d.regenerated_psnr));
  auto off = evaluate_regenerated_lr(make_gaussian_kernel(13, 1.2, 1.2, 0.0), hr, lr, cfg);
  EXPECT_GT(*off.regenerated_psnr, *d.regenerated_psnr);
}

TEST(RegeneratedLr, RejectsMismatchedSizes) {
  auto hr = FrameSequence::from_stacked(torch::rand({2, 3, 32, 32}));
  auto lr = FrameSequence::from_stacked(torch::rand({2, 3, 9, 8}));
  DegradationConfig cfg;
  EXPECT_THROW(evaluate_regenerated_lr(Kernel::delta(3), hr, lr, cfg), std::invalid_argument);
}

TEST(EvaluateDirectories, PairsSequencesByName) {
  auto root = toy::scratch_dir("eval_dirs");
  auto gt = FrameSequence::from_stacked(torch::rand({2, 3, 16, 16}));
  auto pred = FrameSequence::from_stacked((gt.stacked() + 0.05).clamp(0, 1));
  write_sequence(root / "gt" / "a", gt);
  write_sequence(root / "gt" / "b", gt);
  write_sequence(root / "pred" / "a", gt);
  write_sequence(root / "pred" / "b", pred);

  auto r = evaluate_directories(root / "pred", root / "gt");
  ASSERT_EQ(r.sequences.size(), 2u);
  EXPECT_EQ(r.sequences[0].name, "a");
  EXPECT_TRUE(std::isinf(r.sequences[0].psnr));
  EXPECT_TRUE(std::isfinite(r.sequences[1].psnr));
  auto j = r.to_json();
  EXPECT_EQ(j["sequences"][0]["psnr"], "inf");
  EXPECT_EQ(j["sequences"][1]["frames"].size(), 2u);
  EXPECT_EQ(j["psnr"], "inf");

  // flat directories compare directly
  auto flat = evaluate_directories(root / "pred" / "b", root / "gt" / "b");
  ASSERT_EQ(flat.sequences.size(), 1u);
  EXPECT_NEAR(flat.psnr, r.sequences[1].psnr, 1e-12);
}

TEST(EvaluateDirectories, MissingPredictionIsDataError) {
  auto root = toy::scratch_dir("eval_missing");
  write_sequence(root / "gt" / "a", FrameSequence::from_stacked(torch::rand({2, 3, 16, 16})));
  write_sequence(root / "pred" / "a", FrameSequence::from_stacked(torch::rand({1, 3, 16, 16})));
  EXPECT_THROW(evaluate_directories(root / "pred", root / "gt"), NotFoundError);
}

TEST(MetricValue, EncodesNonFinite) {
  EXPECT_EQ(metric_value(1.5), 1.5);
  EXPECT_EQ(metric_value(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(metric_value(-std::numeric_limits<double>::infinity()), "-inf");
}
