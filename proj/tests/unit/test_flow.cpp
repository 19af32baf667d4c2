#include "oracles.hpp"
#include "toy_data.hpp"

#include "bvsr/errors.hpp"
#include "bvsr/flow.hpp"

#include <gtest/gtest.h>

using namespace bvsr;
using torch::indexing::Slice;

namespace {

torch::Tensor textured(int64_t h, int64_t w, uint64_t seed) {
  auto seq = toy::make_hr_sequence(1, std::max(h, w), seed);
  return seq[0].slice(1, 0, h).slice(2, 0, w).contiguous();
}

BuiltinFlow& trained_flow() {
  static BuiltinFlow* flow = [] {
    torch::manual_seed(0);
    auto* f = new BuiltinFlow(3, 32);
    pretrain_flow_on_translations(*f, 400, 1e-3, 32, 3.0, 1);
    return f;
  }();
  return *flow;
}

}  // namespace

TEST(Warp, ZeroFlowIsIdentity) {
  auto f = torch::rand({2, 5, 9, 13});
  EXPECT_LT((warp(f, torch::zeros({2, 2, 9, 13})) - f).abs().max().item<double>(), 1e-6);
}

TEST(Warp, UnitFlowOnColumnRamp) {
  auto ramp = torch::arange(12, torch::kFloat).view({1, 1, 1, 12}).expand({1, 1, 10, 12}).contiguous();
  auto flow = torch::zeros({1, 2, 10, 12});
  flow.select(1, 0).fill_(1.0);
  auto out = warp(ramp, flow);
  auto inner = out.index({0, 0, Slice(), Slice(0, 11)});
  auto want = ramp.index({0, 0, Slice(), Slice(0, 11)}) + 1.0;
  EXPECT_LT((inner - want).abs().max().item<double>(), 1e-5);
}

TEST(Warp, MatchesBilinearOracle) {
  torch::manual_seed(5);
  auto img = torch::rand({1, 2, 7, 9}, torch::kDouble);
  auto flow = torch::randn({1, 2, 7, 9}, torch::kDouble) * 2.0;
  auto out = warp(img, flow);
  for (int64_t c = 0; c < 2; ++c) {
    for (int64_t y = 0; y < 7; ++y) {
      for (int64_t x = 0; x < 9; ++x) {
        const double want = oracle::bilinear(img[0], c, x + flow[0][0][y][x].item<double>(),
                                             y + flow[0][1][y][x].item<double>());
        EXPECT_NEAR(out[0][c][y][x].item<double>(), want, 1e-9);
      }
    }
  }
}

TEST(Warp, OutOfBoundsUsesBorder) {
  auto img = torch::rand({1, 3, 6, 6});
  auto flow = torch::zeros({1, 2, 6, 6});
  flow.select(1, 0).fill_(100.0);
  auto out = warp(img, flow);
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
  auto right = img.index({Slice(), Slice(), Slice(), Slice(5, 6)}).expand({1, 3, 6, 6});
  EXPECT_LT((out - right).abs().max().item<double>(), 1e-6);
}

TEST(Warp, LinearInFeatures) {
  torch::manual_seed(6);
  auto a = torch::rand({1, 4, 8, 8}, torch::kDouble), b = torch::rand({1, 4, 8, 8}, torch::kDouble);
  auto u = torch::randn({1, 2, 8, 8}, torch::kDouble);
  auto lhs = warp(0.3 * a - 1.7 * b, u);
  auto rhs = 0.3 * warp(a, u) - 1.7 * warp(b, u);
  EXPECT_LT((lhs - rhs).abs().max().item<double>(), 1e-12);
}

TEST(Warp, GradientMatchesFiniteDifferences) {
  torch::manual_seed(7);
  auto img = torch::rand({1, 2, 8, 8}, torch::kDouble);
  auto flow = (torch::rand({1, 2, 8, 8}, torch::kDouble) * 0.6 + 0.2) + torch::randint(-1, 2, {1, 2, 8, 8}, torch::kDouble);
  auto probe = torch::rand({1, 2, 8, 8}, torch::kDouble);
  auto fv = flow.clone().requires_grad_(true);
  (warp(img, fv) * probe).sum().backward();
  auto fd = torch::zeros_like(flow);
  for (int64_t i = 0; i < flow.numel(); ++i) {
    auto p = flow.clone(), m = flow.clone();
    p.view(-1)[i] += 1e-6;
    m.view(-1)[i] -= 1e-6;
    fd.view(-1)[i] = ((warp(img, p) * probe).sum() - (warp(img, m) * probe).sum()) / 2e-6;
  }
  EXPECT_LT((fv.grad() - fd).norm().item<double>() / fd.norm().item<double>(), 1e-3);
}

TEST(Warp, FrameAndFeatureOverloads) {
  auto f = Frame(torch::rand({3, 6, 7}));
  FlowField zero{torch::zeros({2, 6, 7})};
  EXPECT_LT((warp(f, zero).data() - f.data()).abs().max().item<double>(), 1e-6);
  FeatureMap m{torch::rand({16, 6, 7})};
  EXPECT_EQ(warp(m, zero).data.sizes(), m.data.sizes());
}

TEST(Warp, SizeMismatchIsRejected) {
  EXPECT_THROW(warp(torch::rand({1, 3, 8, 8}), torch::zeros({1, 2, 8, 9})), std::invalid_argument);
  EXPECT_THROW(warp(torch::rand({1, 3, 8, 8}), torch::zeros({1, 3, 8, 8})), std::invalid_argument);
}

TEST(BuiltinFlow, UntrainedOutputShape) {
  BuiltinFlow flow(3, 32);
  auto f = estimate_flow(flow, Frame(torch::rand({3, 20, 28})), Frame(torch::rand({3, 20, 28})));
  EXPECT_EQ(f.data.sizes(), (std::vector<int64_t>{2, 20, 28}));
  EXPECT_TRUE(torch::isfinite(f.data).all().item<bool>());
}

TEST(BuiltinFlow, ShapeMismatchIsRejected) {
  BuiltinFlow flow(3, 32);
  EXPECT_THROW(estimate_flow(flow, Frame(torch::rand({3, 8, 8})), Frame(torch::rand({3, 8, 10}))),
               std::invalid_argument);
}

TEST(BuiltinFlow, IdenticalFramesGiveSmallFlow) {
  auto& flow = trained_flow();
  torch::NoGradGuard ng;
  auto img = Frame(textured(32, 32, 11));
  auto f = estimate_flow(flow, img, img);
  EXPECT_LT(f.data.abs().mean().item<double>(), 0.5);
}

TEST(BuiltinFlow, TranslationDirection) {
  auto& flow = trained_flow();
  torch::NoGradGuard ng;
  auto big = textured(32, 40, 12);
  // target(x) = source(x - 2): content moves two pixels to the right
  auto source = big.index({Slice(), Slice(), Slice(4, 36)});
  auto target = big.index({Slice(), Slice(), Slice(2, 34)});
  auto f = estimate_flow(flow, Frame(source.contiguous()), Frame(target.contiguous())).data;
  auto inner = f.index({Slice(), Slice(6, 26), Slice(6, 26)});
  EXPECT_NEAR(inner[0].mean().item<double>(), -2.0, 0.5);
  EXPECT_NEAR(inner[1].mean().item<double>(), 0.0, 0.5);
}

TEST(BuiltinFlow, ParameterFileRoundTrip) {
  auto dir = toy::scratch_dir("flow_params");
  torch::manual_seed(1);
  BuiltinFlow a(3, 16);
  torch::manual_seed(2);
  BuiltinFlow b(3, 16);
  save_flow_parameters(a, (dir / "flow.pt").string());
  load_flow_parameters(b, (dir / "flow.pt").string());
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i].second, pb[i].second)) << pa[i].first;
}

TEST(FlowProvider, WarmStartAndFreezing) {
  auto dir = toy::scratch_dir("flow_provider");
  BuiltinFlow src(3, 16);
  save_flow_parameters(src, (dir / "flow.pt").string());
  FlowProviderConfig cfg;
  cfg.channels = 16;
  cfg.checkpoint_path = (dir / "flow.pt").string();
  cfg.trainable = false;
  EXPECT_DOUBLE_EQ(cfg.resolved_lr_scale(), 0.01);
  auto flow = make_flow_estimator(cfg);
  auto ps = flow->named_parameters();
  auto qs = src.named_parameters();
  for (size_t i = 0; i < ps.size(); ++i) {
    EXPECT_TRUE(torch::equal(ps[i].second, qs[i].second));
    EXPECT_FALSE(ps[i].second.requires_grad());
  }
  FlowProviderConfig scratch;
  EXPECT_DOUBLE_EQ(scratch.resolved_lr_scale(), 1.0);
}

TEST(FlowProvider, ExternalTorchScriptModule) {
  auto dir = toy::scratch_dir("flow_external");
  torch::jit::Module m("ZeroFlow");
  m.define(R"(
def forward(self, source, target):
    return (target - source)[:, 0:2] * 0.0
)");
  m.save((dir / "zero.pt").string());
  FlowProviderConfig cfg;
  cfg.backend = FlowBackend::kExternal;
  cfg.checkpoint_path = (dir / "zero.pt").string();
  auto flow = make_flow_estimator(cfg);
  auto f = flow->forward(torch::rand({2, 3, 9, 11}), torch::rand({2, 3, 9, 11}));
  EXPECT_EQ(f.sizes(), (std::vector<int64_t>{2, 2, 9, 11}));
  EXPECT_EQ(f.abs().max().item<double>(), 0.0);

  cfg.checkpoint_path = (dir / "missing.pt").string();
  EXPECT_THROW(make_flow_estimator(cfg), NotFoundError);
  cfg.checkpoint_path.clear();
  EXPECT_THROW(make_flow_estimator(cfg), std::invalid_argument);
}
