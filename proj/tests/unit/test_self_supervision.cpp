#include "oracles.hpp"

#include "bvsr/config.hpp"
#include "bvsr/degradation.hpp"
#include "bvsr/model.hpp"
#include "bvsr/self_supervision.hpp"
#include "bvsr/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bvsr;

namespace {

DegradationConfig deg_with_scale(int64_t s) {
  DegradationConfig d;
  d.scale = s;
  return d;
}

torch::Tensor one_hot_kernel(int64_t k, int64_t i, int64_t j) {
  auto w = torch::zeros({k, k}, torch::kDouble);
  w[i][j] = 1.0;
  return w;
}

}  // namespace

TEST(AuxiliaryPairs, DeltaAtScaleOneIsIdentity) {
  auto window = torch::rand({2, 5, 3, 9, 9});
  auto k = Kernel::delta(5).weights();
  auto aux = generate_auxiliary_pairs(window, k, deg_with_scale(1));
  EXPECT_TRUE(torch::equal(aux.window, window));
  EXPECT_TRUE(torch::equal(aux.target, window.select(1, 2)));
}

TEST(AuxiliaryPairs, ConstantFramesStayConstant) {
  auto window = torch::full({1, 3, 3, 16, 16}, 0.37);
  auto k = Kernel::normalized(torch::rand({5, 5}, torch::kDouble)).weights().unsqueeze(0);
  auto aux = generate_auxiliary_pairs(window, k, deg_with_scale(2));
  EXPECT_LT((aux.window - 0.37).abs().max().item<double>(), 1e-6);
}

TEST(AuxiliaryPairs, BoxKernelOnCheckerboardMatchesOracles) {
  auto board = (torch::arange(8).view({8, 1}) + torch::arange(8).view({1, 8})).remainder(2).to(torch::kDouble);
  auto frame = board.unsqueeze(0).expand({3, 8, 8}).contiguous();
  auto window = frame.unsqueeze(0).unsqueeze(0).expand({1, 3, 3, 8, 8}).contiguous();
  auto box = Kernel::uniform(3).weights();
  auto aux = generate_auxiliary_pairs(window, box, deg_with_scale(2));
  auto want = oracle::blur_decimate(frame, box, 2, 0);
  for (int64_t t = 0; t < 3; ++t) EXPECT_LT((aux.window[0][t] - want).abs().max().item<double>(), 1e-12);
}

TEST(AuxiliaryPairs, FrameInterface) {
  std::vector<Frame> window;
  for (int i = 0; i < 5; ++i) window.emplace_back(torch::rand({3, 12, 12}));
  auto aux = generate_auxiliary_pairs(window, KernelEstimate{Kernel::uniform(3)}, deg_with_scale(2));
  ASSERT_EQ(aux.window.size(), 5u);
  EXPECT_EQ(aux.window[0].height(), 6);
  EXPECT_TRUE(torch::equal(aux.target.data(), window[2].data()));
}

TEST(AuxiliaryPairs, KernelIsDetachedByDefault) {
  auto window = torch::rand({1, 3, 3, 12, 12});
  auto logits = torch::zeros({1, 9}, torch::requires_grad());
  auto k = torch::softmax(logits, 1).view({1, 3, 3});
  EXPECT_FALSE(generate_auxiliary_pairs(window, k, deg_with_scale(2)).window.requires_grad());
  auto kept = generate_auxiliary_pairs(window, k, deg_with_scale(2), true);
  ASSERT_TRUE(kept.window.requires_grad());
  kept.window.sum().backward();
  EXPECT_TRUE(logits.grad().defined());
}

TEST(AuxiliaryPairs, TooSmallFramesAskForLargerPatch) {
  auto window = torch::rand({1, 5, 3, 40, 40});
  try {
    generate_auxiliary_pairs(window, Kernel::uniform(13).weights(), deg_with_scale(4));
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("patch"), std::string::npos) << e.what();
  }
}

TEST(LossSelf, ExactSourceAndKernelGiveZero) {
  auto hr = torch::rand({2, 3, 32, 32}, torch::kDouble);
  auto k = make_gaussian_kernel(7, 1.2, 0.9, 0.3);
  auto deg = deg_with_scale(4);
  auto lr = decimate(blur(hr, k.weights(), deg.padding), 4, 0);
  LossConfig lc;
  EXPECT_LE(loss_self(hr, k.weights(), lr, lc, deg).item<double>(), 1e-6);
  EXPECT_EQ(loss_self(Frame(torch::zeros({3, 16, 16})), KernelEstimate{k}, Frame(torch::zeros({3, 4, 4})), lc, deg),
            0.0);
}

TEST(LossSelf, MatchesOracleComposition) {
  torch::manual_seed(3);
  auto x = torch::rand({3, 32, 32}, torch::kDouble);
  auto y = torch::rand({3, 8, 8}, torch::kDouble);
  auto k = Kernel::normalized(torch::rand({3, 3}, torch::kDouble));
  const double want = (oracle::blur_decimate(x, k.weights(), 4, 0) - y).abs().mean().item<double>();
  LossConfig lc;
  EXPECT_NEAR(loss_self(Frame(x), KernelEstimate{k}, Frame(y), lc, deg_with_scale(4)), want, 1e-12);
  lc.rho = Rho::kL2;
  const double want2 = (oracle::blur_decimate(x, k.weights(), 4, 0) - y).pow(2).mean().item<double>();
  EXPECT_NEAR(loss_self(Frame(x), KernelEstimate{k}, Frame(y), lc, deg_with_scale(4)), want2, 1e-12);
}

TEST(LossSelf, DetachSeversHrPath) {
  auto x = torch::rand({1, 3, 16, 16}, torch::requires_grad());
  auto logits = torch::zeros({1, 9}, torch::requires_grad());
  auto k = torch::softmax(logits, 1).view({1, 3, 3});
  auto y = torch::rand({1, 3, 4, 4});
  LossConfig lc;
  loss_self(x, k, y, lc, deg_with_scale(4)).backward();
  EXPECT_TRUE(!x.grad().defined() || x.grad().abs().sum().item<double>() == 0.0);
  EXPECT_GT(logits.grad().abs().sum().item<double>(), 0.0);
  lc.detach_in_lself = false;
  loss_self(x, k.detach(), y, lc, deg_with_scale(4)).backward();
  EXPECT_GT(x.grad().abs().sum().item<double>(), 0.0);
}

TEST(LossSelf, SizeMismatchIsRejected) {
  LossConfig lc;
  EXPECT_THROW(loss_self(torch::rand({1, 3, 16, 16}), Kernel::delta(3).weights(), torch::rand({1, 3, 5, 4}), lc,
                         deg_with_scale(4)),
               std::invalid_argument);
}

TEST(KernelSparsity, ClosedForms) {
  EXPECT_NEAR(loss_kernel_sparsity(Kernel::delta(13), 0.5), 1.0, 1e-12);
  EXPECT_NEAR(loss_kernel_sparsity(Kernel::uniform(13), 0.5), 13.0, 1e-9);
  for (int64_t k : {3, 5, 7, 9}) {
    EXPECT_NEAR(loss_kernel_sparsity(Kernel::uniform(k), 0.5), static_cast<double>(k), 1e-9);
    EXPECT_GT(loss_kernel_sparsity(Kernel::uniform(k), 0.5), loss_kernel_sparsity(Kernel::delta(k), 0.5));
  }
}

TEST(KernelSparsity, BoundedByDeltaAndUniform) {
  torch::manual_seed(1);
  for (int i = 0; i < 50; ++i) {
    auto k = Kernel::normalized(torch::rand({7, 7}, torch::kDouble).pow(1 + i % 6));
    const double v = loss_kernel_sparsity(k, 0.5);
    EXPECT_GE(v, 1.0 - 1e-12);
    EXPECT_LE(v, 7.0 + 1e-12);
  }
}

TEST(KernelSparsity, ZeroWeightsHaveZeroGradient) {
  auto w = one_hot_kernel(5, 2, 2).requires_grad_(true);
  auto l = loss_kernel_sparsity(w, 0.5);
  l.backward();
  EXPECT_TRUE(torch::isfinite(w.grad()).all().item<bool>());
  EXPECT_EQ(w.grad()[0][0].item<double>(), 0.0);
  EXPECT_NEAR(w.grad()[2][2].item<double>(), 0.5, 1e-12);
}

TEST(KernelPriors, CentredDelta) {
  EXPECT_EQ(loss_kernel_boundary(Kernel::delta(13)), 0.0);
  EXPECT_EQ(loss_kernel_center(Kernel::delta(13)), 0.0);
}

TEST(KernelPriors, CornerDelta) {
  auto corner = one_hot_kernel(13, 0, 0);
  EXPECT_NEAR(loss_kernel_boundary(corner).item<double>(), 1.0, 1e-12);
  EXPECT_NEAR(loss_kernel_center(corner).item<double>(), 2.0 * 36.0, 1e-9);
}

TEST(KernelPriors, CentroSymmetricKernelIsCentred) {
  torch::manual_seed(2);
  auto r = torch::rand({9, 9}, torch::kDouble);
  auto sym = Kernel::normalized(r + r.flip({0, 1}));
  EXPECT_NEAR(loss_kernel_center(sym), 0.0, 1e-12);
}

TEST(KernelPriors, BoundaryMaskShape) {
  auto m = boundary_mask(13);
  // Chebyshev distance d from the centre; zero up to 13/4, one at the edge
  EXPECT_EQ(m[6][6].item<double>(), 0.0);
  EXPECT_EQ(m[3][9].item<double>(), 0.0);
  EXPECT_NEAR(m[2][6].item<double>(), (4.0 - 3.25) / (6.0 - 3.25), 1e-12);
  EXPECT_EQ(m[0][6].item<double>(), 1.0);
  EXPECT_EQ(m[12][12].item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(m, m.t()));
}

TEST(KernelPriors, BatchedKernelsAreAveraged) {
  auto batch = torch::stack({Kernel::delta(13).weights(), one_hot_kernel(13, 0, 0)});
  EXPECT_NEAR(loss_kernel_boundary(batch).item<double>(), 0.5, 1e-12);
  EXPECT_NEAR(loss_kernel_center(batch).item<double>(), 36.0, 1e-9);
}

TEST(LossRestoration, ClosedForms) {
  Frame a(torch::full({3, 4, 4}, 0.2, torch::kDouble)), b(torch::full({3, 4, 4}, 0.5, torch::kDouble));
  EXPECT_EQ(loss_restoration(a, a, Rho::kL1), 0.0);
  EXPECT_NEAR(loss_restoration(a, b, Rho::kL1), 0.3, 1e-12);
  EXPECT_NEAR(loss_restoration(a, b, Rho::kL2), 0.09, 1e-12);
  EXPECT_THROW(loss_restoration(a, Frame(torch::rand({3, 4, 5})), Rho::kL1), std::invalid_argument);
}

TEST(LossRestoration, ExactInverseStubGivesZero) {
  // Frames that are constant on 2x2 blocks are recovered exactly from their
  // delta-kernel decimation by nearest-neighbour upsampling.
  torch::manual_seed(4);
  auto coarse = torch::rand({1, 5, 3, 6, 6});
  auto window = coarse.repeat_interleave(2, 3).repeat_interleave(2, 4);
  auto aux = generate_auxiliary_pairs(window, Kernel::delta(3).weights(), deg_with_scale(2));
  auto stub = aux.window.select(1, 2).repeat_interleave(2, 2).repeat_interleave(2, 3);
  EXPECT_EQ(loss_restoration(stub, aux.target, Rho::kL1).item<double>(), 0.0);
}

TEST(TotalLoss, Arithmetic) {
  LossBundle p;
  p.l_self = 0.1;
  p.l_I = 0.2;
  p.l_k = 13.0;
  LossConfig c;
  c.boundary_weight = 0.0;
  c.center_weight = 0.0;
  EXPECT_NEAR(total_loss(p, c).total, 0.82, 1e-12);
  c.enable_lk = false;
  auto a = total_loss(p, c).total;
  p.l_k = 1000.0;
  EXPECT_EQ(total_loss(p, c).total, a);
  EXPECT_EQ(total_loss(LossBundle{}, LossConfig{}).total, 0.0);
}

TEST(TotalLoss, TensorFormAgrees) {
  LossParts t{torch::tensor(0.1), torch::tensor(13.0), torch::tensor(0.3), torch::tensor(2.0), torch::tensor(0.2)};
  LossConfig c;
  const double want = 0.1 + 1.0 * 0.2 + 0.04 * 13.0 + 0.5 * 0.3 + 1.0 * 2.0;
  EXPECT_NEAR(total_loss(t, c).item<double>(), want, 1e-6);
  c.enable_li = false;
  EXPECT_NEAR(total_loss(t, c).item<double>(), want - 0.2, 1e-6);
}

TEST(LossBundle, JsonHasEveryField) {
  auto j = LossBundle{}.to_json();
  for (const char* k : {"l_self", "l_k", "l_boundary", "l_center", "l_I", "total"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(LossConfig, Validation) {
  LossConfig c;
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = LossConfig{};
  c.gamma = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(rho_from_string("l2"), Rho::kL2);
  EXPECT_THROW(rho_from_string("huber"), std::invalid_argument);
}

class Routing : public ::testing::Test {
 protected:
  static double group_grad(VideoSR& m, const std::string& g) {
    double s = 0.0;
    for (auto& p : m.parameters(g)) {
      if (p.grad().defined()) s += p.grad().abs().sum().item<double>();
    }
    return s;
  }

  static ExperimentConfig small() {
    ExperimentConfig cfg;
    cfg.restoration.n_resblocks = 1;
    cfg.restoration.feat_channels = 8;
    cfg.restoration.extractor_resblocks = 1;
    cfg.kernel_net.kernel_size = 5;
    cfg.kernel_net.conv_channels = {8, 8};
    cfg.kernel_net.pool_after = {0};
    cfg.kernel_net.fc_hidden = 16;
    cfg.flow.channels = 8;
    cfg.train.patch_size = 20;
    return cfg;
  }

  std::map<std::string, double> grads(ExperimentConfig cfg) {
    cfg.resolve();
    torch::manual_seed(0);
    VideoSR model(cfg.model_config());
    Batch b;
    torch::manual_seed(1);
    b.window = torch::rand({2, 5, 3, 20, 20});
    compute_losses(model, cfg, b).total.backward();
    return {{"nk", group_grad(model, "nk")},
            {"ne", group_grad(model, "ne")},
            {"ni", group_grad(model, "ni")},
            {"nf", group_grad(model, "nf")}};
  }
};

TEST_F(Routing, SelfLossAloneTrainsOnlyKernelNet) {
  auto cfg = small();
  cfg.loss.enable_li = cfg.loss.enable_lk = false;
  cfg.loss.boundary_weight = cfg.loss.center_weight = 0.0;
  auto g = grads(cfg);
  EXPECT_GT(g["nk"], 0.0);
  EXPECT_EQ(g["ne"], 0.0);
  EXPECT_EQ(g["ni"], 0.0);
  EXPECT_EQ(g["nf"], 0.0);
  cfg.loss.detach_in_lself = false;
  g = grads(cfg);
  EXPECT_GT(g["ni"], 0.0);
  EXPECT_GT(g["ne"], 0.0);
}

TEST_F(Routing, AuxiliaryLossTrainsRestorationPathOnly) {
  auto cfg = small();
  cfg.loss.enable_lk = false;
  cfg.loss.boundary_weight = cfg.loss.center_weight = 0.0;
  auto with_aux = grads(cfg);
  EXPECT_GT(with_aux["ni"], 0.0);
  EXPECT_GT(with_aux["ne"], 0.0);
  EXPECT_GT(with_aux["nf"], 0.0);
  cfg.loss.enable_li = false;
  auto without = grads(cfg);
  EXPECT_EQ(with_aux["nk"], without["nk"]);
  EXPECT_EQ(without["ni"], 0.0);
  cfg.loss.enable_li = true;
  cfg.loss.aux_kernel_grad = true;
  EXPECT_NE(grads(cfg)["nk"], without["nk"]);
}

TEST_F(Routing, DefaultsReachAllFourNetworks) {
  auto g = grads(small());
  for (const auto& [name, v] : g) EXPECT_GT(v, 0.0) << name;
}
