#include "ipmc/lto.hpp"

#include "util.hpp"

#include <gtest/gtest.h>

using namespace ipmc;
using ipmc::test::random_feasible;
using ipmc::test::small_config;

namespace {

// per-neuron loops, no Eigen products
Eigen::VectorXd naive_forward(const std::vector<DenseLayer>& layers, const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::vector<double> z(static_cast<std::size_t>(layers[i].weight.rows()));
    for (Eigen::Index r = 0; r < layers[i].weight.rows(); ++r) {
      double s = layers[i].bias[r];
      for (Eigen::Index c = 0; c < layers[i].weight.cols(); ++c) s += layers[i].weight(r, c) * a[c];
      z[r] = (i + 1 < layers.size()) ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  return Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

std::vector<DenseLayer> small_net(Rng& rng, std::vector<int> widths) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer l{Eigen::MatrixXd(widths[i + 1], widths[i]), Eigen::VectorXd(widths[i + 1])};
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = uniform(rng, -1, 1);
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias[k] = uniform(rng, -0.5, 0.5);
    layers.push_back(std::move(l));
  }
  return layers;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(rng, -1, 1);
  return m;
}

}  // namespace

TEST(Network, Architecture) {
  Rng rng(1);
  const MlpModel m = make_mlp(2, false, rng);
  EXPECT_EQ(m.layers.size(), 5u);
  EXPECT_EQ(m.widths(), (std::vector<int>{5, 64, 128, 256, 512, 6}));
  const MlpModel g = make_mlp(2, true, rng);
  EXPECT_EQ(g.widths().front(), 7);
}

TEST(Network, ZeroWeightsZeroOutput) {
  Rng rng(1);
  MlpModel m = make_mlp(2, false, rng);
  for (auto& l : m.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  EXPECT_EQ(forward(m.layers, random_matrix(rng, 5, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Network, IdentityLayer) {
  std::vector<DenseLayer> layers{{Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4)}};
  Rng rng(2);
  const Eigen::MatrixXd x = random_matrix(rng, 4, 3);
  EXPECT_EQ(forward(layers, x), x);
}

TEST(Network, MatchesNaiveLoop) {
  Rng rng(3);
  const MlpModel m = make_mlp(2, true, rng);
  const Eigen::MatrixXd x = random_matrix(rng, 7, 5);
  const Eigen::MatrixXd y = forward(m.layers, x);
  for (int j = 0; j < 5; ++j) {
    const Eigen::VectorXd ref = naive_forward(m.layers, x.col(j));
    for (int r = 0; r < 6; ++r) EXPECT_NEAR(y(r, j), ref[r], 1e-12 * std::max(1.0, std::abs(ref[r])));
  }
  EXPECT_THROW(forward(m.layers, random_matrix(rng, 6, 2)), Error);
}

TEST(Backprop, FiniteDifferences) {
  Rng rng(4);
  auto layers = small_net(rng, {5, 8, 7, 6, 5, 6});
  const Eigen::MatrixXd x = random_matrix(rng, 5, 9);
  const Eigen::MatrixXd y = random_matrix(rng, 6, 9);
  Gradients g;
  backward(layers, x, y, g);
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t li = static_cast<std::size_t>(probe) % layers.size();
    const bool bias = probe % 3 == 0;
    double* param;
    double analytic;
    if (bias) {
      const auto k = static_cast<Eigen::Index>(uniform(rng, 0, 1) * layers[li].bias.size());
      param = &layers[li].bias[k];
      analytic = g.bias[li][k];
    } else {
      const auto k = static_cast<Eigen::Index>(uniform(rng, 0, 1) * layers[li].weight.size());
      param = layers[li].weight.data() + k;
      analytic = g.weight[li].data()[k];
    }
    const double saved = *param, h = 1e-6;
    *param = saved + h;
    const double up = mse_loss(forward(layers, x), y);
    *param = saved - h;
    const double dn = mse_loss(forward(layers, x), y);
    *param = saved;
    const double numeric = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-6, std::abs(numeric) + std::abs(analytic)));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Backprop, DivergenceAndEmptyBatch) {
  Rng rng(4);
  auto layers = small_net(rng, {2, 3, 1});
  Gradients g;
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 1, std::numeric_limits<double>::infinity());
  EXPECT_THROW(backward(layers, x, Eigen::MatrixXd::Zero(1, 1), g), Error);
  EXPECT_THROW(backward(layers, Eigen::MatrixXd(2, 0), Eigen::MatrixXd(1, 0), g), Error);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(5);
  auto layers = small_net(rng, {3, 4, 2});
  const auto before = layers;
  AdamState st(layers);
  Gradients g{{Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(2, 4)}, {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2)}};
  adam_step(layers, g, st, {});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    EXPECT_EQ(layers[i].weight, before[i].weight);
    EXPECT_EQ(layers[i].bias, before[i].bias);
  }
}

TEST(Adam, ConstantGradientStepIsLearningRate) {
  // bias correction makes m_hat = g and v_hat = g^2 for any t when g is constant
  Rng rng(6);
  auto layers = small_net(rng, {3, 2});
  AdamState st(layers);
  TrainConfig cfg;
  const double g0 = 0.37;
  Gradients g{{Eigen::MatrixXd::Constant(2, 3, g0)}, {Eigen::VectorXd::Constant(2, -g0)}};
  for (int t = 1; t <= 5; ++t) {
    const auto before = layers;
    adam_step(layers, g, st, cfg);
    const double expected = cfg.learning_rate * g0 / (g0 + cfg.epsilon);
    EXPECT_NEAR(before[0].weight(0, 0) - layers[0].weight(0, 0), expected, 1e-15);
    EXPECT_NEAR(layers[0].bias(1) - before[0].bias(1), expected, 1e-15);
  }
}

TEST(R2, Cases) {
  Eigen::MatrixXd y(1, 3);
  y << 1.0, 2.0, 4.0;
  EXPECT_DOUBLE_EQ(evaluate_r2(y, y), 1.0);
  EXPECT_NEAR(evaluate_r2(Eigen::MatrixXd::Constant(1, 3, 7.0 / 3.0), y), 0.0, 1e-15);
  // hand: mean 7/3, SS_tot = 16/9 + 1/9 + 25/9 = 42/9; pred (1.5, 2, 3.5): SS_res = 0.25 + 0 + 0.25 = 0.5
  Eigen::MatrixXd p(1, 3);
  p << 1.5, 2.0, 3.5;
  EXPECT_NEAR(evaluate_r2(p, y), 1.0 - 0.5 / (42.0 / 9.0), 1e-12);
  EXPECT_THROW(evaluate_r2(Eigen::MatrixXd::Ones(1, 3), Eigen::MatrixXd::Ones(1, 3)), Error);
  EXPECT_THROW(evaluate_r2(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)), Error);
}

namespace {

DatasetSplit tiny_split(bool gains, std::uint64_t seed) {
  SystemConfig cfg = small_config(400);
  Rng rng(seed);
  const Dataset ds = generate_dataset(2, cfg, rng, gains);
  return split_dataset(ds, 700);
}

}  // namespace

TEST(Dataset, ShapesAndFeasibility) {
  SystemConfig cfg = small_config(30);
  Rng rng(8);
  const Dataset ds = generate_dataset(3, cfg, rng, false);
  EXPECT_EQ(ds.inputs.rows(), 5);
  EXPECT_EQ(ds.targets.rows(), 6);
  EXPECT_EQ(ds.size() + 30 * ds.skipped_scenarios, 90);
  // reassembled targets satisfy the rate constraint for the scenario's gains
  Rng again(8);
  const Scenario sc = synth_scenario(cfg, again);
  const GpProblem prob = make_problem(sc.features, cfg);
  Allocation a{Matrix(2, 30), Matrix(2, 30), Matrix(2, 30)};
  for (int h = 0; h < 30; ++h)
    for (int m = 0; m < 2; ++m) {
      a.d(m, h) = std::exp(ds.targets(m, h));
      a.c(m, h) = std::exp(ds.targets(2 + m, h));
      a.p(m, h) = std::exp(ds.targets(4 + m, h));
    }
  EXPECT_LE(rate_violation(prob, a), 1e-8);
}

TEST(Dataset, Deterministic) {
  SystemConfig cfg = small_config(20);
  Rng a(5), b(5);
  const Dataset x = generate_dataset(2, cfg, a, true);
  const Dataset y = generate_dataset(2, cfg, b, true);
  EXPECT_EQ(x.inputs, y.inputs);
  EXPECT_EQ(x.targets, y.targets);
}

TEST(Training, LossDecreasesAndDeterministic) {
  const DatasetSplit split = tiny_split(true, 3);
  TrainConfig tc;
  tc.epochs = 15;
  tc.batch_size = 128;
  Rng r1(1), r2(1);
  MlpModel a = make_mlp(2, true, r1), b = make_mlp(2, true, r2);
  const auto ra = train(a, split, tc);
  train(b, split, tc);
  EXPECT_LT(ra.trace.back().train_loss, ra.trace.front().train_loss);
  for (std::size_t i = 0; i < a.layers.size(); ++i) EXPECT_EQ(a.layers[i].weight, b.layers[i].weight);
  EXPECT_EQ(ra.test_r2_per_output.size(), 6u);
}

TEST(Training, ShuffledTargetsControl) {
  DatasetSplit split = tiny_split(true, 4);
  // break the input-target link on both halves
  Rng rng(9);
  for (Dataset* d : {&split.train, &split.test}) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(d->size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd t = d->targets;
    for (Eigen::Index j = 0; j < d->size(); ++j) d->targets.col(j) = t.col(perm[static_cast<std::size_t>(j)]);
  }
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 128;
  tc.learning_rate = 1e-3;
  Rng r(2);
  MlpModel m = make_mlp(2, true, r);
  const auto rep = train(m, split, tc);
  EXPECT_LT(rep.trace.back().test_r2, 0.1);
  EXPECT_GT(rep.trace.back().test_r2, -0.5);
}

namespace {

MlpModel quick_model() {
  const DatasetSplit split = tiny_split(true, 5);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 128;
  Rng r(3);
  MlpModel m = make_mlp(2, true, r);
  train(m, split, tc);
  return m;
}

}  // namespace

TEST(Projection, IdentityOnFeasible) {
  SystemConfig cfg = small_config(3);
  Rng rng(1);
  const GpProblem prob = make_problem(random_feasible(cfg, rng), cfg);
  const Allocation opt = solve_bisection(prob).allocation;
  const Allocation proj = project_allocation(prob, opt, prob.budget_total() * (1 + 1e-9));
  EXPECT_EQ(proj.d, opt.d);
  EXPECT_EQ(proj.c, opt.c);
  EXPECT_EQ(proj.p, opt.p);
}

TEST(Projection, RaisesPowerToMinimum) {
  SystemConfig cfg = small_config(2);
  cfg.power_budget = 1.0;
  Rng rng(2);
  const GpProblem prob = make_problem(random_feasible(cfg, rng), cfg);
  Allocation a{Matrix::Constant(2, 2, 0.9), Matrix::Constant(2, 2, 0.97), Matrix::Constant(2, 2, 1e-9)};
  const Allocation p = project_allocation(prob, a, prob.budget_total());
  for (int h = 0; h < 2; ++h)
    for (int m = 0; m < 2; ++m) EXPECT_EQ(p.p(m, h), entry_min_power(prob, m, h, p.d(m, h) * p.c(m, h)));
}

TEST(Projection, IdempotentAndFeasible) {
  SystemConfig cfg = small_config(6);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const GpProblem prob = make_problem(random_feasible(cfg, rng), cfg);
    Allocation a{Matrix(2, 6), Matrix(2, 6), Matrix(2, 6)};
    for (Eigen::Index i = 0; i < 12; ++i) {
      a.d.data()[i] = uniform(rng, 0.0, 1.3);
      a.c.data()[i] = uniform(rng, 0.5, 1.2);
      a.p.data()[i] = uniform(rng, 0.0, 0.05);
    }
    const Allocation once = project_allocation(prob, a, prob.budget_total());
    const Allocation twice = project_allocation(prob, once, prob.budget_total());
    EXPECT_TRUE(once.d.isApprox(twice.d, 1e-12));
    EXPECT_TRUE(once.c.isApprox(twice.c, 1e-12));
    EXPECT_TRUE(once.p.isApprox(twice.p, 1e-12));
    EXPECT_LE(rate_violation(prob, once), 1e-8);
    EXPECT_LE(budget_violation(prob, once), 1e-9);
  }
}

TEST(Inference, BatchAndOnlineFeasible) {
  const MlpModel model = quick_model();
  SystemConfig cfg = small_config(25);
  Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    const auto f = random_feasible(cfg, rng);
    const GpProblem prob = make_problem(f, cfg);
    for (const auto& r : {infer(model, f, cfg), infer_online(model, f, cfg)}) {
      EXPECT_LE(rate_violation(prob, r.allocation), 1e-8);
      EXPECT_LE(budget_violation(prob, r.allocation), 1e-9);
      EXPECT_GT(r.seconds, 0.0);
    }
  }
}

TEST(Inference, BudgetTrackerReservesFloors) {
  SystemConfig cfg = small_config(4);
  Rng rng(13);
  const GpProblem prob = make_problem(random_feasible(cfg, rng), cfg);
  BudgetTracker tr(prob);
  const Matrix floor = lower_bound_powers(prob);
  EXPECT_NEAR(tr.allowance(0), prob.budget_total() - floor.rightCols(3).sum(), 1e-15);
  tr.spend(floor.col(0).sum());
  EXPECT_NEAR(tr.allowance(3), prob.budget_total() - floor.leftCols(1).sum(), 1e-15);
}
