#include "nfgp/errors.hpp"
#include "nfgp/icnn.hpp"

#include "oracles.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

using nfgp::icnn::ICNNParams;
namespace icnn = nfgp::icnn;
namespace ad = nfgp::ad;

namespace {

const std::vector<std::vector<int>> kArchitectures = {{4}, {16}, {64}, {4, 4}, {16, 16}, {64, 64},
                                                      {4, 4, 4}, {16, 16, 16}, {64, 64, 64}};

Eigen::VectorXd uniform_point(int n) { return Eigen::VectorXd::Constant(n, 1.0 / n); }

}  // namespace

TEST(IcnnInit, ConstraintsShiftAndDeterminism) {
  for (const auto& widths : kArchitectures) {
    const ICNNParams th = icnn::init(5, widths, 17);
    EXPECT_TRUE(icnn::satisfies_constraints(th));
    for (std::size_t k = 1; k < th.W.size(); ++k) EXPECT_GE(th.W[k].minCoeff(), 0.0);
    EXPECT_GE(th.w.minCoeff(), 0.0);
    EXPECT_GT(icnn::generating_function(th, uniform_point(5)), 1.0);
    EXPECT_NEAR(icnn::generating_function(th, uniform_point(5)), 2.0, 1e-12);
    for (const auto& b : th.b) EXPECT_EQ(b, Eigen::VectorXd::Zero(b.size()));
    EXPECT_TRUE(th == icnn::init(5, widths, 17));
    EXPECT_FALSE(th == icnn::init(5, widths, 18));
  }
}

TEST(IcnnInit, GlorotBoundsAndShapes) {
  const ICNNParams th = icnn::init(3, {8, 6}, 1);
  ASSERT_EQ(th.W.size(), 2u);
  ASSERT_EQ(th.U.size(), 1u);
  EXPECT_EQ(th.W[0].rows(), 8);
  EXPECT_EQ(th.W[0].cols(), 3);
  EXPECT_EQ(th.W[1].rows(), 6);
  EXPECT_EQ(th.W[1].cols(), 8);
  EXPECT_EQ(th.U[0].rows(), 6);
  EXPECT_EQ(th.U[0].cols(), 3);
  EXPECT_LE(th.W[0].cwiseAbs().maxCoeff(), std::sqrt(6.0 / (3 + 8)));
  EXPECT_LE(th.W[1].cwiseAbs().maxCoeff(), std::sqrt(6.0 / (8 + 6)));
  EXPECT_LT(th.W[0].minCoeff(), 0.0);  // free weights keep their sign
  EXPECT_THROW(icnn::init(1, {4}, 1), nfgp::ConfigError);
  EXPECT_THROW(icnn::init(3, {}, 1), nfgp::ConfigError);
  EXPECT_THROW(icnn::init(3, {4, 0}, 1), nfgp::ConfigError);
}

TEST(IcnnForward, ConstantAndLinearNetworks) {
  ICNNParams th = ICNNParams::zeros(2, {3});
  th.c = 5.0;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto x = oracle::random_simplex(rng, 2);
    // softplus(0) * w with w = 0 vanishes.
    EXPECT_EQ(icnn::forward(th, x).f_value, 5.0);
  }
  ICNNParams lin = ICNNParams::zeros(2, {3});
  lin.u << 1.0, 2.0;
  EXPECT_EQ(icnn::forward(lin, Eigen::Vector2d(0.5, 0.5)).f_value, 1.5);
}

TEST(IcnnForward, MatchesStraightLineOracle) {
  std::mt19937_64 rng(99);
  for (const auto& widths : kArchitectures) {
    for (int trial = 0; trial < 5; ++trial) {
      const ICNNParams th = oracle::random_params(2, widths, 100 + trial);
      const auto x = oracle::random_simplex(rng, 2);
      const auto cache = icnn::forward(th, x);
      const double expected = oracle::icnn_f(th, oracle::to_vec(x));
      EXPECT_NEAR(cache.f_value, expected, 1e-12 * (1.0 + std::abs(expected)));
      ASSERT_EQ(cache.pre.size(), widths.size());
      for (std::size_t k = 0; k < widths.size(); ++k) {
        for (Eigen::Index i = 0; i < cache.pre[k].size(); ++i) {
          EXPECT_NEAR(cache.activation[k][i], oracle::softplus(cache.pre[k][i]), 1e-15);
        }
      }
    }
  }
}

TEST(IcnnForward, Preconditions) {
  const ICNNParams th = icnn::init(3, {4}, 1);
  EXPECT_THROW(icnn::forward(th, Eigen::Vector2d(0.5, 0.5)), nfgp::DimensionError);
  EXPECT_THROW(icnn::forward(th, Eigen::Vector3d(0.5, 0.5, 0.5)), nfgp::DataError);
  EXPECT_THROW(icnn::forward(th, Eigen::Vector3d(1.0, 0.0, 0.0)), nfgp::DataError);
  EXPECT_NO_THROW(icnn::forward(th, Eigen::Vector3d(0.2, 0.3, 0.5 + 5e-10)));
}

TEST(IcnnGenerator, SignAndFloor) {
  ICNNParams th = ICNNParams::zeros(2, {2});
  th.c = -3.0;
  EXPECT_EQ(icnn::generating_function(th, Eigen::Vector2d(0.5, 0.5)), 3.0);
  th.c = 1.0;
  EXPECT_EQ(icnn::generating_function(th, Eigen::Vector2d(0.5, 0.5)), -1.0);
  // Constant network: input gradient vanishes even when G is floored.
  EXPECT_EQ(icnn::grad_log_G(th, Eigen::Vector2d(0.5, 0.5)), Eigen::Vector2d::Zero());
}

TEST(IcnnGradLogG, LinearHandExample) {
  ICNNParams th = ICNNParams::zeros(2, {3});
  th.u << 1.0, 2.0;
  th.c = -10.0;
  const Eigen::VectorXd g = icnn::grad_log_G(th, Eigen::Vector2d(0.5, 0.5));
  EXPECT_NEAR(icnn::generating_function(th, Eigen::Vector2d(0.5, 0.5)), 8.5, 1e-15);
  EXPECT_NEAR(g[0], -1.0 / 8.5, 1e-15);
  EXPECT_NEAR(g[1], -2.0 / 8.5, 1e-15);
}

TEST(IcnnGradLogG, MatchesFiniteDifferencesAcrossArchitectures) {
  std::mt19937_64 rng(7);
  for (const auto& widths : kArchitectures) {
    for (int trial = 0; trial < 4; ++trial) {
      ICNNParams th = icnn::init(4, widths, 300 + trial);
      const auto x = oracle::random_simplex(rng, 4, 0.05);
      const auto log_g = [&](const Eigen::VectorXd& y) {
        return std::log(std::max(-oracle::icnn_f(th, oracle::to_vec(y)), icnn::kGeneratorFloor));
      };
      const Eigen::VectorXd fd = oracle::fd_gradient(log_g, x, 1e-6);
      const Eigen::VectorXd g = icnn::grad_log_G(th, x);
      EXPECT_LT((g - fd).norm() / std::max(fd.norm(), 1e-12), 1e-5) << "widths " << widths.size() << "x" << widths[0];
      // Independent backpropagation gives the same input gradient.
      const auto gf = oracle::icnn_grad_f(th, oracle::to_vec(x));
      const double G = -oracle::icnn_f(th, oracle::to_vec(x));
      for (int i = 0; i < 4; ++i) EXPECT_NEAR(g[i], -gf[static_cast<std::size_t>(i)] / G, 1e-12);
    }
  }
}

TEST(IcnnGradLogG, BatchedGraphMatchesPointwise) {
  const ICNNParams th = oracle::random_params(3, {5, 4}, 8);
  std::mt19937_64 rng(8);
  Eigen::MatrixXd X(3, 6);
  for (int t = 0; t < 6; ++t) X.col(t) = oracle::random_simplex(rng, 3);
  ad::Tape tape;
  const auto vars = icnn::record_params(tape, th, false);
  const auto net = icnn::record_network(vars, tape.constant(X));
  for (int t = 0; t < 6; ++t) {
    EXPECT_NEAR(net.f.value()(0, t), oracle::icnn_f(th, oracle::to_vec(X.col(t))), 1e-12);
    EXPECT_NEAR(net.G.value()(0, t), -net.f.value()(0, t), 0.0);
    EXPECT_LT((net.grad_log_G.value().col(t) - icnn::grad_log_G(th, X.col(t))).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(IcnnGradLogG, ParameterGradientThroughInputGradient) {
  // Scalar functional of grad log G; its theta-gradient on the tape vs FD.
  std::mt19937_64 rng(21);
  Eigen::MatrixXd X(2, 3);
  for (int t = 0; t < 3; ++t) X.col(t) = oracle::random_simplex(rng, 2, 0.1);
  for (int trial = 0; trial < 10; ++trial) {
    const ICNNParams th = icnn::init(2, {2}, 40 + trial);
    auto objective = [&](const ICNNParams& p) {
      ad::Tape tape;
      const auto vars = icnn::record_params(tape, p, true);
      const auto net = icnn::record_network(vars, tape.constant(X));
      const ad::Var out = ad::add(ad::sum(ad::square(net.grad_log_G)), ad::sum(ad::log(net.G)));
      return std::pair{out.scalar(), [&] {
                         tape.backward(out);
                         return icnn::collect_grads(vars, p).flatten();
                       }()};
    };
    const Eigen::VectorXd grad = objective(th).second;
    const Eigen::VectorXd flat = th.flatten();
    const Eigen::VectorXd fd = oracle::fd_gradient(
        [&](const Eigen::VectorXd& v) { return objective(ICNNParams::unflatten(v, th)).first; }, flat, 1e-6);
    EXPECT_LT((grad - fd).norm() / (grad.norm() + fd.norm()), 1e-4);
  }
}

TEST(IcnnConvexity, RandomChordsAfterProjection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (const auto& widths : kArchitectures) {
    const ICNNParams th = oracle::random_params(4, widths, 77, 2.0);
    for (int i = 0; i < 1000 / static_cast<int>(kArchitectures.size()) + 1; ++i) {
      const auto x = oracle::random_simplex(rng, 4);
      const auto y = oracle::random_simplex(rng, 4);
      const double l = lam(rng);
      const Eigen::VectorXd m = l * x + (1.0 - l) * y;
      const double lhs = icnn::evaluate_f(th, m);
      const double rhs = l * icnn::evaluate_f(th, x) + (1.0 - l) * icnn::evaluate_f(th, y);
      EXPECT_LE(lhs, rhs + 1e-10);
    }
  }
}

TEST(IcnnConvexity, UnprojectedNetworkCanBeNonconvex) {
  // Sanity check that the chord test has teeth: a negative hidden-path weight
  // breaks it somewhere.
  ICNNParams th = ICNNParams::zeros(2, {1});
  th.W[0] << 10.0, -10.0;
  th.w << -1.0;
  const Eigen::Vector2d x(0.9, 0.1), y(0.1, 0.9);
  const double lhs = icnn::evaluate_f(th, 0.5 * x + 0.5 * y);
  EXPECT_GT(lhs, 0.5 * icnn::evaluate_f(th, x) + 0.5 * icnn::evaluate_f(th, y));
}

TEST(IcnnProjection, ClampsOnlyConstrainedEntries) {
  ICNNParams th = oracle::random_params(3, {4, 4}, 1);
  th.W[1](0, 0) = -0.3;
  th.w[2] = -1.0;
  th.W[0](0, 0) = -0.7;
  th.U[0](1, 1) = -0.2;
  th.u[0] = -5.0;
  th.c = -9.0;
  const ICNNParams p = icnn::project_constraints(th);
  EXPECT_EQ(p.W[1](0, 0), 0.0);
  EXPECT_EQ(p.w[2], 0.0);
  EXPECT_EQ(p.W[0](0, 0), -0.7);
  EXPECT_EQ(p.U[0](1, 1), -0.2);
  EXPECT_EQ(p.u[0], -5.0);
  EXPECT_EQ(p.c, -9.0);
  EXPECT_TRUE(icnn::project_constraints(p) == p);
  const ICNNParams feasible = icnn::init(3, {4, 4}, 2);
  EXPECT_TRUE(icnn::project_constraints(feasible) == feasible);
}

TEST(IcnnParams, FlattenLayoutAndMask) {
  const ICNNParams th = icnn::init(3, {4, 2}, 9);
  const Eigen::VectorXd flat = th.flatten();
  EXPECT_EQ(flat.size(), th.parameter_count());
  EXPECT_EQ(th.parameter_count(), 4 * 3 + 2 * 4 + 2 * 3 + 4 + 2 + 2 + 3 + 1);
  EXPECT_EQ(flat[0], th.W[0](0, 0));
  EXPECT_EQ(flat[1], th.W[0](0, 1));  // row-major
  EXPECT_EQ(flat[flat.size() - 1], th.c);
  EXPECT_TRUE(ICNNParams::unflatten(flat, th) == th);
  const Eigen::VectorXd mask = th.constraint_mask();
  EXPECT_EQ(mask.sum(), 2 * 4 + 2);
  EXPECT_EQ(mask.head(12).sum(), 0.0);
  EXPECT_EQ(mask.segment(12, 8).sum(), 8.0);
  EXPECT_THROW(ICNNParams::unflatten(Eigen::VectorXd::Zero(3), th), nfgp::DimensionError);
}

TEST(IcnnSerialization, RoundTripIsBitExact) {
  const auto dir = std::filesystem::temp_directory_path() / ("nfgp_icnn_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  for (const auto& widths : kArchitectures) {
    ICNNParams th = oracle::random_params(5, widths, 31);
    th.c = 0.1 + 1e-17;
    th.u[0] = std::nextafter(1.0, 2.0);
    th.u[1] = 5e-324;
    const ICNNParams back = icnn::from_json(icnn::to_json(th));
    EXPECT_TRUE(back == th);
    icnn::save(dir / "theta.json", th);
    const ICNNParams loaded = icnn::load(dir / "theta.json");
    EXPECT_TRUE(loaded == th);
    const Eigen::VectorXd probe = Eigen::VectorXd::Constant(5, 0.2);
    EXPECT_EQ(icnn::evaluate_f(loaded, probe), icnn::evaluate_f(th, probe));
  }
  std::filesystem::remove_all(dir);
}

TEST(IcnnSerialization, RejectsMalformedDocuments) {
  EXPECT_THROW(icnn::from_json("not json"), nfgp::DataError);
  EXPECT_THROW(icnn::from_json(R"({"format":"other","version":1})"), nfgp::DataError);
  auto doc = nlohmann::json::parse(icnn::to_json(icnn::init(2, {2}, 1)));
  doc["version"] = 2;
  EXPECT_THROW(icnn::from_json(doc.dump()), nfgp::DataError);
  doc["version"] = 1;
  doc["widths"] = {3};
  EXPECT_THROW(icnn::from_json(doc.dump()), nfgp::DataError);
  EXPECT_THROW(icnn::load("/nonexistent/theta.json"), nfgp::DataError);
}
