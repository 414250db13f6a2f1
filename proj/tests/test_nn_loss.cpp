#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "epigraph/error.hpp"
#include "epigraph/graph.hpp"
#include "epigraph/loss.hpp"
#include "epigraph/nn.hpp"

using namespace epigraph;
using namespace epigraph::nn;

namespace {

std::vector<Edge> ring_edges(int n) {
  std::vector<Edge> e;
  for (int i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0});
  e.push_back({0, 2, 0.5});
  return e;
}

EpipolarGraph toy_graph(std::uint64_t seed, int n = 10) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<PointPair> pairs;
  for (int i = 0; i < n; ++i) pairs.emplace_back(Vec3(u(rng), u(rng), 1), Vec3(u(rng), u(rng), 1));
  GraphOptions go;
  go.k = 3;
  return graph_from_pairs(pairs, go);
}

DenseMatrix random_matrix(Rng& rng, int r, int c) {
  std::normal_distribution<double> n(0.0, 1.0);
  DenseMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

PosePrediction random_prediction(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  PosePrediction p;
  p.q = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
  p.t_dir = Vec3(n(rng), n(rng), n(rng)).normalized();
  p.t_raw = 0.5 + std::abs(n(rng));
  return p;
}

Pose random_pose(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {Quaternion::from_axis_angle(Vec3(n(rng), n(rng), n(rng)).normalized(), std::abs(n(rng))),
          Vec3(n(rng), n(rng), n(rng))};
}

}  // namespace

TEST(Propagation, GcnMatchesDenseNormalization) {
  const int n = 6;
  const auto edges = ring_edges(n);
  const Propagation p = Propagation::from_edges(n, edges, true);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : edges) A(e.src, e.dst) = e.weight;
  for (const Edge& e : edges)
    if (A(e.dst, e.src) == 0.0) A(e.dst, e.src) = e.weight;
  const Eigen::MatrixXd At = A + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd d = At.rowwise().sum();
  const Eigen::MatrixXd Dm = d.cwiseInverse().cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd ref = Dm * At * Dm;
  Eigen::MatrixXd got = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (const auto& [j, w] : p.gcn[static_cast<std::size_t>(i)]) got(i, j) += w;
  EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Layers, GcnForwardMatchesDenseOracle) {
  const int n = 6;
  const auto edges = ring_edges(n);
  const Propagation p = Propagation::from_edges(n, edges, false);
  const auto layer = make_layer(LayerSpec{LayerKind::kGCN, 3, 4, 1, Activation::kNone, true}, "g");
  ParamStore ps;
  Rng rng(1);
  layer->register_params(ps, rng);
  ps.at("g.bias").value << 0.1, -0.2, 0.3, 0.0;
  const DenseMatrix H = random_matrix(rng, n, 3);
  Eigen::MatrixXd At = Eigen::MatrixXd::Identity(n, n);
  for (const Edge& e : edges) At(e.src, e.dst) += e.weight;
  const Eigen::VectorXd d = At.rowwise().sum();
  const Eigen::MatrixXd Dm = d.cwiseInverse().cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd ref =
      (Dm * At * Dm * H * ps.at("g.weight").value).rowwise() + Eigen::RowVectorXd(ps.at("g.bias").value);
  EXPECT_LT((layer->forward(H, p, ps, nullptr) - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Layers, GinForwardMatchesDenseOracle) {
  const int n = 5;
  const auto edges = ring_edges(n);
  const Propagation p = Propagation::from_edges(n, edges, true);
  const auto layer = make_layer(LayerSpec{LayerKind::kGIN, 3, 4, 1, Activation::kNone, true}, "g");
  ParamStore ps;
  Rng rng(2);
  layer->register_params(ps, rng);
  ps.at("g.eps").value(0, 0) = 0.25;
  const DenseMatrix H = random_matrix(rng, n, 3);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : edges) A(e.src, e.dst) = e.weight;
  for (const Edge& e : edges)
    if (A(e.dst, e.src) == 0.0) A(e.dst, e.src) = e.weight;
  const Eigen::MatrixXd M = 1.25 * H + A * H;
  const Eigen::MatrixXd inner = ((M * ps.at("g.weight").value).rowwise() +
                                 Eigen::RowVectorXd(ps.at("g.bias").value)).cwiseMax(0.0);
  const Eigen::MatrixXd ref =
      (inner * ps.at("g.weight2").value).rowwise() + Eigen::RowVectorXd(ps.at("g.bias2").value);
  EXPECT_LT((layer->forward(H, p, ps, nullptr) - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Layers, GatAttentionRowsSumToOne) {
  const int n = 5;
  const Propagation p = Propagation::from_edges(n, ring_edges(n), true);
  const auto layer = make_layer(LayerSpec{LayerKind::kGAT, 3, 8, 2, Activation::kNone, false}, "a");
  ParamStore ps;
  Rng rng(3);
  layer->register_params(ps, rng);
  LayerCache cache;
  layer->forward(random_matrix(rng, n, 3), p, ps, &cache);
  std::size_t slot = 0;
  for (int h = 0; h < 2; ++h) {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < p.attention[static_cast<std::size_t>(i)].size(); ++k) s += cache.alpha[slot++];
      EXPECT_NEAR(s, 1.0, 1e-14);
    }
  }
}

TEST(Layers, ShapeErrors) {
  const Propagation p = Propagation::from_edges(4, ring_edges(4), true);
  const auto layer = make_layer(LayerSpec{LayerKind::kGCN, 3, 4, 1, Activation::kRelu, true}, "g");
  ParamStore ps;
  Rng rng(4);
  layer->register_params(ps, rng);
  EXPECT_THROW(layer->forward(DenseMatrix::Zero(4, 5), p, ps, nullptr), Error);
  EXPECT_THROW(layer->forward(DenseMatrix::Zero(3, 3), p, ps, nullptr), Error);
  EXPECT_THROW(Propagation::from_edges(2, {{0, 5, 1.0}}, true), Error);
}

TEST(Pooling, MeanAndSum) {
  DenseMatrix H(2, 2);
  H << 1, 2, 3, 6;
  EXPECT_EQ(pool(H, Pooling::kMean), (DenseMatrix(1, 2) << 2, 4).finished());
  EXPECT_EQ(pool(H, Pooling::kSum), (DenseMatrix(1, 2) << 4, 8).finished());
  EXPECT_THROW(pool(DenseMatrix(0, 2), Pooling::kMean), Error);
}

TEST(Activations, SoftplusSigmoid) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-12);
  EXPECT_NEAR(softplus(-40.0), std::exp(-40.0), 1e-25);
  EXPECT_NEAR(sigmoid(0.3), 1.0 / (1.0 + std::exp(-0.3)), 1e-15);
}

TEST(Presets, ShapesAndValidation) {
  for (const auto& name : preset_names()) {
    const ModelConfig c = make_preset(name, 32);
    c.validate();
    EXPECT_EQ(c.layers.size(), name == "GAT+2GCN" ? 3u : (name == "3GCN+GAT" ? 4u : 3u));
    EXPECT_EQ(c.layers.front().in_dim, kNodeFeatureDim);
  }
  EXPECT_EQ(make_preset("GIN_SumPool").pooling, Pooling::kSum);
  EXPECT_THROW(make_preset("MLP"), Error);
  ModelConfig bad = make_preset("GAT+2GCN");
  bad.layers[1].in_dim = 7;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Model, OutputsAreNormalizedAndDeterministic) {
  const EpipolarGraph g = toy_graph(5);
  for (const auto& name : preset_names()) {
    const Model a(make_preset(name, 16), 7), b(make_preset(name, 16), 7);
    const PosePrediction p = a.predict(g);
    EXPECT_NEAR(p.q.norm(), 1.0, 1e-14);
    EXPECT_NEAR(p.t_dir.norm(), 1.0, 1e-14);
    EXPECT_GT(p.t_raw, 0.0);
    EXPECT_EQ(p.q, b.predict(g).q);
    const auto emb = a.node_embeddings(g);
    EXPECT_EQ(emb.size(), a.config().layers.size() + 1);
    EXPECT_EQ(emb[0], node_feature_matrix(g));
  }
}

TEST(Model, BackwardLinearityAndState) {
  const EpipolarGraph g = toy_graph(6);
  Model m(make_preset("3GCN+GAT", 16), 8);
  EXPECT_THROW(m.backward(PredictionGrad{}), Error);

  m.forward(g);
  m.params().zero_grad();
  m.backward(PredictionGrad{});
  for (const Tensor& t : m.params().tensors()) EXPECT_EQ(t.grad.cwiseAbs().maxCoeff(), 0.0);

  Rng rng(9);
  PredictionGrad pg;
  pg.q = Vec4(0.3, -0.1, 0.2, 0.5);
  pg.t_dir = Vec3(0.1, 0.4, -0.3);
  pg.t_raw = 0.7;
  m.forward(g);
  m.backward(pg);
  std::vector<DenseMatrix> once;
  for (const Tensor& t : m.params().tensors()) once.push_back(t.grad);
  m.params().zero_grad();
  m.forward(g);
  m.backward(pg * 2.0);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(m.params().tensors()[i].grad, 2.0 * once[i]);
  EXPECT_FALSE(m.has_cache());
}

TEST(Adam, MatchesHandComputedSteps) {
  ParamStore ps;
  Tensor& t = ps.add("w", 1, 1);
  t.value(0, 0) = 1.0;
  const AdamOptions o{0.1, 0.9, 0.999, 1e-8};
  double m = 0, v = 0, w = 1.0;
  for (int step = 1; step <= 3; ++step) {
    const double g = 0.5 * step;
    ps.at("w").grad(0, 0) = g;
    adam_step(ps, o);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1 - std::pow(0.9, step))) / (std::sqrt(v / (1 - std::pow(0.999, step))) + 1e-8);
    EXPECT_NEAR(ps.at("w").value(0, 0), w, 1e-15);
  }
  ParamStore zero;
  zero.add("z", 2, 2).value.setOnes();
  adam_step(zero, o);
  EXPECT_EQ(zero.at("z").value, DenseMatrix::Ones(2, 2));
}

TEST(GradCheck, PassesAndDetectsCorruption) {
  const EpipolarGraph g = toy_graph(10, 8);
  const Pose gt{Quaternion::from_axis_angle(Vec3::UnitX(), 0.2), Vec3(0.2, 0.1, 0.8)};
  for (const auto& name : preset_names()) {
    // Yaw has unbounded curvature near pitch = +-90 degrees; start away from it.
    std::uint64_t seed = 1;
    while (std::abs(extract_yaw(Model(make_preset(name, 8), seed).predict(g).pose().rotation).pitch) > 1.0) ++seed;
    Model m(make_preset(name, 8), seed);
    EXPECT_TRUE(grad_check(m, g, gt).passed()) << name;
  }
  Model m(make_preset("GAT+2GCN", 8), 3);
  GradCheckOptions o;
  o.corrupt = true;
  EXPECT_FALSE(grad_check(m, g, gt, {}, o).passed());
  ParamStore empty;
  EXPECT_TRUE(check_gradients(empty, {"x"}, [] { return std::vector<double>{0.0}; }, [](std::size_t) {}).entries.empty());
}

TEST(Checkpoint, RoundTripAndSchemaErrors) {
  Model m(make_preset("GIN_SumPool", 8), 4);
  m.params().step = 7;
  const std::string text = format_checkpoint(m, {{"epoch", "3"}});
  const Checkpoint c = parse_checkpoint(text);
  EXPECT_EQ(c.meta.at("epoch"), "3");
  EXPECT_EQ(c.model.config(), m.config());
  EXPECT_EQ(c.model.params().step, 7);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    EXPECT_EQ(c.model.params().tensors()[i].value, m.params().tensors()[i].value);
  EXPECT_EQ(format_checkpoint(c.model, c.meta), text);

  std::string v2 = text;
  v2.replace(v2.find("v1"), 2, "v2");
  try {
    parse_checkpoint(v2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
  }
  EXPECT_THROW(parse_checkpoint(text.substr(0, text.size() / 2)), Error);
}

// ---------------------------------------------------------------------------

TEST(Loss, QuatHemisphereAndHandValue) {
  const Quaternion g{1, 0, 0, 0};
  const Quaternion q = Quaternion::from_axis_angle(Vec3::UnitZ(), kPi / 2);
  const double c = std::cos(kPi / 4), s = std::sin(kPi / 4);
  EXPECT_NEAR(quat_loss(q, g), std::sqrt((c - 1) * (c - 1) + s * s), 1e-15);
  EXPECT_NEAR(quat_loss(q, g, QuatNorm::kL1), (1 - c) + s, 1e-15);
  EXPECT_EQ(quat_loss(-q, q), 0.0);
  EXPECT_EQ(quat_loss(q, g), quat_loss(-q, g));
  EXPECT_THROW(quat_loss(Quaternion{2, 0, 0, 0}, g), Error);
}

TEST(Loss, TranslationTerms) {
  EXPECT_NEAR(t_dir_loss(Vec3(1, 0, 0), Vec3(2, 0, 0)), 0.0, 1e-15);
  EXPECT_NEAR(t_dir_loss(Vec3(-1, 0, 0), Vec3(2, 0, 0)), 2.0, 1e-15);
  EXPECT_NEAR(t_dir_loss(Vec3(0, 3, 0), Vec3(2, 0, 0)), 1.0, 1e-15);
  bool degenerate = false;
  EXPECT_EQ(t_dir_loss(Vec3::Zero(), Vec3(1, 0, 0), &degenerate), 1.0);
  EXPECT_TRUE(degenerate);
  EXPECT_NEAR(t_scale_loss(Vec3(2, 0, 0), Vec3(0, 0.5, 0)), 1.5, 1e-15);
  const Vec3 a(0.3, -1.2, 0.4), b(2.0, 0.1, -0.7);
  EXPECT_NEAR(t_dir_loss(a, b), 1.0 - a.dot(b) / (a.norm() * b.norm()), 1e-15);
  EXPECT_NEAR(t_dir_loss(5.0 * a, b), t_dir_loss(a, b), 1e-15);
}

TEST(Loss, EssentialTerms) {
  Rng rng(11);
  const Pose p = random_pose(rng), gtp = random_pose(rng);
  const Mat3 Egt = skew(gtp.translation) * gtp.rotation_matrix();
  EXPECT_NEAR(frob_loss(p, Egt), (skew(p.translation) * p.rotation_matrix() - Egt).norm(), 1e-14);
  EXPECT_NEAR(frob_loss(Pose{p.rotation, Vec3::Zero()}, Egt), Egt.norm(), 1e-14);
  EXPECT_NEAR(svd_loss_of_matrix(Mat3::Identity()), 1.0, 1e-15);
  Mat3 M = Egt;
  M(0, 0) += 0.3;
  const Eigen::Vector3d s = Eigen::JacobiSVD<Mat3>(M).singularValues();
  EXPECT_NEAR(svd_loss_of_matrix(M), (s(0) - s(1)) * (s(0) - s(1)) + s(2) * s(2), 1e-12);
  EXPECT_LT(svd_loss(Pose{p.rotation, p.translation.normalized()}), 1e-15);
}

TEST(Loss, YawWrap) {
  const Quaternion a = Quaternion::from_axis_angle(Vec3::UnitZ(), deg2rad(170));
  const Quaternion b = Quaternion::from_axis_angle(Vec3::UnitZ(), deg2rad(-170));
  EXPECT_NEAR(yaw_loss(a, b), deg2rad(20), 1e-12);
  EXPECT_EQ(yaw_loss(a, a), 0.0);
}

TEST(Loss, TotalIsWeightedSum) {
  Rng rng(12);
  const PosePrediction pred = random_prediction(rng);
  const Pose gt = random_pose(rng);
  const LossTarget target = make_loss_target(gt);
  const LossWeights w{0.5, 2.0, 0.25, 3.0};
  const LossBreakdown b = total_loss(pred, target, w);
  const Pose pp = pred.pose();
  EXPECT_NEAR(b.quat, quat_loss(pp.rotation, gt.rotation), 1e-14);
  EXPECT_NEAR(b.t_dir, t_dir_loss(pred.translation(), gt.translation), 1e-14);
  EXPECT_NEAR(b.t_scale, t_scale_loss(pred.translation(), gt.translation), 1e-14);
  EXPECT_NEAR(b.frob, frob_loss(pp, essential_from_pose(gt)), 1e-12);
  EXPECT_NEAR(b.svd, svd_loss(pp), 1e-12);
  EXPECT_NEAR(b.yaw, yaw_loss(pp.rotation, gt.rotation), 1e-14);
  EXPECT_NEAR(b.total, 0.5 * (b.quat + b.t_dir + b.t_scale) + 2.0 * b.frob + 0.25 * b.svd + 3.0 * b.yaw, 1e-12);
  EXPECT_EQ(total_loss(pred, target, LossWeights{0, 0, 0, 0}).total, 0.0);
  EXPECT_THROW((LossWeights{-1, 1, 1, 1}.validate()), Error);

  PosePrediction perfect;
  perfect.q = gt.rotation.vec();
  perfect.t_raw = gt.translation.norm();
  perfect.t_dir = gt.translation / perfect.t_raw;
  EXPECT_LT(total_loss(perfect, target).total, 1e-12);
}

TEST(Loss, TermGradientsMatchFiniteDifferences) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const PosePrediction pred = random_prediction(rng);
    const LossTarget target = make_loss_target(random_pose(rng));
    for (LossTerm term : kAllLossTerms) {
      PredictionGrad g;
      loss_term(term, pred, target, {}, &g);
      const double h = 1e-6;
      auto fd = [&](auto&& perturb) {
        PosePrediction a = pred, b = pred;
        perturb(a, h);
        perturb(b, -h);
        return (loss_term(term, a, target, {}) - loss_term(term, b, target, {})) / (2 * h);
      };
      for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(g.q(k), fd([k](PosePrediction& p, double d) { p.q(k) += d; }), 1e-6)
            << loss_term_name(term) << " q" << k;
      }
      for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(g.t_dir(k), fd([k](PosePrediction& p, double d) { p.t_dir(k) += d; }), 1e-6)
            << loss_term_name(term) << " t" << k;
      }
      EXPECT_NEAR(g.t_raw, fd([](PosePrediction& p, double d) { p.t_raw += d; }), 1e-6) << loss_term_name(term);
    }
  }
}
