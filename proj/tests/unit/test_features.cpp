#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "data/encoders.hpp"
#include "features/feature_map.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"
#include "util/error.hpp"
#include "util/parallel.hpp"
#include "util/rng.hpp"

using namespace sorfgp;

namespace {

RowMatrix gauss(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed, 0);
  RowMatrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = scale * rng.normal();
  return x;
}

FeatureMapSpec make_spec(KernelKind k, std::size_t width, std::size_t m, std::uint64_t seed,
                         double sigma = 1.0, double beta = 1.0, std::size_t window = 1) {
  FeatureMapSpec s;
  s.kernel = k;
  s.input_width = width;
  s.num_rffs = m;
  s.seed = seed;
  s.window = window;
  s.hyper = {0.1, beta, sigma};
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Closed-form first-order arc-cosine kernel on augmented inputs.
double arccos1(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  const double t = std::acos(c);
  return na * nb / (2.0 * std::numbers::pi) * (std::sin(t) + (std::numbers::pi - t) * c);
}

Vector augment(const RowMatrix& x, Eigen::Index row) {
  Vector a(x.cols() + 1);
  a[0] = 1.0;
  a.tail(x.cols()) = x.row(row).transpose();
  return a;
}

}  // namespace

TEST(RbfFeatures, SelfSimilarityIsBetaSquared) {
  const FeatureMap map(make_spec(KernelKind::Rbf, 7, 256, 3, 0.8, 1.7));
  const RowMatrix z = map.transform(gauss(10, 7, 1));
  for (Eigen::Index i = 0; i < z.rows(); ++i) EXPECT_NEAR(z.row(i).squaredNorm(), 1.7 * 1.7, 1e-12);
}

TEST(RbfFeatures, MonteCarloKernelValue) {
  RowMatrix x = RowMatrix::Zero(2, 8);
  x(1, 3) = 1.0;  // squared distance 1
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RowMatrix z = FeatureMap(make_spec(KernelKind::Rbf, 8, 65536, 100 + s)).transform(x);
    mean += z.row(0).dot(z.row(1)) / 20.0;
  }
  EXPECT_NEAR(mean, std::exp(-0.5), 0.01);
}

TEST(RbfFeatures, ErrorShrinksWithFeatures) {
  const RowMatrix x = gauss(200, 16, 7, 0.25);
  auto max_err = [&](std::size_t m) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const RowMatrix z = FeatureMap(make_spec(KernelKind::Rbf, 16, m, 40 + s)).transform(x);
      double worst = 0.0;
      for (Eigen::Index p = 0; p < 100; ++p) {
        const double ref = oracle::rbf(x.row(2 * p).transpose(), x.row(2 * p + 1).transpose(), 1.0, 1.0);
        worst = std::max(worst, std::abs(z.row(2 * p).dot(z.row(2 * p + 1)) - ref));
      }
      total += worst;
    }
    return total;
  };
  EXPECT_GE(max_err(4096) / max_err(16384), 1.5);
}

TEST(RbfFeatures, RangeAndLayout) {
  const FeatureMap map(make_spec(KernelKind::Rbf, 3, 64, 5, 2.0, 1.3));
  const RowMatrix x = gauss(20, 3, 2);
  const RowMatrix z = map.transform(x);
  const double scale = 1.3 / std::sqrt(32.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index k = 0; k < 32; ++k) {
      // cos block then sin block of the same frequency
      EXPECT_NEAR(z(i, k) * z(i, k) + z(i, k + 32) * z(i, k + 32), scale * scale, 1e-12);
    }
    for (Eigen::Index j = 0; j < z.rows(); ++j) EXPECT_LE(std::abs(z.row(i).dot(z.row(j))), 1.3 * 1.3 + 1e-12);
  }
}

TEST(RbfFeatures, SpecValidation) {
  EXPECT_THROW(FeatureMap(make_spec(KernelKind::Rbf, 3, 63, 1)), ValidationError);
  auto s = make_spec(KernelKind::Rbf, 3, 64, 1);
  s.variance_rffs = 128;
  EXPECT_THROW(FeatureMap{s}, ValidationError);
  const FeatureMap map(make_spec(KernelKind::Rbf, 3, 64, 1));
  EXPECT_THROW(map.transform(gauss(2, 4, 1)), ValidationError);
}

TEST(RbfFeatures, HyperparamsDoNotResample) {
  const FeatureMap a(make_spec(KernelKind::Rbf, 4, 128, 9, 1.0, 1.0));
  const FeatureMap b = a.with_hyperparams({0.1, 2.0, 0.5});
  const FeatureMap c(make_spec(KernelKind::Rbf, 4, 128, 9, 0.5, 2.0));
  const RowMatrix x = gauss(5, 4, 3);
  EXPECT_EQ(b.transform(x), c.transform(x));
}

TEST(RbfFeatures, IndependentOfWorkerCount) {
  const FeatureMap map(make_spec(KernelKind::Rbf, 9, 512, 2));
  const RowMatrix x = gauss(700, 9, 4);
  set_num_threads(1);
  const RowMatrix a = map.transform(x);
  set_num_threads(3);
  const RowMatrix b = map.transform(x);
  set_num_threads(1);
  EXPECT_EQ(a, b);
}

TEST(ArcCosFeatures, NonNegativeAndOriginValue) {
  RowMatrix x = RowMatrix::Zero(1, 5);
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RowMatrix z = FeatureMap(make_spec(KernelKind::ArcCosine1, 5, 8192, 300 + s)).transform(x);
    EXPECT_GE(z.minCoeff(), 0.0);
    mean += z.row(0).squaredNorm() / 20.0;
  }
  EXPECT_NEAR(mean, 0.5, 0.5 * 0.02);
}

TEST(ArcCosFeatures, MatchesClosedForm) {
  const RowMatrix x = gauss(6, 4, 11, 0.7);
  Matrix est = Matrix::Zero(6, 6);
  for (std::uint64_t s = 0; s < 8; ++s) {
    const RowMatrix z = FeatureMap(make_spec(KernelKind::ArcCosine1, 4, 16384, 500 + s, 1.0, 1.5)).transform(x);
    est += z * z.transpose() / 8.0;
  }
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) {
      const double ref = 1.5 * 1.5 * arccos1(augment(x, i), augment(x, j));
      EXPECT_NEAR(est(i, j), ref, 0.03 * std::abs(ref) + 1e-3);
    }
}

TEST(FhtConv, SingleWindowEqualsRbf) {
  const RowMatrix seq = gauss(3, 4, 1);  // W = 3, one window
  const FeatureMap conv(make_spec(KernelKind::FhtConv1d, 4, 256, 17, 0.6, 1.2, 3));
  const FeatureMap rbf(make_spec(KernelKind::Rbf, 12, 256, 17, 0.6, 1.2));
  const RowMatrix flat = Eigen::Map<const RowMatrix>(seq.data(), 1, 12);
  EXPECT_EQ(conv.transform_record(seq), Vector(rbf.transform(flat).row(0).transpose()));
}

TEST(FhtConv, MatchesBruteForceKernel) {
  const RowMatrix a = encode_sequence_onehot("ACDACDWY", kAminoAlphabet);
  const RowMatrix b = encode_sequence_onehot("ACDWCDWYA", kAminoAlphabet);
  const double ref = oracle::conv_kernel(a, b, 3, 0.5, 1.0);
  double est = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const FeatureMap map(make_spec(KernelKind::FhtConv1d, 20, 16384, 70 + s, 0.5, 1.0, 3));
    est += map.transform_record(a).dot(map.transform_record(b)) / 5.0;
  }
  EXPECT_NEAR(est, ref, 0.05 * ref);
}

TEST(FhtConv, ConstantSequenceScalesWithWindowCount) {
  RowMatrix row = gauss(1, 3, 5);
  RowMatrix seq(6, 3);
  for (Eigen::Index i = 0; i < 6; ++i) seq.row(i) = row.row(0);
  RowMatrix win(2, 3);
  win.row(0) = row.row(0);
  win.row(1) = row.row(0);
  const FeatureMap map(make_spec(KernelKind::FhtConv1d, 3, 128, 8, 1.0, 1.0, 2));
  const Vector one = map.transform_record(win);
  EXPECT_LT((map.transform_record(seq) - 5.0 * one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FhtConv, ShortSequenceRejected) {
  const FeatureMap map(make_spec(KernelKind::FhtConv1d, 3, 64, 8, 1.0, 1.0, 4));
  EXPECT_THROW(map.transform_record(gauss(3, 3, 1)), ValidationError);
}

TEST(FhtConv, ConvergesWithFeatures) {
  const RowMatrix a = encode_sequence_onehot("MKVLAAGICW", kAminoAlphabet);
  const RowMatrix b = encode_sequence_onehot("MKVLSAGICW", kAminoAlphabet);
  const double ref = oracle::conv_kernel(a, b, 3, 0.4, 1.0);
  std::vector<double> e1, e4;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const FeatureMap m1(make_spec(KernelKind::FhtConv1d, 20, 1024, 900 + s, 0.4, 1.0, 3));
    const FeatureMap m4(make_spec(KernelKind::FhtConv1d, 20, 4096, 900 + s, 0.4, 1.0, 3));
    e1.push_back(std::abs(m1.transform_record(a).dot(m1.transform_record(b)) - ref));
    e4.push_back(std::abs(m4.transform_record(a).dot(m4.transform_record(b)) - ref));
  }
  EXPECT_LT(median(e4), median(e1));
}

TEST(FastConv, StageOneMatchesDenseFilters) {
  const RowMatrix seq = gauss(9, 4, 21);
  const FeatureMap map(make_spec(KernelKind::FastConv1d, 4, 64, 31, 1.0, 1.0, 3));
  ASSERT_NE(map.stage1_sorf(), nullptr);
  const Matrix f = oracle::dense_sorf(*map.stage1_sorf());
  ASSERT_EQ(f.rows(), 2 * 16);
  Vector ref = Vector::Zero(f.rows());
  for (Eigen::Index p = 0; p + 3 <= seq.rows(); ++p) {
    const Vector win = Eigen::Map<const Vector>(seq.row(p).data(), 12);
    ref = ref.cwiseMax((f * win).cwiseMax(0.0));
  }
  const Vector got = map.stage1(seq);
  EXPECT_GE(got.minCoeff(), 0.0);
  EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FastConv, SecondStageIsRbfOnProfile) {
  const RowMatrix seq = encode_sequence_onehot("ACDEFGHIK", kAminoAlphabet);
  const FeatureMap map(make_spec(KernelKind::FastConv1d, 20, 256, 12, 0.3, 1.4, 4));
  const Vector z = map.transform_record(seq);
  EXPECT_NEAR(z.squaredNorm(), 1.4 * 1.4, 1e-12);
  const FeatureMap stage2(map.stage2_spec());
  const RowMatrix profile = map.stage1(seq).transpose();
  EXPECT_EQ(Vector(stage2.transform(profile).row(0).transpose()), z);
}

TEST(FastConv, MaxPoolInvariance) {
  // A constant sequence has the same profile at any length.
  RowMatrix row = gauss(1, 5, 2);
  auto repeat = [&](Eigen::Index n) {
    RowMatrix s(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) s.row(i) = row.row(0);
    return s;
  };
  const FeatureMap map(make_spec(KernelKind::FastConv1d, 5, 128, 6, 1.0, 1.0, 2));
  EXPECT_EQ(map.transform_record(repeat(4)), map.transform_record(repeat(12)));
  // Tripling a sequence can only add windows, so every profile entry is >=.
  const RowMatrix s = gauss(5, 5, 3);
  RowMatrix t(15, 5);
  t << s, s, s;
  const Vector a = map.stage1(s), b = map.stage1(t);
  EXPECT_TRUE(((b - a).array() >= 0.0).all());
}

TEST(FastConv, GramIsPsd) {
  const FeatureMap map(make_spec(KernelKind::FastConv1d, 20, 256, 9, 0.3, 1.0, 3));
  RowMatrix z(30, 256);
  CounterRng rng(4, 0);
  for (Eigen::Index i = 0; i < 30; ++i) {
    std::string s;
    for (int k = 0; k < 12; ++k) s += kAminoAlphabet[rng.below(20)];
    z.row(i) = map.transform_record(encode_sequence_onehot(s, kAminoAlphabet)).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Matrix(z * z.transpose()));
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9 * eig.eigenvalues().maxCoeff());
}

TEST(FastConv, PersistedStageOneReproducesFeatures) {
  TempDir tmp;
  InMemorySource src(InputKind::Sequence, 20);
  Chunk ch(InputKind::Sequence, 20);
  ch.add(encode_sequence_onehot("ACDEFGH", kAminoAlphabet), 1.0);
  ch.add(encode_sequence_onehot("WYWYWYW", kAminoAlphabet), 2.0);
  src.append(ch);
  const FeatureMap map(make_spec(KernelKind::FastConv1d, 20, 128, 5, 0.3, 1.0, 3));
  const auto ds = persist_stage1(map, src, 8, tmp / "s1");
  EXPECT_EQ(ds.width(), map.spec().stage1_width());
  const FeatureMap stage2(map.stage2_spec());
  const RowMatrix z = stage2.transform(ds.load_chunk(0));
  std::vector<double> buf;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto v = ch.record(i, buf);
    const RowMatrix rec = Eigen::Map<const RowMatrix>(v.data, v.rows, v.width);
    EXPECT_LT((z.row(i).transpose() - map.transform_record(rec)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(GraphRbf, PermutationGivesIdenticalBits) {
  const RowMatrix nodes = gauss(6, 4, 13);
  RowMatrix perm(6, 4);
  const int order[6] = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i) perm.row(i) = nodes.row(order[i]);
  const FeatureMap map(make_spec(KernelKind::GraphRbf, 4, 512, 3));
  EXPECT_EQ(map.transform_record(nodes), map.transform_record(perm));
}

TEST(GraphRbf, SingleNodeEqualsRbf) {
  const RowMatrix node = gauss(1, 6, 2);
  const FeatureMap g(make_spec(KernelKind::GraphRbf, 6, 128, 44, 0.7));
  const FeatureMap r(make_spec(KernelKind::Rbf, 6, 128, 44, 0.7));
  EXPECT_EQ(g.transform_record(node), Vector(r.transform(node).row(0).transpose()));
}

TEST(GraphRbf, MatchesBruteForceKernel) {
  const RowMatrix a = gauss(4, 3, 5, 0.5);
  const RowMatrix b = gauss(3, 3, 6, 0.5);
  const double ref = oracle::graph_kernel(a, b, 1.0, 1.0);
  double est = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const FeatureMap map(make_spec(KernelKind::GraphRbf, 3, 16384, 60 + s));
    est += map.transform_record(a).dot(map.transform_record(b)) / 5.0;
  }
  EXPECT_NEAR(est, ref, 0.05 * ref);
}

TEST(GraphRbf, MoleculePermutationInvariance) {
  MoleculeRecord m{{"C", "O", "H", "H"},
                   {{{0, 0, 0}}, {{1.2, 0, 0}}, {{-0.6, 0.9, 0}}, {{-0.6, -0.9, 0}}}, 0.0};
  MoleculeRecord p{{"H", "O", "H", "C"},
                   {{{-0.6, -0.9, 0}}, {{1.2, 0, 0}}, {{-0.6, 0.9, 0}}, {{0, 0, 0}}}, 0.0};
  const std::vector<std::string> elems{"H", "C", "O"};
  const FeatureMap map(make_spec(KernelKind::GraphRbf, molecule_width(3, 3), 256, 1));
  EXPECT_EQ(map.transform_record(encode_molecule(m, elems, 3)),
            map.transform_record(encode_molecule(p, elems, 3)));
}

TEST(VarianceSpec, OwnSeedAndWidth) {
  auto s = make_spec(KernelKind::Rbf, 4, 2048, 77);
  const auto v = s.variance_spec();
  EXPECT_EQ(v.num_rffs, 512u);
  EXPECT_NE(v.main_seed(), s.main_seed());
  EXPECT_THROW(v.variance_spec(), ValidationError);
}
