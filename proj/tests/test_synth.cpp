#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hsu/spatial.hpp"
#include "hsu/synth.hpp"
#include "oracles.hpp"

using namespace hsu;

namespace {

AbundanceFieldSpec field(FieldPattern p, std::uint64_t seed, int w = 20, int h = 15, int ends = 4) {
  AbundanceFieldSpec s;
  s.pattern = p;
  s.width = w;
  s.height = h;
  s.endmembers = ends;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(GenAbundances, ColumnsLieOnSimplex) {
  for (FieldPattern p : {FieldPattern::patches, FieldPattern::smooth}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const AbundanceMatrix a = gen_abundances(field(p, seed));
      EXPECT_GE(a.values.minCoeff(), 0.0);
      EXPECT_LT((a.values.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    }
  }
}

TEST(GenAbundances, DeterministicPerSeed) {
  for (FieldPattern p : {FieldPattern::patches, FieldPattern::smooth}) {
    const AbundanceMatrix a = gen_abundances(field(p, 42));
    const AbundanceMatrix b = gen_abundances(field(p, 42));
    const AbundanceMatrix c = gen_abundances(field(p, 43));
    EXPECT_EQ((a.values - b.values).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT((a.values - c.values).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(GenAbundances, PatchStructure) {
  AbundanceFieldSpec s = field(FieldPattern::patches, 3, 20, 15, 5);
  s.patch_size = 5;
  const AbundanceMatrix a = gen_abundances(s);
  for (int row = 0; row < 15; ++row) {
    for (int col = 0; col < 20; ++col) {
      const Vector px = a.values.col(row * 20 + col);
      const Vector anchor = a.values.col((row / 5 * 5) * 20 + col / 5 * 5);
      EXPECT_EQ((px - anchor).cwiseAbs().maxCoeff(), 0.0);
      Eigen::Index dom = 0;
      const double top = px.maxCoeff(&dom);
      EXPECT_GE(top, 0.6);
      EXPECT_LE(top, 1.0);
      for (int r = 0; r < 5; ++r)
        if (r != dom) {
          EXPECT_NEAR(px(r), (1.0 - top) / 4.0, 1e-15);
        }
    }
  }
}

TEST(GenAbundances, CorrelationLengthControlsSmoothness) {
  const GridStencil st(32, 32);
  double rough = 0.0, smooth = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AbundanceFieldSpec s = field(FieldPattern::smooth, seed, 32, 32, 5);
    s.correlation_length = 0.0;
    rough += regularizer_value(gen_abundances(s).values, st) / 1024.0;
    s.correlation_length = 10.0;
    smooth += regularizer_value(gen_abundances(s).values, st) / 1024.0;
  }
  EXPECT_GT(rough, 2.0 * smooth);
}

TEST(GenAbundances, RejectsBadSpec) {
  AbundanceFieldSpec s = field(FieldPattern::patches, 1, 4, 4, 3);
  s.patch_size = 5;
  EXPECT_THROW(gen_abundances(s), InvalidArgument);
  s = field(FieldPattern::smooth, 1, 4, 4, 1);
  EXPECT_THROW(gen_abundances(s), InvalidArgument);
}

TEST(Mix, BilinearCrossTermsVanishForPurePixel) {
  std::mt19937_64 rng(1);
  const Matrix m = oracle::random_uniform(12, 3, 0.1, 0.9, rng);
  Matrix a = Matrix::Zero(3, 1);
  a(0, 0) = 1.0;
  MixtureSpec spec;
  spec.model = MixtureModel::bilinear;
  const SceneCube c = mix(AbundanceMatrix{a}, EndmemberMatrix(m), spec, 1, 1);
  EXPECT_LT((c.pixel(0) - m.col(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mix, BilinearMatchesPairSum) {
  std::mt19937_64 rng(2);
  const Matrix m = oracle::random_uniform(6, 4, 0.0, 1.0, rng);
  const Vector a = oracle::random_simplex(4, rng);
  MixtureSpec spec;
  spec.model = MixtureModel::bilinear;
  const SceneCube c = mix(AbundanceMatrix{Matrix(a)}, EndmemberMatrix(m), spec, 1, 1);
  Vector expect = m * a;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) expect += a(i) * a(j) * m.col(i).cwiseProduct(m.col(j));
  EXPECT_LT((c.pixel(0) - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Mix, BilinearDominatesLinear) {
  std::mt19937_64 rng(3);
  const Matrix m = oracle::random_uniform(10, 3, 0.0, 1.0, rng);
  const AbundanceMatrix a = gen_abundances(field(FieldPattern::smooth, 3, 6, 5, 3));
  MixtureSpec lin, bil;
  bil.model = MixtureModel::bilinear;
  lin.model = MixtureModel::linear;
  const SceneCube cl = mix(a, EndmemberMatrix(m), lin, 6, 5);
  const SceneCube cb = mix(a, EndmemberMatrix(m), bil, 6, 5);
  EXPECT_GE((cb.data() - cl.data()).minCoeff(), 0.0);
  EXPECT_LT((cl.data() - m * a.values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mix, PnmmPowerLaw) {
  const Matrix m = Matrix::Constant(5, 3, 0.25);
  Matrix a = Matrix::Zero(3, 1);
  a(1, 0) = 1.0;
  MixtureSpec spec;
  spec.model = MixtureModel::pnmm;
  const SceneCube c = mix(AbundanceMatrix{a}, EndmemberMatrix(m), spec, 1, 1);
  for (int l = 0; l < 5; ++l) EXPECT_NEAR(c.data()(l, 0), 0.37893, 1e-5);
  EXPECT_NEAR(c.data()(0, 0), std::pow(0.25, 0.7), 1e-15);
  Matrix neg = m;
  neg(0, 1) = -1.0;
  EXPECT_THROW(mix(AbundanceMatrix{a}, EndmemberMatrix(neg), spec, 1, 1), InvalidArgument);
}

TEST(AddNoise, SigmaFromSnr) {
  // P_signal = 1 at 20 dB gives sigma^2 = 0.01.
  const SceneCube clean(100, 100, Matrix::Ones(2, 10000));
  const SceneCube noisy = add_noise(clean, 20.0, 5);
  const Matrix diff = noisy.data() - clean.data();
  const double mean = diff.mean();
  const double var = (diff.array() - mean).square().sum() / (diff.size() - 1);
  EXPECT_NEAR(var, 0.01, 0.01 * 5.0 * std::sqrt(2.0 / diff.size()));
}

TEST(AddNoise, InfiniteSnrIsIdentity) {
  const SceneCube clean(2, 2, Matrix::Constant(3, 4, 0.5));
  const SceneCube same = add_noise(clean, std::numeric_limits<double>::infinity(), 1);
  EXPECT_EQ((same.data() - clean.data()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(std::isinf(realized_snr_db(same, clean)));
  EXPECT_THROW(add_noise(SceneCube(2, 2, Matrix::Zero(3, 4)), 20.0, 1), InvalidArgument);
}

TEST(AddNoise, RealizedSnrOnDeskSizedCube) {
  std::mt19937_64 rng(6);
  const Matrix m = oracle::random_uniform(50, 5, 0.1, 0.9, rng);
  const AbundanceMatrix a = gen_abundances(field(FieldPattern::patches, 6, 64, 64, 5));
  const SceneCube clean = mix(a, EndmemberMatrix(m), MixtureSpec{}, 64, 64);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double snr = realized_snr_db(add_noise(clean, 20.0, seed), clean);
    EXPECT_GE(snr, 19.8);
    EXPECT_LE(snr, 20.2);
  }
}

TEST(AddNoise, UnbiasedPerEntry) {
  const SceneCube clean(2, 1, (Matrix(2, 2) << 0.2, 0.9, 0.5, 0.4).finished());
  const double sigma = std::sqrt(mean_power(clean.data()) / 100.0);
  Matrix sum = Matrix::Zero(2, 2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) sum += add_noise(clean, 20.0, seed).data();
  const Matrix mean = sum / 100.0;
  EXPECT_LT((mean - clean.data()).cwiseAbs().maxCoeff(), 3.0 * sigma / 10.0);
}

TEST(PickEndmembers, DistinctDeterministicColumns) {
  const Matrix lib = synthetic_library();
  ASSERT_EQ(lib.rows(), 224);
  ASSERT_EQ(lib.cols(), 16);
  const EndmemberMatrix a = pick_endmembers(lib, 5, 99);
  const EndmemberMatrix b = pick_endmembers(lib, 5, 99);
  EXPECT_EQ((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 0.0);
  std::set<int> cols;
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 16; ++c)
      if (a.matrix().col(i) == lib.col(c)) cols.insert(c);
  }
  EXPECT_EQ(cols.size(), 5u);
  EXPECT_THROW(pick_endmembers(lib, 17, 1), InvalidArgument);
}

TEST(PickEndmembers, WholeLibraryIsAPermutation) {
  const Matrix lib = synthetic_library(30, 6, 4);
  const EndmemberMatrix all = pick_endmembers(lib, 6, 7);
  std::set<int> cols;
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 6; ++c)
      if (all.matrix().col(i) == lib.col(c)) cols.insert(c);
  EXPECT_EQ(cols.size(), 6u);
}

TEST(SyntheticLibrary, ReflectanceRange) {
  const Matrix lib = synthetic_library();
  EXPECT_GE(lib.minCoeff(), 0.02);
  EXPECT_LE(lib.maxCoeff(), 0.98);
}

TEST(LinearEndToEnd, FclsRecoversNoiselessLinearMixture) {
  // Covered with the pixel solver in the metrics tests; here only the mixing side.
  std::mt19937_64 rng(8);
  const Matrix m = oracle::random_uniform(20, 3, 0.0, 1.0, rng);
  const AbundanceMatrix a = gen_abundances(field(FieldPattern::patches, 8, 10, 10, 3));
  MixtureSpec lin;
  lin.model = MixtureModel::linear;
  const SceneCube c = mix(a, EndmemberMatrix(m), lin, 10, 10);
  EXPECT_LT((c.data() - m * a.values).norm(), 1e-12);
}
