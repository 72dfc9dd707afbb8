#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sgear/model/semantic.hpp"
#include "test_util.hpp"

using namespace sgear;
using namespace sgear::model;
using diff::Tensor;
using test::max_abs_diff;

namespace {

Tensor orthonormal3() { return Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}); }

bool all_zero(std::span<const double> g) {
  return std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
}

bool any_nonzero(std::span<const double> g) { return !all_zero(g); }

}  // namespace

TEST(Subset, SizesAndDeterminism) {
  EXPECT_EQ(subset_size(4053, 0.1), 406u);
  EXPECT_EQ(subset_size(10, 0.3), 3u);
  EXPECT_EQ(subset_size(7, 1.0), 7u);
  EXPECT_EQ(subset_size(5, 0.01), 1u);
  EXPECT_THROW(subset_size(5, 0.0), ConfigError);
  EXPECT_THROW(subset_size(5, 1.5), ConfigError);

  auto a = PrototypeSubset::sample(4053, 0.1, 9);
  auto b = PrototypeSubset::sample(4053, 0.1, 9);
  auto c = PrototypeSubset::sample(4053, 0.1, 10);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_NE(a.indices, c.indices);
  EXPECT_EQ(a.size(), 406u);
  EXPECT_TRUE(std::is_sorted(a.indices.begin(), a.indices.end()));
  EXPECT_EQ(std::set<std::size_t>(a.indices.begin(), a.indices.end()).size(), 406u);
  EXPECT_TRUE(PrototypeSubset::sample(8, 1.0, 3).full());
}

TEST(RelativeRepr, Examples) {
  Rng rng(1);
  Tensor p = rng.normal_tensor({5, 4}, 1.0);
  Tensor r = relative_repr(diff::slice_rows(p, 3, 1), p, PrototypeSubset::all(5));
  EXPECT_NEAR(r.at(0, 3), 1.0, 1e-15);
  for (double v : r.data()) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
  Tensor o = relative_repr(Tensor::from({3}, {0, 1, 0}), orthonormal3(), PrototypeSubset::all(3));
  EXPECT_EQ(o.values(), (std::vector<double>{0, 1, 0}));

  auto sub = PrototypeSubset::sample(4053, 0.1, 2);
  Tensor big = rng.normal_tensor({4053, 4}, 1.0);
  EXPECT_EQ(relative_repr(rng.normal_tensor({1, 4}, 1.0), big, sub).dim(1), 406u);
  EXPECT_THROW(relative_repr(rng.normal_tensor({1, 3}, 1.0), big, sub), DimensionError);
}

TEST(LanguageTargets, Examples) {
  Rng rng(2);
  Tensor lang = rng.normal_tensor({5, 6}, 1.0);
  LanguageTargets t(lang);
  auto all = PrototypeSubset::all(5);
  for (std::size_t y = 0; y < 5; ++y) {
    Tensor row = t.row(y, all);
    EXPECT_DOUBLE_EQ(row.at(0, y), 1.0);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(row.at(0, j), test::cosine_oracle(&lang.values()[y * 6], &lang.values()[j * 6], 6), 1e-9);
    }
  }
  LanguageTargets o(orthonormal3());
  EXPECT_EQ(o.row(2, PrototypeSubset::all(3)).values(), (std::vector<double>{0, 0, 1}));
  EXPECT_THROW(t.row(5, all), IndexError);

  PrototypeSubset sub{5, {1, 3}};
  EXPECT_EQ(t.row(3, sub).dim(1), 2u);
  EXPECT_DOUBLE_EQ(t.row(3, sub).at(0, 1), 1.0);
}

TEST(CosineAttention, Examples) {
  Rng rng(3);
  Tensor p = rng.normal_tensor({4, 3}, 1.0);
  Tensor z = rng.normal_tensor({1, 3}, 1.0);
  auto all = PrototypeSubset::all(4);
  EXPECT_EQ(cosine_attention(z, p, Tensor::scalar(1000.0), all).values(), z.values());

  Tensor one = rng.normal_tensor({1, 3}, 1.0);
  Tensor zbar_only = cosine_attention(z, one, Tensor::scalar(-1000.0), PrototypeSubset::all(1));
  EXPECT_LT(max_abs_diff(zbar_only, one), 1e-12);

  // Hand evaluation, K = 2, alpha = 0: similarities 1 and 0.
  Tensor p2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor zz = Tensor::from({1, 2}, {2, 0});
  const double e = std::exp(1.0), w0 = e / (e + 1.0), w1 = 1.0 / (e + 1.0);
  Tensor out = cosine_attention(zz, p2, Tensor::scalar(0.0), PrototypeSubset::all(2));
  EXPECT_NEAR(out.at(0, 0), 0.5 * 2 + 0.5 * w0, 1e-9);
  EXPECT_NEAR(out.at(0, 1), 0.5 * w1, 1e-9);
}

TEST(CosineAttention, ConvexCombinationAndGradientIntoZ) {
  Rng rng(4);
  Tensor p = rng.normal_tensor({5, 3}, 1.0, true);
  Tensor z = rng.normal_tensor({2, 3}, 1.0, true);
  Tensor alpha = Tensor::scalar(0.7, true);
  auto all = PrototypeSubset::all(5);
  Tensor out = cosine_attention(z, p, alpha, all);
  const Tensor zbar = diff::matmul(diff::softmax(diff::cosine_matrix(z, p)), p);
  const double s = 1.0 / (1.0 + std::exp(-0.7));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], s * z[i] + (1 - s) * zbar[i], 1e-12);
  // Removing the direct path leaves the similarity path, so z still gets gradient.
  diff::sum(cosine_attention(z, p, Tensor::scalar(-1000.0), all)).backward();
  EXPECT_TRUE(any_nonzero(z.grad()));
}

TEST(Classify, Examples) {
  diff::ParameterStore store;
  Rng rng(5);
  nn::Linear head(store, "head", 3, 4, rng);
  for (auto& v : head.weight.mutable_data()) v = 0.0;
  auto c = classify(Tensor::from({1, 3}, {1, 2, 3}), head);
  for (double p : c.probabilities) EXPECT_DOUBLE_EQ(p, 0.25);

  // Weight column 2 picks input channel 1.
  head.weight.mutable_data()[1 * 4 + 2] = 1.0;
  auto sel = classify(Tensor::from({1, 3}, {0.1, 5.0, 0.2}), head);
  EXPECT_EQ(std::max_element(sel.probabilities.begin(), sel.probabilities.end()) - sel.probabilities.begin(), 2);

  nn::Linear h2(store, "h2", 3, 4, rng);
  for (auto& v : h2.bias.mutable_data()) v = rng.normal();
  Tensor x = rng.normal_tensor({1, 3}, 1.0);
  auto r = classify(x, h2);
  for (std::size_t j = 0; j < 4; ++j) {
    double acc = h2.bias[j];
    for (std::size_t i = 0; i < 3; ++i) acc += x[i] * h2.weight.at(i, j);
    EXPECT_NEAR(r.logits[j], acc, 1e-12);
  }
}

TEST(LossSem, ExamplesAndDetach) {
  Tensor p = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto all = PrototypeSubset::all(2);
  Tensor z = Tensor::from({1, 2}, {3, 4});
  Tensor same = relative_repr(z, p, all).detach();
  EXPECT_EQ(loss_sem(z, p, same, all).item(), 0.0);

  // r^z = (0.5, -0.2) against target (0.3, 0.1) -> mean(0.2, 0.3).
  EXPECT_NEAR(diff::l1_mean(Tensor::from({1, 2}, {0.5, -0.2}), Tensor::from({1, 2}, {0.3, 0.1})).item(), 0.25, 1e-15);

  Rng rng(6);
  Tensor zz = rng.normal_tensor({1, 4}, 1.0, true);
  Tensor pp = rng.normal_tensor({3, 4}, 1.0, true);
  Tensor target = Tensor::from({1, 3}, {0.9, -0.3, 0.1});
  loss_sem(zz, pp, target, PrototypeSubset::all(3)).backward();
  EXPECT_TRUE(all_zero(zz.grad()));
  EXPECT_TRUE(any_nonzero(pp.grad()));
}

TEST(LossReg, ExamplesAndDetach) {
  Tensor p = Tensor::from({2, 2}, {0, 0, 1, 1});
  EXPECT_EQ(loss_reg(Tensor::from({1, 2}, {1, 1}), p, 1).item(), 0.0);
  EXPECT_DOUBLE_EQ(loss_reg(Tensor::from({1, 2}, {1, 0}), p, 0).item(), 0.5);
  EXPECT_THROW(loss_reg(Tensor::from({1, 2}, {1, 0}), p, 2), IndexError);

  Rng rng(7);
  Tensor z = rng.normal_tensor({1, 3}, 1.0, true);
  Tensor pp = rng.normal_tensor({4, 3}, 1.0, true);
  loss_reg(z, pp, 2).backward();
  EXPECT_TRUE(all_zero(pp.grad()));
  EXPECT_TRUE(any_nonzero(z.grad()));
}

TEST(LossPast, Examples) {
  Tensor perfect = Tensor::from({2, 3}, {100, 0, 0, 0, 0, 100});
  auto lp = loss_past(perfect, {0, 2});
  EXPECT_NEAR(lp.value.item(), 0.0, 1e-40);
  EXPECT_FALSE(lp.empty);

  auto u = loss_past(Tensor::zeros({3, 4}), {1, 3, 0});
  EXPECT_NEAR(u.value.item(), 3 * std::log(4.0), 1e-12);

  auto skip = loss_past(Tensor::zeros({3, 4}), {1, std::nullopt, 0});
  EXPECT_NEAR(skip.value.item(), 2 * std::log(4.0), 1e-12);

  auto none = loss_past(Tensor::zeros({2, 4}), {std::nullopt, std::nullopt});
  EXPECT_TRUE(none.empty);
  EXPECT_EQ(none.value.item(), 0.0);
}

TEST(LossFeat, ExamplesAndDetach) {
  Tensor ihat = Tensor::from({3, 2}, {9, 9, 1, 2, 3, 4});
  Tensor shifted = Tensor::from({3, 2}, {1, 2, 3, 4, 7, 7});
  EXPECT_EQ(loss_feat(shifted, ihat).value.item(), 0.0);
  EXPECT_DOUBLE_EQ(loss_feat(Tensor::from({2, 1}, {1, 5}), Tensor::from({2, 1}, {0, 3})).value.item(), 4.0);
  EXPECT_NEAR(loss_feat(Tensor::from({2, 1}, {1, 5}), Tensor::from({2, 1}, {0, 3}), FeatLoss::kL2).value.item(), 2.0, 1e-9);
  auto single = loss_feat(Tensor::zeros({1, 2}), Tensor::zeros({1, 2}));
  EXPECT_TRUE(single.empty);

  Rng rng(8);
  Tensor z = rng.normal_tensor({4, 3}, 1.0, true);
  Tensor i = rng.normal_tensor({4, 3}, 1.0, true);
  loss_feat(z, i).value.backward();
  EXPECT_TRUE(all_zero(i.grad()));
  EXPECT_TRUE(any_nonzero(z.grad()));
}

TEST(TotalLoss, WeightedSum) {
  LossParts p{Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0), Tensor::scalar(4.0), Tensor::scalar(5.0)};
  EXPECT_DOUBLE_EQ(total_loss(p, {4, 1, 1, 1, 1}).item(), 4 + 2 + 3 + 4 + 5);
  EXPECT_DOUBLE_EQ(total_loss(p, {1, 0.1, 1, 0.1, 1}).item(), 1 + 0.2 + 3 + 0.4 + 5);
  EXPECT_EQ(total_loss(p, {0, 0, 0, 0, 0}).item(), 0.0);
  LossParts partial{Tensor{}, Tensor{}, Tensor::scalar(3.0), Tensor::scalar(1.0), Tensor::scalar(1.0)};
  EXPECT_DOUBLE_EQ(total_loss(partial, {4, 1, 1, 1, 1}).item(), 5.0);
}

TEST(Geometry, SimilarityAndAlignment) {
  Rng rng(9);
  Tensor l = rng.normal_tensor({6, 4}, 1.0);
  auto s = similarity_matrix(l);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(s[i * 6 + i], 1.0, 1e-15);
  EXPECT_NEAR(alignment_score(l, l), 1.0, 1e-12);
  EXPECT_THROW(alignment_score(l, rng.normal_tensor({5, 4}, 1.0)), DimensionError);
}

TEST(Geometry, AlignmentMatchesTextbookPearson) {
  Tensor a = Tensor::from({3, 2}, {1, 0, 0.6, 0.8, 0, 1});
  Tensor b = Tensor::from({3, 2}, {1, 0, 1, 1, -1, 0.2});
  // Off-diagonal cosines in row-major order (i != j).
  auto off = [](const Tensor& p) {
    std::vector<double> v;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) v.push_back(test::cosine_oracle(&p.values()[i * 2], &p.values()[j * 2], 2));
    return v;
  };
  const auto x = off(a), y = off(b);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  EXPECT_NEAR(alignment_score(a, b), r, 1e-9);
}

TEST(Geometry, NearestActions) {
  Tensor p = Tensor::from({4, 2}, {1, 0, 0.9, 0.1, 0, 1, -1, 0});
  auto n = nearest_actions(0, p, 2);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n[0].cls, 1u);
  EXPECT_EQ(n[1].cls, 2u);
  EXPECT_NEAR(n[1].similarity, 0.0, 1e-15);
  EXPECT_EQ(nearest_actions(3, p, 10).size(), 3u);
  EXPECT_THROW(nearest_actions(4, p, 1), IndexError);
}

TEST(PrototypeInit, ClassMean) {
  std::vector<std::pair<std::vector<double>, std::size_t>> samples = {{{2, 4}, 1}};
  auto single = class_mean_prototypes(samples, 3, 2, 1);
  EXPECT_EQ(single.protos.at(1, 0), 2.0);
  EXPECT_EQ(single.protos.at(1, 1), 4.0);
  EXPECT_EQ(single.warnings.size(), 2u);

  Rng rng(10);
  samples.clear();
  for (int i = 0; i < 200; ++i) {
    samples.push_back({{rng.normal(), rng.normal(), rng.normal()}, rng.index(4)});
  }
  auto m = class_mean_prototypes(samples, 4, 3, 1);
  EXPECT_TRUE(m.warnings.empty());
  // Two-pass oracle: sum, then divide.
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> sum(3, 0.0);
    double count = 0;
    for (const auto& [e, y] : samples) {
      if (y != c) continue;
      for (std::size_t j = 0; j < 3; ++j) sum[j] += e[j];
      count += 1;
    }
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.protos.at(c, j), sum[j] / count, 1e-9);
  }
}

TEST(PrototypeInit, RandomIsSeeded) {
  EXPECT_EQ(random_prototypes(5, 4, 3).values(), random_prototypes(5, 4, 3).values());
  EXPECT_NE(random_prototypes(5, 4, 3).values(), random_prototypes(5, 4, 4).values());
  auto big = random_prototypes(200, 16, 1);
  double ss = 0;
  for (double v : big.data()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(big.size())), 0.25, 0.01);
}
