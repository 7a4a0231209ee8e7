#include <gtest/gtest.h>

#include <cmath>

#include "gradient_suite.hpp"
#include "kinface/caae/trainer.hpp"
#include "kinface/data/checkpoint.hpp"
#include "kinface/dnanet/trainer.hpp"

using namespace kinface;
using namespace kinface::dnanet;

namespace {

Tensor<double> vec(std::initializer_list<double> v) { return Tensor<double>::from({v.size()}, v); }

Tensor<float> random_rows(std::size_t rows, std::size_t cols, SeededRng& rng) {
  Tensor<float> t({rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

TripletFeatures<float> random_triplets(std::size_t count, std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  return {random_rows(count, n, rng), random_rows(count, n, rng), random_rows(count, n, rng)};
}

}  // namespace

TEST(Selection, MaxExamples) {
  EXPECT_EQ(select_max(vec({1, -2, 0.5}), vec({0.5, 0, 0.5})), vec({1, 0, 0.5}));
  const auto g = vec({0.3, -0.7, 2.0});
  EXPECT_EQ(select_max(g, g), g);
  EXPECT_THROW(select_max(vec({1, 2}), vec({1})), ShapeError);
}

TEST(Selection, MaskExamples) {
  const auto f = vec({1, 2}), m = vec({3, 0});
  EXPECT_EQ(select_mask(f, m, SelectionMask{{1, 0}}), vec({1, 0}));
  EXPECT_EQ(select_mask(f, m, SelectionMask{{1, 1}}), f);
  EXPECT_EQ(select_mask(f, m, SelectionMask{{0, 0}}), m);
  EXPECT_THROW(select_mask(f, m, SelectionMask{{1}}), ShapeError);
  EXPECT_THROW((SelectionMask{{2, 0}}.validate()), std::invalid_argument);
}

TEST(Selection, RandomPairsIdentities) {
  SeededRng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor<double> f({7}), m({7});
    for (auto& v : f.data()) v = rng.uniform(-3, 3);
    for (auto& v : m.data()) v = rng.uniform(-3, 3);
    const auto r = sample_mask(7, rng);
    EXPECT_EQ(select_max(f, m), select_max(m, f));
    EXPECT_EQ(select_mask(f, m, r), select_mask(m, f, r.complement()));
    const auto c = select_mask(f, m, r);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_TRUE(c[i] == f[i] || c[i] == m[i]);
  }
}

TEST(Selection, VarFormsMatchTensorForms) {
  SeededRng rng(32);
  Tensor<double> f({2, 4}), m({2, 4});
  for (auto& v : f.data()) v = rng.uniform(-1, 1);
  for (auto& v : m.data()) v = rng.uniform(-1, 1);
  const SelectionMask r{{1, 0, 0, 1}};
  const auto vm = select_mask(Var<double>::constant(f), Var<double>::constant(m), r).value();
  for (std::size_t row = 0; row < 2; ++row)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(vm[row * 4 + j], r.bits[j] ? f[row * 4 + j] : m[row * 4 + j]);
  EXPECT_EQ(select_max(Var<double>::constant(f), Var<double>::constant(m)).value(), select_max(f, m));
}

TEST(Selection, SampleMaskBehaviour) {
  SeededRng a(5), b(5);
  EXPECT_EQ(sample_mask(100, a), sample_mask(100, b));
  SeededRng rng(6);
  const auto big = sample_mask(10000, rng);
  EXPECT_EQ(big.size(), 10000u);
  std::size_t ones = 0;
  for (auto bit : big.bits) ones += bit;
  EXPECT_GE(ones, 4500u);
  EXPECT_LE(ones, 5500u);
}

TEST(DnaNetModel, ShapesBoundsDeterminism) {
  DnaNetModel<float> model(DnaNetConfig{}, 1);
  SeededRng rng(2);
  const auto h = random_rows(1, 100, rng).reshaped({100});
  const auto g = genes_from_feature(model, h);
  EXPECT_EQ(g.shape(), Shape{100});
  EXPECT_EQ(g, genes_from_feature(model, h));
  for (int i = 0; i < 100; ++i) {
    Tensor<float> gi({100});
    for (auto& v : gi.data()) v = static_cast<float>(rng.uniform(-20, 20));
    const auto f = feature_from_genes(model, gi);
    ASSERT_EQ(f.shape(), Shape{100});
    for (float v : f.data()) ASSERT_LE(std::abs(v), 1.0f);
    if (i == 0) EXPECT_EQ(f, feature_from_genes(model, gi));
  }
  EXPECT_THROW(genes_from_feature(model, Tensor<float>({99})), ShapeError);
  EXPECT_THROW(feature_from_genes(model, Tensor<float>({7})), ShapeError);
}

TEST(DnaNetModel, GenesGradientMatchesFiniteDifferences) {
  DnaNetConfig c;
  c.feature_dim = 6;
  c.gene_dim = 5;
  c.hidden_widths = {7, 4};
  DnaNetModel<double> model(c, 3);
  SeededRng rng(4);
  Tensor<double> h({1, 6});
  for (auto& v : h.data()) v = rng.uniform(-1, 1);
  const auto fn = [&](const std::vector<Var<double>>& in) {
    return kinface::testing::weighted_sum(model.genes(in[0]));
  };
  EXPECT_LE(kinface::testing::max_relative_error(fn, {h}), 1e-4);
}

TEST(DnaNetModel, ChildFeatureProperties) {
  DnaNetModel<float> model(DnaNetConfig{}, 7);
  SeededRng rng(8);
  const auto h = random_rows(1, 100, rng).reshaped({100});
  const auto hm = random_rows(1, 100, rng).reshaped({100});
  const auto round_trip = feature_from_genes(model, genes_from_feature(model, h));
  const auto mask = sample_mask(100, rng);
  EXPECT_EQ(child_feature(model, h, h, SelectionMode::Max), round_trip);
  EXPECT_EQ(child_feature(model, h, h, SelectionMode::Mask, mask), round_trip);
  EXPECT_EQ(child_feature(model, h, hm, SelectionMode::Mask, mask),
            child_feature(model, hm, h, SelectionMode::Mask, mask.complement()));
  for (float v : child_feature(model, h, hm, SelectionMode::Max).data()) EXPECT_LE(std::abs(v), 1.0f);
  EXPECT_THROW(child_feature(model, h, hm, SelectionMode::Mask), std::invalid_argument);
}

TEST(DnaNetLosses, ReconstructionConventions) {
  EXPECT_EQ(reconstruction_loss(vec({0.2, -0.4}), vec({0.2, -0.4})), 0.0);
  EXPECT_EQ(reconstruction_loss(vec({1, 0}), vec({0, 0})), 1.0);
  EXPECT_EQ(reconstruction_loss(vec({1, -2}), vec({0, 0}), ReconstructionNorm::L1), 3.0);
  SeededRng rng(9);
  Tensor<double> a({100}), b({100});
  for (auto& v : a.data()) v = rng.uniform(-1, 1);
  for (auto& v : b.data()) v = rng.uniform(-1, 1);
  double s = 0;
  for (std::size_t i = 0; i < 100; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(reconstruction_loss(a, b), std::sqrt(s), 1e-12);
  EXPECT_THROW(reconstruction_loss(vec({1, 2}), vec({1})), ShapeError);
  EXPECT_EQ(parse_norm("L1"), ReconstructionNorm::L1);
  EXPECT_THROW(parse_norm("L3"), std::invalid_argument);
}

TEST(DnaNetLosses, ConstantHalfDiscriminator) {
  DnaNetModel<double> model(DnaNetConfig{}, 10);
  for (auto& p : model.dh_params())
    if (p.name() == "dh.out.weight") p.value().fill(0.0);
  SeededRng rng(11);
  auto pred = Var<double>::constant(caae::sample_prior<double>(3, 100, rng));
  auto z = Var<double>::constant(caae::sample_prior<double>(3, 100, rng));
  EXPECT_NEAR(dh_losses(model, pred, z).discriminator.value().item(), 2 * std::log(2.0), 1e-12);
}

TEST(DnaNetLosses, PerfectDiscriminatorApproachesZero) {
  DnaNetModel<double> model(DnaNetConfig{}, 12);
  for (auto& p : model.dh_params()) {
    if (p.name() == "dh.out.weight") p.value().fill(0.0);
    if (p.name() == "dh.out.bias") p.value().fill(40.0);
  }
  // Sigmoid saturates at 1 on every input, so only the fake half is penalised;
  // flipping the sign of the bias swaps the roles.
  SeededRng rng(13);
  auto z = Var<double>::constant(caae::sample_prior<double>(3, 100, rng));
  const auto terms = dh_losses(model, z, z);
  EXPECT_LT(terms.real_term.value().item(), 1e-6);
  EXPECT_TRUE(std::isfinite(terms.fake_term.value().item()));
}

TEST(DnaNetLosses, GeneratorTermGradientMatchesFiniteDifferences) {
  DnaNetConfig c;
  c.feature_dim = 5;
  c.gene_dim = 4;
  c.hidden_widths = {6, 6};
  c.dh_widths = {4, 3};
  DnaNetModel<double> model(c, 14);
  SeededRng rng(15);
  Tensor<double> hf({2, 5}), hm({2, 5});
  for (auto& v : hf.data()) v = rng.uniform(-1, 1);
  for (auto& v : hm.data()) v = rng.uniform(-1, 1);
  const auto fn = [&](const std::vector<Var<double>>& in) {
    auto pred = model.child(in[0], in[1]);
    return ops::binary_cross_entropy(model.discriminator(pred), caae::constant_targets<double>(2, 1.0));
  };
  EXPECT_LE(kinface::testing::max_relative_error(fn, {hf, hm}), 1e-4);
}

TEST(DnaNetTrainer, SeededRerunIsIdentical) {
  const auto data = random_triplets(16, 100, 1);
  std::vector<DnaNetLossReport> runs[2];
  for (auto& r : runs) {
    DnaNetModel<float> model(DnaNetConfig{}, 2);
    DnaNetTrainer<float> trainer(model, DnaNetTrainConfig{}, 3);
    for (int e = 0; e < 3; ++e) r.push_back(trainer.train_epoch(data, 4));
  }
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(DnaNetTrainer, ReconstructionNonIncreasingOnFourTriplets) {
  const auto data = random_triplets(4, 100, 4);
  DnaNetModel<float> model(DnaNetConfig{}, 5);
  DnaNetTrainConfig cfg;
  cfg.weights.dh = 0.0;
  DnaNetTrainer<float> trainer(model, cfg, 6);
  std::vector<double> losses;
  for (int s = 0; s < 51; ++s) losses.push_back(trainer.step(data).reconstruction);
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1]) << "step " << i;
  EXPECT_LT(losses.back(), losses.front());
}

TEST(DnaNetTrainer, CaaeParametersUntouched) {
  caae::CaaeConfig cc;
  cc.image_side = 32;
  cc.encoder_widths = {4, 4, 4, 4};
  cc.dimg_widths = {4, 4, 4};
  caae::CaaeModel<float> caae_model(cc, 7);
  const auto before = data::encode_checkpoint(data::make_checkpoint(caae_model.all_params()));

  SeededRng rng(8);
  Tensor<float> images({6, 3, 32, 32});
  for (auto& v : images.data()) v = static_cast<float>(rng.uniform(-1, 1));
  const auto h = caae::encode_all(caae_model, images);
  TripletFeatures<float> t;
  std::vector<std::size_t> f{0, 1}, m{2, 3}, c{4, 5};
  auto rows = [&](const std::vector<std::size_t>& idx) {
    Tensor<float> out({idx.size(), 100});
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < 100; ++j) out[i * 100 + j] = h[idx[i] * 100 + j];
    return out;
  };
  t = {rows(f), rows(m), rows(c)};
  DnaNetModel<float> model(DnaNetConfig{}, 9);
  DnaNetTrainer<float> trainer(model, DnaNetTrainConfig{}, 10);
  const auto dh_before = model.dh_params()[0].value();
  trainer.train_epoch(t, 2);
  EXPECT_EQ(data::encode_checkpoint(data::make_checkpoint(caae_model.all_params())), before);
  EXPECT_FALSE(model.dh_params()[0].value() == dh_before);
}

TEST(DnaNetTrainer, TripletValidation) {
  TripletFeatures<float> bad{Tensor<float>({2, 100}), Tensor<float>({2, 100}), Tensor<float>({3, 100})};
  EXPECT_THROW(bad.validate(), ShapeError);
}
