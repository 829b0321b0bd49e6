#include <gtest/gtest.h>

#include <set>

#include "facechannel/error.hpp"
#include "facechannel/model.hpp"

namespace fc = facechannel;

namespace {

// Independent count from the architecture description: conv blocks with BN,
// the final conv of the last block replaced by a shunting layer, two dense layers.
std::size_t expected_params(const fc::ModelConfig& c) {
  const std::size_t k2 = c.kernel_size * c.kernel_size;
  std::size_t total = 0, cin = c.input_channels;
  for (std::size_t b = 0; b < c.block_channels.size(); ++b) {
    const bool last = b + 1 == c.block_channels.size();
    const std::size_t cout = c.block_channels[b];
    const std::size_t plain = last ? c.convs_per_block[b] - 1 : c.convs_per_block[b];
    for (std::size_t i = 0; i < plain; ++i) {
      total += k2 * cin * cout + cout + 2 * cout;
      cin = cout;
    }
    if (last) {
      const std::size_t n = c.shunting_channels;
      total += 2 * (k2 * cin * n + n) + n + 2 * n;
    }
  }
  return total + c.flatten_size() * c.dense_units + c.dense_units + c.dense_units * c.head.outputs() +
         c.head.outputs();
}

}  // namespace

TEST(ModelConfig, CanonicalParameterCount) {
  const auto cfg = fc::ModelConfig::canonical();
  const auto model = fc::build_facechannel<float>(cfg);
  EXPECT_EQ(fc::count_params(model, false), expected_params(cfg));
  EXPECT_EQ(fc::count_params(model, false), 1700208u);
  auto dim = cfg;
  dim.head = fc::HeadSpec::dimensional();
  EXPECT_EQ(fc::count_params(fc::build_facechannel<float>(dim), false), expected_params(dim));
}

TEST(ModelConfig, TinyParameterCount) {
  const auto cfg = fc::ModelConfig::tiny(fc::HeadSpec::categorical(4));
  EXPECT_EQ(fc::count_params(fc::build_facechannel<double>(cfg), false), expected_params(cfg));
}

TEST(ModelStructure, CanonicalAudit) {
  const auto model = fc::build_facechannel<float>(fc::ModelConfig::canonical());
  const auto a = fc::audit_structure(model);
  EXPECT_EQ(a.conv_layers, 10u);
  EXPECT_EQ(a.shunting_layers, 1u);
  EXPECT_TRUE(a.shunting_is_last_conv);
  EXPECT_EQ(a.pools, 4u);
  EXPECT_TRUE(a.batchnorm_after_every_conv);
  EXPECT_TRUE(a.dropout_after_every_pool);
  EXPECT_EQ(a.dropout_rates, std::vector<double>(4, 0.5));
  EXPECT_EQ(a.dense_units, 200u);
}

TEST(ModelStructure, LayerNamesAreUnique) {
  const auto model = fc::build_facechannel<float>(fc::ModelConfig::canonical());
  std::set<std::string> names;
  for (std::size_t i = 0; i < model.layer_count(); ++i) names.insert(model.layer(i).name());
  EXPECT_EQ(names.size(), model.layer_count());
  EXPECT_TRUE(model.find_layer("block4.shunting"));
  EXPECT_TRUE(model.find_layer("block4.bn_shunting"));
  EXPECT_EQ(*model.find_layer("head"), model.head_index());
  EXPECT_FALSE(model.find_layer("block5.conv1"));
}

TEST(ModelFreeze, OnlyDenseLayersRemainTrainable) {
  auto model = fc::build_facechannel<float>(fc::ModelConfig::canonical());
  fc::freeze_convolutional_stack(model);
  EXPECT_EQ(fc::count_params(model, true), 4096u * 200 + 200 + 200 * 8 + 8);
  EXPECT_EQ(fc::count_params(model, true), 821008u);
  EXPECT_EQ(fc::count_params(model, false), 1700208u);
  fc::unfreeze_all(model);
  EXPECT_EQ(fc::count_params(model, true), 1700208u);
}

TEST(ModelHead, ReplaceHeadKeepsConvStack) {
  auto model = fc::build_facechannel<double>(fc::ModelConfig::tiny(fc::HeadSpec::categorical(4)));
  const auto before = fc::tensor_hash(model, fc::TensorGroup::kConvStack);
  fc::Rng rng(3);
  fc::replace_head(model, fc::HeadSpec::dimensional(), rng);
  EXPECT_EQ(fc::tensor_hash(model, fc::TensorGroup::kConvStack), before);
  EXPECT_EQ(model.config().head, fc::HeadSpec::dimensional());
  fc::Rng fwd(1);
  const auto out = model.forward(fc::Tensor<double>({2, 1, 48, 48}, 0.3), fc::Mode::kInfer, fwd);
  EXPECT_EQ(out.predictions.shape(), (fc::Shape{2, 2}));
  for (double v : out.predictions.data()) EXPECT_LT(std::abs(v), 1.0);
  EXPECT_THROW(fc::replace_head(model, fc::HeadSpec::categorical(1), rng), fc::ConfigError);
}

TEST(ModelForward, CategoricalRowsAreDistributions) {
  auto model = fc::build_facechannel<double>(fc::ModelConfig::tiny(fc::HeadSpec::categorical(5)));
  fc::Rng rng(2);
  fc::Tensor<double> x({3, 1, 48, 48});
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  const auto out = model.forward(x, fc::Mode::kInfer, rng);
  ASSERT_EQ(out.predictions.shape(), (fc::Shape{3, 5}));
  for (std::size_t n = 0; n < 3; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) s += out.predictions[n * 5 + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ModelForward, InferIsDeterministicAndBatchIndependent) {
  auto model = fc::build_facechannel<double>(fc::ModelConfig::tiny(fc::HeadSpec::categorical(4)));
  fc::Rng rng(7);
  fc::Tensor<double> x({2, 1, 48, 48});
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  fc::Rng a(1), b(2);
  const auto both = model.forward(x, fc::Mode::kInfer, a).predictions;
  fc::Tensor<double> first({1, 1, 48, 48});
  std::copy(x.raw(), x.raw() + 48 * 48, first.raw());
  const auto one = model.forward(first, fc::Mode::kInfer, b).predictions;
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(both[k], one[k], 1e-12);
}

TEST(ModelForward, WrongInputShapeIsRejected) {
  auto model = fc::build_facechannel<double>(fc::ModelConfig::tiny());
  fc::Rng rng(1);
  EXPECT_THROW(model.forward(fc::Tensor<double>({1, 3, 48, 48}), fc::Mode::kInfer, rng), fc::ShapeError);
  EXPECT_THROW(model.forward(fc::Tensor<double>({1, 1, 40, 40}), fc::Mode::kInfer, rng), fc::ShapeError);
  EXPECT_THROW(model.forward(fc::Tensor<double>({1, 48, 48}), fc::Mode::kInfer, rng), fc::ShapeError);
}

TEST(ModelConfig, InvalidConfigurationsAreRejected) {
  auto bad = [](auto mutate) {
    auto c = fc::ModelConfig::canonical();
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.input_size = 100; }).validate(), fc::ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.convs_per_block = {2, 2, 3}; }).validate(), fc::ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.dropout_rate = 1.0; }).validate(), fc::ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.head = fc::HeadSpec::categorical(1); }).validate(), fc::ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.kernel_size = 2; }).validate(), fc::ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.bn_momentum = 1.0; }).validate(), fc::ConfigError);
  EXPECT_THROW(fc::ModelConfig::load("no-such-preset-or-file"), fc::ConfigError);
  EXPECT_NO_THROW(fc::ModelConfig::canonical().validate());
}

TEST(ModelConfig, JsonRoundTrip) {
  auto c = fc::ModelConfig::tiny(fc::HeadSpec::dimensional());
  c.seed = 99;
  c.shunting_activation = fc::ShuntingActivation::kRelu;
  EXPECT_EQ(fc::ModelConfig::from_json(c.to_json()), c);
  EXPECT_THROW(fc::ModelConfig::from_json("{not json"), fc::ConfigError);
}

TEST(HeadSpec, ParseAndPrint) {
  EXPECT_EQ(fc::HeadSpec::parse("categorical:8"), fc::HeadSpec::categorical(8));
  EXPECT_EQ(fc::HeadSpec::parse("dimensional"), fc::HeadSpec::dimensional());
  EXPECT_EQ(fc::HeadSpec::parse(fc::HeadSpec::categorical(3).to_string()), fc::HeadSpec::categorical(3));
  EXPECT_THROW(fc::HeadSpec::parse("categorical:x"), fc::ConfigError);
  EXPECT_THROW(fc::HeadSpec::parse("regression"), fc::ConfigError);
}

TEST(ModelHash, SensitiveToSingleValueAndCopyEqual) {
  auto model = fc::build_facechannel<double>(fc::ModelConfig::tiny());
  const auto copy = model;
  EXPECT_EQ(fc::tensor_hash(copy), fc::tensor_hash(model));
  model.parameters().front().value->data()[0] += 1e-12;
  EXPECT_NE(fc::tensor_hash(copy), fc::tensor_hash(model));
  EXPECT_EQ(fc::tensor_hash(model).size(), 64u);
}

TEST(ModelBuild, SameSeedSameWeights) {
  auto c = fc::ModelConfig::tiny();
  c.seed = 5;
  EXPECT_EQ(fc::tensor_hash(fc::build_facechannel<double>(c)), fc::tensor_hash(fc::build_facechannel<double>(c)));
  auto d = c;
  d.seed = 6;
  EXPECT_NE(fc::tensor_hash(fc::build_facechannel<double>(c)), fc::tensor_hash(fc::build_facechannel<double>(d)));
}
