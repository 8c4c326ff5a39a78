// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/adapter/gating.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace moelora;
using Catch::Approx;

namespace {

std::vector<LayerDims> toy_layers() { return {{"q", 16, 16}, {"up", 16, 32}, {"down", 32, 16}}; }

template <typename Scalar>
void randomize_bank(ExpertBank<Scalar>& bank, std::uint64_t seed) {
  Rng rng(seed);
  bank.visit([&](const std::string&, Tensor<Scalar>& t) {
    if (t.requires_grad()) t.mutable_value() = rng.normal_matrix<Scalar>(t.value().rows(), t.value().cols(), 0.3);
  });
}

}  // namespace

TEST_CASE("zero expert: merged weights and outputs equal the base bit-exactly", "[adapter]") {
  auto bank = init_bank<float>(toy_layers(), 4, 5, 1);
  randomize_bank(bank, 2);
  Rng rng(3);
  for (const auto& name : bank.layer_names()) {
    const auto& layer = bank.layer(name);
    const Tensor<float> w(Shape{layer.dims.d_in, layer.dims.d_out},
                          rng.normal_matrix<float>(layer.dims.d_in, layer.dims.d_out, 1.0));
    const auto e0 = ExpertMixture<float>::one_hot(5, 0);
    const auto experts = std::span<const LoraExpert<float>>(layer.experts);
    CHECK(mix_weights(w, experts, e0).value() == w.value());
    const Tensor<float> x(Shape{7, layer.dims.d_in}, rng.normal_matrix<float>(7, layer.dims.d_in, 1.0));
    CHECK(moe_linear_forward(x, w, experts, e0).value() == matmul(x, w).value());
  }
}

TEST_CASE("dynamic and merged paths agree", "[adapter]") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    auto bank = init_bank<double>({{"l", 12, 9}}, 3, 4, trial);
    randomize_bank(bank, trial + 100);
    Rng rng(trial + 200);
    const Tensor<double> w(Shape{12, 9}, rng.normal_matrix<double>(12, 9, 1.0));
    const Tensor<double> x(Shape{5, 12}, rng.normal_matrix<double>(5, 12, 1.0));
    std::vector<double> alpha(4);
    double total = 0;
    for (auto& a : alpha) total += (a = rng.uniform());
    for (auto& a : alpha) a /= total;
    const auto mix = ExpertMixture<double>::from_values(alpha);
    const auto experts = std::span<const LoraExpert<double>>(bank.layer("l").experts);
    const auto dynamic = moe_linear_forward(x, w, experts, mix).value();
    const auto merged = matmul(x, mix_weights(w, experts, mix)).value();
    CHECK((dynamic - merged).norm() / merged.norm() < 1e-12);
  }
}

TEST_CASE("init_bank: frozen zero expert, A ~ N(0, 1/r), B = 0", "[adapter]") {
  const auto bank = init_bank<double>({{"big", 400, 300}}, 8, 3, 7);
  const auto& experts = bank.layer("big").experts;
  REQUIRE(experts.size() == 3);
  CHECK_FALSE(experts[0].trainable);
  CHECK(experts[0].a.value().isZero(0));
  CHECK(experts[0].b.value().isZero(0));
  CHECK_FALSE(experts[0].a.requires_grad());
  for (std::size_t i = 1; i < experts.size(); ++i) {
    CHECK(experts[i].trainable);
    CHECK(experts[i].b.value().isZero(0));
    CHECK(experts[i].a.value().array().square().mean() == Approx(1.0 / 8).epsilon(0.03));
  }
  // distinct experts get distinct draws
  CHECK(experts[1].a.value() != experts[2].a.value());
  CHECK(bank.trainable_parameters().size() == 4);
}

TEST_CASE("init_bank rejects invalid configurations", "[adapter]") {
  CHECK_THROWS_AS(init_bank<float>(toy_layers(), 0, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_bank<float>(toy_layers(), 4, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_bank<float>(toy_layers(), 16, 5, 1), std::invalid_argument);
}

TEST_CASE("mixture validation", "[adapter]") {
  CHECK_NOTHROW(ExpertMixture<double>::from_values({0.25, 0.75}));
  CHECK_THROWS_AS(ExpertMixture<double>::from_values({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ExpertMixture<double>::from_values({-0.1, 1.1}), std::invalid_argument);
  auto bank = init_bank<double>({{"l", 6, 6}}, 2, 3, 1);
  const Tensor<double> w(Shape{6, 6});
  const Tensor<double> x(Shape{1, 6});
  const auto wrong = ExpertMixture<double>::one_hot(4, 0);
  CHECK_THROWS(moe_linear_forward(x, w, std::span<const LoraExpert<double>>(bank.layer("l").experts), wrong));
}

TEST_CASE("a fresh gate is uniform and rows sum to one", "[adapter]") {
  const GatingNetwork<double> gate(16, 32, 5, 3);
  Rng rng(4);
  const Tensor<double> feature(Shape{16}, rng.normal_matrix<double>(1, 16, 1.0));
  const auto mix = gate.gate(feature);
  REQUIRE(mix.size() == 5);
  for (Index i = 0; i < 5; ++i) CHECK(mix.weight(i) == Approx(0.2).epsilon(1e-12));
  CHECK(gate.parameter_count() == 16 * 32 + 32 + 32 * 5 + 5);
}

TEST_CASE("gating loss is -eta log alpha_0 with a floor", "[adapter]") {
  const auto mix = ExpertMixture<double>::from_values({0.25, 0.75});
  CHECK(gating_loss(mix, 1).value.item() == Approx(-std::log(0.25)));
  CHECK(gating_loss(mix, 0).value.item() == 0.0);
  const auto collapsed = ExpertMixture<double>::from_values({0.0, 1.0});
  const auto floored = gating_loss(collapsed, 1);
  CHECK(floored.clamped);
  CHECK(floored.value.item() == Approx(-std::log(kGatingLogFloor)));
}

TEST_CASE("measured trainable parameters equal n r sum(d_in + d_out) plus the gate", "[adapter]") {
  for (Index n = 1; n <= 8; ++n) {
    const auto bank = init_bank<float>(toy_layers(), 4, n + 1, 5);
    const GatingNetwork<float> gate(24, 10, n + 1, 6);
    const Index expected = n * 4 * ((16 + 16) + (16 + 32) + (32 + 16)) + 24 * 10 + 10 + 10 * (n + 1) + (n + 1);
    CHECK(trainable_param_count(bank, gate) == expected);
  }
}

TEST_CASE("prompt encoder is a frozen mean of table rows", "[adapter]") {
  PromptEncoder<double> enc(20, 6, 3);
  std::vector<Tensor<double>> tensors;
  enc.visit([&](const std::string&, Tensor<double>& t) { tensors.push_back(t); });
  REQUIRE(tensors.size() == 1);
  CHECK_FALSE(tensors[0].requires_grad());
  const std::vector<Index> ids = {2, 5, 5};
  const auto f = enc.encode(std::span<const Index>(ids));
  const Mat<double> expect = (tensors[0].value().row(2) + 2 * tensors[0].value().row(5)) / 3.0;
  CHECK((f.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(enc.encode(std::span<const Index>()));
}
