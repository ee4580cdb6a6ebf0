/* Copyright 2026 The TCC Segmentation Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "testing.hpp"

#include "oracles.hpp"
#include "tcc/common.hpp"
#include "tcc/students.hpp"

using namespace tcc;

namespace {

StudentConfig ConvConfig(std::int64_t k = 4) {
  StudentConfig c;
  c.kind = StudentKind::kConv;
  c.num_classes = k;
  return c;
}

StudentConfig AttentionConfig(std::int64_t size = 64, std::int64_t patch = 4) {
  StudentConfig c;
  c.kind = StudentKind::kAttention;
  c.image_size = size;
  c.attention.patch_size = patch;
  return c;
}

}  // namespace

TEST_CASE("conv student shape contract") {
  torch::manual_seed(1);
  ConvStudent student(ConvConfig());
  auto out = student->forward(torch::rand({2, 3, 64, 64}));
  CHECK((out.features.sizes() == torch::IntArrayRef{2, 64, 16, 16}));
  CHECK((out.logits.sizes() == torch::IntArrayRef{2, 4, 64, 64}));
  CHECK((out.pseudo_labels.sizes() == torch::IntArrayRef{2, 64, 64}));
  CHECK((out.pseudo_labels.scalar_type() == torch::kLong));
  CHECK_FALSE(out.pseudo_labels.requires_grad());
  CHECK(student->config().feature_stride() == 4);
}

TEST_CASE("zeroed head gives uniform logits and class 0 everywhere") {
  torch::manual_seed(2);
  ConvStudent student(ConvConfig());
  {
    torch::NoGradGuard g;
    student->head()->weight.zero_();
    student->head()->bias.zero_();
  }
  auto out = student->forward(torch::zeros({1, 3, 64, 64}));
  CHECK(out.logits.abs().max().item<float>() == 0.0f);
  CHECK(out.pseudo_labels.eq(0).all().item<bool>());
}

TEST_CASE("patchless conv config on a single pixel") {
  auto config = ConvConfig(3);
  config.image_size = 1;
  config.conv.strides = {1, 1, 1, 1};
  config.conv.dilations = {1, 1, 1, 1};
  ConvStudent student(config);
  auto out = student->forward(torch::rand({1, 3, 1, 1}));
  CHECK((out.logits.sizes() == torch::IntArrayRef{1, 3, 1, 1}));
  CHECK((out.features.sizes() == torch::IntArrayRef{1, 64, 1, 1}));
}

TEST_CASE("attention student token arithmetic") {
  torch::manual_seed(3);
  AttentionStudent vit(AttentionConfig());
  auto x = torch::rand({2, 3, 64, 64});
  CHECK((vit->Tokens(x).sizes() == torch::IntArrayRef{2, 256, 64}));
  auto out = vit->forward(x);
  CHECK((out.features.sizes() == torch::IntArrayRef{2, 64, 16, 16}));
  CHECK((out.logits.sizes() == torch::IntArrayRef{2, 4, 64, 64}));

  AttentionStudent small(AttentionConfig(32, 8));
  CHECK(small->Tokens(torch::rand({1, 3, 32, 32})).size(1) == 16);
}

TEST_CASE("both students emit identical logit shapes") {
  torch::manual_seed(4);
  ConvStudent conv(ConvConfig());
  AttentionStudent vit(AttentionConfig());
  auto x = torch::rand({3, 3, 64, 64});
  CHECK((conv->forward(x).logits.sizes() == vit->forward(x).logits.sizes()));
}

TEST_CASE("attention student rejects indivisible or mismatched input") {
  auto bad = AttentionConfig(30, 4);
  CHECK_THROWS_AS(AttentionStudent{bad}, ConfigError);
  AttentionStudent vit(AttentionConfig());
  CHECK_THROWS_AS(vit->forward(torch::rand({1, 3, 32, 32})), ConfigError);
  CHECK_THROWS_AS(vit->forward(torch::rand({1, 1, 64, 64})), ConfigError);
  auto heads = AttentionConfig();
  heads.attention.num_heads = 5;
  CHECK_THROWS_AS(AttentionStudent{heads}, ConfigError);
  auto k1 = ConvConfig(1);
  CHECK_THROWS_AS(ConvStudent{k1}, ConfigError);
}

TEST_CASE("non-finite input is rejected") {
  ConvStudent conv(ConvConfig());
  auto x = torch::rand({1, 3, 16, 16});
  x[0][0][0][0] = std::nanf("");
  CHECK_THROWS_AS(conv->forward(x), ConfigError);
}

TEST_CASE("attention is permutation equivariant without positional embedding") {
  torch::manual_seed(5);
  auto config = AttentionConfig(32, 4);
  config.attention.positional = PositionalEmbedding::kNone;
  AttentionStudent vit(config);
  auto x = torch::rand({1, 3, 32, 32});
  auto tokens = Patchify(x, 4);
  auto perm = torch::randperm(tokens.size(1), torch::kLong);
  auto permuted_image = Unpatchify(tokens.index_select(1, perm), 4, 3, 32, 32);
  torch::NoGradGuard g;
  auto a = vit->Tokens(x).index_select(1, perm);
  auto b = vit->Tokens(permuted_image);
  CHECK(torch::allclose(a, b, 1e-5, 1e-6));
}

TEST_CASE("learned positional embedding zeroed behaves like none") {
  torch::manual_seed(6);
  AttentionStudent vit(AttentionConfig(32, 4));
  {
    torch::NoGradGuard g;
    vit->positional_embedding().zero_();
  }
  auto x = torch::rand({1, 3, 32, 32});
  auto tokens = Patchify(x, 4);
  auto perm = torch::randperm(tokens.size(1), torch::kLong);
  auto permuted_image = Unpatchify(tokens.index_select(1, perm), 4, 3, 32, 32);
  torch::NoGradGuard g;
  CHECK(torch::allclose(vit->Tokens(x).index_select(1, perm),
                        vit->Tokens(permuted_image), 1e-5, 1e-6));
}

TEST_CASE("patchify counts, symmetry and exact round trip") {
  CHECK(Patchify(torch::rand({1, 3, 8, 8}), 4).sizes() ==
        torch::IntArrayRef{1, 4, 48});
  auto constant = torch::full({1, 3, 8, 8}, 0.25);
  auto tokens = Patchify(constant, 4);
  CHECK(tokens.eq(tokens[0][0]).all().item<bool>());

  auto x = torch::rand({2, 3, 16, 12});
  auto t = Patchify(x, 4);
  CHECK(torch::equal(t, oracle::Patchify(x, 4)));
  CHECK(torch::equal(Unpatchify(t, 4, 3, 16, 12), x));
  CHECK_THROWS_AS(Patchify(torch::rand({1, 3, 10, 8}), 4), ConfigError);
}

TEST_CASE("pseudo labels: argmax with lowest-index ties") {
  auto logits = torch::tensor({2.0, 1.0}).reshape({1, 2, 1, 1});
  CHECK(PseudoLabels(logits).item<std::int64_t>() == 0);
  auto tie = torch::tensor({1.0, 1.0}).reshape({1, 2, 1, 1});
  CHECK(PseudoLabels(tie).item<std::int64_t>() == 0);
  auto tie_late = torch::tensor({0.0, 3.0, 3.0, 3.0}).reshape({1, 4, 1, 1});
  CHECK(PseudoLabels(tie_late).item<std::int64_t>() == 1);

  torch::manual_seed(7);
  for (int rep = 0; rep < 5; ++rep) {
    // Rounded logits produce plenty of exact ties.
    auto z = torch::randn({2, 5, 7, 9}).mul(2).round();
    CHECK(torch::equal(PseudoLabels(z), oracle::Argmax(z)));
    auto shift = torch::randn({2, 1, 7, 9}).round();
    CHECK(torch::equal(PseudoLabels(z + shift), PseudoLabels(z)));
  }
}

TEST_CASE("pseudo labels carry no gradient") {
  auto z = torch::randn({1, 3, 4, 4}, torch::requires_grad());
  auto labels = PseudoLabels(z * 2);
  CHECK_FALSE(labels.requires_grad());
  CHECK_FALSE(labels.grad_fn());
}

TEST_CASE("forward is deterministic for a fixed seed") {
  auto run = [] {
    torch::manual_seed(11);
    ConvStudent conv(ConvConfig());
    AttentionStudent vit(AttentionConfig());
    torch::manual_seed(12);
    auto x = torch::rand({2, 3, 64, 64});
    return std::make_pair(conv->forward(x).logits, vit->forward(x).logits);
  };
  auto a = run();
  auto b = run();
  CHECK(torch::equal(a.first, b.first));
  CHECK(torch::equal(a.second, b.second));
}

TEST_CASE("initialization follows the configured scheme") {
  torch::manual_seed(13);
  AttentionStudent vit(AttentionConfig());
  for (const auto& p : vit->named_parameters()) {
    if (p.key().find("norm") != std::string::npos) continue;
    if (p.key().ends_with("bias")) {
      CHECK(p.value().abs().max().item<float>() == 0.0f);
    } else {
      CHECK(p.value().abs().max().item<float>() <= 0.04f + 1e-7f);
    }
  }
  ConvStudent conv(ConvConfig());
  auto w = conv->head()->weight;
  CHECK(conv->head()->bias.abs().max().item<float>() == 0.0f);
  CHECK(w.std().item<float>() == doctest::Approx(std::sqrt(2.0 / 64)).epsilon(0.5));
}
