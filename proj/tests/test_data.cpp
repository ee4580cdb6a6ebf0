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

#include <filesystem>
#include <fstream>
#include <set>

#include "tcc/data.hpp"

using namespace tcc;
namespace fs = std::filesystem;

namespace {

fs::path TempDir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tcc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::int64_t> Iota(std::int64_t n) {
  std::vector<std::int64_t> ids(n);
  for (std::int64_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

}  // namespace

TEST_CASE("shapes dataset is deterministic and well formed") {
  ShapesOptions opt;
  opt.count = 12;
  opt.height = 32;
  opt.width = 40;
  opt.seed = 9;
  auto a = GenerateShapesDataset(opt);
  auto b = GenerateShapesDataset(opt);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == static_cast<std::int64_t>(i));
    CHECK(torch::equal(a[i].image, b[i].image));
    CHECK(torch::equal(a[i].mask, b[i].mask));
    CHECK((a[i].image.sizes() == torch::IntArrayRef{3, 32, 40}));
    CHECK((a[i].mask.sizes() == torch::IntArrayRef{32, 40}));
    CHECK(a[i].image.min().item<float>() >= 0.0f);
    CHECK(a[i].image.max().item<float>() <= 1.0f);
    CHECK(a[i].mask.min().item<std::int64_t>() >= 0);
    CHECK(a[i].mask.max().item<std::int64_t>() < 4);
    // At least one shape in every image.
    CHECK(a[i].mask.gt(0).any().item<bool>());
  }
  opt.seed = 10;
  auto c = GenerateShapesDataset(opt);
  CHECK_FALSE(torch::equal(a[0].image, c[0].image));
}

TEST_CASE("a sample depends only on seed and id") {
  ShapesOptions opt;
  opt.count = 10;
  opt.height = opt.width = 24;
  auto all = GenerateShapesDataset(opt);
  opt.first_id = 6;
  opt.count = 2;
  auto tail = GenerateShapesDataset(opt);
  CHECK(tail[0].id == 6);
  CHECK(torch::equal(tail[0].image, all[6].image));
  CHECK(torch::equal(tail[1].mask, all[7].mask));
}

TEST_CASE("every class appears in 100 samples") {
  ShapesOptions opt;
  opt.count = 100;
  opt.height = opt.width = 32;
  auto samples = GenerateShapesDataset(opt);
  std::set<std::int64_t> seen;
  for (const auto& s : samples) {
    auto u = std::get<0>(torch::_unique(s.mask));
    for (std::int64_t i = 0; i < u.size(0); ++i) seen.insert(u[i].item<std::int64_t>());
  }
  CHECK(seen == std::set<std::int64_t>{0, 1, 2, 3});
}

TEST_CASE("shapes generator rejects bad options") {
  ShapesOptions opt;
  opt.num_classes = 1;
  CHECK_THROWS(GenerateShapesDataset(opt));
  opt = ShapesOptions{};
  opt.count = 0;
  CHECK_THROWS(GenerateShapesDataset(opt));
  opt = ShapesOptions{};
  opt.height = 0;
  CHECK_THROWS(GenerateShapesDataset(opt));
}

TEST_CASE("ratio parsing") {
  CHECK(Ratio::Parse("1/8").LabeledCount(200) == 25);
  CHECK(Ratio::Parse("1/16").LabeledCount(1464) == 91);
  CHECK(Ratio::Parse("0.125").value() == doctest::Approx(0.125));
  CHECK(Ratio::Parse("1").LabeledCount(7) == 7);
  CHECK(Ratio::Parse("1/4").ToString() == "1/4");
  CHECK_THROWS(Ratio::Parse("0"));
  CHECK_THROWS(Ratio::Parse("3/2"));
  CHECK_THROWS(Ratio::Parse("-1/2"));
  CHECK_THROWS(Ratio::Parse("1/0"));
  CHECK_THROWS(Ratio::Parse("half"));
}

TEST_CASE("partitions are exact, disjoint and seeded") {
  const auto ids = Iota(1464);
  for (const char* r : {"1/2", "1/4", "1/8", "1/16"}) {
    const auto ratio = Ratio::Parse(r);
    auto p = MakePartition(ids, ratio, 3);
    CHECK(static_cast<std::int64_t>(p.labeled_ids.size()) == 1464 * ratio.num / ratio.den);
    CHECK(p.labeled_ids.size() + p.unlabeled_ids.size() == ids.size());
    std::set<std::int64_t> all(p.labeled_ids.begin(), p.labeled_ids.end());
    all.insert(p.unlabeled_ids.begin(), p.unlabeled_ids.end());
    CHECK(all.size() == ids.size());
  }
  auto a = MakePartition(ids, Ratio::Parse("1/16"), 3);
  auto b = MakePartition(ids, Ratio::Parse("1/16"), 3);
  auto c = MakePartition(ids, Ratio::Parse("1/16"), 4);
  CHECK(a.labeled_ids.size() == 91);
  CHECK(a.labeled_ids == b.labeled_ids);
  CHECK(a.unlabeled_ids == b.unlabeled_ids);
  CHECK(a.labeled_ids != c.labeled_ids);

  auto full = MakePartition(Iota(10), Ratio::Parse("1"), 0);
  CHECK(full.labeled_ids.size() == 10);
  CHECK(full.unlabeled_ids.empty());
}

TEST_CASE("partition file round trip") {
  auto dir = TempDir("partition");
  auto p = MakePartition(Iota(40), Ratio::Parse("1/8"), 5);
  SavePartition(p, dir / "partition.txt");
  auto q = LoadPartition(dir / "partition.txt");
  CHECK(q.labeled_ids == p.labeled_ids);
  CHECK(q.unlabeled_ids == p.unlabeled_ids);
  fs::remove_all(dir);
}

TEST_CASE("cutmix boxes") {
  auto a = torch::rand({3, 3, 8, 8});
  auto b = torch::rand({3, 3, 8, 8});
  auto ma = torch::zeros({3, 8, 8}, torch::kLong);
  auto mb = torch::ones({3, 8, 8}, torch::kLong);

  std::vector<MixBox> none(3);
  CHECK(torch::equal(ApplyMix(a, b, none), a));
  std::vector<MixBox> full(3, MixBox{0, 0, 8, 8});
  CHECK(torch::equal(ApplyMix(a, b, full), b));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto mixed = CutMix(a, ma, b, mb, seed);
    for (std::int64_t i = 0; i < 3; ++i) {
      const auto& box = mixed.boxes[i];
      CHECK(mixed.masks[i].sum().item<std::int64_t>() == box.area());
      auto inside = BoxMask(mixed.boxes, 8, 8)[i];
      CHECK(inside.sum().item<std::int64_t>() == box.area());
      // Image and mask come from the same source at every pixel.
      auto from_b = mixed.images[i].eq(b[i]).all(0);
      auto from_a = mixed.images[i].eq(a[i]).all(0);
      CHECK(torch::equal(from_b.logical_and(from_a.logical_not()), inside));
      CHECK(torch::equal(mixed.masks[i].to(torch::kBool), inside));
    }
    auto again = CutMix(a, ma, b, mb, seed);
    CHECK(torch::equal(again.images, mixed.images));
  }
  CHECK_THROWS(CutMix(a, ma, b.slice(2, 0, 4), mb, 0));
  CHECK_THROWS(ApplyMix(a, b, std::vector<MixBox>(2)));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    auto box = SampleMixBox(17, 13, rng);
    CHECK(box.top >= 0);
    CHECK(box.left >= 0);
    CHECK(box.top + box.height <= 17);
    CHECK(box.left + box.width <= 13);
  }
}

TEST_CASE("batch iterator epochs") {
  ShapesOptions opt;
  opt.count = 10;
  opt.height = opt.width = 8;
  auto samples = GenerateShapesDataset(opt);
  std::vector<SegSample> labeled(samples.begin(), samples.begin() + 4);
  std::vector<SegSample> unlabeled(samples.begin() + 4, samples.end());

  BatchIterator it(labeled, unlabeled, 4, 7);
  CHECK(it.semi_supervised());
  for (int epoch = 0; epoch < 5; ++epoch) {
    auto batch = it.Next();
    std::set<std::int64_t> ids(batch.labeled.ids.begin(), batch.labeled.ids.end());
    CHECK(ids == std::set<std::int64_t>{0, 1, 2, 3});
    REQUIRE(batch.unlabeled.has_value());
    CHECK(batch.unlabeled->images.size(0) == 4);
    CHECK(batch.labeled.masks.size(0) == 4);
  }

  // Unlabeled stream: 6 samples at 4 per batch, each id once per 6 draws.
  BatchIterator u(labeled, unlabeled, 4, 7);
  std::vector<std::int64_t> drawn;
  for (int t = 0; t < 3; ++t) {
    auto ids = u.At(t).unlabeled->ids;
    drawn.insert(drawn.end(), ids.begin(), ids.end());
  }
  for (int e = 0; e < 2; ++e) {
    std::set<std::int64_t> epoch(drawn.begin() + 6 * e, drawn.begin() + 6 * e + 6);
    CHECK(epoch.size() == 6);
  }

  BatchIterator same(labeled, unlabeled, 4, 7);
  BatchIterator other(labeled, unlabeled, 4, 8);
  bool differs = false;
  for (int t = 0; t < 6; ++t) {
    CHECK(same.At(t).labeled.ids == u.At(t).labeled.ids);
    CHECK(same.At(t).unlabeled->ids == u.At(t).unlabeled->ids);
    differs |= other.At(t).unlabeled->ids != u.At(t).unlabeled->ids;
  }
  CHECK(differs);

  // Seek reproduces the stream from any point.
  BatchIterator s(labeled, unlabeled, 4, 7);
  s.Seek(5);
  CHECK(s.Next().unlabeled->ids == u.At(5).unlabeled->ids);
  CHECK(s.position() == 6);
}

TEST_CASE("batch iterator without unlabeled data") {
  ShapesOptions opt;
  opt.count = 3;
  opt.height = opt.width = 8;
  auto samples = GenerateShapesDataset(opt);
  BatchIterator it(samples, {}, 5, 0);
  CHECK_FALSE(it.semi_supervised());
  auto batch = it.At(0);
  CHECK_FALSE(batch.unlabeled.has_value());
  CHECK(batch.labeled.images.size(0) == 5);
}

TEST_CASE("dataset save and load") {
  auto dir = TempDir("dataset");
  auto ds = MakeShapesDataset(6, 3, 16, 3, 2);
  CHECK(ds.eval.front().id == 6);
  SaveDataset(ds, dir);
  CHECK(fs::exists(dir / "manifest.json"));
  auto back = LoadDataset(dir);
  CHECK(back.num_classes == 3);
  CHECK(back.height == 16);
  CHECK(back.seed == 2);
  REQUIRE(back.train.size() == 6);
  REQUIRE(back.eval.size() == 3);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.train[i].id == ds.train[i].id);
    CHECK(torch::equal(back.train[i].image, ds.train[i].image));
    CHECK(torch::equal(back.train[i].mask, ds.train[i].mask));
  }
  CHECK(torch::equal(back.eval[2].image, ds.eval[2].image));
  fs::remove_all(dir);
  CHECK_THROWS(LoadDataset(dir));
}

TEST_CASE("select samples by id") {
  ShapesOptions opt;
  opt.count = 5;
  opt.height = opt.width = 8;
  auto samples = GenerateShapesDataset(opt);
  auto picked = SelectSamples(samples, {3, 1});
  REQUIRE(picked.size() == 2);
  CHECK(picked[0].id == 3);
  CHECK(picked[1].id == 1);
  CHECK_THROWS(SelectSamples(samples, {9}));
}
