#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "latcomp/grid.hpp"
#include "test_util.hpp"

using namespace latcomp;
using testutil::bitwise_equal;
using testutil::random_field;

namespace {

GridField small_field(std::vector<float> vals, int H, int W, std::string name = "T2M") {
  GridField f;
  f.values = nn::Tensor({1, H, W}, std::move(vals));
  f.variables = {std::move(name)};
  f.lat_range = {0.0, 10.0};
  f.lon_range = {0.0, 10.0};
  return f;
}

}  // namespace

TEST_CASE("zscore_fit on a two-value field") {
  auto f = small_field({0.0f, 2.0f}, 1, 2);
  auto stats = zscore_fit({f}, "T2M");
  auto e = stats.at("T2M");
  CHECK(e.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.std == doctest::Approx(1.0).epsilon(1e-12));  // population std of {0,2}
  CHECK(e.count == 2);
  CHECK_FALSE(e.degenerate);
}

TEST_CASE("zscore_fit floors degenerate variables") {
  auto f = small_field({5.0f, 5.0f, 5.0f, 5.0f}, 2, 2);
  auto stats = zscore_fit({f}, "T2M");
  auto e = stats.at("T2M");
  CHECK(e.mean == doctest::Approx(5.0));
  CHECK(e.std == NormStats::kStdFloor);
  CHECK(e.degenerate);
}

TEST_CASE("zscore_fit pools pixels across fields") {
  auto a = small_field({-1.0f, -1.0f}, 1, 2);
  auto b = small_field({1.0f, 1.0f}, 1, 2);
  auto stats = zscore_fit({a, b}, "T2M");
  CHECK(stats.at("T2M").mean == doctest::Approx(0.0));
  CHECK(stats.at("T2M").std == doctest::Approx(1.0));
  CHECK(stats.at("T2M").count == 4);
}

TEST_CASE("zscore_fit matches a two-pass oracle on random data") {
  auto f = random_field(2, 13, 17, 42);
  auto stats = zscore_fit({f}, std::vector<std::string>{"V0", "V1"});
  for (int c = 0; c < 2; ++c) {
    const float* p = f.values.ptr() + static_cast<size_t>(c) * 13 * 17;
    int64_t n = 13 * 17;
    long double s1 = 0, s2 = 0;
    for (int64_t i = n - 1; i >= 0; --i) s1 += p[i];
    long double mean = s1 / n;
    for (int64_t i = n - 1; i >= 0; --i) s2 += (p[i] - mean) * (p[i] - mean);
    long double std = sqrtl(s2 / n);
    auto e = stats.at(c == 0 ? "V0" : "V1");
    CHECK(e.mean == doctest::Approx(static_cast<double>(mean)).epsilon(1e-12));
    CHECK(e.std == doctest::Approx(static_cast<double>(std)).epsilon(1e-12));
  }
}

TEST_CASE("zscore_fit error contracts") {
  auto f = small_field({0.0f, 1.0f}, 1, 2);
  CHECK_THROWS_WITH_AS(zscore_fit({f}, "MSL"), doctest::Contains("missing variable 'MSL'"),
                       DataError);
  auto tiny = small_field({3.0f}, 1, 1);
  CHECK_THROWS_AS(zscore_fit({tiny}, "T2M"), DataError);
  CHECK_THROWS_AS(zscore_fit({}, "T2M"), DataError);
}

TEST_CASE("zscore apply and invert round trip") {
  auto f = random_field(3, 20, 24, 7);
  for (auto& v : f.values.data) v = v * 13.5f + 281.0f;
  auto stats = zscore_fit({f}, f.variables);

  auto z = zscore_apply(f, stats);
  auto refit = zscore_fit({z}, f.variables);
  for (const auto& name : f.variables) {
    CHECK(std::abs(refit.at(name).mean) < 1e-6);
    CHECK(refit.at(name).std == doctest::Approx(1.0).epsilon(1e-5));
  }

  auto back = zscore_invert(z, stats);
  for (int64_t i = 0; i < f.values.size(); ++i) {
    float orig = f.values.data[static_cast<size_t>(i)];
    float got = back.values.data[static_cast<size_t>(i)];
    CHECK(std::abs(got - orig) <= 1e-5f * std::max(1.0f, std::abs(orig)));
  }
}

TEST_CASE("zscore_apply requires stats for every channel") {
  auto f = random_field(2, 4, 4, 3);
  auto stats = zscore_fit({f}, "V0");
  CHECK_THROWS_WITH_AS(zscore_apply(f, stats), doctest::Contains("V1"), DataError);
}

TEST_CASE("NormStats JSON round trip and hashing") {
  auto f = random_field(2, 6, 6, 11);
  auto stats = zscore_fit({f}, f.variables);
  auto back = NormStats::from_json(stats.to_json());
  CHECK(back.by_variable.size() == 2);
  for (const auto& [name, e] : stats.by_variable) {
    CHECK(back.at(name).mean == e.mean);
    CHECK(back.at(name).std == e.std);
    CHECK(back.at(name).count == e.count);
  }
  CHECK(stats.content_hash() == back.content_hash());

  testutil::TempDir tmp("normstats");
  stats.save(tmp.file("stats.json"));
  auto loaded = NormStats::load(tmp.file("stats.json"));
  CHECK(loaded.content_hash() == stats.content_hash());

  CHECK_THROWS_AS(NormStats::from_json("not json"), IoError);
}

TEST_CASE("patch_offsets shifts the last tile inward") {
  CHECK(patch_offsets(300, 256) == std::vector<int>{0, 44});
  CHECK(patch_offsets(256, 256) == std::vector<int>{0});
  CHECK(patch_offsets(64, 32) == std::vector<int>{0, 32});
  CHECK(patch_offsets(4384, 1000) == std::vector<int>{0, 1000, 2000, 3000, 3384});
  CHECK_THROWS_AS(patch_offsets(10, 11), ConfigError);
  CHECK_THROWS_AS(patch_offsets(10, 0), ConfigError);
}

TEST_CASE("patch_grid reproduces the 5x7 tiling of the full national grid") {
  auto [rows, cols] = patch_grid(4384, 6880, 1000, 1000);
  CHECK(rows == 5);
  CHECK(cols == 7);
  CHECK(rows * cols == 35);
}

TEST_CASE("patchify splits exactly and reassembles bit for bit") {
  auto f = random_field(2, 8, 8, 5);
  auto set = patchify(f, 4, 4);
  CHECK(set.patches.size() == 4);
  auto cov = set.coverage();
  CHECK(std::all_of(cov.begin(), cov.end(), [](int c) { return c == 1; }));

  for (auto mode : {BlendMode::average, BlendMode::feather}) {
    auto back = unpatchify(set, mode);
    CHECK(bitwise_equal(back.values, f.values));
    CHECK(back.variables == f.variables);
    CHECK(back.lat_range == f.lat_range);
    CHECK(back.timestamp == f.timestamp);
  }
}

TEST_CASE("patchify with overlap still reassembles bit for bit") {
  auto f = random_field(1, 10, 14, 9);
  auto set = patchify(f, 8, 8);
  CHECK(set.patches.size() == 4);
  auto cov = set.coverage();
  CHECK(*std::min_element(cov.begin(), cov.end()) == 1);
  CHECK(*std::max_element(cov.begin(), cov.end()) == 4);

  for (auto mode : {BlendMode::average, BlendMode::feather})
    CHECK(bitwise_equal(unpatchify(set, mode).values, f.values));
}

TEST_CASE("coverage counts patch footprints") {
  auto f = random_field(1, 10, 10, 13);
  auto set = patchify(f, 6, 6);
  std::vector<int> expect(100, 0);
  for (const auto& p : set.patches)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) ++expect[static_cast<size_t>(p.row + y) * 10 + (p.col + x)];
  CHECK(set.coverage() == expect);
}

TEST_CASE("blending of disagreeing overlaps") {
  // Two 3x3 patches on a 3x4 canvas: constant 0 at col 0, constant 6 at col 1.
  PatchSet set;
  set.patch_h = 3;
  set.patch_w = 3;
  set.source_h = 3;
  set.source_w = 4;
  set.variables = {"T2M"};
  Patch a, b;
  a.row = 0;
  a.col = 0;
  a.values = nn::Tensor({1, 3, 3});
  b.row = 0;
  b.col = 1;
  b.values = nn::Tensor({1, 3, 3});
  b.values.fill(6.0f);
  set.patches = {a, b};

  auto avg = unpatchify(set, BlendMode::average);
  CHECK(avg.values.at(0, 1, 0) == 0.0f);
  CHECK(avg.values.at(0, 1, 1) == 3.0f);  // mean of 0 and 6
  CHECK(avg.values.at(0, 1, 2) == 3.0f);
  CHECK(avg.values.at(0, 1, 3) == 6.0f);

  // Feather: tent weights 1,2,1 across each patch. At x=1 patch A contributes
  // weight 2, patch B weight 1; at x=2 the roles flip.
  auto fea = unpatchify(set, BlendMode::feather);
  CHECK(fea.values.at(0, 1, 1) == doctest::Approx(6.0 / 3.0));
  CHECK(fea.values.at(0, 1, 2) == doctest::Approx(12.0 / 3.0));
}

TEST_CASE("unpatchify rejects holes and malformed sets") {
  auto f = random_field(1, 8, 8, 21);
  auto set = patchify(f, 4, 4);
  set.patches.pop_back();
  CHECK_THROWS_WITH_AS(unpatchify(set, BlendMode::average), doctest::Contains("coverage hole"),
                       DataError);

  auto set2 = patchify(f, 4, 4);
  set2.patches[0].values = nn::Tensor({1, 3, 3});
  CHECK_THROWS_AS(unpatchify(set2, BlendMode::average), DataError);

  auto set3 = patchify(f, 4, 4);
  set3.patches[0].row = 7;
  CHECK_THROWS_WITH_AS(unpatchify(set3, BlendMode::average), doctest::Contains("outside"),
                       DataError);
}

TEST_CASE("patchify round trip holds over random geometries") {
  nn::Rng rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    int ph = 1 + static_cast<int>(rng.next_u64() % 8);
    int pw = 1 + static_cast<int>(rng.next_u64() % 8);
    int H = ph + static_cast<int>(rng.next_u64() % 30);
    int W = pw + static_cast<int>(rng.next_u64() % 30);
    int C = 1 + static_cast<int>(rng.next_u64() % 3);
    auto f = random_field(C, H, W, rng.next_u64());
    auto set = patchify(f, ph, pw);
    auto cov = set.coverage();
    CHECK(*std::min_element(cov.begin(), cov.end()) >= 1);
    CHECK(bitwise_equal(unpatchify(set, BlendMode::average).values, f.values));
    CHECK(bitwise_equal(unpatchify(set, BlendMode::feather).values, f.values));
  }
}

TEST_CASE("field validation catches inconsistencies") {
  GridField f;
  f.values = nn::Tensor({2, 4, 4});
  f.variables = {"A"};
  CHECK_THROWS_AS(f.validate(), DataError);
  f.variables = {"A", "A"};
  CHECK_THROWS_AS(f.validate(), DataError);
  f.variables = {"A", "B"};
  CHECK_NOTHROW(f.validate());
  f.lat_range = {5.0, 5.0};
  CHECK_THROWS_AS(f.validate(), DataError);
}
