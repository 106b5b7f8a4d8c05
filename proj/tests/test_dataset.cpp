#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "advt/dataset.hpp"
#include "advt/error.hpp"
#include "support.hpp"

using namespace advt;
using advt::testing::TempDir;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

// Three 2x2 images written byte by byte.
void write_fixture(const std::filesystem::path& images, const std::filesystem::path& labels,
                   std::uint32_t image_magic = 0x803, std::uint32_t label_count = 3) {
  std::ofstream img(images, std::ios::binary);
  put_be32(img, image_magic);
  put_be32(img, 3);
  put_be32(img, 2);
  put_be32(img, 2);
  const unsigned char pixels[12] = {0, 255, 51, 102, 255, 255, 0, 0, 1, 2, 3, 4};
  img.write(reinterpret_cast<const char*>(pixels), 12);
  std::ofstream lbl(labels, std::ios::binary);
  put_be32(lbl, 0x801);
  put_be32(lbl, label_count);
  const unsigned char ys[3] = {7, 0, 3};
  lbl.write(reinterpret_cast<const char*>(ys), 3);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("IDX fixture decodes to byte/255 with labels in order") {
  TempDir dir("idx");
  write_fixture(dir / "img", dir / "lbl");
  const Dataset d = load_idx(dir / "img", dir / "lbl");
  REQUIRE(d.size() == 3);
  CHECK(d.dim() == 4);
  CHECK(d.num_classes == 8);
  CHECK(d.y == std::vector<int>{7, 0, 3});
  CHECK(d.x(0, 0) == 0.0);
  CHECK(d.x(0, 1) == 1.0);
  CHECK(d.x(0, 2) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(d.x(0, 3) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(d.x(2, 3) == doctest::Approx(4.0 / 255.0).epsilon(1e-15));
}

TEST_CASE("IDX rejects bad magic, count mismatch and truncation") {
  TempDir dir("idx-bad");
  write_fixture(dir / "img", dir / "lbl", 0x802);
  CHECK_THROWS_AS(load_idx(dir / "img", dir / "lbl"), FormatError);

  write_fixture(dir / "img", dir / "lbl", 0x803, 4);
  CHECK_THROWS_AS(load_idx(dir / "img", dir / "lbl"), ConsistencyError);

  write_fixture(dir / "img", dir / "lbl");
  std::filesystem::resize_file(dir / "img", 16 + 6);
  CHECK_THROWS_AS(load_idx(dir / "img", dir / "lbl"), ConsistencyError);

  CHECK_THROWS_AS(load_idx(dir / "missing", dir / "lbl"), IoError);
}

TEST_CASE("IDX save and load round trip at byte precision") {
  TempDir dir("idx-rt");
  write_fixture(dir / "img", dir / "lbl");
  const Dataset d = load_idx(dir / "img", dir / "lbl");
  save_idx(d, 2, 2, dir / "img2", dir / "lbl2");
  CHECK(read_text(dir / "img") == read_text(dir / "img2"));
  CHECK(read_text(dir / "lbl") == read_text(dir / "lbl2"));
}

TEST_CASE("CSV finds the label column anywhere and clips features") {
  TempDir dir("csv");
  write_text(dir / "a.csv", "a,label,b\n0.5,2,1.5\n-0.25,0,0.75\n");
  const Dataset d = load_csv(dir / "a.csv");
  REQUIRE(d.size() == 2);
  CHECK(d.dim() == 2);
  CHECK(d.y == std::vector<int>{2, 0});
  CHECK(d.num_classes == 3);
  CHECK(d.x(0, 0) == 0.5);
  CHECK(d.x(0, 1) == 1.0);
  CHECK(d.x(1, 0) == 0.0);
  CHECK(d.x(1, 1) == 0.75);

  write_text(dir / "b.csv", "x,y,target\n0.1,0.2,4\n");
  CHECK(load_csv(dir / "b.csv", "target").y == std::vector<int>{4});
}

TEST_CASE("CSV errors") {
  TempDir dir("csv-bad");
  write_text(dir / "ragged.csv", "a,b,label\n0.1,0.2,1\n0.3,1\n");
  CHECK_THROWS_AS(load_csv(dir / "ragged.csv"), FormatError);
  write_text(dir / "frac.csv", "a,label\n0.1,2.5\n");
  CHECK_THROWS_AS(load_csv(dir / "frac.csv"), FormatError);
  write_text(dir / "nolabel.csv", "a,b\n0.1,0.2\n");
  CHECK_THROWS_AS(load_csv(dir / "nolabel.csv"), FormatError);
  write_text(dir / "text.csv", "a,label\nabc,1\n");
  CHECK_THROWS_AS(load_csv(dir / "text.csv"), FormatError);
  write_text(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_csv(dir / "empty.csv"), FormatError);
}

TEST_CASE("CSV round trip keeps values to 8 decimals and is idempotent") {
  TempDir dir("csv-rt");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d;
    d.num_classes = 10;
    const int n = 1 + static_cast<int>(rng() % 20);
    const int dim = 1 + static_cast<int>(rng() % 9);
    d.x = advt::testing::random_points(n, dim, rng);
    if (trial % 3 == 0) d.x(0, 0) = 1.0;
    if (trial % 3 == 1) d.x(0, 0) = 0.0;
    for (int i = 0; i < n; ++i) d.y.push_back(static_cast<int>(rng() % 10));
    save_csv(d, dir / "a.csv");
    const Dataset back = load_csv(dir / "a.csv");
    REQUIRE(back.size() == d.size());
    CHECK(back.y == d.y);
    CHECK((back.x - d.x).cwiseAbs().maxCoeff() < 1e-8);
    save_csv(back, dir / "b.csv");
    CHECK(read_text(dir / "a.csv") == read_text(dir / "b.csv"));
  }
}

TEST_CASE("CSV header names features f0.. and labels last") {
  TempDir dir("csv-head");
  Dataset d;
  d.num_classes = 2;
  d.x = Features::Constant(1, 3, 0.123456789);
  d.y = {1};
  save_csv(d, dir / "a.csv");
  CHECK(read_text(dir / "a.csv") == "f0,f1,f2,label\n0.12345678,0.12345678,0.12345678,1\n");
}

TEST_CASE("split_disjoint returns contiguous non-overlapping parts") {
  const Dataset d = synthetic_train_test(100, 10, 3).train;
  const auto parts = split_disjoint(d, 20, 5);
  REQUIRE(parts.size() == 5);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    CHECK(parts[p].size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(parts[p].y[i] == d.y[p * 20 + i]);
      CHECK(parts[p].x.row(static_cast<Eigen::Index>(i)) ==
            d.x.row(static_cast<Eigen::Index>(p * 20 + i)));
    }
  }
  CHECK_THROWS_AS(split_disjoint(d, 21, 5), SizeError);
}

TEST_CASE("synthetic fixture is deterministic, bounded and covers every class") {
  const Dataset a = make_synthetic_digits({.samples = 500, .seed = 5});
  const Dataset b = make_synthetic_digits({.samples = 500, .seed = 5});
  const Dataset c = make_synthetic_digits({.samples = 500, .seed = 6});
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.x != c.x);
  CHECK(a.dim() == 64);
  CHECK(a.x.minCoeff() >= 0.0);
  CHECK(a.x.maxCoeff() <= 1.0);
  CHECK(std::set<int>(a.y.begin(), a.y.end()).size() == 10);
  CHECK_NOTHROW(validate(a));
}

TEST_CASE("validate flags out-of-range labels and shape mismatch") {
  Dataset d;
  d.num_classes = 2;
  d.x = Features::Zero(2, 3);
  d.y = {0, 2};
  CHECK_THROWS_AS(validate(d), ConsistencyError);
  d.y = {0};
  CHECK_THROWS_AS(validate(d), ConsistencyError);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s) {
    for (std::uint64_t k = 0; k < 50; ++k) seen.insert(derive_seed(s, k));
  }
  CHECK(seen.size() == 200);
  CHECK(derive_seed(9, 3) == derive_seed(9, 3));
}

TEST_CASE("load_source understands csv and rejects unknown kinds") {
  TempDir dir("source");
  const TrainTest tt = synthetic_train_test(30, 10, 1);
  save_csv(tt.train, dir / "train.csv");
  save_csv(tt.test, dir / "test.csv");
  const TrainTest back = load_source("csv:" + (dir / "train.csv").string() + "," +
                                         (dir / "test.csv").string(),
                                     20, 5, 0);
  CHECK(back.train.size() == 20);
  CHECK(back.test.size() == 5);
  CHECK(back.train.y[3] == tt.train.y[3]);
  CHECK_THROWS_AS(load_source("parquet:x", 1, 1, 0), ContractError);
  CHECK_THROWS_AS(load_source("csv:only-one.csv", 1, 1, 0), ContractError);
}
