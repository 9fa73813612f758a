#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mose/datastream.hpp"
#include "mose/error.hpp"
#include "mose/memory.hpp"

using namespace mose;

namespace {

Batch items(std::size_t first, std::size_t n, int label = 0) {
  Batch b;
  b.features = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    b.features(i, 0) = static_cast<double>(first + i);
    b.labels.push_back(label);
    b.ids.push_back(first + i);
  }
  return b;
}

}  // namespace

TEST_CASE("buffer keeps everything until full") {
  MemoryBuffer buf(5);
  Rng rng = make_rng(0, Substream::buffer);
  buf.reservoir_update(items(0, 3), rng);
  CHECK(buf.size() == 3);
  CHECK(buf.seen_count() == 3);
  buf.reservoir_update(items(3, 2), rng);
  CHECK(buf.size() == 5);
  auto ids = buf.contents().ids;
  std::sort(ids.begin(), ids.end());
  CHECK(ids == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("seen count grows by the batch size regardless of acceptance") {
  MemoryBuffer buf(2);
  Rng rng = make_rng(1, Substream::buffer);
  for (std::size_t b = 0; b < 10; ++b) buf.reservoir_update(items(b * 7, 7), rng);
  CHECK(buf.seen_count() == 70);
  CHECK(buf.size() == 2);
}

TEST_CASE("reservoir retention is uniform") {
  // 100 items into 5 slots, 4000 trials: retention 0.05 per item.
  constexpr std::size_t n = 100, m = 5, trials = 4000;
  std::vector<std::size_t> kept(n, 0);
  Rng rng = make_rng(2, Substream::buffer);
  for (std::size_t t = 0; t < trials; ++t) {
    MemoryBuffer buf(m);
    for (std::size_t b = 0; b < n / 10; ++b) buf.reservoir_update(items(b * 10, 10), rng);
    for (auto id : buf.contents().ids) ++kept[id];
  }
  const double p = static_cast<double>(m) / n;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  double chi2 = 0.0;
  for (auto k : kept) {
    const double f = static_cast<double>(k) / trials;
    CHECK(std::fabs(f - p) < 4.5 * sigma);
    chi2 += (f - p) * (f - p) / (sigma * sigma);
  }
  // 99 degrees of freedom: mean 99, sd about 14.
  CHECK(chi2 < 99 + 5 * 14.1);
}

TEST_CASE("retrieval draws distinct stored samples") {
  MemoryBuffer buf(20);
  Rng rng = make_rng(3, Substream::buffer);
  buf.reservoir_update(items(0, 20), rng);
  const Batch r = buf.random_retrieve(8, rng);
  CHECK(r.size() == 8);
  CHECK(std::set<std::size_t>(r.ids.begin(), r.ids.end()).size() == 8);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r.features(i, 0) == static_cast<double>(r.ids[i]));
  CHECK(buf.random_retrieve(50, rng).size() == 20);
}

TEST_CASE("retrieval from an empty buffer is empty") {
  MemoryBuffer buf(4);
  Rng rng = make_rng(4, Substream::buffer);
  CHECK(buf.random_retrieve(3, rng).empty());
}

TEST_CASE("retrieval covers every slot over many draws") {
  MemoryBuffer buf(10);
  Rng rng = make_rng(5, Substream::buffer);
  buf.reservoir_update(items(0, 10), rng);
  std::vector<int> hits(10, 0);
  for (int t = 0; t < 5000; ++t)
    for (auto id : buf.random_retrieve(3, rng).ids) ++hits[id];
  for (int h : hits) CHECK(std::abs(h - 1500) < 150);
}

TEST_CASE("class filters and class list") {
  MemoryBuffer buf(10);
  Rng rng = make_rng(6, Substream::buffer);
  buf.reservoir_update(items(0, 3, 2), rng);
  buf.reservoir_update(items(3, 4, 5), rng);
  CHECK(buf.classes() == std::vector<int>{2, 5});
  const std::vector<int> five = {5};
  CHECK(buf.contents_of(five).size() == 4);
}

TEST_CASE("buffer save writes a loadable dataset") {
  MemoryBuffer buf(4);
  Rng rng = make_rng(7, Substream::buffer);
  buf.reservoir_update(items(0, 4, 1), rng);
  const auto path = std::filesystem::temp_directory_path() / "mose_test_buffer.bin";
  buf.save(path, 3);
  const auto d = load_dataset(path);
  CHECK(d.size() == 4);
  CHECK(d.class_count == 3);
  std::filesystem::remove(path);
}

TEST_CASE("invalid buffers and batches are rejected") {
  CHECK_THROWS_AS(MemoryBuffer(0), Error);
  MemoryBuffer buf(3);
  Rng rng = make_rng(8, Substream::buffer);
  buf.reservoir_update(items(0, 2), rng);
  Batch wide;
  wide.features = Matrix(1, 5);
  wide.labels = {0};
  wide.ids = {9};
  CHECK_THROWS_AS(buf.reservoir_update(wide, rng), Error);
}
