#include "doctest.h"
#include "memarray/encoder.hpp"
#include "memarray/errors.hpp"
#include "support.hpp"

using namespace mema;

namespace {

EncoderParams small_encoder(Rng& rng, std::size_t s = 2) {
  EncoderParams p({3, s, 3, 2, 4});
  p.init(rng, 0.8);
  return p;
}

}  // namespace

TEST_CASE("subsample_stack") {
  Rng rng(1);
  const Matrix x = testing::random_matrix(9, 2, rng);
  CHECK(subsample_stack(x, 1) == x);
  const Matrix y = subsample_stack(x, 4);
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 8);
  const Matrix back = subsample_unstack(y, 9, 4);
  for (std::size_t r = 0; r < 8; ++r) CHECK(back.row_copy(r) == x.row_copy(r));
  CHECK(back.row_copy(8) == Vec(2, 0.0));
  CHECK_THROWS_AS(subsample_stack(testing::random_matrix(3, 2, rng), 4), ShapeError);
}

TEST_CASE("encode output length law") {
  Rng rng(2);
  EncoderParams p({5, 4, 3, 1, 6});
  p.init(rng);
  CHECK(encode(p, Matrix(8, 5)).rows() == 2);
  CHECK(encode(p, Matrix(103, 5)).rows() == 25);
  for (int trial = 0; trial < 50; ++trial) {
    const auto T = static_cast<std::size_t>(rng.uniform_int(4, 80));
    const Matrix h = encode(p, testing::random_matrix(T, 5, rng));
    CHECK(h.rows() == T / 4);
    CHECK(h.cols() == 6);
  }
  CHECK_THROWS_AS(encode(p, Matrix(3, 5)), ShapeError);
  CHECK_THROWS_AS(encode(p, Matrix(8, 4)), ShapeError);
}

TEST_CASE("one encoder instance is universal across streams") {
  Rng rng(3);
  EncoderParams p = small_encoder(rng);
  const Matrix x = testing::random_matrix(10, 3, rng);
  const UfeSequence a = encode(p, FeatureSequence{x, "s1", "u"});
  const UfeSequence b = encode(p, FeatureSequence{x, "s2", "u"});
  CHECK(a.frames == b.frames);
  CHECK(a.stream_id == "s1");
}

TEST_CASE("encoder of zeros is the same on every run") {
  Rng rng(4);
  EncoderParams p = small_encoder(rng);
  const Matrix zeros(12, 3);
  CHECK(encode(p, zeros) == encode(p, zeros));
}

TEST_CASE("encoder gradient passes grad_check") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(500 + seed);
    EncoderParams p = small_encoder(rng, static_cast<std::size_t>(rng.uniform_int(1, 3)));
    const auto T = static_cast<std::size_t>(rng.uniform_int(3, 9));
    const Matrix x = testing::random_matrix(T, 3, rng);
    const Matrix w = testing::random_matrix(T / p.dims.subsampling, 4, rng);
    auto f = [&] {
      const Matrix h = encode(p, x);
      double s = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) s += w.data()[i] * h.data()[i];
      return s;
    };
    EncoderCache cache;
    encode(p, x, &cache);
    EncoderParams g = p;
    for (auto& t : make_group("g", g).tensors) t.value->set_zero();
    encode_backward(p, cache, w, g);
    const auto res = grad_check(f, {make_group("encoder", p)}, {make_group("encoder", g)}, 1e-5);
    CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
  }
}
