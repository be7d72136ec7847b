#include <cmath>

#include "doctest.h"
#include "sluj/corpus.h"
#include "sluj/errors.h"
#include "sluj/heads.h"
#include "test_util.h"

namespace sluj {
namespace {

using testing::check_gradients;
using testing::kFdTolerance;
using testing::random_const;
using testing::random_param;

TEST_SUITE("heads") {

TEST_CASE("prior mask on the flight example counts by hand") {
  auto data = load_dataset(testing::test_data_dir() / "flight_example");
  Vocabularies v = build_vocab(data);
  PriorMask m = build_prior_mask(data, v.intents, v.slots, 0.0);
  CHECK(m.num_slots() == 3);
  CHECK(m.num_intents() == 1);
  CHECK(m.at(v.slots.encode("O"), 0) == doctest::Approx(4.0 / 6));
  CHECK(m.at(v.slots.encode("B-fromloc.city_name"), 0) == doctest::Approx(1.0 / 6));

  PriorMask smoothed = build_prior_mask(data, v.intents, v.slots, 0.5);
  CHECK(smoothed.at(v.slots.encode("O"), 0) == doctest::Approx(4.5 / 7.5));
  CHECK_FALSE(smoothed.matrix.requires_grad());
  CHECK_THROWS_AS(build_prior_mask({}, v.intents, v.slots, 0.1), ContractError);
  CHECK_THROWS_AS(build_prior_mask(data, v.intents, v.slots, -1.0), ContractError);
}

TEST_CASE("prior mask columns are positive distributions") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto data = synth_generate(seed, 5 + seed % 7);
    Vocabularies v = build_vocab(data);
    PriorMask m = build_prior_mask(data, v.intents, v.slots, 1e-3);
    for (size_t i = 0; i < m.num_intents(); ++i) {
      double total = 0;
      for (size_t s = 0; s < m.num_slots(); ++s) {
        CHECK(m.at(s, i) > 0.0);
        total += m.at(s, i);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("sentence summary joins the two directions") {
  Tensor enc = Tensor::constant(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor s = sentence_summary(enc);
  CHECK(s.shape() == Shape{1, 4});
  CHECK(s.at(0, 0) == 9);
  CHECK(s.at(0, 1) == 10);
  CHECK(s.at(0, 2) == 3);
  CHECK(s.at(0, 3) == 4);
  CHECK_THROWS_AS(sentence_summary(Tensor::constant(2, 3, {1, 2, 3, 4, 5, 6})),
                  DimensionError);
}

TEST_CASE("intent head outputs a distribution and its loss is -ln p") {
  Rng rng(9);
  IntentHead head = IntentHead::init(6, {5}, 3, rng);
  Tensor x = random_const(1, 6, rng);
  Tensor p = intent_forward(x, head);
  CHECK(p.shape() == Shape{1, 3});
  double total = 0;
  for (double v : p.values()) total += v;
  CHECK(total == doctest::Approx(1.0));
  CHECK(intent_loss(p, 2).item() == doctest::Approx(-std::log(p.at(0, 2))));
  CHECK_THROWS_AS(intent_loss(p, 3), ContractError);
  CHECK_THROWS_AS(intent_forward(random_const(1, 5, rng), head), DimensionError);

  Tensor xp = random_param(1, 6, rng);
  std::vector<std::pair<std::string, Tensor>> params = {{"x", xp}};
  for (auto& t : head.parameters()) params.emplace_back("head", t);
  auto g = check_gradients([&] { return intent_loss(intent_forward(xp, head), 1); }, params);
  INFO(g.worst);
  CHECK(g.max_error < kFdTolerance);
}

TEST_CASE("mask gate repeats M y beside each context row") {
  PriorMask mask;
  mask.matrix = Tensor::constant(3, 2, {0.5, 0.1, 0.25, 0.1, 0.25, 0.8});
  Tensor y = Tensor::row({0.4, 0.6});
  Tensor ctx = Tensor::constant(2, 2, {7, 8, 9, 10});
  Tensor g = mask_gate(y, mask, ctx);
  CHECK(g.shape() == Shape{2, 5});
  for (size_t k = 0; k < 2; ++k) {
    CHECK(g.at(k, 0) == doctest::Approx(0.26));
    CHECK(g.at(k, 1) == doctest::Approx(0.16));
    CHECK(g.at(k, 2) == doctest::Approx(0.58));
    CHECK(g.at(k, 3) == ctx.at(k, 0));
    CHECK(g.at(k, 4) == ctx.at(k, 1));
  }
  CHECK_THROWS_AS(mask_gate(Tensor::row({1, 0, 0}), mask, ctx), DimensionError);

  Rng rng(10);
  Tensor yp = random_param(1, 2, rng);
  Tensor cp = random_param(2, 2, rng);
  Tensor r = random_const(2, 5, rng);
  auto check = check_gradients([&] { return sum(mul(mask_gate(yp, mask, cp), r)); },
                               {{"y", yp}, {"ctx", cp}});
  INFO(check.worst);
  CHECK(check.max_error < kFdTolerance);
}

}  // TEST_SUITE
}  // namespace
}  // namespace sluj
