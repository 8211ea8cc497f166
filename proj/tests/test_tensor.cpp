#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "vitft/error.hpp"
#include "vitft/tensor.hpp"

using namespace vitft;

TEST(Tensor, ShapeHelpers) {
  EXPECT_EQ(shape_numel({2, 3, 4}), 24u);
  EXPECT_EQ(shape_numel({}), 1u);
  EXPECT_EQ(shape_numel({5, 0}), 0u);
  EXPECT_EQ(shape_to_string({2, 3}), "[2,3]");
}

TEST(Tensor, ParamSetLayout) {
  ParamSet p;
  p.add("a", {2, 3});
  p.add("b", {4});
  EXPECT_EQ(p.num_tensors(), 2u);
  EXPECT_EQ(p.num_elements(), 10u);
  EXPECT_EQ(p.layout(), (std::vector<std::uint64_t>{6, 4}));
  EXPECT_EQ(p.index_of("b"), 1u);
  EXPECT_TRUE(p.contains("a"));
  EXPECT_FALSE(p.contains("c"));
  EXPECT_EQ(p.flat_index({1, 2}), 8u);
  EXPECT_EQ(p.locate(8), (ElementRef{1, 2}));
  EXPECT_EQ(p.locate(5), (ElementRef{0, 5}));
  EXPECT_THROW(p.add("a", {1}), ValidationError);
  EXPECT_THROW(p.index_of("zz"), ValidationError);
}

TEST(Tensor, RoundTripThroughTensors) {
  ParamSet p;
  p.add("x", {3});
  p.add("y", {2});
  std::iota(p.values().begin(), p.values().end(), 1.0f);
  const auto back = ParamSet::from_tensors(p.to_tensors());
  EXPECT_TRUE(back == p);
  EXPECT_EQ(back.tensor("y")[1], 5.0f);
}

TEST(Tensor, EqualityIsBitwise) {
  ParamSet a;
  a.add("w", {1});
  auto b = a;
  a.values()[0] = 0.0f;
  b.values()[0] = -0.0f;
  EXPECT_FALSE(a == b);
  a.values()[0] = std::nanf("");
  b.values()[0] = a.values()[0];
  EXPECT_TRUE(a == b);
}
