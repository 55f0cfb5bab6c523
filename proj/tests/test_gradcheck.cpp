#include "doctest.h"
#include "gradcheck.hpp"

namespace {

void expect_pass(const gradcheck::Result& r) {
  MESSAGE(r.summary());
  for (const auto& f : r.failures) FAIL_CHECK(f);
  CHECK(r.checked > 0);
  CHECK(r.worst < gradcheck::kTolerance);
  CHECK(r.skipped <= r.checked / 10 + 2);
}

}  // namespace

TEST_CASE("conv2d gradients") { expect_pass(gradcheck::conv2d()); }
TEST_CASE("batchnorm gradients in training mode") { expect_pass(gradcheck::batchnorm_train()); }
TEST_CASE("batchnorm gradients in eval mode") { expect_pass(gradcheck::batchnorm_eval()); }
TEST_CASE("activation gradients") { expect_pass(gradcheck::activations()); }
TEST_CASE("dropout gradients with a fixed mask") { expect_pass(gradcheck::dropout()); }
TEST_CASE("maxpool gradients") { expect_pass(gradcheck::maxpool()); }
TEST_CASE("dense gradients") { expect_pass(gradcheck::dense()); }
TEST_CASE("flatten, concat and split gradients") { expect_pass(gradcheck::flatten_concat()); }
TEST_CASE("weighted bce gradient") { expect_pass(gradcheck::weighted_bce()); }
TEST_CASE("l2 penalty gradient") { expect_pass(gradcheck::l2_penalty()); }
TEST_CASE("assembled best TV model gradients") { expect_pass(gradcheck::best_tv_model()); }
TEST_CASE("fused model gradients") { expect_pass(gradcheck::fused_model()); }

TEST_CASE("a wrong gradient is caught") {
  // Sanity check of the checker itself: a sign-flipped bias gradient must fail.
  using namespace acfnet::nn;
  std::mt19937_64 g(21);
  Dense<double> d("d", 5, 3, 0.0);
  Rng rng(4);
  d.initialize(rng);
  std::vector<Parameter<double>*> ps;
  d.collect(ps);
  auto x = gradcheck::random_tensor({2, 5}, g);
  const auto c = gradcheck::random_tensor({2, 3}, g);
  d.forward(x, {});
  for (auto* p : ps) p->grad.set_zero();
  d.backward(c);
  Tensor<double> wrong = ps[1]->grad;
  wrong.values() *= -1.0;
  gradcheck::GradCheck gc;
  gc.entries(ps[1]->value, wrong, [&]() { return gradcheck::dot(c, d.forward(x, {})); }, 3, "bias");
  CHECK(!gc.result().ok());
}
