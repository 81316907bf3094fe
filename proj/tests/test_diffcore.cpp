#include "gesturerep/diffcore.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace gesturerep;
using diff::Array;
using doctest::Approx;

namespace {

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Central differences written out here rather than through check_gradients.
double fd_error(const std::function<Array()>& fn, std::vector<Array> leaves, double eps = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  fn().backward();
  double worst = 0;
  for (auto& leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + eps;
      const double up = fn().item();
      values[i] = keep - eps;
      const double down = fn().item();
      values[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
  }
  return worst;
}

// Weighted sum so every output entry reaches the scalar with its own weight.
Array weighted(const Array& y, std::mt19937_64& rng) {
  return diff::sum(diff::mul(y, Array::constant(y.shape(), uniform(y.size(), rng))));
}

struct Primitive {
  const char* name;
  std::function<std::pair<std::function<Array()>, std::vector<Array>>(std::mt19937_64&)> make;
};

std::vector<Primitive> primitives() {
  auto param = [](diff::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    const auto n = diff::shape_numel(s);
    return Array::parameter(std::move(s), uniform(n, rng, lo, hi));
  };
  std::vector<Primitive> out;
  auto unary = [&](const char* name, std::function<Array(const Array&)> op, double lo, double hi) {
    out.push_back({name, [=](std::mt19937_64& rng) {
                     auto x = param({3, 4}, rng, lo, hi);
                     auto w = Array::constant({3, 4}, uniform(12, rng));
                     return std::pair{std::function<Array()>([=] { return diff::sum(diff::mul(op(x), w)); }),
                                      std::vector<Array>{x}};
                   }});
  };
  auto binary = [&](const char* name, std::function<Array(const Array&, const Array&)> op, diff::Shape sa,
                    diff::Shape sb) {
    out.push_back({name, [=](std::mt19937_64& rng) {
                     auto a = param(sa, rng), b = param(sb, rng);
                     auto probe = op(a, b);
                     auto w = Array::constant(probe.shape(), uniform(probe.size(), rng));
                     return std::pair{std::function<Array()>([=] { return diff::sum(diff::mul(op(a, b), w)); }),
                                      std::vector<Array>{a, b}};
                   }});
  };
  unary("relu", [](const Array& x) { return diff::relu(x); }, 0.1, 1.0);
  unary("relu negative side", [](const Array& x) { return diff::relu(x); }, -1.0, -0.1);
  unary("exp", [](const Array& x) { return diff::exp(x); }, -1.0, 1.0);
  unary("log", [](const Array& x) { return diff::log(x); }, 0.2, 2.0);
  unary("softplus", [](const Array& x) { return diff::softplus(x); }, -3.0, 3.0);
  unary("sigmoid", [](const Array& x) { return diff::sigmoid(x); }, -3.0, 3.0);
  unary("square", [](const Array& x) { return diff::square(x); }, -1.0, 1.0);
  unary("scale", [](const Array& x) { return diff::scale(x, -2.5); }, -1.0, 1.0);
  unary("add_scalar", [](const Array& x) { return diff::add_scalar(x, 0.7); }, -1.0, 1.0);
  unary("transpose", [](const Array& x) { return diff::reshape(diff::transpose(x), {3, 4}); }, -1.0, 1.0);
  unary("reshape", [](const Array& x) { return diff::reshape(diff::reshape(x, {2, 6}), {3, 4}); }, -1.0, 1.0);
  unary("softmax", [](const Array& x) { return diff::softmax(x); }, -2.0, 2.0);
  unary("l2_normalize", [](const Array& x) { return diff::l2_normalize(x); }, 0.1, 1.0);
  out.push_back({"sum", [=](std::mt19937_64& rng) {
                   auto x = param({2, 5}, rng);
                   return std::pair{std::function<Array()>([=] { return diff::square(diff::sum(x)); }),
                                    std::vector<Array>{x}};
                 }});
  out.push_back({"mean", [=](std::mt19937_64& rng) {
                   auto x = param({2, 5}, rng);
                   return std::pair{std::function<Array()>([=] { return diff::square(diff::mean(x)); }),
                                    std::vector<Array>{x}};
                 }});
  out.push_back({"mean_last", [=](std::mt19937_64& rng) {
                   auto x = param({2, 3, 4}, rng);
                   auto w = Array::constant({2, 3}, uniform(6, rng));
                   return std::pair{std::function<Array()>([=] { return diff::sum(diff::mul(diff::mean_last(x), w)); }),
                                    std::vector<Array>{x}};
                 }});
  out.push_back({"log_sum_exp", [=](std::mt19937_64& rng) {
                   auto x = param({3, 4}, rng, -2.0, 2.0);
                   auto w = Array::constant({3}, uniform(3, rng));
                   return std::pair{std::function<Array()>([=] { return diff::sum(diff::mul(diff::log_sum_exp(x), w)); }),
                                    std::vector<Array>{x}};
                 }});
  out.push_back({"log_sum_exp masked", [=](std::mt19937_64& rng) {
                   auto x = param({3, 4}, rng, -2.0, 2.0);
                   auto w = Array::constant({3}, uniform(3, rng));
                   std::vector<bool> mask(12, true);
                   mask[1] = mask[6] = mask[11] = false;
                   return std::pair{
                       std::function<Array()>([=] { return diff::sum(diff::mul(diff::log_sum_exp(x, mask), w)); }),
                       std::vector<Array>{x}};
                 }});
  binary("add", [](const Array& a, const Array& b) { return diff::add(a, b); }, {3, 4}, {3, 4});
  binary("sub", [](const Array& a, const Array& b) { return diff::sub(a, b); }, {3, 4}, {3, 4});
  binary("mul", [](const Array& a, const Array& b) { return diff::mul(a, b); }, {3, 4}, {3, 4});
  binary("matmul", [](const Array& a, const Array& b) { return diff::matmul(a, b); }, {3, 4}, {4, 2});
  binary("add_bias", [](const Array& a, const Array& b) { return diff::add_bias(a, b); }, {3, 4}, {4});
  binary("concat rows", [](const Array& a, const Array& b) { return diff::concat(a, b, 0); }, {2, 3}, {4, 3});
  binary("concat cols", [](const Array& a, const Array& b) { return diff::concat(a, b, 1); }, {3, 2}, {3, 5});
  binary("joint_mix", [](const Array& x, const Array& adj) { return diff::joint_mix(x, adj); }, {2, 3, 4, 5}, {5, 5});
  binary("mix_layers", [](const Array& x, const Array& w) { return diff::mix_layers(x, w); }, {2, 3, 6}, {3});
  out.push_back({"gather_cols", [=](std::mt19937_64& rng) {
                   auto x = param({4, 3}, rng);
                   auto w = Array::constant({4}, uniform(4, rng));
                   const std::vector<std::size_t> cols{2, 0, 1, 2};
                   return std::pair{std::function<Array()>([=] { return diff::sum(diff::mul(diff::gather_cols(x, cols), w)); }),
                                    std::vector<Array>{x}};
                 }});
  out.push_back({"channel_map", [=](std::mt19937_64& rng) {
                   auto x = param({2, 3, 4, 5}, rng), wt = param({6, 3}, rng), b = param({6}, rng);
                   auto w = Array::constant({2, 6, 4, 5}, uniform(240, rng));
                   return std::pair{
                       std::function<Array()>([=] { return diff::sum(diff::mul(diff::channel_map(x, wt, b), w)); }),
                       std::vector<Array>{x, wt, b}};
                 }});
  for (std::size_t stride : {1u, 2u}) {
    out.push_back({stride == 1 ? "temporal_conv" : "temporal_conv stride 2", [=](std::mt19937_64& rng) {
                     auto x = param({2, 3, 7, 4}, rng), wt = param({5, 3, 3}, rng), b = param({5}, rng);
                     auto probe = diff::temporal_conv(x, wt, b, stride);
                     auto w = Array::constant(probe.shape(), uniform(probe.size(), rng));
                     return std::pair{std::function<Array()>(
                                          [=] { return diff::sum(diff::mul(diff::temporal_conv(x, wt, b, stride), w)); }),
                                      std::vector<Array>{x, wt, b}};
                   }});
  }
  return out;
}

}  // namespace

TEST_CASE("forward examples") {
  auto x = Array::constant({2}, {-1.0, 2.0});
  auto r = diff::relu(x);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[1] == 2.0);

  auto n = diff::l2_normalize(Array::constant({1, 2}, {3.0, 4.0}));
  CHECK(n.values()[0] == Approx(0.6).epsilon(1e-15));
  CHECK(n.values()[1] == Approx(0.8).epsilon(1e-15));

  auto lse = diff::log_sum_exp(Array::constant({2}, {0.0, 0.0}));
  CHECK(lse.item() == Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("backward examples") {
  auto x = Array::parameter({2}, {1.0, 2.0});
  diff::sum(diff::square(x)).backward();
  CHECK(x.grad()[0] == Approx(2.0));
  CHECK(x.grad()[1] == Approx(4.0));

  auto k = Array::parameter({1}, {-1.0});
  diff::sum(diff::relu(k)).backward();
  CHECK(k.grad()[0] == 0.0);
  auto z = Array::parameter({1}, {0.0});
  diff::sum(diff::relu(z)).backward();
  CHECK(z.grad()[0] == 0.0);

  auto l = Array::parameter({2}, {0.0, 0.0});
  diff::log_sum_exp(l).backward();
  CHECK(l.grad()[0] == Approx(0.5));
  CHECK(l.grad()[1] == Approx(0.5));
}

TEST_CASE("repeated backward accumulates") {
  auto x = Array::parameter({2}, {1.0, -3.0});
  auto f = diff::sum(diff::square(x));
  f.backward();
  f.backward();
  CHECK(x.grad()[0] == Approx(4.0));
  CHECK(x.grad()[1] == Approx(-12.0));
  x.zero_grad();
  f.backward();
  CHECK(x.grad()[0] == Approx(2.0));
}

TEST_CASE("errors") {
  auto a = Array::parameter({2, 3}, std::vector<double>(6, 1.0));
  auto b = Array::parameter({3, 2}, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(diff::add(a, b), diff::ShapeError);
  CHECK_THROWS_AS(diff::matmul(a, a), diff::ShapeError);
  CHECK_THROWS_AS(diff::square(a).backward(), diff::ContractError);
  auto bad = Array::parameter({1}, {-1.0});
  CHECK_THROWS_AS(diff::check_gradients([&] { return diff::sum(diff::log(bad)); }, {bad}), diff::NumericError);
}

TEST_CASE("check_gradients on a quadratic") {
  std::mt19937_64 rng(1);
  auto x = Array::parameter({6}, uniform(6, rng));
  CHECK(diff::check_gradients([&] { return diff::sum(diff::square(x)); }, {x}) < 1e-6);
}

TEST_CASE("every primitive matches central differences at 100 random points") {
  for (const auto& p : primitives()) {
    CAPTURE(p.name);
    std::mt19937_64 rng(std::hash<std::string>{}(p.name));
    double worst = 0;
    for (int point = 0; point < 100; ++point) {
      auto [fn, leaves] = p.make(rng);
      worst = std::max(worst, fd_error(fn, leaves));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("check_gradients agrees with the hand-written difference") {
  for (const auto& p : primitives()) {
    CAPTURE(p.name);
    std::mt19937_64 rng(7);
    auto [fn, leaves] = p.make(rng);
    CHECK(diff::check_gradients(fn, leaves, {1e-6, 0, 0}) < 1e-4);
  }
}

TEST_CASE("backward is linear") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto x = Array::parameter({3, 4}, uniform(12, rng));
    auto w = Array::constant({4, 2}, uniform(8, rng));
    auto f = [&] { return diff::sum(diff::softplus(diff::matmul(x, w))); };
    auto g = [&] { return diff::log_sum_exp(diff::reshape(diff::square(x), {12})); };
    const double a = 1.7, b = -0.6;
    x.zero_grad();
    f().backward();
    std::vector<double> gf(x.grad().begin(), x.grad().end());
    x.zero_grad();
    g().backward();
    std::vector<double> gg(x.grad().begin(), x.grad().end());
    x.zero_grad();
    diff::add(diff::scale(f(), a), diff::scale(g(), b)).backward();
    for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(x.grad()[i] - (a * gf[i] + b * gg[i])) < 1e-10);
  }
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(9);
  auto x = Array::constant({2, 3, 6, 5}, uniform(180, rng));
  auto wt = Array::constant({4, 3, 3}, uniform(36, rng));
  auto b = Array::constant({4}, uniform(4, rng));
  auto y1 = diff::temporal_conv(x, wt, b, 2);
  auto y2 = diff::temporal_conv(x, wt, b, 2);
  CHECK(std::equal(y1.values().begin(), y1.values().end(), y2.values().begin()));
}

TEST_CASE("relu margin probe records the closest input to the kink") {
  diff::ReluMarginProbe probe;
  diff::relu(Array::constant({3}, {0.5, -0.02, 3.0}));
  CHECK(probe.margin() == Approx(0.02));
}
