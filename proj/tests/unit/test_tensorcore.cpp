#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "pdn/checkpoint.h"
#include "pdn/mlp.h"
#include "pdn/numeric.h"
#include "pdn/optim.h"

using namespace pdn;

namespace {

// Independent forward: plain loops over the stored weights.
std::vector<double> naive_forward(const ParamStore& s, const std::string& prefix, std::size_t layers,
                                  std::vector<double> x, double alpha, bool leaky_output) {
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& W = s.at(s.id_of(prefix + ".w" + std::to_string(l)));
    const auto& b = s.at(s.id_of(prefix + ".b" + std::to_string(l)));
    std::vector<double> y(W.rows);
    for (std::size_t r = 0; r < W.rows; ++r) {
      double acc = b.value[r];
      for (std::size_t c = 0; c < W.cols; ++c) acc += W.value[r * W.cols + c] * x[c];
      const bool act = l + 1 < layers || leaky_output;
      y[r] = act && acc < 0 ? alpha * acc : acc;
    }
    x = std::move(y);
  }
  return x;
}

MlpSpec spec(std::size_t in, std::vector<std::size_t> widths, Activation out = Activation::identity) {
  MlpSpec s;
  s.input_width = in;
  s.layer_widths = std::move(widths);
  s.output_activation = out;
  return s;
}

}  // namespace

TEST_CASE("mlp forward with identity weights") {
  ParamStore s;
  Mlp hidden(spec(2, {2}, Activation::leaky_relu), s, "h");
  Mlp out(spec(2, {2}), s, "o");
  for (const char* p : {"h.w0", "o.w0"}) {
    auto& w = s.at(s.id_of(p)).value;
    w = {1, 0, 0, 1};
  }
  const std::vector<double> x{1.0, -2.0};
  const auto yh = hidden.forward(s, x).output;
  CHECK(yh[0] == 1.0);
  CHECK(yh[1] == doctest::Approx(-0.02).epsilon(1e-15));
  const auto yo = out.forward(s, x).output;
  CHECK(yo[0] == 1.0);
  CHECK(yo[1] == -2.0);
}

TEST_CASE("mlp with zero weights returns the activated bias") {
  ParamStore s;
  Mlp m(spec(3, {2}, Activation::leaky_relu), s, "m");
  s.at(s.id_of("m.b0")).value = {0.5, -4.0};
  for (const auto& x : {std::vector<double>{1, 2, 3}, std::vector<double>{-7, 0, 9}}) {
    const auto y = m.forward(s, x).output;
    CHECK(y[0] == 0.5);
    CHECK(y[1] == doctest::Approx(-0.04));
  }
}

TEST_CASE("three-layer forward matches a hand-rolled pass") {
  ParamStore s;
  Mlp m(spec(5, {7, 4, 3}), s, "net");
  std::mt19937_64 rng(42);
  m.init(s, rng);
  for (auto& p : s) {
    if (p.name.find(".b") != std::string::npos) {
      std::uniform_real_distribution<double> d(-0.3, 0.3);
      for (auto& v : p.value) v = d(rng);
    }
  }
  const std::vector<double> ones(5, 1.0);
  const auto got = m.forward(s, ones).output;
  const auto want = naive_forward(s, "net", 3, ones, 0.01, false);
  REQUIRE(got.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-12);
}

TEST_CASE("forward dimension error names the layer") {
  ParamStore s;
  Mlp m(spec(3, {2}), s, "trig");
  const std::vector<double> x{1, 2};
  try {
    m.forward(s, x);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("trig layer 0") != std::string::npos);
  }
}

TEST_CASE("spec validation") {
  ParamStore s;
  CHECK_THROWS_AS(Mlp(spec(3, {}), s, "a"), DimensionError);
  CHECK_THROWS_AS(Mlp(spec(3, {2, 0}), s, "b"), DimensionError);
  CHECK_THROWS_AS(Mlp(spec(0, {2}), s, "c"), DimensionError);
}

TEST_CASE("linear layer backward closed form") {
  ParamStore s;
  Mlp m(spec(3, {2}), s, "lin");
  s.at(s.id_of("lin.w0")).value = {1, 2, 3, -1, 0.5, 4};
  const std::vector<double> x{0.5, -1, 2};
  auto fwd = m.forward(s, x);
  const std::vector<double> g{2, -3};
  const auto gin = m.backward(s, fwd.tape, g);
  // W^T g
  CHECK(gin[0] == doctest::Approx(1 * 2 + -1 * -3));
  CHECK(gin[1] == doctest::Approx(2 * 2 + 0.5 * -3));
  CHECK(gin[2] == doctest::Approx(3 * 2 + 4 * -3));
  const auto& gw = s.at(s.id_of("lin.w0")).grad;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(gw[r * 3 + c] == doctest::Approx(g[r] * x[c]));
  }
  const auto& gb = s.at(s.id_of("lin.b0")).grad;
  CHECK(gb[0] == 2);
  CHECK(gb[1] == -3);
}

TEST_CASE("zero upstream gradient accumulates nothing") {
  ParamStore s;
  Mlp m(spec(4, {5, 3}), s, "z");
  std::mt19937_64 rng(1);
  m.init(s, rng);
  const std::vector<double> x{1, -1, 2, 0.5};
  auto fwd = m.forward(s, x);
  const std::vector<double> g(3, 0.0);
  const auto gin = m.backward(s, fwd.tape, g);
  for (double v : gin) CHECK(v == 0.0);
  for (const auto& p : s) {
    for (double v : p.grad) CHECK(v == 0.0);
  }
}

TEST_CASE("reused or stale tapes are rejected") {
  ParamStore s;
  Mlp m(spec(2, {2}), s, "t");
  std::mt19937_64 rng(3);
  m.init(s, rng);
  const std::vector<double> x{1, 2}, g{1, 1};
  auto fwd = m.forward(s, x);
  m.backward(s, fwd.tape, g);
  CHECK_THROWS_AS(m.backward(s, fwd.tape, g), StaleTapeError);

  auto fwd2 = m.forward(s, x);
  s.at(s.id_of("t.w0")).grad.assign(4, 1.0);
  adam_step(s, AdamConfig{});
  CHECK_THROWS_AS(m.backward(s, fwd2.tape, g), StaleTapeError);

  Mlp other(spec(2, {2}), s, "u");
  auto fwd3 = m.forward(s, x);
  CHECK_THROWS_AS(other.backward(s, fwd3.tape, g), StaleTapeError);
}

TEST_CASE("mlp gradients match finite differences for random nets") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> depth(1, 4), width(1, 32);
  std::uniform_real_distribution<double> unit(-1, 1);
  for (int trial = 0; trial < 12; ++trial) {
    ParamStore s;
    std::vector<std::size_t> widths;
    const std::size_t d = depth(rng);
    for (std::size_t l = 0; l + 1 < d; ++l) widths.push_back(width(rng));
    widths.push_back(width(rng));
    const std::size_t in = width(rng);
    Mlp m(spec(in, widths), s, "fd");
    m.init(s, rng);
    for (auto& p : s) {
      for (auto& v : p.value) v += 0.05 * unit(rng);  // non-zero biases too
    }
    std::vector<double> x(in), w(widths.back());
    for (auto& v : x) v = unit(rng);
    for (auto& v : w) v = unit(rng);
    // loss = w . mlp(x)
    LossClosure loss = [&](ParamStore& st, bool with_grad) {
      if (!with_grad) {
        const auto y = m.infer(st, x);
        double acc = 0;
        for (std::size_t k = 0; k < y.size(); ++k) acc += w[k] * y[k];
        return acc;
      }
      st.zero_grad();
      auto f = m.forward(st, x);
      double acc = 0;
      for (std::size_t k = 0; k < f.output.size(); ++k) acc += w[k] * f.output[k];
      m.backward(st, f.tape, w);
      return acc;
    };
    const auto r = grad_check(loss, s);
    INFO("trial " << trial << " worst " << r.worst_param << "[" << r.worst_index << "] a=" << r.worst_analytic << " n=" << r.worst_numeric);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("softplus examples") {
  CHECK(softplus(0.0) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(std::abs(softplus(100.0) - 100.0) < 1e-12);
  // log1p(e^-100) equals e^-100 to well under one ulp.
  CHECK(softplus(-100.0) == std::exp(-100.0));
  CHECK(softplus(40.0) == 40.0 + std::log1p(std::exp(-40.0)));
}

TEST_CASE("softplus is positive, above identity and monotone on a grid") {
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 1000; ++k) {
    const double x = -50.0 + 100.0 * k / 999.0;
    const double y = softplus(x);
    CHECK(y > 0.0);
    // log1p(e^-x) drops below half an ulp of x past ~37.
    if (x < 30.0) {
      CHECK(y > x);
      CHECK(y > prev);
    } else {
      CHECK(y >= x);
      CHECK(y >= prev);
    }
    prev = y;
  }
}

TEST_CASE("merge_path equals softplus of the sum on a grid") {
  double worst = 0.0;
  for (int a = 0; a <= 80; ++a) {
    for (int b = 0; b <= 80; ++b) {
      const double t = -20.0 + 0.5 * a, s = -20.0 + 0.5 * b;
      worst = std::max(worst, std::abs(merge_path(t, s) - softplus(t + s)));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("adam first step moves by lr") {
  ParamStore s;
  const auto id = s.add("theta", 1, 1);
  s.at(id).grad[0] = 1.0;
  adam_step(s, AdamConfig{0.1});
  CHECK(s.at(id).value[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(s.at(id).step == 1);
  CHECK(s.at(id).grad[0] == 0.0);
}

TEST_CASE("adam two steps match the hand recursion") {
  ParamStore s;
  const auto id = s.add("theta", 1, 1);
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double theta = 0, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    s.at(id).grad[0] = 1.0;
    adam_step(s, AdamConfig{lr, b1, b2, eps});
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }
  CHECK(s.at(id).value[0] == doctest::Approx(theta).epsilon(1e-14));
  CHECK(s.at(id).first_moment[0] == doctest::Approx(m).epsilon(1e-14));
  CHECK(s.at(id).second_moment[0] == doctest::Approx(v).epsilon(1e-14));
}

TEST_CASE("adam with zero gradients is the identity") {
  ParamStore s;
  const auto a = s.add("a", 3, 4);
  const auto b = s.add("b", 1, 2);
  std::mt19937_64 rng(5);
  s.init_glorot(a, 4, 3, rng);
  s.at(b).value = {0.25, -1.5};
  const auto before_a = s.at(a).value;
  const auto before_b = s.at(b).value;
  for (int k = 0; k < 3; ++k) adam_step(s, AdamConfig{0.5});
  CHECK(s.at(a).value == before_a);
  CHECK(s.at(b).value == before_b);
}

TEST_CASE("adam rejects non-finite gradients and names the group") {
  ParamStore s;
  s.add("ok", 1, 2);
  const auto bad = s.add("trig.w1", 2, 2);
  s.at(bad).grad[3] = std::numeric_limits<double>::quiet_NaN();
  const auto before = s.at(bad).value;
  try {
    adam_step(s, AdamConfig{});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("trig.w1") != std::string::npos);
  }
  CHECK(s.at(bad).value == before);
}

TEST_CASE("grad_check on quadratic and corrupted gradients") {
  ParamStore s;
  const auto id = s.add("theta", 1, 5);
  s.at(id).value = {0.3, -1.2, 2.0, 0.7, -0.1};
  auto quad = [&](double scale) {
    return LossClosure([&, scale](ParamStore& st, bool with_grad) {
      auto& p = st.at(id);
      double l = 0;
      for (double v : p.value) l += 0.5 * v * v;
      if (with_grad) {
        st.zero_grad();
        for (std::size_t k = 0; k < p.size(); ++k) p.grad[k] = scale * p.value[k];
      }
      return l;
    });
  };
  CHECK(grad_check(quad(1.0), s).max_relative_error < 1e-8);
  const auto bad = grad_check(quad(2.0), s);
  CHECK(bad.max_relative_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(bad.ok(1e-4));
}

TEST_CASE("checkpoint round trip is bit exact") {
  ParamStore s;
  const auto a = s.add("emb.user.user_id", 4, 3);
  const auto b = s.add("trig.b0", 1, 2);
  std::mt19937_64 rng(11);
  s.init_glorot(a, 3, 4, rng);
  s.at(b).value = {std::numeric_limits<double>::denorm_min(), -0.0};
  const auto bytes = encode_checkpoint(s);
  auto fresh = decode_checkpoint(bytes);
  REQUIRE(fresh.size() == 2);
  CHECK(fresh.at(fresh.id_of("emb.user.user_id")).value == s.at(a).value);
  CHECK(std::signbit(fresh.at(fresh.id_of("trig.b0")).value[1]));
  CHECK(encode_checkpoint(fresh) == bytes);
  CHECK(checkpoint_id(fresh) == checkpoint_id(s));

  ParamStore target;
  target.add("emb.user.user_id", 4, 3);
  target.add("trig.b0", 1, 2);
  decode_checkpoint(bytes, target);
  CHECK(encode_checkpoint(target) == bytes);
}

TEST_CASE("checkpoint rejects truncation, corruption and shape mismatch") {
  ParamStore s;
  s.add("w", 2, 2);
  auto bytes = encode_checkpoint(s);
  CHECK_THROWS_AS(decode_checkpoint(std::span(bytes).first(bytes.size() - 3)), IntegrityError);
  auto flipped = bytes;
  flipped[20] ^= std::byte{1};
  CHECK_THROWS_AS(decode_checkpoint(flipped), IntegrityError);
  ParamStore wrong;
  wrong.add("w", 2, 3);
  CHECK_THROWS_AS(decode_checkpoint(bytes, wrong), IntegrityError);
}

TEST_CASE("softplus stays positive far below underflow") {
  for (double x : {-700.0, -745.0, -800.0, -1e6, -std::numeric_limits<double>::infinity()}) CHECK(softplus(x) > 0.0);
  CHECK(std::isnan(softplus(std::nan(""))));
  CHECK(merge_path(-1e300, -1e300) > 0.0);
}
