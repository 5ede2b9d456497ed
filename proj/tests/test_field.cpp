#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "voxray/volume_render.hpp"
#include "voxray/voxel_field.hpp"

using namespace voxray;

TEST_CASE("query of a constant field is the activated constant") {
  voxel_field<double> field(4, 5, 6, {0, 0, 0}, {1, 1, 1});
  for (auto& p : field.parameters()) p = 0.0;
  rng gen(1);
  for (int i = 0; i < 200; i++) {
    vec3<double> p{gen.uniform(0, 1), gen.uniform(0, 1), gen.uniform(0, 1)};
    auto s = field.query(p);
    CHECK(s.sigma == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(s.color.x == Catch::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("outside the box: empty space, gray color, zero gradient") {
  auto field = init_field<double>(4, 4, 4, {0, 0, 0}, {1, 1, 1}, 0);
  auto s = field.query({2, 0.5, 0.5});
  CHECK(s.sigma == 0.0);
  CHECK(s.color.x == 0.5);

  std::vector<double> grad(field.parameter_count(), 0.0);
  field.accumulate_query_gradient({2, 0.5, 0.5}, 1.0, {1, 1, 1}, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("interpolate then activate") {
  voxel_field<double> field(3, 3, 3, {0, 0, 0}, {2, 2, 2});
  for (auto& p : field.parameters()) p = 0.0;
  field.raw(1, 1, 1, 0) = 1.5;  // node at (1,1,1) in meters
  field.raw(2, 1, 1, 0) = -0.5;

  // at the node itself: single-node support
  CHECK(field.query({1, 1, 1}).sigma == Catch::Approx(softplus(1.5)).epsilon(1e-12));
  // midpoint between two nodes: activation of the mean of raw values,
  // not the mean of activations
  double expected = softplus((1.5 - 0.5) / 2);
  double naive = (softplus(1.5) + softplus(-0.5)) / 2;
  auto mid = field.query({1.5, 1, 1});
  CHECK(mid.sigma == Catch::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(mid.sigma - naive) > 1e-3);
}

TEST_CASE("gradient at a node touches only that node") {
  auto field = init_field<double>(3, 3, 3, {0, 0, 0}, {2, 2, 2}, 7);
  std::vector<double> grad(field.parameter_count(), 0.0);
  field.accumulate_query_gradient({1, 1, 1}, 1.0, {0, 0, 0}, grad);
  size_t node = field.node_index(1, 1, 1);
  double raw = field.raw(1, 1, 1, 0);
  for (size_t i = 0; i < grad.size(); i++) {
    if (i == 4 * node)
      CHECK(grad[i] == Catch::Approx(sigmoid(raw)).epsilon(1e-12));  // softplus' = sigmoid
    else
      CHECK(grad[i] == 0.0);
  }
}

TEST_CASE("query gradient matches central finite differences") {
  auto field = init_field<double>(4, 4, 4, {0, 0, 0}, {1.5, 1.5, 1.5}, 3);
  rng gen(11);
  auto params = field.parameters();
  for (auto& p : params) p = gen.uniform(-1.5, 1.5);

  for (int trial = 0; trial < 40; trial++) {
    vec3<double> pos{gen.uniform(0.01, 1.49), gen.uniform(0.01, 1.49), gen.uniform(0.01, 1.49)};
    double d_sigma = gen.uniform(-1, 1);
    vec3<double> d_color{gen.uniform(-1, 1), gen.uniform(-1, 1), gen.uniform(-1, 1)};

    std::vector<double> grad(field.parameter_count(), 0.0);
    field.accumulate_query_gradient(pos, d_sigma, d_color, grad);

    auto loss = [&]() {
      auto s = field.query(pos);
      return d_sigma * s.sigma + dot(d_color, s.color);
    };
    const double h = 1e-4;
    int checked = 0;
    for (size_t i = 0; i < params.size() && checked < 12; i++) {
      if (grad[i] == 0.0) continue;
      double saved = params[i];
      params[i] = saved + h;
      double up = loss();
      params[i] = saved - h;
      double down = loss();
      params[i] = saved;
      double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-3 * std::max(1e-8, std::abs(fd)));
      checked++;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("gradient accumulation is additive") {
  auto field = init_field<double>(3, 3, 3, {0, 0, 0}, {1, 1, 1}, 5);
  std::vector<double> combined(field.parameter_count(), 0.0);
  std::vector<double> one(field.parameter_count(), 0.0);
  std::vector<double> two(field.parameter_count(), 0.0);
  field.accumulate_query_gradient({0.3, 0.4, 0.5}, 1.0, {0.1, 0.2, 0.3}, combined);
  field.accumulate_query_gradient({0.8, 0.2, 0.6}, -0.5, {0.4, 0.0, -0.2}, combined);
  field.accumulate_query_gradient({0.3, 0.4, 0.5}, 1.0, {0.1, 0.2, 0.3}, one);
  field.accumulate_query_gradient({0.8, 0.2, 0.6}, -0.5, {0.4, 0.0, -0.2}, two);
  for (size_t i = 0; i < combined.size(); i++)
    CHECK(combined[i] == Catch::Approx(one[i] + two[i]).margin(1e-10));
}

TEST_CASE("adam: zero gradient, sign step, second-moment recurrence") {
  std::vector<double> params{1.0, -2.0, 0.5};
  std::vector<double> grads{0.0, 0.0, 0.0};
  adam_state<double> state(3);

  adam_step<double>(params, grads, state, 0.1);
  CHECK(state.step == 1);
  CHECK(params == std::vector<double>{1.0, -2.0, 0.5});

  // bias-corrected first step is lr * sign(g)
  std::vector<double> p2{0.0, 0.0};
  adam_state<double> s2(2);
  std::vector<double> g2{0.37, -1234.5};
  adam_step<double>(p2, g2, s2, 0.1);
  CHECK(p2[0] == Catch::Approx(-0.1).epsilon(1e-6));
  CHECK(p2[1] == Catch::Approx(0.1).epsilon(1e-6));

  // scaling all gradients leaves the first update direction unchanged
  // (magnitudes agree up to the epsilon regularizer)
  std::vector<double> p3{0.0, 0.0};
  adam_state<double> s3(2);
  std::vector<double> g3{0.37 * 1000, -1234.5 * 1000};
  adam_step<double>(p3, g3, s3, 0.1);
  CHECK(p3[0] == Catch::Approx(p2[0]).epsilon(1e-6));
  CHECK(p3[1] == Catch::Approx(p2[1]).epsilon(1e-6));

  // constant gradient: update magnitude approaches lr * sign(g)
  std::vector<double> p4{0.0};
  adam_state<double> s4(1);
  double prev = 0;
  for (int i = 0; i < 500; i++) {
    prev = p4[0];
    std::vector<double> g4{0.8};
    adam_step<double>(p4, std::span<const double>(g4), s4, 0.01);
  }
  CHECK(std::abs((prev - p4[0])) == Catch::Approx(0.01).epsilon(1e-3));

  // beta2 = 0.99 honored: hand-rolled recurrence over 3 steps
  adam_state<double> s5(1);
  std::vector<double> p5{0.0};
  double v_expected = 0;
  for (double g : {0.5, -0.25, 1.5}) {
    std::vector<double> gv{g};
    adam_step<double>(p5, std::span<const double>(gv), s5, 0.01);
    v_expected = 0.99 * v_expected + 0.01 * g * g;
    CHECK(s5.v[0] == Catch::Approx(v_expected).epsilon(1e-12));
  }

  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(adam_step<double>(params, std::span<const double>(wrong), state, 0.1),
                  shape_mismatch_error);
}

TEST_CASE("init_field: determinism, near-transparent start, bad resolution") {
  auto a = init_field<float>(8, 8, 8, {0, 0, 0}, {1, 1, 1}, 42);
  auto b = init_field<float>(8, 8, 8, {0, 0, 0}, {1, 1, 1}, 42);
  for (size_t i = 0; i < a.parameter_count(); i++)
    CHECK(a.parameters()[i] == b.parameters()[i]);

  CHECK_THROWS_AS((init_field<float>(1, 4, 4, {0, 0, 0}, {1, 1, 1}, 0)), bad_resolution_error);

  // transmittance over a 5 m ray through the -2 init stays above one half
  auto field = init_field<double>(8, 8, 8, {0, 0, 0}, {6, 6, 6}, 0);
  ray_samples<double> ws;
  ws.resize(128);
  sample_stratified<double>(0.05, 5.0, 128, nullptr, ws.t);
  fill_deltas<double>(std::span<const double>(ws.t), 5.0, ws.delta);
  for (int i = 0; i < 128; i++) {
    auto s = field.query({0.5 + ws.t[i] * 0.7, 3.0, 3.0});
    ws.sigma[i] = s.sigma;
    ws.color[i] = s.color;
  }
  compute_weights(ws);
  CHECK(ws.residual_transmittance > 0.5);
}

TEST_CASE("checkpoint round trip is exact") {
  auto field = init_field<float>(5, 6, 7, {-1, -2, 0}, {1, 2, 3}, 9);
  adam_state<float> state(field.parameter_count());
  rng gen(3);
  for (auto& m : state.m) m = float(gen.uniform(-1, 1));
  for (auto& v : state.v) v = float(gen.uniform(0, 1));
  state.step = 1234;

  auto path = std::filesystem::path("tmp_tests") / "ckpt.vxrf";
  std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, field, state);
  auto [loaded, loaded_state] = load_checkpoint<float>(path);

  CHECK(loaded.nx() == 5);
  CHECK(loaded.bbox_min() == field.bbox_min());
  CHECK(loaded_state.step == 1234);
  for (size_t i = 0; i < field.parameter_count(); i++) {
    CHECK(loaded.parameters()[i] == field.parameters()[i]);
    CHECK(loaded_state.m[i] == state.m[i]);
    CHECK(loaded_state.v[i] == state.v[i]);
  }
  CHECK_THROWS_AS(load_checkpoint<double>(path), checkpoint_error);  // dtype mismatch
}
