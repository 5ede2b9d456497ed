// Differentiable volume rendering along rays.
//
// Weights use the running-product transmittance formulation
//   alpha_i = 1 - exp(-sigma_i * delta_i)
//   T_{i+1} = T_i * (1 - alpha_i),  w_i = T_i * alpha_i
// color is sum(w_i c_i) over a black background and depth is sum(w_i t_i)
// without normalization by the accumulated weight.

#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "math.hpp"
#include "rng.hpp"
#include "voxel_field.hpp"

namespace voxray {

struct invalid_bounds_error : std::runtime_error {
  invalid_bounds_error() : std::runtime_error("need 0 <= near < far and N >= 2") {}
};

// Per-ray sample buffers, reusable across rays to avoid reallocation.
template <typename T>
struct ray_samples {
  std::vector<T> t;          // N distances, strictly increasing
  std::vector<T> delta;      // N spacings, last = far - t[N-1]
  std::vector<T> sigma;      // N densities
  std::vector<vec3<T>> color;
  std::vector<T> weight;     // filled by compute_weights
  std::vector<T> one_minus_alpha;  // stashed for the backward pass
  T residual_transmittance = 1;

  void resize(size_t n) {
    t.resize(n);
    delta.resize(n);
    sigma.resize(n);
    color.resize(n);
    weight.resize(n);
    one_minus_alpha.resize(n);
  }
  size_t size() const { return t.size(); }
};

template <typename T>
struct render_output {
  vec3<T> color{};
  T depth = 0;
  T accumulation = 0;  // sum of weights
};

// One sample per uniform bin: the bin center when deterministic, uniformly
// jittered inside the bin otherwise. near = 0 is allowed; samples stay
// strictly positive because they sit inside their bins.
template <typename T>
void sample_stratified(double near, double far, int n, rng* jitter, std::vector<T>& out_t) {
  if (!(near >= 0 && far > near && n >= 2)) throw invalid_bounds_error{};
  out_t.resize(n);
  double bin = (far - near) / n;
  for (int i = 0; i < n; i++) {
    double u = jitter ? jitter->uniform() : 0.5;
    out_t[i] = T(near + (i + u) * bin);
  }
}

template <typename T>
void fill_deltas(std::span<const T> t, double far, std::vector<T>& out_delta) {
  out_delta.resize(t.size());
  for (size_t i = 0; i + 1 < t.size(); i++) out_delta[i] = t[i + 1] - t[i];
  out_delta[t.size() - 1] = T(far) - t[t.size() - 1];
}

// Eqs.-style weights via the running product; also stashes 1 - alpha_i and
// the post-ray residual transmittance for the backward pass.
template <typename T>
void compute_weights(ray_samples<T>& s) {
  const size_t n = s.size();
  T transmittance = 1;
  for (size_t i = 0; i < n; i++) {
    T one_minus_alpha = std::exp(-s.sigma[i] * s.delta[i]);
    s.one_minus_alpha[i] = one_minus_alpha;
    s.weight[i] = transmittance * (1 - one_minus_alpha);
    transmittance *= one_minus_alpha;
  }
  s.residual_transmittance = transmittance;
}

template <typename T>
render_output<T> render(const ray_samples<T>& s) {
  render_output<T> out;
  for (size_t i = 0; i < s.size(); i++) {
    out.color += s.weight[i] * s.color[i];
    out.depth += s.weight[i] * s.t[i];
    out.accumulation += s.weight[i];
  }
  return out;
}

template <typename T>
struct render_upstream {
  vec3<T> d_color{};            // dL/d rendered color
  T d_depth = 0;                // dL/d rendered depth
  std::span<const T> d_weight;  // optional dL/dw_i (empty = zeros)
};

template <typename T>
struct backward_buffers {
  std::vector<T> d_sigma;
  std::vector<vec3<T>> d_color;
  std::vector<T> dw_total;
};

// Exact chain rule through weights:
//   dw_i/dsigma_i = T_i delta_i exp(-sigma_i delta_i)
//   dw_i/dsigma_j = -delta_j w_i   (j < i)
// evaluated with one reverse suffix scan.
template <typename T>
void render_backward(const ray_samples<T>& s, const render_upstream<T>& up,
                     backward_buffers<T>& out) {
  const size_t n = s.size();
  out.d_sigma.resize(n);
  out.d_color.resize(n);
  out.dw_total.resize(n);
  std::vector<T>& d_sigma = out.d_sigma;
  std::vector<vec3<T>>& d_color = out.d_color;
  std::vector<T>& dw_total = out.dw_total;

  // total dL/dw_i
  for (size_t i = 0; i < n; i++) {
    T v = dot(up.d_color, s.color[i]) + up.d_depth * s.t[i];
    if (!up.d_weight.empty()) v += up.d_weight[i];
    dw_total[i] = v;
    d_color[i] = s.weight[i] * up.d_color;
  }

  // suffix[i] = sum_{j > i} dw_total[j] * w_j
  T suffix = 0;
  T transmittance_after = s.residual_transmittance;  // T_{n+1}
  for (size_t ii = n; ii-- > 0;) {
    // transmittance before sample ii: T_i = T_{i+1} / (1 - alpha_i)
    T one_minus_alpha = s.one_minus_alpha[ii];
    T transmittance;
    if (one_minus_alpha > T(1e-30)) {
      transmittance = transmittance_after / one_minus_alpha;
    } else {
      // opaque sample: recompute T_i by a forward pass over the prefix
      transmittance = 1;
      for (size_t j = 0; j < ii; j++) transmittance *= s.one_minus_alpha[j];
    }
    d_sigma[ii] = s.delta[ii] * (dw_total[ii] * transmittance * one_minus_alpha - suffix);
    suffix += dw_total[ii] * s.weight[ii];
    transmittance_after = transmittance;
  }
}

// Full pixel: sample positions along the ray, query the field, integrate.
template <typename T>
render_output<T> render_pixel(const voxel_field<T>& field, const ray& r, double near, double far,
                              int n, rng* jitter, ray_samples<T>& workspace) {
  sample_stratified<T>(near, far, n, jitter, workspace.t);
  fill_deltas<T>(std::span<const T>(workspace.t), far, workspace.delta);
  workspace.sigma.resize(n);
  workspace.color.resize(n);
  workspace.weight.resize(n);
  workspace.one_minus_alpha.resize(n);
  for (int i = 0; i < n; i++) {
    vec3d p = ray_at(r, double(workspace.t[i]));
    auto sample = field.query(vec3<T>(p));
    workspace.sigma[i] = sample.sigma;
    workspace.color[i] = sample.color;
  }
  compute_weights(workspace);
  return render(workspace);
}

}  // namespace voxray
