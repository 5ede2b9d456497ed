// Dense voxel radiance field with trilinear interpolation, analytic
// parameter gradients, Adam, and checkpoint IO.
//
// Parameters live at lattice nodes, interleaved per node as
// (raw_density, raw_r, raw_g, raw_b). Activations are applied after
// interpolation: sigma = softplus(raw), color = sigmoid(raw). Scalar type is
// a template parameter: float keeps training cache-friendly, double is used
// where finite-difference gradient checks need headroom.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <vector>

#include "math.hpp"
#include "rng.hpp"

namespace voxray {

struct shape_mismatch_error : std::runtime_error {
  shape_mismatch_error() : std::runtime_error("parameter/gradient shapes differ") {}
};
struct bad_resolution_error : std::runtime_error {
  bad_resolution_error() : std::runtime_error("field resolution must be >= 2 per axis") {}
};
struct checkpoint_error : std::runtime_error {
  explicit checkpoint_error(const std::string& what) : std::runtime_error(what) {}
};

template <typename T>
inline T softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <typename T>
inline T sigmoid(T x) {
  if (x >= 0) {
    T e = std::exp(-x);
    return 1 / (1 + e);
  }
  T e = std::exp(x);
  return e / (1 + e);
}

template <typename T>
struct field_sample {
  T sigma;        // density per meter, >= 0
  vec3<T> color;  // in (0,1)
};

template <typename T>
class voxel_field {
 public:
  voxel_field() = default;
  voxel_field(int nx, int ny, int nz, vec3d bbox_min, vec3d bbox_max)
      : nx_(nx), ny_(ny), nz_(nz), bbox_min_(bbox_min), bbox_max_(bbox_max),
        params_(size_t(4) * nx * ny * nz, T(0)) {
    if (nx < 2 || ny < 2 || nz < 2) throw bad_resolution_error{};
    scale_ = {(nx_ - 1) / (bbox_max_.x - bbox_min_.x), (ny_ - 1) / (bbox_max_.y - bbox_min_.y),
              (nz_ - 1) / (bbox_max_.z - bbox_min_.z)};
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  vec3d bbox_min() const { return bbox_min_; }
  vec3d bbox_max() const { return bbox_max_; }
  size_t node_count() const { return size_t(nx_) * ny_ * nz_; }
  size_t parameter_count() const { return params_.size(); }

  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }

  size_t node_index(int ix, int iy, int iz) const {
    return (size_t(iz) * ny_ + iy) * nx_ + ix;
  }

  // Raw parameter access for a node: slot 0 density, 1..3 color.
  T& raw(int ix, int iy, int iz, int slot) { return params_[4 * node_index(ix, iy, iz) + slot]; }
  T raw(int ix, int iy, int iz, int slot) const {
    return params_[4 * node_index(ix, iy, iz) + slot];
  }

  struct cell_ref {
    size_t corner[8];  // node indices scaled by 4 (parameter offsets)
    T weight[8];
    bool inside;
  };

  cell_ref locate(vec3<T> p) const {
    cell_ref ref;
    vec3d pd(p);
    if (pd.x < bbox_min_.x || pd.y < bbox_min_.y || pd.z < bbox_min_.z || pd.x > bbox_max_.x ||
        pd.y > bbox_max_.y || pd.z > bbox_max_.z) {
      ref.inside = false;
      return ref;
    }
    ref.inside = true;
    double fx = (pd.x - bbox_min_.x) * scale_.x;
    double fy = (pd.y - bbox_min_.y) * scale_.y;
    double fz = (pd.z - bbox_min_.z) * scale_.z;
    int ix = std::min(nx_ - 2, std::max(0, int(fx)));
    int iy = std::min(ny_ - 2, std::max(0, int(fy)));
    int iz = std::min(nz_ - 2, std::max(0, int(fz)));
    T tx = T(fx - ix), ty = T(fy - iy), tz = T(fz - iz);
    tx = clamp(tx, T(0), T(1));
    ty = clamp(ty, T(0), T(1));
    tz = clamp(tz, T(0), T(1));
    size_t base = node_index(ix, iy, iz);
    const size_t sx = 1, sy = nx_, sz = size_t(nx_) * ny_;
    const size_t nodes[8] = {base,           base + sx,           base + sy,           base + sx + sy,
                             base + sz,      base + sx + sz,      base + sy + sz,      base + sx + sy + sz};
    const T w[8] = {(1 - tx) * (1 - ty) * (1 - tz), tx * (1 - ty) * (1 - tz),
                    (1 - tx) * ty * (1 - tz),       tx * ty * (1 - tz),
                    (1 - tx) * (1 - ty) * tz,       tx * (1 - ty) * tz,
                    (1 - tx) * ty * tz,             tx * ty * tz};
    for (int i = 0; i < 8; i++) {
      ref.corner[i] = 4 * nodes[i];
      ref.weight[i] = w[i];
    }
    return ref;
  }

  // Interpolate raw parameters then activate. Outside the box: empty space
  // with mid-gray color (sigmoid(0)).
  field_sample<T> query(vec3<T> p) const {
    cell_ref ref = locate(p);
    if (!ref.inside) return {T(0), {T(0.5), T(0.5), T(0.5)}};
    T raw[4] = {0, 0, 0, 0};
    for (int i = 0; i < 8; i++) {
      const T* node = &params_[ref.corner[i]];
      T w = ref.weight[i];
      raw[0] += w * node[0];
      raw[1] += w * node[1];
      raw[2] += w * node[2];
      raw[3] += w * node[3];
    }
    return {softplus(raw[0]), {sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])}};
  }

  // Forward query that stashes the interpolation cell and the activation
  // derivatives so the matching backward pass costs only fused multiply-adds.
  struct query_cache {
    cell_ref ref;
    T deriv[4];  // d sigma / d raw, then d color_c / d raw per channel
  };

  field_sample<T> query_cached(vec3<T> p, query_cache& cache) const {
    cache.ref = locate(p);
    if (!cache.ref.inside) {
      for (auto& d : cache.deriv) d = 0;
      return {T(0), {T(0.5), T(0.5), T(0.5)}};
    }
    T raw[4] = {0, 0, 0, 0};
    for (int i = 0; i < 8; i++) {
      const T* node = &params_[cache.ref.corner[i]];
      T w = cache.ref.weight[i];
      raw[0] += w * node[0];
      raw[1] += w * node[1];
      raw[2] += w * node[2];
      raw[3] += w * node[3];
    }
    field_sample<T> out;
    out.sigma = softplus(raw[0]);
    cache.deriv[0] = sigmoid(raw[0]);
    for (int c = 0; c < 3; c++) {
      T s = sigmoid(raw[1 + c]);
      (&out.color.x)[c] = s;
      cache.deriv[1 + c] = s * (1 - s);
    }
    return out;
  }

  void accumulate_cached_gradient(const query_cache& cache, T d_sigma, vec3<T> d_color,
                                  std::span<T> gradient) const {
    if (!cache.ref.inside) return;
    const T d_raw0 = d_sigma * cache.deriv[0];
    const T d_raw1 = d_color.x * cache.deriv[1];
    const T d_raw2 = d_color.y * cache.deriv[2];
    const T d_raw3 = d_color.z * cache.deriv[3];
    for (int i = 0; i < 8; i++) {
      T* g = &gradient[cache.ref.corner[i]];
      T w = cache.ref.weight[i];
      g[0] += w * d_raw0;
      g[1] += w * d_raw1;
      g[2] += w * d_raw2;
      g[3] += w * d_raw3;
    }
  }

  // Chain rule through activation and the trilinear weights, accumulated
  // into a dense gradient buffer laid out like the parameters.
  void accumulate_query_gradient(vec3<T> p, T d_sigma, vec3<T> d_color,
                                 std::span<T> gradient) const {
    if (gradient.size() != params_.size()) throw shape_mismatch_error{};
    cell_ref ref = locate(p);
    if (!ref.inside) return;
    T raw[4] = {0, 0, 0, 0};
    for (int i = 0; i < 8; i++) {
      const T* node = &params_[ref.corner[i]];
      T w = ref.weight[i];
      raw[0] += w * node[0];
      raw[1] += w * node[1];
      raw[2] += w * node[2];
      raw[3] += w * node[3];
    }
    // softplus' = sigmoid, sigmoid' = s(1-s)
    T d_raw[4];
    d_raw[0] = d_sigma * sigmoid(raw[0]);
    for (int c = 0; c < 3; c++) {
      T s = sigmoid(raw[1 + c]);
      d_raw[1 + c] = (&d_color.x)[c] * s * (1 - s);
    }
    for (int i = 0; i < 8; i++) {
      T* g = &gradient[ref.corner[i]];
      T w = ref.weight[i];
      g[0] += w * d_raw[0];
      g[1] += w * d_raw[1];
      g[2] += w * d_raw[2];
      g[3] += w * d_raw[3];
    }
  }

 private:
  int nx_ = 0, ny_ = 0, nz_ = 0;
  vec3d bbox_min_, bbox_max_;
  vec3d scale_;  // (n-1) / extent per axis
  std::vector<T> params_;
};

// Near-transparent start: raw density -2 (sigma ~ 0.127/m), small seeded
// color noise so the optimizer has symmetry to break.
template <typename T>
voxel_field<T> init_field(int nx, int ny, int nz, vec3d bbox_min, vec3d bbox_max, uint64_t seed) {
  voxel_field<T> field(nx, ny, nz, bbox_min, bbox_max);
  rng gen(hash_combine(seed, 0x6669656c64ull));
  auto params = field.parameters();
  for (size_t i = 0; i < params.size(); i += 4) {
    params[i] = T(-2.0);
    for (int c = 1; c < 4; c++) params[i + c] = T(gen.uniform(-0.1, 0.1));
  }
  return field;
}

template <typename T>
struct adam_state {
  std::vector<T> m, v;
  uint64_t step = 0;
  double beta1 = 0.9, beta2 = 0.99, epsilon = 1e-8;

  explicit adam_state(size_t parameter_count = 0)
      : m(parameter_count, T(0)), v(parameter_count, T(0)) {}
};

// One standard Adam update with bias correction; no weight decay, no
// gradient clipping. `begin`/`end` allow sharded parallel calls, but the
// step counter must be advanced exactly once per batch by the caller.
template <typename T>
void adam_step_range(std::span<T> params, std::span<const T> grads, adam_state<T>& state,
                     double lr, uint64_t step, size_t begin, size_t end) {
  const T inv_bc1 = T(1.0 / (1.0 - std::pow(state.beta1, double(step))));
  const T inv_bc2 = T(1.0 / (1.0 - std::pow(state.beta2, double(step))));
  const T b1 = T(state.beta1), b2 = T(state.beta2);
  const T one_minus_b1 = 1 - b1, one_minus_b2 = 1 - b2;
  const T lr_t = T(lr), eps = T(state.epsilon);
  T* m = state.m.data();
  T* v = state.v.data();
  for (size_t i = begin; i < end; i++) {
    T g = grads[i];
    m[i] = b1 * m[i] + one_minus_b1 * g;
    v[i] = b2 * v[i] + one_minus_b2 * g * g;
    T m_hat = m[i] * inv_bc1;
    T v_hat = v[i] * inv_bc2;
    params[i] -= lr_t * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, adam_state<T>& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw shape_mismatch_error{};
  state.step++;
  adam_step_range(params, grads, state, lr, state.step, 0, params.size());
}

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian):
//   magic "VXRF", u32 version=1, u32 scalar_bytes, i32 nx ny nz,
//   f64 bbox[6], u64 adam_step, f64 beta1 beta2 epsilon,
//   params[4*nodes], adam_m[...], adam_v[...]   (scalar_bytes each)

namespace detail {

template <typename T>
void write_raw(std::ofstream& out, const T* data, size_t count) {
  out.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(T)));
}
template <typename T>
void read_raw(std::ifstream& in, T* data, size_t count) {
  in.read(reinterpret_cast<char*>(data), std::streamsize(count * sizeof(T)));
  if (!in) throw checkpoint_error("truncated checkpoint");
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const voxel_field<T>& field,
                     const adam_state<T>& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw checkpoint_error("cannot write " + path.string());
  out.write("VXRF", 4);
  uint32_t version = 1, scalar_bytes = sizeof(T);
  detail::write_raw(out, &version, 1);
  detail::write_raw(out, &scalar_bytes, 1);
  int32_t res[3] = {field.nx(), field.ny(), field.nz()};
  detail::write_raw(out, res, 3);
  double bbox[6] = {field.bbox_min().x, field.bbox_min().y, field.bbox_min().z,
                    field.bbox_max().x, field.bbox_max().y, field.bbox_max().z};
  detail::write_raw(out, bbox, 6);
  detail::write_raw(out, &state.step, 1);
  double adam_cfg[3] = {state.beta1, state.beta2, state.epsilon};
  detail::write_raw(out, adam_cfg, 3);
  detail::write_raw(out, field.parameters().data(), field.parameters().size());
  detail::write_raw(out, state.m.data(), state.m.size());
  detail::write_raw(out, state.v.data(), state.v.size());
}

template <typename T>
std::pair<voxel_field<T>, adam_state<T>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot read " + path.string());
  char magic[4];
  detail::read_raw(in, magic, 4);
  if (std::memcmp(magic, "VXRF", 4) != 0) throw checkpoint_error("not a checkpoint file");
  uint32_t version, scalar_bytes;
  detail::read_raw(in, &version, 1);
  detail::read_raw(in, &scalar_bytes, 1);
  if (version != 1) throw checkpoint_error("unsupported checkpoint version");
  if (scalar_bytes != sizeof(T)) throw checkpoint_error("checkpoint scalar type mismatch");
  int32_t res[3];
  detail::read_raw(in, res, 3);
  double bbox[6];
  detail::read_raw(in, bbox, 6);
  voxel_field<T> field(res[0], res[1], res[2], {bbox[0], bbox[1], bbox[2]},
                       {bbox[3], bbox[4], bbox[5]});
  adam_state<T> state(field.parameter_count());
  detail::read_raw(in, &state.step, 1);
  double adam_cfg[3];
  detail::read_raw(in, adam_cfg, 3);
  state.beta1 = adam_cfg[0];
  state.beta2 = adam_cfg[1];
  state.epsilon = adam_cfg[2];
  detail::read_raw(in, field.parameters().data(), field.parameters().size());
  detail::read_raw(in, state.m.data(), state.m.size());
  detail::read_raw(in, state.v.data(), state.v.size());
  return {std::move(field), std::move(state)};
}

}  // namespace voxray
