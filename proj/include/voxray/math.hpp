// Small fixed-size vector/matrix types used across the library.
// Everything is value-semantic and constexpr-friendly; no external math deps.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>

namespace voxray {

template <typename T>
struct vec3 {
  T x = 0, y = 0, z = 0;

  constexpr vec3() = default;
  constexpr vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}
  template <typename U>
  explicit constexpr vec3(const vec3<U>& v)
      : x(static_cast<T>(v.x)), y(static_cast<T>(v.y)), z(static_cast<T>(v.z)) {}

  constexpr T& operator[](int i) { return (&x)[i]; }
  constexpr const T& operator[](int i) const { return (&x)[i]; }
};

using vec3d = vec3<double>;
using vec3f = vec3<float>;

template <typename T> constexpr vec3<T> operator+(vec3<T> a, vec3<T> b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
template <typename T> constexpr vec3<T> operator-(vec3<T> a, vec3<T> b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
template <typename T> constexpr vec3<T> operator-(vec3<T> a) { return {-a.x, -a.y, -a.z}; }
template <typename T> constexpr vec3<T> operator*(T s, vec3<T> a) { return {s * a.x, s * a.y, s * a.z}; }
template <typename T> constexpr vec3<T> operator*(vec3<T> a, T s) { return s * a; }
template <typename T> constexpr vec3<T> operator*(vec3<T> a, vec3<T> b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
template <typename T> constexpr vec3<T> operator/(vec3<T> a, T s) { return {a.x / s, a.y / s, a.z / s}; }
template <typename T> constexpr vec3<T>& operator+=(vec3<T>& a, vec3<T> b) { a = a + b; return a; }
template <typename T> constexpr vec3<T>& operator-=(vec3<T>& a, vec3<T> b) { a = a - b; return a; }
template <typename T> constexpr vec3<T>& operator*=(vec3<T>& a, T s) { a = a * s; return a; }
template <typename T> constexpr bool operator==(vec3<T> a, vec3<T> b) { return a.x == b.x && a.y == b.y && a.z == b.z; }

template <typename T> constexpr T dot(vec3<T> a, vec3<T> b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
template <typename T> constexpr vec3<T> cross(vec3<T> a, vec3<T> b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <typename T> T length(vec3<T> a) { return std::sqrt(dot(a, a)); }
template <typename T> constexpr T length_squared(vec3<T> a) { return dot(a, a); }
template <typename T> vec3<T> normalize(vec3<T> a) { return a / length(a); }
template <typename T> constexpr T min_component(vec3<T> a) { return a.x < a.y ? (a.x < a.z ? a.x : a.z) : (a.y < a.z ? a.y : a.z); }
template <typename T> constexpr T max_component(vec3<T> a) { return a.x > a.y ? (a.x > a.z ? a.x : a.z) : (a.y > a.z ? a.y : a.z); }

template <typename T> constexpr T clamp(T v, T lo, T hi) { return v < lo ? lo : (v > hi ? hi : v); }
template <typename T> constexpr vec3<T> clamp(vec3<T> v, T lo, T hi) {
  return {clamp(v.x, lo, hi), clamp(v.y, lo, hi), clamp(v.z, lo, hi)};
}
template <typename T> constexpr T lerp(T a, T b, T t) { return a + t * (b - a); }
template <typename T> constexpr vec3<T> lerp(vec3<T> a, vec3<T> b, T t) { return a + t * (b - a); }

template <typename T>
std::ostream& operator<<(std::ostream& os, vec3<T> v) {
  return os << "(" << v.x << ", " << v.y << ", " << v.z << ")";
}

// Column-major-free 3x3 matrix: m[r][c], operates on vec3 as column vectors.
template <typename T>
struct mat3 {
  std::array<std::array<T, 3>, 3> m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static constexpr mat3 identity() { return mat3{}; }
  static constexpr mat3 from_columns(vec3<T> c0, vec3<T> c1, vec3<T> c2) {
    mat3 r;
    r.m = {{{c0.x, c1.x, c2.x}, {c0.y, c1.y, c2.y}, {c0.z, c1.z, c2.z}}};
    return r;
  }
  constexpr vec3<T> col(int c) const { return {m[0][c], m[1][c], m[2][c]}; }
  constexpr vec3<T> row(int r) const { return {m[r][0], m[r][1], m[r][2]}; }
};

using mat3d = mat3<double>;

template <typename T>
constexpr vec3<T> operator*(const mat3<T>& a, vec3<T> v) {
  return {a.m[0][0] * v.x + a.m[0][1] * v.y + a.m[0][2] * v.z,
          a.m[1][0] * v.x + a.m[1][1] * v.y + a.m[1][2] * v.z,
          a.m[2][0] * v.x + a.m[2][1] * v.y + a.m[2][2] * v.z};
}

template <typename T>
constexpr mat3<T> operator*(const mat3<T>& a, const mat3<T>& b) {
  mat3<T> r;
  for (int i = 0; i < 3; i++)
    for (int j = 0; j < 3; j++)
      r.m[i][j] = a.m[i][0] * b.m[0][j] + a.m[i][1] * b.m[1][j] + a.m[i][2] * b.m[2][j];
  return r;
}

template <typename T>
constexpr mat3<T> transpose(const mat3<T>& a) {
  mat3<T> r;
  for (int i = 0; i < 3; i++)
    for (int j = 0; j < 3; j++) r.m[i][j] = a.m[j][i];
  return r;
}

template <typename T>
constexpr T determinant(const mat3<T>& a) {
  return a.m[0][0] * (a.m[1][1] * a.m[2][2] - a.m[1][2] * a.m[2][1]) -
         a.m[0][1] * (a.m[1][0] * a.m[2][2] - a.m[1][2] * a.m[2][0]) +
         a.m[0][2] * (a.m[1][0] * a.m[2][1] - a.m[1][1] * a.m[2][0]);
}

// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
// Returns eigenvalues ascending with matching unit eigenvectors as columns.
template <typename T>
inline void symmetric_eigen3(const mat3<T>& a, vec3<T>& eigenvalues, mat3<T>& eigenvectors) {
  std::array<std::array<T, 3>, 3> s = a.m;
  mat3<T> v = mat3<T>::identity();
  for (int sweep = 0; sweep < 64; sweep++) {
    T off = s[0][1] * s[0][1] + s[0][2] * s[0][2] + s[1][2] * s[1][2];
    if (off < T(1e-30)) break;
    for (int p = 0; p < 2; p++) {
      for (int q = p + 1; q < 3; q++) {
        if (std::abs(s[p][q]) < T(1e-300)) continue;
        T theta = (s[q][q] - s[p][p]) / (2 * s[p][q]);
        T t = (theta >= 0 ? T(1) : T(-1)) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        T c = 1 / std::sqrt(t * t + 1);
        T sn = t * c;
        for (int k = 0; k < 3; k++) {
          T skp = s[k][p], skq = s[k][q];
          s[k][p] = c * skp - sn * skq;
          s[k][q] = sn * skp + c * skq;
        }
        for (int k = 0; k < 3; k++) {
          T spk = s[p][k], sqk = s[q][k];
          s[p][k] = c * spk - sn * sqk;
          s[q][k] = sn * spk + c * sqk;
        }
        for (int k = 0; k < 3; k++) {
          T vkp = v.m[k][p], vkq = v.m[k][q];
          v.m[k][p] = c * vkp - sn * vkq;
          v.m[k][q] = sn * vkp + c * vkq;
        }
      }
    }
  }
  // sort ascending
  std::array<int, 3> order = {0, 1, 2};
  std::array<T, 3> evals = {s[0][0], s[1][1], s[2][2]};
  if (evals[order[0]] > evals[order[1]]) std::swap(order[0], order[1]);
  if (evals[order[1]] > evals[order[2]]) std::swap(order[1], order[2]);
  if (evals[order[0]] > evals[order[1]]) std::swap(order[0], order[1]);
  eigenvalues = {evals[order[0]], evals[order[1]], evals[order[2]]};
  eigenvectors = mat3<T>::from_columns(v.col(order[0]), v.col(order[1]), v.col(order[2]));
}

constexpr double pi = 3.14159265358979323846;
inline double radians(double degrees) { return degrees * pi / 180.0; }
inline double degrees(double rad) { return rad * 180.0 / pi; }

}  // namespace voxray
