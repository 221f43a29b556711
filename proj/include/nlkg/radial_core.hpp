#pragma once

// Radial geometry, quadrature, discrete operators, and the exact free
// Klein-Gordon flow on a finite ball with a Dirichlet boundary.
//
// All differential and spectral work happens in the reduced representation
// w(r) = r*u(r), which removes the coordinate singularity of the radial
// Laplacian at the origin:
//     Delta u = (r u)'' / r.
// Fields are sampled at r_i = i*h, i = 1..n, with the implied boundary
// values w(0) = 0 (regularity) and w(r_max) = 0 (Dirichlet). The last
// stored node r_n = r_max carries the Dirichlet condition; fields produced
// by this library keep it at zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace nlkg {

inline constexpr double four_pi = 4.0 * 3.14159265358979323846;

struct RadialGrid {
  double r_max = 60.0;
  int n = 6144; // interior node count, r_i = i*h for i = 1..n
  double h = 60.0 / 6144.0;

  RadialGrid() = default;
  RadialGrid(double r_max_, int n_) : r_max(r_max_), n(n_), h(r_max_ / n_) {
    if (n_ < 64) throw std::invalid_argument("RadialGrid: n must be >= 64");
    if (!(r_max_ > 0.0)) throw std::invalid_argument("RadialGrid: r_max must be positive");
  }

  // node index j = 0..n-1 maps to r = (j+1)*h
  double r(int j) const { return h * (j + 1); }

  bool operator==(const RadialGrid& o) const { return n == o.n && r_max == o.r_max; }
  bool operator!=(const RadialGrid& o) const { return !(*this == o); }
};

// Scalar radial field u(r_i). Values are the u-representation; w(r) = r*u(r)
// is formed on demand for quadrature and spectral work.
struct RadialField {
  RadialGrid grid;
  std::vector<double> values;

  RadialField() = default;
  explicit RadialField(const RadialGrid& g) : grid(g), values(g.n, 0.0) {}
  RadialField(const RadialGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (static_cast<int>(values.size()) != g.n)
      throw std::invalid_argument("RadialField: value count does not match grid");
  }

  double w(int j) const { return grid.r(j) * values[j]; }
  int n() const { return grid.n; }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void check_same_grid(const RadialField& f, const RadialField& g) {
  if (f.grid != g.grid) throw std::invalid_argument("mismatched radial grids");
}

// ---- field arithmetic ------------------------------------------------------

inline RadialField& operator+=(RadialField& f, const RadialField& g) {
  check_same_grid(f, g);
  for (int j = 0; j < f.n(); ++j) f.values[j] += g.values[j];
  return f;
}
inline RadialField& operator-=(RadialField& f, const RadialField& g) {
  check_same_grid(f, g);
  for (int j = 0; j < f.n(); ++j) f.values[j] -= g.values[j];
  return f;
}
inline RadialField& operator*=(RadialField& f, double a) {
  for (double& v : f.values) v *= a;
  return f;
}
inline RadialField operator+(RadialField f, const RadialField& g) { return f += g; }
inline RadialField operator-(RadialField f, const RadialField& g) { return f -= g; }
inline RadialField operator*(double a, RadialField f) { return f *= a; }

// f += a*g
inline void axpy(RadialField& f, double a, const RadialField& g) {
  check_same_grid(f, g);
  for (int j = 0; j < f.n(); ++j) f.values[j] += a * g.values[j];
}

// ---- quadrature ------------------------------------------------------------

// L^2(R^3) pairing <f|g> = 4 pi int_0^rmax (r f)(r g) dr, composite trapezoid
// on w-products including the zero origin sample and the half-weight boundary.
inline double inner(const RadialField& f, const RadialField& g) {
  check_same_grid(f, g);
  const int n = f.n();
  double s = 0.0;
  for (int j = 0; j < n - 1; ++j) s += f.w(j) * g.w(j);
  s += 0.5 * f.w(n - 1) * g.w(n - 1);
  return four_pi * f.grid.h * s;
}

inline double l2_sq(const RadialField& f) { return inner(f, f); }

// ||grad u||^2 as the quadratic form of the discrete Laplacian:
// 4 pi / h * sum_{i=0}^{n-1} (w_{i+1} - w_i)^2 with w_0 = w_n = 0.
// Exactly equals <-Delta f | f> for fields vanishing at the boundary node,
// which keeps the energy identities sharp at the discrete level.
inline double grad_sq(const RadialField& f) {
  const int n = f.n();
  double s = 0.0;
  double prev = 0.0;
  for (int j = 0; j < n - 1; ++j) {
    const double wj = f.w(j);
    const double d = wj - prev;
    s += d * d;
    prev = wj;
  }
  s += prev * prev; // step to the Dirichlet value w_n = 0
  return four_pi / f.grid.h * s;
}

inline double h1_sq(const RadialField& f) { return grad_sq(f) + l2_sq(f); }

// ||u||_{L^4}^4 = 4 pi int w^4 / r^2 dr (integrand vanishes at the origin).
inline double l4_int(const RadialField& f) {
  const int n = f.n();
  double s = 0.0;
  for (int j = 0; j < n - 1; ++j) {
    const double w = f.w(j);
    const double r = f.grid.r(j);
    s += (w * w) * (w * w) / (r * r);
  }
  {
    const double w = f.w(n - 1);
    const double r = f.grid.r(n - 1);
    s += 0.5 * (w * w) * (w * w) / (r * r);
  }
  return four_pi * f.grid.h * s;
}

inline double sup_norm(const RadialField& f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, std::abs(v));
  return m;
}

// Largest radius where |w| exceeds tol_rel * max|w|; 0 for the zero field.
inline double support_radius(const RadialField& f, double tol_rel = 1e-6) {
  double wmax = 0.0;
  for (int j = 0; j < f.n(); ++j) wmax = std::max(wmax, std::abs(f.w(j)));
  if (wmax == 0.0) return 0.0;
  const double cut = tol_rel * wmax;
  for (int j = f.n() - 1; j >= 0; --j)
    if (std::abs(f.w(j)) > cut) return f.grid.r(j);
  return 0.0;
}

// ---- discrete Laplacian ----------------------------------------------------

// (Delta f)_i = (w_{i-1} - 2 w_i + w_{i+1}) / (h^2 r_i), w_0 = w_n = 0.
// The boundary node of the result is set to zero (Dirichlet).
inline RadialField laplacian(const RadialField& f) {
  const int n = f.n();
  const double h2 = f.grid.h * f.grid.h;
  RadialField out(f.grid);
  double wm = 0.0, w0 = f.w(0);
  for (int j = 0; j < n - 1; ++j) {
    const double wp = (j + 1 < n - 1) ? f.w(j + 1) : 0.0;
    out.values[j] = (wm - 2.0 * w0 + wp) / (h2 * f.grid.r(j));
    wm = w0;
    w0 = wp;
  }
  out.values[n - 1] = 0.0;
  return out;
}

// ---- sine transform (DST-I) -------------------------------------------------

// Interior degrees of freedom w_1..w_{n-1} expand in sin(pi m i / n).
// FFTW's RODFT00 of logical size n-1 computes the unnormalized DST-I; applying
// it twice multiplies by 2n. Plans are cached per size; plan creation is
// serialized, execution on distinct arrays is thread-safe.
namespace detail {

class DstPlan {
 public:
  explicit DstPlan(int len) : len_(len) {
    std::vector<double> a(len), b(len);
    plan_ = fftw_plan_r2r_1d(len, a.data(), b.data(), FFTW_RODFT00,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan_) throw std::runtime_error("fftw plan creation failed");
  }
  ~DstPlan() { fftw_destroy_plan(plan_); }
  DstPlan(const DstPlan&) = delete;
  DstPlan& operator=(const DstPlan&) = delete;

  void execute(double* in, double* out) const { fftw_execute_r2r(plan_, in, out); }
  int len() const { return len_; }

 private:
  fftw_plan plan_;
  int len_;
};

inline const DstPlan& dst_plan(int len) {
  static std::mutex mu;
  static std::map<int, DstPlan*> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(len);
  if (it == cache.end()) it = cache.emplace(len, new DstPlan(len)).first;
  return *it->second;
}

inline void dst1(std::vector<double>& in, std::vector<double>& out) {
  const DstPlan& p = dst_plan(static_cast<int>(in.size()));
  out.resize(in.size());
  p.execute(in.data(), out.data());
}

} // namespace detail

// Discrete -Delta eigenvalue of sine mode m on the grid.
inline double dst_mode_eigenvalue(const RadialGrid& g, int m) {
  return (2.0 - 2.0 * std::cos(3.14159265358979323846 * m / g.n)) / (g.h * g.h);
}

// ---- states ----------------------------------------------------------------

// A point of the energy space: (u, udot) at time t.
struct State {
  RadialField u;
  RadialField udot;
  double t = 0.0;

  State() = default;
  State(RadialField u_, RadialField udot_, double t_ = 0.0)
      : u(std::move(u_)), udot(std::move(udot_)), t(t_) {
    check_same_grid(u, udot);
  }
  const RadialGrid& grid() const { return u.grid; }
};

inline double support_radius(const State& s, double tol_rel = 1e-6) {
  return std::max(support_radius(s.u, tol_rel), support_radius(s.udot, tol_rel));
}

// Exact flow of udot' = Delta u - u over time dt (either sign): every sine
// mode rotates at omega_m = sqrt(1 + kappa_m^2),
//   (u, udot) -> (cos(om dt) u + sin(om dt)/om udot,
//                 -om sin(om dt) u + cos(om dt) udot).
inline State free_propagate(const State& s, double dt) {
  const RadialGrid& g = s.grid();
  const int N = g.n - 1;
  std::vector<double> wu(N), wv(N), hu(N), hv(N);
  for (int j = 0; j < N; ++j) {
    wu[j] = s.u.w(j);
    wv[j] = s.udot.w(j);
  }
  detail::dst1(wu, hu);
  detail::dst1(wv, hv);
  for (int m = 1; m <= N; ++m) {
    const double om = std::sqrt(1.0 + dst_mode_eigenvalue(g, m));
    const double c = std::cos(om * dt), sn = std::sin(om * dt);
    const double a = hu[m - 1], b = hv[m - 1];
    hu[m - 1] = c * a + sn / om * b;
    hv[m - 1] = -om * sn * a + c * b;
  }
  detail::dst1(hu, wu);
  detail::dst1(hv, wv);
  State out{RadialField(g), RadialField(g), s.t + dt};
  const double scale = 1.0 / (2.0 * g.n);
  for (int j = 0; j < N; ++j) {
    const double r = g.r(j);
    out.u.values[j] = scale * wu[j] / r;
    out.udot.values[j] = scale * wv[j] / r;
  }
  out.u.values[N] = 0.0;
  out.udot.values[N] = 0.0;
  return out;
}

// Discrete free energy sum_m (om_m^2 |u_m|^2 + |udot_m|^2), conserved exactly
// by free_propagate; exposed for conservation tests and scatter diagnostics.
inline double free_energy_quadratic(const State& s) {
  const RadialGrid& g = s.grid();
  const int N = g.n - 1;
  std::vector<double> wu(N), wv(N), hu(N), hv(N);
  for (int j = 0; j < N; ++j) {
    wu[j] = s.u.w(j);
    wv[j] = s.udot.w(j);
  }
  detail::dst1(wu, hu);
  detail::dst1(wv, hv);
  double e = 0.0;
  for (int m = 1; m <= N; ++m) {
    const double om2 = 1.0 + dst_mode_eigenvalue(g, m);
    e += om2 * hu[m - 1] * hu[m - 1] + hv[m - 1] * hv[m - 1];
  }
  return e / (2.0 * g.n);
}

// (-Delta)^{-1} f by sine-spectral division, the exact inverse of the
// discrete Dirichlet Laplacian.
inline RadialField inverse_laplacian(const RadialField& f) {
  const RadialGrid& g = f.grid;
  const int N = g.n - 1;
  std::vector<double> w(N), hw(N);
  for (int j = 0; j < N; ++j) w[j] = f.w(j);
  detail::dst1(w, hw);
  for (int m = 1; m <= N; ++m) hw[m - 1] /= dst_mode_eigenvalue(g, m);
  detail::dst1(hw, w);
  RadialField out(g);
  const double scale = 1.0 / (2.0 * g.n);
  for (int j = 0; j < N; ++j) out.values[j] = scale * w[j] / g.r(j);
  out.values[N] = 0.0;
  return out;
}

// A pure sine mode as a field: u = sin(pi m r / r_max) / r.
inline RadialField sine_mode(const RadialGrid& g, int m, double amplitude = 1.0) {
  RadialField f(g);
  for (int j = 0; j < g.n - 1; ++j)
    f.values[j] = amplitude * std::sin(3.14159265358979323846 * m * (j + 1) / g.n) / g.r(j);
  f.values[g.n - 1] = 0.0;
  return f;
}

} // namespace nlkg
