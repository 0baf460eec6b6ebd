#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "g2flow/exterior.hpp"

using namespace g2flow::exterior;

namespace {

std::uint8_t mask_axes(std::initializer_list<int> axes) {
  std::uint8_t m = 0;
  for (int a : axes) m |= static_cast<std::uint8_t>(1u << (a - 1));
  return m;
}

void add_comp(AltForm& f, std::initializer_list<int> axes, double v) {
  f.c[index_of_mask(mask_axes(axes))] += v;
}

double comp(const AltForm& f, std::initializer_list<int> axes) {
  return f.c[index_of_mask(mask_axes(axes))];
}

// The standard associative 3-form and its Euclidean dual, frozen by hand.
AltForm standard_phi() {
  AltForm f = make_form(3);
  add_comp(f, {1, 2, 3}, 1);
  add_comp(f, {1, 4, 5}, 1);
  add_comp(f, {1, 6, 7}, 1);
  add_comp(f, {2, 4, 6}, 1);
  add_comp(f, {2, 5, 7}, -1);
  add_comp(f, {3, 4, 7}, -1);
  add_comp(f, {3, 5, 6}, -1);
  return f;
}

AltForm standard_psi() {
  AltForm f = make_form(4);
  add_comp(f, {4, 5, 6, 7}, 1);
  add_comp(f, {2, 3, 6, 7}, 1);
  add_comp(f, {2, 3, 4, 5}, 1);
  add_comp(f, {1, 3, 5, 7}, 1);
  add_comp(f, {1, 3, 4, 6}, -1);
  add_comp(f, {1, 2, 5, 6}, -1);
  add_comp(f, {1, 2, 4, 7}, -1);
  return f;
}

AltForm random_form(int degree, std::mt19937_64& rng, double span = 1.0) {
  std::uniform_real_distribution<double> u(-span, span);
  AltForm f = make_form(degree);
  for (int i = 0; i < f.size(); ++i) f.c[i] = u(rng);
  return f;
}

Metric random_metric(std::mt19937_64& rng, double span = 0.3) {
  std::uniform_real_distribution<double> u(-span, span);
  double a[49], g[49];
  for (int i = 0; i < 49; ++i) a[i] = u(rng);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = (i == j) ? 1.0 : 0.0;
      for (int k = 0; k < 7; ++k) s += a[k * 7 + i] * a[k * 7 + j];
      g[i * 7 + j] = s;
    }
  return metric_from_matrix(g);
}

double max_abs_diff(const AltForm& a, const AltForm& b) {
  REQUIRE(a.degree == b.degree);
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.c[i] - b.c[i]));
  return m;
}

// Brute-force k x k determinant by Laplace expansion, for compound oracles.
double det_ref(const double* m, const int* rows, const int* cols, int k) {
  if (k == 0) return 1.0;
  if (k == 1) return m[rows[0] * 7 + cols[0]];
  double acc = 0.0;
  int sub_rows[7];
  for (int i = 1; i < k; ++i) sub_rows[i - 1] = rows[i];
  for (int j = 0; j < k; ++j) {
    int sub_cols[7];
    int n = 0;
    for (int t = 0; t < k; ++t)
      if (t != j) sub_cols[n++] = cols[t];
    const double sign = (j & 1) ? -1.0 : 1.0;
    acc += sign * m[rows[0] * 7 + cols[j]] * det_ref(m, sub_rows, sub_cols, k - 1);
  }
  return acc;
}

}  // namespace

TEST_CASE("component ordering is lexicographic by axis tuple") {
  CHECK(comp_count(2) == 21);
  CHECK(comp_count(3) == 35);
  CHECK(mask_of(2, 0) == mask_axes({1, 2}));
  CHECK(mask_of(2, 1) == mask_axes({1, 3}));
  CHECK(mask_of(2, 5) == mask_axes({1, 7}));
  CHECK(mask_of(2, 6) == mask_axes({2, 3}));
  CHECK(mask_of(3, 0) == mask_axes({1, 2, 3}));
  CHECK(mask_of(3, 34) == mask_axes({5, 6, 7}));
  for (int k = 0; k <= 7; ++k)
    for (int i = 0; i < comp_count(k); ++i)
      CHECK(index_of_mask(mask_of(k, i)) == i);
}

TEST_CASE("wedge signs and algebra laws") {
  CHECK(wedge_sign(mask_axes({1}), mask_axes({2})) == 1);
  CHECK(wedge_sign(mask_axes({2}), mask_axes({1})) == -1);
  CHECK(wedge_sign(mask_axes({1, 2}), mask_axes({1})) == 0);
  CHECK(comp_sign(mask_axes({1, 2, 3})) == 1);  // e123 ^ e4567 = +e1..7

  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = random_form(2, rng), b = random_form(1, rng),
               c = random_form(3, rng);
    // associativity
    CHECK(max_abs_diff(wedge(wedge(a, b), c), wedge(a, wedge(b, c))) < 1e-14);
    // graded commutativity: deg 2 * deg 3
    AltForm ab = wedge(a, c), ba = wedge(c, a);
    CHECK(max_abs_diff(ab, ba) < 1e-14);  // (-1)^{2*3} = +1
    AltForm bb = wedge(b, c), cb = wedge(c, b);
    for (int i = 0; i < bb.size(); ++i)
      CHECK(bb.c[i] == doctest::Approx(-cb.c[i]).epsilon(1e-14));
  }

  CHECK_THROWS_AS(wedge(random_form(4, rng), random_form(4, rng)),
                  std::invalid_argument);
}

TEST_CASE("interior product: signs and Leibniz rule") {
  AltForm f = make_form(3);
  add_comp(f, {1, 2, 3}, 1.0);
  double e1[7] = {1, 0, 0, 0, 0, 0, 0}, e2[7] = {0, 1, 0, 0, 0, 0, 0};
  AltForm i1 = interior(e1, f);
  CHECK(comp(i1, {2, 3}) == doctest::Approx(1.0));
  AltForm i2 = interior(e2, f);
  CHECK(comp(i2, {1, 3}) == doctest::Approx(-1.0));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int rep = 0; rep < 20; ++rep) {
    double v[7];
    for (auto& x : v) x = u(rng);
    const auto a = random_form(2, rng), b = random_form(3, rng);
    AltForm lhs = interior(v, wedge(a, b));
    AltForm rhs = wedge(interior(v, a), b);
    AltForm t = wedge(a, interior(v, b));  // (-1)^2 = +1
    for (int i = 0; i < rhs.size(); ++i) rhs.c[i] += t.c[i];
    CHECK(max_abs_diff(lhs, rhs) < 1e-14);
  }

  AltForm zero_form = make_form(0);
  zero_form.c[0] = 1.0;
  double v[7] = {1, 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(interior(v, zero_form), std::invalid_argument);
}

TEST_CASE("Euclidean Hodge star on basis forms") {
  const Metric m = euclidean_metric();
  AltForm one = make_form(0);
  one.c[0] = 1.0;
  AltForm vol = hodge_star(one, m);
  CHECK(vol.degree == 7);
  CHECK(top_coefficient(vol) == doctest::Approx(1.0));

  AltForm e1 = make_form(1);
  add_comp(e1, {1}, 1.0);
  AltForm s = hodge_star(e1, m);
  CHECK(comp(s, {2, 3, 4, 5, 6, 7}) == doctest::Approx(1.0));
}

TEST_CASE("frozen duals of the standard associative form") {
  const Metric m = euclidean_metric();
  const AltForm phi = standard_phi(), psi = standard_psi();

  CHECK(max_abs_diff(hodge_star(phi, m), psi) < 1e-14);
  CHECK(max_abs_diff(hodge_star(psi, m), phi) < 1e-14);
  CHECK(form_inner(phi, phi, m) == doctest::Approx(7.0));
  CHECK(form_inner(psi, psi, m) == doctest::Approx(7.0));

  // e_1 .| phi = e23 + e45 + e67
  double e1[7] = {1, 0, 0, 0, 0, 0, 0};
  AltForm u1 = interior(e1, phi);
  CHECK(comp(u1, {2, 3}) == doctest::Approx(1.0));
  CHECK(comp(u1, {4, 5}) == doctest::Approx(1.0));
  CHECK(comp(u1, {6, 7}) == doctest::Approx(1.0));
  CHECK(form_norm2(u1, m) == doctest::Approx(3.0));

  // *(e^1 ^ phi) = -(e_1 .| psi) and *(e^1 ^ psi) = e_1 .| phi
  AltForm e1f = make_form(1);
  add_comp(e1f, {1}, 1.0);
  AltForm lhs = hodge_star(wedge(e1f, phi), m);
  AltForm rhs = interior(e1, psi);
  for (int i = 0; i < rhs.size(); ++i) rhs.c[i] = -rhs.c[i];
  CHECK(max_abs_diff(lhs, rhs) < 1e-14);
  CHECK(max_abs_diff(hodge_star(wedge(e1f, psi), m), u1) < 1e-14);
}

TEST_CASE("star involution and scaling under general metrics") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Metric m = random_metric(rng);
    for (int k = 0; k <= 7; ++k) {
      const AltForm a = random_form(k, rng);
      // ** = (+1) in dimension 7 for every degree
      CHECK(max_abs_diff(hodge_star(hodge_star(a, m), m), a) < 1e-10);
    }
    // scaling: g -> lambda^2 g gives *_k -> lambda^{7-2k} *_k
    const double lam = 1.7;
    double gs[49];
    for (int i = 0; i < 49; ++i) gs[i] = lam * lam * m.g[i];
    const Metric ms = metric_from_matrix(gs);
    for (int k = 0; k <= 7; ++k) {
      const AltForm a = random_form(k, rng);
      const AltForm s0 = hodge_star(a, m), s1 = hodge_star(a, ms);
      const double factor = std::pow(lam, 7 - 2 * k);
      for (int i = 0; i < s0.size(); ++i)
        CHECK(s1.c[i] == doctest::Approx(factor * s0.c[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("inner product, a ^ *b pairing, and the interior/wedge adjoint") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const Metric m = random_metric(rng);
    for (int k = 1; k <= 6; ++k) {
      const AltForm a = random_form(k, rng), b = random_form(k, rng);
      // <a,b> vol = a ^ *b
      const double pair = top_coefficient(wedge(a, hodge_star(b, m)));
      CHECK(pair ==
            doctest::Approx(form_inner(a, b, m) * m.vol_scale).epsilon(1e-10));
      // symmetry and positivity
      CHECK(form_inner(a, b, m) == doctest::Approx(form_inner(b, a, m)));
      CHECK(form_norm2(a, m) > 0.0);

      // <v .| a, c> = <a, v-flat ^ c> with c of degree k-1
      std::uniform_real_distribution<double> u(-1, 1);
      double v[7], vf[7];
      for (auto& x : v) x = u(rng);
      flat(m, v, vf);
      const AltForm c = random_form(k - 1, rng);
      AltForm vflat = make_form(1);
      for (int i = 0; i < 7; ++i) vflat.c[i] = vf[i];
      const double lhs = form_inner(interior(v, a), c, m);
      const double rhs = form_inner(a, wedge(vflat, c), m);
      CHECK(std::fabs(lhs - rhs) < 1e-10 * (1.0 + std::fabs(lhs)));
    }
  }
}

TEST_CASE("compound application matches brute-force minors at high degree") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const Metric m = random_metric(rng);
    for (int k = 4; k <= 7; ++k) {
      const AltForm a = random_form(k, rng);
      double fast[kMaxComp], slow[kMaxComp];
      apply_compound(k, m, true, a.c.data(), fast);
      const int n = comp_count(k);
      for (int i = 0; i < n; ++i) {
        int rows[7], cols[7];
        axes_of(mask_of(k, i), rows);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          axes_of(mask_of(k, j), cols);
          acc += det_ref(m.g_inv.data(), rows, cols, k) * a.c[j];
        }
        slow[i] = acc;
      }
      for (int i = 0; i < n; ++i)
        CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("metric_from_matrix validates positive definiteness") {
  double g[49] = {0};
  for (int i = 0; i < 7; ++i) g[i * 7 + i] = 1.0;
  g[0] = -1.0;
  CHECK_THROWS_AS(metric_from_matrix(g), std::invalid_argument);

  std::mt19937_64 rng(6);
  const Metric m = random_metric(rng);
  // g * g_inv = I
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = 0.0;
      for (int k = 0; k < 7; ++k) s += m.g[i * 7 + k] * m.g_inv[k * 7 + j];
      CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
    }
}
