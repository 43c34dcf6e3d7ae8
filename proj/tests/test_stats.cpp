#include <cmath>

#include "doctest.h"
#include "stats.hpp"

using namespace confbal;

TEST_CASE("normal tail values") {
  CHECK(normal_sf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(normal_sf(1.959963985) == doctest::Approx(0.025).epsilon(1e-6));
  CHECK(normal_sf(-1.0) + normal_sf(1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("chi-squared tail matches reference values") {
  // df = 1: P(X > x) = erfc(sqrt(x/2)).
  CHECK(chi_squared_sf(20.0, 1.0) ==
        doctest::Approx(std::erfc(std::sqrt(10.0))).epsilon(1e-10));
  CHECK(chi_squared_sf(3.841458821, 1.0) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_squared_sf(0.0, 1.0) == 1.0);
  // df = 4 at its mean: known value exp(-2)(1 + 2) = 0.406.
  CHECK(chi_squared_sf(4.0, 4.0) ==
        doctest::Approx(std::exp(-2.0) * 3.0).epsilon(1e-10));
}

TEST_CASE("student t two-sided p-values") {
  CHECK(student_t_two_sided_p(0.0, 10.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Classic table entries.
  CHECK(student_t_two_sided_p(2.228138852, 10.0) ==
        doctest::Approx(0.05).epsilon(1e-6));
  CHECK(student_t_two_sided_p(-2.228138852, 10.0) ==
        doctest::Approx(0.05).epsilon(1e-6));
  CHECK(student_t_two_sided_p(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("incomplete beta basic identities") {
  CHECK(incomplete_beta(1.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(incomplete_beta(2.0, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
}

TEST_CASE("upper incomplete gamma limits") {
  CHECK(upper_incomplete_gamma(1.0, 0.5) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(upper_incomplete_gamma(2.5, 0.0) == 1.0);
}
