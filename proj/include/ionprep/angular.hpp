#pragma once

#include <array>
#include <cmath>
#include <cstdlib>

namespace ionprep {

namespace detail {
template <typename Scalar>
Scalar factorial(int n) {
  static const auto table = [] {
    std::array<long double, 171> t{};
    t[0] = 1.0L;
    for (int i = 1; i < 171; ++i) t[i] = t[i - 1] * static_cast<long double>(i);
    return t;
  }();
  return static_cast<Scalar>(table[n]);
}
}  // namespace detail

// Wigner 3-j symbol by the Racah formula. Arguments are twice the quantum numbers.
template <typename Scalar = double>
Scalar wigner_3j_twice(int j1, int j2, int j3, int m1, int m2, int m3) {
  if (m1 + m2 + m3 != 0) return Scalar(0);
  if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(m3) > j3) return Scalar(0);
  if (((j1 + m1) & 1) || ((j2 + m2) & 1) || ((j3 + m3) & 1)) return Scalar(0);
  if (j3 > j1 + j2 || j3 < std::abs(j1 - j2) || ((j1 + j2 + j3) & 1)) return Scalar(0);

  using detail::factorial;
  const int a = (j1 + j2 - j3) / 2, b = (j1 - j2 + j3) / 2, c = (-j1 + j2 + j3) / 2;
  const int d = (j1 + j2 + j3) / 2 + 1;
  const Scalar tri = factorial<Scalar>(a) * factorial<Scalar>(b) * factorial<Scalar>(c) /
                     factorial<Scalar>(d);
  const Scalar pre = factorial<Scalar>((j1 + m1) / 2) * factorial<Scalar>((j1 - m1) / 2) *
                     factorial<Scalar>((j2 + m2) / 2) * factorial<Scalar>((j2 - m2) / 2) *
                     factorial<Scalar>((j3 + m3) / 2) * factorial<Scalar>((j3 - m3) / 2);

  const int t1 = (j3 - j2 + m1) / 2, t2 = (j3 - j1 - m2) / 2;
  const int t3 = (j1 + j2 - j3) / 2, t4 = (j1 - m1) / 2, t5 = (j2 + m2) / 2;
  const int kmin = std::max({0, -t1, -t2});
  const int kmax = std::min({t3, t4, t5});
  Scalar sum(0);
  for (int k = kmin; k <= kmax; ++k) {
    const Scalar den = factorial<Scalar>(k) * factorial<Scalar>(t1 + k) *
                       factorial<Scalar>(t2 + k) * factorial<Scalar>(t3 - k) *
                       factorial<Scalar>(t4 - k) * factorial<Scalar>(t5 - k);
    sum += ((k & 1) ? Scalar(-1) : Scalar(1)) / den;
  }
  const int phase = (j1 - j2 - m3) / 2;
  using std::sqrt;
  return ((phase & 1) ? Scalar(-1) : Scalar(1)) * sqrt(tri) * sqrt(pre) * sum;
}

template <typename Scalar = double>
Scalar wigner_3j(double j1, double j2, double j3, double m1, double m2, double m3) {
  auto tw = [](double x) { return static_cast<int>(std::lround(2.0 * x)); };
  return wigner_3j_twice<Scalar>(tw(j1), tw(j2), tw(j3), tw(m1), tw(m2), tw(m3));
}

// (-1)^(x/2) for even x
inline double parity_sign_twice(int x) { return ((x / 2) & 1) ? -1.0 : 1.0; }

}  // namespace ionprep
