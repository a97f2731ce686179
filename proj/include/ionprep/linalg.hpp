#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>

namespace ionprep {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// exp(G t) for a generator with zero column sums (Pade scaling and squaring).
// Roundoff negatives are clipped and columns renormalised.
template <typename Scalar>
Mat<Scalar> stochastic_propagator(const Mat<Scalar>& G, Scalar t) {
  Mat<Scalar> P = (G * t).exp();
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      if (P(i, j) < Scalar(0)) P(i, j) = Scalar(0);
    const Scalar s = P.col(j).sum();
    if (s > Scalar(0)) P.col(j) /= s;
  }
  return P;
}

struct OdeOptions {
  double rtol = 1e-11;
  double atol = 1e-14;
  double initial_step = 0.0;  // 0 picks one from the generator norm
  long max_steps = 50000000;
};

// Dormand-Prince 5(4) integration of dp/dt = G p over [0, t].
template <typename Scalar>
Vec<Scalar> integrate_linear_ode(const Mat<Scalar>& G, const Vec<Scalar>& p0, Scalar t,
                                 const OdeOptions& o = {}) {
  using std::abs;
  using std::max;
  using std::min;
  using std::pow;
  if (t <= Scalar(0)) return p0;
  const Scalar a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45, a42 = -56.0 / 15,
               a43 = 32.0 / 9, a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
               a53 = 64448.0 / 6561, a54 = -212.0 / 729, a61 = 9017.0 / 3168,
               a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
               a65 = -5103.0 / 18656, b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
               b5 = -2187.0 / 6784, b6 = 11.0 / 84, e1 = 71.0 / 57600, e3 = -71.0 / 16695,
               e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  Vec<Scalar> p = p0;
  Scalar h = o.initial_step > 0 ? Scalar(o.initial_step)
                                : Scalar(0.01) / max(Scalar(1e-300), G.cwiseAbs().colwise().sum().maxCoeff());
  h = min(h, t);
  Scalar time(0);
  Vec<Scalar> k1 = G * p;
  long steps = 0;
  while (time < t) {
    if (++steps > o.max_steps) throw std::runtime_error("ODE step limit exceeded");
    if (time + h > t) h = t - time;
    Vec<Scalar> k2 = G * (p + h * a21 * k1);
    Vec<Scalar> k3 = G * (p + h * (a31 * k1 + a32 * k2));
    Vec<Scalar> k4 = G * (p + h * (a41 * k1 + a42 * k2 + a43 * k3));
    Vec<Scalar> k5 = G * (p + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    Vec<Scalar> k6 = G * (p + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vec<Scalar> pn = p + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Vec<Scalar> k7 = G * pn;
    Vec<Scalar> err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    Scalar en(0);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const Scalar sc = Scalar(o.atol) + Scalar(o.rtol) * max(abs(p(i)), abs(pn(i)));
      en = max(en, abs(err(i)) / sc);
    }
    if (en <= Scalar(1)) {
      time += h;
      p = pn;
      k1 = k7;
    }
    const Scalar fac = en == Scalar(0) ? Scalar(5) : min(Scalar(5), max(Scalar(0.2), Scalar(0.9) * pow(en, Scalar(-0.2))));
    h *= fac;
  }
  return p;
}

// Fixed point of a column-stochastic matrix: (T - 1) x = 0, sum x = 1.
// Returns false when the fixed point is not unique.
template <typename Scalar>
bool stochastic_fixed_point(const Mat<Scalar>& T, Vec<Scalar>& x) {
  const Eigen::Index n = T.rows();
  Mat<Scalar> A = T - Mat<Scalar>::Identity(n, n);
  A.row(n - 1).setOnes();
  Vec<Scalar> b = Vec<Scalar>::Zero(n);
  b(n - 1) = Scalar(1);
  Eigen::FullPivLU<Mat<Scalar>> lu(A);
  lu.setThreshold(Scalar(1e-13));
  if (!lu.isInvertible()) return false;
  x = lu.solve(b);
  return true;
}

}  // namespace ionprep
