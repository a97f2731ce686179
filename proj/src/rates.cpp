#include "ionprep/rates.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ionprep/linalg.hpp"

namespace ionprep {

Polarization Polarization::from_weights(double wm, double w0, double wp) {
  if (wm < 0 || w0 < 0 || wp < 0) throw ConfigError("polarisation weights must be >= 0");
  const double s = wm + w0 + wp;
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("polarisation weights must sum to 1");
  Polarization p;
  p.a = {std::sqrt(wm / s), std::sqrt(w0 / s), std::sqrt(wp / s)};
  return p;
}

void Polarization::check() const {
  const double s = std::norm(a[0]) + std::norm(a[1]) + std::norm(a[2]);
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError("polarisation is not normalised");
}

Polarization linear_polarization(double theta) {
  if (theta < -1e-12 || theta > constants::pi / 2 + 1e-12)
    throw ConfigError("polarisation angle must lie in [0, 90] degrees");
  Polarization p;
  const double st = std::sin(theta) / std::sqrt(2.0);
  p.a = {st, std::cos(theta), -st};
  return p;
}

static const DressedState& anchor_lower(const LaserBeam& b, const Registry& reg,
                                        const std::string& level) {
  if (b.anchor.lower_median) {
    const int o = reg.offset(level), n = reg.count(level);
    return reg.state(o + n / 2);
  }
  return reg.state(reg.index(level, b.anchor.lower));
}

double anchor_frequency_hz(const LaserBeam& b, const Registry& reg) {
  const auto& c = reg.coupling(b.transition);
  const auto& lo = anchor_lower(b, reg, c.spec.lower);
  const auto& up = reg.state(reg.index(c.spec.upper, b.anchor.upper));
  return up.frequency_hz() - lo.frequency_hz() + b.detuning_hz;
}

RateMatrix build_rate_matrix(const std::vector<LaserBeam>& beams, const Registry& reg,
                             const GuardThresholds& guard) {
  const int N = reg.size();
  RateMatrix out;
  out.R = Eigen::MatrixXd::Zero(N, N);
  std::map<int, std::string> coupled_by;

  for (const auto& c : reg.couplings()) {
    const double g = c.spec.gamma;
    for (int q = -1; q <= 1; ++q)
      out.R.block(c.lower_offset, c.upper_offset, c.lower_count, c.upper_count) +=
          g * c.d2[q + 1].transpose();
  }

  for (const auto& b : beams) {
    if (b.s < 0) throw ConfigError("beam " + b.name + ": intensity must be >= 0");
    b.pol.check();
    out.beams.push_back(b.name);
    const auto& c = reg.coupling(b.transition);
    const double g = c.spec.gamma, gt = c.spec.gamma_total;
    const double nu = anchor_frequency_hz(b, reg);
    std::set<int> touched;
    for (int q = -1; q <= 1; ++q) {
      const double w = b.pol.weight(q);
      if (w == 0.0) continue;
      const auto& d2 = c.d2[q + 1];
      for (int i = 0; i < c.upper_count; ++i)
        for (int k = 0; k < c.lower_count; ++k) {
          if (d2(i, k) == 0.0) continue;
          const int ui = c.upper_offset + i, lk = c.lower_offset + k;
          const double delta =
              constants::two_pi * (nu - (reg.state(ui).frequency_hz() - reg.state(lk).frequency_hz()));
          const double se = b.s * w * d2(i, k);
          const double x = 2.0 * delta / gt;
          double shape;
          if (b.lineshape == Lineshape::natural)
            shape = 1.0 / (1.0 + x * x);
          else
            shape = 1.0 / (1.0 + se + x * x);
          const double r = 0.5 * g * se * shape;
          out.R(lk, ui) += r;
          out.R(ui, lk) += r;
          if (shape >= guard.lineshape && w * d2(i, k) > guard.strength && b.s > 0) {
            touched.insert(ui);
            touched.insert(lk);
          }
        }
    }
    for (int st : touched) {
      auto it = coupled_by.find(st);
      if (it != coupled_by.end() && it->second != b.name) {
        std::ostringstream os;
        os << "Lambda guard: state " << reg.describe(st) << " is driven by beams '" << it->second
           << "' and '" << b.name << "' in the same step";
        throw LambdaGuardError(os.str());
      }
      coupled_by[st] = b.name;
    }
  }
  for (int j = 0; j < N; ++j) {
    out.R(j, j) = 0.0;
    out.R(j, j) = -out.R.col(j).sum();
  }
  return out;
}

static void check_finite(const Eigen::VectorXd& p, const RateMatrix& R) {
  if (p.allFinite()) return;
  Eigen::Index i, j;
  const double m = R.R.cwiseAbs().maxCoeff(&i, &j);
  std::ostringstream os;
  os << "non-finite occupations; largest rate " << m << " /s at (" << i << ", " << j << ")";
  throw NumericalError(os.str());
}

Eigen::MatrixXd propagator(const RateMatrix& R, double t) {
  if (t < 0) throw ConfigError("negative evolution time");
  if (t == 0) return Eigen::MatrixXd::Identity(R.R.rows(), R.R.cols());
  Eigen::MatrixXd P = stochastic_propagator<double>(R.R, t);
  if (!P.allFinite()) check_finite(Eigen::VectorXd::Constant(1, NAN), R);
  return P;
}

Eigen::VectorXd evolve(const Eigen::VectorXd& p0, const RateMatrix& R, double t) {
  Eigen::VectorXd p = propagator(R, t) * p0;
  check_finite(p, R);
  return p;
}

Eigen::VectorXd evolve_ode(const Eigen::VectorXd& p0, const RateMatrix& R, double t) {
  Eigen::VectorXd p = integrate_linear_ode<double>(R.R, p0, t);
  check_finite(p, R);
  return p;
}

SteadyState steady_state(const RateMatrix& R) {
  const int n = static_cast<int>(R.R.rows());
  // reachability along positive rates j -> i
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int s = 0; s < n; ++s) {
    std::vector<int> stack{s};
    reach[s][s] = 1;
    while (!stack.empty()) {
      int j = stack.back();
      stack.pop_back();
      for (int i = 0; i < n; ++i)
        if (i != j && R.R(i, j) > 0 && !reach[s][i]) {
          reach[s][i] = 1;
          stack.push_back(i);
        }
    }
  }
  SteadyState out;
  std::vector<char> assigned(n, 0);
  for (int s = 0; s < n; ++s) {
    if (assigned[s]) continue;
    std::vector<int> comp;
    for (int i = 0; i < n; ++i)
      if (reach[s][i] && reach[i][s]) comp.push_back(i);
    bool closed = true;
    for (int i = 0; i < n && closed; ++i)
      if (reach[s][i] && !reach[i][s]) closed = false;
    for (int i : comp) assigned[i] = 1;
    if (!closed) {
      out.transient.insert(out.transient.end(), comp.begin(), comp.end());
      continue;
    }
    const int m = static_cast<int>(comp.size());
    Eigen::MatrixXd A(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) A(a, b) = R.R(comp[a], comp[b]);
    A.row(m - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs(m - 1) = 1.0;
    Eigen::VectorXd x = A.fullPivLu().solve(rhs);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < m; ++a) full(comp[a]) = std::max(0.0, x(a));
    full /= full.sum();
    out.vectors.push_back(full);
    out.components.push_back(comp);
  }
  std::sort(out.transient.begin(), out.transient.end());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R.R);
  const auto& sv = svd.singularValues();
  const int k = static_cast<int>(out.vectors.size());
  if (n - k - 1 >= 0) {
    const double kept = sv(n - k - 1);
    const double dropped = k > 0 ? sv(n - k) : 0.0;
    out.singular_gap = dropped > 0 ? kept / dropped : INFINITY;
  }
  return out;
}

bool valid_occupations(const Eigen::VectorXd& p, double tol) {
  if (!p.allFinite()) return false;
  if (std::abs(p.sum() - 1.0) > tol) return false;
  return p.minCoeff() >= -tol && p.maxCoeff() <= 1.0 + tol;
}

}  // namespace ionprep
