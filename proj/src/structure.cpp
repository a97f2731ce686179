#include "ionprep/structure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ionprep/angular.hpp"

namespace ionprep {

StateLabel StateLabel::of(double F, double M) {
  return {static_cast<int>(std::lround(2 * F)), static_cast<int>(std::lround(2 * M))};
}

static std::string half_str(int twice) {
  if (twice % 2 == 0) return std::to_string(twice / 2);
  return std::to_string(twice) + "/2";
}

std::string StateLabel::str() const { return half_str(twoF) + "," + half_str(twoM); }

static double parse_half(const std::string& s, const std::string& where) {
  auto slash = s.find('/');
  if (slash != std::string::npos)
    return parse_number(s.substr(0, slash), where) / parse_number(s.substr(slash + 1), where);
  return parse_number(s, where);
}

StateLabel parse_label(const std::string& text) {
  auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("unknown state '" + text + "': expected F,M");
  double F = parse_half(parts[0], "state F"), M = parse_half(parts[1], "state M");
  auto l = StateLabel::of(F, M);
  if (std::abs(2 * F - l.twoF) > 1e-9 || std::abs(2 * M - l.twoM) > 1e-9 || l.twoF < 0 ||
      std::abs(l.twoM) > l.twoF || ((l.twoF - l.twoM) & 1))
    throw ConfigError("unknown state '" + text + "'");
  return l;
}

namespace {

// Spin operators with m descending from +j.
struct SpinOps {
  Eigen::MatrixXd z, plus, minus;
};

SpinOps spin_ops(int twoj) {
  const int d = twoj + 1;
  const double j = 0.5 * twoj;
  SpinOps o{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d)};
  for (int i = 0; i < d; ++i) o.z(i, i) = j - i;
  for (int i = 1; i < d; ++i) {
    const double m = j - i;
    o.plus(i - 1, i) = std::sqrt(j * (j + 1) - m * (m + 1));
  }
  o.minus = o.plus.transpose();
  return o;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

Eigen::MatrixXd i_dot_j(int twoI, int twoJ) {
  auto I = spin_ops(twoI), J = spin_ops(twoJ);
  return kron(I.z, J.z) + 0.5 * (kron(I.plus, J.minus) + kron(I.minus, J.plus));
}

Eigen::MatrixXd f_squared(int twoI, int twoJ) {
  const double I = 0.5 * twoI, J = 0.5 * twoJ;
  const int d = (twoI + 1) * (twoJ + 1);
  return (I * (I + 1) + J * (J + 1)) * Eigen::MatrixXd::Identity(d, d) + 2.0 * i_dot_j(twoI, twoJ);
}

struct Block {
  int twoM = 0;
  std::vector<int> idx;
  std::vector<StateLabel> labels;
  Eigen::MatrixXd vecs;    // block dim x block dim, columns follow labels
  Eigen::VectorXd energy;  // Hz
};

std::vector<Block> make_blocks(const ProductBasis& b) {
  std::map<int, Block> m;
  for (int k = 0; k < b.dim(); ++k) {
    int tm = b.twoMI(k) + b.twoMJ(k);
    m[tm].twoM = tm;
    m[tm].idx.push_back(k);
  }
  std::vector<Block> out;
  for (auto& [tm, blk] : m) out.push_back(std::move(blk));
  return out;
}

Eigen::MatrixXd sub(const Eigen::MatrixXd& h, const std::vector<int>& idx) {
  const int n = static_cast<int>(idx.size());
  Eigen::MatrixXd s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = h(idx[i], idx[j]);
  return s;
}

void check_separation(const Eigen::VectorXd& w, const TrackingOptions& opts,
                      const std::string& level, int twoM, double field) {
  for (int i = 1; i < w.size(); ++i)
    if (std::abs(w(i) - w(i - 1)) < opts.degeneracy_tol_hz) {
      std::ostringstream os;
      os << level << ": degenerate eigenvalues in block 2M=" << twoM << " at B=" << field
         << " T; adiabatic labels are ambiguous";
      throw StructureError(os.str());
    }
}

std::vector<Block> zero_field_blocks(const LevelSpec& level, const SpeciesData& sp,
                                     const TrackingOptions& opts) {
  ProductBasis basis{sp.twoI, level.twoJ};
  auto blocks = make_blocks(basis);
  const Eigen::MatrixXd h0 = build_hamiltonian(level, sp, 0.0);
  const Eigen::MatrixXd f2 = f_squared(sp.twoI, level.twoJ);
  for (auto& b : blocks) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub(h0, b.idx));
    check_separation(es.eigenvalues(), opts, level.name, b.twoM, 0.0);
    b.vecs = es.eigenvectors();
    b.energy = es.eigenvalues();
    const Eigen::MatrixXd f2b = sub(f2, b.idx);
    for (int k = 0; k < b.vecs.cols(); ++k) {
      Eigen::Index imax;
      b.vecs.col(k).cwiseAbs().maxCoeff(&imax);
      if (b.vecs(imax, k) < 0) b.vecs.col(k) *= -1.0;
      const double x = b.vecs.col(k).dot(f2b * b.vecs.col(k));
      const double F = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * x));
      StateLabel l{static_cast<int>(std::lround(2 * F)), b.twoM};
      if (std::abs(2 * F - l.twoF) > 1e-6)
        throw StructureError(level.name + ": zero-field state without sharp F");
      for (const auto& prev : b.labels)
        if (prev == l) throw StructureError(level.name + ": repeated zero-field label");
      b.labels.push_back(l);
    }
  }
  return blocks;
}

void track_blocks(std::vector<Block>& blocks, const LevelSpec& level, const SpeciesData& sp,
                  double from, double to, const TrackingOptions& opts) {
  if (from == to) return;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(to - from) / opts.max_step_t - 1e-9)));
  for (int s = 1; s <= steps; ++s) {
    const double B = from + (to - from) * static_cast<double>(s) / steps;
    const Eigen::MatrixXd h = build_hamiltonian(level, sp, B);
    for (auto& b : blocks) {
      const int n = static_cast<int>(b.idx.size());
      if (n == 1) {
        b.energy(0) = h(b.idx[0], b.idx[0]);
        continue;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub(h, b.idx));
      check_separation(es.eigenvalues(), opts, level.name, b.twoM, B);
      const Eigen::MatrixXd ov = b.vecs.transpose() * es.eigenvectors();
      std::vector<int> perm(n);
      std::vector<bool> used(n, false);
      for (int i = 0; i < n; ++i) {
        Eigen::Index j;
        ov.row(i).cwiseAbs().maxCoeff(&j);
        if (used[j]) {
          std::ostringstream os;
          os << level.name << ": label assignment failed in block 2M=" << b.twoM << " at B=" << B
             << " T";
          throw StructureError(os.str());
        }
        used[j] = true;
        perm[i] = static_cast<int>(j);
      }
      Eigen::MatrixXd v(n, n);
      Eigen::VectorXd e(n);
      for (int i = 0; i < n; ++i) {
        v.col(i) = es.eigenvectors().col(perm[i]);
        if (ov(i, perm[i]) < 0) v.col(i) *= -1.0;
        e(i) = es.eigenvalues()(perm[i]);
      }
      b.vecs = v;
      b.energy = e;
    }
  }
}

std::vector<DressedState> assemble(const std::vector<Block>& blocks, const LevelSpec& level,
                                   const SpeciesData& sp) {
  ProductBasis basis{sp.twoI, level.twoJ};
  std::vector<DressedState> out;
  for (const auto& b : blocks)
    for (int k = 0; k < static_cast<int>(b.labels.size()); ++k) {
      DressedState d;
      d.level = level.name;
      d.basis = basis;
      d.label = b.labels[k];
      d.omega = constants::two_pi * b.energy(k);
      d.amplitudes = Eigen::VectorXd::Zero(basis.dim());
      for (int i = 0; i < static_cast<int>(b.idx.size()); ++i) d.amplitudes(b.idx[i]) = b.vecs(i, k);
      out.push_back(std::move(d));
    }
  std::stable_sort(out.begin(), out.end(), [](const DressedState& a, const DressedState& b) {
    if (a.omega != b.omega) return a.omega < b.omega;
    return a.label < b.label;
  });
  return out;
}

std::vector<Block> blocks_from_states(const std::vector<DressedState>& states,
                                      const LevelSpec& level, const SpeciesData& sp) {
  ProductBasis basis{sp.twoI, level.twoJ};
  auto blocks = make_blocks(basis);
  for (auto& b : blocks) {
    const int n = static_cast<int>(b.idx.size());
    b.vecs.resize(n, 0);
    b.energy.resize(0);
    std::vector<const DressedState*> mine;
    for (const auto& s : states)
      if (s.label.twoM == b.twoM) mine.push_back(&s);
    if (static_cast<int>(mine.size()) != n)
      throw StructureError(level.name + ": state set does not match the level");
    b.vecs.resize(n, n);
    b.energy.resize(n);
    for (int k = 0; k < n; ++k) {
      b.labels.push_back(mine[k]->label);
      for (int i = 0; i < n; ++i) b.vecs(i, k) = mine[k]->amplitudes(b.idx[i]);
      b.energy(k) = mine[k]->frequency_hz();
    }
  }
  return blocks;
}

}  // namespace

Eigen::MatrixXd build_hamiltonian(const LevelSpec& level, const SpeciesData& sp, double B) {
  const int twoI = sp.twoI, twoJ = level.twoJ;
  if (level.B_hz != 0.0 && (twoJ < 2 || twoI < 2))
    throw StructureError(level.name + ": quadrupole term undefined for J = 1/2 or I < 1");
  const double I = 0.5 * twoI, J = 0.5 * twoJ;
  const int d = (twoI + 1) * (twoJ + 1);
  const Eigen::MatrixXd ij = i_dot_j(twoI, twoJ);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd h = level.A_hz * ij;
  if (level.B_hz != 0.0) {
    const double den = 2.0 * I * (2.0 * I - 1.0) * J * (2.0 * J - 1.0);
    h += level.B_hz * (3.0 * ij * ij + 1.5 * ij - I * (I + 1) * J * (J + 1) * id) / den;
  }
  auto Iops = spin_ops(twoI), Jops = spin_ops(twoJ);
  const Eigen::MatrixXd eI = Eigen::MatrixXd::Identity(twoI + 1, twoI + 1);
  const Eigen::MatrixXd eJ = Eigen::MatrixXd::Identity(twoJ + 1, twoJ + 1);
  h += constants::bohr_magneton_hz_per_t * B * level.g_J * kron(eI, Jops.z);
  h -= constants::nuclear_magneton_hz_per_t * B * sp.g_I * kron(Iops.z, eJ);
  return h;
}

std::vector<DressedState> dressed_states(const LevelSpec& level, const SpeciesData& sp, double B,
                                         const TrackingOptions& opts) {
  auto blocks = zero_field_blocks(level, sp, opts);
  track_blocks(blocks, level, sp, 0.0, B, opts);
  return assemble(blocks, level, sp);
}

std::vector<DressedState> continue_states(const std::vector<DressedState>& from, double field_from,
                                          const LevelSpec& level, const SpeciesData& sp,
                                          double field_to, const TrackingOptions& opts) {
  auto blocks = blocks_from_states(from, level, sp);
  track_blocks(blocks, level, sp, field_from, field_to, opts);
  return assemble(blocks, level, sp);
}

const DressedState& find_state(const std::vector<DressedState>& states, StateLabel label) {
  for (const auto& s : states)
    if (s.label == label) return s;
  throw ConfigError("unknown state " + label.str());
}

double transition_frequency_hz(const LevelSpec& level, const SpeciesData& sp, StateLabel a,
                               StateLabel b, double B, const TrackingOptions& opts) {
  auto st = dressed_states(level, sp, B, opts);
  return find_state(st, b).frequency_hz() - find_state(st, a).frequency_hz();
}

ClockPoint clock_field(const LevelSpec& level, const SpeciesData& sp, StateLabel lower,
                       StateLabel upper, double lo, double hi, const TrackingOptions& opts) {
  ClockPoint cp;
  const double h = 1e-6;
  if (lo < h) lo = h;
  if (!(hi > lo)) {
    cp.message = "empty search range";
    return cp;
  }
  auto nu = [&](const std::vector<DressedState>& st) {
    return find_state(st, upper).frequency_hz() - find_state(st, lower).frequency_hz();
  };
  // derivative at B, continuing from the states at Bref
  auto deriv = [&](const std::vector<DressedState>& ref, double Bref, double B) {
    auto at = continue_states(ref, Bref, level, sp, B, opts);
    auto p = continue_states(at, B, level, sp, B + h, opts);
    auto m = continue_states(at, B, level, sp, B - h, opts);
    return (nu(p) - nu(m)) / (2 * h);
  };
  find_state(dressed_states(level, sp, 0.0, opts), lower);
  find_state(dressed_states(level, sp, 0.0, opts), upper);

  const int n = 64;
  auto cur = dressed_states(level, sp, lo, opts);
  double Bprev = lo, dprev = deriv(cur, lo, lo);
  for (int i = 1; i <= n; ++i) {
    const double B = lo + (hi - lo) * i / n;
    auto next = continue_states(cur, Bprev, level, sp, B, opts);
    const double dnow = deriv(next, B, B);
    if (dprev == 0.0 || (dprev < 0) != (dnow < 0)) {
      double a = Bprev, b = B, fa = dprev;
      for (int it = 0; it < 80 && b - a > 1e-12; ++it) {
        const double c = 0.5 * (a + b);
        const double fc = deriv(cur, Bprev, c);
        if ((fc < 0) == (fa < 0)) {
          a = c;
          fa = fc;
        } else {
          b = c;
        }
      }
      cp.found = true;
      cp.field_t = 0.5 * (a + b);
      cp.frequency_hz = std::abs(nu(continue_states(cur, Bprev, level, sp, cp.field_t, opts)));
      return cp;
    }
    cur = std::move(next);
    Bprev = B;
    dprev = dnow;
  }
  std::ostringstream os;
  os << "no clock point for " << lower.str() << " <-> " << upper.str() << " in [" << lo << ", "
     << hi << "] T";
  cp.message = os.str();
  return cp;
}

Eigen::MatrixXd dipole_operator(const ProductBasis& lo, const ProductBasis& up, int q) {
  if (lo.twoI != up.twoI) throw StructureError("dipole operator between different nuclei");
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(up.dim(), lo.dim());
  const int tJu = up.twoJ, tJl = lo.twoJ;
  for (int a = 0; a < up.dim(); ++a)
    for (int b = 0; b < lo.dim(); ++b) {
      if (up.twoMI(a) != lo.twoMI(b)) continue;
      const int mju = up.twoMJ(a), mjl = lo.twoMJ(b);
      if (mju - mjl != 2 * q) continue;
      D(a, b) = std::sqrt(tJu + 1.0) * parity_sign_twice(tJu - mju) *
                wigner_3j_twice(tJu, 2, tJl, -mju, 2 * q, mjl);
    }
  return D;
}

double electric_dipole_amplitude(const DressedState& lower, const DressedState& upper, int q) {
  if (upper.label.twoM - lower.label.twoM != 2 * q) return 0.0;
  const auto D = dipole_operator(lower.basis, upper.basis, q);
  return upper.amplitudes.dot(D * lower.amplitudes);
}

double magnetic_dipole_element(const DressedState& a, const DressedState& b, double nuclear_ratio) {
  if (a.level != b.level) return 0.0;
  const int dq = a.label.twoM - b.label.twoM;
  if (std::abs(dq) > 2) return 0.0;
  const int q = dq / 2;
  const auto& pb = a.basis;
  auto I = spin_ops(pb.twoI), J = spin_ops(pb.twoJ);
  const Eigen::MatrixXd eI = Eigen::MatrixXd::Identity(pb.twoI + 1, pb.twoI + 1);
  const Eigen::MatrixXd eJ = Eigen::MatrixXd::Identity(pb.twoJ + 1, pb.twoJ + 1);
  auto spherical = [&](const SpinOps& s) -> Eigen::MatrixXd {
    if (q == 0) return s.z;
    if (q == 1) return -s.plus / std::sqrt(2.0);
    return s.minus / std::sqrt(2.0);
  };
  Eigen::MatrixXd op = kron(eI, spherical(J));
  if (nuclear_ratio != 0.0) op += nuclear_ratio * kron(spherical(I), eJ);
  return a.amplitudes.dot(op * b.amplitudes);
}

Registry::Registry(SpeciesData species, double field_t, std::vector<std::string> levels,
                   const TrackingOptions& opts)
    : species_(std::move(species)), field_(field_t), levels_(std::move(levels)) {
  for (const auto& l : levels_) {
    const auto& spec = species_.level(l);
    offsets_.push_back(static_cast<int>(states_.size()));
    auto st = dressed_states(spec, species_, field_, opts);
    states_.insert(states_.end(), st.begin(), st.end());
  }
  for (const auto& t : species_.transitions) {
    const bool lo = has_level(t.lower), up = has_level(t.upper);
    if (up && !lo)
      throw StructureError(species_.name + ": level " + t.upper + " decays to unregistered " +
                           t.lower);
    if (!(lo && up)) continue;
    Coupling c;
    c.spec = t;
    c.lower_offset = offset(t.lower);
    c.lower_count = count(t.lower);
    c.upper_offset = offset(t.upper);
    c.upper_count = count(t.upper);
    Eigen::MatrixXd Vl(states_[c.lower_offset].basis.dim(), c.lower_count);
    Eigen::MatrixXd Vu(states_[c.upper_offset].basis.dim(), c.upper_count);
    for (int k = 0; k < c.lower_count; ++k) Vl.col(k) = states_[c.lower_offset + k].amplitudes;
    for (int k = 0; k < c.upper_count; ++k) Vu.col(k) = states_[c.upper_offset + k].amplitudes;
    for (int q = -1; q <= 1; ++q) {
      const auto D = dipole_operator(states_[c.lower_offset].basis, states_[c.upper_offset].basis, q);
      Eigen::MatrixXd d = Vu.transpose() * D * Vl;
      // exact zeros where M selection forbids the component
      for (int i = 0; i < c.upper_count; ++i)
        for (int k = 0; k < c.lower_count; ++k)
          if (states_[c.upper_offset + i].label.twoM - states_[c.lower_offset + k].label.twoM != 2 * q)
            d(i, k) = 0.0;
      c.d2[q + 1] = d.cwiseAbs2();
    }
    couplings_.push_back(std::move(c));
  }
}

bool Registry::has_level(const std::string& l) const {
  return std::find(levels_.begin(), levels_.end(), l) != levels_.end();
}

int Registry::offset(const std::string& level) const {
  for (size_t i = 0; i < levels_.size(); ++i)
    if (levels_[i] == level) return offsets_[i];
  throw ConfigError("level '" + level + "' is not registered");
}

int Registry::count(const std::string& level) const {
  for (size_t i = 0; i < levels_.size(); ++i)
    if (levels_[i] == level)
      return (i + 1 < levels_.size() ? offsets_[i + 1] : size()) - offsets_[i];
  throw ConfigError("level '" + level + "' is not registered");
}

std::vector<DressedState> Registry::level_states(const std::string& level) const {
  const int o = offset(level), n = count(level);
  return {states_.begin() + o, states_.begin() + o + n};
}

int Registry::index(const std::string& level, StateLabel label) const {
  const int o = offset(level), n = count(level);
  for (int i = o; i < o + n; ++i)
    if (states_[i].label == label) return i;
  throw ConfigError("unknown state " + level + "|" + label.str() + ">");
}

const Registry::Coupling& Registry::coupling(const std::string& transition) const {
  for (const auto& c : couplings_)
    if (c.spec.name == transition) return c;
  throw ConfigError("transition '" + transition + "' is not available between registered levels");
}

std::string Registry::describe(int i) const {
  return states_[i].level + "|" + states_[i].label.str() + ">";
}

}  // namespace ionprep
