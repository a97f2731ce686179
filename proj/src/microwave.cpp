#include "ionprep/microwave.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ionprep/rates.hpp"

namespace ionprep {

double rabi_transfer_probability(double omega, double delta, double t) {
  if (omega < 0) throw ConfigError("Rabi frequency must be >= 0");
  const double W2 = omega * omega + delta * delta;
  if (W2 == 0.0) return 0.0;
  const double s = std::sin(0.5 * std::sqrt(W2) * t);
  return omega * omega / W2 * s * s;
}

namespace {

struct Ground {
  std::vector<DressedState> states;
  int index(StateLabel l) const {
    for (size_t i = 0; i < states.size(); ++i)
      if (states[i].label == l) return static_cast<int>(i);
    throw ConfigError("unknown state " + l.str() + " in microwave tone");
  }
};

bool is_weak(const MicrowaveTone& tone, const MwOptions& opts) {
  for (const auto& m : tone.members)
    for (const auto& w : opts.weak)
      if (m.same_as(w)) return true;
  return false;
}

// pulse area on the strongest member maximising the worse member's transfer
double best_area(const std::vector<double>& rel, const std::vector<double>& det, double t,
                 double max_area) {
  const int n = 6000;
  double best = -1.0, best_theta = constants::pi;
  for (int k = 1; k <= n; ++k) {
    const double theta = max_area * k / n;
    if (std::abs(theta - 2 * constants::pi) < 0.5 * constants::pi) continue;
    double worst = 1.0;
    for (size_t i = 0; i < rel.size(); ++i)
      worst = std::min(worst, rabi_transfer_probability(theta / t * rel[i], det[i], t));
    if (worst > best) {
      best = worst;
      best_theta = theta;
    }
  }
  return best_theta;
}

}  // namespace

MwOperation build_mw_operation(const std::string& name, const std::vector<MicrowaveTone>& tones,
                               const Registry& reg, const MwOptions& opts, double slot) {
  Ground g{reg.level_states(reg.species().ground)};
  const int n = static_cast<int>(g.states.size());
  MwOperation op;
  op.name = name;
  op.tones = tones;
  op.T = Eigen::MatrixXd::Identity(n, n);
  op.leakage = Eigen::VectorXd::Zero(n);

  struct ToneDrive {
    double nu_tone, omega_ref, mref, t;
  };
  std::vector<ToneDrive> drives;
  std::map<int, std::string> owner;
  double longest = 0.0;

  for (size_t ti = 0; ti < tones.size(); ++ti) {
    const auto& tone = tones[ti];
    if (tone.members.empty()) throw ConfigError(name + ": tone without transitions");
    std::vector<int> ia, ib;
    std::vector<double> nu, m1;
    for (const auto& m : tone.members) {
      const int a = g.index(m.a), b = g.index(m.b);
      if (a == b) throw ConfigError(name + ": tone joins a state to itself");
      const double e = std::abs(magnetic_dipole_element(g.states[a], g.states[b]));
      if (e < 1e-12) throw ConfigError(name + ": no magnetic dipole coupling on " + m.str());
      ia.push_back(a);
      ib.push_back(b);
      nu.push_back(std::abs(g.states[b].frequency_hz() - g.states[a].frequency_hz()));
      m1.push_back(e);
    }
    double omega0 = tone.omega.value_or(opts.omega);
    if (!(omega0 > 0)) throw ConfigError(name + ": Rabi frequency must be > 0");
    if (is_weak(tone, opts)) omega0 /= opts.weak_factor;
    const double t = constants::pi / omega0;
    longest = std::max(longest, t);
    double nu_tone = 0.0;
    for (double x : nu) nu_tone += x;
    nu_tone /= static_cast<double>(nu.size());
    const double mref = *std::max_element(m1.begin(), m1.end());
    std::vector<double> rel, det;
    for (size_t k = 0; k < nu.size(); ++k) {
      rel.push_back(m1[k] / mref);
      det.push_back(constants::two_pi * (nu[k] - nu_tone));
    }
    double theta = constants::pi;
    if (tone.amplitude_scale)
      theta = constants::pi * *tone.amplitude_scale;
    else if (opts.mode == MwMode::characterized && nu.size() > 1)
      theta = best_area(rel, det, t, opts.max_area);
    const double omega_ref = theta / t;
    drives.push_back({nu_tone, omega_ref, mref, t});

    for (size_t k = 0; k < nu.size(); ++k) {
      for (int s : {ia[k], ib[k]}) {
        auto it = owner.find(s);
        if (it != owner.end()) {
          std::ostringstream os;
          os << "Lambda guard: " << name << " drives ground state " << g.states[s].label.str()
             << " on both " << it->second << " and " << tone.members[k].str();
          throw LambdaGuardError(os.str());
        }
        owner[s] = tone.members[k].str();
      }
      MwBlock blk;
      blk.a = ia[k];
      blk.b = ib[k];
      blk.omega = omega_ref * rel[k];
      blk.delta = det[k];
      blk.duration = t;
      blk.probability = opts.mode == MwMode::ideal && !tone.amplitude_scale
                            ? 1.0
                            : rabi_transfer_probability(blk.omega, blk.delta, t);
      op.blocks.push_back(blk);
    }
  }

  for (const auto& b : op.blocks) {
    const double P = b.probability;
    op.T(b.a, b.a) = 1.0 - P;
    op.T(b.b, b.b) = 1.0 - P;
    op.T(b.a, b.b) = P;
    op.T(b.b, b.a) = P;
  }

  for (int u = 0; u < n; ++u) {
    if (owner.count(u)) continue;
    for (const auto& d : drives)
      for (int v = 0; v < n; ++v) {
        if (v == u || std::abs(g.states[u].label.twoM - g.states[v].label.twoM) > 2) continue;
        const double e = std::abs(magnetic_dipole_element(g.states[u], g.states[v]));
        if (e < 1e-12) continue;
        const double nu_uv = std::abs(g.states[v].frequency_hz() - g.states[u].frequency_hz());
        const double P = rabi_transfer_probability(d.omega_ref * e / d.mref,
                                                   constants::two_pi * (nu_uv - d.nu_tone), d.t);
        if (P < 1e-300) continue;
        op.leakage(u) += P;
        op.leaks.push_back({u, v, P});
      }
  }
  if (opts.leakage == LeakageModel::square_pulse) {
    for (const auto& l : op.leaks) {
      if (l.from > l.to) continue;  // each pair is listed both ways
      Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
      M(l.from, l.from) = 1.0 - l.probability;
      M(l.to, l.to) = 1.0 - l.probability;
      M(l.from, l.to) = l.probability;
      M(l.to, l.from) = l.probability;
      op.T = M * op.T;
    }
  }

  if (slot <= 0.0) slot = longest;
  if (slot + 1e-15 < longest) {
    std::ostringstream os;
    os << name << ": slot of " << slot * 1e6 << " us is shorter than its longest pulse ("
       << longest * 1e6 << " us)";
    throw ConfigError(os.str());
  }
  op.duration = slot;
  return op;
}

Eigen::MatrixXd embed_ground(const Eigen::MatrixXd& T, const Registry& reg) {
  const int N = reg.size();
  const int o = reg.offset(reg.species().ground), n = reg.count(reg.species().ground);
  if (T.rows() != n) throw ConfigError("transfer matrix does not match the ground level");
  Eigen::MatrixXd E = Eigen::MatrixXd::Identity(N, N);
  E.block(o, o, n, n) = T;
  return E;
}

std::vector<MwGroupPlan> fssp_group_plan(const Registry& reg, StateLabel target,
                                         const std::vector<double>& slots) {
  if (target.twoM == 0) throw ConfigError("FSSP target must be a stretch state with M != 0");
  const int sg = target.twoM > 0 ? 1 : -1;
  const int tF = target.twoF, tFo = tF - 2;
  if (std::abs(target.twoM) != tF)
    throw ConfigError("FSSP target " + target.str() + " is not a stretch state");
  auto L = [](int twoF, int twoM) { return StateLabel{twoF, twoM}; };
  auto tone = [](StateLabel a, StateLabel b) {
    MicrowaveTone t;
    t.members.push_back({a, b});
    return t;
  };
  std::vector<MwGroupPlan> g(3);
  g[0].name = "A";
  g[1].name = "B";
  g[2].name = "C";
  for (int i = 0; i < 3; ++i) g[i].duration = i < static_cast<int>(slots.size()) ? slots[i] : 0.0;
  auto group_of = [&](int m) { return (((tFo - 2 - m) / 2) % 2 == 0) ? 1 : 0; };
  for (int m = tFo - 2; m >= -tFo; m -= 2) {
    MicrowaveTone t;
    t.members.push_back({L(tFo, sg * m), L(tF, sg * (m + 2))});
    t.members.push_back({L(tF, sg * m), L(tFo, sg * (m + 2))});
    g[group_of(m)].tones.push_back(t);
  }
  const int far = 1 - group_of(-tFo);
  g[far].tones.push_back(tone(L(tF, -sg * tF), L(tFo, -sg * tFo)));
  g[2].tones.push_back(tone(L(tFo, -sg * tFo), L(tF, -sg * tFo)));
  check_coverage(g, reg, target, L(tFo, sg * tFo));
  return g;
}

void check_coverage(const std::vector<MwGroupPlan>& groups, const Registry& reg, StateLabel target,
                    StateLabel pump) {
  Ground g{reg.level_states(reg.species().ground)};
  const int n = static_cast<int>(g.states.size());
  const int it = g.index(target), ip = g.index(pump);
  std::vector<std::vector<int>> adj(n);
  for (const auto& grp : groups)
    for (const auto& t : grp.tones)
      for (const auto& m : t.members) {
        const int a = g.index(m.a), b = g.index(m.b);
        if (a == it || b == it)
          throw ConfigError("microwave group " + grp.name + " touches the target state " +
                            target.str());
        adj[a].push_back(b);
        adj[b].push_back(a);
      }
  std::vector<char> seen(n, 0);
  std::vector<int> stack{ip};
  seen[ip] = 1;
  while (!stack.empty()) {
    int a = stack.back();
    stack.pop_back();
    for (int b : adj[a])
      if (!seen[b]) {
        seen[b] = 1;
        stack.push_back(b);
      }
  }
  for (int i = 0; i < n; ++i)
    if (i != it && !seen[i])
      throw ConfigError("microwave coverage: state " + g.states[i].label.str() +
                        " has no path to the pump state " + pump.str());
}

std::vector<MwOperation> default_fssp_mw_groups(const Registry& reg, StateLabel target,
                                                const MwOptions& opts,
                                                const std::vector<double>& slots) {
  std::vector<MwOperation> ops;
  for (const auto& p : fssp_group_plan(reg, target, slots))
    ops.push_back(build_mw_operation(p.name, p.tones, reg, opts, p.duration));
  return ops;
}

}  // namespace ionprep
