// The per-agent maximization is a convex QP: the objective is quadratic in
// consumption/generation and linear in every other flow, the balance
// constraints are slot-local equalities, and the state-of-charge band gives
// two triangular inequality rows per slot touching only the battery columns.
// It is solved with a primal-dual interior-point method whose Newton systems
// are reduced by hand: the condensed Hessian is diagonal outside a small
// dense battery block, so each step costs two tiny Cholesky factorizations.
#include "prosim/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "prosim/welfare.hpp"

namespace prosim {

namespace {

// Flat layout: 8 coordinates per slot, slot-major.
enum Coord : int { L_PLUS, L_MINUS, B_PLUS, B_MINUS, M_PLUS, M_MINUS, G_PLUS, G_MINUS };
constexpr std::array<double, 8> kSign = {+1.0, -1.0, +1.0, -1.0, +1.0, -1.0, +1.0, -1.0};

// Exact projection of an 8-vector onto {lo <= y <= hi, sum_j sign_j y_j = 0}.
// The multiplier nu solves the monotone piecewise-linear equation
// sum_j sign_j clip(x_j - nu sign_j) = 0 by breakpoint scan.
// Returns false when the set is empty.
bool project_slot(const double* lo, const double* hi, double* x) {
  double bp[16];
  for (int j = 0; j < 8; ++j) {
    if (kSign[j] > 0.0) {
      bp[2 * j] = x[j] - hi[j];
      bp[2 * j + 1] = x[j] - lo[j];
    } else {
      bp[2 * j] = lo[j] - x[j];
      bp[2 * j + 1] = hi[j] - x[j];
    }
  }
  std::sort(bp, bp + 16);

  auto balance_at = [&](double nu) {
    double s = 0.0;
    for (int j = 0; j < 8; ++j)
      s += kSign[j] * std::clamp(x[j] - nu * kSign[j], lo[j], hi[j]);
    return s;
  };

  double nu;
  double g_prev = balance_at(bp[0]);
  if (g_prev < 0.0) return false;  // even the largest achievable balance is negative
  bool found = false;
  if (g_prev == 0.0) {
    nu = bp[0];
    found = true;
  }
  for (int k = 1; k < 16 && !found; ++k) {
    const double g_k = balance_at(bp[k]);
    if (g_k <= 0.0) {
      nu = (g_prev == g_k) ? bp[k]
                           : bp[k - 1] + (bp[k] - bp[k - 1]) * g_prev / (g_prev - g_k);
      found = true;
    }
    g_prev = g_k;
  }
  if (!found) return false;  // smallest achievable balance is positive

  double resid = 0.0;
  for (int j = 0; j < 8; ++j) {
    x[j] = std::clamp(x[j] - nu * kSign[j], lo[j], hi[j]);
    resid += kSign[j] * x[j];
  }
  // Push rounding residue into one strictly interior coordinate.
  for (int j = 0; j < 8; ++j) {
    const double fixed = x[j] - kSign[j] * resid;
    if (fixed > lo[j] && fixed < hi[j]) {
      x[j] = fixed;
      break;
    }
  }
  return true;
}

struct Problem {
  int T = 0;
  const AgentParams* params = nullptr;
  const NetworkParams* net = nullptr;
  const PriceProfile* prices = nullptr;
  std::vector<double> lo, hi;  // 8T bounds

  double phi(const std::vector<double>& x) const {
    const AgentParams& a = *params;
    const NetworkParams& n = *net;
    double v = 0.0;
    for (int t = 0; t < T; ++t) {
      const double* s = x.data() + 8 * t;
      const double om = a.utility_omega[t], th = a.utility_theta[t];
      const double l = s[L_PLUS];
      const double sat = std::max(om / th, 0.0);
      v += (l <= sat) ? om * l - 0.5 * th * l * l : om * om / (2.0 * th);
      v -= a.gen_cost_a * s[L_MINUS] + 0.5 * a.gen_cost_b * s[L_MINUS] * s[L_MINUS];
      v += n.p_grid_sell[t] * s[G_PLUS] - n.p_grid_buy[t] * s[G_MINUS];
      v += (*prices)[t] * (n.gamma * s[M_PLUS] - s[M_MINUS]);
    }
    return v;
  }

  void phi_gradient(const std::vector<double>& x, std::vector<double>& g) const {
    const AgentParams& a = *params;
    const NetworkParams& n = *net;
    for (int t = 0; t < T; ++t) {
      const double* s = x.data() + 8 * t;
      double* gs = g.data() + 8 * t;
      const double om = a.utility_omega[t], th = a.utility_theta[t];
      const double sat = std::max(om / th, 0.0);
      gs[L_PLUS] = (s[L_PLUS] < sat) ? om - th * s[L_PLUS] : 0.0;
      gs[L_MINUS] = -(a.gen_cost_a + a.gen_cost_b * s[L_MINUS]);
      gs[B_PLUS] = 0.0;
      gs[B_MINUS] = 0.0;
      gs[M_PLUS] = n.gamma * (*prices)[t];
      gs[M_MINUS] = -(*prices)[t];
      gs[G_PLUS] = n.p_grid_sell[t];
      gs[G_MINUS] = -n.p_grid_buy[t];
    }
  }

  // State-of-charge values and the two band constraints c1 = -s <= 0,
  // c2 = s - s_max <= 0 per slot.
  void soc_constraints(const std::vector<double>& x, std::vector<double>& c1,
                       std::vector<double>& c2) const {
    double s = params->s_init;
    for (int t = 0; t < T; ++t) {
      s += params->eta * x[8 * t + B_PLUS] - x[8 * t + B_MINUS];
      c1[t] = -s;
      c2[t] = s - params->s_max;
    }
  }

  // Adds the battery columns of -sum_t (y1_t grad c1_t + y2_t grad c2_t).
  void add_soc_multiplier_gradient(const std::vector<double>& y1, const std::vector<double>& y2,
                                   std::vector<double>& g) const {
    double suffix = 0.0;  // sum_{t>=k} (y1_t - y2_t)
    for (int k = T - 1; k >= 0; --k) {
      suffix += y1[k] - y2[k];
      g[8 * k + B_PLUS] += params->eta * suffix;
      g[8 * k + B_MINUS] -= suffix;
    }
  }
};

AgentState unpack(const std::vector<double>& x, int T) {
  AgentState s = AgentState::zeros(T);
  for (int t = 0; t < T; ++t) {
    const double* b = x.data() + 8 * t;
    s.l_plus[t] = b[L_PLUS];
    s.l_minus[t] = b[L_MINUS];
    s.b_plus[t] = b[B_PLUS];
    s.b_minus[t] = b[B_MINUS];
    s.m_plus[t] = b[M_PLUS];
    s.m_minus[t] = b[M_MINUS];
    s.g_plus[t] = b[G_PLUS];
    s.g_minus[t] = b[G_MINUS];
  }
  return s;
}

void pack(const AgentState& s, std::vector<double>& x) {
  const int T = s.slots();
  x.assign(8 * static_cast<size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    double* b = x.data() + 8 * t;
    b[L_PLUS] = s.l_plus[t];
    b[L_MINUS] = s.l_minus[t];
    b[B_PLUS] = s.b_plus[t];
    b[B_MINUS] = s.b_minus[t];
    b[M_PLUS] = s.m_plus[t];
    b[M_MINUS] = s.m_minus[t];
    b[G_PLUS] = s.g_plus[t];
    b[G_MINUS] = s.g_minus[t];
  }
}

// Removes simultaneous buy/sell churn from the market and grid pairs; a
// balance-preserving move that never lowers the objective for nonnegative
// prices and resolves degenerate ties deterministically.
void net_churn(std::vector<double>& x, const Problem& pb, bool market_pinned) {
  for (int t = 0; t < pb.T; ++t) {
    double* s = x.data() + 8 * t;
    if (!market_pinned && (*pb.prices)[t] >= 0.0) {
      const double d = std::min(s[M_PLUS], s[M_MINUS]);
      s[M_PLUS] -= d;
      s[M_MINUS] -= d;
    }
    const double d = std::min(s[G_PLUS], s[G_MINUS]);
    s[G_PLUS] -= d;
    s[G_MINUS] -= d;
  }
}

// Zeroes market/grid quantities below `tol`. These coordinates enter the
// objective linearly, so moving them to their bound does not disturb
// stationarity, while exact zeros keep downstream bids and imbalance sums
// free of solver noise. The flow residue is absorbed by the grid pair; slots
// where that is impossible are left untouched.
void snap_tiny(std::vector<double>& x, const Problem& pb, bool market_pinned, double tol) {
  for (int t = 0; t < pb.T; ++t) {
    double* v = x.data() + 8 * t;
    double saved[8];
    std::memcpy(saved, v, sizeof saved);
    if (!market_pinned) {
      if (v[M_PLUS] < tol) v[M_PLUS] = 0.0;
      if (v[M_MINUS] < tol) v[M_MINUS] = 0.0;
    }
    if (v[G_PLUS] < tol) v[G_PLUS] = 0.0;
    if (v[G_MINUS] < tol) v[G_MINUS] = 0.0;
    double r = 0.0;  // outflow minus inflow after snapping
    for (int j = 0; j < 8; ++j) r += kSign[j] * v[j];
    if (r > 0.0) {
      const double cut = std::min(r, v[G_PLUS]);
      v[G_PLUS] -= cut;
      v[G_MINUS] += r - cut;
    } else if (r < 0.0) {
      const double cut = std::min(-r, v[G_MINUS]);
      v[G_MINUS] -= cut;
      v[G_PLUS] += -r - cut;
    }
    if (v[G_MINUS] > pb.hi[8 * t + G_MINUS] || v[G_PLUS] > pb.hi[8 * t + G_PLUS])
      std::memcpy(v, saved, sizeof saved);
  }
}

// Clips the battery to honor the SOC band exactly (forward pass), routing the
// resulting per-slot flow residue through the grid variables.
void repair_soc(std::vector<double>& x, const Problem& pb) {
  const AgentParams& a = *pb.params;
  double s = a.s_init;
  for (int t = 0; t < pb.T; ++t) {
    double* v = x.data() + 8 * t;
    double delta = 0.0;  // net change of (outflow - inflow) at this slot
    double next = s + a.eta * v[B_PLUS] - v[B_MINUS];
    if (next > a.s_max && a.eta > 0.0) {
      const double cut = std::min((next - a.s_max) / a.eta, v[B_PLUS]);
      v[B_PLUS] -= cut;
      delta -= cut;
      next = s + a.eta * v[B_PLUS] - v[B_MINUS];
    }
    if (next < 0.0) {
      const double cut = std::min(-next, v[B_MINUS]);
      v[B_MINUS] -= cut;
      delta += cut;
      next = s + a.eta * v[B_PLUS] - v[B_MINUS];
    }
    s = next;
    if (delta < 0.0) {
      // Surplus outflow capacity was removed: send it to the grid instead.
      const double room = pb.hi[8 * t + G_PLUS] - v[G_PLUS];
      const double add = std::min(-delta, room);
      v[G_PLUS] += add;
      delta += add;
      if (delta < 0.0) v[G_MINUS] -= std::min(-delta, v[G_MINUS]);
    } else if (delta > 0.0) {
      const double room = pb.hi[8 * t + G_MINUS] - v[G_MINUS];
      const double add = std::min(delta, room);
      v[G_MINUS] += add;
      delta -= add;
      if (delta > 0.0) v[G_PLUS] -= std::min(delta, v[G_PLUS]);
    }
  }
}

// ---------------------------------------------------------------------------
// Interior-point core.

struct Ipm {
  const Problem& pb;
  int T;
  int n = 0;  // free coordinates

  std::vector<int> free_of_global;   // 8T -> free index or -1
  std::vector<int> global_of_free;   // free index -> 8T position
  std::vector<double> fixed_value;   // 8T, meaningful where free_of_global < 0

  std::vector<double> qdiag, cost;   // per free coordinate (min-form QP)
  std::vector<double> flo, fhi;      // free-coordinate bounds

  // Equality rows (one per slot that still has free coordinates).
  std::vector<int> eq_of_slot;       // slot -> eq row or -1
  std::vector<int> slot_of_eq;
  std::vector<double> eq_rhs;
  int ne = 0;

  // SOC rows kept (those touching at least one free battery coordinate).
  std::vector<int> soc_rows;         // kept row -> slot
  std::vector<double> soc_lo, soc_hi;
  int ns = 0;

  // Battery sub-block bookkeeping.
  std::vector<int> batt_free;        // free indices that are battery coords
  std::vector<int> batt_pos;         // free index -> position in batt_free or -1
  std::vector<double> soc_coef;      // ns x nb dense row-major C over battery coords

  explicit Ipm(const Problem& problem) : pb(problem), T(problem.T) {}

  bool build();  // false when a slot-level infeasibility was detected (caller re-checks)
  bool solve(std::vector<double>& x_full, std::vector<double>& y1_full,
             std::vector<double>& y2_full, int max_iters, int& used_iters);
};

bool Ipm::build() {
  const AgentParams& a = *pb.params;
  const NetworkParams& netp = *pb.net;
  const int total = 8 * T;
  free_of_global.assign(total, -1);
  fixed_value.assign(total, 0.0);
  for (int j = 0; j < total; ++j) {
    if (pb.hi[j] - pb.lo[j] > 1e-14) {
      free_of_global[j] = n++;
      global_of_free.push_back(j);
    } else {
      fixed_value[j] = pb.lo[j];
    }
  }

  qdiag.assign(n, 0.0);
  cost.assign(n, 0.0);
  flo.resize(n);
  fhi.resize(n);
  for (int f = 0; f < n; ++f) {
    const int j = global_of_free[f];
    const int t = j / 8, k = j % 8;
    flo[f] = pb.lo[j];
    fhi[f] = pb.hi[j];
    switch (k) {
      case L_PLUS:
        qdiag[f] = a.utility_theta[t];
        cost[f] = -a.utility_omega[t];
        break;
      case L_MINUS:
        qdiag[f] = a.gen_cost_b;
        cost[f] = a.gen_cost_a;
        break;
      case M_PLUS: cost[f] = -netp.gamma * (*pb.prices)[t]; break;
      case M_MINUS: cost[f] = (*pb.prices)[t]; break;
      case G_PLUS: cost[f] = -netp.p_grid_sell[t]; break;
      case G_MINUS: cost[f] = netp.p_grid_buy[t]; break;
      default: break;
    }
  }

  eq_of_slot.assign(T, -1);
  for (int t = 0; t < T; ++t) {
    double rhs = 0.0;
    bool any_free = false;
    for (int k = 0; k < 8; ++k) {
      const int j = 8 * t + k;
      if (free_of_global[j] >= 0)
        any_free = true;
      else
        rhs -= kSign[k] * fixed_value[j];
    }
    if (any_free) {
      eq_of_slot[t] = ne++;
      slot_of_eq.push_back(t);
      eq_rhs.push_back(rhs);
    } else if (std::abs(rhs) > 1e-9) {
      return false;  // fully pinned slot that cannot balance
    }
  }

  batt_pos.assign(n, -1);
  for (int f = 0; f < n; ++f) {
    const int k = global_of_free[f] % 8;
    if (k == B_PLUS || k == B_MINUS) {
      batt_pos[f] = static_cast<int>(batt_free.size());
      batt_free.push_back(f);
    }
  }
  const int nb = static_cast<int>(batt_free.size());

  // SOC rows: base_t collects the fixed-battery contribution (normally zero).
  double base = a.s_init;
  std::vector<double> row(nb, 0.0);
  for (int t = 0; t < T; ++t) {
    const int jp = 8 * t + B_PLUS, jm = 8 * t + B_MINUS;
    if (free_of_global[jp] < 0) base += a.eta * fixed_value[jp];
    if (free_of_global[jm] < 0) base -= fixed_value[jm];
    if (free_of_global[jp] >= 0) row[batt_pos[free_of_global[jp]]] = a.eta;
    if (free_of_global[jm] >= 0) row[batt_pos[free_of_global[jm]]] = -1.0;
    bool nonzero = false;
    for (double v : row)
      if (v != 0.0) { nonzero = true; break; }
    if (nonzero) {
      soc_rows.push_back(t);
      soc_lo.push_back(-base);
      soc_hi.push_back(a.s_max - base);
      soc_coef.insert(soc_coef.end(), row.begin(), row.end());
    }
  }
  ns = static_cast<int>(soc_rows.size());
  return true;
}

bool Ipm::solve(std::vector<double>& x_full, std::vector<double>& y1_full,
                std::vector<double>& y2_full, int max_iters, int& used_iters) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int nb = static_cast<int>(batt_free.size());
  const int m = 2 * n + 2 * ns;  // inequality count

  // Primal start: warm values pushed strictly inside the box.
  VectorXd x(n);
  for (int f = 0; f < n; ++f) {
    const double width = fhi[f] - flo[f];
    const double margin = std::min(0.1 * width, 0.1);
    x[f] = std::clamp(x_full[global_of_free[f]], flo[f] + margin, fhi[f] - margin);
  }
  VectorXd y = VectorXd::Zero(ne);

  auto soc_value = [&](const VectorXd& xv, int r) {
    double s = 0.0;
    const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
    for (int b = 0; b < nb; ++b) s += c[b] * xv[batt_free[b]];
    return s;
  };

  // Slack/dual blocks: [0,n) box lower, [n,2n) box upper,
  // [2n,2n+ns) SOC lower, [2n+ns,m) SOC upper.
  VectorXd s(m), z(m);
  for (int f = 0; f < n; ++f) {
    s[f] = std::max(x[f] - flo[f], 1.0);
    s[n + f] = std::max(fhi[f] - x[f], 1.0);
  }
  for (int r = 0; r < ns; ++r) {
    const double v = soc_value(x, r);
    s[2 * n + r] = std::max(v - soc_lo[r], 1.0);
    s[2 * n + ns + r] = std::max(soc_hi[r] - v, 1.0);
  }
  z.setOnes();

  VectorXd rd(n), rp(ne), rg(m), w(m), rhs1(n), dx(n), dy(ne), ds(m), dz(m);
  VectorXd dx_aff(n), dy_aff(ne), ds_aff(m), dz_aff(m), rc(m);
  MatrixXd HB(nb, nb), AB(ne, nb), M(nb, ne), S(ne, ne);
  // The weight matrices span many orders of magnitude near convergence, so
  // both blocks are equilibrated symmetrically before factorization.
  VectorXd scB(nb), scS(ne);
  Eigen::LDLT<MatrixXd> lltHB, lltS;
  std::vector<double> hdiag(n);

  AB.setZero();
  for (int b = 0; b < nb; ++b) {
    const int f = batt_free[b];
    const int j = global_of_free[f];
    const int e = eq_of_slot[j / 8];
    if (e >= 0) AB(e, b) = kSign[j % 8];
  }

  auto compute_residuals = [&]() {
    // rd = Qx + c - A'y - sum z_i a_i
    for (int f = 0; f < n; ++f) {
      const int j = global_of_free[f];
      const int e = eq_of_slot[j / 8];
      rd[f] = qdiag[f] * x[f] + cost[f] - (e >= 0 ? kSign[j % 8] * y[e] : 0.0) - z[f] + z[n + f];
    }
    for (int r = 0; r < ns; ++r) {
      const double zr = z[2 * n + r] - z[2 * n + ns + r];
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b) rd[batt_free[b]] -= c[b] * zr;
    }
    rp.setZero();
    for (int f = 0; f < n; ++f) {
      const int j = global_of_free[f];
      const int e = eq_of_slot[j / 8];
      if (e >= 0) rp[e] += kSign[j % 8] * x[f];
    }
    for (int e = 0; e < ne; ++e) rp[e] -= eq_rhs[e];
    for (int f = 0; f < n; ++f) {
      rg[f] = (x[f] - flo[f]) - s[f];
      rg[n + f] = (fhi[f] - x[f]) - s[n + f];
    }
    for (int r = 0; r < ns; ++r) {
      const double v = soc_value(x, r);
      rg[2 * n + r] = (v - soc_lo[r]) - s[2 * n + r];
      rg[2 * n + ns + r] = (soc_hi[r] - v) - s[2 * n + ns + r];
    }
  };

  // Applies a_i'-weighted accumulation: out += sum_i coef_i * a_i.
  auto add_rows = [&](const VectorXd& coef, VectorXd& out) {
    for (int f = 0; f < n; ++f) out[f] += coef[f] - coef[n + f];
    for (int r = 0; r < ns; ++r) {
      const double cr = coef[2 * n + r] - coef[2 * n + ns + r];
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b) out[batt_free[b]] += c[b] * cr;
    }
  };

  auto factorize = [&]() {
    for (int i = 0; i < m; ++i) w[i] = z[i] / s[i];
    for (int f = 0; f < n; ++f) hdiag[f] = qdiag[f] + w[f] + w[n + f];
    HB.setZero();
    for (int r = 0; r < ns; ++r) {
      const double wr = w[2 * n + r] + w[2 * n + ns + r];
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b1 = 0; b1 < nb; ++b1) {
        if (c[b1] == 0.0) continue;
        for (int b2 = 0; b2 <= b1; ++b2) HB(b1, b2) += wr * c[b1] * c[b2];
      }
    }
    for (int b = 0; b < nb; ++b) HB(b, b) += hdiag[batt_free[b]];
    for (int b1 = 0; b1 < nb; ++b1)
      for (int b2 = b1 + 1; b2 < nb; ++b2) HB(b1, b2) = HB(b2, b1);
    for (int b = 0; b < nb; ++b) {
      if (!(HB(b, b) > 0.0)) { if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "HB diag %d = %g\n", b, HB(b,b)); return false; }
      scB[b] = 1.0 / std::sqrt(HB(b, b));
    }
    // LDLT's definiteness flag trips on roundoff-scale pivots once the
    // barrier weights spread over ~16 decades; the factors remain usable and
    // the outer loop re-measures true residuals each iteration, so the flag
    // is deliberately ignored.
    lltHB.compute(scB.asDiagonal() * HB * scB.asDiagonal());

    // Schur complement S = A H^-1 A'.
    M = scB.asDiagonal() * lltHB.solve(scB.asDiagonal() * AB.transpose());
    S = AB * M;
    for (int f = 0; f < n; ++f) {
      if (batt_pos[f] >= 0) continue;
      const int j = global_of_free[f];
      const int e = eq_of_slot[j / 8];
      if (e >= 0) S(e, e) += 1.0 / hdiag[f];
    }
    for (int e = 0; e < ne; ++e) {
      if (!(S(e, e) > 0.0)) { if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "S diag %d = %g\n", e, S(e,e)); return false; }
      scS[e] = 1.0 / std::sqrt(S(e, e));
    }
    lltS.compute(scS.asDiagonal() * S * scS.asDiagonal());
    return true;
  };

  auto solveHB = [&](const VectorXd& v) -> VectorXd {
    return scB.asDiagonal() * lltHB.solve((scB.asDiagonal() * v).eval());
  };
  auto solveS = [&](const VectorXd& v) -> VectorXd {
    return scS.asDiagonal() * lltS.solve((scS.asDiagonal() * v).eval());
  };

  // Solves the reduced Newton system for a given complementarity target.
  auto newton = [&](const VectorXd& rcv, VectorXd& odx, VectorXd& ody, VectorXd& ods,
                    VectorXd& odz) {
    rhs1 = -rd;
    VectorXd coef(m);
    for (int i = 0; i < m; ++i) coef[i] = (rcv[i] - z[i] * rg[i]) / s[i];
    add_rows(coef, rhs1);

    // u = H^-1 rhs1 (battery block dense, rest diagonal).
    VectorXd u(n);
    VectorXd ub(nb);
    for (int b = 0; b < nb; ++b) ub[b] = rhs1[batt_free[b]];
    ub = solveHB(ub);
    for (int f = 0; f < n; ++f) u[f] = batt_pos[f] >= 0 ? ub[batt_pos[f]] : rhs1[f] / hdiag[f];

    VectorXd t1 = VectorXd::Zero(ne);
    for (int f = 0; f < n; ++f) {
      const int j = global_of_free[f];
      const int e = eq_of_slot[j / 8];
      if (e >= 0) t1[e] += kSign[j % 8] * u[f];
    }
    ody = solveS(-rp - t1);

    // dx = H^-1 (rhs1 + A'dy)
    VectorXd v = rhs1;
    for (int f = 0; f < n; ++f) {
      const int j = global_of_free[f];
      const int e = eq_of_slot[j / 8];
      if (e >= 0) v[f] += kSign[j % 8] * ody[e];
    }
    for (int b = 0; b < nb; ++b) ub[b] = v[batt_free[b]];
    ub = solveHB(ub);
    for (int f = 0; f < n; ++f) odx[f] = batt_pos[f] >= 0 ? ub[batt_pos[f]] : v[f] / hdiag[f];

    // ds_i = a_i . dx + rg_i ; dz_i = (rc_i - z_i ds_i)/s_i
    for (int f = 0; f < n; ++f) {
      ods[f] = odx[f] + rg[f];
      ods[n + f] = -odx[f] + rg[n + f];
    }
    for (int r = 0; r < ns; ++r) {
      double sv = 0.0;
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b) sv += c[b] * odx[batt_free[b]];
      ods[2 * n + r] = sv + rg[2 * n + r];
      ods[2 * n + ns + r] = -sv + rg[2 * n + ns + r];
    }
    for (int i = 0; i < m; ++i) odz[i] = (rcv[i] - z[i] * ods[i]) / s[i];
  };

  auto max_step = [&](const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < m; ++i)
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
  };

  double price_scale = 0.0;
  for (int f = 0; f < n; ++f) price_scale = std::max(price_scale, std::abs(cost[f]));
  bool converged = false;
  double best_mu = std::numeric_limits<double>::infinity();
  int stall = 0;
  int it = 0;
  for (; it < max_iters; ++it) {
    compute_residuals();
    const double mu = s.dot(z) / m;
    const double pres = std::max(ne ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                                 m ? rg.lpNorm<Eigen::Infinity>() : 0.0);
    const double dres = rd.lpNorm<Eigen::Infinity>();
    if (getenv("PROSIM_IPM_DEBUG"))
      std::fprintf(stderr, "it=%d mu=%.3e pres=%.3e dres=%.3e\n", it, mu, pres, dres);
    if (mu < 1e-9 && pres < 1e-8 && dres < 1e-5 * (1.0 + price_scale)) {
      converged = true;
      break;
    }
    if (mu < best_mu * 0.9) {
      best_mu = mu;
      stall = 0;
    } else if (++stall > 12) {
      break;
    }
    if (!factorize()) break;

    // Affine-scaling predictor.
    for (int i = 0; i < m; ++i) rc[i] = -s[i] * z[i];
    newton(rc, dx_aff, dy_aff, ds_aff, dz_aff);
    const double ap_aff = max_step(s, ds_aff);
    const double ad_aff = max_step(z, dz_aff);
    double mu_aff = 0.0;
    for (int i = 0; i < m; ++i)
      mu_aff += (s[i] + ap_aff * ds_aff[i]) * (z[i] + ad_aff * dz_aff[i]);
    mu_aff /= m;
    double sigma = mu_aff / std::max(mu, 1e-300);
    sigma = std::clamp(sigma * sigma * sigma, 1e-8, 1.0);

    // Mehrotra corrector.
    for (int i = 0; i < m; ++i) rc[i] = sigma * mu - s[i] * z[i] - ds_aff[i] * dz_aff[i];
    newton(rc, dx, dy, ds, dz);
    const double ap = 0.995 * max_step(s, ds);
    const double ad = 0.995 * max_step(z, dz);
    x += ap * dx;
    s += ap * ds;
    y += ad * dy;
    z += ad * dz;
  }
  used_iters = it;

  // ---- active-set polish ------------------------------------------------
  // The barrier iterates identify which bounds bind; re-solving the QP on
  // that face as an equality-constrained problem lands exactly on it, which
  // removes the interior-point tail error and puts inactive flows at exact
  // zeros. Misclassified constraints are corrected by release/activate
  // passes; if the face cannot be certified the barrier point is kept.
  std::vector<int> box_state(n, 0);   // 0 free, 1 at lower bound, 2 at upper
  std::vector<int> soc_state(ns, 0);  // 0 inactive, 1 lower, 2 upper
  for (int f = 0; f < n; ++f) {
    const bool lo_act = z[f] > s[f], hi_act = z[n + f] > s[n + f];
    if (lo_act && hi_act)
      box_state[f] = s[f] <= s[n + f] ? 1 : 2;
    else if (lo_act)
      box_state[f] = 1;
    else if (hi_act)
      box_state[f] = 2;
  }
  for (int r = 0; r < ns; ++r) {
    const bool lo_act = z[2 * n + r] > s[2 * n + r];
    const bool hi_act = z[2 * n + ns + r] > s[2 * n + ns + r];
    if (lo_act && hi_act)
      soc_state[r] = s[2 * n + r] <= s[2 * n + ns + r] ? 1 : 2;
    else if (lo_act)
      soc_state[r] = 1;
    else if (hi_act)
      soc_state[r] = 2;
  }
  // Weakly active bounds (primal and dual both ~ sqrt(mu), strict
  // complementarity failing) land in the "free" bucket above even though the
  // coordinate sits on its bound. For objective-flat coordinates that makes
  // the face system redundant against the active SOC rows, so pin them; the
  // dual sign check below re-releases any that were pinned wrongly.
  for (int f = 0; f < n; ++f) {
    if (box_state[f] != 0 || qdiag[f] > 0.0) continue;
    if (x[f] - flo[f] < 1e-4 * (1.0 + std::abs(flo[f])))
      box_state[f] = 1;
    else if (fhi[f] - x[f] < 1e-4 * (1.0 + std::abs(fhi[f])))
      box_state[f] = 2;
  }

  const double reg = 1e-10;  // pins objective-flat coordinates near the barrier point
  const double ptol = 1e-9;
  const double dtol = 1e-9 * (1.0 + price_scale);
  bool polished = false;
  VectorXd px(n), py(ne);
  std::vector<double> py1(T, 0.0), py2(T, 0.0);

  // Misclassification can unwind one slot per pass (an idle-battery stretch
  // releases only its boundary SOC rows each round), so the budget must cover
  // the horizon, not a constant.
  const int max_passes = 8 + 2 * T;
  for (int pass = 0; pass < max_passes && !polished; ++pass) {
    auto bound_of = [&](int f) { return box_state[f] == 1 ? flo[f] : fhi[f]; };
    // Fully pinned balance rows: when the pinned values already balance, the
    // row adds nothing to the face problem and is left out (its dual is
    // reconstructed afterwards from the sign conditions). Only an imbalanced
    // fully pinned row forces a coordinate back free.
    std::vector<char> dangling(ne, 0);
    for (int e = 0; e < ne; ++e) {
      int cnt = 0, widest = -1;
      double width = -1.0;
      double resid = eq_rhs[e];
      for (int f = 0; f < n; ++f) {
        if (eq_of_slot[global_of_free[f] / 8] != e) continue;
        if (box_state[f] == 0)
          ++cnt;
        else
          resid -= kSign[global_of_free[f] % 8] * bound_of(f);
        if (fhi[f] - flo[f] > width) {
          width = fhi[f] - flo[f];
          widest = f;
        }
      }
      if (cnt == 0) {
        if (std::abs(resid) <= ptol)
          dangling[e] = 1;
        else if (widest >= 0)
          box_state[widest] = 0;
      }
    }

    std::vector<int> col_of_free(n, -1), fcols;
    for (int f = 0; f < n; ++f)
      if (box_state[f] == 0) {
        col_of_free[f] = static_cast<int>(fcols.size());
        fcols.push_back(f);
      }
    const int nf = static_cast<int>(fcols.size());

    // The face's equality rows are the slot balances plus the active SOC
    // rows. On degenerate faces (an idle battery pinned across a stretch of
    // slots, say) active SOC rows become linear combinations of the balance
    // rows and of each other; keeping them would make the KKT system
    // singular and, with mismatched right-hand sides, unsolvable. Keep only
    // rows that add rank -- measured against an orthonormal basis grown from
    // the balance rows -- and remember the dropped ones so the candidate can
    // be checked against them afterwards.
    std::vector<VectorXd> row_basis;
    auto deflate = [&](VectorXd v) {
      for (int rep = 0; rep < 2; ++rep)
        for (const VectorXd& q : row_basis) v -= q.dot(v) * q;
      return v;
    };
    for (int e = 0; e < ne; ++e) {
      if (dangling[e]) continue;
      VectorXd row = VectorXd::Zero(nf);
      for (int u = 0; u < nf; ++u)
        if (eq_of_slot[global_of_free[fcols[u]] / 8] == e)
          row[u] = kSign[global_of_free[fcols[u]] % 8];
      const VectorXd rem = deflate(row);
      if (rem.norm() > 1e-10) row_basis.push_back(rem.normalized());
    }
    std::vector<int> act_rows, dropped_rows;
    std::vector<std::vector<double>> act_coef;
    std::vector<double> act_rhs, dropped_rhs;
    for (int r = 0; r < ns; ++r) {
      if (soc_state[r] == 0) continue;
      VectorXd row = VectorXd::Zero(nf);
      double rhs_r = soc_state[r] == 1 ? soc_lo[r] : soc_hi[r];
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b) {
        const int f = batt_free[b];
        if (box_state[f] == 0)
          row[col_of_free[f]] = c[b];
        else
          rhs_r -= c[b] * bound_of(f);
      }
      const VectorXd rem = deflate(row);
      if (rem.norm() <= 1e-8 * (1.0 + row.norm())) {
        dropped_rows.push_back(r);
        dropped_rhs.push_back(rhs_r);
        continue;
      }
      row_basis.push_back(rem.normalized());
      act_rows.push_back(r);
      act_coef.emplace_back(row.data(), row.data() + nf);
      act_rhs.push_back(rhs_r);
    }
    const int na = static_cast<int>(act_rows.size());

    // Solve the face problem in primal form: a particular solution of the
    // (full row rank) equality system, then the strictly convex QP on its
    // kernel. This sidesteps the indefinite saddle matrix, whose mix of
    // curved and merely regularized diagonal entries factors poorly on
    // degenerate faces.
    const int nc = ne + na;
    MatrixXd C = MatrixXd::Zero(nc, nf);
    VectorXd h = VectorXd::Zero(nc);
    for (int e = 0; e < ne; ++e) h[e] = dangling[e] ? 0.0 : eq_rhs[e];
    for (int f = 0; f < n; ++f) {
      const int e = eq_of_slot[global_of_free[f] / 8];
      if (e < 0 || dangling[e]) continue;
      const double sg = kSign[global_of_free[f] % 8];
      if (box_state[f] == 0)
        C(e, col_of_free[f]) = sg;
      else
        h[e] -= sg * bound_of(f);
    }
    for (int a = 0; a < na; ++a) {
      for (int u = 0; u < nf; ++u) C(ne + a, u) = act_coef[a][u];
      h[ne + a] = act_rhs[a];
    }

    VectorXd qd(nf), cc(nf);
    for (int u = 0; u < nf; ++u) {
      const int f = fcols[u];
      qd[u] = qdiag[f] > 0.0 ? qdiag[f] : reg;
      cc[u] = cost[f] - (qdiag[f] > 0.0 ? 0.0 : reg * x[f]);
    }

    VectorXd xf, m_all;
    if (nc == 0 || nf == 0) {
      xf = VectorXd::Zero(nf);
      for (int u = 0; u < nf; ++u) xf[u] = -cc[u] / qd[u];
      m_all = VectorXd::Zero(ne + na);
    } else {
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(C);
      xf = cod.solve(h);
      if (!xf.allFinite() ||
          (C * xf - h).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + h.lpNorm<Eigen::Infinity>())) {
        if (getenv("PROSIM_IPM_DEBUG"))
          std::fprintf(stderr, "polish: inconsistent face pass %d nf=%d na=%d\n", pass, nf, na);
        break;
      }
      const int nk = nf - static_cast<int>(cod.rank());
      if (nk > 0) {
        // Orthonormal kernel basis: the trailing columns of Z' from C P = Q [T 0] Z.
        MatrixXd Zfull = cod.matrixZ().transpose();
        MatrixXd Zk = Zfull.rightCols(nk);
        Zk = cod.colsPermutation() * Zk;
        const MatrixXd red = Zk.transpose() * qd.asDiagonal() * Zk;
        const VectorXd rrhs = -Zk.transpose() * (qd.asDiagonal() * xf + cc);
        const VectorXd w = red.ldlt().solve(rrhs);
        xf += Zk * w;
      }
      if (!xf.allFinite()) break;

      // Multipliers from the stationarity system C' m = qd x + cc; with C of
      // full row rank the least-squares solution is the unique one.
      const VectorXd grad_free = qd.asDiagonal() * xf + cc;
      m_all = C.transpose().colPivHouseholderQr().solve(grad_free);
      if (!m_all.allFinite()) break;
    }

    // Candidate point and multipliers.
    VectorXd cx(n);
    for (int f = 0; f < n; ++f) cx[f] = box_state[f] == 0 ? xf[col_of_free[f]] : bound_of(f);
    VectorXd cy = m_all.head(ne);
    // Duals of dangling rows: pick a value inside the interval the pinned
    // non-battery coordinates' reduced-cost signs allow (battery coordinates
    // get their say through the SOC multiplier construction below).
    for (int e = 0; e < ne; ++e) {
      if (!dangling[e]) continue;
      double dlo = -std::numeric_limits<double>::infinity();
      double dhi = std::numeric_limits<double>::infinity();
      for (int f = 0; f < n; ++f) {
        const int j = global_of_free[f];
        if (eq_of_slot[j / 8] != e) continue;
        const int k = j % 8;
        if (k == B_PLUS || k == B_MINUS) continue;
        const double g0 = qdiag[f] * cx[f] + cost[f];  // gr = g0 - sg*cy
        const bool at_lower = box_state[f] == 1;       // wants gr >= 0, else gr <= 0
        if (kSign[k] > 0.0) {
          if (at_lower)
            dhi = std::min(dhi, g0 + dtol);
          else
            dlo = std::max(dlo, g0 - dtol);
        } else {
          if (at_lower)
            dlo = std::max(dlo, -g0 - dtol);
          else
            dhi = std::min(dhi, -g0 + dtol);
        }
      }
      if (dlo > dhi) continue;  // leave the least-squares value; checks will sort it out
      if (std::isfinite(dlo) && std::isfinite(dhi))
        cy[e] = 0.5 * (dlo + dhi);
      else
        cy[e] = std::clamp(0.0, dlo, dhi);
    }
    std::vector<double> lam(ns, 0.0);
    for (int a = 0; a < na; ++a) lam[act_rows[a]] = m_all[ne + a];

    bool changed = false;
    // Primal checks: unpinned coordinates inside the box, inactive SOC rows
    // inside the band.
    for (int u = 0; u < nf; ++u) {
      const int f = fcols[u];
      if (cx[f] < flo[f] - ptol) {
        box_state[f] = 1;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  pin lo j=%d v=%.3e\n", global_of_free[f], cx[f]);
      } else if (cx[f] > fhi[f] + ptol) {
        box_state[f] = 2;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  pin hi j=%d v=%.3e\n", global_of_free[f], cx[f]);
      }
    }
    for (int r = 0; r < ns; ++r) {
      double v = 0.0;
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b) v += c[b] * cx[batt_free[b]];
      if (soc_state[r] == 0) {
        if (v < soc_lo[r] - ptol) {
          soc_state[r] = 1;
          changed = true;
          if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  soc act lo r=%d v=%.3e\n", r, v);
        } else if (v > soc_hi[r] + ptol) {
          soc_state[r] = 2;
          changed = true;
          if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  soc act hi r=%d v=%.3e\n", r, v);
        }
      }
    }
    // Rows dropped as linearly dependent were not enforced; if the candidate
    // fails to satisfy one, its activation conflicted with the kept rows, so
    // release it and let the inequality check above re-flag it if needed.
    for (size_t q = 0; q < dropped_rows.size(); ++q) {
      const int r = dropped_rows[q];
      double v = 0.0;
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b)
        if (box_state[batt_free[b]] == 0) v += c[b] * cx[batt_free[b]];
      if (std::abs(v - dropped_rhs[q]) > ptol) {
        soc_state[r] = 0;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  soc drop-viol r=%d v=%.3e rhs=%.3e\n", r, v, dropped_rhs[q]);
      }
    }
    // The face solve only carries multipliers for SOC rows that added rank.
    // On degenerate faces (an idle battery, say) every row is implied by the
    // pinned coordinates and gets none, yet certifying the pinned battery
    // bounds still requires them. Any multipliers work whose suffix sums
    // Lambda_t = sum_{r >= t} lam_r (i) meet the stationarity of unpinned
    // battery coordinates exactly, (ii) respect the sign rule at slots whose
    // SOC sits on a bound (jump down at the floor, up at the cap, flat
    // strictly inside), and (iii) satisfy the reduced-cost inequalities of
    // pinned battery coordinates. Propagate the feasible interval backward
    // from Lambda_T = 0; if it survives, adopt the constructed multipliers in
    // place of the face duals.
    bool repaired = false;
    if (nb > 0) {
      const double kInf = std::numeric_limits<double>::infinity();
      std::vector<double> clo(T, -kInf), chi(T, kInf);  // per-slot bounds on Lambda_t
      std::vector<int> status(T, 0);  // -1 floor, +1 cap, 0 interior/no row
      std::vector<int> row_of_slot(T, -1);
      bool feasible = true;
      for (int r = 0; r < ns; ++r) {
        row_of_slot[soc_rows[r]] = r;
        double v = 0.0;
        const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
        for (int b = 0; b < nb; ++b) v += c[b] * cx[batt_free[b]];
        if (v <= soc_lo[r] + ptol)
          status[soc_rows[r]] = -1;
        else if (v >= soc_hi[r] - ptol)
          status[soc_rows[r]] = +1;
      }
      const double eta = pb.params->eta;
      for (int b = 0; b < nb && feasible; ++b) {
        const int f = batt_free[b];
        const int j = global_of_free[f];
        const int t = j / 8;
        const int e = eq_of_slot[t];
        const double cyt = e >= 0 ? cy[e] : 0.0;
        const bool charge = j % 8 == B_PLUS;
        const double coef = charge ? eta : -1.0;  // d(SOC row)/d(coordinate)
        // gr[f] = cost-side - sign*cy - coef*Lambda_t with zero curvature.
        const double base = (charge ? -cyt : cyt);
        if (coef == 0.0) {  // eta == 0: Lambda cannot help this coordinate
          if (box_state[f] == 1 && base < -dtol) feasible = false;
          if (box_state[f] == 2 && base > dtol) feasible = false;
          continue;
        }
        // Solve base - coef*Lambda_t (charge) resp. base + Lambda_t (discharge)
        // against the bound rule of the coordinate.
        if (box_state[f] == 0) {
          const double exact = charge ? base / eta : -base;
          clo[t] = std::max(clo[t], exact - dtol);
          chi[t] = std::min(chi[t], exact + dtol);
        } else if (charge) {  // gr = base - eta*Lambda
          if (box_state[f] == 1)
            chi[t] = std::min(chi[t], (base + dtol) / eta);
          else
            clo[t] = std::max(clo[t], (base - dtol) / eta);
        } else {  // gr = base + Lambda
          if (box_state[f] == 1)
            clo[t] = std::max(clo[t], -base - dtol);
          else
            chi[t] = std::min(chi[t], -base + dtol);
        }
        if (clo[t] > chi[t]) feasible = false;
      }
      if (feasible) {
        std::vector<double> jlo(T + 1), jhi(T + 1);
        jlo[T] = jhi[T] = 0.0;
        for (int t = T - 1; t >= 0 && feasible; --t) {
          double lo_t = status[t] < 0 ? jlo[t + 1] : (status[t] > 0 ? -kInf : jlo[t + 1]);
          double hi_t = status[t] > 0 ? jhi[t + 1] : (status[t] < 0 ? kInf : jhi[t + 1]);
          jlo[t] = std::max(lo_t, clo[t]);
          jhi[t] = std::min(hi_t, chi[t]);
          if (jlo[t] > jhi[t] + 1e-12) feasible = false;
        }
        if (feasible) {
          std::vector<double> L(T + 1, 0.0);
          L[0] = std::clamp(0.0, jlo[0], jhi[0]);
          for (int t = 0; t < T && feasible; ++t) {
            double alo = t + 1 <= T ? jlo[t + 1] : 0.0;
            double ahi = t + 1 <= T ? jhi[t + 1] : 0.0;
            if (status[t] < 0)
              ahi = std::min(ahi, L[t]);  // lam_t >= 0
            else if (status[t] > 0)
              alo = std::max(alo, L[t]);  // lam_t <= 0
            else {
              alo = std::max(alo, L[t]);
              ahi = std::min(ahi, L[t]);
            }
            if (alo > ahi + 1e-12) {
              feasible = false;
              break;
            }
            L[t + 1] = std::clamp(L[t], alo, ahi);
          }
          if (feasible) {
            std::fill(lam.begin(), lam.end(), 0.0);
            for (int t = 0; t < T; ++t)
              if (row_of_slot[t] >= 0) lam[row_of_slot[t]] = L[t] - L[t + 1];
            repaired = true;
          }
        }
      }
      if (!repaired && getenv("PROSIM_IPM_DEBUG"))
        std::fprintf(stderr, "polish pass %d: soc dual repair infeasible\n", pass);
    }

    // Dual checks: pinned coordinates need the right reduced-cost sign,
    // active SOC rows the right multiplier sign.
    std::vector<double> gr(n);
    for (int f = 0; f < n; ++f) {
      const int j = global_of_free[f];
      const int e = eq_of_slot[j / 8];
      gr[f] = qdiag[f] * cx[f] + cost[f] - (e >= 0 ? kSign[j % 8] * cy[e] : 0.0);
    }
    for (int r = 0; r < ns; ++r) {
      if (lam[r] == 0.0) continue;
      const double* c = soc_coef.data() + static_cast<size_t>(r) * nb;
      for (int b = 0; b < nb; ++b) gr[batt_free[b]] -= c[b] * lam[r];
    }
    for (int f = 0; f < n; ++f) {
      if (box_state[f] == 1 && gr[f] < -dtol) {
        box_state[f] = 0;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  release lo j=%d gr=%.3e\n", global_of_free[f], gr[f]);
      } else if (box_state[f] == 2 && gr[f] > dtol) {
        box_state[f] = 0;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  release hi j=%d gr=%.3e\n", global_of_free[f], gr[f]);
      }
    }
    for (int a = 0; a < na && !repaired; ++a) {
      const int r = act_rows[a];
      if (soc_state[r] == 1 && lam[r] < -dtol) {
        soc_state[r] = 0;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  soc rel lo r=%d lam=%.3e\n", r, lam[r]);
      } else if (soc_state[r] == 2 && lam[r] > dtol) {
        soc_state[r] = 0;
        changed = true;
        if (getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "  soc rel hi r=%d lam=%.3e\n", r, lam[r]);
      }
    }

    if (getenv("PROSIM_IPM_DEBUG") && changed)
      std::fprintf(stderr, "polish pass %d: changed (nf=%d na=%d drop=%d)\n", pass, nf, na,
                   (int)dropped_rows.size());
    if (!changed) {
      polished = true;
      px = cx;
      py = cy;
      for (int r = 0; r < ns; ++r) {
        const int t = soc_rows[r];
        if (repaired) {
          py1[t] = std::max(lam[r], 0.0);
          py2[t] = std::max(-lam[r], 0.0);
        } else if (soc_state[r] == 1) {
          py1[t] = std::max(lam[r], 0.0);
        } else if (soc_state[r] == 2) {
          py2[t] = std::max(-lam[r], 0.0);
        }
      }
    }
  }

  if (!polished && getenv("PROSIM_IPM_DEBUG")) std::fprintf(stderr, "polish: not settled after passes\n");
  if (polished) {
    for (int f = 0; f < n; ++f)
      x_full[global_of_free[f]] = std::clamp(px[f], flo[f], fhi[f]);
    y1_full = py1;
    y2_full = py2;
    return true;
  }

  for (int f = 0; f < n; ++f)
    x_full[global_of_free[f]] = std::clamp(x[f], flo[f], fhi[f]);
  y1_full.assign(T, 0.0);
  y2_full.assign(T, 0.0);
  for (int r = 0; r < ns; ++r) {
    y1_full[soc_rows[r]] = z[2 * n + r];
    y2_full[soc_rows[r]] = z[2 * n + ns + r];
  }
  return converged;
}

SubproblemSolution solve_internal(const PriceProfile& prices, const AgentParams& params,
                                  const NetworkParams& net, const SolverConfig& cfg,
                                  const SubproblemSolution* warm_start, const Profile* pin_m_plus,
                                  const Profile* pin_m_minus) {
  params.validate();
  net.validate();
  const int T = params.slots();
  if (static_cast<int>(prices.size()) != T || net.slots() != T)
    throw std::invalid_argument("solve_subproblem: price/network slot mismatch");
  for (double p : prices)
    if (!std::isfinite(p)) throw std::invalid_argument("solve_subproblem: prices must be finite");

  Problem pb;
  pb.T = T;
  pb.params = &params;
  pb.net = &net;
  pb.prices = &prices;
  pb.lo.assign(8 * static_cast<size_t>(T), 0.0);
  pb.hi.assign(8 * static_cast<size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    double* lo = pb.lo.data() + 8 * t;
    double* hi = pb.hi.data() + 8 * t;
    lo[L_PLUS] = params.l_plus_min;
    // The utility is flat past its saturation point, so consumption above it
    // is never needed; the cap keeps the iterates bounded.
    hi[L_PLUS] = std::max(params.l_plus_min,
                          std::max(0.0, params.utility_omega[t] / params.utility_theta[t]));
    hi[L_MINUS] = params.l_minus_max[t];
    hi[B_PLUS] = params.b_plus_max;
    hi[B_MINUS] = params.b_minus_max;
    if (pin_m_plus) {
      lo[M_PLUS] = hi[M_PLUS] = (*pin_m_plus)[t];
      lo[M_MINUS] = hi[M_MINUS] = (*pin_m_minus)[t];
    } else {
      hi[M_PLUS] = params.m_plus_max;
      hi[M_MINUS] = params.m_minus_max;
    }
    // Grid sales only ever re-export local inflows, so this bound is tight
    // enough to contain an optimum while keeping the box well scaled.
    hi[G_PLUS] = std::min(cfg.g_plus_cap,
                          params.l_minus_max[t] + params.b_minus_max + hi[M_MINUS]);
    hi[G_MINUS] = params.g_minus_max;
  }

  std::vector<double> x;
  if (warm_start && warm_start->state.slots() == T) {
    pack(warm_start->state, x);
    for (size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], pb.lo[j], pb.hi[j]);
  } else {
    x.assign(8 * static_cast<size_t>(T), 0.0);
    for (size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], pb.lo[j], pb.hi[j]);
  }
  for (int t = 0; t < T; ++t) {
    if (!project_slot(pb.lo.data() + 8 * t, pb.hi.data() + 8 * t, x.data() + 8 * t))
      throw InfeasibleError("sub-problem infeasible: flow conservation cannot be met at slot " +
                                std::to_string(t + 1),
                            t);
  }

  Ipm ipm(pb);
  if (!ipm.build())
    throw InfeasibleError("sub-problem infeasible: a fully pinned slot cannot balance", 0);

  SubproblemSolution best;
  std::vector<double> y1(T, 0.0), y2(T, 0.0);
  int used = 0;
  const int max_ipm = std::max(10, std::min(cfg.max_iters, 200));
  best.converged = ipm.solve(x, y1, y2, max_ipm, used);
  best.iterations = used;
  best.soc_mu_lo = y1;
  best.soc_mu_hi = y2;

  // Exact balance per slot, then resolve degenerate churn and snap the SOC
  // band exactly.
  for (int t = 0; t < T; ++t)
    project_slot(pb.lo.data() + 8 * t, pb.hi.data() + 8 * t, x.data() + 8 * t);
  net_churn(x, pb, pin_m_plus != nullptr);
  snap_tiny(x, pb, pin_m_plus != nullptr, 1e-8);
  repair_soc(x, pb);
  best.state = unpack(x, T);
  best.objective = pb.phi(x);
  for (int t = 0; t < T; ++t)
    if (x[8 * t + G_PLUS] >= cfg.g_plus_cap * (1.0 - 1e-12) && cfg.g_plus_cap > 0.0)
      best.g_plus_cap_binding = true;

  // KKT residual of the packaged state: projected-gradient stationarity with
  // the SOC multipliers, complementarity and band violation.
  std::vector<double> grad(x.size()), probe(x.size());
  pb.phi_gradient(x, grad);
  pb.add_soc_multiplier_gradient(y1, y2, grad);
  for (size_t j = 0; j < x.size(); ++j) probe[j] = x[j] + grad[j];
  for (int t = 0; t < T; ++t)
    project_slot(pb.lo.data() + 8 * t, pb.hi.data() + 8 * t, probe.data() + 8 * t);
  double stationarity = 0.0;
  for (size_t j = 0; j < x.size(); ++j)
    stationarity = std::max(stationarity, std::abs(x[j] - probe[j]));
  std::vector<double> c1(T), c2(T);
  pb.soc_constraints(x, c1, c2);
  double complementarity = 0.0, violation = 0.0;
  for (int t = 0; t < T; ++t) {
    complementarity = std::max({complementarity, std::abs(y1[t] * c1[t]), std::abs(y2[t] * c2[t])});
    violation = std::max({violation, c1[t], c2[t]});
  }
  violation = std::max(violation, 0.0);
  best.kkt_residual = std::max({stationarity, complementarity, violation});
  if (best.converged && (best.kkt_residual > cfg.kkt_tol || violation > cfg.feas_tol))
    best.converged = false;

  if (!best.converged && violation > 1e-4) {
    int worst_slot = 0;
    double v = 0.0;
    for (int t = 0; t < T; ++t) {
      const double vt = std::max(c1[t], c2[t]);
      if (vt > v) {
        v = vt;
        worst_slot = t;
      }
    }
    throw InfeasibleError("sub-problem infeasible: storage constraints cannot be met at slot " +
                              std::to_string(worst_slot + 1),
                          worst_slot);
  }
  return best;
}

}  // namespace

double priced_objective(const AgentState& state, const PriceProfile& prices,
                        const AgentParams& params, const NetworkParams& net) {
  Problem pb;
  pb.T = params.slots();
  pb.params = &params;
  pb.net = &net;
  pb.prices = &prices;
  std::vector<double> x;
  pack(state, x);
  return pb.phi(x);
}

void objective_gradient_slot(const AgentState& state, const PriceProfile& prices,
                             const AgentParams& params, const NetworkParams& net, int t,
                             double grad8[8]) {
  Problem pb;
  pb.T = params.slots();
  pb.params = &params;
  pb.net = &net;
  pb.prices = &prices;
  std::vector<double> x, g(8 * static_cast<size_t>(pb.T));
  pack(state, x);
  pb.phi_gradient(x, g);
  std::memcpy(grad8, g.data() + 8 * t, 8 * sizeof(double));
}

SubproblemSolution solve_subproblem(const PriceProfile& prices, const AgentParams& params,
                                    const NetworkParams& net, const SolverConfig& cfg,
                                    const SubproblemSolution* warm_start) {
  return solve_internal(prices, params, net, cfg, warm_start, nullptr, nullptr);
}

SubproblemSolution reconfigure(const SubproblemSolution& solution, const Profile& fixed_m_plus,
                               const Profile& fixed_m_minus, const PriceProfile& prices,
                               const AgentParams& params, const NetworkParams& net,
                               const SolverConfig& cfg) {
  if (static_cast<int>(fixed_m_plus.size()) != params.slots() ||
      static_cast<int>(fixed_m_minus.size()) != params.slots())
    throw std::invalid_argument("reconfigure: pinned market profiles must have T entries");
  for (int t = 0; t < params.slots(); ++t)
    if (fixed_m_plus[t] < 0.0 || fixed_m_minus[t] < 0.0)
      throw std::invalid_argument("reconfigure: pinned market quantities must be >= 0");
  return solve_internal(prices, params, net, cfg, &solution, &fixed_m_plus, &fixed_m_minus);
}

}  // namespace prosim
