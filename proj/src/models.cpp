#include "locstat/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "locstat/finite_chain.hpp"

namespace locstat {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre rules: 5 nodes per grid cell, 7 for the tail substitution.
const double kGL5x[] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                        0.5384693101056831, 0.9061798459386640};
const double kGL5w[] = {0.2369268850561891, 0.4786286704993665,
                        0.5688888888888889, 0.4786286704993665,
                        0.2369268850561891};
const double kGL7x[] = {-0.9491079123427585, -0.7415311855993945,
                        -0.4058451513773972, 0.0,
                        0.4058451513773972,  0.7415311855993945,
                        0.9491079123427585};
const double kGL7w[] = {0.1294849661688697, 0.2797053914892766,
                        0.3818300505051189, 0.4179591836734694,
                        0.3818300505051189, 0.2797053914892766,
                        0.1294849661688697};

struct Kahan {
  double s = 0.0, c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
};

double binom_small(int n, int k) {
  static const double C[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0},
                                 {1, 3, 3, 1}};
  return C[n][k];
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

std::size_t tuple_count(int m, int p, std::size_t cap, const char* who) {
  std::size_t M = 1;
  for (int i = 0; i < p; ++i) {
    if (M > cap / std::size_t(m)) {
      std::ostringstream os;
      os << who << ": tuple space " << m << "^" << p << " exceeds cap " << cap;
      throw ProductSpaceTooLarge(os.str());
    }
    M *= std::size_t(m);
  }
  return M;
}

}  // namespace

// ---------------------------------------------------------------------------
// noise densities
// ---------------------------------------------------------------------------

double NoiseDensity::pdf_deriv(double z, int s) const {
  if (s < 0 || s > 3)
    throw ContractViolation("NoiseDensity: derivative order must be 0..3");
  switch (type) {
    case Type::Gaussian: {
      const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
      switch (s) {
        case 0: return phi;
        case 1: return -z * phi;
        case 2: return (z * z - 1.0) * phi;
        default: return (3.0 * z - z * z * z) * phi;
      }
    }
    case Type::Logistic: {
      // density f = w(1-w) with w the sigmoid; successive derivatives are
      // f times polynomials in w.
      const double w = stable_sigmoid(z);
      const double f = w * (1.0 - w);
      switch (s) {
        case 0: return f;
        case 1: return f * (1.0 - 2.0 * w);
        case 2: return f * (1.0 - 6.0 * w + 6.0 * w * w);
        default:
          return f * (1.0 - 2.0 * w) * (1.0 - 12.0 * w + 12.0 * w * w);
      }
    }
    case Type::StudentT: {
      if (!(nu > 2.0))
        throw ContractViolation("NoiseDensity: StudentT needs nu > 2");
      const double c = std::exp(std::lgamma((nu + 1.0) / 2.0) -
                                std::lgamma(nu / 2.0)) /
                       std::sqrt(nu * kPi);
      const double g = 1.0 + z * z / nu;
      const double a = -(nu + 1.0) / 2.0;
      const double g1 = 2.0 * z / nu, g2 = 2.0 / nu;
      switch (s) {
        case 0: return c * std::pow(g, a);
        case 1: return c * a * std::pow(g, a - 1.0) * g1;
        case 2:
          return c * a *
                 ((a - 1.0) * std::pow(g, a - 2.0) * g1 * g1 +
                  std::pow(g, a - 1.0) * g2);
        default:
          return c * a * (a - 1.0) *
                 ((a - 2.0) * std::pow(g, a - 3.0) * g1 * g1 * g1 +
                  3.0 * std::pow(g, a - 2.0) * g1 * g2);
      }
    }
  }
  throw ContractViolation("NoiseDensity: unknown type");
}

double NoiseDensity::sample(RngStream& g) const {
  switch (type) {
    case Type::Gaussian: return draw_normal(g);
    case Type::StudentT: return draw_student_t(g, nu);
    case Type::Logistic: return draw_logistic(g);
  }
  throw ContractViolation("NoiseDensity: unknown type");
}

std::string NoiseDensity::name() const {
  switch (type) {
    case Type::Gaussian: return "gaussian";
    case Type::StudentT: {
      std::ostringstream os;
      os << "student_t(" << nu << ")";
      return os.str();
    }
    case Type::Logistic: return "logistic";
  }
  return "?";
}

MomentCheck noise_moment_check(const NoiseDensity& f, double p, int s) {
  const auto g = [&](double y) {
    return std::pow(std::abs(y), p) * std::abs(f.pdf_deriv(y, s));
  };
  const auto segment = [&](double lo, double hi, int panels) {
    double total = 0.0;
    const double w = (hi - lo) / panels;
    for (int i = 0; i < panels; ++i) {
      const double mid = lo + w * (i + 0.5), half = 0.5 * w;
      for (int q = 0; q < 7; ++q)
        total += kGL7w[q] * g(mid + half * kGL7x[q]) * half;
    }
    return total;
  };
  MomentCheck out;
  out.p = p;
  out.s = s;
  double total = segment(0.0, 8.0, 64);
  double L = 8.0, prev = -1.0, ratio = 1.0;
  for (int m = 0; m < 14; ++m) {
    const double piece = segment(L, 2.0 * L, 32);
    total += piece;
    if (prev > 0.0) ratio = piece / prev;
    prev = piece;
    L *= 2.0;
    if (piece < 1e-14 * std::max(total, 1.0)) {
      ratio = 0.0;
      break;
    }
  }
  out.tail_ratio = ratio;
  // Geometric decay of the doubling segments certifies convergence; a ratio
  // near or above 1 means every doubling contributes undiminished mass.
  out.finite = ratio < 0.98;
  out.value = 2.0 * total;
  return out;
}

// ---------------------------------------------------------------------------
// pmf bundles
// ---------------------------------------------------------------------------

namespace {

void check_bundle_order(int order, const char* who) {
  if (order < 0 || order > Jet::kMax)
    throw ContractViolation(std::string(who) + ": order must be 0..3");
}

PmfBundle pack_jets(const std::vector<Jet>& js, int N, int order) {
  PmfBundle out;
  out.rows = Eigen::MatrixXd::Zero(order + 1, N + 1);
  for (int j = 0; j < int(js.size()) && j <= N; ++j)
    for (int ell = 0; ell <= order; ++ell) out.rows(ell, j) = js[j].d[ell];
  return out;
}

}  // namespace

PmfBundle poisson_pmf_bundle(const Jet& lambda, int N, int order) {
  check_bundle_order(order, "poisson_pmf_bundle");
  if (N < 0) throw ContractViolation("poisson_pmf_bundle: N < 0");
  if (lambda.value() < 0.0)
    throw ModelInvariantViolated("poisson_pmf_bundle: negative mean");
  std::vector<Jet> js(N + 1);
  js[0] = jet_exp(-lambda);
  for (int j = 1; j <= N; ++j) js[j] = js[j - 1] * lambda * (1.0 / j);
  return pack_jets(js, N, order);
}

PmfBundle binomial_pmf_bundle(const Jet& alpha, int count, int N, int order) {
  check_bundle_order(order, "binomial_pmf_bundle");
  if (N < 0 || count < 0)
    throw ContractViolation("binomial_pmf_bundle: negative size");
  if (alpha.value() < 0.0 || alpha.value() > 1.0)
    throw ModelInvariantViolated(
        "binomial_pmf_bundle: success probability outside [0,1]");
  // count-fold convolution of (1-alpha, alpha); entries above N may be
  // dropped, they only feed states beyond the truncation.
  const Jet q = 1.0 - alpha;
  std::vector<Jet> cur(1, Jet::constant(1.0));
  for (int c = 0; c < count; ++c) {
    const int newlen = std::min(int(cur.size()) + 1, N + 1);
    std::vector<Jet> nxt(newlen);
    for (int j = 0; j < int(cur.size()); ++j) {
      if (j < newlen) nxt[j] += cur[j] * q;
      if (j + 1 < newlen) nxt[j + 1] += cur[j] * alpha;
    }
    cur = std::move(nxt);
  }
  return pack_jets(cur, N, order);
}

PmfBundle conv_truncated(const PmfBundle& a, const PmfBundle& b) {
  const int order = std::min(a.order(), b.order());
  const int N = std::max(a.top(), b.top());
  PmfBundle out;
  out.rows = Eigen::MatrixXd::Zero(order + 1, N + 1);
  for (int i = 0; i <= a.top(); ++i) {
    for (int j = 0; j <= b.top() && i + j <= N; ++j) {
      for (int ell = 0; ell <= order; ++ell) {
        double acc = 0.0;
        for (int s = 0; s <= ell; ++s)
          acc += binom_small(ell, s) * a.rows(s, i) * b.rows(ell - s, j);
        out.rows(ell, i + j) += acc;
      }
    }
  }
  return out;
}

double fold_tail_into_top(PmfBundle& pmf) {
  const int order = pmf.order(), N = pmf.top();
  double absorbed = 0.0;
  for (int ell = 0; ell <= order; ++ell) {
    Kahan acc;
    for (int j = 0; j <= N; ++j) acc.add(pmf.rows(ell, j));
    const double rem = (ell == 0 ? 1.0 : 0.0) - acc.s;
    pmf.rows(ell, N) += rem;
    if (ell == 0) absorbed = std::max(rem, 0.0);
  }
  return absorbed;
}

// ---------------------------------------------------------------------------
// TvAR mean
// ---------------------------------------------------------------------------

Jet TvarMean::jet(double u, const std::vector<double>& lags) const {
  if (int(lags.size()) != lag_order())
    throw ContractViolation("TvarMean: lag vector has wrong length");
  if (type == Type::Linear) {
    Jet r;
    for (std::size_t i = 0; i < a.size(); ++i) r += a[i].jet(u) * lags[i];
    return r;
  }
  const double x = lags[0];
  return (x >= 0.0 ? a_plus.jet(u) : a_minus.jet(u)) * x;
}

double TvarMean::value(double u, const std::vector<double>& lags) const {
  return jet(u, lags).value();
}

double TvarMean::slope_bound(double u) const {
  if (type == Type::Linear) {
    double s = 0.0;
    for (const auto& c : a) s += std::abs(c.value(u));
    return s;
  }
  return std::max(std::abs(a_plus.value(u)), std::abs(a_minus.value(u)));
}

// ---------------------------------------------------------------------------
// TvAR discretizer
// ---------------------------------------------------------------------------

namespace {

// u-jet of the transition density y -> f((y - m)/sigma)/sigma for one row.
struct DensityEval {
  Jet m, sig;
  const NoiseDensity* f;

  Jet at(double y) const {
    const Jet z = (Jet::constant(y) - m) / sig;
    const double zv = z.value();
    const std::array<double, 4> outer = {
        f->pdf_deriv(zv, 0), f->pdf_deriv(zv, 1), f->pdf_deriv(zv, 2),
        f->pdf_deriv(zv, 3)};
    return jet_compose(outer, z) / sig;
  }
};

Jet integrate_cell(const DensityEval& de, double lo, double hi) {
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  Jet acc;
  for (int q = 0; q < 5; ++q)
    acc += de.at(mid + half * kGL5x[q]) * (kGL5w[q] * half);
  return acc;
}

// int_{-inf}^{c} via y = c - t/(1-t): the decay of the density tames the
// Jacobian 1/(1-t)^2.
Jet integrate_left_tail(const DensityEval& de, double c) {
  Jet acc;
  const int panels = 24;
  for (int pn = 0; pn < panels; ++pn) {
    const double mid = (pn + 0.5) / panels, half = 0.5 / panels;
    for (int q = 0; q < 7; ++q) {
      const double t = mid + half * kGL7x[q];
      const double om = 1.0 - t;
      acc += de.at(c - t / om) * (kGL7w[q] * half / (om * om));
    }
  }
  return acc;
}

void tvar_check_u(const TvarConfig& cfg, double u) {
  if (cfg.mean.slope_bound(u) >= 1.0 - 1e-9) {
    std::ostringstream os;
    os << "tvar: contraction sum " << cfg.mean.slope_bound(u) << " >= 1 at u="
       << u;
    throw ModelInvariantViolated(os.str());
  }
  if (cfg.sigma.value(u) <= 1e-8) {
    std::ostringstream os;
    os << "tvar: sigma(u) = " << cfg.sigma.value(u) << " not positive at u="
       << u;
    throw ModelInvariantViolated(os.str());
  }
}

std::vector<Eigen::MatrixXd> tvar_rows(const TvarConfig& cfg,
                                       const std::vector<double>& nodes,
                                       std::size_t rows, double u, int order) {
  tvar_check_u(cfg, u);
  const int bins = int(nodes.size());
  const int p = cfg.mean.lag_order();
  const double h2 = 0.5 * (nodes[1] - nodes[0]);
  std::vector<Eigen::MatrixXd> mats(
      order + 1, Eigen::MatrixXd::Zero(Eigen::Index(rows), bins));
  double worst = 0.0;
  std::size_t worst_row = 0;
  std::vector<double> lags(p);
  std::vector<Jet> cells(bins);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t rest = r;
    for (int i = 0; i < p; ++i) {  // digit i = lag i+1
      lags[i] = nodes[rest % bins];
      rest /= bins;
    }
    DensityEval de{cfg.mean.jet(u, lags), cfg.sigma.jet(u), &cfg.noise};
    for (int j = 0; j < bins; ++j)
      cells[j] = integrate_cell(de, nodes[j] - h2, nodes[j] + h2);
    const Jet tail = integrate_left_tail(de, nodes[0] - h2);
    cells[0] += tail;
    double loss = tail.d[0];
    for (int ell = 0; ell <= order; ++ell) {
      Kahan acc;
      for (int j = 0; j < bins; ++j) acc.add(cells[j].d[ell]);
      const double rem = (ell == 0 ? 1.0 : 0.0) - acc.s;
      cells[bins - 1].d[ell] += rem;
      if (ell == 0) loss += std::max(rem, 0.0);
    }
    for (int ell = 0; ell <= order; ++ell)
      for (int j = 0; j < bins; ++j)
        mats[ell](Eigen::Index(r), j) = cells[j].d[ell];
    if (loss > worst) {
      worst = loss;
      worst_row = r;
    }
  }
  if (worst > cfg.disc.absorption_tol) {
    std::ostringstream os;
    os << "tvar: row " << worst_row << " absorbs " << worst
       << " at the grid edges (tol " << cfg.disc.absorption_tol
       << "); widen the grid or refine the bins";
    throw TruncationTooCoarse(os.str());
  }
  return mats;
}

}  // namespace

KernelFamily build_tvar(const TvarConfig& cfg) {
  if (cfg.k < 0 || cfg.k > Jet::kMax)
    throw ConfigError("tvar: carried order must be 0..3");
  if (cfg.disc.bins < 3) throw ConfigError("tvar: need at least 3 bins");
  if (!(cfg.disc.L > 0.0)) throw ConfigError("tvar: grid half-width <= 0");
  if (cfg.mean.type == TvarMean::Type::Linear && cfg.mean.a.empty())
    throw ConfigError("tvar: no lag coefficients");
  const double d1 = cfg.d0 - cfg.qprime * cfg.k;
  if (d1 < 0.0)
    throw ModelInvariantViolated(
        "tvar: top weight exponent too small for the carried order");
  for (int i = 0; i <= 100; ++i) tvar_check_u(cfg, i / 100.0);
  for (int s = 0; s <= cfg.k; ++s) {
    const MomentCheck mc = noise_moment_check(cfg.noise, cfg.d0, s);
    if (!mc.finite) {
      std::ostringstream os;
      os << "tvar: int |y|^" << cfg.d0 << " |f^(" << s
         << ")| diverges for noise " << cfg.noise.name()
         << " (tail ratio " << mc.tail_ratio << ")";
      throw ModelInvariantViolated(os.str());
    }
  }

  std::vector<double> nodes(cfg.disc.bins);
  const double delta = 2.0 * cfg.disc.L / (cfg.disc.bins - 1);
  for (int i = 0; i < cfg.disc.bins; ++i) nodes[i] = -cfg.disc.L + i * delta;

  POrderFamily pf;
  pf.base = StateSpace::grid(nodes);
  pf.p = cfg.mean.lag_order();
  pf.order_k = cfg.k;
  const std::size_t rows =
      tuple_count(cfg.disc.bins, pf.p, 1000000, "build_tvar");
  pf.rows = [cfg, nodes, rows](double u, int order) {
    return tvar_rows(cfg, nodes, rows, u, order);
  };
  for (int s = 0; s <= cfg.k; ++s) {
    Eigen::VectorXd w(cfg.disc.bins);
    const double expo = d1 + cfg.qprime * s;
    for (int i = 0; i < cfg.disc.bins; ++i)
      w(i) = std::pow(1.0 + std::abs(nodes[i]), expo);
    std::ostringstream os;
    os << "(1+|x|)^" << expo;
    pf.base_weights.emplace_back(std::move(w), os.str());
  }
  KernelFamily fam = p_order_vectorize(pf);
  // Trial evaluation where the mean pushes hardest, so a grid that is too
  // narrow fails at build time, not deep inside a sweep.
  double worst_u = 0.0, worst_slope = -1.0;
  for (double u : {0.0, 0.5, 1.0})
    if (cfg.mean.slope_bound(u) > worst_slope) {
      worst_slope = cfg.mean.slope_bound(u);
      worst_u = u;
    }
  (void)fam.eval(worst_u);
  return fam;
}

// ---------------------------------------------------------------------------
// INAR / INARCH
// ---------------------------------------------------------------------------

namespace {

void inar_validate(const InarConfig& cfg) {
  if (cfg.p < 1) throw ConfigError("inar: lag order must be >= 1");
  if (int(cfg.thinning.size()) != cfg.p)
    throw ConfigError("inar: need one thinning spec per lag");
  if (cfg.k < 0 || cfg.k > Jet::kMax)
    throw ConfigError("inar: carried order must be 0..3");
  if (cfg.d1 < 0.0) throw ConfigError("inar: weight exponent must be >= 0");
  for (int i = 0; i <= 20; ++i) {
    const double u = i / 20.0;
    if (cfg.immigration_mean.value(u) < 0.0)
      throw ModelInvariantViolated("inar: negative immigration mean");
    for (const auto& th : cfg.thinning) {
      const double a = th.coeff.value(u);
      if (th.type == ThinningSpec::Type::Bernoulli && (a < 0.0 || a > 1.0))
        throw ModelInvariantViolated(
            "inar: Bernoulli thinning coefficient outside [0,1]");
      if (th.type == ThinningSpec::Type::Poisson && a < 0.0)
        throw ModelInvariantViolated(
            "inar: negative Poisson thinning coefficient");
    }
  }
}

// Row pmf for one lag tuple: immigration convolved with each thinned lag.
PmfBundle inar_row_pmf(const InarConfig& cfg, double u,
                       const std::vector<int>& lags, int N, int order) {
  PmfBundle acc = poisson_pmf_bundle(cfg.immigration_mean.jet(u), N, order);
  for (int i = 0; i < cfg.p; ++i) {
    if (lags[i] == 0) continue;  // thinning of 0 is the point mass at 0
    const Jet a = cfg.thinning[i].coeff.jet(u);
    const PmfBundle t =
        cfg.thinning[i].type == ThinningSpec::Type::Bernoulli
            ? binomial_pmf_bundle(a, lags[i], N, order)
            : poisson_pmf_bundle(a * double(lags[i]), N, order);
    acc = conv_truncated(acc, t);
  }
  return acc;
}

POrderFamily inar_row_family(const InarConfig& cfg, int N) {
  POrderFamily pf;
  std::vector<double> vals(N + 1);
  for (int i = 0; i <= N; ++i) vals[i] = double(i);
  pf.base = StateSpace::grid(vals);
  pf.p = cfg.p;
  pf.order_k = cfg.k;
  const std::size_t rows = tuple_count(N + 1, cfg.p, 1000000, "build_inar");
  pf.rows = [cfg, N, rows](double u, int order) {
    std::vector<Eigen::MatrixXd> mats(
        order + 1, Eigen::MatrixXd::Zero(Eigen::Index(rows), N + 1));
    double worst = 0.0;
    std::size_t worst_row = 0;
    std::vector<int> lags(cfg.p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t rest = r;
      for (int i = 0; i < cfg.p; ++i) {
        lags[i] = int(rest % std::size_t(N + 1));
        rest /= std::size_t(N + 1);
      }
      PmfBundle pmf = inar_row_pmf(cfg, u, lags, N, order);
      const double loss = fold_tail_into_top(pmf);
      if (loss > worst) {
        worst = loss;
        worst_row = r;
      }
      for (int ell = 0; ell <= order; ++ell)
        mats[ell].row(Eigen::Index(r)) = pmf.rows.row(ell);
    }
    if (worst > cfg.loss_tol) {
      std::ostringstream os;
      os << "inar: row " << worst_row << " loses mass " << worst
         << " beyond truncation " << N << " (tol " << cfg.loss_tol << ")";
      throw TruncationTooCoarse(os.str());
    }
    return mats;
  };
  for (int s = 0; s <= cfg.k; ++s) {
    Eigen::VectorXd w(N + 1);
    const double expo = cfg.d1 + s;
    for (int i = 0; i <= N; ++i) w(i) = std::pow(1.0 + i, expo);
    std::ostringstream os;
    os << "(1+x)^" << expo;
    pf.base_weights.emplace_back(std::move(w), os.str());
  }
  return pf;
}

double inar_worst_row_loss(const InarConfig& cfg, int N) {
  std::vector<int> lags(cfg.p, N);
  double worst = 0.0;
  for (int i = 0; i <= 4; ++i) {
    PmfBundle pmf = inar_row_pmf(cfg, i / 4.0, lags, N, 0);
    worst = std::max(worst, fold_tail_into_top(pmf));
  }
  return worst;
}

}  // namespace

int suggest_truncation(const InarConfig& cfg) {
  inar_validate(cfg);
  double amax = 0.0, mumax = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double u = i / 20.0;
    double s = 0.0;
    for (const auto& th : cfg.thinning) s += std::abs(th.coeff.value(u));
    amax = std::max(amax, s);
    mumax = std::max(mumax, cfg.immigration_mean.value(u));
  }
  if (amax >= 1.0)
    throw ModelInvariantViolated(
        "inar: total thinning load >= 1, no stationary regime");
  const double mstar = mumax / (1.0 - amax);
  int N = std::max(8, int(std::ceil(mstar + 8.0 * std::sqrt(mstar + 1.0))) + 8);
  while (N <= 400) {
    if (inar_worst_row_loss(cfg, N) <= cfg.loss_tol) {
      // Worst row is fine; confirm the stationary law stays off the top.
      InarConfig c = cfg;
      c.truncation_N = N;
      const KernelFamily fam = build_inar(c);
      const Measure pi = invariant_measure(fam.eval(0.5));
      double top = 0.0;
      const std::size_t m = std::size_t(N + 1);
      for (Eigen::Index x = 0; x < pi.size(); ++x)
        if (std::size_t(x) % m >= m - 2) top += pi(x);
      if (top <= 1e-9) return N;
    }
    N += N / 4 + 4;
  }
  throw TruncationTooCoarse(
      "inar: no truncation up to 400 meets the loss target");
}

KernelFamily build_inar(const InarConfig& cfg) {
  inar_validate(cfg);
  const int N =
      cfg.truncation_N > 0 ? cfg.truncation_N : suggest_truncation(cfg);
  KernelFamily fam = p_order_vectorize(inar_row_family(cfg, N));
  if (cfg.truncation_N > 0) {
    // A caller-chosen truncation may be too coarse; fail at build time.
    double worst = 0.0, worst_u = 0.0;
    for (double u : {0.0, 0.5, 1.0}) {
      double load = cfg.immigration_mean.value(u);
      for (const auto& th : cfg.thinning) load += std::abs(th.coeff.value(u));
      if (load > worst) {
        worst = load;
        worst_u = u;
      }
    }
    (void)fam.eval(worst_u);
  }
  return fam;
}

namespace {

InarConfig inarch_to_inar(const InarchConfig& cfg) {
  InarConfig ic;
  ic.p = int(cfg.alpha.size());
  for (const auto& a : cfg.alpha)
    ic.thinning.push_back({ThinningSpec::Type::Poisson, a});
  ic.immigration_mean = cfg.alpha0;
  ic.truncation_N = cfg.truncation_N;
  ic.k = cfg.k;
  ic.d1 = cfg.d1;
  ic.loss_tol = cfg.loss_tol;
  return ic;
}

}  // namespace

KernelFamily build_inarch(const InarchConfig& cfg) {
  if (cfg.alpha.empty()) throw ConfigError("inarch: no lag coefficients");
  return build_inar(inarch_to_inar(cfg));
}

PmfBundle inarch_direct_row(const InarchConfig& cfg, double u,
                            const std::vector<int>& lags, int order) {
  if (cfg.truncation_N <= 0)
    throw ContractViolation("inarch_direct_row: set truncation_N");
  if (lags.size() != cfg.alpha.size())
    throw ContractViolation("inarch_direct_row: lag count mismatch");
  // Poisson thinnings of a Poisson-conditional chain add up: the row is one
  // Poisson with rate alpha0 + sum alpha_i x_i.
  Jet rate = cfg.alpha0.jet(u);
  for (std::size_t i = 0; i < cfg.alpha.size(); ++i)
    rate += cfg.alpha[i].jet(u) * double(lags[i]);
  return poisson_pmf_bundle(rate, cfg.truncation_N, order);
}

// ---------------------------------------------------------------------------
// Doeblin family
// ---------------------------------------------------------------------------

Eigen::MatrixXd center_rows(Eigen::MatrixXd g, const Eigen::VectorXd& mu) {
  if (g.rows() != g.cols() || g.rows() != mu.size())
    throw ContractViolation("center_rows: dimension mismatch");
  for (Eigen::Index x = 0; x < g.rows(); ++x) {
    const double c = g.row(x).dot(mu.transpose());
    g.row(x).array() -= c;
  }
  return g;
}

double doeblin_density_floor(const DoeblinConfig& cfg) {
  return 1.0 - std::abs(cfg.amplitude) * cfg.g.cwiseAbs().maxCoeff();
}

KernelFamily build_doeblin(const DoeblinConfig& cfg) {
  const Eigen::Index m = cfg.base_measure.size();
  if (m == 0) throw ConfigError("doeblin: empty base measure");
  if (cfg.g.rows() != m || cfg.g.cols() != m)
    throw ConfigError("doeblin: perturbation shape mismatch");
  if (cfg.k < 0 || cfg.k > Jet::kMax)
    throw ConfigError("doeblin: carried order must be 0..3");
  if (cfg.base_measure.minCoeff() <= 0.0)
    throw ModelInvariantViolated("doeblin: base measure must be positive");
  if (std::abs(cfg.base_measure.sum() - 1.0) > 1e-12)
    throw ModelInvariantViolated("doeblin: base measure must sum to 1");
  for (Eigen::Index x = 0; x < m; ++x) {
    if (std::abs(cfg.g.row(x).dot(cfg.base_measure.transpose())) > 1e-10)
      throw ModelInvariantViolated(
          "doeblin: perturbation rows must be centered against the base "
          "measure (use center_rows)");
  }
  const double floor = doeblin_density_floor(cfg);
  if (floor <= 0.0) {
    std::ostringstream os;
    os << "doeblin: density floor " << floor << " <= 0";
    throw ModelInvariantViolated(os.str());
  }

  StateSpace space = StateSpace::indexed(int(m));
  std::vector<WeightFunction> weights(cfg.k + 1,
                                      WeightFunction::ones(int(m)));
  const Eigen::VectorXd mu = cfg.base_measure;
  const Eigen::MatrixXd g = cfg.g;
  const double amp = cfg.amplitude;
  auto builder = [mu, g, amp, m](double u, int order) {
    const Jet s = jet_sin(Jet(2.0 * kPi * u, 2.0 * kPi));
    std::vector<Eigen::MatrixXd> mats(order + 1, Eigen::MatrixXd(m, m));
    for (int ell = 0; ell <= order; ++ell)
      for (Eigen::Index x = 0; x < m; ++x)
        for (Eigen::Index y = 0; y < m; ++y)
          mats[ell](x, y) =
              ((ell == 0 ? 1.0 : 0.0) + amp * s.d[ell] * g(x, y)) * mu(y);
    return mats;
  };
  return KernelFamily(std::move(space), cfg.k, std::move(weights),
                      std::move(builder));
}

// ---------------------------------------------------------------------------
// random-environment logistic chain
// ---------------------------------------------------------------------------

KernelFamily build_random_env(const RandomEnvConfig& cfg) {
  if (cfg.env_bins < 2) throw ConfigError("random_env: need >= 2 env bins");
  if (!(std::abs(cfg.env_rho) < 1.0))
    throw ModelInvariantViolated("random_env: |rho| must be < 1");
  if (!(cfg.env_sigma > 0.0))
    throw ModelInvariantViolated("random_env: sigma must be positive");
  if (cfg.k < 0 || cfg.k > Jet::kMax)
    throw ConfigError("random_env: carried order must be 0..3");

  const int nb = cfg.env_bins;
  std::vector<double> z(nb);
  const double delta = 2.0 * cfg.env_L / (nb - 1);
  for (int i = 0; i < nb; ++i) z[i] = -cfg.env_L + i * delta;

  // Environment kernel: exact Gaussian cell masses, edge cells take the
  // tails, so rows sum to 1 up to a few ulps.
  Eigen::MatrixXd E(nb, nb);
  for (int i = 0; i < nb; ++i) {
    const double mean = cfg.env_rho * z[i];
    for (int j = 0; j < nb; ++j) {
      const double lo = j == 0 ? -std::numeric_limits<double>::infinity()
                               : z[j] - 0.5 * delta;
      const double hi = j == nb - 1 ? std::numeric_limits<double>::infinity()
                                    : z[j] + 0.5 * delta;
      const double cl = std::isinf(lo) ? 0.0 : normal_cdf((lo - mean) / cfg.env_sigma);
      const double ch = std::isinf(hi) ? 1.0 : normal_cdf((hi - mean) / cfg.env_sigma);
      E(i, j) = ch - cl;
    }
  }

  StateSpace space = StateSpace::product(StateSpace::indexed(2),
                                         StateSpace::grid(z));
  std::vector<WeightFunction> weights(cfg.k + 1,
                                      WeightFunction::ones(2 * nb));
  const ScalarCurve a0 = cfg.a0, a1 = cfg.a1, beta = cfg.beta;
  const std::vector<double> zn = z;
  auto builder = [a0, a1, beta, zn, E, nb](double u, int order) {
    const int M = 2 * nb;
    std::vector<Eigen::MatrixXd> mats(order + 1,
                                      Eigen::MatrixXd::Zero(M, M));
    for (int y = 0; y < 2; ++y) {
      for (int zi = 0; zi < nb; ++zi) {
        const Jet arg = a0.jet(u) + a1.jet(u) * double(y) + beta.jet(u) * zn[zi];
        const double w = stable_sigmoid(arg.value());
        const double w1 = w * (1.0 - w);
        const Jet p1 = jet_compose(
            {w, w1, w1 * (1.0 - 2.0 * w), w1 * (1.0 - 6.0 * w + 6.0 * w * w)},
            arg);
        const Jet p0 = 1.0 - p1;
        const int row = y * nb + zi;
        for (int ell = 0; ell <= order; ++ell)
          for (int zj = 0; zj < nb; ++zj) {
            mats[ell](row, zj) = p0.d[ell] * E(zi, zj);
            mats[ell](row, nb + zj) = p1.d[ell] * E(zi, zj);
          }
      }
    }
    return mats;
  };
  return KernelFamily(std::move(space), cfg.k, std::move(weights),
                      std::move(builder));
}

// ---------------------------------------------------------------------------
// p-order vectorization
// ---------------------------------------------------------------------------

KernelFamily p_order_vectorize(const POrderFamily& pf, std::size_t cap) {
  const int m = pf.base.size();
  if (pf.p < 1) throw ContractViolation("p_order_vectorize: p must be >= 1");
  if (int(pf.base_weights.size()) != pf.order_k + 1)
    throw ContractViolation("p_order_vectorize: one weight per grade");
  const std::size_t M = tuple_count(m, pf.p, cap, "p_order_vectorize");
  if (M * M > std::size_t(50000000))
    throw ProductSpaceTooLarge(
        "p_order_vectorize: dense tuple kernel is beyond the dense-matrix "
        "budget");

  if (pf.p == 1) {
    return KernelFamily(pf.base, pf.order_k, pf.base_weights, pf.rows,
                        BundleSource::Analytic, pf.row_tol);
  }

  StateSpace space = StateSpace::power(pf.base, pf.p);
  std::vector<WeightFunction> weights;
  for (int s = 0; s <= pf.order_k; ++s) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(Eigen::Index(M));
    for (std::size_t x = 0; x < M; ++x) {
      double sum = 0.0;
      std::size_t rest = x;
      for (int i = 0; i < pf.p; ++i) {
        sum += pf.base_weights[s](int(rest % std::size_t(m)));
        rest /= std::size_t(m);
      }
      w(Eigen::Index(x)) = sum;
    }
    weights.emplace_back(std::move(w), pf.base_weights[s].name + "_sum");
  }

  const std::size_t strip = M / std::size_t(m);
  auto rows = pf.rows;
  auto builder = [rows, m, M, strip](double u, int order) {
    const auto R = rows(u, order);
    std::vector<Eigen::MatrixXd> out(
        order + 1, Eigen::MatrixXd::Zero(Eigen::Index(M), Eigen::Index(M)));
    for (std::size_t x = 0; x < M; ++x) {
      const std::size_t shifted = (x % strip) * std::size_t(m);
      for (int ell = 0; ell <= order; ++ell)
        for (int y = 0; y < m; ++y)
          out[ell](Eigen::Index(x), Eigen::Index(shifted + y)) =
              R[ell](Eigen::Index(x), y);
    }
    return out;
  };
  return KernelFamily(std::move(space), pf.order_k, std::move(weights),
                      std::move(builder), BundleSource::Analytic, pf.row_tol);
}

// ---------------------------------------------------------------------------
// standing-condition report
// ---------------------------------------------------------------------------

ConditionReport sc_condition_report(const KernelFamily& fam, int window_m,
                                    double eps, int u_samples) {
  if (window_m < 1) throw ContractViolation("sc report: window size >= 1");
  if (u_samples < 1) throw ContractViolation("sc report: need >= 1 sample");
  const int m = fam.space().size();
  const int k = fam.order();
  const WeightFunction& Vtop = fam.weight(k);

  // Window products P = Q_{u_1} ... Q_{u_window} with all u_i within eps of
  // the window center.
  std::vector<Eigen::VectorXd> PV;
  std::vector<Eigen::MatrixXd> prods;
  for (int c = 0; c < u_samples; ++c) {
    const double center =
        u_samples == 1 ? 0.5 : double(c) / double(u_samples - 1);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(m, m);
    for (int i = 0; i < window_m; ++i) {
      double off = window_m == 1
                       ? 0.0
                       : -eps + 2.0 * eps * double(i) / double(window_m - 1);
      const double ui = std::clamp(center + off, 0.0, 1.0);
      P = P * fam.eval(ui).matrix();
    }
    prods.push_back(P);
    PV.push_back(P * Vtop.v);
  }

  ConditionReport rep;
  // Drift search: smallest lambda on a grid for which the induced small set
  // carries a positive minorization mass, uniformly over the window centers.
  bool found = false;
  double best_lambda = 1.0, best_b = 0.0, best_r = 0.0, best_eta = 0.0;
  int best_cset = 0;
  for (int li = 1; li <= 19 && !found; ++li) {
    const double lambda = li * 0.05;
    double b = 0.0;
    for (const auto& pv : PV)
      for (int x = 0; x < m; ++x)
        b = std::max(b, pv(x) - lambda * Vtop(x));
    double r = 2.0 * b / (1.0 - lambda) * 1.05;
    if (r < Vtop.v.minCoeff()) r = Vtop.v.minCoeff() * 1.0001;
    std::vector<int> C;
    for (int x = 0; x < m; ++x)
      if (Vtop(x) <= r) C.push_back(x);
    if (C.empty()) continue;
    double eta = std::numeric_limits<double>::infinity();
    for (const auto& P : prods) {
      double e = 0.0;
      for (int y = 0; y < m; ++y) {
        double cmin = std::numeric_limits<double>::infinity();
        for (int x : C) cmin = std::min(cmin, P(x, y));
        e += cmin;
      }
      eta = std::min(eta, e);
    }
    if (eta > 1e-12) {
      found = true;
      best_lambda = lambda;
      best_b = b;
      best_r = r;
      best_eta = eta;
      best_cset = int(C.size());
    }
  }
  {
    ConditionCheck drift;
    drift.name = "window_drift";
    drift.pass = found;
    drift.value = best_lambda;
    drift.threshold = 1.0;
    std::ostringstream os;
    os << "b=" << best_b << " r=" << best_r << " |C|=" << best_cset
       << " window=" << window_m << " eps=" << eps;
    drift.detail = os.str();
    rep.checks.push_back(drift);

    ConditionCheck minor;
    minor.name = "window_minorization";
    minor.pass = found && best_eta > 1e-12;
    minor.value = best_eta;
    minor.threshold = 0.0;
    minor.detail = "eta = total mass of the small-set minorization";
    rep.checks.push_back(minor);
  }

  // Graded operator norms of the kernel derivatives: the ell-th derivative
  // maps grade s+ell into grade s with norm max_x sum_y V_s(y)|Q^(ell)(x,y)|
  // / V_{s+ell}(x).
  for (int ell = 1; ell <= k; ++ell) {
    double val = 0.0;
    for (int c = 0; c < u_samples; ++c) {
      const double u =
          u_samples == 1 ? 0.5 : double(c) / double(u_samples - 1);
      const Eigen::MatrixXd D = fam.deriv(u, ell);
      for (int s = 0; s + ell <= k; ++s) {
        const WeightFunction& Vs = fam.weight(s);
        const WeightFunction& Vsl = fam.weight(s + ell);
        for (int x = 0; x < m; ++x) {
          double row = 0.0;
          for (int y = 0; y < m; ++y) row += Vs(y) * std::abs(D(x, y));
          val = std::max(val, row / Vsl(x));
        }
      }
    }
    ConditionCheck ck;
    ck.name = "deriv_norm_" + std::to_string(ell);
    ck.pass = std::isfinite(val) && val < 1e8;
    ck.value = val;
    ck.threshold = 1e8;
    ck.detail = "max over grades s <= " + std::to_string(k - ell);
    rep.checks.push_back(ck);
  }

  rep.all_pass = true;
  for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
  return rep;
}

WeightFunction exp_weight(const StateSpace& space, double kappa_prime) {
  if (kappa_prime < 0.0)
    throw ContractViolation("exp_weight: negative exponent");
  Eigen::VectorXd w(space.size());
  for (int i = 0; i < space.size(); ++i) {
    w(i) = std::exp(kappa_prime * std::abs(space.value(i)));
    if (!std::isfinite(w(i)))
      throw ContractViolation("exp_weight: overflow, reduce kappa'");
  }
  std::ostringstream os;
  os << "exp(" << kappa_prime << "|x|)";
  return WeightFunction(std::move(w), os.str());
}

// ---------------------------------------------------------------------------
// native samplers
// ---------------------------------------------------------------------------

ModelSampler tvar_sampler(const TvarConfig& cfg) {
  const int p = cfg.mean.lag_order();
  ModelSampler s;
  s.lag_order = p;
  s.integer_states = false;
  s.default_burn_in = 300;
  s.initial = [p](RngStream&) { return std::vector<double>(p, 0.0); };
  if (cfg.mean.type == TvarMean::Type::Linear && p == 1 &&
      cfg.noise.type == NoiseDensity::Type::Gaussian) {
    // Stationary start in closed form at u = 0.
    const double a = cfg.mean.a[0].value(0.0);
    const double sd = cfg.sigma.value(0.0) / std::sqrt(1.0 - a * a);
    s.initial = [sd](RngStream& g) {
      return std::vector<double>{draw_normal(g) * sd};
    };
    s.default_burn_in = 0;
  }
  const TvarMean mean = cfg.mean;
  const ScalarCurve sigma = cfg.sigma;
  const NoiseDensity noise = cfg.noise;
  s.step = [mean, sigma, noise](const std::vector<double>& lags, double u,
                                RngStream& g) {
    return mean.value(u, lags) + sigma.value(u) * noise.sample(g);
  };
  return s;
}

ModelSampler inar_sampler(const InarConfig& cfg) {
  inar_validate(cfg);
  ModelSampler s;
  s.lag_order = cfg.p;
  s.integer_states = true;
  s.default_burn_in = 300;
  s.initial = [p = cfg.p](RngStream&) { return std::vector<double>(p, 0.0); };
  const auto thinning = cfg.thinning;
  const ScalarCurve imm = cfg.immigration_mean;
  s.step = [thinning, imm](const std::vector<double>& lags, double u,
                           RngStream& g) {
    long total = draw_poisson(g, imm.value(u));
    for (std::size_t i = 0; i < thinning.size(); ++i) {
      const long x = std::lround(lags[i]);
      const double a = thinning[i].coeff.value(u);
      total += thinning[i].type == ThinningSpec::Type::Bernoulli
                   ? draw_binomial(g, x, a)
                   : draw_poisson(g, a * double(x));
    }
    return double(total);
  };
  return s;
}

ModelSampler inarch_sampler(const InarchConfig& cfg) {
  return inar_sampler(inarch_to_inar(cfg));
}

}  // namespace locstat
