#include "labplan/analyzer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "labplan/nelder_mead.hpp"

namespace labplan::analyzer {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double rss_of(const PourbaixParams& p, const Dataset& d) {
  double rss = 0;
  for (const auto& pt : d) {
    const double r = pt.eV - mu_ev(p, pt.pH);
    rss += r * r;
  }
  return rss;
}

// Log-likelihood with sigma at its conditional optimum.
double profiled_ll(const PourbaixParams& p, const Dataset& d, double* sigma_out = nullptr) {
  const double n = static_cast<double>(d.size());
  const double rss = rss_of(p, d);
  const double sigma = std::max(kSigmaFloor, std::sqrt(rss / n));
  if (sigma_out) *sigma_out = sigma;
  return -n * (std::log(sigma) + kLogSqrt2Pi) - rss / (2 * sigma * sigma);
}

PourbaixParams from_vector(const std::vector<double>& x) {
  PourbaixParams p;
  p.pKa1 = std::min(x[0], x[1]);
  p.pKa2 = std::max(x[0], x[1]);
  p.k = x[2];
  p.E_inf = x[3];
  return p;
}

// Exact least squares for a fixed assignment of points to the three regions.
// Unknowns (a, b, c, e) = (E_inf, k, k*pKa2, k*pKa1).
std::optional<PourbaixParams> solve_partition(const Dataset& d, const std::vector<int>& region) {
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pH = d[static_cast<std::size_t>(i)].pH;
    y(i) = d[static_cast<std::size_t>(i)].eV;
    A(i, 0) = 1;
    switch (region[static_cast<std::size_t>(i)]) {
      case 1:
        A(i, 1) = 2 * pH;
        A(i, 2) = -1;
        A(i, 3) = -1;
        break;
      case 2:
        A(i, 1) = pH;
        A(i, 2) = -1;
        break;
      default:
        break;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < 4) return std::nullopt;
  const Eigen::VectorXd sol = qr.solve(y);
  if (std::fabs(sol(1)) < 1e-12) return std::nullopt;
  PourbaixParams p;
  p.E_inf = sol(0);
  p.k = sol(1);
  p.pKa2 = sol(2) / sol(1);
  p.pKa1 = sol(3) / sol(1);
  if (!(p.pKa1 <= p.pKa2)) return std::nullopt;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double pH = d[i].pH;
    const int r = pH < p.pKa1 ? 1 : (pH <= p.pKa2 ? 2 : 3);
    if (r != region[i]) return std::nullopt;
  }
  return p;
}

std::vector<int> regions_of(const PourbaixParams& p, const Dataset& d) {
  std::vector<int> r;
  for (const auto& pt : d) r.push_back(pt.pH < p.pKa1 ? 1 : (pt.pH <= p.pKa2 ? 2 : 3));
  return r;
}

std::uint64_t block_seed(std::uint64_t seed, std::uint64_t block) {
  // splitmix64 finalizer over (seed, block)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (block + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

constexpr double kSqrt1_2 = 0.70710678118654752440;

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kSqrt1_2); }

// log(Phi(b) - Phi(a)) for a <= b, taking the difference in whichever tail keeps digits.
double log_normal_mass(double a, double b) {
  const double z = a > 0 ? 0.5 * (std::erfc(a * kSqrt1_2) - std::erfc(b * kSqrt1_2)) : norm_cdf(b) - norm_cdf(a);
  return z > 0 ? std::log(z) : -std::numeric_limits<double>::infinity();
}

// Acklam's rational approximation plus one Halley step.
double norm_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double e[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  auto tail = [&](double q) {
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1);
  };
  double x;
  if (p < 0.02425) {
    x = tail(std::sqrt(-2 * std::log(p)));
  } else if (p > 1 - 0.02425) {
    x = -tail(std::sqrt(-2 * std::log1p(-p)));
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  const double u = (norm_cdf(x) - p) * std::sqrt(2 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1 + 0.5 * x * u);
}

// N(m, s^2) restricted to [lo, hi], by inversion. Upper tails are mirrored to the lower one.
double truncated_normal(double m, double s, double lo, double hi, double v) {
  const double a = (lo - m) / s;
  if (a > 0) return 2 * m - truncated_normal(m, s, 2 * m - hi, 2 * m - lo, 1 - v);
  const double pa = norm_cdf(a);
  const double pb = norm_cdf((hi - m) / s);
  if (!(pb > pa)) return std::clamp(m, lo, hi);
  return std::clamp(m + s * norm_quantile(pa + v * (pb - pa)), lo, hi);
}

// Unnormalized conditional density of log(sigma) on a grid, for drawing sigma.
struct SigmaGrid {
  double e_hat = 0;
  double u0 = 0;
  double h = 0;
  std::vector<double> g;    // density at the nodes, scaled to max 1
  std::vector<double> cum;  // trapezoid mass up to each node

  double sample(double v) const {
    if (g.size() < 2) return std::exp(u0);
    const double target = v * cum.back();
    auto j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), target) - cum.begin());
    j = std::clamp<std::size_t>(j, 1, g.size() - 1) - 1;
    // Density is linear across the cell; invert its integral.
    const double m = (target - cum[j]) / h;
    const double g0 = g[j];
    const double dg = g[j + 1] - g[j];
    double t = std::abs(dg) < 1e-12 * (g0 + 1e-300) ? m / g0 : (-g0 + std::sqrt(std::max(0.0, g0 * g0 + 2 * dg * m))) / dg;
    if (!std::isfinite(t)) t = 0.5;
    t = std::clamp(t, 0.0, 1.0);
    return std::exp(u0 + (static_cast<double>(j) + t) * h);
  }
};

// log of the likelihood integrated over E_inf and sigma within the box, with
// pKa1, pKa2 and k taken from p. Fills the grid used to draw sigma afterwards.
double collapse_e_sigma(const PourbaixParams& p, const Dataset& d, const PriorRanges& prior, SigmaGrid& grid) {
  const double n = static_cast<double>(d.size());
  PourbaixParams shape = p;
  shape.E_inf = 0;
  double mean = 0;
  std::vector<double> y(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mean += (y[i] = d[i].eV - mu_ev(shape, d[i].pH));
  mean /= n;
  double s0 = 0;
  for (double v : y) s0 += (v - mean) * (v - mean);
  grid.e_hat = mean;

  const double e_lo = prior.E_inf.low;
  const double e_hi = prior.E_inf.high;
  const double sn = std::sqrt(n);
  const double konst = -(n - 1) * kLogSqrt2Pi - 0.5 * std::log(n);
  auto log_g = [&](double u) {
    const double sigma = std::exp(u);
    return konst - (n - 2) * u - s0 / (2 * sigma * sigma) +
           log_normal_mass((e_lo - mean) * sn / sigma, (e_hi - mean) * sn / sigma);
  };

  const double ua = std::log(std::max(prior.sigma.low, kSigmaFloor));
  const double ub = std::log(std::max(prior.sigma.high, kSigmaFloor));
  grid.g.clear();
  grid.cum.clear();
  if (!(ub > ua)) {
    // Sigma pinned at the floor: only E_inf is integrated.
    grid.u0 = ua;
    grid.h = 0;
    return log_g(ua) - ua;
  }

  double lo = ua;
  double hi = ub;
  std::size_t K = 2048;
  const double dist = std::max({e_lo - mean, 0.0, mean - e_hi});
  const double s_eff = s0 + n * dist * dist;
  if (n >= 3 && s_eff > 0) {
    // The integrand is close to Gaussian in log sigma around this peak.
    const double peak = 0.5 * std::log(s_eff / (n - 2));
    const double w = 1 / std::sqrt(2 * (n - 2));
    lo = std::max(ua, peak - 12 * w);
    hi = std::min(ub, peak + 12 * w);
    if (!(hi > lo)) {
      lo = peak < ua ? ua : std::max(ua, ub - 24 * w);
      hi = peak < ua ? std::min(ub, ua + 24 * w) : ub;
    }
    K = 128;
  }
  grid.u0 = lo;
  grid.h = (hi - lo) / static_cast<double>(K);
  std::vector<double> lg(K + 1);
  for (std::size_t j = 0; j <= K; ++j) lg[j] = log_g(lo + static_cast<double>(j) * grid.h);
  const double mx = *std::max_element(lg.begin(), lg.end());
  if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
  grid.g.resize(K + 1);
  grid.cum.assign(K + 1, 0.0);
  double simpson = 0;
  for (std::size_t j = 0; j <= K; ++j) {
    grid.g[j] = std::exp(lg[j] - mx);
    simpson += grid.g[j] * (j == 0 || j == K ? 1.0 : (j % 2 ? 4.0 : 2.0));
    if (j > 0) grid.cum[j] = grid.cum[j - 1] + 0.5 * grid.h * (grid.g[j - 1] + grid.g[j]);
  }
  return mx + std::log(simpson * grid.h / 3);
}

}  // namespace

double param_value(const PourbaixParams& p, const std::string& name) {
  if (name == "pKa1") return p.pKa1;
  if (name == "pKa2") return p.pKa2;
  if (name == "k") return p.k;
  if (name == "E_inf") return p.E_inf;
  if (name == "sigma_eV") return p.sigma;
  throw AnalyzerError("unknown parameter '" + name + "'");
}

void set_param(PourbaixParams& p, const std::string& name, double v) {
  if (name == "pKa1") {
    p.pKa1 = v;
  } else if (name == "pKa2") {
    p.pKa2 = v;
  } else if (name == "k") {
    p.k = v;
  } else if (name == "E_inf") {
    p.E_inf = v;
  } else if (name == "sigma_eV") {
    p.sigma = v;
  } else {
    throw AnalyzerError("unknown parameter '" + name + "'");
  }
}

Dataset read_csv(const SourceText& src) {
  std::istringstream in(src.content);
  std::string line;
  int lineno = 0;
  bool header = false;
  Dataset d;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header) {
      std::string h;
      for (char c : line) {
        if (c != ' ' && c != '\t') h += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      if (h != "ph,ev") throw ParseError(src.origin, {lineno, 1}, "expected header 'pH,eV'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(src.origin, {lineno, 1}, "expected two comma-separated values");
    DataPoint p;
    try {
      std::size_t used = 0;
      const std::string a = line.substr(0, comma);
      const std::string b = line.substr(comma + 1);
      p.pH = std::stod(a, &used);
      if (a.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(a);
      p.eV = std::stod(b, &used);
      if (b.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(b);
    } catch (const std::exception&) {
      throw ParseError(src.origin, {lineno, 1}, "malformed number in '" + line + "'");
    }
    if (!std::isfinite(p.pH) || !std::isfinite(p.eV)) throw ParseError(src.origin, {lineno, 1}, "non-finite value");
    d.push_back(p);
  }
  if (!header) throw ParseError(src.origin, {1, 1}, "expected header 'pH,eV'");
  return d;
}

double mu_ev(const PourbaixParams& p, double pH) {
  if (pH < p.pKa1) return p.E_inf - p.k * (p.pKa2 - p.pKa1) - 2 * p.k * (p.pKa1 - pH);
  if (pH <= p.pKa2) return p.E_inf - p.k * (p.pKa2 - pH);
  return p.E_inf;
}

double log_likelihood(const PourbaixParams& p, const Dataset& d) {
  if (!(p.sigma >= kSigmaFloor)) throw AnalyzerError("sigma_eV below floor");
  double ll = 0;
  const double norm = std::log(p.sigma) + kLogSqrt2Pi;
  for (const auto& pt : d) {
    const double z = (pt.eV - mu_ev(p, pt.pH)) / p.sigma;
    ll += -norm - 0.5 * z * z;
  }
  return ll;
}

FitResult fit_mle(const Dataset& d, const std::optional<PourbaixParams>& init, const FitConfig& cfg) {
  std::set<double> distinct;
  for (const auto& pt : d) distinct.insert(pt.pH);
  if (distinct.size() < 2) throw AnalyzerError("need at least 2 distinct pH values");

  Dataset sorted = d;
  std::sort(sorted.begin(), sorted.end(), [](const DataPoint& a, const DataPoint& b) { return a.pH < b.pH; });
  const double pmin = sorted.front().pH;
  const double pmax = sorted.back().pH;
  const std::size_t m = std::min<std::size_t>(3, sorted.size());
  double e_top = 0;
  for (std::size_t i = 0; i < m; ++i) e_top += sorted[sorted.size() - 1 - i].eV / static_cast<double>(m);
  // Region-1 slope (2k) from a least-squares line through the lowest points.
  double mx = 0;
  double my = 0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += sorted[i].pH / static_cast<double>(m);
    my += sorted[i].eV / static_cast<double>(m);
  }
  double sxy = 0;
  double sxx = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sxy += (sorted[i].pH - mx) * (sorted[i].eV - my);
    sxx += (sorted[i].pH - mx) * (sorted[i].pH - mx);
  }
  double k0 = sxx > 0 ? 0.5 * sxy / sxx : -30.0;
  if (!std::isfinite(k0) || k0 >= 0) k0 = -30.0;
  double ev_sd = 0;
  for (const auto& pt : d) ev_sd = std::max(ev_sd, std::fabs(pt.eV - e_top));

  auto objective = [&](const std::vector<double>& x) { return -profiled_ll(from_vector(x), d); };
  const std::vector<double> step = {0.5, 0.5, std::max(5.0, 0.2 * std::fabs(k0)), std::max(10.0, 0.2 * ev_sd)};
  NelderMeadOptions nm;
  nm.max_iterations = cfg.max_iterations;

  std::vector<std::vector<double>> starts;
  const double f1[] = {0.2, 0.3, 0.4, 0.5, 0.6, 0.3, 0.5, 0.7};
  const double f2[] = {0.5, 0.5, 0.5, 0.5, 0.5, 0.8, 0.8, 0.6};
  for (int i = 0; i < 8; ++i) {
    const double a = pmin + (pmax - pmin) * f1[i];
    starts.push_back({a, a + (pmax - a) * f2[i], k0, e_top});
  }
  if (init) starts.insert(starts.begin(), {init->pKa1, init->pKa2, init->k, init->E_inf});

  PourbaixParams best;
  double best_ll = -std::numeric_limits<double>::infinity();
  auto consider = [&](const PourbaixParams& p) {
    const double ll = profiled_ll(p, d);
    if (ll > best_ll) {
      best_ll = ll;
      best = p;
    }
  };
  for (const auto& x0 : starts) {
    auto r = nelder_mead(objective, x0, step, nm);
    // Restart once from the result; simplex methods stall on kinks.
    r = nelder_mead(objective, r.x, step, nm);
    PourbaixParams p = from_vector(r.x);
    consider(p);
    for (int round = 0; round < 10; ++round) {
      auto polished = solve_partition(d, regions_of(p, d));
      if (!polished || *polished == p) break;
      p = *polished;
      consider(p);
    }
  }
  // Exhaustive scan over region boundaries between sorted points.
  const std::size_t n = sorted.size();
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = i; j <= n; ++j) {
      std::vector<int> region(d.size());
      const double lo = i < n ? sorted[i].pH : std::numeric_limits<double>::infinity();
      const double hi = j < n ? sorted[j].pH : std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < d.size(); ++q) region[q] = d[q].pH < lo ? 1 : (d[q].pH < hi ? 2 : 3);
      if (auto p = solve_partition(d, region)) consider(*p);
    }
  }

  FitResult res;
  res.n_points = d.size();
  profiled_ll(best, d, &best.sigma);
  res.params = best;
  res.log_likelihood = log_likelihood(best, d);
  std::size_t r1 = 0;
  std::size_t r3 = 0;
  for (const auto& pt : d) {
    r1 += pt.pH < best.pKa1;
    r3 += pt.pH > best.pKa2;
  }
  const std::size_t r2 = d.size() - r1 - r3;
  if (r1 == 0) res.diagnostics.push_back("pKa unidentifiable: no data below pKa1");
  if (r2 == 0) res.diagnostics.push_back("pKa unidentifiable: no data between pKa1 and pKa2");
  if (r3 == 0) res.diagnostics.push_back("pKa unidentifiable: no data above pKa2");
  if (best.sigma <= kSigmaFloor) res.diagnostics.push_back("sigma_eV at floor: data interpolated exactly");
  return res;
}

PriorRanges PriorRanges::defaults(const Dataset& d) {
  PriorRanges p;
  if (!d.empty()) {
    double lo = d.front().eV;
    double hi = lo;
    for (const auto& pt : d) {
      lo = std::min(lo, pt.eV);
      hi = std::max(hi, pt.eV);
    }
    p.E_inf = {lo - 200, hi + 200};
  }
  return p;
}

void PriorRanges::validate() const {
  for (const auto& name : kParamNames) {
    const Range& r = get(name);
    if (!(r.low < r.high) || !std::isfinite(r.low) || !std::isfinite(r.high)) {
      throw AnalyzerError("invalid prior range for " + name);
    }
  }
  if (sigma.high < kSigmaFloor) throw AnalyzerError("invalid prior range for sigma_eV");
  if (pKa1.low > pKa2.high) throw AnalyzerError("invalid prior ranges: pKa1 must be able to stay below pKa2");
}

const Range& PriorRanges::get(const std::string& name) const {
  if (name == "pKa1") return pKa1;
  if (name == "pKa2") return pKa2;
  if (name == "k") return k;
  if (name == "E_inf") return E_inf;
  if (name == "sigma_eV") return sigma;
  throw AnalyzerError("unknown parameter '" + name + "'");
}

Range& PriorRanges::get(const std::string& name) {
  return const_cast<Range&>(static_cast<const PriorRanges&>(*this).get(name));
}

PriorRanges focused_prior(const Dataset& d, const FitResult& fit, const PriorRanges& outer, double z,
                          std::uint64_t seed) {
  outer.validate();
  const PourbaixParams c = fit.params;
  std::array<double, 5> x{};
  for (std::size_t i = 0; i < 5; ++i) x[i] = param_value(c, kParamNames[i]);
  std::array<double, 5> h{};
  for (std::size_t i = 0; i < 5; ++i) h[i] = 1e-4 * std::max(1.0, std::fabs(x[i]));
  h[4] = std::max(kSigmaFloor * 1e-3, 1e-3 * c.sigma);

  auto nll = [&](const std::array<double, 5>& v) {
    PourbaixParams p;
    for (std::size_t i = 0; i < 5; ++i) set_param(p, kParamNames[i], v[i]);
    if (p.pKa1 > p.pKa2) std::swap(p.pKa1, p.pKa2);
    p.sigma = std::max(p.sigma, kSigmaFloor);
    return -log_likelihood(p, d);
  };
  Eigen::Matrix<double, 5, 5> H;
  const double f0 = nll(x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i; j < 5; ++j) {
      double v;
      if (i == j) {
        auto xp = x;
        auto xm = x;
        xp[i] += h[i];
        xm[i] -= h[i];
        v = (nll(xp) - 2 * f0 + nll(xm)) / (h[i] * h[i]);
      } else {
        auto pp = x, pm = x, mp = x, mm = x;
        pp[i] += h[i], pp[j] += h[j];
        pm[i] += h[i], pm[j] -= h[j];
        mp[i] -= h[i], mp[j] += h[j];
        mm[i] -= h[i], mm[j] -= h[j];
        v = (nll(pp) - nll(pm) - nll(mp) + nll(mm)) / (4 * h[i] * h[j]);
      }
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  std::array<double, 5> sd{};
  Eigen::LDLT<Eigen::Matrix<double, 5, 5>> ldlt(H);
  const bool pd = ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all();
  Eigen::Matrix<double, 5, 5> cov;
  if (pd) cov = ldlt.solve(Eigen::Matrix<double, 5, 5>::Identity());
  for (std::size_t i = 0; i < 5; ++i) {
    const Range& r = outer.get(kParamNames[i]);
    const double fallback = (r.high - r.low) / 10;
    const double var = pd ? cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) : -1;
    sd[i] = var > 0 && std::isfinite(var) ? std::sqrt(var) : fallback;
  }

  std::array<double, 5> lo_half{};
  std::array<double, 5> hi_half{};
  for (std::size_t i = 0; i < 5; ++i) lo_half[i] = hi_half[i] = z * sd[i];
  PriorRanges box;
  auto build = [&]() {
    for (std::size_t i = 0; i < 5; ++i) {
      const Range& r = outer.get(kParamNames[i]);
      Range& b = box.get(kParamNames[i]);
      b.low = std::max(r.low, x[i] - lo_half[i]);
      b.high = std::min(r.high, x[i] + hi_half[i]);
      if (!(b.low < b.high)) {
        b.low = std::max(r.low, x[i] - 1e-6);
        b.high = std::min(r.high, x[i] + 1e-6);
      }
    }
  };
  build();
  // Widen any face that still carries visible posterior mass.
  for (int round = 0; round < 6; ++round) {
    const WeightedSamples pilot = sample_posterior(d, box, 20000, seed + static_cast<std::uint64_t>(round), 1);
    bool widened = false;
    for (std::size_t i = 0; i < 5; ++i) {
      const Range& b = box.get(kParamNames[i]);
      const Range& r = outer.get(kParamNames[i]);
      const double band = 0.05 * (b.high - b.low);
      double low_mass = 0;
      double high_mass = 0;
      for (std::size_t s = 0; s < pilot.samples.size(); ++s) {
        const double v = param_value(pilot.samples[s], kParamNames[i]);
        if (v < b.low + band) low_mass += pilot.weights[s];
        if (v > b.high - band) high_mass += pilot.weights[s];
      }
      if (low_mass > 0.01 && b.low > r.low) {
        lo_half[i] *= 1.5;
        widened = true;
      }
      if (high_mass > 0.01 && b.high < r.high) {
        hi_half[i] *= 1.5;
        widened = true;
      }
    }
    if (!widened) break;
    build();
  }
  return box;
}

double WeightedSamples::ess() const {
  double s = 0;
  for (double w : weights) s += w * w;
  return s > 0 ? 1.0 / s : 0.0;
}

const PourbaixParams& WeightedSamples::joint_mode() const {
  if (samples.empty()) throw AnalyzerError("no samples");
  const auto& key = log_density.size() == samples.size() ? log_density : weights;
  return samples[static_cast<std::size_t>(std::max_element(key.begin(), key.end()) - key.begin())];
}

WeightedSamples sample_posterior(const Dataset& d, const PriorRanges& prior, std::size_t N, std::uint64_t seed,
                                 unsigned threads) {
  if (N < 1) throw AnalyzerError("need at least one sample");
  prior.validate();
  constexpr std::size_t kBlock = 2048;
  WeightedSamples ws;
  ws.N = N;
  ws.seed = seed;
  ws.prior = prior;
  ws.samples.resize(N);
  ws.log_density.resize(N);
  std::vector<double> logw(N);
  const std::size_t blocks = (N + kBlock - 1) / kBlock;

  // (pKa1, pKa2, k) are uniform on the box. Given those the mean is linear in
  // E_inf, so (E_inf, sigma) are drawn from their exact conditional and the
  // weight is the likelihood integrated over both. Same posterior, far fewer
  // wasted draws than weighting all five coordinates.
  auto run_block = [&](std::size_t b) {
    std::mt19937_64 rng(block_seed(seed, b));
    auto draw = [&](const Range& r) { return r.low + (r.high - r.low) * unit(rng); };
    SigmaGrid grid;
    const std::size_t end = std::min(N, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      PourbaixParams p;
      do {
        p.pKa1 = draw(prior.pKa1);
        p.pKa2 = draw(prior.pKa2);
      } while (p.pKa1 > p.pKa2);
      p.k = draw(prior.k);
      if (d.empty()) {
        p.E_inf = draw(prior.E_inf);
        p.sigma = std::max(kSigmaFloor, prior.sigma.high - (prior.sigma.high - prior.sigma.low) * unit(rng));
        ws.samples[i] = p;
        logw[i] = 0;
        ws.log_density[i] = 0;
        continue;
      }
      logw[i] = collapse_e_sigma(p, d, prior, grid);
      if (std::isfinite(logw[i])) {
        p.sigma = grid.sample(unit(rng));
        p.E_inf = truncated_normal(grid.e_hat, p.sigma / std::sqrt(static_cast<double>(d.size())), prior.E_inf.low,
                                   prior.E_inf.high, unit(rng));
      } else {
        p.sigma = std::max(kSigmaFloor, prior.sigma.high);
        p.E_inf = std::clamp(grid.e_hat, prior.E_inf.low, prior.E_inf.high);
      }
      ws.samples[i] = p;
      ws.log_density[i] = log_likelihood(p, d);
    }
  };

  unsigned nthreads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, blocks));
  if (nthreads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < blocks; b += nthreads) run_block(b);
      });
    }
    for (auto& th : pool) th.join();
  }

  const double mx = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(mx)) throw AnalyzerError("likelihood underflows everywhere in the prior box");
  ws.weights.resize(N);
  double total = 0;
  for (std::size_t i = 0; i < N; ++i) total += (ws.weights[i] = std::exp(logw[i] - mx));
  for (double& w : ws.weights) w /= total;
  return ws;
}

Histogram marginal_histogram(const WeightedSamples& ws, const std::string& param, std::size_t bins) {
  if (bins < 2) throw AnalyzerError("need at least 2 bins");
  const Range& r = ws.prior.get(param);
  Histogram h;
  h.param = param;
  h.mass.assign(bins, 0.0);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges.push_back(r.low + (r.high - r.low) * static_cast<double>(b) / static_cast<double>(bins));
  }
  const double width = (r.high - r.low) / static_cast<double>(bins);
  for (std::size_t i = 0; i < ws.samples.size(); ++i) {
    const double v = param_value(ws.samples[i], param);
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - r.low) / width));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    h.mass[static_cast<std::size_t>(b)] += ws.weights[i];
  }
  return h;
}

std::vector<BandPoint> model_line_band(const WeightedSamples& ws, const std::vector<double>& pH_grid) {
  if (ws.samples.empty()) throw AnalyzerError("no samples");
  if (pH_grid.empty()) throw AnalyzerError("empty pH grid");
  std::vector<BandPoint> out;
  std::vector<std::pair<double, double>> vals;
  for (double pH : pH_grid) {
    vals.clear();
    double mean = 0;
    for (std::size_t i = 0; i < ws.samples.size(); ++i) {
      if (ws.weights[i] <= 0) continue;
      const double mu = mu_ev(ws.samples[i], pH);
      vals.emplace_back(mu, ws.weights[i]);
      mean += ws.weights[i] * mu;
    }
    std::sort(vals.begin(), vals.end());
    auto quantile = [&](double q) {
      double acc = 0;
      for (const auto& [v, w] : vals) {
        acc += w;
        if (acc >= q) return v;
      }
      return vals.back().first;
    };
    out.push_back({pH, mean, quantile(0.05), quantile(0.95)});
  }
  return out;
}

PosteriorSummary summarize_posterior(const WeightedSamples& ws, std::size_t bins, const std::vector<double>& pH_grid) {
  PosteriorSummary s;
  s.prior = ws.prior;
  s.N = ws.N;
  s.seed = ws.seed;
  s.ess = ws.ess();
  s.joint_mode = ws.joint_mode();
  for (const auto& name : kParamNames) s.marginals.push_back(marginal_histogram(ws, name, bins));
  s.band = model_line_band(ws, pH_grid);
  return s;
}

using nlohmann::json;

namespace {

json params_json(const PourbaixParams& p) {
  json j = json::object();
  for (const auto& name : kParamNames) j[name] = param_value(p, name);
  return j;
}

PourbaixParams params_from(const json& j) {
  PourbaixParams p;
  for (const auto& name : kParamNames) set_param(p, name, j.at(name).get<double>());
  return p;
}

json posterior_json(const PosteriorSummary& s) {
  json prior = json::object();
  for (const auto& name : kParamNames) prior[name] = {s.prior.get(name).low, s.prior.get(name).high};
  json marginals = json::object();
  for (const auto& h : s.marginals) marginals[h.param] = {{"edges", h.edges}, {"mass", h.mass}};
  json band = json::array();
  for (const auto& b : s.band) band.push_back({{"pH", b.pH}, {"mean", b.mean}, {"q05", b.q05}, {"q95", b.q95}});
  return {{"prior", prior},
          {"samples", s.N},
          {"seed", s.seed},
          {"ess", s.ess},
          {"joint_mode", params_json(s.joint_mode)},
          {"marginals", marginals},
          {"model_line_band", band}};
}

PosteriorSummary posterior_from(const json& j) {
  PosteriorSummary s;
  for (const auto& name : kParamNames) {
    const auto& r = j.at("prior").at(name);
    s.prior.get(name) = {r.at(0).get<double>(), r.at(1).get<double>()};
  }
  s.N = j.at("samples").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.ess = j.at("ess").get<double>();
  s.joint_mode = params_from(j.at("joint_mode"));
  for (const auto& name : kParamNames) {
    if (!j.at("marginals").contains(name)) continue;
    const auto& m = j.at("marginals").at(name);
    s.marginals.push_back({name, m.at("edges").get<std::vector<double>>(), m.at("mass").get<std::vector<double>>()});
  }
  for (const auto& b : j.at("model_line_band")) {
    s.band.push_back({b.at("pH").get<double>(), b.at("mean").get<double>(), b.at("q05").get<double>(),
                      b.at("q95").get<double>()});
  }
  return s;
}

}  // namespace

std::string fit_to_json(const FitDocument& doc) {
  json j = {{"params", params_json(doc.fit.params)},
            {"log_likelihood", doc.fit.log_likelihood},
            {"n_points", doc.fit.n_points},
            {"diagnostics", doc.fit.diagnostics}};
  if (doc.posterior) j["posterior"] = posterior_json(*doc.posterior);
  return j.dump(2) + "\n";
}

std::string posterior_to_json(const PosteriorSummary& post) { return posterior_json(post).dump(2) + "\n"; }

FitDocument fit_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    FitDocument doc;
    doc.fit.params = params_from(j.at("params"));
    doc.fit.log_likelihood = j.at("log_likelihood").get<double>();
    doc.fit.n_points = j.value("n_points", std::size_t{0});
    doc.fit.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    if (j.contains("posterior")) doc.posterior = posterior_from(j.at("posterior"));
    return doc;
  } catch (const json::exception& e) {
    throw AnalyzerError(std::string("malformed fit JSON: ") + e.what());
  }
}

}  // namespace labplan::analyzer
