#include <random>

#include "doctest.h"
#include "labplan/analyzer.hpp"
#include "support.hpp"

using namespace labplan;
using namespace labplan::analyzer;
using doctest::Approx;

namespace {

const PourbaixParams kTheta{8, 11, -30, -500, 1};
const PourbaixParams kStar{7.68, 10.92, -30.7, -450, 3};

std::vector<double> grid_2_12() {
  std::vector<double> g;
  for (int i = 0; i <= 40; ++i) g.push_back(2 + 0.25 * i);
  return g;
}

}  // namespace

TEST_CASE("mu_ev on each branch") {
  CHECK(mu_ev(kTheta, 12) == Approx(-500));
  CHECK(mu_ev(kTheta, 8) == Approx(-410));
  CHECK(mu_ev(kTheta, 7) == Approx(-350));
  // Both sides of pKa1 agree.
  CHECK(mu_ev(kTheta, std::nextafter(8.0, 0.0)) == Approx(-410));
}

TEST_CASE("mu_ev agrees with an independent formula") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 500; ++i) {
    const double a = 2 + 10 * U(rng);
    const double b = a + (12 - a) * U(rng);
    const PourbaixParams p{a, b, -100 * U(rng), -400 + 200 * U(rng), 1};
    const double pH = 14 * U(rng);
    CHECK(mu_ev(p, pH) == Approx(testsupport::mu_oracle(pH, a, b, p.k, p.E_inf)).epsilon(1e-12));
  }
}

TEST_CASE("continuity and slope ratio on random parameters") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 300; ++i) {
    const double a = 2 + 9 * U(rng);
    const double b = a + 0.5 + (12 - a) * U(rng);
    const PourbaixParams p{a, b, -1 - 99 * U(rng), -600 + 400 * U(rng), 2};
    for (double x : {a, b}) {
      const double left = mu_ev(p, x - 1e-12);
      const double right = mu_ev(p, x + 1e-12);
      CHECK(std::fabs(left - right) <= 1e-9 * std::max(1.0, std::fabs(left)));
    }
    const double h = 1e-3;
    const double s1 = (mu_ev(p, a - 0.2) - mu_ev(p, a - 0.2 - h)) / h;
    const double s2 = (mu_ev(p, (a + b) / 2 + h) - mu_ev(p, (a + b) / 2)) / h;
    CHECK(s1 == Approx(2 * s2).epsilon(1e-6));
    CHECK(s1 == Approx(2 * p.k).epsilon(1e-6));
  }
}

TEST_CASE("log-likelihood examples") {
  CHECK(log_likelihood(kTheta, {}) == 0);
  const Dataset one{{12, -500}};
  CHECK(log_likelihood(kTheta, one) == Approx(-0.918938533).epsilon(1e-9));
  const Dataset two{{12, -500}, {12, -500}};
  CHECK(log_likelihood(kTheta, two) == Approx(2 * log_likelihood(kTheta, one)));
  auto p = kTheta;
  p.sigma = 1e-7;
  CHECK_THROWS_AS(log_likelihood(p, one), AnalyzerError);

  const auto d = testsupport::synthetic(4, 20, 5);
  CHECK(log_likelihood(kStar, d) ==
        Approx(testsupport::loglik_oracle(d, kStar.pKa1, kStar.pKa2, kStar.k, kStar.E_inf, kStar.sigma)));
}

TEST_CASE("CSV input") {
  const auto d = read_csv(testsupport::load("data/synthetic.csv"));
  CHECK(d.size() == 30);
  CHECK(d[0] == DataPoint{7.231, -323.30});
  CHECK(read_csv(SourceText{"pH,eV\n"}).empty());
  CHECK_THROWS_AS(read_csv(SourceText{"ph;ev\n1;2\n"}), ParseError);
  CHECK_THROWS_AS(read_csv(SourceText{"pH,eV\n7,abc\n"}), ParseError);
  CHECK_THROWS_AS(read_csv(SourceText{"pH,eV\n7\n"}), ParseError);
}

TEST_CASE("fit recovers the generating parameters") {
  const auto d = read_csv(testsupport::load("data/synthetic.csv"));
  const auto fit = fit_mle(d);
  CHECK(fit.n_points == 30);
  CHECK(std::fabs(fit.params.pKa1 - 7.68) <= 0.3);
  CHECK(std::fabs(2 * fit.params.k - (-61.4)) <= 2.0);
  CHECK(fit.params.pKa1 <= fit.params.pKa2);
  CHECK(fit.log_likelihood == Approx(log_likelihood(fit.params, d)));

  // A dense grid with closed-form (k, E) must not find anything better.
  const auto grid = testsupport::grid_mle(d, 6.0, 12.0, 0.02);
  CHECK(fit.log_likelihood >= grid.ll - 1e-6);
  CHECK(std::fabs(fit.params.pKa1 - grid.pKa1) <= 0.05);
}

TEST_CASE("fit is stationary") {
  const auto d = testsupport::synthetic(77, 30, 3);
  const auto fit = fit_mle(d);
  const double eps = 1e-3;
  for (const auto& name : kParamNames) {
    for (double s : {-eps, eps}) {
      auto p = fit.params;
      set_param(p, name, param_value(p, name) + s);
      if (p.pKa1 > p.pKa2) continue;
      CHECK(log_likelihood(p, d) <= fit.log_likelihood + 1e-7);
    }
  }
}

TEST_CASE("noiseless data") {
  const auto d = testsupport::synthetic(5, 30, 0);
  const auto fit = fit_mle(d);
  CHECK(std::fabs(fit.params.pKa1 - kStar.pKa1) <= 0.05);
  CHECK(std::fabs(fit.params.pKa2 - kStar.pKa2) <= 0.05);
  CHECK(std::fabs(fit.params.k - kStar.k) <= 0.05);
  CHECK(std::fabs(fit.params.E_inf - kStar.E_inf) <= 0.05);
  CHECK(fit.params.sigma == kSigmaFloor);
  REQUIRE_FALSE(fit.diagnostics.empty());
  CHECK(fit.diagnostics.back().rfind("sigma_eV at floor", 0) == 0);
}

TEST_CASE("plateau-only data is flagged") {
  const auto d = testsupport::synthetic(6, 15, 2, 11.2, 13.5);
  const auto fit = fit_mle(d);
  bool flagged = false;
  for (const auto& m : fit.diagnostics) flagged |= m.rfind("pKa unidentifiable", 0) == 0;
  CHECK(flagged);
}

TEST_CASE("too few distinct pH values") {
  CHECK_THROWS_WITH_AS(fit_mle({{7, -300}, {7, -301}}), "need at least 2 distinct pH values", AnalyzerError);
  CHECK_THROWS_AS(fit_mle({}), AnalyzerError);
}

TEST_CASE("translation equivariance") {
  const auto d = testsupport::synthetic(12, 30, 3);
  auto shifted = d;
  for (auto& p : shifted) p.eV += 125;
  const auto a = fit_mle(d).params;
  const auto b = fit_mle(shifted).params;
  CHECK(b.E_inf == Approx(a.E_inf + 125).epsilon(1e-6));
  CHECK(b.pKa1 == Approx(a.pKa1).epsilon(1e-6));
  CHECK(b.pKa2 == Approx(a.pKa2).epsilon(1e-6));
  CHECK(b.k == Approx(a.k).epsilon(1e-6));
}

TEST_CASE("prior ranges") {
  const auto d = testsupport::synthetic(1, 10, 3);
  const auto p = PriorRanges::defaults(d);
  double lo = 1e9;
  for (const auto& x : d) lo = std::min(lo, x.eV);
  CHECK(p.E_inf.low == Approx(lo - 200));
  CHECK(p.pKa1 == Range{2, 12});
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.k = {0, -100};
  CHECK_THROWS_AS(bad.validate(), AnalyzerError);
  CHECK_THROWS_AS(p.get("pKa3"), AnalyzerError);
}

TEST_CASE("empty dataset gives the prior back") {
  const auto ws = sample_posterior({}, PriorRanges{}, 5000, 3);
  REQUIRE(ws.weights.size() == 5000);
  for (double w : ws.weights) CHECK(w == Approx(1.0 / 5000).epsilon(1e-12));
  for (const auto& s : ws.samples) CHECK(s.pKa1 <= s.pKa2);
  CHECK(ws.ess() == Approx(5000));

  // Each marginal is close to its prior shape. k is uniform; pKa1 is not,
  // because of the ordering constraint, so compare it to the triangle.
  const auto hk = marginal_histogram(ws, "k", 10);
  for (double m : hk.mass) CHECK(std::fabs(m - 0.1) <= 0.03);
  const auto h1 = marginal_histogram(ws, "pKa1", 10);
  for (std::size_t b = 0; b < 10; ++b) {
    const double expect = (2.0 * (10 - b) - 1) / 100.0;  // (19 - 2b) / 100
    CHECK(std::fabs(h1.mass[b] - expect) <= 0.02);
  }

  // Band mean equals the prior-predictive mean, estimated here by a separate
  // Monte Carlo run with its own generator.
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> U(0, 1);
  const PriorRanges pr;
  const std::vector<double> grid{3, 7, 11};
  std::vector<double> mean(grid.size(), 0);
  int kept = 0;
  while (kept < 200000) {
    const double a = pr.pKa1.low + (pr.pKa1.high - pr.pKa1.low) * U(rng);
    const double b = pr.pKa2.low + (pr.pKa2.high - pr.pKa2.low) * U(rng);
    const double k = pr.k.low + (pr.k.high - pr.k.low) * U(rng);
    const double e = pr.E_inf.low + (pr.E_inf.high - pr.E_inf.low) * U(rng);
    if (a > b) continue;
    ++kept;
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i] += testsupport::mu_oracle(grid[i], a, b, k, e);
  }
  const auto band = model_line_band(ws, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CAPTURE(grid[i]);
    // Prior sd of mu is at most ~250 mV; 5000 samples put the MC error near 4 mV.
    CHECK(std::fabs(band[i].mean - mean[i] / kept) <= 15);
    CHECK(band[i].q05 <= band[i].mean);
    CHECK(band[i].mean <= band[i].q95);
  }
}

TEST_CASE("weights are normalized and reproducible") {
  const auto d = testsupport::synthetic(8, 30, 3);
  const auto prior = PriorRanges::defaults(d);
  const auto a = sample_posterior(d, prior, 20000, 17, 1);
  const auto b = sample_posterior(d, prior, 20000, 17, 3);
  double sum = 0;
  for (double w : a.weights) {
    CHECK(w >= 0);
    sum += w;
  }
  CHECK(std::fabs(sum - 1) <= 1e-9);
  // Thread count does not change the draw.
  CHECK(a.samples == b.samples);
  CHECK(a.weights == b.weights);
  const auto c = sample_posterior(d, prior, 20000, 18, 1);
  CHECK(c.samples != a.samples);
  CHECK_THROWS_AS(sample_posterior(d, prior, 0, 1), AnalyzerError);
}

TEST_CASE("degenerate weights") {
  WeightedSamples ws;
  ws.samples = {kTheta, kStar};
  ws.weights = {0.0, 1.0};
  ws.N = 2;
  const auto h = marginal_histogram(ws, "pKa1", 5);
  CHECK(h.edges.size() == 6);
  CHECK(h.edges.front() == ws.prior.pKa1.low);
  CHECK(h.edges.back() == ws.prior.pKa1.high);
  CHECK(std::count(h.mass.begin(), h.mass.end(), 1.0) == 1);
  CHECK(ws.joint_mode() == kStar);
  const auto band = model_line_band(ws, {5, 9, 12});
  for (const auto& bp : band) {
    CHECK(bp.mean == Approx(mu_ev(kStar, bp.pH)));
    CHECK(bp.q05 == Approx(bp.mean));
    CHECK(bp.q95 == Approx(bp.mean));
  }
  CHECK_THROWS_AS(marginal_histogram(ws, "pKa1", 1), AnalyzerError);
  CHECK_THROWS_AS(marginal_histogram(ws, "ph", 5), AnalyzerError);
}

TEST_CASE("posterior on synthetic data") {
  const auto d = read_csv(testsupport::load("data/synthetic.csv"));
  const auto fit = fit_mle(d);
  const auto prior = focused_prior(d, fit, PriorRanges::defaults(d), 3.0, 1);
  // The focused box keeps the MLE inside and stays within the outer prior.
  for (const auto& name : kParamNames) {
    const auto& r = prior.get(name);
    CHECK(r.low <= param_value(fit.params, name));
    CHECK(param_value(fit.params, name) <= r.high);
    CHECK(r.low >= PriorRanges::defaults(d).get(name).low);
  }
  const auto ws = sample_posterior(d, prior, 100000, 1);
  // The joint mode is compared with the MLE; marginal peaks may differ.
  CHECK(std::fabs(ws.joint_mode().pKa1 - fit.params.pKa1) <= 0.2);
  const auto s = summarize_posterior(ws, 10, grid_2_12());
  CHECK(s.marginals.size() == 5);
  for (const auto& h : s.marginals) {
    double total = 0;
    for (double m : h.mass) total += m;
    CHECK(total == Approx(1).epsilon(1e-9));
  }
  // Band at observed pHs is tight compared with the generating noise of 3 mV.
  std::vector<double> observed;
  for (const auto& p : d) observed.push_back(p.pH);
  for (const auto& bp : model_line_band(ws, observed)) CHECK(bp.q95 - bp.q05 <= 9.0);
}

TEST_CASE("sampler matches a grid posterior when the box clips E_inf and sigma") {
  // Few points and a box whose E_inf and sigma edges cut into the likelihood.
  const auto d = testsupport::synthetic(4, 6, 8);
  PriorRanges box;
  box.pKa1 = {6.5, 9};
  box.pKa2 = {9.5, 12};
  box.k = {-36, -24};
  box.E_inf = {-452, -440};
  box.sigma = {2, 9};
  const auto oracle = testsupport::riemann_marginals(d, box, 20, 10);
  const auto ws = sample_posterior(d, box, 50000, 9);
  for (std::size_t k = 0; k < 5; ++k) {
    CAPTURE(kParamNames[k]);
    const auto h = marginal_histogram(ws, kParamNames[k], 10);
    CHECK(testsupport::total_variation(h.mass, oracle[k]) <= 0.05);
  }
  for (const auto& p : ws.samples) {
    CHECK(p.E_inf >= box.E_inf.low);
    CHECK(p.E_inf <= box.E_inf.high);
    CHECK(p.sigma >= box.sigma.low);
    CHECK(p.sigma <= box.sigma.high);
  }
  // Error against the oracle shrinks as N grows, seed held fixed.
  auto max_tv = [&](std::size_t n) {
    const auto w = sample_posterior(d, box, n, 9);
    double m = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      m = std::max(m, testsupport::total_variation(marginal_histogram(w, kParamNames[k], 10).mass, oracle[k]));
    }
    return m;
  };
  const double tv_small = max_tv(200);
  const double tv_mid = max_tv(5000);
  CHECK(tv_small > tv_mid);
  CHECK(tv_mid > max_tv(100000));
  // The joint mode is the sample with the highest density.
  double best = -1e300;
  for (const auto& p : ws.samples) best = std::max(best, log_likelihood(p, d));
  CHECK(log_likelihood(ws.joint_mode(), d) == best);
}

TEST_CASE("fit JSON round trip") {
  const auto d = testsupport::synthetic(3, 25, 3);
  FitDocument doc;
  doc.fit = fit_mle(d);
  const auto ws = sample_posterior(d, focused_prior(d, doc.fit, PriorRanges::defaults(d)), 4000, 2);
  doc.posterior = summarize_posterior(ws, 8, {4, 8, 12});
  const auto text = fit_to_json(doc);
  const auto back = fit_from_json(text);
  CHECK(fit_to_json(back) == text);
  CHECK(back.posterior->marginals.size() == 5);
  CHECK(back.fit.diagnostics == doc.fit.diagnostics);
  CHECK_THROWS(fit_from_json("{\"params\": 1}"));
}
