#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "labplan/sexpr.hpp"

namespace labplan::analyzer {

class AnalyzerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSigmaFloor = 1e-6;

/// Pourbaix model parameters. pH in pH units, k in mV per pH unit, E_inf and
/// sigma in mV. Below pKa1 the slope is 2k, between the pKas it is k.
struct PourbaixParams {
  double pKa1 = 7;
  double pKa2 = 10;
  double k = -30;
  double E_inf = 0;
  double sigma = 1;

  bool operator==(const PourbaixParams&) const = default;
};

inline const std::array<std::string, 5> kParamNames = {"pKa1", "pKa2", "k", "E_inf", "sigma_eV"};

/// Throws AnalyzerError for an unknown name.
double param_value(const PourbaixParams& p, const std::string& name);
void set_param(PourbaixParams& p, const std::string& name, double v);

struct DataPoint {
  double pH = 0;
  double eV = 0;

  bool operator==(const DataPoint&) const = default;
};
using Dataset = std::vector<DataPoint>;

/// CSV with header "pH,eV".
Dataset read_csv(const SourceText& src);

double mu_ev(const PourbaixParams& p, double pH);
/// Gaussian log-likelihood; throws AnalyzerError when sigma < kSigmaFloor.
double log_likelihood(const PourbaixParams& p, const Dataset& d);

struct FitConfig {
  int max_iterations = 4000;
};

struct FitResult {
  PourbaixParams params;
  double log_likelihood = 0;
  std::vector<std::string> diagnostics;
  std::size_t n_points = 0;
};

/// Multi-start simplex maximization of the likelihood with sigma profiled
/// out, followed by an exact least-squares polish for the fitted partition.
FitResult fit_mle(const Dataset& d, const std::optional<PourbaixParams>& init = std::nullopt,
                  const FitConfig& cfg = {});

struct Range {
  double low = 0;
  double high = 1;

  bool operator==(const Range&) const = default;
};

struct PriorRanges {
  Range pKa1{2, 12};
  Range pKa2{2, 12};
  Range k{-100, 0};
  Range E_inf{-200, 200};
  Range sigma{0, 50};

  /// Wide defaults; E_inf spans the data +-200 mV.
  static PriorRanges defaults(const Dataset& d);
  void validate() const;
  const Range& get(const std::string& name) const;
  Range& get(const std::string& name);

  bool operator==(const PriorRanges&) const = default;
};

/// Uniform box around the MLE (z Laplace standard deviations per parameter)
/// clipped to `outer`. Widened until the posterior mass near its faces is
/// negligible. The posterior restricted to this box matches the one under
/// `outer` wherever the likelihood is not negligible.
PriorRanges focused_prior(const Dataset& d, const FitResult& fit, const PriorRanges& outer, double z = 3.0,
                          std::uint64_t seed = 1);

struct WeightedSamples {
  std::vector<PourbaixParams> samples;
  std::vector<double> weights;
  /// Unnormalized log posterior density of each sample (empty when unknown).
  std::vector<double> log_density;
  std::uint64_t seed = 0;
  std::size_t N = 0;
  PriorRanges prior;

  /// Kish effective sample size.
  double ess() const;
  /// Sample with the highest posterior density; falls back to the largest weight.
  const PourbaixParams& joint_mode() const;
};

/// Importance sampler over the uniform prior box. pKa1, pKa2 and k are drawn
/// uniformly (rejecting pKa1 > pKa2); E_inf and sigma come from their exact
/// conditional posterior and the weight is the likelihood integrated over them.
/// Samples come in fixed blocks with their own sub-seeds, so the result does
/// not depend on `threads`. An empty dataset returns the prior with equal weights.
WeightedSamples sample_posterior(const Dataset& d, const PriorRanges& prior, std::size_t N, std::uint64_t seed,
                                 unsigned threads = 0);

struct Histogram {
  std::string param;
  std::vector<double> edges;
  std::vector<double> mass;

  bool operator==(const Histogram&) const = default;
};

Histogram marginal_histogram(const WeightedSamples& ws, const std::string& param, std::size_t bins);

struct BandPoint {
  double pH = 0;
  double mean = 0;
  double q05 = 0;
  double q95 = 0;

  bool operator==(const BandPoint&) const = default;
};

std::vector<BandPoint> model_line_band(const WeightedSamples& ws, const std::vector<double>& pH_grid);

struct PosteriorSummary {
  PriorRanges prior;
  std::size_t N = 0;
  std::uint64_t seed = 0;
  double ess = 0;
  PourbaixParams joint_mode;
  std::vector<Histogram> marginals;
  std::vector<BandPoint> band;

  bool operator==(const PosteriorSummary&) const = default;
};

PosteriorSummary summarize_posterior(const WeightedSamples& ws, std::size_t bins, const std::vector<double>& pH_grid);

struct FitDocument {
  FitResult fit;
  std::optional<PosteriorSummary> posterior;
};

std::string fit_to_json(const FitDocument& doc);
std::string posterior_to_json(const PosteriorSummary& post);
FitDocument fit_from_json(const std::string& text);

}  // namespace labplan::analyzer
