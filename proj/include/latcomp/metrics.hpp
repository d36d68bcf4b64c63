#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latcomp/grid.hpp"

namespace latcomp {

// Mean squared / root mean squared error over one variable's channel.
// Shapes must match; accumulation is in double.
double mse(const nn::Tensor& a, const nn::Tensor& b);
double mse(const GridField& truth, const GridField& pred, const std::string& variable);
double rmse(const nn::Tensor& a, const nn::Tensor& b);
double rmse(const GridField& truth, const GridField& pred, const std::string& variable);

// One row's power spectrum. With F_k the unitary-in-1/L DFT of the row
// (F_k = (1/L) sum_l f_l exp(-2*pi*i*k*l/L)), power[k-1] = 2|F_k|^2 for
// k = 1..floor(L/2) and dc_power = |F_0|^2. For even L the last entry is the
// doubled Nyquist term, so mean(f^2) = dc + sum(power) - power.back()/2.
struct RowSpectrum {
  double dc_power = 0.0;
  std::vector<double> power;
};
RowSpectrum zonal_row_power(const std::vector<double>& row);

// Row spectra averaged over all rows of one variable's channel. The
// wavelength axis is L*dx/k with dx the zonal grid spacing in km.
struct SpectrumResult {
  std::vector<int> wavenumbers;       // 1..floor(W/2)
  std::vector<double> power;          // mean over rows of 2|F_k|^2
  std::vector<double> wavelength_km;  // L*dx_km/k
  double dc_power = 0.0;              // mean over rows of |F_0|^2
  int rows = 0;

  std::string to_csv() const;  // k, wavelength_km, power
};
SpectrumResult zonal_power_spectrum(const GridField& field, const std::string& variable,
                                    double dx_km = 1.0);

// Least-squares slope of log(power) against log(k), restricted to
// kmin <= k <= kmax. Bins with non-positive power are skipped.
double fit_loglog_slope(const std::vector<int>& wavenumbers, const std::vector<double>& power,
                        int kmin, int kmax);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  // Dynamic range of the data. Defaults to max-min of the truth field,
  // floored at 1e-6 so constant fields stay well defined.
  std::optional<double> fixed_range;
};

// Mean structural similarity over all fully-interior windows, computed in
// double with a Gaussian window. 1.0 exactly when pred == truth.
double ssim(const GridField& truth, const GridField& pred, const std::string& variable,
            const SsimOptions& opts = {});
double ssim(const nn::Tensor& truth, const nn::Tensor& pred, const SsimOptions& opts = {});

struct Histogram {
  std::vector<double> edges;    // bins+1 monotone edges
  std::vector<int64_t> counts;  // per bin
  int64_t total = 0;

  // log10(count) per bin formatted for plotting; zero-count bins come back
  // as empty strings rather than -inf.
  std::vector<std::string> log10_labels() const;
};

// Value histogram of one variable pooled over all fields, with equal-width
// bins (at least 2) spanning the pooled min..max.
Histogram density_histogram(const std::vector<GridField>& fields, const std::string& variable,
                            int bins);

struct BoxStats {
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

// Quartiles use linear interpolation at position q*(n-1) in the sorted
// sample, so {1,2,3,4,5} gives q25=2, median=3, q75=4.
BoxStats box_stats(std::vector<double> values);

// One evaluated sample: metric name -> value, for one (variable, lead time,
// method) combination.
struct MetricRow {
  std::string variable;
  std::string method;
  int lead_hours = 0;
  std::map<std::string, double> metrics;
};

// Box statistics per (variable, lead time, method, metric) over all rows.
struct MetricSummary {
  std::string variable;
  std::string method;
  int lead_hours = 0;
  std::string metric;
  BoxStats box;
  int64_t count = 0;
};

struct MetricReport {
  std::vector<MetricSummary> cells;  // sorted by (variable, method, lead, metric)

  const MetricSummary* find(const std::string& variable, const std::string& method,
                            int lead_hours, const std::string& metric) const;
  std::string to_json() const;
  std::string to_csv() const;
};

MetricReport aggregate_report(const std::vector<MetricRow>& rows);

}  // namespace latcomp
