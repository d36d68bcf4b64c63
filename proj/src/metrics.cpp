#include "latcomp/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "json.hpp"

namespace latcomp {

using nlohmann::json;

namespace {

const float* channel_ptr(const GridField& f, const std::string& variable) {
  int c = f.variable_index(variable);
  if (c < 0) throw DataError("missing variable '" + variable + "'");
  return f.values.ptr() + static_cast<size_t>(c) * f.height() * f.width();
}

void check_same_grid(const GridField& a, const GridField& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DataError("field dimensions differ: " + std::to_string(a.height()) + "x" +
                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                    std::to_string(b.width()));
}

}  // namespace

double mse(const nn::Tensor& a, const nn::Tensor& b) {
  if (!same_shape(a, b))
    throw DataError("mse shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  if (a.empty()) throw DataError("mse of empty tensors");
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a.data[static_cast<size_t>(i)]) -
               static_cast<double>(b.data[static_cast<size_t>(i)]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double mse(const GridField& truth, const GridField& pred, const std::string& variable) {
  check_same_grid(truth, pred);
  const float* t = channel_ptr(truth, variable);
  const float* p = channel_ptr(pred, variable);
  int64_t n = static_cast<int64_t>(truth.height()) * truth.width();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(t[i]) - static_cast<double>(p[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

double rmse(const nn::Tensor& a, const nn::Tensor& b) { return std::sqrt(mse(a, b)); }

double rmse(const GridField& truth, const GridField& pred, const std::string& variable) {
  return std::sqrt(mse(truth, pred, variable));
}

RowSpectrum zonal_row_power(const std::vector<double>& row) {
  int L = static_cast<int>(row.size());
  if (L < 2) throw DataError("row too short for a spectrum");
  std::vector<double> in(row);
  int nbins = L / 2 + 1;
  std::vector<fftw_complex> out(static_cast<size_t>(nbins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(L, in.data(), out.data(), FFTW_ESTIMATE);
  // FFTW_ESTIMATE may still overwrite the input while planning, so copy again.
  std::copy(row.begin(), row.end(), in.begin());
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  RowSpectrum rs;
  double inv_l = 1.0 / static_cast<double>(L);
  rs.dc_power = (out[0][0] * inv_l) * (out[0][0] * inv_l);
  rs.power.resize(static_cast<size_t>(L / 2));
  for (int k = 1; k <= L / 2; ++k) {
    double re = out[static_cast<size_t>(k)][0] * inv_l;
    double im = out[static_cast<size_t>(k)][1] * inv_l;
    rs.power[static_cast<size_t>(k - 1)] = 2.0 * (re * re + im * im);
  }
  return rs;
}

SpectrumResult zonal_power_spectrum(const GridField& field, const std::string& variable,
                                    double dx_km) {
  field.validate();
  if (!(dx_km > 0.0)) throw ConfigError("grid spacing must be positive");
  const float* ch = channel_ptr(field, variable);
  int H = field.height(), W = field.width();
  if (W < 2) throw DataError("field too narrow for a zonal spectrum");

  SpectrumResult result;
  result.rows = H;
  result.wavenumbers.resize(static_cast<size_t>(W / 2));
  result.wavelength_km.resize(static_cast<size_t>(W / 2));
  for (int k = 1; k <= W / 2; ++k) {
    result.wavenumbers[static_cast<size_t>(k - 1)] = k;
    result.wavelength_km[static_cast<size_t>(k - 1)] = static_cast<double>(W) * dx_km / k;
  }
  result.power.assign(static_cast<size_t>(W / 2), 0.0);

  std::vector<double> row(static_cast<size_t>(W));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) row[static_cast<size_t>(x)] = ch[static_cast<size_t>(y) * W + x];
    RowSpectrum rs = zonal_row_power(row);
    result.dc_power += rs.dc_power;
    for (size_t i = 0; i < rs.power.size(); ++i) result.power[i] += rs.power[i];
  }
  double inv_h = 1.0 / static_cast<double>(H);
  result.dc_power *= inv_h;
  for (auto& v : result.power) v *= inv_h;
  return result;
}

std::string SpectrumResult::to_csv() const {
  std::string out = "wavenumber,wavelength_km,power\n";
  char buf[96];
  for (size_t i = 0; i < wavenumbers.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.17g\n", wavenumbers[i], wavelength_km[i], power[i]);
    out += buf;
  }
  return out;
}

double fit_loglog_slope(const std::vector<int>& wavenumbers, const std::vector<double>& power,
                        int kmin, int kmax) {
  if (wavenumbers.size() != power.size()) throw DataError("wavenumber/power length mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < wavenumbers.size(); ++i) {
    int k = wavenumbers[i];
    if (k < kmin || k > kmax || !(power[i] > 0.0)) continue;
    double x = std::log(static_cast<double>(k));
    double y = std::log(power[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw DataError("fewer than 2 usable spectrum bins in [" + std::to_string(kmin) +
                             "," + std::to_string(kmax) + "]");
  double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw DataError("degenerate wavenumber range for slope fit");
  return (n * sxy - sx * sy) / denom;
}

namespace {

// Separable Gaussian filter over valid (fully interior) positions.
// in is [H,W]; out is [H-w+1, W-w+1].
void gauss_valid(const std::vector<double>& in, int H, int W, const std::vector<double>& g,
                 std::vector<double>& tmp, std::vector<double>& out) {
  int w = static_cast<int>(g.size());
  int oh = H - w + 1, ow = W - w + 1;
  tmp.assign(static_cast<size_t>(H) * ow, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < w; ++i) acc += g[static_cast<size_t>(i)] * in[static_cast<size_t>(y) * W + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  out.assign(static_cast<size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < w; ++i) acc += g[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
}

double ssim_planes(const std::vector<double>& t, const std::vector<double>& p, int H, int W,
                   const SsimOptions& opts) {
  if (opts.window < 1) throw ConfigError("ssim window must be >= 1");
  if (opts.window % 2 == 0) throw ConfigError("ssim window must be odd");
  if (H < opts.window || W < opts.window)
    throw DataError("field smaller than ssim window (" + std::to_string(H) + "x" +
                    std::to_string(W) + " vs window " + std::to_string(opts.window) + ")");

  double range;
  if (opts.fixed_range) {
    range = *opts.fixed_range;
  } else {
    auto [lo, hi] = std::minmax_element(t.begin(), t.end());
    range = *hi - *lo;
  }
  range = std::max(range, 1e-6);
  double c1 = (opts.k1 * range) * (opts.k1 * range);
  double c2 = (opts.k2 * range) * (opts.k2 * range);

  std::vector<double> g(static_cast<size_t>(opts.window));
  double center = (opts.window - 1) / 2.0;
  double gsum = 0.0;
  for (int i = 0; i < opts.window; ++i) {
    double d = i - center;
    g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * opts.sigma * opts.sigma));
    gsum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= gsum;

  size_t n = static_cast<size_t>(H) * W;
  std::vector<double> tt(n), pp(n), tp(n);
  for (size_t i = 0; i < n; ++i) {
    tt[i] = t[i] * t[i];
    pp[i] = p[i] * p[i];
    tp[i] = t[i] * p[i];
  }

  std::vector<double> tmp, mu_t, mu_p, e_tt, e_pp, e_tp;
  gauss_valid(t, H, W, g, tmp, mu_t);
  gauss_valid(p, H, W, g, tmp, mu_p);
  gauss_valid(tt, H, W, g, tmp, e_tt);
  gauss_valid(pp, H, W, g, tmp, e_pp);
  gauss_valid(tp, H, W, g, tmp, e_tp);

  double acc = 0.0;
  for (size_t i = 0; i < mu_t.size(); ++i) {
    double var_t = e_tt[i] - mu_t[i] * mu_t[i];
    double var_p = e_pp[i] - mu_p[i] * mu_p[i];
    double cov = e_tp[i] - mu_t[i] * mu_p[i];
    double numer = (2.0 * mu_t[i] * mu_p[i] + c1) * (2.0 * cov + c2);
    double denom = (mu_t[i] * mu_t[i] + mu_p[i] * mu_p[i] + c1) * (var_t + var_p + c2);
    acc += numer / denom;
  }
  return acc / static_cast<double>(mu_t.size());
}

}  // namespace

double ssim(const nn::Tensor& truth, const nn::Tensor& pred, const SsimOptions& opts) {
  if (!same_shape(truth, pred))
    throw DataError("ssim shape mismatch: " + truth.shape_str() + " vs " + pred.shape_str());
  if (truth.rank() != 2 && truth.rank() != 3) throw DataError("ssim expects [H,W] or [1,H,W]");
  int H = truth.rank() == 2 ? truth.dim(0) : truth.dim(1);
  int W = truth.rank() == 2 ? truth.dim(1) : truth.dim(2);
  if (truth.rank() == 3 && truth.dim(0) != 1)
    throw DataError("ssim on tensors expects a single channel");
  size_t n = static_cast<size_t>(H) * W;
  std::vector<double> t(n), p(n);
  for (size_t i = 0; i < n; ++i) {
    t[i] = truth.data[i];
    p[i] = pred.data[i];
  }
  return ssim_planes(t, p, H, W, opts);
}

double ssim(const GridField& truth, const GridField& pred, const std::string& variable,
            const SsimOptions& opts) {
  check_same_grid(truth, pred);
  const float* tc = channel_ptr(truth, variable);
  const float* pc = channel_ptr(pred, variable);
  int H = truth.height(), W = truth.width();
  size_t n = static_cast<size_t>(H) * W;
  std::vector<double> t(n), p(n);
  for (size_t i = 0; i < n; ++i) {
    t[i] = tc[i];
    p[i] = pc[i];
  }
  return ssim_planes(t, p, H, W, opts);
}

std::vector<std::string> Histogram::log10_labels() const {
  std::vector<std::string> labels;
  labels.reserve(counts.size());
  char buf[48];
  for (int64_t c : counts) {
    if (c <= 0) {
      labels.emplace_back();
    } else {
      std::snprintf(buf, sizeof(buf), "%.9g", std::log10(static_cast<double>(c)));
      labels.emplace_back(buf);
    }
  }
  return labels;
}

Histogram density_histogram(const std::vector<GridField>& fields, const std::string& variable,
                            int bins) {
  if (bins < 2) throw ConfigError("histogram needs at least 2 bins");
  if (fields.empty()) throw DataError("histogram needs at least one field");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& f : fields) {
    const float* ch = channel_ptr(f, variable);
    int64_t n = static_cast<int64_t>(f.height()) * f.width();
    for (int64_t i = 0; i < n; ++i) {
      lo = std::min(lo, static_cast<double>(ch[i]));
      hi = std::max(hi, static_cast<double>(ch[i]));
    }
  }

  Histogram h;
  h.counts.assign(static_cast<size_t>(bins), 0);
  h.edges.resize(static_cast<size_t>(bins) + 1);
  double width = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<size_t>(i)] = lo + width * i;
  h.edges.back() = hi;

  for (const auto& f : fields) {
    const float* ch = channel_ptr(f, variable);
    int64_t n = static_cast<int64_t>(f.height()) * f.width();
    for (int64_t i = 0; i < n; ++i) {
      int idx = width > 0.0 ? static_cast<int>((ch[i] - lo) / width) : 0;
      idx = std::clamp(idx, 0, bins - 1);
      ++h.counts[static_cast<size_t>(idx)];
      ++h.total;
    }
  }
  return h;
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw DataError("box stats of an empty sample");
  std::sort(values.begin(), values.end());
  auto quant = [&](double q) {
    double pos = q * static_cast<double>(values.size() - 1);
    size_t i = static_cast<size_t>(pos);
    double frac = pos - static_cast<double>(i);
    if (i + 1 >= values.size()) return values.back();
    return values[i] + frac * (values[i + 1] - values[i]);
  };
  BoxStats b;
  b.min = values.front();
  b.q25 = quant(0.25);
  b.median = quant(0.5);
  b.q75 = quant(0.75);
  b.max = values.back();
  return b;
}

MetricReport aggregate_report(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw DataError("cannot aggregate an empty metric set");
  using Key = std::tuple<std::string, std::string, int, std::string>;
  std::map<Key, std::vector<double>> pooled;
  for (const auto& r : rows)
    for (const auto& [metric, value] : r.metrics)
      pooled[{r.variable, r.method, r.lead_hours, metric}].push_back(value);

  MetricReport report;
  for (auto& [key, values] : pooled) {
    MetricSummary cell;
    cell.variable = std::get<0>(key);
    cell.method = std::get<1>(key);
    cell.lead_hours = std::get<2>(key);
    cell.metric = std::get<3>(key);
    cell.count = static_cast<int64_t>(values.size());
    cell.box = box_stats(std::move(values));
    report.cells.push_back(std::move(cell));
  }
  return report;
}

const MetricSummary* MetricReport::find(const std::string& variable, const std::string& method,
                                        int lead_hours, const std::string& metric) const {
  for (const auto& c : cells)
    if (c.variable == variable && c.method == method && c.lead_hours == lead_hours &&
        c.metric == metric)
      return &c;
  return nullptr;
}

std::string MetricReport::to_json() const {
  json j = json::array();
  for (const auto& c : cells) {
    j.push_back({{"variable", c.variable},
                 {"method", c.method},
                 {"lead_hours", c.lead_hours},
                 {"metric", c.metric},
                 {"count", c.count},
                 {"min", c.box.min},
                 {"q25", c.box.q25},
                 {"median", c.box.median},
                 {"q75", c.box.q75},
                 {"max", c.box.max}});
  }
  return j.dump(2);
}

std::string MetricReport::to_csv() const {
  std::string out = "variable,method,lead_hours,metric,count,min,q25,median,q75,max\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%s,%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  c.variable.c_str(), c.method.c_str(), c.lead_hours, c.metric.c_str(),
                  static_cast<long long>(c.count), c.box.min, c.box.q25, c.box.median, c.box.q75,
                  c.box.max);
    out += buf;
  }
  return out;
}

}  // namespace latcomp
