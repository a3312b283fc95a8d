#include "srlab/harness/analysis.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace srlab {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double student_t_975(std::size_t dof) {
  if (dof == 0) return kNan;
  const boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, 0.025));
}

double LinearFit::ci_low() const { return slope - student_t_975(points >= 2 ? points - 2 : 0) * slope_stderr; }
double LinearFit::ci_high() const { return slope + student_t_975(points >= 2 ? points - 2 : 0) * slope_stderr; }

nlohmann::json LinearFit::to_json() const {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"slope", num(slope)},
          {"intercept", num(intercept)},
          {"slope_stderr", num(slope_stderr)},
          {"ci95", {num(ci_low()), num(ci_high())}},
          {"r_squared", num(r_squared)},
          {"points", points}};
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_linear needs equal-length inputs");
  LinearFit fit{kNan, kNan, kNan, kNan, x.size()};
  if (x.size() < 2) return fit;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double sse = std::max(0.0, syy - fit.slope * sxy);
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_stderr = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : kNan;
  return fit;
}

LinearFit fit_log_log(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (y[i] > 0.0 && x[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  return fit_linear(lx, ly);
}

double geometric_ratio(std::span<const double> kappa, double floor) {
  if (kappa.size() < 2) return kNan;
  const double limit = kappa.back();
  std::vector<double> ratios;
  for (std::size_t t = 0; t + 1 < kappa.size(); ++t) {
    const double gap = std::abs(kappa[t] - limit);
    if (gap > floor) ratios.push_back(std::abs(kappa[t + 1] - limit) / gap);
  }
  if (ratios.empty()) return kNan;
  const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
  std::nth_element(ratios.begin(), mid, ratios.end());
  if (ratios.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(ratios.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace srlab
