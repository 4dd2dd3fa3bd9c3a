#include "gpemc/diagnostics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <sstream>

namespace gpemc {

bool EssResult::any_flag() const {
  return std::any_of(zero_variance.begin(), zero_variance.end(), [](bool b) { return b; });
}

Vector autocovariance(const Vector& x) {
  const Index B = x.size();
  Index nfft = 1;
  while (nfft < 2 * B) nfft <<= 1;
  std::vector<double> buf(static_cast<std::size_t>(nfft), 0.0);
  const double mean = x.mean();
  for (Index i = 0; i < B; ++i) buf[static_cast<std::size_t>(i)] = x(i) - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> power;
  fft.fwd(power, buf);
  for (auto& c : power) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> ac;
  fft.inv(ac, power);
  Vector out(B);
  for (Index k = 0; k < B; ++k) out(k) = ac[static_cast<std::size_t>(k)] / static_cast<double>(B);
  return out;
}

EssResult ess(const Matrix& chain) {
  const Index B = chain.rows(), D = chain.cols();
  if (B < 10) throw TooFewPoints("ess: need at least 10 samples");
  EssResult r;
  r.ess.resize(D);
  r.zero_variance.assign(static_cast<std::size_t>(D), false);
  const double Bd = static_cast<double>(B);
  for (Index d = 0; d < D; ++d) {
    const Vector g = autocovariance(chain.col(d));
    const double scale = std::max(1.0, chain.col(d).cwiseAbs().maxCoeff());
    if (!(g(0) > 1e-28 * scale * scale)) {
      r.ess(d) = 1.0;
      r.zero_variance[static_cast<std::size_t>(d)] = true;
      continue;
    }
    // Paired sums Gamma_k = g(2k) + g(2k+1), kept while positive, made non-increasing.
    double sum = 0.0, prev = std::numeric_limits<double>::infinity();
    for (Index k = 0; 2 * k + 1 < B; ++k) {
      double G = g(2 * k) + g(2 * k + 1);
      if (!(G > 0.0)) break;
      G = std::min(G, prev);
      prev = G;
      sum += G;
    }
    // tau = -1 + 2 sum Gamma_k / gamma_0
    const double tau = -1.0 + 2.0 * sum / g(0);
    r.ess(d) = std::clamp(Bd / tau, 1.0, Bd);
  }
  return r;
}

ErrorCurve error_curves(const Matrix& chain, const std::vector<double>& wall, const Vector& truth_mean,
                        const Matrix& truth_cov) {
  const Index B = chain.rows(), D = chain.cols();
  if (static_cast<Index>(wall.size()) != B) throw ShapeMismatch("error_curves: one timestamp per row");
  if (truth_mean.size() != D || truth_cov.rows() != D || truth_cov.cols() != D)
    throw ShapeMismatch("error_curves: truth dimensions");
  for (Index i = 1; i < B; ++i)
    if (wall[static_cast<std::size_t>(i)] < wall[static_cast<std::size_t>(i - 1)])
      throw ShapeMismatch("error_curves: timestamps must be non-decreasing");
  const double mnorm = std::max(truth_mean.norm(), std::numeric_limits<double>::min());
  const double cnorm = std::max(truth_cov.norm(), std::numeric_limits<double>::min());
  ErrorCurve out;
  Vector s = Vector::Zero(D);
  Matrix ss = Matrix::Zero(D, D);
  for (Index i = 0; i < B; ++i) {
    const Vector x = chain.row(i).transpose();
    s += x;
    ss += x * x.transpose();
    const bool last_of_group = i + 1 == B || wall[static_cast<std::size_t>(i + 1)] > wall[static_cast<std::size_t>(i)];
    if (!last_of_group) continue;
    const double n = static_cast<double>(i + 1);
    const Vector mean = s / n;
    Matrix cov = Matrix::Zero(D, D);
    if (i > 0) cov = (ss - n * mean * mean.transpose()) / (n - 1.0);
    out.times.push_back(wall[static_cast<std::size_t>(i)]);
    out.rem.push_back((mean - truth_mean).norm() / mnorm);
    out.rec.push_back((cov - truth_cov).norm() / cnorm);
  }
  return out;
}

ChainSummary summarize(const Matrix& chain, const std::vector<int>& accepted, double wall_seconds,
                       const ChainSummary* baseline, std::string label) {
  ChainSummary s;
  s.label = std::move(label);
  s.samples = chain.rows();
  const Index D = chain.cols();
  if (chain.rows() >= 10) {
    const EssResult e = ess(chain);
    s.ess_per_dim = e.ess;
    s.ess_flag = e.any_flag();
  } else {
    s.ess_per_dim = Vector::Constant(D, std::max<double>(1.0, static_cast<double>(chain.rows())));
    s.ess_flag = true;
  }
  if (D > 0) {
    std::vector<double> v(s.ess_per_dim.data(), s.ess_per_dim.data() + D);
    std::sort(v.begin(), v.end());
    s.ess_min = v.front();
    s.ess_max = v.back();
    s.ess_med = D % 2 ? v[static_cast<std::size_t>(D / 2)]
                      : 0.5 * (v[static_cast<std::size_t>(D / 2 - 1)] + v[static_cast<std::size_t>(D / 2)]);
  }
  if (!accepted.empty()) {
    long long a = 0;
    for (int x : accepted) a += x != 0;
    s.acceptance = static_cast<double>(a) / static_cast<double>(accepted.size());
  }
  s.wall_seconds = wall_seconds;
  s.seconds_per_iter = s.samples > 0 ? wall_seconds / static_cast<double>(s.samples) : 0.0;
  s.min_ess_per_sec = wall_seconds > 0.0 ? s.ess_min / wall_seconds : 0.0;
  if (baseline) {
    s.speedup = baseline->min_ess_per_sec > 0.0 ? s.min_ess_per_sec / baseline->min_ess_per_sec : 0.0;
  }
  return s;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string format_table(const std::vector<ChainSummary>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %6s %10s %24s %10s %7s\n", "Algorithm", "AP", "s/iter", "ESS", "minESS/s",
                "spdup");
  os << line;
  for (const ChainSummary& r : rows) {
    const std::string e = "(" + fmt("%.0f", r.ess_min) + "," + fmt("%.0f", r.ess_med) + "," + fmt("%.0f", r.ess_max) + ")";
    const std::string sp = r.speedup ? fmt("%.2f", *r.speedup) : "--";
    std::snprintf(line, sizeof line, "%-16s %6.2f %10.2E %24s %10.2f %7s\n", r.label.c_str(), r.acceptance,
                  r.seconds_per_iter, e.c_str(), r.min_ess_per_sec, sp.c_str());
    os << line;
  }
  return os.str();
}

std::string summary_csv_header() {
  return "label,samples,AP,s_per_iter,ess_min,ess_med,ess_max,min_ess_per_s,spdup,wall_seconds,ess_flag";
}

std::string summary_csv_row(const ChainSummary& s) {
  std::ostringstream os;
  os.precision(17);
  os << s.label << ',' << s.samples << ',' << s.acceptance << ',' << s.seconds_per_iter << ',' << s.ess_min << ','
     << s.ess_med << ',' << s.ess_max << ',' << s.min_ess_per_sec << ',';
  if (s.speedup) os << *s.speedup;
  os << ',' << s.wall_seconds << ',' << (s.ess_flag ? 1 : 0);
  return os.str();
}

}  // namespace gpemc
