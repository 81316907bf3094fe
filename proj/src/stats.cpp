#include "gesturerep/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gesturerep::stats {

namespace {

void require_same_length(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) throw DomainError(std::string(what) + ": inputs differ in length");
}

void check_p_values(std::span<const double> p) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("p-value outside [0, 1]");
  }
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  require_same_length(u, v, "cosine_similarity");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw DomainError("variance: need at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, "pearson");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, "spearman");
  if (x.size() < 3) throw DomainError("spearman: need at least three pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Correlation c;
  c.n = x.size();
  c.rho = pearson(rx, ry);
  const double df = static_cast<double>(c.n) - 2.0;
  if (std::abs(c.rho) >= 1.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
    c.p_value = student_t_two_sided_p(t, df);
  }
  return c;
}

TestResult welch_t_test(std::span<const double> a, std::span<const double> b, bool pooled) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("t-test: each sample needs at least two values");
  TestResult r;
  r.method = pooled ? "student_t" : "welch_t";
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  const double va = variance(a), vb = variance(b);
  if (va == 0.0 && vb == 0.0) throw DomainError("t-test: both samples have zero variance");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double se2 = 0.0;
  if (pooled) {
    const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    se2 = sp2 * (1.0 / na + 1.0 / nb);
    r.df = na + nb - 2.0;
  } else {
    const double qa = va / na, qb = vb / nb;
    se2 = qa + qb;
    r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  }
  r.statistic = (r.mean_a - r.mean_b) / std::sqrt(se2);
  r.p_value = student_t_two_sided_p(r.statistic, r.df);
  return r;
}

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, std::size_t exact_threshold) {
  if (a.empty() || b.empty()) throw DomainError("mann_whitney_u: empty sample");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  const double rank_sum_a = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
  const double shift = static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;
  const double u = rank_sum_a - shift;

  TestResult r;
  r.statistic = u;
  r.n_a = na;
  r.n_b = nb;
  r.mean_a = mean(a);
  r.mean_b = mean(b);

  if (na <= exact_threshold && nb <= exact_threshold) {
    // Enumerate every assignment of na of the pooled ranks to sample a.
    r.method = "mann_whitney_exact";
    std::size_t total = 0, le = 0, ge = 0;
    constexpr double kTol = 1e-9;
    std::vector<std::size_t> pick(na);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    while (true) {
      double s = 0.0;
      for (auto i : pick) s += ranks[i];
      const double uu = s - shift;
      ++total;
      if (uu <= u + kTol) ++le;
      if (uu >= u - kTol) ++ge;
      // next combination
      std::size_t k = na;
      while (k > 0 && pick[k - 1] == n - na + k - 1) --k;
      if (k == 0) break;
      ++pick[k - 1];
      for (std::size_t m = k; m < na; ++m) pick[m] = pick[m - 1] + 1;
    }
    const double tail = static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
    r.p_value = std::min(1.0, 2.0 * tail);
    return r;
  }

  r.method = "mann_whitney_normal";
  const double dna = static_cast<double>(na), dnb = static_cast<double>(nb), dn = static_cast<double>(n);
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mu = dna * dnb / 2.0;
  const double sigma2 = dna * dnb / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (sigma2 <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(sigma2);
  r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return r;
}

std::vector<double> bonferroni(std::span<const double> p_values) {
  check_p_values(p_values);
  const double m = static_cast<double>(p_values.size());
  std::vector<double> out(p_values.size());
  for (std::size_t i = 0; i < p_values.size(); ++i) out[i] = std::min(1.0, m * p_values[i]);
  return out;
}

std::vector<double> benjamini_hochberg(std::span<const double> p_values) {
  check_p_values(p_values);
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t idx = order[k];
    // m / (k + 1) >= 1, but the product can round below p itself
    const double q = std::max(p_values[idx], p_values[idx] * static_cast<double>(m) / static_cast<double>(k + 1));
    running = std::min(running, q);
    out[idx] = std::min(1.0, running);
  }
  return out;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DomainError("roc_auc: scores and labels differ in length");
  const auto ranks = average_ranks(scores);
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DomainError("roc_auc: labels must be 0 or 1");
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += ranks[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw DomainError("roc_auc: both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw DomainError("t distribution: df must be positive");
  if (std::isnan(t)) throw DomainError("t distribution: NaN statistic");
  if (std::isinf(t)) return 0.0;
  return std::min(1.0, regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)));
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace gesturerep::stats
