#pragma once

// Independent reference implementations used as oracles by the unit and
// acceptance tests. Everything here is written directly from the textbook
// definitions, without calling into the library.

#include "gesturerep/pose_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Average ranks by counting: rank = 1 + #less + (#equal - 1) / 2.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      if (y < x[i]) less += 1;
      if (y == x[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

// NT-Xent, one anchor at a time: rows [0, N) first views, [N, 2N) second views.
inline double nt_xent(const std::vector<std::vector<double>>& z, double tau) {
  const std::size_t m = z.size();
  const std::size_t n = m / 2;
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t pos = (i + n) % m;
    double denom = 0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) denom += std::exp(cosine(z[i], z[k]) / tau);
    }
    total += -std::log(std::exp(cosine(z[i], z[pos]) / tau) / denom);
  }
  return total / static_cast<double>(m);
}

inline double info_nce(const std::vector<std::vector<double>>& g, const std::vector<std::vector<double>>& s, double tau) {
  const std::size_t n = g.size();
  double total = 0;
  for (std::size_t l = 0; l < n; ++l) {
    double dg = 0, ds = 0;
    for (std::size_t k = 0; k < n; ++k) {
      dg += std::exp(cosine(g[l], s[k]) / tau);
      ds += std::exp(cosine(s[l], g[k]) / tau);
    }
    const double pos = std::exp(cosine(g[l], s[l]) / tau);
    total += -std::log(pos / dg) - std::log(pos / ds);
  }
  return total / (2.0 * static_cast<double>(n));
}

// Tags follow the library's PairCondition order; -1 means the pair belongs to
// no set (same speaker in a different dialogue cannot happen in valid tables).
inline int pair_tag(const gesturerep::GestureRecord& a, const gesturerep::GestureRecord& b) {
  const bool ref = a.referent_id == b.referent_id;
  const bool spk = a.speaker_id == b.speaker_id;
  const bool dlg = a.dialogue_id == b.dialogue_id;
  if (dlg) {
    if (ref && spk) return 0;
    if (ref) return 1;
    if (spk) return 2;
    return 3;
  }
  if (spk) return -1;
  return ref ? 4 : 5;
}

// Window of `frames` frames with every coordinate drawn uniformly from
// [-scale, scale] and confidences in [0.5, 1].
inline gesturerep::SkeletonWindow random_window(std::size_t frames, std::mt19937_64& rng, double scale = 1.0) {
  gesturerep::SkeletonWindow w(frames, 25, "g");
  std::uniform_real_distribution<double> u(-scale, scale), c(0.5, 1.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < gesturerep::kJointCount; ++j) {
      w.at(0, t, j) = u(rng);
      w.at(1, t, j) = u(rng);
      w.at(2, t, j) = c(rng);
    }
  }
  return w;
}

inline double joint_distance(const gesturerep::SkeletonWindow& w, std::size_t t, std::size_t a, std::size_t b) {
  return std::hypot(w.at(0, t, a) - w.at(0, t, b), w.at(1, t, a) - w.at(1, t, b));
}

}  // namespace oracle
