#pragma once

// Statistical kernel: similarity, rank correlation, two-sample tests,
// multiple-testing corrections and ROC-AUC. All p-values are two-sided.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturerep::stats {

// Raised for inputs where a statistic is undefined (zero vectors, constant
// samples, single-class labels, p-values outside [0, 1]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::optional<double> adjusted_p;
  std::string method;
  double df = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

double cosine_similarity(std::span<const double> u, std::span<const double> v);

// 1-based ranks, ties receive the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
double mean(std::span<const double> x);
// Unbiased sample variance.
double variance(std::span<const double> x);

Correlation spearman(std::span<const double> x, std::span<const double> y);

// Welch's unequal-variance t-test; `pooled` switches to Student's pooled form.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b, bool pooled = false);

// U for sample a from rank sums. Exact permutation distribution over the
// pooled mid-ranks when both samples have at most exact_threshold values,
// otherwise the tie-corrected normal approximation with continuity correction.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, std::size_t exact_threshold = 8);

std::vector<double> bonferroni(std::span<const double> p_values);
std::vector<double> benjamini_hochberg(std::span<const double> p_values);

// Probability that a random positive outranks a random negative; ties count 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Distribution functions.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
double student_t_two_sided_p(double t, double df);
double normal_cdf(double z);

}  // namespace gesturerep::stats
