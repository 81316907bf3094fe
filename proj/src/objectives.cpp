#include "gesturerep/objectives.hpp"

#include <cmath>
#include <string>

namespace gesturerep {

using diff::Array;

namespace {

void check_temperature(const LossConfig& cfg) {
  if (!(cfg.temperature > 0.0)) throw diff::ContractError("loss: temperature must be positive");
}

Array similarity_logits(const Array& a, const Array& b, double temperature) {
  return diff::scale(diff::matmul(diff::l2_normalize(a), diff::transpose(diff::l2_normalize(b))),
                     1.0 / temperature);
}

// mean over rows of [logsumexp(row) - row[positive]]
Array cross_entropy_rows(const Array& logits, const std::vector<std::size_t>& positive,
                         const std::vector<bool>& mask = {}) {
  return diff::sum(diff::sub(diff::log_sum_exp(logits, mask), diff::gather_cols(logits, positive)));
}

}  // namespace

Array unimodal_nt_xent(const Array& views, const LossConfig& cfg) {
  check_temperature(cfg);
  if (views.rank() != 2) throw diff::ShapeError("unimodal_nt_xent: views must be (2N, d)");
  const std::size_t rows = views.dim(0);
  if (rows == 0 || rows % 2 != 0) {
    throw diff::ContractError("unimodal_nt_xent: need two views per instance, got " + std::to_string(rows) +
                              " rows");
  }
  const std::size_t n = rows / 2;
  const Array logits = similarity_logits(views, views, cfg.temperature);
  std::vector<bool> mask(rows * rows, true);
  std::vector<std::size_t> positive(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    mask[i * rows + i] = false;
    positive[i] = (i + n) % rows;
  }
  return diff::scale(cross_entropy_rows(logits, positive, mask), 1.0 / static_cast<double>(rows));
}

Array multimodal_info_nce(const Array& gesture, const Array& speech, const LossConfig& cfg) {
  check_temperature(cfg);
  if (gesture.rank() != 2 || speech.rank() != 2 || gesture.dim(1) != speech.dim(1)) {
    throw diff::ShapeError("multimodal_info_nce: expected (N, d) inputs, got " + diff::shape_str(gesture.shape()) +
                           " and " + diff::shape_str(speech.shape()));
  }
  if (gesture.dim(0) != speech.dim(0) || gesture.dim(0) == 0) {
    throw diff::ContractError("multimodal_info_nce: modality lists differ in length (" +
                              std::to_string(gesture.dim(0)) + " vs " + std::to_string(speech.dim(0)) + ")");
  }
  const std::size_t n = gesture.dim(0);
  const Array logits = similarity_logits(gesture, speech, cfg.temperature);
  std::vector<std::size_t> diagonal(n);
  for (std::size_t i = 0; i < n; ++i) diagonal[i] = i;
  const Array g_anchor = cross_entropy_rows(logits, diagonal);
  const Array s_anchor = cross_entropy_rows(diff::transpose(logits), diagonal);
  return diff::scale(diff::add(g_anchor, s_anchor), 1.0 / (2.0 * static_cast<double>(n)));
}

Array combined_loss(const Array& unimodal, const Array& multimodal) {
  return diff::scale(diff::add(unimodal, multimodal), 0.5);
}

double combined_loss(double unimodal, double multimodal) { return 0.5 * (unimodal + multimodal); }

}  // namespace gesturerep
