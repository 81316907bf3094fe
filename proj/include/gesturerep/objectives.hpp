#pragma once

// Contrastive objectives over projected embeddings. Embeddings are
// L2-normalised (norm floor 1e-12) so dot products are cosine similarities.

#include "gesturerep/diffcore.hpp"

namespace gesturerep {

struct LossConfig {
  double temperature = 0.1;
};

// NT-Xent over 2N gesture views laid out as rows [0, N) = first views and
// rows [N, 2N) = second views; the positive of row i is row (i + N) mod 2N.
// Each anchor's denominator covers every other row (never the anchor itself).
// Returns the mean of the 2N anchor terms.
diff::Array unimodal_nt_xent(const diff::Array& views, const LossConfig& cfg = {});

// Symmetric cross-modal InfoNCE between index-aligned gesture and speech rows.
// Each anchor's denominator covers the N opposite-modality rows, including the
// positive. Returns (1 / 2N) * sum over l of [l(G->S) + l(S->G)].
diff::Array multimodal_info_nce(const diff::Array& gesture, const diff::Array& speech, const LossConfig& cfg = {});

// Arithmetic mean of the two objectives.
diff::Array combined_loss(const diff::Array& unimodal, const diff::Array& multimodal);
double combined_loss(double unimodal, double multimodal);

}  // namespace gesturerep
