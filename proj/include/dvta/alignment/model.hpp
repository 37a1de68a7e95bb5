#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dvta/alignment/config.hpp"
#include "dvta/alignment/params.hpp"
#include "dvta/dataio/bank.hpp"
#include "dvta/dataio/sampler.hpp"
#include "dvta/numkernel/tape.hpp"

namespace dvta {

// ---------------------------------------------------------------------------
// Building blocks. Each evaluates the same graph code the trainer
// differentiates, with every parameter held constant.
// ---------------------------------------------------------------------------

/// Visual projector on L2-normalized rows: two layers with ReLU, or one
/// linear layer when config.deep_visual_projector is false.
Matrix project_visual(const ModelConfig& config, const ModelParams& params, const Matrix& visual);

/// Linear text projector on L2-normalized rows.
Matrix project_text(const ModelConfig& config, const ModelParams& params, const Matrix& text);

/// Cross-attention with query row q over keys/values {label_row, context_row}:
/// softmax([q.t_e, q.t_cont] / sqrt(h)) weighted sum of the two. Row-wise.
Matrix sde_augment(const Matrix& query, const Matrix& label, const Matrix& context);

struct SimilarityPair {
  Matrix v2t;
  Matrix t2v;
};

/// Row softmax of cosine(v_e_i, t_j) / tau and of its transpose.
SimilarityPair direct_similarity(const Matrix& visual_embed, const Matrix& text_embed, double tau);

/// G(v_e_i, t_j) for every pair: the metric network over [v_e_i, t_j]
/// followed by config.activation. Returns B x C.
Matrix dmn_scores(const ModelConfig& config, const ModelParams& params, const Matrix& visual_embed,
                  const Matrix& text_embed);
double dmn_score(const ModelConfig& config, const ModelParams& params,
                 std::span<const double> visual_row, std::span<const double> text_row);

/// Row softmax of G / tau and of its transpose.
SimilarityPair augmented_similarity(const ModelConfig& config, const ModelParams& params,
                                    const Matrix& visual_embed, const Matrix& text_embed, double tau);

/// Elementwise (p1 + p2) / 2.
Matrix fuse(const Matrix& p1, const Matrix& p2);

struct TargetPair {
  Matrix v2t;
  Matrix t2v;
};

/// Multi-positive targets: uniform over same-label entries of each row.
TargetPair build_targets(std::span<const int> labels);
/// Identity targets used by the InfoNCE and SoftmaxCE objectives.
TargetPair one_hot_targets(std::size_t batch);

/// Temperature actually used by a model (clamped exp(log_tau) when learnable).
double effective_tau(const ModelConfig& config, const ModelParams& params);

// ---------------------------------------------------------------------------
// Training objective
// ---------------------------------------------------------------------------

/// Everything recorded by one training forward pass.
struct ForwardCache {
  GradTape tape;
  std::vector<Var> params;  ///< aligned with ModelParams order
  std::vector<int> batch_classes;  ///< class id of each row of t_e / t_cont_e
  Var visual_embed;
  Var text_embed;
  Var context_embed;
  Var augmented_text;  ///< B x h, row j pairs with sample j's own class
  Var tau;
  std::optional<Var> p1_v2t, p1_t2v, p2_v2t, p2_t2v;
  Var p_v2t, p_t2v;
  TargetPair targets;
  Var loss;
};

struct LossResult {
  double value = 0.0;
  ForwardCache cache;
};

/// Joint objective KL(y_v2t || p_v2t) + KL(y_t2v || p_t2v), with p the fused,
/// direct-only or augmented-only score depending on use_da / use_aa. Throws
/// ContractViolation when a batch label is not a seen class of `classes`.
LossResult total_loss(const ModelConfig& config, const ModelParams& params, const Batch& batch,
                      const ClassBank& classes);

/// The same graph as total_loss with parameters held constant and no split
/// check; used to inspect similarity matrices of any batch.
LossResult forward_batch(const ModelConfig& config, const ModelParams& params, const Batch& batch,
                         const ClassBank& classes);

/// Reverse sweep of the cache's tape; gradients in ModelParams layout.
ModelParams gradients(ForwardCache& cache, const ModelParams& params);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// B x C score matrices against every class of a bank.
struct ClassScores {
  std::vector<int> class_ids;   ///< column order
  Matrix direct;                ///< p1 (empty when use_da is false)
  Matrix augmented;             ///< p2 (empty when use_aa is false)
  Matrix fused;                 ///< the score used for prediction
  std::vector<int> predicted;   ///< argmax per row, ties to the lowest class id
};

/// Scores every row of `visual` against every class in `candidates`. For each
/// (sample, class) pair the augmented text is computed with that sample's
/// visual embedding as the query.
ClassScores score_classes(const ModelConfig& config, const ModelParams& params,
                          const Matrix& visual, const ClassBank& candidates);

struct Classification {
  int predicted = 0;
  std::vector<int> class_ids;
  std::vector<double> scores;
};

/// Classifies one 1 x d_v feature against the unseen classes of `classes`.
/// Throws std::invalid_argument when there are none.
Classification classify(const ModelConfig& config, const ModelParams& params, const Matrix& visual,
                        const ClassBank& classes);

}  // namespace dvta
