#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvta/alignment/config.hpp"
#include "dvta/alignment/params.hpp"
#include "dvta/dataio/bank.hpp"
#include "dvta/dataio/sampler.hpp"
#include "dvta/numkernel/matrix.hpp"

namespace dvta {

/// Visual-to-text similarity matrices of one batch, as seen by the loss.
struct SimilarityExport {
  std::optional<Matrix> p1;  // direct
  std::optional<Matrix> p2;  // augmented
  Matrix p;                  // the matrix entering the loss
  Matrix y;                  // its target
  std::vector<int> labels;
};

/// Batch may come from any split.
SimilarityExport export_similarity_matrix(const ModelParams& params, const ModelConfig& config,
                                          const Batch& batch, const ClassBank& classes);

/// Writes p1.csv, p2.csv (when present), p.csv and y.csv into dir.
void write_similarity_csvs(const std::filesystem::path& dir, const SimilarityExport& sim);

std::string matrix_csv(const Matrix& m);

struct PrincipalComponents {
  Matrix components;              // k x d, unit rows
  std::vector<double> variances;  // eigenvalues of the centered covariance
  double total_variance = 0.0;    // trace of the covariance
  Matrix coordinates;             // N x k projections of the centered rows
};

/// Top-k principal components by power iteration with deflation on the
/// covariance of the centered rows (divided by N).
PrincipalComponents principal_components(const Matrix& rows, std::size_t k = 2,
                                         std::size_t max_iterations = 2000, double tolerance = 1e-13,
                                         std::uint64_t seed = 0);

struct EmbeddingExport {
  Matrix embeddings;  // v_e, one row per sample
  std::vector<int> labels;
  PrincipalComponents pca;
};

/// Throws std::invalid_argument for an empty bank.
EmbeddingExport export_embeddings(const ModelParams& params, const ModelConfig& config, const FeatureBank& bank);

/// label,pc1,pc2,e0,e1,...
std::string embeddings_csv(const EmbeddingExport& exported);

}  // namespace dvta
