#include "dvta/zeroshot/export.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dvta/alignment/model.hpp"
#include "dvta/dataio/feature_file.hpp"
#include "dvta/zeroshot/evaluate.hpp"

namespace dvta {

SimilarityExport export_similarity_matrix(const ModelParams& params, const ModelConfig& config,
                                          const Batch& batch, const ClassBank& classes) {
  LossResult r = forward_batch(config, params, batch, classes);
  const auto& c = r.cache;
  SimilarityExport out;
  if (c.p1_v2t) out.p1 = c.tape.value(*c.p1_v2t);
  if (c.p2_v2t) out.p2 = c.tape.value(*c.p2_v2t);
  out.p = c.tape.value(c.p_v2t);
  out.y = c.targets.v2t;
  out.labels = batch.labels;
  return out;
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
  return out.str();
}

void write_similarity_csvs(const std::filesystem::path& dir, const SimilarityExport& sim) {
  std::filesystem::create_directories(dir);
  if (sim.p1) write_text_atomic(dir / "p1.csv", matrix_csv(*sim.p1));
  if (sim.p2) write_text_atomic(dir / "p2.csv", matrix_csv(*sim.p2));
  write_text_atomic(dir / "p.csv", matrix_csv(sim.p));
  write_text_atomic(dir / "y.csv", matrix_csv(sim.y));
}

PrincipalComponents principal_components(const Matrix& rows, std::size_t k, std::size_t max_iterations,
                                         double tolerance, std::uint64_t seed) {
  const std::size_t n = rows.rows();
  const std::size_t d = rows.cols();
  if (n == 0 || d == 0) throw std::invalid_argument("principal_components: empty input");
  if (k > d) throw std::invalid_argument("principal_components: k exceeds the dimension");

  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += rows(r, c);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix centered(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = rows(r, c) - mean[c];
  }

  Matrix cov(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += centered(r, a) * centered(r, b);
    }
  }
  PrincipalComponents out;
  for (double& x : cov.data()) x /= static_cast<double>(n);
  for (std::size_t a = 0; a < d; ++a) out.total_variance += cov(a, a);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  out.components = Matrix(k, d);
  std::vector<double> v(d), w(d);
  for (std::size_t comp = 0; comp < k; ++comp) {
    for (double& x : v) x = normal(rng);
    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iterations; ++it) {
      for (std::size_t a = 0; a < d; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < d; ++b) s += cov(a, b) * v[b];
        w[a] = s;
      }
      // Keep the iterate orthogonal to earlier components despite round-off.
      for (std::size_t prev = 0; prev < comp; ++prev) {
        double dot = 0.0;
        for (std::size_t a = 0; a < d; ++a) dot += w[a] * out.components(prev, a);
        for (std::size_t a = 0; a < d; ++a) w[a] -= dot * out.components(prev, a);
      }
      double norm = 0.0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        lambda = 0.0;
        break;
      }
      double change = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double next = w[a] / norm;
        change = std::max(change, std::abs(next - v[a]));
        v[a] = next;
      }
      lambda = norm;
      if (change < tolerance) break;
    }
    if (lambda == 0.0) {
      // Null space: any unit vector orthogonal to the previous ones.
      for (std::size_t prev = 0; prev < comp; ++prev) {
        double dot = 0.0;
        for (std::size_t a = 0; a < d; ++a) dot += v[a] * out.components(prev, a);
        for (std::size_t a = 0; a < d; ++a) v[a] -= dot * out.components(prev, a);
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      for (double& x : v) x = norm > 0.0 ? x / norm : 0.0;
    }
    for (std::size_t a = 0; a < d; ++a) out.components(comp, a) = v[a];
    out.variances.push_back(lambda);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov(a, b) -= lambda * v[a] * v[b];
    }
  }

  out.coordinates = Matrix(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t comp = 0; comp < k; ++comp) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += centered(r, a) * out.components(comp, a);
      out.coordinates(r, comp) = s;
    }
  }
  return out;
}

EmbeddingExport export_embeddings(const ModelParams& params, const ModelConfig& config, const FeatureBank& bank) {
  if (bank.labels.empty()) throw std::invalid_argument("export_embeddings: empty bank");
  EmbeddingExport out;
  out.embeddings = project_visual(config, params, bank.visual);
  out.labels = bank.labels;
  out.pca = principal_components(out.embeddings, std::min<std::size_t>(2, out.embeddings.cols()));
  return out;
}

std::string embeddings_csv(const EmbeddingExport& e) {
  std::ostringstream out;
  const std::size_t k = e.pca.coordinates.cols();
  out << "label";
  for (std::size_t c = 0; c < k; ++c) out << ",pc" << c + 1;
  for (std::size_t c = 0; c < e.embeddings.cols(); ++c) out << ",e" << c;
  out << '\n';
  for (std::size_t r = 0; r < e.embeddings.rows(); ++r) {
    out << e.labels[r];
    for (std::size_t c = 0; c < k; ++c) out << ',' << format_double(e.pca.coordinates(r, c));
    for (std::size_t c = 0; c < e.embeddings.cols(); ++c) out << ',' << format_double(e.embeddings(r, c));
    out << '\n';
  }
  return out.str();
}

}  // namespace dvta
