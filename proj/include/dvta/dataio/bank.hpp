#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dvta/numkernel/matrix.hpp"

namespace dvta {

struct ClassInfo {
  int id = 0;
  std::string name;
};

/// Class list with its label and context text embeddings.
///
/// Row k of both embedding matrices belongs to classes[k]. Embedding rows are
/// L2-normalized at construction.
class ClassBank {
 public:
  ClassBank() = default;
  /// Throws ValidationError listing every problem found.
  ClassBank(std::vector<ClassInfo> classes, Matrix label_embeddings, Matrix context_embeddings,
            std::set<int> seen, std::set<int> unseen);

  const std::vector<ClassInfo>& classes() const noexcept { return classes_; }
  const Matrix& label_embeddings() const noexcept { return label_embeddings_; }
  const Matrix& context_embeddings() const noexcept { return context_embeddings_; }
  const std::set<int>& seen() const noexcept { return seen_; }
  const std::set<int>& unseen() const noexcept { return unseen_; }
  std::size_t size() const noexcept { return classes_.size(); }
  std::size_t text_dim() const noexcept { return label_embeddings_.cols(); }

  std::optional<std::size_t> index_of(int id) const;
  std::size_t row_of(int id) const;  // throws ContractViolation for unknown ids
  bool is_seen(int id) const { return seen_.contains(id); }
  bool is_unseen(int id) const { return unseen_.contains(id); }

  /// Sub-bank with the given ids, rows ordered by ascending class id.
  ClassBank subset(const std::set<int>& ids) const;

 private:
  std::vector<ClassInfo> classes_;
  Matrix label_embeddings_;
  Matrix context_embeddings_;
  std::set<int> seen_;
  std::set<int> unseen_;
};

/// Visual features (one sample per row) and each row's class id.
struct FeatureBank {
  Matrix visual;
  std::vector<int> labels;
};

struct Dataset {
  ClassBank classes;
  FeatureBank samples;
};

enum class Split { kSeen, kUnseen };

/// Samples of a single split. Only restrict_to_split() can build one, so an
/// API taking SplitBank<Split::kSeen> cannot receive unseen-class samples.
template <Split S>
class SplitBank {
 public:
  const Matrix& visual() const noexcept { return samples_.visual; }
  const std::vector<int>& labels() const noexcept { return samples_.labels; }
  std::size_t size() const noexcept { return samples_.labels.size(); }
  const FeatureBank& samples() const noexcept { return samples_; }

 private:
  explicit SplitBank(FeatureBank samples) : samples_(std::move(samples)) {}
  template <Split T>
  friend SplitBank<T> restrict_to_split(const FeatureBank&, const ClassBank&);

  FeatureBank samples_;
};

using SeenBank = SplitBank<Split::kSeen>;
using UnseenBank = SplitBank<Split::kUnseen>;

/// Keeps only rows whose label belongs to split S, preserving order.
template <Split S>
SplitBank<S> restrict_to_split(const FeatureBank& bank, const ClassBank& classes);

/// Checks bank/class consistency; throws ValidationError listing offenders.
void validate_feature_bank(const FeatureBank& bank, const ClassBank& classes);

// Manifest (JSON):
//   {"classes":[{"id":int,"name":str}],
//    "splits":{"seen":[ids],"unseen":[ids]},
//    "files":{"visual":path,"labels":path,"label_emb":path,"context_emb":path}}
// Relative paths resolve against the manifest's directory.
inline constexpr const char* kManifestName = "manifest.json";

/// Accepts a manifest file or a directory containing manifest.json.
Dataset load_manifest(const std::filesystem::path& path);

/// Writes manifest.json plus the four feature files into dir.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace dvta
