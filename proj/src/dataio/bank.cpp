#include "dvta/dataio/bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>

#include "dvta/dataio/feature_file.hpp"
#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"

namespace dvta {
namespace {

using nlohmann::json;

std::string id_list(const std::vector<int>& ids) {
  std::string s;
  for (int id : ids) {
    if (!s.empty()) s += ", ";
    s += std::to_string(id);
  }
  return s;
}

}  // namespace

ClassBank::ClassBank(std::vector<ClassInfo> classes, Matrix label_embeddings,
                     Matrix context_embeddings, std::set<int> seen, std::set<int> unseen)
    : classes_(std::move(classes)),
      label_embeddings_(l2_normalize_rows(label_embeddings)),
      context_embeddings_(l2_normalize_rows(context_embeddings)),
      seen_(std::move(seen)),
      unseen_(std::move(unseen)) {
  std::vector<std::string> problems;
  std::set<int> ids;
  for (const auto& c : classes_) {
    if (!ids.insert(c.id).second) problems.push_back("duplicate class id " + std::to_string(c.id));
  }
  for (int id : seen_) {
    if (unseen_.contains(id)) problems.push_back("class " + std::to_string(id) + " in both splits");
    if (!ids.contains(id)) problems.push_back("seen split references unknown class " + std::to_string(id));
  }
  for (int id : unseen_) {
    if (!ids.contains(id)) {
      problems.push_back("unseen split references unknown class " + std::to_string(id));
    }
  }
  for (int id : ids) {
    if (!seen_.contains(id) && !unseen_.contains(id)) {
      problems.push_back("class " + std::to_string(id) + " in neither split");
    }
  }
  if (label_embeddings_.rows() != classes_.size()) {
    problems.push_back("label_emb has " + std::to_string(label_embeddings_.rows()) + " rows for " +
                       std::to_string(classes_.size()) + " classes");
  }
  if (context_embeddings_.rows() != classes_.size()) {
    problems.push_back("context_emb has " + std::to_string(context_embeddings_.rows()) +
                       " rows for " + std::to_string(classes_.size()) + " classes");
  }
  if (label_embeddings_.cols() != context_embeddings_.cols()) {
    problems.push_back("label_emb and context_emb widths differ (" +
                       std::to_string(label_embeddings_.cols()) + " vs " +
                       std::to_string(context_embeddings_.cols()) + ")");
  }
  if (!label_embeddings_.all_finite() || !context_embeddings_.all_finite()) {
    problems.push_back("text embeddings contain non-finite values");
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

std::optional<std::size_t> ClassBank::index_of(int id) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t ClassBank::row_of(int id) const {
  auto idx = index_of(id);
  if (!idx) throw ContractViolation("unknown class id " + std::to_string(id));
  return *idx;
}

ClassBank ClassBank::subset(const std::set<int>& ids) const {
  std::vector<ClassInfo> classes;
  std::vector<double> label;
  std::vector<double> context;
  std::set<int> seen;
  std::set<int> unseen;
  for (int id : ids) {
    const std::size_t r = row_of(id);
    classes.push_back(classes_[r]);
    label.insert(label.end(), label_embeddings_.row(r).begin(), label_embeddings_.row(r).end());
    context.insert(context.end(), context_embeddings_.row(r).begin(),
                   context_embeddings_.row(r).end());
    (seen_.contains(id) ? seen : unseen).insert(id);
  }
  const std::size_t n = classes.size();
  return ClassBank(std::move(classes), Matrix(n, text_dim(), std::move(label)),
                   Matrix(n, text_dim(), std::move(context)), std::move(seen), std::move(unseen));
}

void validate_feature_bank(const FeatureBank& bank, const ClassBank& classes) {
  std::vector<std::string> problems;
  if (bank.labels.empty()) problems.push_back("feature bank is empty");
  if (bank.visual.rows() != bank.labels.size()) {
    problems.push_back("visual has " + std::to_string(bank.visual.rows()) + " rows but labels has " +
                       std::to_string(bank.labels.size()));
  }
  std::set<int> dangling;
  for (int id : bank.labels) {
    if (!classes.index_of(id)) dangling.insert(id);
  }
  if (!dangling.empty()) {
    problems.push_back("sample labels reference unknown classes: " +
                       id_list({dangling.begin(), dangling.end()}));
  }
  if (!bank.visual.all_finite()) problems.push_back("visual features contain non-finite values");
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

template <Split S>
SplitBank<S> restrict_to_split(const FeatureBank& bank, const ClassBank& classes) {
  const auto& keep = S == Split::kSeen ? classes.seen() : classes.unseen();
  FeatureBank out;
  std::vector<double> rows;
  for (std::size_t i = 0; i < bank.labels.size(); ++i) {
    if (!keep.contains(bank.labels[i])) continue;
    out.labels.push_back(bank.labels[i]);
    rows.insert(rows.end(), bank.visual.row(i).begin(), bank.visual.row(i).end());
  }
  out.visual = Matrix(out.labels.size(), bank.visual.cols(), std::move(rows));
  return SplitBank<S>(std::move(out));
}

template SeenBank restrict_to_split<Split::kSeen>(const FeatureBank&, const ClassBank&);
template UnseenBank restrict_to_split<Split::kUnseen>(const FeatureBank&, const ClassBank&);

Dataset load_manifest(const std::filesystem::path& path) {
  const auto manifest_path =
      std::filesystem::is_directory(path) ? path / kManifestName : path;
  if (!std::filesystem::exists(manifest_path)) {
    throw ValidationError({"manifest not found: " + manifest_path.string()});
  }
  std::ifstream in(manifest_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError({manifest_path.string() + ": " + e.what()});
  }

  std::vector<std::string> problems;
  std::vector<ClassInfo> classes;
  std::set<int> seen;
  std::set<int> unseen;
  std::map<std::string, std::filesystem::path> files;
  try {
    for (const auto& c : doc.at("classes")) {
      classes.push_back({c.at("id").get<int>(), c.value("name", std::string{})});
    }
    for (int id : doc.at("splits").at("seen")) seen.insert(id);
    for (int id : doc.at("splits").at("unseen")) unseen.insert(id);
    for (const char* key : {"visual", "labels", "label_emb", "context_emb"}) {
      std::filesystem::path p = doc.at("files").at(key).get<std::string>();
      if (p.is_relative()) p = manifest_path.parent_path() / p;
      if (!std::filesystem::exists(p)) problems.push_back("files." + std::string(key) + " missing: " + p.string());
      files[key] = p;
    }
  } catch (const json::exception& e) {
    throw ValidationError({manifest_path.string() + ": " + e.what()});
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));

  ClassBank bank(std::move(classes), load_feature_file(files["label_emb"]),
                 load_feature_file(files["context_emb"]), std::move(seen), std::move(unseen));

  const Matrix label_col = load_feature_file(files["labels"]);
  if (label_col.cols() != 1) {
    throw ValidationError({"labels file must have 1 column, has " + std::to_string(label_col.cols())});
  }
  FeatureBank samples;
  samples.visual = load_feature_file(files["visual"]);
  for (double x : label_col.data()) {
    if (x != std::round(x)) throw ValidationError({"non-integer label " + std::to_string(x)});
    samples.labels.push_back(static_cast<int>(x));
  }
  validate_feature_bank(samples, bank);
  return Dataset{std::move(bank), std::move(samples)};
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  json doc;
  doc["classes"] = json::array();
  for (const auto& c : data.classes.classes()) doc["classes"].push_back({{"id", c.id}, {"name", c.name}});
  doc["splits"]["seen"] = data.classes.seen();
  doc["splits"]["unseen"] = data.classes.unseen();
  doc["files"] = {{"visual", "visual.dvta"},
                  {"labels", "labels.dvta"},
                  {"label_emb", "label_emb.dvta"},
                  {"context_emb", "context_emb.dvta"}};
  Matrix labels(data.samples.labels.size(), 1);
  for (std::size_t i = 0; i < data.samples.labels.size(); ++i) labels(i, 0) = data.samples.labels[i];
  save_feature_file(dir / "visual.dvta", data.samples.visual);
  save_feature_file(dir / "labels.dvta", labels);
  save_feature_file(dir / "label_emb.dvta", data.classes.label_embeddings());
  save_feature_file(dir / "context_emb.dvta", data.classes.context_embeddings());
  write_text_atomic(dir / kManifestName, doc.dump(2) + "\n");
}

}  // namespace dvta
