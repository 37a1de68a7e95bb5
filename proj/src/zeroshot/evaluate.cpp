#include "dvta/zeroshot/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dvta/alignment/model.hpp"
#include "dvta/dataio/crc32.hpp"
#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"

namespace dvta {
namespace {

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) {
    std::copy(m.row(r).begin(), m.row(r).end(), out.row(r - begin).begin());
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint32_t config_fingerprint(const ModelConfig& config) {
  const std::string text = to_json(config).dump();
  return crc32(std::as_bytes(std::span(text.data(), text.size())));
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& config, const UnseenBank& bank,
                    const ClassBank& classes, const EvalOptions& options) {
  return evaluate(params, config, bank.samples(), classes, options);
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& config, const FeatureBank& bank,
                    const ClassBank& classes, const EvalOptions& options) {
  const std::size_t n = bank.labels.size();
  if (bank.visual.rows() != n) throw ShapeError("evaluate: visual rows and labels differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!classes.is_unseen(bank.labels[i])) {
      throw ContractViolation("evaluate: sample " + std::to_string(i) + " has label " +
                              std::to_string(bank.labels[i]) + ", which is not an unseen class");
    }
  }
  if (classes.unseen().empty()) throw std::invalid_argument("evaluate: class bank has no unseen classes");
  const ClassBank candidates = classes.subset(classes.unseen());

  EvalReport report;
  report.seed = options.seed;
  report.config_fingerprint = config_fingerprint(config);
  report.params_checksum = params.checksum();
  report.predictions.assign(n, 0);

  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  const std::size_t items = (n + chunk - 1) / chunk;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t item = next++; item < items; item = next++) {
      try {
        const std::size_t begin = item * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        const ClassScores scores = score_classes(config, params, rows_of(bank.visual, begin, end), candidates);
        // Each work item owns a disjoint slice of predictions.
        std::copy(scores.predicted.begin(), scores.predicted.end(), report.predictions.begin() + begin);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(1, items));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::map<int, std::size_t> column;
  for (const auto& info : candidates.classes()) {
    column[info.id] = report.per_class.size();
    report.per_class.push_back({info.id, info.name, 0, 0, 0.0});
  }
  const std::size_t c = report.per_class.size();
  report.confusion.assign(c, std::vector<std::size_t>(c, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t truth = column.at(bank.labels[i]);
    const std::size_t pred = column.at(report.predictions[i]);
    ++report.confusion[truth][pred];
    ++report.per_class[truth].samples;
    if (truth == pred) {
      ++report.per_class[truth].correct;
      ++correct;
    }
  }
  for (auto& row : report.per_class) {
    row.accuracy = row.samples ? static_cast<double>(row.correct) / static_cast<double>(row.samples) : 0.0;
  }
  report.total = n;
  report.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& row : report.per_class) {
    per_class.push_back({{"id", row.id},
                         {"name", row.name},
                         {"samples", row.samples},
                         {"correct", row.correct},
                         {"accuracy", row.accuracy}});
  }
  return {{"accuracy", report.accuracy},
          {"total", report.total},
          {"per_class", per_class},
          {"confusion", report.confusion},
          {"config_fingerprint", report.config_fingerprint},
          {"params_checksum", report.params_checksum},
          {"seed", report.seed}};
}

std::string per_class_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "class_id,name,samples,correct,accuracy\n";
  for (const auto& row : report.per_class) {
    out << row.id << ',' << row.name << ',' << row.samples << ',' << row.correct << ','
        << format_double(row.accuracy) << '\n';
  }
  return out.str();
}

std::string confusion_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "true\\pred";
  for (const auto& row : report.per_class) out << ',' << row.id;
  out << '\n';
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    out << report.per_class[i].id;
    for (std::size_t v : report.confusion[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace dvta
