#include "cascal/table.hpp"

#include <cmath>
#include <string>

#include "cascal/error.hpp"

namespace cascal {

LogitsTable::LogitsTable(std::string name, Matrix logits, std::vector<Label> labels)
    : LogitsTable(std::move(name), std::move(logits), std::move(labels), true) {}

LogitsTable LogitsTable::unlabeled(std::string name, Matrix logits) {
  return LogitsTable(std::move(name), std::move(logits), {}, false);
}

LogitsTable::LogitsTable(std::string name, Matrix logits, std::vector<Label> labels,
                         bool require_labels)
    : name_(std::move(name)), logits_(std::move(logits)), labels_(std::move(labels)) {
  if (logits_.rows() < 1) raise(Errc::invalid_input, "table '" + name_ + "' has no instances");
  if (logits_.cols() < 2) {
    raise(Errc::invalid_input, "table '" + name_ + "' has " + std::to_string(logits_.cols()) +
                                   " classes; at least 2 required");
  }
  for (std::size_t r = 0; r < logits_.rows(); ++r) {
    for (double v : logits_.row(r)) {
      if (!std::isfinite(v)) {
        raise(Errc::invalid_input, "non-finite logit in row " + std::to_string(r));
      }
    }
  }
  if (require_labels && labels_.size() != logits_.rows()) {
    raise(Errc::dimension_mismatch, "table '" + name_ + "' has " +
                                        std::to_string(labels_.size()) + " labels for " +
                                        std::to_string(logits_.rows()) + " rows");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= logits_.cols()) {
      raise(Errc::label_out_of_range, "label " + std::to_string(labels_[i]) + " at row " +
                                          std::to_string(i) + " is not < C=" +
                                          std::to_string(logits_.cols()));
    }
  }
}

LogitsTable LogitsTable::renamed(std::string name) const {
  LogitsTable copy = *this;
  copy.name_ = std::move(name);
  return copy;
}

LogitsTable LogitsTable::without_labels() const {
  LogitsTable copy = *this;
  copy.labels_.clear();
  return copy;
}

LogitsTable concatenate(std::span<const LogitsTable> parts, std::string name) {
  if (parts.empty()) raise(Errc::invalid_argument, "nothing to concatenate");
  const std::size_t classes = parts.front().n_classes();
  const bool labeled = parts.front().has_labels();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.n_classes() != classes) {
      raise(Errc::inconsistent_classes, "cannot concatenate '" + p.name() + "' with C=" +
                                            std::to_string(p.n_classes()) + " into C=" +
                                            std::to_string(classes));
    }
    if (p.has_labels() != labeled) {
      raise(Errc::invalid_input, "cannot mix labeled and unlabeled tables");
    }
    rows += p.n_instances();
  }
  std::vector<double> data;
  data.reserve(rows * classes);
  std::vector<Label> labels;
  labels.reserve(labeled ? rows : 0);
  for (const auto& p : parts) {
    auto d = p.logits().data();
    data.insert(data.end(), d.begin(), d.end());
    labels.insert(labels.end(), p.labels().begin(), p.labels().end());
  }
  Matrix m(rows, classes, std::move(data));
  if (!labeled) return LogitsTable::unlabeled(std::move(name), std::move(m));
  return LogitsTable(std::move(name), std::move(m), std::move(labels));
}

}  // namespace cascal
