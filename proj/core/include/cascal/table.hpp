#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cascal/matrix.hpp"

namespace cascal {

using Label = std::uint32_t;

// N x C raw classifier outputs plus (optionally) N ground-truth labels.
//
// Invariants, checked at construction: N >= 1, C >= 2, every logit finite,
// every label < C. Row order is the canonical instance order. Tables are
// immutable once built and safe to share across threads.
class LogitsTable {
 public:
  LogitsTable(std::string name, Matrix logits, std::vector<Label> labels);

  // Test-time tables need no labels; metrics that need them reject these.
  static LogitsTable unlabeled(std::string name, Matrix logits);

  std::size_t n_instances() const noexcept { return logits_.rows(); }
  std::size_t n_classes() const noexcept { return logits_.cols(); }
  const Matrix& logits() const noexcept { return logits_; }
  std::span<const Label> labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  const std::string& name() const noexcept { return name_; }

  LogitsTable renamed(std::string name) const;
  LogitsTable without_labels() const;

  bool operator==(const LogitsTable&) const = default;

 private:
  LogitsTable(std::string name, Matrix logits, std::vector<Label> labels, bool require_labels);

  std::string name_;
  Matrix logits_;
  std::vector<Label> labels_;
};

// Row-wise concatenation; all parts must share C and label presence.
LogitsTable concatenate(std::span<const LogitsTable> parts, std::string name);

enum class SplitRole { train, validation, test };
enum class Distribution { in_distribution, shifted };

struct SplitTag {
  SplitRole role;
  Distribution distribution;
  bool operator==(const SplitTag&) const = default;
};

// A table with fixed role/distribution tags (pi vs rho data).
class LabelledSplit {
 public:
  LabelledSplit(LogitsTable table, SplitTag tag) : table_(std::move(table)), tag_(tag) {}

  const LogitsTable& table() const noexcept { return table_; }
  SplitTag tag() const noexcept { return tag_; }

 private:
  LogitsTable table_;
  SplitTag tag_;
};

}  // namespace cascal
