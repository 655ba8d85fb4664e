#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moghs/grammar.hpp"
#include "moghs/pareto.hpp"

namespace moghs {

using RewardVector = Eigen::VectorXd;

struct ArchiveEntry {
  DesignKey key;
  RewardVector reward;
  int episode = 0;
};

/// Global non-dominated set of evaluated designs, raw reward scale.
class ParetoArchive {
 public:
  explicit ParetoArchive(int objectives = 0) : m_(objectives) {}

  /// Inserts r unless some entry dominates or equals it; evicts entries r dominates.
  bool insert(const DesignKey& key, const RewardVector& r, int episode);

  int objectives() const { return m_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  Front front() const;

 private:
  int m_ = 0;
  std::vector<ArchiveEntry> entries_;
};

/// CSV: header row of objective names, then one reward vector per row.
void write_front_csv(std::ostream& out, const Front& front, const std::vector<std::string>& names);
Front read_front_csv(std::istream& in, std::vector<std::string>* names = nullptr);

/// Archive CSV adds the design key and episode columns.
void write_archive_csv(std::ostream& out, const ParetoArchive& archive, const std::vector<std::string>& names);

}  // namespace moghs
