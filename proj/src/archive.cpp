#include "moghs/archive.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace moghs {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

bool ParetoArchive::insert(const DesignKey& key, const RewardVector& r, int episode) {
  if (m_ == 0) m_ = static_cast<int>(r.size());
  if (r.size() != m_) throw std::invalid_argument("archive insert: objective count mismatch");
  for (const ArchiveEntry& e : entries_)
    if (dominates(e.reward, r) || e.reward == r) return false;
  std::erase_if(entries_, [&](const ArchiveEntry& e) { return dominates(r, e.reward); });
  entries_.push_back({key, r, episode});
  return true;
}

Front ParetoArchive::front() const {
  Front f(static_cast<Eigen::Index>(entries_.size()), m_);
  for (std::size_t i = 0; i < entries_.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = entries_[i].reward.transpose();
  return f;
}

void write_front_csv(std::ostream& out, const Front& front, const std::vector<std::string>& names) {
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (Eigen::Index i = 0; i < front.rows(); ++i) {
    for (Eigen::Index j = 0; j < front.cols(); ++j) out << (j ? "," : "") << format_double(front(i, j));
    out << '\n';
  }
}

Front read_front_csv(std::istream& in, std::vector<std::string>* names) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("front CSV: missing header");
  const auto header = split_csv(line);
  if (names) *names = header;
  const auto m = static_cast<Eigen::Index>(header.size());
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<Eigen::Index>(cells.size()) != m)
      throw std::runtime_error("front CSV: wrong column count on line " + std::to_string(line_no));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  Front f(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < m; ++j) f(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return f;
}

void write_archive_csv(std::ostream& out, const ParetoArchive& archive, const std::vector<std::string>& names) {
  out << "key,episode";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const ArchiveEntry& e : archive.entries()) {
    out << e.key.hex() << ',' << e.episode;
    for (Eigen::Index j = 0; j < e.reward.size(); ++j) out << ',' << format_double(e.reward(j));
    out << '\n';
  }
}

}  // namespace moghs
