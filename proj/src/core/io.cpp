// SPDX-License-Identifier: Apache-2.0
#include "core/io.hpp"

#include "core/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace splitplot {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

double parse_cell(const std::string& cell, const fs::path& path, std::size_t line, std::size_t column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    fail(ErrorKind::data, path.string() + ":" + std::to_string(line) + ": column " + std::to_string(column) +
                              " is not a finite number ('" + cell + "')");
  }
  return value;
}

}  // namespace

Matrix read_matrix_csv(const fs::path& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_header && line_no == 1) continue;
    const std::string content = trim(line);
    if (content.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = content.find(',', start);
      const std::string cell = trim(std::string_view(content).substr(start, comma - start));
      row.push_back(parse_cell(cell, path, line_no, row.size() + 1));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": ragged row with " +
                                std::to_string(row.size()) + " columns, expected " + std::to_string(width));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::data, path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) fail(ErrorKind::io, "number formatting failed");
  return std::string(buf, ptr);
}

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

std::vector<fs::path> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + manifest.string());
  std::vector<fs::path> files;
  std::string line;
  while (std::getline(in, line)) {
    const std::string entry = trim(line);
    if (entry.empty() || entry.front() == '#') continue;
    fs::path p(entry);
    if (p.is_relative()) p = manifest.parent_path() / p;
    files.push_back(std::move(p));
  }
  if (files.empty()) fail(ErrorKind::data, "manifest " + manifest.string() + " lists no group files");
  return files;
}

GroupedSample ingest_groups(const std::vector<fs::path>& files, bool skip_header) {
  std::vector<Matrix> groups;
  std::vector<std::size_t> dims, sizes;
  for (const auto& file : files) {
    Matrix m = read_matrix_csv(file, skip_header);
    if (m.rows() < 2) {
      fail(ErrorKind::data, file.string() + ": group has " + std::to_string(m.rows()) +
                                " subject(s); at least 2 are required");
    }
    dims.push_back(static_cast<std::size_t>(m.cols()));
    sizes.push_back(static_cast<std::size_t>(m.rows()));
    groups.push_back(std::move(m));
  }
  return GroupedSample(StudyDesign(std::move(dims), std::move(sizes)), std::move(groups));
}

GroupedSample ingest_data(const fs::path& manifest, bool skip_header) {
  return ingest_groups(read_manifest(manifest), skip_header);
}

fs::path write_sample(const fs::path& directory, const GroupedSample& sample) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + directory.string() + ": " + ec.message());
  const fs::path manifest = directory / "manifest.txt";
  std::ofstream out(manifest, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + manifest.string());
  for (std::size_t i = 0; i < sample.design().groups(); ++i) {
    const std::string name = "group_" + std::to_string(i + 1) + ".csv";
    write_matrix_csv(directory / name, sample.group(i));
    out << name << '\n';
  }
  return manifest;
}

}  // namespace splitplot
