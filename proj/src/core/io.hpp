// SPDX-License-Identifier: Apache-2.0
//
// CSV ingestion and persistence. Numbers are written with 17 significant
// digits so a write/read round trip is bitwise exact.
#pragma once

#include "core/linalg.hpp"
#include "core/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace splitplot {

/// Dense numeric CSV, comma separated. Throws ErrorKind::data naming the file
/// and line on ragged rows or non-numeric cells, ErrorKind::io when the file
/// cannot be opened.
Matrix read_matrix_csv(const std::filesystem::path& path, bool skip_header = false);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Group files in order. Relative paths resolve against the manifest's
/// directory; blank lines and lines starting with '#' are ignored.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

GroupedSample ingest_groups(const std::vector<std::filesystem::path>& files, bool skip_header = false);
GroupedSample ingest_data(const std::filesystem::path& manifest, bool skip_header = false);

/// Writes group_<i>.csv files and manifest.txt into `directory`; returns the
/// manifest path.
std::filesystem::path write_sample(const std::filesystem::path& directory, const GroupedSample& sample);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace splitplot
