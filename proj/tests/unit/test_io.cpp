// SPDX-License-Identifier: Apache-2.0
#include "core/error.hpp"
#include "core/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>

using namespace splitplot;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("splitplot_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("ingest two groups and infer the design") {
  const fs::path dir = scratch("two");
  write_text(dir / "g1.csv", "1,2\n3,4\n5,6\n7,8\n");
  write_text(dir / "g2.csv", "1,2,3\n4,5,6\n7,8,9\n1,1,1\n2,2,2\n3,3,3\n");
  write_text(dir / "manifest.txt", "# groups in order\ng1.csv\n\ng2.csv\n");
  const GroupedSample s = ingest_data(dir / "manifest.txt");
  CHECK(s.design().dims() == std::vector<std::size_t>{2, 3});
  CHECK(s.design().sizes() == std::vector<std::size_t>{4, 6});
  CHECK(s.group(1)(2, 1) == 8.0);
}

TEST_CASE("optional header line") {
  const fs::path dir = scratch("header");
  write_text(dir / "g.csv", "a,b\n1,2\n3,4\n");
  write_text(dir / "m.txt", "g.csv\n");
  CHECK(kind_of([&] { ingest_data(dir / "m.txt"); }) == ErrorKind::data);
  const GroupedSample s = ingest_data(dir / "m.txt", true);
  CHECK(s.design().sizes() == std::vector<std::size_t>{2});
}

TEST_CASE("ingestion errors name file and line") {
  const fs::path dir = scratch("errors");
  write_text(dir / "ragged.csv", "1,2\n3,4\n5\n");
  const std::string ragged = message_of([&] { read_matrix_csv(dir / "ragged.csv"); });
  CHECK(ragged.find("ragged.csv:3") != std::string::npos);
  CHECK(kind_of([&] { read_matrix_csv(dir / "ragged.csv"); }) == ErrorKind::data);

  write_text(dir / "text.csv", "1,2\n3,x\n");
  const std::string text = message_of([&] { read_matrix_csv(dir / "text.csv"); });
  CHECK(text.find("text.csv:2") != std::string::npos);
  CHECK(text.find("column 2") != std::string::npos);

  write_text(dir / "one.csv", "1,2\n");
  write_text(dir / "m.txt", "one.csv\n");
  const std::string small = message_of([&] { ingest_data(dir / "m.txt"); });
  CHECK(small.find("one.csv") != std::string::npos);
  CHECK(kind_of([&] { ingest_data(dir / "m.txt"); }) == ErrorKind::data);

  write_text(dir / "inf.csv", "1,inf\n2,3\n");
  CHECK(kind_of([&] { read_matrix_csv(dir / "inf.csv"); }) == ErrorKind::data);
  CHECK(kind_of([&] { read_matrix_csv(dir / "missing.csv"); }) == ErrorKind::io);
  write_text(dir / "empty.txt", "# nothing\n");
  CHECK(kind_of([&] { read_manifest(dir / "empty.txt"); }) == ErrorKind::data);
}

TEST_CASE("write then ingest is bitwise exact") {
  const fs::path dir = scratch("roundtrip");
  const StudyDesign d({3, 5}, {7, 4});
  GroupedSample s = test::random_sample(d, 1);
  std::vector<Matrix> groups = s.groups();
  groups[0](0, 0) = 1e-300;
  groups[0](1, 1) = -123456789.125;
  groups[1](0, 0) = 0.1 + 0.2;
  s = GroupedSample(d, groups);
  const fs::path manifest = write_sample(dir, s);
  const GroupedSample back = ingest_data(manifest);
  REQUIRE(back.design() == d);
  for (std::size_t i = 0; i < 2; ++i) CHECK((back.group(i).array() == s.group(i).array()).all());
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(0.05) == "0.05");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(0.1 + 0.2)) == 0.1 + 0.2);
}
