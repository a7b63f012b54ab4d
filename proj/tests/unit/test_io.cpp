#include <charconv>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "nmor/error.hpp"
#include "nmor/io.hpp"

using namespace nmor;

TEST_CASE("numbers print in shortest round-trip form") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(-1e-11) == "-1e-11");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::pow(10.0, u(rng)) * (k % 2 ? -1.0 : 1.0);
    const std::string s = format_number(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
}

TEST_CASE("csv and jsonl tables") {
  Table t;
  t.columns = {"t_seconds", "label", "n"};
  t.add({0.5, std::string("wave_mixing"), std::int64_t{3}});
  t.add({1e-4, std::string("a,\"b\""), std::int64_t{-1}});
  CHECK(to_csv(t) == "t_seconds,label,n\n0.5,wave_mixing,3\n1e-04,\"a,\"\"b\"\"\",-1\n");
  CHECK(to_jsonl(t) ==
        "{\"t_seconds\":0.5,\"label\":\"wave_mixing\",\"n\":3}\n"
        "{\"t_seconds\":0.0001,\"label\":\"a,\\\"b\\\"\",\"n\":-1}\n");
  CHECK_THROWS(t.add({1.0}));
}

TEST_CASE("format names") {
  CHECK(output_format_from_string("csv") == OutputFormat::csv);
  CHECK(output_format_from_string("jsonl") == OutputFormat::jsonl);
  CHECK(extension(OutputFormat::jsonl) == ".jsonl");
  CHECK(to_string(OutputFormat::csv) == "csv");
  CHECK_THROWS_AS(output_format_from_string("xlsx"), ValidationError);
}

TEST_CASE("files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "nmor_io_test";
  std::filesystem::create_directories(dir);
  Table t;
  t.columns = {"freq_hz", "psd_v2_per_hz"};
  t.add({40.0, 1.5e-9});
  const auto name = write_table(dir, "spectrum", OutputFormat::csv, t);
  CHECK(name == "spectrum.csv");
  CHECK(read_text(dir / name) == to_csv(t));
  CHECK_THROWS_AS(read_text(dir / "missing.json"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("version string") {
  CHECK(library_version().starts_with("0.1.0"));
}
