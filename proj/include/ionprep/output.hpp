#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#ifndef IONPREP_VERSION
#define IONPREP_VERSION "0.0.0"
#endif

namespace ionprep {

inline constexpr const char* version = IONPREP_VERSION;

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t h = 14695981039346656037ull);
std::string hex64(std::uint64_t h);

using Cell = std::variant<double, long, std::string>;

struct Table {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

// %.12e for doubles; "nan" and "inf" spelled out.
std::string format_number(double x);
std::string to_csv(const Table& t, const std::string& config_hash);
nlohmann::json to_json(const Table& t);
nlohmann::json number_json(double x);

void write_file(const std::string& path, const std::string& text);

// Collects output files of one run; writes them and a manifest.json.
class RunWriter {
 public:
  RunWriter(std::string out_dir, std::string config_hash);

  void add_table(const Table& t);                 // CSV plus JSON mirror
  void add_text(const std::string& file, const std::string& text);
  void set_summary(nlohmann::json j) { summary_ = std::move(j); }
  // writes every file, the summary and the manifest
  void finish(const nlohmann::json& manifest_fields);

  const std::string& hash() const { return hash_; }

 private:
  std::string dir_;
  std::string hash_;
  std::vector<std::pair<std::string, std::string>> files_;
  nlohmann::json tables_ = nlohmann::json::object();
  nlohmann::json summary_ = nlohmann::json::object();
};

}  // namespace ionprep
