#include "ionprep/output.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ionprep/ini.hpp"

namespace ionprep {

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

static std::string csv_cell(const Cell& c) {
  if (auto d = std::get_if<double>(&c)) return format_number(*d);
  if (auto l = std::get_if<long>(&c)) return std::to_string(*l);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

std::string to_csv(const Table& t, const std::string& config_hash) {
  std::string out = std::string("# ionprep ") + version + " config_hash=" + config_hash + "\n";
  for (size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += "\n";
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw std::logic_error("table " + t.name + ": ragged row");
    for (size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_cell(r[i]);
    out += "\n";
  }
  return out;
}

nlohmann::json number_json(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

nlohmann::json to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json o = nlohmann::json::object();
    for (size_t i = 0; i < r.size(); ++i) {
      if (auto d = std::get_if<double>(&r[i]))
        o[t.header[i]] = number_json(*d);
      else if (auto l = std::get_if<long>(&r[i]))
        o[t.header[i]] = *l;
      else
        o[t.header[i]] = std::get<std::string>(r[i]);
    }
    rows.push_back(o);
  }
  return {{"columns", t.header}, {"rows", rows}};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
  if (!f) throw ConfigError("write failed: " + path);
}

RunWriter::RunWriter(std::string out_dir, std::string config_hash)
    : dir_(std::move(out_dir)), hash_(std::move(config_hash)) {}

void RunWriter::add_table(const Table& t) {
  files_.push_back({t.name + ".csv", to_csv(t, hash_)});
  tables_[t.name] = to_json(t);
}

void RunWriter::add_text(const std::string& file, const std::string& text) {
  files_.push_back({file, text});
}

void RunWriter::finish(const nlohmann::json& fields) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (!std::filesystem::is_directory(dir_)) throw ConfigError("output directory not writable: " + dir_);
  nlohmann::json summary = {{"tool", "ionprep"}, {"version", version}, {"config_hash", hash_},
                            {"summary", summary_}, {"tables", tables_}};
  for (const auto& k : {"command", "config"})
    if (fields.contains(k)) summary[k] = fields[k];
  files_.push_back({"summary.json", summary.dump(2) + "\n"});

  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& [name, text] : files_) {
    write_file((std::filesystem::path(dir_) / name).string(), text);
    outputs[name] = hex64(fnv1a64(text));
  }
  nlohmann::json m = fields;
  m["tool"] = "ionprep";
  m["version"] = version;
  m["config_hash"] = hash_;
  m["outputs"] = outputs;
  m["determinism"] = "all computations are deterministic; no random numbers are drawn";
  write_file((std::filesystem::path(dir_) / "manifest.json").string(), m.dump(2) + "\n");
}

}  // namespace ionprep
