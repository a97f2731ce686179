#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ionprep {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sectioned key = value text. Keys may repeat; order is kept.
struct IniSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;
  std::string require(const std::string& key) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  bool has(const std::string& key) const { return get(key).has_value(); }
};

struct IniDocument {
  std::string source;  // path or label used in diagnostics
  std::vector<IniSection> sections;

  const IniSection* find(const std::string& name) const;
  const IniSection& require(const std::string& name) const;
  // all sections whose name starts with prefix, in file order
  std::vector<const IniSection*> with_prefix(const std::string& prefix) const;
};

IniDocument parse_ini(const std::string& text, const std::string& source = "<string>");
IniDocument load_ini(const std::string& path);
std::string read_file(const std::string& path);

double parse_number(const std::string& s, const std::string& where);
std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace ionprep
