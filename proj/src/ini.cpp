#include "ionprep/ini.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace ionprep {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& raw, const std::string& where) {
  std::string s = trim(raw);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s.empty()) throw ConfigError(where + ": empty number");
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end == s.c_str() || *end != '\0')
    throw ConfigError(where + ": not a number: '" + s + "'");
  return v;
}

std::optional<std::string> IniSection::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return std::nullopt;
}

std::vector<std::string> IniSection::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries)
    if (k == key) out.push_back(v);
  return out;
}

std::string IniSection::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw ConfigError("[" + name + "] missing key '" + key + "'");
  return *v;
}

double IniSection::number(const std::string& key) const {
  return parse_number(require(key), "[" + name + "] " + key);
}

double IniSection::number_or(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_number(*v, "[" + name + "] " + key) : fallback;
}

const IniSection* IniDocument::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

const IniSection& IniDocument::require(const std::string& name) const {
  const auto* s = find(name);
  if (!s) throw ConfigError(source + ": missing section [" + name + "]");
  return *s;
}

std::vector<const IniSection*> IniDocument::with_prefix(const std::string& prefix) const {
  std::vector<const IniSection*> out;
  for (const auto& s : sections)
    if (s.name.rfind(prefix, 0) == 0) out.push_back(&s);
  return out;
}

static std::string strip_comment(const std::string& line) {
  // '#' or ';' starts a comment at line start or after whitespace
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if ((c == '#' || c == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
      return line.substr(0, i);
  }
  return line;
}

IniDocument parse_ini(const std::string& text, const std::string& source) {
  IniDocument doc;
  doc.source = source;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(source + ":" + std::to_string(lineno) + ": malformed section header");
      IniSection sec;
      sec.name = trim(t.substr(1, t.size() - 2));
      if (doc.find(sec.name))
        throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate section [" +
                          sec.name + "]");
      doc.sections.push_back(std::move(sec));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    if (doc.sections.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) + ": key outside any section");
    doc.sections.back().entries.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return doc;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

IniDocument load_ini(const std::string& path) { return parse_ini(read_file(path), path); }

}  // namespace ionprep
