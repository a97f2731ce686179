#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ionprep/ini.hpp"
#include "properties.hpp"

#ifndef IONPREP_CLI
#define IONPREP_CLI "ionprep"
#endif

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("ionprep-cli-" + std::to_string(::getpid()) + "-" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(IONPREP_CLI) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string cfg(const std::string& name) { return props::source_path("configs/" + name); }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("repeated runs produce byte-identical outputs") {
  fs::path root = scratch("det");
  const std::vector<std::string> cases = {
      "fssp --config " + cfg("ca43_fssp.ini") + " --all-states",
      "pssp --config " + cfg("ca43_pssp.ini"),
      "alt --config " + cfg("ca43_alt.ini"),
      "budget --config " + cfg("ca43_budget.ini"),
      "levels --species Ca43 --field 28.8 --levels S12 P32",
  };
  int n = 0;
  for (const auto& c : cases) {
    CAPTURE(c);
    const fs::path a = root / ("a" + std::to_string(n)), b = root / ("b" + std::to_string(n));
    ++n;
    REQUIRE(run(c + " --out " + a.string() + " --jobs 1") == 0);
    REQUIRE(run(c + " --out " + b.string() + " --jobs 3") == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
      const std::string name = e.path().filename().string();
      if (name == "manifest.json") continue;  // records the output directory
      CAPTURE(name);
      CHECK(ionprep::read_file(e.path().string()) == ionprep::read_file((b / name).string()));
      ++files;
    }
    CHECK(files >= 2);
  }
  fs::remove_all(root);
}

TEST_CASE("CSV files carry the version and configuration hash") {
  fs::path root = scratch("csv");
  REQUIRE(run("fssp --config " + cfg("ca43_fssp.ini") + " --out " + root.string()) == 0);
  std::ifstream f(root / "trace.csv");
  std::string first, header;
  std::getline(f, first);
  std::getline(f, header);
  CHECK(first.rfind("# ionprep ", 0) == 0);
  CHECK(first.find("config_hash=") != std::string::npos);
  CHECK(header == "cycle,time_s,error");
  auto summary = nlohmann::json::parse(ionprep::read_file((root / "summary.json").string()));
  auto manifest = nlohmann::json::parse(ionprep::read_file((root / "manifest.json").string()));
  CHECK(first.find(manifest["config_hash"].get<std::string>()) != std::string::npos);
  CHECK(summary["summary"]["converged"] == true);
  CHECK(summary["tables"].contains("trace"));
  fs::remove_all(root);
}

TEST_CASE("configuration hash follows inputs") {
  fs::path root = scratch("hash");
  REQUIRE(run("levels --species Ca43 --field 28.8 --out " + (root / "a").string()) == 0);
  REQUIRE(run("levels --species Ca43 --field 28.9 --out " + (root / "b").string()) == 0);
  auto ha = nlohmann::json::parse(ionprep::read_file((root / "a/manifest.json").string()))["config_hash"];
  auto hb = nlohmann::json::parse(ionprep::read_file((root / "b/manifest.json").string()))["config_hash"];
  CHECK(ha != hb);
  fs::remove_all(root);
}

TEST_CASE("check re-runs a results directory") {
  fs::path root = scratch("check");
  REQUIRE(run("pssp --config " + cfg("ca43_pssp.ini") + " --out " + root.string()) == 0);
  CHECK(run("check " + root.string()) == 0);
  auto m = nlohmann::json::parse(ionprep::read_file((root / "manifest.json").string()));
  m["outputs"]["pssp.csv"] = "0000000000000000";
  write(root / "manifest.json", m.dump(2));
  CHECK(run("check " + root.string()) == 3);
  fs::remove_all(root);
}

TEST_CASE("exit codes") {
  fs::path root = scratch("exit");
  const std::string base = ionprep::read_file(cfg("ca43_fssp.ini"));

  CHECK(run("fssp --config " + (root / "missing.ini").string()) == 2);
  CHECK(run("fssp") == 2);

  write(root / "neg.ini", base + "\n[beam.bad]\ntransition = 397\nanchor = 3,3:4,4\ns = -1\nduration_us = 1\n");
  std::string t = ionprep::read_file((root / "neg.ini").string());
  t.replace(t.find("beam.866\n"), 9, "beam.866 beam.bad\n");
  write(root / "neg.ini", t);
  CHECK(run("fssp --config " + (root / "neg.ini").string() + " --out " + (root / "o1").string()) == 2);

  std::string cap = base;
  cap.replace(cap.find("max_cycles = 100000"), 19, "max_cycles = 5");
  write(root / "cap.ini", cap);
  CHECK(run("fssp --config " + (root / "cap.ini").string() + " --out " + (root / "o2").string()) == 4);
  CHECK(run("fssp --config " + (root / "cap.ini").string() + " --allow-partial --out " +
            (root / "o3").string()) == 0);
  CHECK(fs::exists(root / "o2" / "trace.csv"));

  // two beams on the same upper states in one step
  std::string lam = base + "\n[beam.car]\ntransition = 397\nanchor = 4,3:4,4\ns = 1\nweights = 0 0 1\nduration_us = 0.15\n";
  lam.replace(lam.find("beam.397 beam.866"), 17, "beam.397+beam.car beam.866");
  write(root / "lam.ini", lam);
  CHECK(run("fssp --config " + (root / "lam.ini").string() + " --out " + (root / "o4").string()) == 3);

  CHECK(run("fssp --config " + cfg("ca43_fssp.ini") + " --initial 5,0 --out " + (root / "o5").string()) == 2);
  fs::remove_all(root);
}

TEST_CASE("species directory from the environment") {
  fs::path root = scratch("env");
  const std::string cmd = "IONPREP_SPECIES_DIR=" + props::species_dir() + " " + IONPREP_CLI +
                          " levels --species Mg25 --out " + root.string() + " > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(run("levels --species Nope --species-dir " + props::species_dir() + " --out " + root.string()) == 2);
  fs::remove_all(root);
}
