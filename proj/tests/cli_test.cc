#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "endoslam/util/strings.h"

using namespace endoslam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("endoslam_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

// Runs the CLI with stdout and stderr captured into `log`; returns the exit code.
int cli(const std::string& args, const fs::path& log = fs::temp_directory_path() / "endoslam_cli_test.log") {
  const std::string cmd = std::string("\"") + ENDOSLAM_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const fs::path& small_dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch("plane");
    REQUIRE(cli("synth --kind plane --seed 4 --frames 6 -o \"" + d.string() + "\"") == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli: synth output is byte-identical for equal seeds") {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  REQUIRE(cli("synth --kind relief --seed 9 --frames 3 -o \"" + a.string() + "\"") == 0);
  REQUIRE(cli("synth --kind relief --seed 9 --frames 3 -o \"" + b.string() + "\"") == 0);
  for (const char* f : {"frame_000000.pgm", "frame_000002.pgm", "calib.txt", "groundtruth.txt",
                        "surface.obj", "visibility.csv"})
    CHECK(read_text_file(a / f) == read_text_file(b / f));
  CHECK(cli("synth --kind nonsense -o \"" + scratch("synth_c").string() + "\"") == 2);
}

TEST_CASE("cli: corrupt calibration is an input error with no outputs") {
  const fs::path bad = scratch("bad_calib");
  fs::copy(small_dataset(), bad);
  write_text_file(bad / "calib.txt", "fx=abc\n");
  const fs::path out = scratch("bad_calib_out");
  CHECK(cli("run \"" + bad.string() + "\" -o \"" + out.string() + "\" -q --deterministic") == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("cli: run writes the four outputs") {
  const fs::path out = scratch("run_out");
  CHECK(cli("run \"" + small_dataset().string() + "\" -o \"" + out.string() + "\" -q --deterministic") == 0);
  for (const char* f : {"trajectory.txt", "map.txt", "stats.txt", "timing.txt"}) CHECK(fs::exists(out / f));
  CHECK(cli("run \"" + scratch("missing").string() + "\" -o \"" + scratch("missing_out").string() + "\"") == 2);
  CHECK(cli("run \"" + small_dataset().string() + "\" -o \"" + scratch("densify_out").string() +
            "\" --densify maybe") == 2);
}

TEST_CASE("cli: vocabulary training") {
  const fs::path empty = scratch("empty_corpus");
  fs::create_directories(empty);
  CHECK(cli("vocab \"" + empty.string() + "\" -o \"" + (empty / "v.esv").string() + "\"") == 2);
  CHECK_FALSE(fs::exists(empty / "v.esv"));
  const fs::path voc = scratch("voc.esv");
  CHECK(cli("vocab \"" + small_dataset().string() + "\" -k 2 -L 1 -o \"" + voc.string() + "\"") == 0);
  CHECK(fs::exists(voc));
}

TEST_CASE("cli: config dump and evaluation commands") {
  const fs::path log = scratch("dump.log");
  REQUIRE(cli("config dump", log) == 0);
  const std::string dump = read_text_file(log);
  for (const char* line : {"search_factor = 1.5\n", "min_parallax_deg = 1.4035\n",
                           "max_reprojection_sq = 0.5991\n", "max_hamming = 45\n"})
    CHECK(dump.find(line) != std::string::npos);

  const fs::path cfg = scratch("typo.cfg");
  write_text_file(cfg, "[tracking]\nserch_factor = 1.5\n");
  CHECK(cli("config dump \"" + cfg.string() + "\"") == 2);

  const fs::path gt = small_dataset() / "groundtruth.txt";
  const fs::path ate = scratch("ate.log");
  REQUIRE(cli("eval-trajectory \"" + gt.string() + "\" \"" + gt.string() + "\"", ate) == 0);
  const std::string report = read_text_file(ate);
  REQUIRE(report.rfind("ate_rmse=", 0) == 0);
  CHECK(std::stod(report.substr(9)) < 1e-9);
  CHECK(report.find("pairs=6\n") != std::string::npos);
  CHECK(cli("eval-align \"" + scratch("nomap.txt").string() + "\" \"" +
            (small_dataset() / "surface.obj").string() + "\"") == 2);
  CHECK(cli("no-such-command") == 2);
}
