#include "test_util.hpp"

#include "wbipm/matrix_market.hpp"
#include "wbipm/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace wbipm;

namespace {

const std::string kSmall =
    "grid.nx = 8\ngrid.ny = 8\ngrid.nz = 4\ngrid.hx = 6.75\ngrid.hy = 6.75\ngrid.hz = 3.5\n"
    "layout.sources_x = 2\nlayout.sources_y = 2\nlayout.detectors_x = 4\n"
    "layout.detectors_y = 4\nseed = 5\n";

int run(const std::string& args, const testutil::TempDir& dir) {
  const std::string cmd =
      std::string(WBIPM_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
      (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command-line workflow") {
  testutil::TempDir dir("cli");
  testutil::write_text(dir / "small.cfg", kSmall + "solver.max_outer = 12\n");
  const std::string cfg = (dir / "small.cfg").string();
  const std::string bundle = (dir / "bundle").string();

  REQUIRE(run("generate " + cfg + " -o " + bundle + " --set noise.sigma=0.02", dir) == 0);
  const Problem p = read_bundle(bundle);
  CHECK(p.config.sigma == 0.02);
  CHECK(p.op->cols() == 256);

  const std::string rec1 = (dir / "fh.json").string(), rec2 = (dir / "wb.json").string();
  CHECK(run("solve " + bundle + " -m fhybr --solver-config " + cfg + " -o " + rec1 + " -q", dir) ==
        0);
  CHECK(run("solve " + bundle + " -m wbipm -w angle:20 --max-outer 12 --alpha 0.05 -o " + rec2 +
                " --dump-afgk " + (dir / "afgk").string(),
            dir) == 0);
  CHECK(testutil::read_text(dir / "stdout.txt").find("wbipm [angle:20]") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "wb.csv"));
  const RunRecord r = read_record(rec2);
  CHECK(r.solver_config.get_double("solver.alpha", 0) == 0.05);
  CHECK(r.history.size() <= 12);
  const Matrix z = mm::read_matrix(dir / "afgk" / "Z.mtx");
  CHECK(z.cols() == static_cast<Index>(r.history.size()));

  const std::string eval = (dir / "eval").string();
  CHECK(run("evaluate " + bundle + " " + rec1 + " " + rec2 + " -k 5 30 -o " + eval +
                " --sections 1-2,3-4",
            dir) == 0);
  CHECK(std::filesystem::exists(dir / "eval" / "errors.csv"));
  // k = 30 exceeds both histories: final iterates, header + 2 bands + overall.
  const std::string rmse = testutil::read_text(dir / "eval" / "rmse_k30.csv");
  CHECK(std::count(rmse.begin(), rmse.end(), '\n') == 4);
  // No snapshot at k = 5: the table is skipped with a warning.
  const std::string skipped = testutil::read_text(dir / "eval" / "rmse_k5.csv");
  CHECK(std::count(skipped.begin(), skipped.end(), '\n') == 1);
  CHECK(testutil::read_text(dir / "stderr.txt").find("warning") != std::string::npos);

  CHECK(run("rerun " + rec2 + " -o " + (dir / "again.json").string(), dir) == 0);
  CHECK(testutil::read_text(dir / "stdout.txt").find("identical") != std::string::npos);

  // Warm basis from an external file.
  mm::write_vector(dir / "prior.mtx", p.x_true + 0.1 * testutil::random_vector(256, 1));
  CHECK(run("solve " + bundle + " -w file:" + (dir / "prior.mtx").string() +
                " --max-outer 5 -q -o " + (dir / "file.json").string(),
            dir) == 0);

  testutil::write_text(dir / "sweep.cfg", kSmall +
                                              "solver.max_outer = 6\nsweep.noise = 0.05, 0.1\n"
                                              "sweep.angles = 20\nsweep.seeds = 2\n");
  CHECK(run("sweep " + (dir / "sweep.cfg").string() + " -o " + (dir / "sweep.csv").string() +
                " --cells " + (dir / "cells.csv").string(),
            dir) == 0);
  const std::string sweep = testutil::read_text(dir / "sweep.csv");
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 5);
  const std::string cells = testutil::read_text(dir / "cells.csv");
  CHECK(std::count(cells.begin(), cells.end(), '\n') == 9);
}

TEST_CASE("command-line errors map to exit codes") {
  testutil::TempDir dir("cli_err");
  testutil::write_text(dir / "small.cfg", kSmall);
  const std::string bundle = (dir / "b").string();
  REQUIRE(run("generate " + (dir / "small.cfg").string() + " -o " + bundle, dir) == 0);

  CHECK(run("", dir) == 2);
  CHECK(run("solve", dir) == 2);
  CHECK(run("solve " + bundle + " -m lsqr", dir) == 2);
  CHECK(run("solve " + bundle + " -m wbipm", dir) == 2);
  CHECK(run("solve " + (dir / "missing").string() + " -m fhybr", dir) == 2);
  CHECK(run("solve " + bundle + " -m fhybr --set solver.colour=blue", dir) == 2);
  CHECK(run("solve " + bundle + " -w angle:120", dir) == 2);

  mm::write_vector(dir / "short.mtx", Vector::Ones(10));
  CHECK(run("solve " + bundle + " -w file:" + (dir / "short.mtx").string(), dir) == 2);
  CHECK(testutil::read_text(dir / "stderr.txt").find("length") != std::string::npos);
  mm::write_vector(dir / "zero.mtx", Vector::Zero(256));
  CHECK(run("solve " + bundle + " -w file:" + (dir / "zero.mtx").string(), dir) == 2);

  testutil::write_text(dir / "bad.cfg", "grid.nx = 8\nwhat = 1\n");
  CHECK(run("generate " + (dir / "bad.cfg").string() + " -o " + (dir / "x").string(), dir) == 2);

  // A record that does not belong to the bundle.
  testutil::write_text(dir / "other.cfg", kSmall + "seed = 6\n");
  const std::string other = (dir / "other").string();
  REQUIRE(run("generate " + (dir / "other.cfg").string() + " -o " + other, dir) == 0);
  REQUIRE(run("solve " + other + " -m fhybr --max-outer 3 -q -o " + (dir / "o.json").string(),
              dir) == 0);
  CHECK(run("evaluate " + bundle + " " + (dir / "o.json").string() + " -o " +
                (dir / "ev").string(),
            dir) == 2);
}
