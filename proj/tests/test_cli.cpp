#include <doctest.h>

#include <sstream>

#include "cellcount/cli.hpp"
#include "cellcount/csv.hpp"
#include "cellcount/imaging.hpp"
#include "tempdir.hpp"

using namespace cellcount;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::filesystem::path& path) { return path.string(); }

std::string slurp(const std::filesystem::path& path) { return csv::read_file(path.string()); }

}  // namespace

TEST_CASE("usage errors exit with the config code") {
  CHECK(cli_run({}).code == cli::kConfigError);
  CHECK(cli_run({"frobnicate"}).code == cli::kConfigError);
  CHECK(cli_run({"split", "--ratio", "0.8"}).code == cli::kConfigError);
  CHECK(cli_run({"--help"}).code == cli::kOk);
}

TEST_CASE("synth prints statistics and rejects negative counts") {
  TempDir dir("cli_synth");
  const auto r = cli_run({"synth", "--out", p(dir / "data"), "--n", "6", "--seed", "2"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("| all | 6 |") != std::string::npos);
  csv::write_file(p(dir / "bad.cfg"), "scene.count.mode = fixed\nscene.count.n = -1\n");
  const auto bad = cli_run({"synth", "--spec", p(dir / "bad.cfg"), "--out", p(dir / "x")});
  CHECK(bad.code == cli::kConfigError);
  CHECK(bad.err.find("must be >= 0") != std::string::npos);
}

TEST_CASE("split fails cleanly on infeasible k and is reproducible") {
  TempDir dir("cli_split");
  REQUIRE(cli_run({"synth", "--out", p(dir / "data"), "--n", "30", "--seed", "1"}).code == 0);
  CHECK(cli_run({"split", "--data", p(dir / "data"), "--out", p(dir / "s.csv"), "--bins", "500"}).code ==
        cli::kConfigError);
  REQUIRE(cli_run({"split", "--data", p(dir / "data"), "--out", p(dir / "a.csv"), "--seed", "4"}).code == 0);
  REQUIRE(cli_run({"split", "--data", p(dir / "data"), "--out", p(dir / "b.csv"), "--seed", "4"}).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
}

TEST_CASE("missing stage artifacts name the file") {
  TempDir dir("cli_missing");
  const auto r = cli_run({"train", "--data", p(dir / "nothing"), "--split", p(dir / "s.csv"), "--out", p(dir / "run")});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("metadata.csv") != std::string::npos);
  REQUIRE(cli_run({"synth", "--out", p(dir / "data"), "--n", "10"}).code == 0);
  const auto e = cli_run({"eval", "--data", p(dir / "data"), "--split", p(dir / "nosplit.csv"), "--checkpoint",
                          p(dir / "none.ckpt"), "--out", p(dir / "ev")});
  CHECK(e.code == cli::kDataError);
  CHECK(e.err.find("nosplit.csv") != std::string::npos);
}

TEST_CASE("ingest cleans a CellCounter directory") {
  TempDir dir("cli_ingest");
  std::filesystem::create_directories(dir / "src/images");
  std::filesystem::create_directories(dir / "src/annotations");
  for (int i = 0; i < 3; ++i) {
    const auto stem = "img" + std::to_string(i);
    csv::write_file(p(dir / ("src/images/" + stem + ".pgm")), encode_pgm(GrayImage::filled(16, 16, 0.1 * (i + 1))));
    csv::write_file(p(dir / ("src/annotations/" + stem + ".xml")),
                    "<CellCounter_Marker_File><Marker_Data><Marker_Type><Marker><MarkerX>3</MarkerX>"
                    "<MarkerY>4</MarkerY></Marker></Marker_Type></Marker_Data></CellCounter_Marker_File>");
  }
  csv::write_file(p(dir / "src/annotations/stray.xml"), "<CellCounter_Marker_File/>");
  const auto r = cli_run({"ingest", "--src", p(dir / "src"), "--out", p(dir / "clean")});
  CHECK(r.code == cli::kOk);
  const auto meta = csv::parse(slurp(dir / "clean/metadata.csv"));
  CHECK(meta.rows.size() == 3);
  const auto rejects = slurp(dir / "clean/rejects.csv");
  CHECK(rejects.find("orphan_annotation") != std::string::npos);
  CHECK(cli_run({"stats", "--data", p(dir / "clean")}).out.find("| all | 3 | 3 |") != std::string::npos);
  CHECK(cli_run({"ingest", "--src", p(dir / "nope"), "--out", p(dir / "x")}).code == cli::kDataError);
}

TEST_CASE("full pipeline: train, eval, oracle, ablate, report") {
  TempDir dir("cli_pipe");
  const auto data = p(dir / "data"), split = p(dir / "split.csv");
  REQUIRE(cli_run({"synth", "--out", data, "--n", "24", "--seed", "3"}).code == 0);
  REQUIRE(cli_run({"split", "--data", data, "--out", split, "--bins", "3", "--seed", "3"}).code == 0);
  const auto t = cli_run({"train", "--data", data, "--split", split, "--out", p(dir / "run"), "--lr", "1e-3",
                          "--epochs", "2", "--seed", "3"});
  REQUIRE(t.code == 0);
  CHECK(std::filesystem::exists(dir / "run/best.ckpt"));
  CHECK(csv::parse(slurp(dir / "run/history.csv")).rows.size() == 2);
  CHECK(slurp(dir / "run/config_used.cfg").find("train.learning_rate = 0.001") != std::string::npos);

  REQUIRE(cli_run({"eval", "--data", data, "--split", split, "--checkpoint", p(dir / "run/best.ckpt"), "--out",
                   p(dir / "ev"), "--heatmaps", "2"})
              .code == 0);
  for (const char* f : {"metrics.csv", "metrics.md", "macro.csv", "macro.md", "predictions.csv"})
    CHECK(std::filesystem::exists(dir / "ev" / f));
  CHECK(std::distance(std::filesystem::directory_iterator(dir / "ev/heatmaps"), {}) == 4);

  const auto o = cli_run({"eval", "--data", data, "--split", split, "--oracle", "--out", p(dir / "or")});
  REQUIRE(o.code == 0);
  CHECK(slurp(dir / "or/metrics.csv").find("oracle,") != std::string::npos);
  CHECK(o.out.find("100.00%") != std::string::npos);

  const auto a = cli_run({"ablate", "--data", data, "--split", split, "--out", p(dir / "ab"), "--lr", "1e-3",
                          "--epochs", "1"});
  CHECK(a.code == 0);
  CHECK(csv::parse(slurp(dir / "ab/ablation.csv")).rows.size() == 6);

  const auto rep = cli_run({"report", "--run", p(dir / "ev"), "--run", p(dir / "or"), "--out", p(dir / "report.md")});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("| oracle |") != std::string::npos);
  CHECK(rep.out.find("| density model |") != std::string::npos);

  const auto reg = cli_run({"train", "--data", data, "--split", split, "--out", p(dir / "reg"), "--kind",
                            "regression", "--lr", "1e-2", "--epochs", "1"});
  REQUIRE(reg.code == 0);
  CHECK(cli_run({"eval", "--data", data, "--split", split, "--checkpoint", p(dir / "reg/best.ckpt"), "--out",
                 p(dir / "reg_ev")})
            .code == 0);
  CHECK(slurp(dir / "reg_ev/metrics.csv").find("regression baseline") != std::string::npos);
}
