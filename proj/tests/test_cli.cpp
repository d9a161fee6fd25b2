#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cli_runner.hpp"
#include "vseg/fsio.hpp"
#include "vseg/mask.hpp"
#include "vseg/prob_map.hpp"

using namespace vseg;
namespace fs = std::filesystem;

namespace {

void write_mask_file(const fs::path& path, std::uint32_t w, std::uint32_t h,
                     std::vector<std::uint8_t> labels) {
  SegMask mask;
  mask.width = w;
  mask.height = h;
  mask.labels = std::move(labels);
  atomic_write_file(path, write_mask(mask));
}

void write_tensor_file(const fs::path& path, std::uint32_t c, std::uint32_t w,
                       std::uint32_t h, std::vector<float> values,
                       bool normalized = true) {
  ProbMap map;
  map.classes = c;
  map.width = w;
  map.height = h;
  map.normalized = normalized;
  map.values = std::move(values);
  atomic_write_file(path, write_tensor(map));
}

}  // namespace

TEST_CASE("version and usage errors") {
  CHECK(cli::run("--version").exit_code == 0);
  CHECK_THAT(cli::run("--version").out,
             Catch::Matchers::ContainsSubstring("vsegkit"));
  CHECK(cli::run("definitely-not-a-subcommand").exit_code == 2);
  CHECK(cli::run("").exit_code == 2);
  CHECK(cli::run("ensemble --tau 0.4").exit_code == 2);  // missing inputs
  CHECK(cli::run("eval --classes 2 --pred x --gt y --bogus").exit_code == 2);
}

TEST_CASE("ensemble subcommand") {
  const auto dir = cli::make_temp_dir("ens");
  write_tensor_file(dir / "a.lgt", 2, 1, 1, {1.0f, 0.0f});
  write_tensor_file(dir / "b.lgt", 2, 1, 1, {0.0f, 1.0f});

  SECTION("weighted pair") {
    const auto r = cli::run("ensemble --tau 0.4 " + (dir / "a.lgt").string() +
                            " " + (dir / "b.lgt").string() + " -o " +
                            (dir / "out.lgt").string());
    REQUIRE(r.exit_code == 0);
    const ProbMap out = read_tensor(read_file(dir / "out.lgt"));
    CHECK(out.values[0] == Catch::Approx(0.4f));
    CHECK(out.values[1] == Catch::Approx(0.6f));
    CHECK(out.normalized);
  }
  SECTION("mean of three") {
    write_tensor_file(dir / "c.lgt", 2, 1, 1, {1.0f, 0.0f});
    const auto r = cli::run("ensemble --mean " + (dir / "a.lgt").string() +
                            " " + (dir / "b.lgt").string() + " " +
                            (dir / "c.lgt").string() + " -o " +
                            (dir / "mean.lgt").string());
    REQUIRE(r.exit_code == 0);
    const ProbMap out = read_tensor(read_file(dir / "mean.lgt"));
    CHECK(out.values[0] == Catch::Approx(2.0f / 3.0f));
  }
  SECTION("shape mismatch is a domain error, exit 1") {
    write_tensor_file(dir / "wide.lgt", 2, 2, 1, {0.5f, 0.5f, 0.5f, 0.5f});
    const auto r = cli::run("ensemble --tau 0.5 " + (dir / "a.lgt").string() +
                            " " + (dir / "wide.lgt").string() + " -o " +
                            (dir / "bad.lgt").string());
    CHECK(r.exit_code == 1);
    CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("shape mismatch"));
    CHECK_FALSE(fs::exists(dir / "bad.lgt"));  // no partial output
  }
  fs::remove_all(dir);
}

TEST_CASE("argmax and vote subcommands") {
  const auto dir = cli::make_temp_dir("dec");
  write_tensor_file(dir / "p.lgt", 3, 2, 1,
                    {0.1f, 0.5f, 0.7f, 0.2f, 0.2f, 0.3f});
  const auto r = cli::run("argmax " + (dir / "p.lgt").string() + " -o " +
                          (dir / "p.pgm").string());
  REQUIRE(r.exit_code == 0);
  const SegMask decoded = read_mask(read_file(dir / "p.pgm"));
  CHECK(decoded.labels == std::vector<std::uint8_t>{1, 0});

  write_mask_file(dir / "m1.pgm", 2, 1, {2, 255});
  write_mask_file(dir / "m2.pgm", 2, 1, {2, 4});
  write_mask_file(dir / "m3.pgm", 2, 1, {5, 255});
  const auto v = cli::run("vote " + (dir / "m1.pgm").string() + " " +
                          (dir / "m2.pgm").string() + " " +
                          (dir / "m3.pgm").string() + " -o " +
                          (dir / "voted.pgm").string());
  REQUIRE(v.exit_code == 0);
  const SegMask voted = read_mask(read_file(dir / "voted.pgm"));
  CHECK(voted.labels == std::vector<std::uint8_t>{2, 4});
  fs::remove_all(dir);
}

TEST_CASE("remap and filter subcommands") {
  const auto dir = cli::make_temp_dir("map");
  cli::spit(dir / "table.tsv", "0\t2\n1\t-\n7\t7\n");
  fs::create_directories(dir / "in" / "video1");
  write_mask_file(dir / "in" / "video1" / "f0.pgm", 2, 1, {0, 1});
  write_mask_file(dir / "in" / "a.pgm", 3, 3, {0, 7, 7, 7, 7, 7, 7, 7, 255});
  write_mask_file(dir / "in" / "b.pgm", 3, 3,
                  {0, 7, 7, 7, 7, 7, 7, 255, 255});
  write_mask_file(dir / "in" / "c.pgm", 5, 1, {0, 7, 7, 7, 255});

  SECTION("directory remap mirrors the tree") {
    const auto r = cli::run("remap --table " + (dir / "table.tsv").string() +
                            " --in " + (dir / "in").string() + " --out " +
                            (dir / "out").string());
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("remapped 4 masks"));
    const SegMask f0 = read_mask(read_file(dir / "out" / "video1" / "f0.pgm"));
    CHECK(f0.labels == std::vector<std::uint8_t>{2, 255});
  }
  SECTION("single-file remap with error policy") {
    write_mask_file(dir / "lone.pgm", 1, 1, {9});
    const auto bad = cli::run("remap --table " + (dir / "table.tsv").string() +
                              " --in " + (dir / "lone.pgm").string() +
                              " --out " + (dir / "lone_out.pgm").string() +
                              " --policy error");
    CHECK(bad.exit_code == 1);
    CHECK_THAT(bad.err,
               Catch::Matchers::ContainsSubstring("unmapped source id 9"));
    const auto ok = cli::run("remap --table " + (dir / "table.tsv").string() +
                             " --in " + (dir / "lone.pgm").string() +
                             " --out " + (dir / "lone_out.pgm").string());
    CHECK(ok.exit_code == 0);
    CHECK(read_mask(read_file(dir / "lone_out.pgm")).labels ==
          std::vector<std::uint8_t>{255});
  }
  SECTION("filter manifest matches the boundary example") {
    const auto r = cli::run("filter --in " + (dir / "in").string() +
                            " --threshold 0.8 -o " +
                            (dir / "manifest.tsv").string());
    REQUIRE(r.exit_code == 0);
    CHECK(cli::slurp(dir / "manifest.tsv") ==
          "a.pgm\t0.888889\tkeep\n"
          "b.pgm\t0.777778\tdrop\n"
          "c.pgm\t0.800000\tkeep\n"
          "video1/f0.pgm\t1.000000\tkeep\n");
  }
  SECTION("strict flag drops the exact-boundary mask") {
    const auto r = cli::run("filter --in " + (dir / "in").string() +
                            " --threshold 0.8 --strict");
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out,
               Catch::Matchers::ContainsSubstring("c.pgm\t0.800000\tdrop"));
  }
  fs::remove_all(dir);
}

TEST_CASE("eval subcommand") {
  const auto dir = cli::make_temp_dir("eval");
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");

  SECTION("hand example gives 7/12") {
    write_mask_file(dir / "pred" / "x.pgm", 4, 1, {0, 0, 1, 1});
    write_mask_file(dir / "gt" / "x.pgm", 4, 1, {0, 1, 1, 1});
    const auto r = cli::run("eval --classes 2 --pred " +
                            (dir / "pred").string() + " --gt " +
                            (dir / "gt").string());
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("class 0 iou 1/2") &&
                          Catch::Matchers::ContainsSubstring("class 1 iou 2/3") &&
                          Catch::Matchers::ContainsSubstring("miou 7/12 0.583333"));
  }
  SECTION("identical directories give a perfect score") {
    write_mask_file(dir / "pred" / "x.pgm", 4, 1, {0, 0, 1, 1});
    write_mask_file(dir / "gt" / "x.pgm", 4, 1, {0, 0, 1, 1});
    const auto r = cli::run("eval --classes 2 --pred " +
                            (dir / "pred").string() + " --gt " +
                            (dir / "gt").string());
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out,
               Catch::Matchers::ContainsSubstring("miou 1/1 1.000000"));
  }
  SECTION("unpaired stems abort") {
    write_mask_file(dir / "pred" / "x.pgm", 1, 1, {0});
    write_mask_file(dir / "gt" / "y.pgm", 1, 1, {0});
    const auto r = cli::run("eval --classes 2 --pred " +
                            (dir / "pred").string() + " --gt " +
                            (dir / "gt").string());
    CHECK(r.exit_code == 1);
    CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("unpaired"));
  }
  SECTION("per-video reporting") {
    fs::create_directories(dir / "pred" / "v1");
    fs::create_directories(dir / "pred" / "v2");
    fs::create_directories(dir / "gt" / "v1");
    fs::create_directories(dir / "gt" / "v2");
    write_mask_file(dir / "pred" / "v1" / "f.pgm", 2, 1, {0, 1});
    write_mask_file(dir / "gt" / "v1" / "f.pgm", 2, 1, {0, 1});
    write_mask_file(dir / "pred" / "v2" / "f.pgm", 2, 1, {0, 0});
    write_mask_file(dir / "gt" / "v2" / "f.pgm", 2, 1, {0, 1});
    const auto r = cli::run("eval --classes 2 --per-video --pred " +
                            (dir / "pred").string() + " --gt " +
                            (dir / "gt").string());
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("v1\t1.000000") &&
                          Catch::Matchers::ContainsSubstring("v2\t0.250000") &&
                          Catch::Matchers::ContainsSubstring("mean\t0.625000"));
  }
  fs::remove_all(dir);
}

TEST_CASE("tta subcommands") {
  const auto dir = cli::make_temp_dir("tta");
  SECTION("print-plan lists origins") {
    const auto r = cli::run("tta-merge --plan 4,10,4,4,3 --print-plan");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == "0,0\n3,0\n6,0\n");
  }
  SECTION("single full window round trips") {
    write_tensor_file(dir / "win.lgt", 2, 3, 2,
                      {0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f,
                       0.8f, 0.7f, 0.6f, 0.5f, 0.4f, 0.3f});
    const auto r = cli::run("tta-merge --plan 2,3,2,3,1 " +
                            (dir / "win.lgt").string() + " -o " +
                            (dir / "full.lgt").string());
    REQUIRE(r.exit_code == 0);
    const ProbMap out = read_tensor(read_file(dir / "full.lgt"));
    CHECK(out.values[0] == Catch::Approx(0.2f));
    CHECK(out.values[5] == Catch::Approx(0.7f));
  }
  SECTION("flip-merge of a mirrored pair returns the original") {
    write_tensor_file(dir / "p.lgt", 1, 2, 1, {0.25f, 0.75f});
    write_tensor_file(dir / "pf.lgt", 1, 2, 1, {0.75f, 0.25f});
    const auto r = cli::run("flip-merge " + (dir / "p.lgt").string() + " " +
                            (dir / "pf.lgt").string() + " -o " +
                            (dir / "merged.lgt").string());
    REQUIRE(r.exit_code == 0);
    const ProbMap out = read_tensor(read_file(dir / "merged.lgt"));
    CHECK(out.values[0] == 0.25f);
    CHECK(out.values[1] == 0.75f);
  }
  fs::remove_all(dir);
}

TEST_CASE("nce-eval subcommand") {
  const auto dir = cli::make_temp_dir("nce");
  // two orthonormal patches in frame 0, one in frame 1; classes [0, 0, 1]
  write_tensor_file(dir / "f0.lgt", 1, 3, 2,
                    {1.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f}, false);
  write_tensor_file(dir / "f1.lgt", 1, 3, 1, {0.0f, 0.0f, 1.0f}, false);
  cli::spit(dir / "ids.txt", "0\n0\n1\n");
  const auto r = cli::run("nce-eval " + (dir / "f0.lgt").string() + " " +
                          (dir / "f1.lgt").string() + " --classes " +
                          (dir / "ids.txt").string() +
                          " --seed 1 --tau 1 --negatives 1");
  REQUIRE(r.exit_code == 0);
  CHECK_THAT(r.out,
             Catch::Matchers::ContainsSubstring("nce 0.693147180559945") &&
                 Catch::Matchers::ContainsSubstring("patches 3") &&
                 Catch::Matchers::ContainsSubstring("contributing 2"));
  SECTION("sidecar count mismatch") {
    cli::spit(dir / "short.txt", "0\n0\n");
    const auto bad = cli::run("nce-eval " + (dir / "f0.lgt").string() + " " +
                              (dir / "f1.lgt").string() + " --classes " +
                              (dir / "short.txt").string() + " --seed 1");
    CHECK(bad.exit_code == 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("gradcheck subcommand") {
  const auto r = cli::run("gradcheck --seed 3 --instances 5");
  REQUIRE(r.exit_code == 0);
  for (const char* loss : {"nce", "ce", "dice", "seg", "total"}) {
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring(std::string(loss) +
                                                         " max_rel_err"));
  }
  CHECK_THAT(r.out, !Catch::Matchers::ContainsSubstring("FAIL"));
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("elapsed_s"));
}

TEST_CASE("train-toy subcommand") {
  const auto tsv = cli::run("train-toy --seed 7 --steps 20");
  REQUIRE(tsv.exit_code == 0);
  CHECK_THAT(tsv.out,
             Catch::Matchers::ContainsSubstring("step\ttotal\tseg\tnce") &&
                 Catch::Matchers::ContainsSubstring("sep\tinitial\t") &&
                 Catch::Matchers::ContainsSubstring("sep\tfinal\t"));

  const auto js = cli::run("train-toy --seed 7 --steps 20 --json");
  REQUIRE(js.exit_code == 0);
  const auto doc = nlohmann::json::parse(js.out);
  REQUIRE(doc["steps"].size() == 20);
  CHECK(doc["steps"][0].contains("total"));
  CHECK(doc["separation"]["initial"].contains("intra"));
  CHECK(doc["separation"]["final"].contains("gap"));
}
