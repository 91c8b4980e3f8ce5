#include <doctest.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/gcforest.hpp"
#include "hfcloud/hfcnn.hpp"
#include "hfcloud/patchset.hpp"
#include "hfcloud/refine.hpp"
#include "test_support.hpp"

using namespace hfcloud;
namespace fs = std::filesystem;

namespace {

const std::string kCli = HFCLOUD_CLI_PATH;

int run(const std::string& args) { return testing::run_command(kCli + " " + args); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(run("") != 0);
  CHECK(run("bogus") != 0);
  CHECK(run("segment /does/not/exist --out /tmp/x") != 0);
  testing::TempDir dir;
  binio::write_text(dir / "bad.json", R"({"segment":{"wrong":1}})");
  CHECK(run("synth --out " + dir / "t" + " --config " + dir / "bad.json") == 1);
}

TEST_CASE("full workflow on small tiles") {
  testing::TempDir d;
  const std::string tiles = d / "tiles";
  REQUIRE(run("synth --out " + tiles + " --count 3 --seed 5 --tile-size 160 --buildings 6") == 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(fs::exists(tiles + "/tile" + std::to_string(i) + "/meta.json"));
    CHECK(fs::exists(tiles + "/tile" + std::to_string(i) + "/gt.png"));
  }
  CHECK(fs::exists(tiles + "/config.json"));
  const std::string all = tiles + "/tile0 " + tiles + "/tile1 " + tiles + "/tile2";

  REQUIRE(run("edges " + all + " --out " + d / "edges") == 0);
  CHECK(fs::exists(d / "edges/tile1.edges.png"));
  REQUIRE(run("segment " + all + " --out " + d / "spxm --edges-dir " + d / "edges --n-superpixels 80") == 0);
  const auto map = load_spxm(d / "spxm/tile0.spxm");
  CHECK(map.width == 160);
  const auto cfg = nlohmann::json::parse(binio::read_text(d / "spxm/config.json"));
  CHECK(cfg["segment"]["n_superpixels"] == 80);

  REQUIRE(run("label-from-gt " + all + " --spxm-dir " + d / "spxm --out " + d / "labels") == 0);
  CHECK(load_label_file(d / "labels/tile2.labels.json").labels.size() == load_spxm(d / "spxm/tile2.spxm").n_regions);

  REQUIRE(run("build-dataset " + all + " --spxm-dir " + d / "spxm --labels-dir " + d / "labels --out " + d / "data") == 0);
  const auto manifest = load_manifest(d / "data/manifest.jsonl");
  CHECK(manifest.size() > 100);
  REQUIRE(run("split " + d / "data/manifest.jsonl --valid-fraction 0.25") == 0);
  const auto train = load_manifest(d / "data/train.jsonl");
  const auto valid = load_manifest(d / "data/valid.jsonl");
  CHECK(train.size() + valid.size() == manifest.size());

  REQUIRE(run("train-hfcnn --train " + d / "data/train.jsonl --valid " + d / "data/valid.jsonl --out " + d / "hf" +
              " --iterations 5 --batch-size 8") == 0);
  CHECK(load_hfcnn(d / "hf/hfcnn.hfcn").iterations == 5);
  CHECK(fs::exists(d / "hf/history.csv"));
  REQUIRE(run("train-forest --train " + d / "data/train.jsonl --valid " + d / "data/valid.jsonl --out " + d / "gc" +
              " --scan-trees 2 --cascade-trees 4 --max-levels 2 --stride 8 --max-instances-per-class 500") == 0);
  CHECK(load_gcforest(d / "gc/gcforest.gcfs").trained());

  REQUIRE(run("predict " + all + " --spxm-dir " + d / "spxm --hfcnn " + d / "hf/hfcnn.hfcn --gcforest " + d / "gc/gcforest.gcfs" +
              " --out " + d / "pred") == 0);
  CHECK(load_predictions(d / "pred/tile0.predictions.jsonl").size() == map.n_regions);
  CHECK(fs::exists(d / "pred/tile0.ensemble_mask.png"));
  REQUIRE(run("refine " + all + " --spxm-dir " + d / "spxm --pred-dir " + d / "pred --out " + d / "pred --hops 1") == 0);
  CHECK(load_mask(d / "pred/tile0.mask.png").width == 160);
  CHECK(load_predictions(d / "pred/tile0.refined.jsonl").size() == map.n_regions);
  CHECK(nlohmann::json::parse(binio::read_text(d / "pred/config.json"))["refine"]["hops"] == 1);

  REQUIRE(run("evaluate " + all + " --spxm-dir " + d / "spxm --pred-dir " + d / "pred --mask-dir " + d / "pred" +
              " --nir-baseline 1000 --out " + d / "eval") == 0);
  const auto report = nlohmann::json::parse(binio::read_text(d / "eval/report.json"));
  for (const char* method : {"ensemble", "pipeline", "mask", "nir_1000"}) CHECK(report["micro_average"].contains(method));
  CHECK(report["per_tile"].size() == 12);
  CHECK(fs::exists(d / "eval/report.csv"));
}

TEST_CASE("config file values apply unless a flag overrides them") {
  testing::TempDir d;
  binio::write_text(d / "c.json", R"({"synth":{"tile_size":64,"n_buildings":2,"seed":9}})");
  REQUIRE(run("synth --out " + d / "a --config " + d / "c.json") == 0);
  CHECK(load_image(d / "a/tile0").width == 64);
  REQUIRE(run("synth --out " + d / "b --config " + d / "c.json --tile-size 80") == 0);
  CHECK(load_image(d / "b/tile0").width == 80);
  const auto cfg = nlohmann::json::parse(binio::read_text(d / "b/config.json"));
  CHECK(cfg["synth"]["tile_size"] == 80);
  CHECK(cfg["synth"]["seed"] == 9);
}

}  // TEST_SUITE
