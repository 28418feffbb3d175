#include <filesystem>
#include <fstream>
#include <sstream>

#include "closer/error.hpp"
#include "closer/experiment.hpp"
#include "doctest.h"

using namespace closer;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(const std::string& preset_name, const fs::path& out) {
  auto c = preset(preset_name);
  c.dataset.classes = 8;
  c.dataset.train_per_class = 20;
  c.dataset.test_per_class = 10;
  c.dataset.input_dim = 8;
  c.split = SplitConfig{.base_classes = 4, .ways = 2, .shots = 3, .sessions = 2};
  c.encoder = EncoderConfig{.hidden = {16}, .embedding_dim = 2};
  c.train.epochs = 3;
  c.train.batch_size = 16;
  c.seeds = 2;
  c.metrics.histogram = true;
  c.metrics.histogram_bins = 8;
  c.metrics.features = true;
  c.ib.xz = MineConfig{.hidden = 8, .iterations = 20, .batch_size = 10};
  c.ib.yz = MineConfig{.hidden = 8, .iterations = 20, .batch_size = 10};
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("closer_exp_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("presets are one flag apart") {
    const auto b = preset("baseline"), rs = preset("baseline_rs"), c = preset("closer");
    CHECK(b.loss.tau == 1.0 / 16.0);
    CHECK(b.loss.lambda_ssc == 0.0);
    CHECK(rs.loss.tau == 1.0 / 32.0);
    CHECK(rs.loss.lambda_ssc == 0.1);
    CHECK(rs.loss.lambda_inter == 0.0);
    CHECK(c.loss.lambda_inter == 1.0);
    CHECK(c.loss.lambda_ssc == 0.1);
    CHECK(preset_names().size() == 3);
    CHECK_THROWS_AS(preset("other"), Error);
  }

  TEST_CASE("config JSON round trip, strict keys, hash") {
    const auto c = tiny("closer", "runs/x");
    const auto text = config_to_json(c);
    const auto back = config_from_json(text);
    CHECK(config_to_json(back) == text);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
    auto other = c;
    other.loss.tau = 0.5;
    CHECK(config_hash(other) != config_hash(c));
    auto moved = c;
    moved.output_dir = "elsewhere";
    CHECK(config_hash(moved) == config_hash(c));

    CHECK_THROWS_AS(config_from_json(R"({"loss": {"tua": 0.1}})"), Error);
    CHECK_THROWS_AS(config_from_json(R"({"bogus": 1})"), Error);
    CHECK_THROWS_AS(config_from_json(R"({"loss": {"tau": "x"}})"), Error);
    CHECK_THROWS_AS(config_from_json(R"({"loss": {"tau": -1}})"), Error);
    CHECK_THROWS_AS(config_from_json("{"), Error);

    const auto from_preset = config_from_json(R"({"preset": "baseline_rs", "seeds": 5})");
    CHECK(from_preset.loss.lambda_ssc == 0.1);
    CHECK(from_preset.seeds == 5);
  }

  TEST_CASE("validation catches impossible splits") {
    auto c = tiny("baseline", "runs/x");
    c.split.sessions = 3;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny("baseline", "runs/x");
    c.dataset.kind = "mnist";
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny("baseline", "runs/x");
    c.dataset.kind = "idx";
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("single session: only session 0 and no PD") {
    auto c = tiny("baseline", scratch("single"));
    c.split.sessions = 0;
    c.seeds = 1;
    const auto r = run(c, false);
    REQUIRE(r.reports.size() == 1);
    CHECK(r.reports[0].sessions.size() == 1);
    CHECK_FALSE(r.reports[0].performance_drop.has_value());
    CHECK_FALSE(r.aggregate.performance_drop.has_value());
  }

  TEST_CASE("run writes stamped, byte-identical outputs") {
    const auto dir_a = scratch("a"), dir_b = scratch("b");
    auto ca = tiny("closer", dir_a);
    auto cb = tiny("closer", dir_b);
    const auto ra = run(ca);
    run(cb);
    for (const char* f : {"sessions.csv", "metrics.csv", "histogram.csv", "features.csv"}) {
      INFO(f);
      REQUIRE(fs::exists(dir_a / f));
      CHECK(slurp(dir_a / f) == slurp(dir_b / f));
    }
    CHECK(fs::exists(dir_a / "summary.json"));
    CHECK(fs::exists(dir_a / "encoder_seed0.json"));
    CHECK(fs::exists(dir_a / "encoder_seed1.json"));

    const auto sessions = slurp(dir_a / "sessions.csv");
    CHECK(sessions.rfind("config_hash,master_seed,session,A_B,A_N,A_W", 0) == 0);
    std::size_t rows = 0;
    for (char ch : sessions) rows += ch == '\n';
    CHECK(rows == 1 + 3);
    for (const char* f : {"sessions.csv", "metrics.csv", "histogram.csv", "features.csv",
                          "summary.json", "encoder_seed0.json"}) {
      INFO(f);
      CHECK(slurp(dir_a / f).find(ra.config_hash) != std::string::npos);
    }
    CHECK(ra.reports[0].histogram.has_value());
    CHECK(ra.reports[0].histogram->total() == 8 * 10);
  }

  TEST_CASE("export: re-export is byte-identical; refusals") {
    const auto dir = scratch("export");
    auto c = tiny("baseline", dir);
    run(c);
    const auto before = slurp(dir / "metrics.csv");
    const auto paths = export_run(dir, "metrics");
    CHECK(paths.size() == 2);
    CHECK(slurp(dir / "metrics.csv") == before);
    const auto hist = slurp(dir / "histogram.csv");
    export_run(dir, "histograms");
    CHECK(slurp(dir / "histogram.csv") == hist);
    CHECK_THROWS_AS(export_run(dir, "ib"), Error);
    CHECK_THROWS_AS(export_run(dir, "plots"), Error);
    CHECK_THROWS_AS(export_run(scratch("missing"), "metrics"), Error);

    const auto dir16 = scratch("export16");
    auto c16 = tiny("baseline", dir16);
    c16.encoder.embedding_dim = 3;
    c16.seeds = 1;
    run(c16);
    try {
      export_run(dir16, "histograms");
      FAIL("expected refusal");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingArtifact);
      CHECK(std::string(e.what()).find("embedding_dim = 2") != std::string::npos);
    }
  }

  TEST_CASE("ib-eval fills IB points from checkpoints") {
    const auto dir = scratch("ib");
    auto c = tiny("closer", dir);
    c.seeds = 1;
    run(c);
    const auto r = ib_eval(dir);
    REQUIRE(r.reports.size() == 1);
    CHECK(r.reports[0].ib.size() == 3);
    CHECK(fs::exists(dir / "ib.csv"));
    const auto first = slurp(dir / "ib.csv");
    ib_eval(dir);
    CHECK(slurp(dir / "ib.csv") == first);
    CHECK(export_run(dir, "ib").size() == 1);
  }

  TEST_CASE("stage-named failures") {
    auto c = tiny("baseline", scratch("stage"));
    c.train.lr = 1e300;
    c.seeds = 1;
    try {
      run(c, false);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).rfind("stage train:", 0) == 0);
    }
  }

  TEST_CASE("ablation grid") {
    auto c = tiny("baseline", scratch("ablate"));
    c.seeds = 1;
    c.train.epochs = 1;
    const auto rows = ablate(c, AblationGrid{});
    REQUIRE(rows.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(rows[i].low_tau == bool(i & 4));
      CHECK(rows[i].ssc == bool(i & 2));
      CHECK(rows[i].inter == bool(i & 1));
    }
    CHECK(fs::exists(fs::path(c.output_dir) / "ablation.csv"));

    AblationGrid one;
    one.low_tau = {false};
    one.ssc = {false};
    one.inter = {false};
    const auto single = ablate(c, one, false);
    REQUIRE(single.size() == 1);
    auto plain = c;
    plain.loss.tau = one.baseline_tau;
    const auto r = run(plain, false);
    CHECK(single[0].whole_accuracy == r.aggregate.whole_accuracy.back().mean);

    AblationGrid empty;
    empty.ssc.clear();
    CHECK_THROWS_AS(ablate(c, empty, false), Error);
  }
}
