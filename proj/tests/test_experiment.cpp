#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cgfedrec/experiment.hpp"
#include "support.hpp"

#include <fstream>
#include <sstream>

using namespace cgfedrec;

namespace {

ExperimentSpec planted_spec(const std::string& out) {
  ExperimentSpec s;
  s.dataset_format = "planted";
  s.planted = {16, 60, 3, 8, 0};
  s.eval_negatives = 20;
  s.early_stop_patience = 2;
  s.federation.rounds = 4;
  s.federation.dim = 4;
  s.federation.clusters = 3;
  s.federation.batch_size = 16;
  s.federation.seed = 5;
  s.output_dir = out;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("config round trip") {
  ExperimentSpec s;
  s.dataset_path = "data/x.tsv";
  s.federation.mode = BroadcastMode::embeddings_and_random_labels;
  s.federation.contrastive.lambda = 0.25;
  s.federation.aggregate = AggregateMode::plain_mean;
  s.federation.ldp_mechanism = NoiseMechanism::gaussian;
  s.federation.seed = 123456789012345ULL;
  s.grid_tau = {0.1, 0.3};
  s.grid_k = {5, 10};
  s.planted.n_groups = 7;
  CHECK(spec_from_json(nlohmann::json::parse(spec_to_json(s).dump())) == s);
  CHECK(spec_from_json(nlohmann::json::parse(spec_to_json(ExperimentSpec{}).dump())) == ExperimentSpec{});
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(spec_from_json(nlohmann::json::parse(R"({"rouns": 3})")), doctest::Contains("rouns"),
                       ParameterError);
  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"mode": "nope"})")), ParameterError);
  CHECK_THROWS(spec_from_json(nlohmann::json::parse(R"({"rounds": "many"})")));
  const auto partial = spec_from_json(nlohmann::json::parse(R"({"rounds": 7})"));
  CHECK(partial.federation.rounds == 7);
  CHECK(partial.federation.dim == ExperimentSpec{}.federation.dim);
}

TEST_CASE("overrides") {
  ExperimentSpec s;
  apply_override(s, "lambda=0.5");
  apply_override(s, "mode=embeddings_only");
  apply_override(s, "grid_k=[2,4]");
  apply_override(s, "dataset_path=some/file.tsv");
  CHECK(s.federation.contrastive.lambda == 0.5);
  CHECK(s.federation.mode == BroadcastMode::embeddings_only);
  CHECK(s.grid_k == std::vector<std::size_t>{2, 4});
  CHECK(s.dataset_path == "some/file.tsv");
  CHECK_THROWS_AS(apply_override(s, "no_equals_sign"), ParameterError);
  CHECK_THROWS_AS(apply_override(s, "bogus=1"), ParameterError);
}

TEST_CASE("load spec from file") {
  const auto dir = testing::scratch_dir("spec");
  std::ofstream(dir / "exp.json") << R"({"rounds": 2, "mode": "ec", "clusters": 4})";
  const auto s = load_spec(dir / "exp.json");
  CHECK(s.federation.mode == BroadcastMode::embeddings_and_labels);
  CHECK(s.federation.clusters == 4);
  std::ofstream(dir / "broken.json") << "{";
  CHECK_THROWS(load_spec(dir / "broken.json"));
  CHECK_THROWS(load_spec(dir / "absent.json"));
}

TEST_CASE("prepared planted data keeps group labels aligned") {
  auto spec = planted_spec("");
  spec.planted = {12, 80, 4, 6, 0};  // sparse enough that some items are never drawn
  const auto data = prepare_data(spec);
  REQUIRE(data.planted.has_value());
  CHECK(data.item_group.size() == data.ds.n_items);
  for (const auto& r : data.log.records) {
    CHECK(data.item_group[r.item] == data.planted->user_group[static_cast<std::size_t>(data.log.user_ids[r.user])]);
  }
  spec.dataset_format = "tsv";
  CHECK_THROWS_AS(prepare_data(spec), ParameterError);
}

TEST_CASE("run writes the output set") {
  const auto dir = testing::scratch_dir("run");
  const auto r = run_single(planted_spec(dir.string()), 1);
  for (const char* f : {"summary.json", "rounds.jsonl", "ledger.csv", "per_user.csv", "global_embeddings.bin",
                        "global_embeddings.csv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["metrics"].contains("hr@5"));
  CHECK(summary["communication"]["closed_form_reduction"] == 1.0 - 1.0 / 16.0);
  CHECK(summary["communication"]["download_bytes"] == summary["communication"]["label_download_bytes"]);
  CHECK(load_table(dir / "global_embeddings.bin") == r.global);
  CHECK(r.rounds_run >= 1);
  CHECK(r.rounds_run <= 4);
}

TEST_CASE("summary is byte-identical across reruns and worker counts") {
  const auto a = testing::scratch_dir("det_a");
  const auto b = testing::scratch_dir("det_b");
  auto spec = planted_spec(a.string());
  spec.federation.participation = 0.5;
  spec.federation.ldp_delta = 0.01;
  run_single(spec, 1);
  spec.output_dir = b.string();
  run_single(spec, 3);
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "rounds.jsonl") == slurp(b / "rounds.jsonl"));
  CHECK(slurp(a / "global_embeddings.bin") == slurp(b / "global_embeddings.bin"));
}

TEST_CASE("resume from checkpoint matches an uninterrupted run") {
  const auto dir = testing::scratch_dir("resume");
  auto spec = planted_spec((dir / "full").string());
  spec.early_stop_patience = 0;
  const auto full = run_single(spec, 1);

  auto half = spec;
  half.federation.rounds = 2;
  half.output_dir = (dir / "half").string();
  run_single(half, 1, true, {{}, dir / "half.ckpt"});
  spec.output_dir = (dir / "resumed").string();
  const auto resumed = run_single(spec, 1, true, {dir / "half.ckpt", {}});
  CHECK(resumed.reports == full.reports);
  CHECK(resumed.global == full.global);
  CHECK(slurp(dir / "full" / "summary.json") == slurp(dir / "resumed" / "summary.json"));
}

TEST_CASE("ablation, grid and ldp sweep") {
  const auto dir = testing::scratch_dir("suites");
  auto spec = planted_spec((dir / "ablation").string());
  spec.early_stop_patience = 0;
  spec.federation.rounds = 2;
  const auto rows = run_ablation_suite(spec, 1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].variant == "CGFedRec");
  CHECK(rows[1].lambda == 0.0);
  CHECK(rows[0].download_bytes * 4 * 4 == rows[1].download_bytes);
  CHECK(std::filesystem::exists(dir / "ablation" / "ablation.csv"));

  spec.output_dir = (dir / "grid").string();
  spec.grid_lambda = {0.0, 0.1};
  spec.grid_k = {2, 3};
  const auto grid = run_grid(spec, 1);
  CHECK(grid.size() == 4);
  CHECK(grid[3].k == 3);
  CHECK(grid[3].lambda == 0.1);
  CHECK(std::filesystem::exists(dir / "grid" / "cell_003" / "summary.json"));
  spec.grid_lambda.clear();
  spec.grid_k.clear();
  CHECK_THROWS_AS(run_grid(spec, 1), ParameterError);

  spec.output_dir = (dir / "ldp").string();
  spec.ldp_deltas = {0.0, 0.2};
  const auto ldp = run_ldp_sweep(spec, 1);
  CHECK(ldp.size() == 2);
  CHECK(std::filesystem::exists(dir / "ldp" / "ldp.csv"));
}
