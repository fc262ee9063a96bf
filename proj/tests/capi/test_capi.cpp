#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>
#include <vector>

#include "auvnet/auvnet.h"
#include "tempdir.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const char* kTinyModel = R"({"category":"head","code_dim":16,"generators":[{"channels":8,"width":32},{"channels":4,"width":16}],
  "basis_depth":3,"uv_width":32,"uv_depth":3,"mask_width":32,"mask_depth":3,"encoder_channels":4,"input_resolution":16})";

std::vector<char> bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

Json run(const std::string& command, const Json& cfg) {
  char* report = nullptr;
  const auv_status s = auv_run(command.c_str(), cfg.dump().c_str(), nullptr, nullptr, &report);
  INFO(command << ": " << auv_last_error());
  REQUIRE(s == AUV_OK);
  Json j = Json::parse(report);
  auv_string_free(report);
  return j;
}

auv_status run_status(const std::string& command, const Json& cfg) {
  return auv_run(command.c_str(), cfg.dump().c_str(), nullptr, nullptr, nullptr);
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(AUVNET_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  const auto b = bytes(p);
  return {b.begin(), b.end()};
}

Json train_config(const fs::path& dataset, const fs::path& out) {
  return {{"category", "head"},
          {"dataset", dataset.string()},
          {"out", out.string()},
          {"seed", 7},
          {"epoch_scale", 1.0},
          {"points_per_step", 256},
          {"smooth_subset", 64},
          {"lr", 1e-3},
          {"stages", Json::array({{{"epochs", 1}}, {{"epochs", 1}}, {{"epochs", 1}}})},
          {"model", Json::parse(kTinyModel)}};
}

// Generated heads, their preprocessed dataset and a trained tiny model,
// shared by the pipeline cases.
struct Pipeline {
  auvtest::TempDir dir{"capi_pipeline"};
  fs::path heads = dir / "heads";
  fs::path dataset = dir / "heads.auvd";
  fs::path run_dir = dir / "run";
  fs::path model = run_dir / "model.auvn";

  Pipeline() {
    run("gen-data", {{"kind", "heads"}, {"count", 3}, {"seed", 50}, {"out", heads.string()}});
    run("preprocess", {{"input", heads.string()}, {"out", dataset.string()}, {"points", 1024}, {"grid_resolution", 16}, {"seed", 1}});
    run("train", train_config(dataset, run_dir));
  }
  static Pipeline& get() {
    static Pipeline p;
    return p;
  }
};

}  // namespace

TEST_CASE("status names and argument checks") {
  CHECK(std::string(auv_version()) == "1.0.0");
  CHECK(std::string(auv_status_name(AUV_OK)) == "ok");
  CHECK(std::string(auv_status_name(AUV_ERR_NUMERICAL)) == "numerical failure");
  auv_model* m = nullptr;
  CHECK(auv_model_create(nullptr, &m) == AUV_ERR_INVALID_ARGUMENT);
  CHECK(std::string(auv_last_error()).find("config_json") != std::string::npos);
  CHECK(auv_model_create(kTinyModel, &m) == AUV_OK);
  CHECK(std::string(auv_last_error()).empty());
  size_t count = 0;
  CHECK(auv_model_parameter_count(m, &count) == AUV_OK);
  CHECK(count > 0);
  CHECK(auv_model_parameter_count(nullptr, &count) == AUV_ERR_INVALID_ARGUMENT);
  auv_model_free(m);
  auv_model_free(nullptr);

  const char* list = auv_commands();
  std::vector<std::string> names;
  for (const char* p = list; *p; p += std::strlen(p) + 1) names.emplace_back(p);
  CHECK(names == std::vector<std::string>{"gen-data", "preprocess", "train", "train-toy", "bake", "transfer", "fit-new",
                                          "eval-seg", "eval-landmarks", "render-basis"});
}

TEST_CASE("model handles round trip through a checkpoint") {
  auvtest::TempDir dir("capi_model");
  auv_model* m = nullptr;
  REQUIRE(auv_model_create(kTinyModel, &m) == AUV_OK);
  int K = 0;
  CHECK(auv_model_generator_count(m, &K) == AUV_OK);
  CHECK(K == 2);
  const float uv[6] = {0.0f, 0.0f, 0.1f, -0.2f, 0.3f, 0.4f};
  std::vector<float> values(3 * 8);
  int channels = 0;
  CHECK(auv_model_eval_basis(m, 0, uv, 3, values.data(), values.size(), &channels) == AUV_OK);
  CHECK(channels == 8);
  CHECK(auv_model_eval_basis(m, 0, uv, 3, values.data(), 5, &channels) == AUV_ERR_INVALID_ARGUMENT);
  CHECK(auv_model_eval_basis(m, 2, uv, 3, values.data(), values.size(), &channels) == AUV_ERR_INVALID_ARGUMENT);

  const std::string path = (dir / "m.auvn").string();
  REQUIRE(auv_model_save(m, path.c_str()) == AUV_OK);
  auv_model* back = nullptr;
  REQUIRE(auv_model_load(path.c_str(), &back) == AUV_OK);
  uint64_t h1 = 0, h2 = 0;
  auv_model_basis_hash(m, &h1);
  auv_model_basis_hash(back, &h2);
  CHECK(h1 == h2);
  std::vector<float> again(values.size());
  CHECK(auv_model_eval_basis(back, 0, uv, 3, again.data(), again.size(), nullptr) == AUV_OK);
  CHECK(again == values);
  char* a = nullptr;
  char* b = nullptr;
  auv_model_config(m, &a);
  auv_model_config(back, &b);
  CHECK(std::string(a) == std::string(b));
  auv_string_free(a);
  auv_string_free(b);
  auv_model_free(m);
  auv_model_free(back);

  auv_model* none = nullptr;
  CHECK(auv_model_load((dir / "missing.auvn").string().c_str(), &none) == AUV_ERR_IO);
  CHECK(none == nullptr);
  write_text(dir / "junk.auvn", "not a checkpoint");
  CHECK(auv_model_load((dir / "junk.auvn").string().c_str(), &none) == AUV_ERR_DATA);
  CHECK(auv_model_create(R"({"code_dim": 16, "colour": 1})", &none) == AUV_ERR_CONFIG);
  CHECK(auv_model_create("{not json", &none) == AUV_ERR_CONFIG);
}

TEST_CASE("run rejects unknown commands, unknown keys and missing inputs") {
  auvtest::TempDir dir("capi_errors");
  CHECK(run_status("launch", Json::object()) == AUV_ERR_CONFIG);
  CHECK(run_status("gen-data", {{"kind", "toy"}, {"out", (dir / "x").string()}, {"colour", 1}}) == AUV_ERR_CONFIG);
  CHECK(std::string(auv_last_error()).find("colour") != std::string::npos);
  CHECK(run_status("gen-data", {{"out", (dir / "x").string()}}) == AUV_ERR_CONFIG);
  CHECK(run_status("gen-data", {{"kind", "toy"}, {"count", "many"}, {"out", (dir / "x").string()}}) == AUV_ERR_CONFIG);
  CHECK(run_status("train", train_config(dir / "absent.auvd", dir / "run")) == AUV_ERR_IO);
  CHECK(std::string(auv_last_error()).find("absent.auvd") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "run"));
  CHECK_FALSE(fs::exists(dir / "x"));
}

TEST_CASE("dataset handles expose shapes and their mapping") {
  Pipeline& p = Pipeline::get();
  auv_dataset* d = nullptr;
  REQUIRE(auv_dataset_load(p.dataset.string().c_str(), &d) == AUV_OK);
  int n = 0, pts = 0;
  CHECK(auv_dataset_size(d, &n) == AUV_OK);
  CHECK(n == 3);
  CHECK(auv_dataset_point_count(d, 1, &pts) == AUV_OK);
  CHECK(pts == 1024);
  CHECK(auv_dataset_point_count(d, 3, &pts) == AUV_ERR_INVALID_ARGUMENT);
  auv_model* m = nullptr;
  REQUIRE(auv_model_load(p.model.string().c_str(), &m) == AUV_OK);
  std::vector<float> uv(2 * 1024), masks(2 * 1024);
  CHECK(auv_map_shape(m, d, 0, uv.data(), uv.size(), masks.data(), masks.size()) == AUV_OK);
  for (int i = 0; i < 1024; ++i) CHECK(std::abs(masks[2 * i] + masks[2 * i + 1] - 1.0f) < 1e-5f);
  CHECK(auv_map_shape(m, d, 0, uv.data(), 10, nullptr, 0) == AUV_ERR_INVALID_ARGUMENT);
  auv_model_free(m);
  auv_dataset_free(d);
}

TEST_CASE("training through the API is reproducible") {
  Pipeline& p = Pipeline::get();
  const fs::path again = p.dir / "run_again";
  const Json r = run("train", train_config(p.dataset, again));
  CHECK(r["epochs"] == 3);
  for (const char* f : {"model.auvn", "stage1.auvn", "stage2.auvn", "stage3.auvn", "metrics.csv"})
    CHECK(bytes(p.run_dir / f) == bytes(again / f));
}

TEST_CASE("bake, transfer, fit, evaluate and render on the trained model") {
  Pipeline& p = Pipeline::get();
  const fs::path bakes = p.dir / "bakes";
  Json b0 = run("bake", {{"model", p.model.string()}, {"dataset", p.dataset.string()}, {"shape", 0}, {"resolution", 32},
                         {"mesh", (p.heads / "head_0000.obj").string()}, {"out", bakes.string()}, {"name", "a"}});
  CHECK(b0["valid_texels"].size() == 2);
  CHECK(b0["seam_faces"].get<int>() >= 0);
  const auto first = bytes(bakes / "a_tex0.png");
  run("bake", {{"model", p.model.string()}, {"dataset", p.dataset.string()}, {"shape", 0}, {"resolution", 32},
               {"mesh", (p.heads / "head_0000.obj").string()}, {"out", bakes.string()}, {"name", "a"}});
  CHECK(bytes(bakes / "a_tex0.png") == first);
  run("bake", {{"model", p.model.string()}, {"dataset", p.dataset.string()}, {"shape", 1}, {"resolution", 32},
               {"mesh", (p.heads / "head_0001.obj").string()}, {"out", bakes.string()}, {"name", "b"}});

  const Json t = run("transfer", {{"geometry", (bakes / "a").string()}, {"textures", (bakes / "b").string()},
                                  {"out", (p.dir / "swap").string()}});
  CHECK(t["geometry_unchanged"] == true);
  CHECK(t["name"] == "a_with_b");
  CHECK(bytes(p.dir / "swap" / "a_with_b_tex0.png") == bytes(bakes / "b_tex0.png"));
  CHECK(bytes(p.dir / "swap" / "a_with_b_tex1.png") == bytes(bakes / "b_tex1.png"));

  const Json f = run("fit-new", {{"model", p.model.string()}, {"shape_dataset", p.dataset.string()}, {"shape", 2},
                                 {"duplicates", 2}, {"epochs", 2}, {"points_per_step", 256}, {"smooth_subset", 64},
                                 {"out", (p.dir / "fit").string()}});
  CHECK(f["basis_constant"] == true);
  CHECK(f["basis_hash_before"] == f["basis_hash_after"]);
  CHECK(fs::exists(p.dir / "fit" / "model.auvn"));

  const Json s = run("eval-seg", {{"model", p.model.string()}, {"dataset", p.dataset.string()}, {"resolution", 32}});
  CHECK(s["label_count"] == 3);
  CHECK(s["shapes"].size() == 2);
  const double miou = s["mean_iou"].get<double>();
  CHECK(miou >= 0.0);
  CHECK(miou <= 1.0);

  const Json l = run("eval-landmarks", {{"model", p.model.string()}, {"dataset", p.dataset.string()}});
  CHECK(l["landmarks"].size() == 3);

  const Json r = run("render-basis", {{"model", p.model.string()}, {"grid", 8}, {"out", (p.dir / "basis").string()}});
  CHECK(r["basis_images"] == Json::array({8, 4}));
  CHECK(fs::exists(p.dir / "basis" / "basis_g0_007.png"));
  CHECK(fs::exists(p.dir / "basis" / "basis_g1_003.png"));
  CHECK_FALSE(fs::exists(p.dir / "basis" / "basis_g1_004.png"));
}

TEST_CASE("toy commands run end to end") {
  auvtest::TempDir dir("capi_toy");
  run("gen-data", {{"kind", "toy"}, {"count", 4}, {"size", 16}, {"seed", 3}, {"out", (dir / "toy").string()}});
  const Json r = run("train-toy", {{"data", (dir / "toy").string()}, {"out", (dir / "run").string()}, {"epochs", 2},
                                   {"prior_epochs", 1}, {"pixels_per_step", 64},
                                   {"model", {{"code_dim", 8}, {"generators", {{{"channels", 8}, {"width", 16}}}},
                                              {"basis_depth", 2}, {"uv_width", 16}, {"mask_width", 16},
                                              {"encoder_channels", 2}}}});
  CHECK(r["epochs"] == 2);
  CHECK(r["landmarks"].size() == 3);
  CHECK(std::isfinite(r["mse"].get<double>()));
  const Json l = run("eval-landmarks", {{"model", (dir / "run" / "model.auvn").string()}, {"toy_data", (dir / "toy").string()}});
  CHECK(l["landmarks"].size() == 3);
}

TEST_CASE("command line exit codes") {
  auvtest::TempDir dir("cli");
  const fs::path log = dir / "log.txt";
  CHECK(cli("--help", log) == 0);
  CHECK(slurp(log).find("gen-data") != std::string::npos);
  CHECK(cli("frobnicate", log) == 2);
  CHECK(cli("gen-data --kind toy --count 2 --size 16 --out '" + (dir / "t").string() + "' --bogus 1", log) == 2);

  write_text(dir / "bad.json", R"({"kind": "toy", "colour": 3})");
  CHECK(cli("gen-data --config '" + (dir / "bad.json").string() + "' --out '" + (dir / "t").string() + "'", log) == 2);
  CHECK(slurp(log).find("colour") != std::string::npos);
  write_text(dir / "broken.json", "{");
  CHECK(cli("gen-data --config '" + (dir / "broken.json").string() + "'", log) == 2);
  CHECK(cli("gen-data --kind toy --count x --out '" + (dir / "t").string() + "'", log) == 2);

  CHECK(cli("train --category head --dataset '" + (dir / "none.auvd").string() + "' --out '" + (dir / "r").string() + "'",
            log) == 3);
  CHECK(slurp(log).find("none.auvd") != std::string::npos);
  write_text(dir / "junk.auvd", "junk");
  CHECK(cli("train --category head --dataset '" + (dir / "junk.auvd").string() + "' --out '" + (dir / "r").string() + "'",
            log) == 3);

  CHECK(cli("gen-data --kind toy --count 3 --size 16 --seed 4 --out '" + (dir / "t1").string() + "'", log) == 0);
  CHECK(cli("gen-data --kind toy --count 3 --size 16 --seed 4 --out '" + (dir / "t2").string() + "'", log) == 0);
  for (const char* f : {"face_0000.png", "face_0002.json"}) CHECK(bytes(dir / "t1" / f) == bytes(dir / "t2" / f));
}

TEST_CASE("command line training with one seed writes identical checkpoints") {
  Pipeline& p = Pipeline::get();
  auvtest::TempDir dir("cli_train");
  Json cfg = train_config(p.dataset, "");
  cfg.erase("out");
  cfg.erase("seed");
  write_text(dir / "head.json", cfg.dump());
  const fs::path log = dir / "log.txt";
  for (const char* run_name : {"a", "b"})
    REQUIRE(cli("train --config '" + (dir / "head.json").string() + "' --seed 7 --out '" + (dir / run_name).string() + "'",
                log) == 0);
  CHECK(bytes(dir / "a" / "model.auvn") == bytes(dir / "b" / "model.auvn"));
  CHECK(bytes(dir / "a" / "model.auvn") == bytes(p.run_dir / "model.auvn"));

  cfg["lr"] = 1e30;
  write_text(dir / "diverge.json", cfg.dump());
  CHECK(cli("train --config '" + (dir / "diverge.json").string() + "' --seed 7 --out '" + (dir / "nan").string() + "'",
            log) == 4);
  CHECK(slurp(log).find("not finite") != std::string::npos);
}
