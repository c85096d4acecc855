#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mumodig/dataio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_binary() {
  const char* bin = std::getenv("MUMODIG_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "MUMODIG_CLI must point at the CLI binary");
  return bin;
}

int run_cli(const std::string& args, std::string* captured = nullptr) {
  const std::string cmd = cli_binary() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = pclose(pipe);
  if (captured) *captured = output;
  return WEXITSTATUS(status);
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("mumodig_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string file(const std::string& name, const json& content) const {
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << content.dump(2);
    return p.string();
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

json base_dataset() {
  return {{"kind", "synth"},       {"num_classes", 3},      {"image_shape", {3, 12, 12}},
          {"per_class_train", 20}, {"per_class_test", 8},   {"seed", 5},
          {"noise_sigma", 0.1}};
}

json base_train_config() {
  return {{"seed", 3},
          {"dataset", base_dataset()},
          {"model", {{"arch", "mlp"}}},
          {"train", {{"epochs", 3}, {"batch_size", 16}, {"learning_rate", 0.01}}}};
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli end to end") {
  Sandbox box;
  const std::string train_cfg = box.file("train.json", base_train_config());

  SUBCASE("train produces checkpoint, metrics and echoed config") {
    REQUIRE(run_cli("train --config " + train_cfg + " --out " + box.path("t1")) == 0);
    CHECK(fs::exists(box.path("t1") + "/model.ckpt"));
    CHECK(fs::exists(box.path("t1") + "/config.json"));
    std::ifstream metrics(box.path("t1") + "/metrics.json");
    const json m = json::parse(metrics);
    CHECK(m.at("epochs").size() == 3);

    SUBCASE("same seed reruns bit-identically") {
      REQUIRE(run_cli("train --config " + train_cfg + " --out " + box.path("t2")) == 0);
      CHECK(slurp(box.path("t1") + "/model.ckpt") == slurp(box.path("t2") + "/model.ckpt"));
    }
    SUBCASE("echoed config reproduces outputs") {
      REQUIRE(run_cli("train --config " + box.path("t1") + "/config.json --out " +
                      box.path("t3")) == 0);
      CHECK(slurp(box.path("t1") + "/model.ckpt") == slurp(box.path("t3") + "/model.ckpt"));
    }
    SUBCASE("existing output directory is refused") {
      std::string out;
      CHECK(run_cli("train --config " + train_cfg + " --out " + box.path("t1"), &out) == 2);
      CHECK(out.find("already exists") != std::string::npos);
    }

    SUBCASE("attack, evaluate, diagnose pipeline") {
      json attack_cfg = {{"seed", 9},
                         {"surrogate", box.path("t1") + "/model.ckpt"},
                         {"dataset", base_dataset()},
                         {"split", "test"},
                         {"max_examples", 6},
                         {"attack",
                          {{"estimator", "mumodig"},
                           {"iterations", 3},
                           {"transform_count", 2}}}};
      const std::string attack_path = box.file("attack.json", attack_cfg);
      REQUIRE(run_cli("attack --config " + attack_path + " --out " + box.path("a1")) == 0);
      CHECK(fs::exists(box.path("a1") + "/adversarial.bin"));
      {
        std::ifstream records(box.path("a1") + "/records.json");
        const json doc = json::parse(records);
        CHECK(doc.at("auxiliary_budget") == 2);  // N_T * N_B * N_I
        const json& recs = doc.at("records");
        REQUIRE(recs.size() == 6);
        CHECK(recs[0].at("keep_nonmonotonic") == false);
        CHECK(recs[0].at("delta_linf").get<double>() <= 16.0 / 255.0 + 1e-9);
      }

      // determinism of the whole archive
      REQUIRE(run_cli("attack --config " + attack_path + " --out " + box.path("a2")) == 0);
      CHECK(slurp(box.path("a1") + "/adversarial.bin") ==
            slurp(box.path("a2") + "/adversarial.bin"));

      // a second estimator for the two-row ladder
      attack_cfg["attack"]["estimator"] = "mumodig_all";
      const std::string attack2_path = box.file("attack2.json", attack_cfg);
      REQUIRE(run_cli("attack --config " + attack2_path + " --out " + box.path("a3")) == 0);
      {
        std::ifstream records(box.path("a3") + "/records.json");
        CHECK(json::parse(records).at("records")[0].at("keep_nonmonotonic") == true);
      }

      json eval_cfg = {{"seed", 1},
                       {"archives", {box.path("a1") + "/adversarial.bin",
                                     box.path("a3") + "/adversarial.bin"}},
                       {"targets", json::array({{{"name", "self"},
                                                 {"checkpoint", box.path("t1") + "/model.ckpt"}}})},
                       {"defense_bits", 3}};
      const std::string eval_path = box.file("eval.json", eval_cfg);
      REQUIRE(run_cli("evaluate --config " + eval_path + " --out " + box.path("e1")) == 0);
      {
        std::ifstream csv(box.path("e1") + "/report.csv");
        std::string line;
        std::getline(csv, line);
        CHECK(line.find("defended_asr_filtered") != std::string::npos);
        std::getline(csv, line);
        CHECK(line.rfind("mumodig,", 0) == 0);  // row order follows the config
        std::getline(csv, line);
        CHECK(line.rfind("mumodig_all,", 0) == 0);
      }

      json diag_cfg = {{"seed", 2},
                       {"checkpoint", box.path("t1") + "/model.ckpt"},
                       {"dataset", base_dataset()},
                       {"split", "test"},
                       {"example_index", 1},
                       {"profile", {{"n_points", 5}, {"baseline", "lbq"}}},
                       {"attribution", {{"n_interp", 6}}}};
      const std::string diag_path = box.file("diag.json", diag_cfg);
      REQUIRE(run_cli("diagnose --config " + diag_path + " --out " + box.path("d1")) == 0);
      {
        const auto profile = slurp(box.path("d1") + "/cosine_profile.csv");
        CHECK(std::count(profile.begin(), profile.end(), '\n') == 5);
        const auto attribution = slurp(box.path("d1") + "/attribution.csv");
        CHECK(std::count(attribution.begin(), attribution.end(), '\n') == 12);
      }
      REQUIRE(run_cli("diagnose --config " + diag_path + " --out " + box.path("d2")) == 0);
      CHECK(slurp(box.path("d1") + "/cosine_profile.csv") ==
            slurp(box.path("d2") + "/cosine_profile.csv"));
    }
  }

  SUBCASE("unknown config key exits 2 and names the key") {
    json bad = base_train_config();
    bad["typo_key"] = 1;
    std::string out;
    CHECK(run_cli("train --config " + box.file("bad.json", bad) + " --out " + box.path("x"),
                  &out) == 2);
    CHECK(out.find("typo_key") != std::string::npos);
    CHECK(!fs::exists(box.path("x")));
    CHECK(!fs::exists(box.path("x") + ".partial"));
  }

  SUBCASE("missing surrogate checkpoint exits 2") {
    json attack_cfg = {{"surrogate", box.path("nope.ckpt")},
                       {"dataset", base_dataset()},
                       {"attack", {{"estimator", "plain"}}}};
    std::string out;
    CHECK(run_cli("attack --config " + box.file("a.json", attack_cfg) + " --out " +
                      box.path("y"),
                  &out) == 2);
    CHECK(!fs::exists(box.path("y")));
  }

  SUBCASE("training divergence exits 3") {
    json diverge = base_train_config();
    diverge["train"]["learning_rate"] = 0.1;
    diverge["train"]["momentum"] = 1e6;
    diverge["train"]["lr_decay_every"] = 0;
    diverge["train"]["epochs"] = 10;
    std::string out;
    CHECK(run_cli("train --config " + box.file("div.json", diverge) + " --out " + box.path("z"),
                  &out) == 3);
    CHECK(!fs::exists(box.path("z")));
    CHECK(!fs::exists(box.path("z") + ".partial"));
  }
}
