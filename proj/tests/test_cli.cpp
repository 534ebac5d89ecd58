#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace {

// Runs the installed binary (GAT_CLI_BIN) and captures stdout+stderr.
struct RunResult {
  int exit_code = -1;
  std::string out;
  std::vector<json> records;  // parsed single-line JSON stdout records
};

std::string cli_bin() {
  const char* p = std::getenv("GAT_CLI_BIN");
  REQUIRE_MESSAGE(p != nullptr, "GAT_CLI_BIN must point at the gat binary");
  return p;
}

RunResult run(const std::string& args) {
  RunResult r;
  std::string cmd = cli_bin() + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;

  size_t pos = 0;
  while (pos < r.out.size()) {
    size_t nl = r.out.find('\n', pos);
    if (nl == std::string::npos) nl = r.out.size();
    std::string line = r.out.substr(pos, nl - pos);
    if (!line.empty() && line[0] == '{') {
      auto parsed = json::parse(line, nullptr, false);
      if (!parsed.is_discarded()) r.records.push_back(std::move(parsed));
    }
    pos = nl + 1;
  }
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct TempDir {
  std::string path;
  TempDir() {
    char tmpl[] = "/tmp/gat_cli_XXXXXX";
    path = mkdtemp(tmpl);
  }
  ~TempDir() { std::system(("rm -rf " + path).c_str()); }
};

std::string write_config(const TempDir& dir, json overrides) {
  json cfg = {
      {"model",
       {{"width_c", 32}, {"depth", 2}, {"heads", 2}, {"patch_p", 2},
        {"latent_dz", 16}, {"stages_k", 2}, {"num_classes", 4},
        {"image_channels", 3}, {"image_hw", 8}}},
      {"steps", 2},
      {"batch_size", 4},
      {"per_class", 30},
      {"seed", 3},
      {"teacher_dim", 12},
      {"repa_hidden", 24},
      {"eval_interval", 2},
      {"n_eval", 16},
      {"checkpoint_interval", 2},
      {"eval_fraction", 0.2},
      {"out_dir", dir.path + "/run"}};
  for (auto& [k, v] : overrides.items()) cfg[k] = v;
  std::string path = dir.path + "/config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

}  // namespace

TEST_CASE("every subcommand echoes a config record first") {
  TempDir dir;
  RunResult r = run("data synth --out " + dir.path + "/d.glt1 --classes 2 --per-class 5");
  CHECK(r.exit_code == 0);
  REQUIRE(r.records.size() >= 2);
  CHECK(r.records.front()["kind"] == "config");
  CHECK(r.records.front()["command"] == "data synth");
  CHECK(r.records.back()["kind"] == "result");
  CHECK(r.records.back()["count"] == 10);
}

TEST_CASE("data synth is deterministic and inspect reports its histogram") {
  TempDir dir;
  std::string a = dir.path + "/a.glt1", b = dir.path + "/b.glt1";
  CHECK(run("data synth --out " + a + " --classes 3 --per-class 7 --seed 11").exit_code == 0);
  CHECK(run("data synth --out " + b + " --classes 3 --per-class 7 --seed 11").exit_code == 0);
  CHECK(slurp(a) == slurp(b));

  RunResult ins = run("data inspect --in " + a);
  CHECK(ins.exit_code == 0);
  json res = ins.records.back();
  CHECK(res["count"] == 21);
  CHECK(res["num_classes"] == 3);
  CHECK(res["class_counts"] == json::array({7, 7, 7}));
  for (double m : res["channel_mean"]) CHECK(std::abs(m) < 1e-3);
}

TEST_CASE("train writes a metric log and a resumable checkpoint") {
  TempDir dir;
  std::string cfg = write_config(dir, {});
  RunResult r = run("train --config " + cfg);
  REQUIRE(r.exit_code == 0);
  CHECK(r.records.front()["kind"] == "config");
  CHECK(r.records.front()["run"]["steps"] == 2);
  CHECK(r.records.back()["steps"] == 2);

  std::ifstream log(dir.path + "/run/metrics.jsonl");
  REQUIRE(log.good());
  int steps = 0, evals = 0, ckpts = 0;
  std::string line;
  while (std::getline(log, line)) {
    json rec = json::parse(line);
    if (rec["kind"] == "step") {
      ++steps;
      CHECK(rec.contains("l_d_total"));
      CHECK(rec.contains("l_g_total"));
    }
    if (rec["kind"] == "eval") ++evals;
    if (rec["kind"] == "checkpoint") ++ckpts;
  }
  CHECK(steps == 2);
  CHECK(evals >= 2);  // step 0 and the final step
  CHECK(ckpts >= 1);

  // Resume continues from the saved step and appends to the log.
  RunResult res = run("train --resume " + dir.path + "/run/ckpt_final.gatc");
  CHECK(res.exit_code == 0);
  CHECK(res.records.back()["steps"] == 2);  // already at the target step count
}

TEST_CASE("config errors name the offending keys and exit 2") {
  TempDir dir;
  std::string cfg = write_config(dir, {{"mystery_knob", 1}, {"other_bad", 2}});
  RunResult r = run("train --config " + cfg);
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("mystery_knob") != std::string::npos);
  CHECK(r.out.find("other_bad") != std::string::npos);

  RunResult mismatch = run("train");
  CHECK(mismatch.exit_code == 2);
}

TEST_CASE("sampling is deterministic; io failures exit 3") {
  TempDir dir;
  std::string cfg = write_config(dir, {});
  REQUIRE(run("train --config " + cfg).exit_code == 0);
  std::string ckpt = dir.path + "/run/ckpt_final.gatc";

  std::string s1 = dir.path + "/s1.glt1", s2 = dir.path + "/s2.glt1";
  CHECK(run("sample --checkpoint " + ckpt + " --out " + s1 +
            " --count 18 --seed 4").exit_code == 0);
  CHECK(run("sample --checkpoint " + ckpt + " --out " + s2 +
            " --count 18 --seed 4").exit_code == 0);
  CHECK(slurp(s1) == slurp(s2));

  // Truncation and guidance change the output but keep it loadable.
  std::string s3 = dir.path + "/s3.glt1";
  CHECK(run("sample --checkpoint " + ckpt + " --out " + s3 +
            " --count 18 --seed 4 --psi 0.5 --guidance 1.8 --order guide-first")
            .exit_code == 0);
  CHECK(slurp(s3) != slurp(s1));
  CHECK(run("data inspect --in " + s3).exit_code == 0);

  CHECK(run("sample --checkpoint " + dir.path + "/missing.gatc --out " +
            dir.path + "/x.glt1").exit_code == 3);
  CHECK(run("sample --checkpoint " + ckpt + " --out " + dir.path +
            "/x.glt1 --class 99").exit_code == 2);
  CHECK(run("sample --checkpoint " + ckpt + " --out " + dir.path +
            "/x.glt1 --order sideways").exit_code == 2);
}

TEST_CASE("analysis commands emit well-formed reports") {
  TempDir dir;
  std::string cfg = write_config(dir, {});
  REQUIRE(run("train --config " + cfg).exit_code == 0);
  std::string ckpt = dir.path + "/run/ckpt_final.gatc";

  RunResult blocks = run("analyze blocks --checkpoint " + ckpt + " --count 6");
  CHECK(blocks.exit_code == 0);
  json br = blocks.records.back();
  CHECK(br["distance_kind"] == "latent-l2");
  CHECK(br["distances"].size() == 2);

  RunResult pca = run("analyze pca --checkpoint " + ckpt + " --count 5 --out " +
                      dir.path + "/pca.json");
  CHECK(pca.exit_code == 0);
  json pr = json::parse(slurp(dir.path + "/pca.json"));
  REQUIRE(pr["blocks"].size() == 2);
  CHECK(pr["blocks"][0]["components"].size() == 3);
  CHECK(pr["blocks"][0]["grid"].size() == 4);

  // A dataset against itself scores zero.
  std::string d = dir.path + "/fid.glt1";
  REQUIRE(run("data synth --out " + d + " --classes 4 --per-class 10 --seed 2")
              .exit_code == 0);
  RunResult fid = run("analyze fid --a " + d + " --b " + d +
                      " --teacher-dim 12 --count 40");
  CHECK(fid.exit_code == 0);
  CHECK(std::abs(fid.records.back()["frechet"].get<double>()) < 1e-9);

  RunResult fid2 = run("analyze fid --checkpoint " + ckpt + " --count 16");
  CHECK(fid2.exit_code == 0);
  CHECK(fid2.records.back()["frechet"].get<double>() >= 0.0);

  // Geometry mismatches are I/O errors.
  std::string odd = dir.path + "/odd.glt1";
  REQUIRE(run("data synth --out " + odd +
              " --classes 4 --per-class 10 --seed 2 --hw 4").exit_code == 0);
  CHECK(run("analyze fid --a " + d + " --b " + odd + " --teacher-dim 12")
            .exit_code == 3);
}

TEST_CASE("probe-lr reports adapted rates and width ratios") {
  RunResult r = run("probe-lr --widths 32,64 --seeds 1 --steps 1 --batch 2 --depth 2");
  CHECK(r.exit_code == 0);
  json res = r.records.back();
  REQUIRE(res["results"].size() == 2);
  CHECK(res["results"][0]["width"] == 32);
  CHECK(res["results"][0]["eta"].get<double>() ==
        doctest::Approx(4e-4 * 384.0 / 32.0).epsilon(1e-12));
  CHECK(res["ratios"].size() == 1);

  CHECK(run("probe-lr --widths 33").exit_code == 2);
  CHECK(run("probe-lr --widths ").exit_code == 2);
}
