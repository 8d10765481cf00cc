// End-to-end checks of the lumos executable: exit codes, outputs, manifests,
// resume and seed handling.

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;  // stdout and stderr interleaved
};

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

Run run(const std::string& args, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / ("lumos_cli_log_" + std::to_string(std::rand()));
  const std::string cmd = env + " " + quoted(LUMOS_CLI) + " " + args + " > " + quoted(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream text;
  text << in.rdbuf();
  fs::remove(log);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kToyConfig =
    "# tiny run for the CLI tests\n"
    "aperture_resolution = 3\n"
    "slices = 3\n"
    "channels = 4\n"
    "blocks = 1\n"
    "crop = 24\n"
    "lr = 0.01\n"
    "epochs = 4\n"
    "checkpoint_every = 2\n";

// A 3x3-view dataset with two 30x28 scenes.
fs::path make_dataset(const ScratchDir& dir) {
  const fs::path data = dir.path() / "data";
  const Run r = run("synth --out " + quoted(data) + " --scenes 2 --angular 3 --height 30 --width 28 --seed 5");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  return data;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("train --dataset x").code == 1);
  CHECK(run("gradcheck --size 2").code == 1);
  CHECK(run("--help").code == 0);
  const Run v = run("--version");
  CHECK(v.code == 0);
  CHECK(v.output.find("lumos") != std::string::npos);
}

TEST_CASE("synth writes views and a manifest; LUMOS_SEED is the seed fallback") {
  ScratchDir dir("cli_synth");
  const fs::path data = make_dataset(dir);
  CHECK(fs::exists(data / "scene_000" / "view_2_2.png"));
  CHECK(fs::exists(data / "scene_001" / "lightfield.txt"));
  const std::string manifest = bytes(data / "manifest.txt");
  for (const char* field : {"command = ", "tool_version = ", "timestamp = ", "[config]", "seed = 5"})
    CHECK_MESSAGE(manifest.find(field) != std::string::npos, field);

  const fs::path env = dir.path() / "env", other = dir.path() / "other";
  const std::string shape = " --scenes 1 --angular 3 --height 30 --width 28";
  REQUIRE(run("synth --out " + quoted(env) + shape, "LUMOS_SEED=5").code == 0);
  REQUIRE(run("synth --out " + quoted(other) + shape, "LUMOS_SEED=6").code == 0);
  CHECK(bytes(env / "scene_000" / "view_1_1.png") == bytes(data / "scene_000" / "view_1_1.png"));
  CHECK(bytes(other / "scene_000" / "view_1_1.png") != bytes(data / "scene_000" / "view_1_1.png"));
  // the flag wins over the environment
  REQUIRE(run("synth --seed 5 --out " + quoted(other) + shape, "LUMOS_SEED=6").code == 0);
  CHECK(bytes(other / "scene_000" / "view_1_1.png") == bytes(data / "scene_000" / "view_1_1.png"));
}

TEST_CASE("render-gt writes one PNG per slice and reruns identically") {
  ScratchDir dir("cli_render");
  const fs::path data = make_dataset(dir);
  const fs::path cfg = dir.path() / "toy.cfg";
  write(cfg, kToyConfig);
  const fs::path a = dir.path() / "gt_a", b = dir.path() / "gt_b";
  const std::string args = "render-gt --scene " + quoted(data / "scene_000") + " --config " + quoted(cfg) + " --out ";
  REQUIRE(run(args + quoted(a)).code == 0);
  REQUIRE(run(args + quoted(b)).code == 0);
  for (int j = 0; j < 3; ++j) {
    const std::string name = "stack_" + std::to_string(j) + ".png";
    CHECK(bytes(a / name) == bytes(b / name));
  }
  CHECK_FALSE(fs::exists(a / "stack_3.png"));
  CHECK(bytes(a / "stack.txt") == bytes(b / "stack.txt"));
  const std::string manifest = bytes(a / "manifest.txt");
  CHECK(manifest.find("input.scene = ") != std::string::npos);
  CHECK(manifest.find("input.config = ") != std::string::npos);
  CHECK(manifest.find("slices = 3") != std::string::npos);

  // with a pinned timestamp the manifests match too
  const fs::path c = dir.path() / "gt_c", d = dir.path() / "gt_d";
  REQUIRE(run(args + quoted(c), "SOURCE_DATE_EPOCH=1700000000").code == 0);
  REQUIRE(run(args + quoted(d), "SOURCE_DATE_EPOCH=1700000000").code == 0);
  CHECK(bytes(c / "manifest.txt").find("timestamp = 2023-11-14T22:13:20Z") != std::string::npos);

  fs::remove(data / "scene_000" / "view_1_2.png");
  const Run missing = run(args + quoted(dir.path() / "gt_e"));
  CHECK(missing.code == 2);
  CHECK(missing.output.find("MissingView") != std::string::npos);
}

TEST_CASE("config errors name the problem") {
  ScratchDir dir("cli_config");
  const fs::path data = make_dataset(dir);
  const fs::path cfg = dir.path() / "bad.cfg";
  write(cfg, std::string(kToyConfig) + "aperture_resolutoin = 5\n");
  const Run r = run("train --dataset " + quoted(data) + " --config " + quoted(cfg) + " --out " +
                    quoted(dir.path() / "out"));
  CHECK(r.code == 1);
  CHECK(r.output.find("aperture_resolutoin") != std::string::npos);

  write(cfg, std::string(kToyConfig) + "aperture_mode = sparkly\n");
  const Run mode = run("train --dataset " + quoted(data) + " --config " + quoted(cfg) + " --out " +
                       quoted(dir.path() / "out"));
  CHECK(mode.code == 1);
  CHECK(mode.output.find("BadMode") != std::string::npos);
}

TEST_CASE("train, resume, eval, export and ablate") {
  ScratchDir dir("cli_train");
  const fs::path data = make_dataset(dir);
  const fs::path cfg = dir.path() / "toy.cfg";
  write(cfg, kToyConfig);
  const std::string common = " --dataset " + quoted(data) + " --seed 3 --jobs 1";

  const fs::path full = dir.path() / "full";
  const Run t = run("train" + common + " --config " + quoted(cfg) + " --out " + quoted(full));
  REQUIRE_MESSAGE(t.code == 0, t.output);
  for (const char* f : {"checkpoint.bin", "checkpoint_epoch_2.bin", "checkpoint_epoch_4.bin", "loss.csv", "manifest.txt"})
    CHECK_MESSAGE(fs::exists(full / f), f);
  CHECK(bytes(full / "checkpoint.bin") == bytes(full / "checkpoint_epoch_4.bin"));
  const std::string loss = bytes(full / "loss.csv");
  CHECK(loss.rfind("step,loss\n", 0) == 0);
  // one row per scene step: 4 epochs over 2 scenes
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 1 + 4 * 2);
  CHECK(bytes(full / "manifest.txt").find("seed = 3") != std::string::npos);

  SUBCASE("resume from the midpoint matches the uninterrupted run") {
    const fs::path half = dir.path() / "half", rest = dir.path() / "rest";
    const fs::path half_cfg = dir.path() / "half.cfg";
    std::string text = kToyConfig;
    text.replace(text.find("epochs = 4"), 10, "epochs = 2");
    write(half_cfg, text);
    REQUIRE(run("train" + common + " --config " + quoted(half_cfg) + " --out " + quoted(half)).code == 0);
    const Run r = run("train" + common + " --config " + quoted(cfg) + " --resume " + quoted(half / "checkpoint.bin") +
                      " --out " + quoted(rest));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(bytes(rest / "checkpoint.bin") == bytes(full / "checkpoint.bin"));
    CHECK(bytes(rest / "loss.csv") == loss);

    const fs::path changed = dir.path() / "changed.cfg";
    write(changed, std::string(kToyConfig) + "beta = 1\n");
    const Run bad = run("train" + common + " --config " + quoted(changed) + " --resume " +
                        quoted(half / "checkpoint.bin") + " --out " + quoted(dir.path() / "bad"));
    CHECK(bad.code == 2);
    CHECK(bad.output.find("ConfigMismatch") != std::string::npos);
  }

  SUBCASE("eval writes the report in its documented shape") {
    const fs::path out = dir.path() / "eval";
    const Run r = run("eval --ckpt " + quoted(full / "checkpoint.bin") + " --dataset " + quoted(data) + " --out " +
                      quoted(out));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(r.output.find("ctdm psnr=") != std::string::npos);
    const std::string csv = bytes(out / "report.csv");
    CHECK(csv.rfind("scene,variant,method", 0) == 0);
    CHECK(csv.find("scene_000,model,ctdm") != std::string::npos);
    CHECK(csv.find("scene_001,model,tdm") != std::string::npos);
    CHECK(bytes(out / "report.txt").find("scene=scene_001") != std::string::npos);
    CHECK(bytes(out / "manifest.txt").find("input.ckpt = ") != std::string::npos);
  }

  SUBCASE("export-apertures writes k CSVs and k PNGs") {
    const fs::path out = dir.path() / "apertures";
    REQUIRE(run("export-apertures --ckpt " + quoted(full / "checkpoint.bin") + " --out " + quoted(out)).code == 0);
    for (int i = 0; i < 4; ++i) {
      CHECK(fs::exists(out / ("aperture_" + std::to_string(i) + ".csv")));
      CHECK(fs::exists(out / ("aperture_" + std::to_string(i) + ".png")));
    }
    CHECK_FALSE(fs::exists(out / "aperture_4.csv"));
    const Run junk = run("export-apertures --ckpt " + quoted(full / "loss.csv") + " --out " + quoted(out));
    CHECK(junk.code == 2);
    CHECK(junk.output.find("BadCheckpoint") != std::string::npos);
  }

  SUBCASE("ablate trains each grid row") {
    const fs::path grid = dir.path() / "grid.txt";
    write(grid, "# variants\nno-f: learn_f=false\nsharp: beta=4\n");
    const fs::path out = dir.path() / "ablate";
    const Run r = run("ablate --grid " + quoted(grid) + " --config " + quoted(cfg) + common + " --out " + quoted(out));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const std::string table = bytes(out / "ablation.csv");
    for (const char* row : {"tdm-baseline", "no-f", "sharp"}) CHECK_MESSAGE(table.find(row) != std::string::npos, row);
    CHECK(fs::exists(out / "manifest.txt"));
  }
}

TEST_CASE("gradcheck on an 8x8 crop") {
  const Run r = run("gradcheck --size 8 --seed 2");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto at = r.output.find("max_relative_error=");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(r.output.substr(at + 19)) <= 1e-4);
}
