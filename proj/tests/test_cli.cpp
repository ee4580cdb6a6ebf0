/* Copyright 2026 The TCC Segmentation Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "testing.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tcc/evaluation.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

fs::path Scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "tcc_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run Tcc(const std::string& args) {
  const auto err = Scratch() / "stderr.txt";
  const std::string cmd = std::string(TCC_CLI_PATH) + " " + args + " >" +
                          (Scratch() / "stdout.txt").string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = Slurp(err);
  return r;
}

std::string DirBytes(const fs::path& dir) {
  std::ostringstream os;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) os << fs::relative(f, dir).string() << "\n" << Slurp(f);
  return os.str();
}

const fs::path& Dataset() {
  static const fs::path dir = [] {
    auto d = Scratch() / "data";
    REQUIRE(Tcc("gen-data --n 12 --eval-n 4 --size 16 --classes 3 --seed 7 --out " +
                d.string())
                .code == 0);
    return d;
  }();
  return dir;
}

std::string TinyRun() {
  return " --dataset " + Dataset().string() +
         " --iterations 4 --set data.batch_size=2 --set data.unlabeled_batch_size=2"
         " --set training.eval_interval=2 --set training.checkpoint_interval=2"
         " --ratio 1/4";
}

}  // namespace

TEST_CASE("gen-data") {
  const auto& d = Dataset();
  CHECK(fs::exists(d / "manifest.json"));
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(d / "images")) images += e.is_regular_file();
  CHECK(images == 16);
  const auto before = DirBytes(d);

  auto again = Tcc("gen-data --n 12 --eval-n 4 --size 16 --classes 3 --seed 7 --out " +
                   d.string());
  CHECK(again.code == 1);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(Tcc("gen-data --n 12 --eval-n 4 --size 16 --classes 3 --seed 7 --force --out " +
            d.string())
            .code == 0);
  CHECK(DirBytes(d) == before);

  CHECK(Tcc("gen-data --classes 1 --out " + (Scratch() / "k1").string()).code == 1);
  CHECK(Tcc("gen-data --n 0 --out " + (Scratch() / "n0").string()).code == 1);
  CHECK(Tcc("gen-data").code == 1);
  CHECK(Tcc("").code == 1);
}

TEST_CASE("train, eval and plot") {
  const auto run = Scratch() / "run";
  auto r = Tcc("train --mode tcc --out " + run.string() + TinyRun());
  REQUIRE(r.code == 0);
  for (const char* f : {"config.resolved", "metrics.csv", "report.txt",
                        "checkpoints/last.ckpt", "checkpoints/best.ckpt"}) {
    CHECK(fs::exists(run / f));
  }

  auto ev = Tcc("eval --checkpoint " + (run / "checkpoints" / "last.ckpt").string());
  REQUIRE(ev.code == 0);
  auto report = tcc::ReportFile::Load(run / "eval_eval.txt");
  auto attention = tcc::ReadReport(report, "attention");
  auto conv = tcc::ReadReport(report, "conv");
  CHECK(attention.images == 4);
  CHECK(conv.per_class.size() == 3);
  CHECK(report.GetDouble("miou") == attention.miou);
  CHECK(report.Get("iteration") == "4");
  // Matches the training-time evaluation of the same weights.
  auto train_report = tcc::ReportFile::Load(run / "report.txt");
  CHECK(train_report.GetDouble("attention.miou") == attention.miou);

  CHECK(Tcc("eval --split train --checkpoint " +
            (run / "checkpoints" / "last.ckpt").string())
            .code == 0);
  CHECK(fs::exists(run / "eval_train.txt"));

  auto missing = Tcc("eval --checkpoint " + (run / "checkpoints" / "nope.ckpt").string());
  CHECK(missing.code == 2);
  CHECK(missing.err.find("missing checkpoint") != std::string::npos);

  const auto plots = Scratch() / "plots";
  REQUIRE(Tcc("plot " + (run / "metrics.csv").string() + " --out " + plots.string())
              .code == 0);
  for (const char* f : {"loss_sup.png", "loss_ccd.png", "loss_cfcd.png",
                        "loss_total.png", "miou.png"}) {
    CHECK(fs::file_size(plots / f) > 100);
  }
  std::ofstream(Scratch() / "empty.csv") << "iter,lr,g,loss_sup,loss_ccd,loss_cfcd,"
                                            "loss_total,miou_cnn,miou_vit\n";
  CHECK(Tcc("plot " + (Scratch() / "empty.csv").string() + " --out " +
            (Scratch() / "plots_empty").string())
            .code == 2);
}

TEST_CASE("train validation errors") {
  const auto cfg = Scratch() / "bad.cfg";
  std::ofstream(cfg) << "[losses]\nlamda = 1\n";
  auto r = Tcc("train --config " + cfg.string() + TinyRun());
  CHECK(r.code == 1);
  CHECK(r.err.find("losses.lamda") != std::string::npos);
  CHECK(Tcc("train --set training.nope=1" + TinyRun()).code == 1);
  CHECK(Tcc("train --mode fancy" + TinyRun()).code == 1);
  auto nodata = Tcc("train --dataset " + (Scratch() / "nothing").string() +
                    " --out " + (Scratch() / "run_nodata").string());
  CHECK(nodata.code == 2);
  CHECK(nodata.err.find("missing dataset") != std::string::npos);
}

TEST_CASE("resume and rerun from the command line") {
  const auto a = Scratch() / "rep_a";
  const auto b = Scratch() / "rep_b";
  REQUIRE(Tcc("train --mode ccd --out " + a.string() + TinyRun()).code == 0);
  REQUIRE(Tcc("train --mode ccd --out " + b.string() + TinyRun()).code == 0);
  CHECK(Slurp(a / "metrics.csv") == Slurp(b / "metrics.csv"));
  // Resuming a finished run leaves the trace unchanged.
  REQUIRE(Tcc("train --mode ccd --resume --out " + b.string() + TinyRun()).code == 0);
  CHECK(Slurp(a / "metrics.csv") == Slurp(b / "metrics.csv"));

  // The resolved config alone reproduces the run.
  const auto c = Scratch() / "rep_c";
  REQUIRE(Tcc("train --config " + (a / "config.resolved").string() + " --out " +
              c.string())
              .code == 0);
  CHECK(Slurp(a / "metrics.csv") == Slurp(c / "metrics.csv"));
}

TEST_CASE("ablate") {
  const auto out = Scratch() / "ablation";
  const std::string args = "ablate --modes supervised,tcc --seeds 0 --ratios 1/4,1/2"
                           " --iterations 2 --set data.batch_size=2"
                           " --set data.unlabeled_batch_size=2 --dataset " +
                           Dataset().string() + " --out " + out.string();
  REQUIRE(Tcc(args).code == 0);
  const auto table = Slurp(out / "table.md");
  CHECK(table.find("1/4") != std::string::npos);
  CHECK(table.find("1/2") != std::string::npos);
  const auto cell = out / "tcc" / "ratio_1_2" / "seed_0" / "report.txt";
  REQUIRE(fs::exists(cell));
  const auto stamp = fs::last_write_time(cell);
  REQUIRE(Tcc(args).code == 0);
  CHECK(fs::last_write_time(cell) == stamp);
  CHECK(Slurp(out / "table.md") == table);
}
