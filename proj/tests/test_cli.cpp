#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sinkdem/metrics.hpp"
#include "sinkdem/svg_plot.hpp"

using namespace sinkdem;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
  const auto p = fs::temp_directory_path() / "sinkdem_cli_test";
  fs::create_directories(p);
  return p;
}

std::string binary() {
  const char* env = std::getenv("SINKDEM_BIN");
  REQUIRE_MESSAGE(env != nullptr, "SINKDEM_BIN must point at the sinkdem binary");
  return env;
}

int run(const std::string& args, std::string* output = nullptr) {
  const auto out_path = tmpdir() / "cmd_out.txt";
  const std::string cmd = binary() + " " + args + " >" + out_path.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream f(out_path);
    std::stringstream ss;
    ss << f.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("ot-solve on the 2x2 swap cost") {
  const auto cost = tmpdir() / "cost.csv";
  {
    std::ofstream f(cost);
    f << "0,1\n1,0\n";
  }
  std::string out;
  const int code = run("ot-solve --cost " + cost.string() + " --eps 0.1 --iters 1000", &out);
  CHECK(code == 0);
  double dual = 1e9;
  std::istringstream ss(out);
  std::string key;
  while (ss >> key) {
    double v;
    ss >> v;
    if (key == "dual_value") dual = v;
  }
  // identity assignment is optimal at cost 0; entropy bound caps the dual
  CHECK(dual <= 0.1 * std::log(2.0) + 1e-9);
  CHECK(dual >= -1e-9);
}

TEST_CASE("unknown subcommand and unknown keys exit 1") {
  CHECK(run("no-such-subcommand") == 1);
  std::string out;
  CHECK(run("denoise --set nonsense_key=1", &out) == 1);
  CHECK(out.find("nonsense_key") != std::string::npos);
}

TEST_CASE("plot renders deterministic panels with legends") {
  const auto dir = tmpdir() / "plotrun";
  fs::create_directories(dir);
  std::vector<data::MetricsRecord> recs(3);
  for (int i = 0; i < 3; ++i) {
    recs[static_cast<std::size_t>(i)].epoch = i + 1;
    recs[static_cast<std::size_t>(i)].mse = 0.5 / (i + 1);
    recs[static_cast<std::size_t>(i)].loss_p = 1.0 / (i + 1);
    recs[static_cast<std::size_t>(i)].grad_specnorm_first = 0.1 * (i + 1);
    recs[static_cast<std::size_t>(i)].grad_specnorm_hidden = 0.2 * (i + 1);
  }
  const auto csv = dir / "metrics.csv";
  data::write_metrics_csv(recs, csv.string());

  const auto out1 = tmpdir() / "plots1";
  const auto out2 = tmpdir() / "plots2";
  CHECK(run("plot " + csv.string() + " --out " + out1.string()) == 0);
  CHECK(run("plot " + csv.string() + " --out " + out2.string()) == 0);
  for (const char* name : {"loss_vs_epoch.svg", "mse_vs_epoch.svg", "grad_norms_vs_epoch.svg"}) {
    CHECK(fs::exists(out1 / name));
    CHECK(slurp(out1 / name) == slurp(out2 / name));  // byte-identical
  }

  // two-point polyline exists for a two-row CSV
  std::vector<data::MetricsRecord> two(recs.begin(), recs.begin() + 2);
  const auto csv2 = dir / "two.csv";
  data::write_metrics_csv(two, csv2.string());
  const auto out3 = tmpdir() / "plots3";
  CHECK(run("plot " + csv2.string() + " --out " + out3.string()) == 0);
  CHECK(slurp(out3 / "mse_vs_epoch.svg").find("polyline") != std::string::npos);

  // malformed CSV exits 1
  const auto bad = dir / "bad.csv";
  {
    std::ofstream f(bad);
    f << "wrong,header\n1,2\n";
  }
  CHECK(run("plot " + bad.string() + " --out " + (tmpdir() / "plots4").string()) == 1);
}

TEST_CASE("plot overlays one legend entry per input csv") {
  const auto dir = tmpdir() / "overlay";
  std::vector<std::string> csvs;
  for (int series = 0; series < 3; ++series) {
    const auto sub = dir / ("eps_" + std::to_string(series));
    fs::create_directories(sub);
    std::vector<data::MetricsRecord> recs(2);
    for (int i = 0; i < 2; ++i) {
      recs[static_cast<std::size_t>(i)].epoch = i + 1;
      recs[static_cast<std::size_t>(i)].mse = 0.1 * (series + 1) / (i + 1);
    }
    const auto csv = sub / "metrics.csv";
    data::write_metrics_csv(recs, csv.string());
    csvs.push_back(csv.string());
  }
  const auto out = tmpdir() / "plots_overlay";
  CHECK(run("plot " + csvs[0] + " " + csvs[1] + " " + csvs[2] + " --out " + out.string()) == 0);
  const auto svg = slurp(out / "mse_vs_epoch.svg");
  CHECK(svg.find("eps_0") != std::string::npos);
  CHECK(svg.find("eps_1") != std::string::npos);
  CHECK(svg.find("eps_2") != std::string::npos);
}

TEST_CASE("gen-data and eval round trip") {
  const auto dir = tmpdir() / "terrain";
  CHECK(run("gen-data --kind terrain --train 2 --seed 3 --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "terrain_0.sdem"));
  CHECK(fs::exists(dir / "terrain_1.pgm"));
  std::string out;
  CHECK(run("eval --pred " + (dir / "terrain_0.sdem").string() + " --truth " +
                (dir / "terrain_0.sdem").string(),
            &out) == 0);
  CHECK(out.find("rmse 0") != std::string::npos);
  CHECK(out.find("psnr inf") != std::string::npos);

  const auto digits = tmpdir() / "digits";
  CHECK(run("gen-data --kind digits --train 16 --test 4 --seed 3 --out " + digits.string()) == 0);
  CHECK(fs::exists(digits / "train-images-idx3-ubyte"));
  CHECK(fs::exists(digits / "t10k-labels-idx1-ubyte"));
}

TEST_CASE("denoise CLI determinism across invocations") {
  const auto digits = tmpdir() / "digits_run";
  REQUIRE(run("gen-data --kind digits --train 96 --test 16 --seed 7 --out " +
              digits.string()) == 0);
  const std::string common =
      "denoise --set method=gan --set subset_size=96 --set test_subset=16 --set batch=32"
      " --set max_epochs=1 --set target_mse=1e-9 --set seed=7 --set threads=1"
      " --set data_dir=" + digits.string();
  const auto o1 = tmpdir() / "runA", o2 = tmpdir() / "runB";
  CHECK(run(common + " --out " + o1.string()) == 0);
  CHECK(run(common + " --out " + o2.string()) == 0);
  const auto a = data::read_metrics_csv((o1 / "metrics.csv").string());
  const auto b = data::read_metrics_csv((o2 / "metrics.csv").string());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mse == b[i].mse);
    CHECK(a[i].loss_p == b[i].loss_p);
    CHECK(a[i].grad_specnorm_hidden == b[i].grad_specnorm_hidden);
  }
  // config echo is self-describing and re-usable
  CHECK(fs::exists(o1 / "config.echo"));
  const auto echo = slurp(o1 / "config.echo");
  CHECK(echo.find("method=gan") != std::string::npos);
  CHECK(echo.find("subset_size=96") != std::string::npos);
}
