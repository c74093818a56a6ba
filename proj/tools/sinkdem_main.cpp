#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sinkdem/data.hpp"
#include "sinkdem/experiments.hpp"
#include "sinkdem/ot.hpp"
#include "sinkdem/svg_plot.hpp"

namespace fs = std::filesystem;
using namespace sinkdem;

namespace {

ot::Matrix read_cost_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("ot-solve: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (!rows.empty() && row.size() != rows[0].size())
      throw FormatError("ot-solve: ragged CSV in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("ot-solve: empty cost CSV " + path);
  ot::Matrix C(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return C;
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--set", opts.sets, "override, KEY=VALUE (repeatable)");
  cmd->add_option("--out", opts.out_dir, "output directory");
}

experiments::ExperimentConfig resolve(const CommonOpts& opts) {
  auto cfg = experiments::config_from(opts.config_path, opts.sets);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

int run_plot(const std::vector<std::string>& csvs, const std::string& out_dir) {
  const auto panels = plot::panels_from_csvs(csvs);
  const fs::path dir = out_dir.empty() ? fs::path(csvs[0]).parent_path() : fs::path(out_dir);
  fs::create_directories(dir.empty() ? "." : dir);
  for (const auto& p : panels) {
    const auto path = (dir.empty() ? fs::path(".") : dir) / p.filename;
    std::ofstream f(path, std::ios::binary);
    f << p.svg;
    if (!f) throw IoError("plot: write failed: " + path.string());
    std::cout << path.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sinkdem: Sinkhorn-regularized adversarial training toolkit"};
  app.require_subcommand(1);

  // ot-solve
  auto* ot_cmd = app.add_subcommand("ot-solve", "solve entropic OT on a CSV cost matrix");
  std::string cost_path;
  double ot_eps = 0.1, ot_tol = 1e-9;
  int ot_iters = 1000;
  ot_cmd->add_option("--cost", cost_path, "cost matrix CSV")->required();
  ot_cmd->add_option("--eps", ot_eps, "entropic weight");
  ot_cmd->add_option("--iters", ot_iters, "max Sinkhorn iterations");
  ot_cmd->add_option("--tol", ot_tol, "marginal tolerance");

  CommonOpts denoise_o, sweep_o, base_o, sr_o, probe_o;
  auto* denoise_cmd = app.add_subcommand("denoise", "digit-denoising adversarial run");
  add_common(denoise_cmd, denoise_o);
  auto* sweep_cmd = app.add_subcommand("eps-sweep", "denoising runs across epsilon_list");
  add_common(sweep_cmd, sweep_o);
  auto* base_cmd = app.add_subcommand("baselines", "method comparison on denoising");
  add_common(base_cmd, base_o);
  auto* sr_cmd = app.add_subcommand("sr-toy", "synthetic-terrain super-resolution run");
  add_common(sr_cmd, sr_o);
  auto* probe_cmd = app.add_subcommand("probe-smoothness", "divergence smoothness probe");
  add_common(probe_cmd, probe_o);

  auto* gen_cmd = app.add_subcommand("gen-data", "generate datasets");
  std::string gen_kind = "digits", gen_out = "data";
  int gen_train = 6000, gen_test = 1000;
  std::uint64_t gen_seed = 1;
  gen_cmd->add_option("--kind", gen_kind, "digits | terrain");
  gen_cmd->add_option("--train", gen_train, "training sample count");
  gen_cmd->add_option("--test", gen_test, "test sample count");
  gen_cmd->add_option("--seed", gen_seed, "generation seed");
  gen_cmd->add_option("--out", gen_out, "output directory");

  auto* plot_cmd = app.add_subcommand("plot", "render SVG panels from metrics CSVs");
  std::vector<std::string> plot_csvs;
  std::string plot_out;
  plot_cmd->add_option("csv", plot_csvs, "metrics CSV paths")->required();
  plot_cmd->add_option("--out", plot_out, "output directory (default: CSV directory)");

  auto* eval_cmd = app.add_subcommand("eval", "metrics between two SDEM rasters");
  std::string eval_pred, eval_truth;
  double eval_range = 1.0;
  eval_cmd->add_option("--pred", eval_pred, "prediction raster")->required();
  eval_cmd->add_option("--truth", eval_truth, "ground-truth raster")->required();
  eval_cmd->add_option("--range", eval_range, "data range for PSNR/SSIM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 1;
  }

  try {
    if (*ot_cmd) {
      const ot::Matrix C = read_cost_csv(cost_path);
      ot::CostMatrix cost{C, 2.0};
      ot::SinkhornConfig cfg;
      cfg.epsilon = ot_eps;
      cfg.max_iters = ot_iters;
      cfg.marginal_tol = ot_tol;
      ot::Matrix row_pts(C.rows(), 1), col_pts(C.cols(), 1);
      row_pts.setZero();
      col_pts.setZero();
      const auto mu = ot::DiscreteMeasure::uniform(row_pts);
      const auto nu = ot::DiscreteMeasure::uniform(col_pts);
      const auto sol = ot::sinkhorn_solve(mu, nu, cost, cfg);
      std::printf("dual_value %.12g\n", sol.dual_value);
      std::printf("primal_cost %.12g\n", sol.primal_cost);
      std::printf("marginal_violation %.12g\n", sol.marginal_violation);
      return 0;
    }
    if (*denoise_cmd) {
      const auto res = experiments::run_denoise(resolve(denoise_o));
      if (res.failed) {
        std::cerr << "run failed: " << res.failure << "\n";
        return 2;
      }
      std::cout << "epochs_to_target "
                << (res.reached() ? std::to_string(res.epochs_to_target) : "not_reached")
                << "\n";
      return 0;
    }
    if (*sweep_cmd) {
      const auto sweep = experiments::run_eps_sweep(resolve(sweep_o));
      for (const auto& e : sweep.entries) {
        if (e.run.failed) {
          std::cerr << "run failed at epsilon " << e.epsilon << ": " << e.run.failure << "\n";
          return 2;
        }
        std::cout << "epsilon " << e.epsilon << " epochs "
                  << (e.run.reached() ? std::to_string(e.run.epochs_to_target)
                                      : "not_reached")
                  << " near_opt_hidden " << e.near_opt_hidden << "\n";
      }
      return 0;
    }
    if (*base_cmd) {
      const auto res = experiments::run_baselines(resolve(base_o));
      for (const auto& [m, run] : res) {
        if (run.failed) {
          std::cerr << "run failed for " << experiments::method_name(m) << ": "
                    << run.failure << "\n";
          return 2;
        }
        std::cout << experiments::method_name(m) << " epochs "
                  << (run.reached() ? std::to_string(run.epochs_to_target) : "not_reached")
                  << "\n";
      }
      return 0;
    }
    if (*sr_cmd) {
      const auto res = experiments::run_sr_toy(resolve(sr_o));
      if (res.run.failed) {
        std::cerr << "run failed: " << res.run.failure << "\n";
        return 2;
      }
      std::cout << "bicubic_ssim " << res.bicubic.ssim_pct << " final_ssim "
                << res.final_eval.ssim_pct << " epochs_to_pixel_target "
                << (res.epochs_to_pixel_target >= 0
                        ? std::to_string(res.epochs_to_pixel_target)
                        : "not_reached")
                << "\n";
      return 0;
    }
    if (*probe_cmd) {
      const auto rows = experiments::smoothness_probe(resolve(probe_o));
      for (const auto& r : rows)
        std::cout << "epsilon " << r.epsilon << " gamma_hat " << r.gamma_hat << "\n";
      return 0;
    }
    if (*gen_cmd) {
      if (gen_kind == "digits") {
        data::write_digit_fixture(gen_out, gen_train, gen_test, gen_seed);
        std::cout << "wrote digit corpus (" << gen_train << "/" << gen_test << ") under "
                  << gen_out << "\n";
      } else if (gen_kind == "terrain") {
        fs::create_directories(gen_out);
        for (int i = 0; i < gen_train; ++i) {
          const auto dem = data::gen_terrain(gen_seed + static_cast<std::uint64_t>(i), 65, 0.6);
          const auto name = fs::path(gen_out) / ("terrain_" + std::to_string(i));
          data::write_raster_sdem(name.string() + ".sdem", dem);
          data::write_raster_pgm16(name.string() + ".pgm", dem);
        }
        std::cout << "wrote " << gen_train << " terrain rasters under " << gen_out << "\n";
      } else {
        std::cerr << "gen-data: unknown kind '" << gen_kind << "'\n";
        return 1;
      }
      return 0;
    }
    if (*plot_cmd) return run_plot(plot_csvs, plot_out);
    if (*eval_cmd) {
      const auto pred = data::read_raster_sdem(eval_pred);
      const auto truth = data::read_raster_sdem(eval_truth);
      const auto m = data::eval_metrics(data::raster_to_tensor(pred),
                                        data::raster_to_tensor(truth), eval_range);
      std::printf("rmse %.9g\nmae %.9g\npsnr %s\nssim_pct %.9g\n", m.rmse, m.mae,
                  data::format_metric(m.psnr).c_str(), m.ssim_pct);
      return 0;
    }
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
