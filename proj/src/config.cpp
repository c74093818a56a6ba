#include "sinkdem/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "sinkdem/errors.hpp"

namespace sinkdem::experiments {

Method method_from_string(const std::string& s) {
  if (s == "sinkhorn_gan") return Method::kSinkhornGan;
  if (s == "gan") return Method::kGan;
  if (s == "wgan") return Method::kWgan;
  if (s == "wgan_gp") return Method::kWganGp;
  throw ConfigError("unknown method '" + s + "'");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kSinkhornGan: return "sinkhorn_gan";
    case Method::kGan: return "gan";
    case Method::kWgan: return "wgan";
    case Method::kWganGp: return "wgan_gp";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (!(target_mse > 0)) throw ConfigError("config: target_mse must be > 0");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
  if (epsilon_list.empty()) throw ConfigError("config: epsilon_list must be nonempty");
  if (!(epsilon > 0)) throw ConfigError("config: epsilon must be > 0");
  if (sinkhorn_iters < 1) throw ConfigError("config: sinkhorn_iters must be >= 1");
  if (!(lr > 0)) throw ConfigError("config: lr must be > 0");
  weights.validate();
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: expected boolean for '" + key + "', got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError("config: expected number for '" + key + "', got '" + v + "'");
  }
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<int>(d);
  } catch (...) {
    throw ConfigError("config: expected integer for '" + key + "', got '" + v + "'");
  }
}

std::vector<double> parse_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  std::istringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_double(tok, key));
  if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                     const std::string& value) {
  if (key == "name") cfg.name = value;
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "method") cfg.method = method_from_string(value);
  else if (key == "epsilon_list") cfg.epsilon_list = parse_list(value, key);
  else if (key == "max_epochs") cfg.max_epochs = parse_int(value, key);
  else if (key == "target_mse") cfg.target_mse = parse_double(value, key);
  else if (key == "batch") cfg.batch = parse_int(value, key);
  else if (key == "lr") cfg.lr = parse_double(value, key);
  else if (key == "subset_size") cfg.subset_size = parse_int(value, key);
  else if (key == "test_subset") cfg.test_subset = parse_int(value, key);
  else if (key == "noise_sigma") cfg.noise_sigma = parse_double(value, key);
  else if (key == "epsilon") cfg.epsilon = parse_double(value, key);
  else if (key == "sinkhorn_iters") cfg.sinkhorn_iters = parse_int(value, key);
  else if (key == "marginal_tol") cfg.marginal_tol = parse_double(value, key);
  else if (key == "clip_c") cfg.clip_c = parse_double(value, key);
  else if (key == "gp_lambda") cfg.gp_lambda = parse_double(value, key);
  else if (key == "lambda_da") cfg.weights.lambda_DA = parse_double(value, key);
  else if (key == "lambda_p") cfg.weights.lambda_P = parse_double(value, key);
  else if (key == "lambda_str") cfg.weights.lambda_str = parse_double(value, key);
  else if (key == "lambda_adv") cfg.weights.lambda_ADV = parse_double(value, key);
  else if (key == "lambda_ot") cfg.weights.lambda_OT = parse_double(value, key);
  else if (key == "sinkhorn_per_pixel") cfg.sinkhorn_per_pixel = parse_bool(value, key);
  else if (key == "data_dir") cfg.data_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "sr_train") cfg.sr_train = parse_int(value, key);
  else if (key == "sr_test") cfg.sr_test = parse_int(value, key);
  else if (key == "sr_patch") cfg.sr_patch = parse_int(value, key);
  else if (key == "sr_base_channels") cfg.sr_base_channels = parse_int(value, key);
  else if (key == "sr_n_dmrb") cfg.sr_n_dmrb = parse_int(value, key);
  else if (key == "sr_rcb") cfg.sr_rcb = parse_int(value, key);
  else if (key == "sr_factor") cfg.sr_factor = parse_int(value, key);
  else if (key == "sr_blur_sigma") cfg.sr_blur_sigma = parse_double(value, key);
  else if (key == "sr_terrain_roughness") cfg.sr_terrain_roughness = parse_double(value, key);
  else if (key == "sr_pixel_target") cfg.sr_pixel_target = parse_double(value, key);
  else if (key == "ablation_prior") cfg.ablation_prior = parse_bool(value, key);
  else if (key == "ablation_attention") cfg.ablation_attention = parse_bool(value, key);
  else if (key == "ablation_psa") cfg.ablation_psa = parse_bool(value, key);
  else if (key == "ablation_sinkhorn") cfg.ablation_sinkhorn = parse_bool(value, key);
  else if (key == "probe_pairs") cfg.probe_pairs = parse_int(value, key);
  else if (key == "probe_points") cfg.probe_points = parse_int(value, key);
  else if (key == "probe_lipschitz_scale") cfg.probe_lipschitz_scale = parse_double(value, key);
  else if (key == "threads") cfg.threads = parse_int(value, key);
  else throw ConfigError("config: unknown key '" + key + "'");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" +
                        line + "'");
    apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig config_from(const std::string& path,
                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: --set expects KEY=VALUE, got '" + ov + "'");
    apply_config_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

void write_config_echo(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("config: cannot open for write: " + path);
  f << "name=" << cfg.name << "\n";
  f << "seed=" << cfg.seed << "\n";
  f << "method=" << method_name(cfg.method) << "\n";
  f << "epsilon_list=";
  for (std::size_t i = 0; i < cfg.epsilon_list.size(); ++i)
    f << (i ? "," : "") << cfg.epsilon_list[i];
  f << "\n";
  f << "max_epochs=" << cfg.max_epochs << "\n";
  f << "target_mse=" << cfg.target_mse << "\n";
  f << "batch=" << cfg.batch << "\n";
  f << "lr=" << cfg.lr << "\n";
  f << "subset_size=" << cfg.subset_size << "\n";
  f << "test_subset=" << cfg.test_subset << "\n";
  f << "noise_sigma=" << cfg.noise_sigma << "\n";
  f << "epsilon=" << cfg.epsilon << "\n";
  f << "sinkhorn_iters=" << cfg.sinkhorn_iters << "\n";
  f << "marginal_tol=" << cfg.marginal_tol << "\n";
  f << "clip_c=" << cfg.clip_c << "\n";
  f << "gp_lambda=" << cfg.gp_lambda << "\n";
  f << "lambda_da=" << cfg.weights.lambda_DA << "\n";
  f << "lambda_p=" << cfg.weights.lambda_P << "\n";
  f << "lambda_str=" << cfg.weights.lambda_str << "\n";
  f << "lambda_adv=" << cfg.weights.lambda_ADV << "\n";
  f << "lambda_ot=" << cfg.weights.lambda_OT << "\n";
  f << "sinkhorn_per_pixel=" << (cfg.sinkhorn_per_pixel ? "true" : "false") << "\n";
  f << "data_dir=" << cfg.data_dir << "\n";
  f << "out_dir=" << cfg.out_dir << "\n";
  f << "sr_train=" << cfg.sr_train << "\n";
  f << "sr_test=" << cfg.sr_test << "\n";
  f << "sr_patch=" << cfg.sr_patch << "\n";
  f << "sr_base_channels=" << cfg.sr_base_channels << "\n";
  f << "sr_n_dmrb=" << cfg.sr_n_dmrb << "\n";
  f << "sr_rcb=" << cfg.sr_rcb << "\n";
  f << "sr_factor=" << cfg.sr_factor << "\n";
  f << "sr_blur_sigma=" << cfg.sr_blur_sigma << "\n";
  f << "sr_terrain_roughness=" << cfg.sr_terrain_roughness << "\n";
  f << "sr_pixel_target=" << cfg.sr_pixel_target << "\n";
  f << "ablation_prior=" << (cfg.ablation_prior ? "true" : "false") << "\n";
  f << "ablation_attention=" << (cfg.ablation_attention ? "true" : "false") << "\n";
  f << "ablation_psa=" << (cfg.ablation_psa ? "true" : "false") << "\n";
  f << "ablation_sinkhorn=" << (cfg.ablation_sinkhorn ? "true" : "false") << "\n";
  f << "probe_pairs=" << cfg.probe_pairs << "\n";
  f << "probe_points=" << cfg.probe_points << "\n";
  f << "probe_lipschitz_scale=" << cfg.probe_lipschitz_scale << "\n";
  f << "threads=" << cfg.threads << "\n";
}

int effective_threads(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("SINKDEM_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace sinkdem::experiments
