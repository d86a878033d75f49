// fedef command line: run single experiments, the speedup sweep, and the
// compression-discrepancy simulation. All outputs are CSV/JSON files that are
// byte-identical across reruns with the same seed.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedef/config.hpp"
#include "fedef/errors.hpp"
#include "fedef/federation_engine.hpp"
#include "fedef/metrics.hpp"

namespace {

using nlohmann::json;

std::vector<std::size_t> parse_count_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    long long v = std::stoll(cell);
    if (v < 1) throw fedef::config_error("list entries must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw fedef::config_error("empty list");
  return out;
}

json summary_json(const fedef::ExperimentConfig& cfg,
                  const fedef::RunSummary& summary) {
  json j;
  j["config"] = json::object();
  std::stringstream ss(fedef::serialize_config(cfg));
  std::string line;
  while (std::getline(ss, line)) {
    auto eq = line.find(" = ");
    j["config"][line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["rounds"] = summary.rounds;
  j["final_grad_norm_sq"] = summary.final_grad_norm_sq;
  j["final_train_loss"] = summary.final_train_loss;
  j["bits_up_cum"] = summary.bits_up_cum;
  j["bits_down_cum"] = summary.bits_down_cum;
  j["restarts_total"] = summary.restarts_total;
  if (summary.virtual_iterate_monitored) {
    j["max_virtual_iterate_rel_err"] = summary.max_virtual_iterate_rel_err;
  }
  json hist = json::object();
  for (const auto& [lag, count] : summary.staleness_histogram) {
    hist[std::to_string(lag)] = count;
  }
  j["staleness_histogram"] = hist;
  return j;
}

void run_one(const fedef::ExperimentConfig& cfg, const std::string& csv_name,
             const std::string& json_name) {
  fedef::RunConfig rc = fedef::to_run_config(cfg);
  fedef::Problem problem = fedef::build_problem(cfg);
  fedef::RunSummary summary;
  std::vector<fedef::RoundRecord> records =
      fedef::run_experiment(std::move(problem), rc, &summary);

  std::filesystem::create_directories(cfg.out_dir);
  std::string csv_path = cfg.out_dir + "/" + csv_name;
  fedef::write_csv(records, csv_path);
  fedef::write_text_file(summary_json(cfg, summary).dump(2) + "\n",
                         cfg.out_dir + "/" + json_name);
  std::cout << csv_path << ": " << summary.rounds
            << " rounds, final grad_norm_sq = "
            << fedef::format_float(summary.final_grad_norm_sq)
            << ", bits up = " << summary.bits_up_cum << "\n";
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
  fedef::ExperimentConfig cfg = fedef::parse_config_file(config_path);
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.out_dir = *out_dir;
  run_one(cfg, "metrics.csv", "summary.json");
  return 0;
}

int cmd_speedup(const std::string& config_path, const std::string& n_csv,
                const std::string& m_csv, std::optional<std::uint64_t> seed,
                std::optional<std::string> out_dir) {
  if (n_csv.empty() == m_csv.empty()) {
    throw fedef::config_error("speedup: pass exactly one of --n or --m");
  }
  fedef::ExperimentConfig base = fedef::parse_config_file(config_path);
  if (seed) base.seed = *seed;
  if (out_dir) base.out_dir = *out_dir;

  const bool sweep_n = !n_csv.empty();
  for (std::size_t v : parse_count_list(sweep_n ? n_csv : m_csv)) {
    fedef::ExperimentConfig cfg = base;
    if (sweep_n) {
      cfg.problem_n = v;
      cfg.fl_m = 0;  // full participation
    } else {
      cfg.fl_m = v;
    }
    cfg.fl_eta = 0.1 * std::sqrt(static_cast<double>(v));
    cfg.fl_eta_l = 0.1;
    std::string tag = (sweep_n ? "n" : "m") + std::to_string(v);
    run_one(cfg, "metrics_" + tag + ".csv", "summary_" + tag + ".json");
  }
  return 0;
}

int cmd_measure_qa(const std::string& dist, const std::string& s_csv,
                   const std::string& compressor, int trials, std::size_t n,
                   std::size_t d, double scale_param, std::uint64_t seed,
                   const std::string& out_dir) {
  if (trials < 1) throw fedef::config_error("measure-qa: trials must be >= 1");
  fedef::SynthDist sd;
  if (dist == "gaussian") {
    sd = fedef::SynthDist::Gaussian;
  } else if (dist == "laplace") {
    sd = fedef::SynthDist::Laplace;
  } else {
    throw fedef::config_error("measure-qa: --dist must be gaussian or laplace");
  }
  fedef::CompressorSpec spec = fedef::parse_compressor_spec(compressor);
  fedef::GroupLayout layout({d});
  double q_c_sq = fedef::deviation_bound(spec, layout).value_or(-1.0);

  std::string out = "dist,s,compressor,trials,mean_q_a_sq,max_q_a_sq,q_c_sq\n";
  for (std::size_t s : parse_count_list(s_csv)) {
    fedef::RngStream rng =
        fedef::derive_stream(seed, fedef::stream_tag::kProblem, s);
    double sum = 0.0;
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      auto grads = fedef::synth_client_gradients(
          sd, scale_param, n, d, static_cast<double>(s), rng);
      double q = fedef::measure_q_a(grads, spec, rng);
      sum += q;
      worst = std::max(worst, q);
    }
    out += dist + "," + std::to_string(s) + "," + spec.to_string() + "," +
           std::to_string(trials) + "," +
           fedef::format_float(sum / trials) + "," +
           fedef::format_float(worst) + "," + fedef::format_float(q_c_sq) +
           "\n";
  }
  std::filesystem::create_directories(out_dir);
  std::string path = out_dir + "/qa_" + dist + "_" + spec.to_string() + ".csv";
  // ':' in file names is awkward on some filesystems
  for (char& ch : path) {
    if (ch == ':') ch = '-';
  }
  fedef::write_text_file(out, path);
  std::cout << path << "\n" << out;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed federated optimization simulator with error feedback"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--seed", seed, "override master seed");
  run->add_option("--out", out_dir, "override output directory");

  std::string n_csv, m_csv;
  auto* speedup = app.add_subcommand(
      "speedup", "Sweep n (full participation) or m (fixed n) with eta = 0.1*sqrt(.)");
  speedup->add_option("config", config_path, "base config file")->required();
  speedup->add_option("--n", n_csv, "comma-separated client counts");
  speedup->add_option("--m", m_csv, "comma-separated participant counts");
  speedup->add_option("--seed", seed, "override master seed");
  speedup->add_option("--out", out_dir, "override output directory");

  std::string dist = "gaussian", s_csv = "2,10,100", compressor = "topk:0.1";
  int trials = 1000;
  std::size_t qa_n = 5, qa_d = 1100;
  double scale_param = 0.01;
  std::uint64_t qa_seed = 42;
  std::string qa_out = "out";
  auto* qa = app.add_subcommand(
      "measure-qa", "Compression discrepancy on synthetic heterogeneous gradients");
  qa->add_option("--dist", dist, "gaussian | laplace");
  qa->add_option("--s", s_csv, "comma-separated heterogeneity scale factors");
  qa->add_option("--compressor", compressor, "e.g. topk:0.1 or sign");
  qa->add_option("--trials", trials, "trials per scale factor");
  qa->add_option("--n", qa_n, "clients");
  qa->add_option("--d", qa_d, "dimension");
  qa->add_option("--scale-param", scale_param,
                 "gaussian std / laplace scale of the raw gradients");
  qa->add_option("--seed", qa_seed, "master seed");
  qa->add_option("--out", qa_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out_dir);
    if (speedup->parsed())
      return cmd_speedup(config_path, n_csv, m_csv, seed, out_dir);
    if (qa->parsed())
      return cmd_measure_qa(dist, s_csv, compressor, trials, qa_n, qa_d,
                            scale_param, qa_seed, qa_out);
  } catch (const fedef::config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const fedef::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const fedef::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
