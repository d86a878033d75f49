#include "fedef/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "fedef/errors.hpp"
#include "fedef/metrics.hpp"

namespace fedef {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class KeyReader {
 public:
  explicit KeyReader(std::string_view text) {
    std::string line;
    std::istringstream in{std::string(text)};
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw config_error("config line " + std::to_string(lineno) +
                           ": expected `key = value`, got '" + t + "'");
      }
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty()) {
        throw config_error("config line " + std::to_string(lineno) +
                           ": empty key");
      }
      if (!values_.emplace(key, value).second) {
        throw config_error("config: duplicate key '" + key + "'");
      }
    }
  }

  template <typename Fn>
  void take(const std::string& key, Fn&& parse) {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    try {
      parse(it->second);
    } catch (const config_error&) {
      throw;
    } catch (const std::exception&) {
      throw config_error("config key '" + key + "': bad value '" + it->second +
                         "'");
    }
    values_.erase(it);
  }

  void finish() const {
    if (!values_.empty()) {
      throw config_error("config: unknown key '" + values_.begin()->first +
                         "'");
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t parse_u64(const std::string& v) { return std::stoull(v); }
std::size_t parse_size(const std::string& v) {
  long long x = std::stoll(v);
  if (x < 0) throw config_error("negative count");
  return static_cast<std::size_t>(x);
}
bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw config_error("expected boolean, got '" + v + "'");
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  KeyReader r(text);

  r.take("problem.kind", [&](const std::string& v) {
    if (v != "quadratic" && v != "logistic" && v != "mlp") {
      throw config_error("config key 'problem.kind': unknown kind '" + v + "'");
    }
    cfg.problem_kind = v;
  });
  r.take("problem.n", [&](const std::string& v) { cfg.problem_n = parse_size(v); });
  r.take("problem.d", [&](const std::string& v) { cfg.problem_d = parse_size(v); });
  r.take("problem.spread",
         [&](const std::string& v) { cfg.problem_spread = std::stod(v); });
  r.take("problem.sigma",
         [&](const std::string& v) { cfg.problem_sigma = std::stod(v); });
  r.take("problem.seed",
         [&](const std::string& v) { cfg.problem_seed = parse_u64(v); });
  r.take("problem.samples",
         [&](const std::string& v) { cfg.problem_samples = parse_size(v); });
  r.take("problem.features",
         [&](const std::string& v) { cfg.problem_features = parse_size(v); });
  r.take("problem.classes",
         [&](const std::string& v) { cfg.problem_classes = parse_size(v); });
  r.take("problem.hidden",
         [&](const std::string& v) { cfg.problem_hidden = parse_size(v); });
  r.take("problem.l2", [&](const std::string& v) { cfg.problem_l2 = std::stod(v); });
  r.take("problem.data", [&](const std::string& v) { cfg.problem_data = v; });

  r.take("fl.m", [&](const std::string& v) { cfg.fl_m = parse_size(v); });
  r.take("fl.T", [&](const std::string& v) { cfg.fl_T = std::stoi(v); });
  r.take("fl.K", [&](const std::string& v) { cfg.fl_K = std::stoi(v); });
  r.take("fl.eta", [&](const std::string& v) { cfg.fl_eta = std::stod(v); });
  r.take("fl.eta_l", [&](const std::string& v) { cfg.fl_eta_l = std::stod(v); });
  r.take("fl.beta1", [&](const std::string& v) { cfg.fl_beta1 = std::stod(v); });
  r.take("fl.beta2", [&](const std::string& v) { cfg.fl_beta2 = std::stod(v); });
  r.take("fl.epsilon",
         [&](const std::string& v) { cfg.fl_epsilon = std::stod(v); });
  r.take("fl.batch", [&](const std::string& v) {
    if (v != "full") {
      std::size_t b = parse_size(v);
      if (b == 0) throw config_error("config key 'fl.batch': must be 'full' or >= 1");
    }
    cfg.fl_batch = v;
  });
  r.take("fl.optimizer", [&](const std::string& v) {
    if (v != "sgd" && v != "ams") {
      throw config_error("config key 'fl.optimizer': expected sgd or ams, got '" +
                         v + "'");
    }
    cfg.fl_optimizer = v;
  });

  r.take("compression.upload",
         [&](const std::string& v) { cfg.comp_upload = v; });
  r.take("compression.download",
         [&](const std::string& v) { cfg.comp_download = v; });
  r.take("compression.ef",
         [&](const std::string& v) { cfg.comp_ef = parse_bool(v); });
  r.take("compression.restart_S",
         [&](const std::string& v) { cfg.comp_restart_S = std::stoi(v); });
  r.take("compression.restart_start",
         [&](const std::string& v) { cfg.comp_restart_start = std::stoi(v); });

  r.take("output.dir", [&](const std::string& v) { cfg.out_dir = v; });
  r.take("output.metrics_every",
         [&](const std::string& v) { cfg.metrics_every = std::stoi(v); });
  r.take("seed", [&](const std::string& v) { cfg.seed = parse_u64(v); });

  r.finish();
  to_run_config(cfg);  // reject invalid combinations up front
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw io_error("cannot open config: " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  };
  kv("problem.kind", c.problem_kind);
  kv("problem.n", std::to_string(c.problem_n));
  kv("problem.d", std::to_string(c.problem_d));
  kv("problem.spread", format_float(c.problem_spread));
  kv("problem.sigma", format_float(c.problem_sigma));
  kv("problem.seed", std::to_string(c.problem_seed));
  kv("problem.samples", std::to_string(c.problem_samples));
  kv("problem.features", std::to_string(c.problem_features));
  kv("problem.classes", std::to_string(c.problem_classes));
  kv("problem.hidden", std::to_string(c.problem_hidden));
  kv("problem.l2", format_float(c.problem_l2));
  if (!c.problem_data.empty()) kv("problem.data", c.problem_data);
  kv("fl.m", std::to_string(c.fl_m));
  kv("fl.T", std::to_string(c.fl_T));
  kv("fl.K", std::to_string(c.fl_K));
  kv("fl.eta", format_float(c.fl_eta));
  kv("fl.eta_l", format_float(c.fl_eta_l));
  kv("fl.beta1", format_float(c.fl_beta1));
  kv("fl.beta2", format_float(c.fl_beta2));
  kv("fl.epsilon", format_float(c.fl_epsilon));
  if (!c.fl_batch.empty()) kv("fl.batch", c.fl_batch);
  kv("fl.optimizer", c.fl_optimizer);
  kv("compression.upload", c.comp_upload);
  kv("compression.download", c.comp_download);
  kv("compression.ef", c.comp_ef ? "true" : "false");
  kv("compression.restart_S", std::to_string(c.comp_restart_S));
  kv("compression.restart_start", std::to_string(c.comp_restart_start));
  kv("output.dir", c.out_dir);
  kv("output.metrics_every", std::to_string(c.metrics_every));
  kv("seed", std::to_string(c.seed));
  return out;
}

RunConfig to_run_config(const ExperimentConfig& c) {
  RunConfig rc;
  rc.n = c.problem_n;
  rc.m = c.fl_m;
  rc.rounds = c.fl_T;
  rc.hp.eta = c.fl_eta;
  rc.hp.eta_l = c.fl_eta_l;
  rc.hp.local_steps = c.fl_K;
  rc.hp.beta1 = c.fl_beta1;
  rc.hp.beta2 = c.fl_beta2;
  rc.hp.epsilon = c.fl_epsilon;
  std::string batch = c.fl_batch;
  if (batch.empty()) {
    batch = c.problem_kind == "quadratic" ? "full" : "32";
  }
  rc.hp.batch_size =
      batch == "full" ? 0 : static_cast<std::size_t>(std::stoll(batch));
  rc.optimizer =
      c.fl_optimizer == "ams" ? GlobalOptimizer::Ams : GlobalOptimizer::Sgd;
  rc.upload = parse_compressor_spec(c.comp_upload);
  if (c.comp_download != "none" && !c.comp_download.empty()) {
    rc.download = parse_compressor_spec(c.comp_download);
  }
  rc.ef_enabled = c.comp_ef;
  if (c.comp_restart_S > 0) {
    rc.restart_threshold = c.comp_restart_S;
    rc.restart_start_round = c.comp_restart_start;
  }
  rc.master_seed = c.seed;
  rc.metrics_every = c.metrics_every;
  rc.validate();
  return rc;
}

Problem build_problem(const ExperimentConfig& c) {
  RngStream rng = derive_stream(c.problem_seed, stream_tag::kProblem);
  if (c.problem_kind == "quadratic") {
    return Problem::make_quadratic(c.problem_n, c.problem_d, c.problem_spread,
                                   c.problem_sigma, rng);
  }
  Dataset data = c.problem_data.empty()
                     ? make_blobs(c.problem_samples, c.problem_features,
                                  c.problem_classes, 2.0, 1.0, rng)
                     : load_csv_dataset(c.problem_data);
  ClientPartition part = shard_partition(data.labels, c.problem_n, rng);
  if (c.problem_kind == "logistic") {
    return Problem::logistic(std::move(data), std::move(part), c.problem_l2);
  }
  return Problem::mlp(std::move(data), std::move(part), {c.problem_hidden},
                      c.problem_l2);
}

}  // namespace fedef
