#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "igroup/apps/anomaly.hpp"
#include "igroup/apps/csv.hpp"
#include "igroup/apps/population_csv.hpp"
#include "igroup/apps/var.hpp"
#include "igroup/bandwidth.hpp"
#include "igroup/config.hpp"
#include "igroup/simulation.hpp"
#include "igroup/weights.hpp"

#ifndef IGROUP_VERSION
#define IGROUP_VERSION "unknown"
#endif

namespace {

using igroup::ErrorKind;
using igroup::fail;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Collects the files of one run; manifest.json goes last.
class RunOutput {
 public:
  explicit RunOutput(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::Configuration, "cannot create output directory '" + dir_ + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = fs::path(dir_) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) fail(ErrorKind::Configuration, "cannot write '" + path.string() + "'");
    files_.push_back(name);
  }

  void write_csv(const std::string& name, const std::vector<std::string>& lines) {
    std::string text;
    for (const auto& l : lines) text += l + '\n';
    write(name, text);
  }

  void finish(const std::string& subcommand, const json& config, std::uint64_t seed, unsigned threads,
              std::chrono::steady_clock::time_point start) {
    json m;
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["seed"] = seed;
    m["threads"] = threads;
    m["version"] = IGROUP_VERSION;
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m["files"] = files_;
    m["files"].push_back("manifest.json");
    std::ofstream out(fs::path(dir_) / "manifest.json", std::ios::binary);
    out << m.dump(2) << '\n';
    if (!out) fail(ErrorKind::Configuration, "cannot write manifest.json");
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

std::string meta_json(const std::string& what, const json& config) {
  json m;
  m["run"] = what;
  m["config"] = config;
  m["version"] = IGROUP_VERSION;
  return m.dump(2) + '\n';
}

std::vector<double> parse_grid(const std::string& text) {
  auto g = igroup::KeyValueConfig::to_list("bandwidth-grid", text);
  igroup::validate_grid(g);
  return g;
}

// ---------------------------------------------------------------------------
// simulate

json echo(const igroup::SimCase1Config& c) {
  return {{"K", c.K},         {"sigmas", c.sigmas}, {"tau", c.tau}, {"replications", c.replications},
          {"grid", c.grid},   {"grid_points", c.grid_points}, {"seed", c.seed}};
}

json echo(const igroup::SimCase2Config& c) {
  json j{{"K", c.K},
         {"length", c.length},
         {"sigma", c.sigma},
         {"replications", c.replications},
         {"beta_a", c.beta_a},
         {"beta_b", c.beta_b}};
  j["point_mass"] = c.point_mass ? json(*c.point_mass) : json(nullptr);
  j.update(json{{"grid_points", c.grid_points}, {"draws", c.draws}, {"oracle_grid", c.oracle_grid}, {"seed", c.seed}});
  return j;
}

json echo(const igroup::SimCase3Config& c) {
  return {{"row", c.row},
          {"K", c.K},
          {"n", c.n},
          {"sigma_x", c.sigma_x},
          {"tau2", c.tau2()},
          {"sigma_z", c.sigma_z},
          {"replications", c.replications},
          {"z_grid_points", c.z_grid_points},
          {"theta_grid_points", c.theta_grid_points},
          {"combined_grid_points", c.combined_grid_points},
          {"draws", c.draws},
          {"oracle", c.oracle},
          {"seed", c.seed}};
}

void write_report(RunOutput& out, const igroup::SimulationReport& r) {
  using igroup::csv::Row;
  std::vector<std::string> report{"config,method,scope,selected_bandwidth,replications,bias,bias_se,variance,mse,mse_se"};
  for (const auto& c : r.summary) {
    report.push_back((Row() << c.config << c.method << c.scope << c.selected_bandwidth << c.stats.replications()
                            << c.stats.bias() << c.stats.bias_se() << c.stats.variance() << c.stats.mse()
                            << c.stats.mse_se())
                         .str());
  }
  out.write_csv("report.csv", report);

  std::vector<std::string> curves{"config,method,scope,bandwidth,bias,variance,mse,mse_se"};
  for (const auto& c : r.curves) {
    curves.push_back((Row() << c.config << c.method << c.scope << c.bandwidth << c.stats.bias() << c.stats.variance()
                            << c.stats.mse() << c.stats.mse_se())
                         .str());
  }
  out.write_csv("curves.csv", curves);

  std::vector<std::string> risk{"config,method,count,r_np,r_target,cross,cross_se,total"};
  for (const auto& c : r.risk) {
    const auto& v = c.value;
    risk.push_back(
        (Row() << c.config << c.method << v.count << v.r_np << v.r_target << v.cross << v.cross_se << v.total).str());
  }
  out.write_csv("risk.csv", risk);
}

struct SimulateArgs {
  std::string which;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> row;
  std::optional<std::size_t> replications;
  std::string out;
};

template <typename Config, typename Run>
void simulate_case(const SimulateArgs& a, unsigned threads, Run&& run) {
  const auto start = std::chrono::steady_clock::now();
  auto kv = a.config_path.empty() ? igroup::KeyValueConfig{} : igroup::KeyValueConfig::load(a.config_path);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  if (a.replications) kv.set("replications", std::to_string(*a.replications));
  if (a.row) {
    if (a.which != "case3") fail(ErrorKind::Configuration, "--row applies to case3 only");
    kv.set("row", std::to_string(*a.row));
  }
  Config cfg;
  apply_config(cfg, kv);
  cfg.threads = threads;
  cfg.validate();
  const auto report = run(cfg);
  RunOutput out(a.out);
  write_report(out, report);
  out.write("meta.json", meta_json("simulate " + a.which, echo(cfg)));
  out.finish("simulate " + a.which, echo(cfg), cfg.seed, threads, start);
}

void simulate(const SimulateArgs& a, unsigned threads) {
  if (a.which == "case1") {
    simulate_case<igroup::SimCase1Config>(a, threads, [](const auto& c) { return igroup::run_case1(c); });
  } else if (a.which == "case2") {
    simulate_case<igroup::SimCase2Config>(a, threads, [](const auto& c) { return igroup::run_case2(c); });
  } else {
    simulate_case<igroup::SimCase3Config>(a, threads, [](const auto& c) { return igroup::run_case3(c); });
  }
}

// ---------------------------------------------------------------------------
// var

struct VarArgs {
  std::string returns;
  std::string factors;
  std::string synthetic;
  std::uint64_t seed = 1;
  std::string method = "all";
  double alpha = 0.01;
  std::size_t window = 100;
  std::string grid;
  std::optional<double> bandwidth;
  std::string kernel = "gaussian";
  std::string out;
};

void var(const VarArgs& a, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  igroup::ReturnPanel panel;
  json source;
  if (!a.synthetic.empty()) {
    if (!a.returns.empty() || !a.factors.empty()) {
      fail(ErrorKind::Configuration, "--synthetic excludes --returns/--factors");
    }
    if (a.synthetic == "heterogeneous") {
      panel = igroup::synthetic_panel(igroup::SyntheticPanelSpec::heterogeneous(a.seed));
    } else if (a.synthetic == "homogeneous") {
      panel = igroup::synthetic_panel(igroup::SyntheticPanelSpec::homogeneous(200, 350, a.seed));
    } else {
      fail(ErrorKind::Configuration, "unknown synthetic panel '" + a.synthetic + "' (heterogeneous|homogeneous)");
    }
    source = {{"synthetic", a.synthetic}, {"seed", a.seed}};
  } else {
    if (a.returns.empty() || a.factors.empty()) {
      fail(ErrorKind::Configuration, "var needs --returns and --factors, or --synthetic");
    }
    panel = igroup::ingest_returns_csv(a.returns, a.factors);
    source = {{"returns", a.returns}, {"factors", a.factors}};
  }

  igroup::VarConfig cfg;
  cfg.alpha = a.alpha;
  cfg.window = a.window;
  cfg.kernel = igroup::parse_kernel(a.kernel);
  cfg.threads = threads;
  cfg.grid = a.grid.empty() ? igroup::default_var_grid() : parse_grid(a.grid);
  if (a.bandwidth) cfg.grid = {*a.bandwidth};

  std::vector<igroup::VarMethod> methods;
  if (a.method == "all") {
    methods = {igroup::VarMethod::Individual, igroup::VarMethod::Market, igroup::VarMethod::IGroup};
  } else {
    methods = {igroup::parse_var_method(a.method)};
  }

  using igroup::csv::Row;
  std::vector<igroup::VarResult> results;
  std::vector<std::string> sweep{"bandwidth,rmse"};
  for (auto m : methods) {
    if (m != igroup::VarMethod::IGroup) {
      results.push_back(igroup::var_backtest(panel, cfg, m));
      continue;
    }
    auto all = igroup::var_bandwidth_sweep(panel, cfg);
    std::size_t best = 0;
    for (std::size_t g = 0; g < all.size(); ++g) {
      sweep.push_back((Row() << all[g].bandwidth << all[g].rmse).str());
      if (all[g].rmse < all[best].rmse) best = g;
    }
    results.push_back(std::move(all[best]));
  }

  RunOutput out(a.out);
  std::vector<std::string> summary{"method,bandwidth,rmse,mean_exceedance,evaluation_days,stocks"};
  std::vector<std::string> exceed{"method,ticker,exceedance"};
  std::vector<std::string> surface{"method,date,ticker,return,var,exceeded"};
  for (const auto& r : results) {
    const auto name = std::string(igroup::to_string(r.method));
    double mean = 0.0;
    for (double e : r.exceedance) mean += e;
    mean /= static_cast<double>(r.exceedance.size());
    summary.push_back((Row() << name << r.bandwidth << r.rmse << mean << static_cast<std::size_t>(r.var.rows())
                             << panel.stocks())
                          .str());
    for (std::size_t k = 0; k < panel.stocks(); ++k) {
      exceed.push_back((Row() << name << panel.tickers[k] << r.exceedance[k]).str());
    }
    for (Eigen::Index i = 0; i < r.var.rows(); ++i) {
      const auto t = r.first_day + static_cast<std::size_t>(i);
      for (std::size_t k = 0; k < panel.stocks(); ++k) {
        const double ret = panel.returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
        const double v = r.var(i, static_cast<Eigen::Index>(k));
        surface.push_back((Row() << name << panel.dates[t] << panel.tickers[k] << ret << v << (ret <= v ? 1 : 0)).str());
      }
    }
  }
  out.write_csv("results.csv", summary);
  if (sweep.size() > 1) out.write_csv("sweep.csv", sweep);
  out.write_csv("exceedance.csv", exceed);
  out.write_csv("var.csv", surface);

  json config{{"source", source},
              {"method", a.method},
              {"alpha", cfg.alpha},
              {"window", cfg.window},
              {"bandwidth_grid", cfg.grid},
              {"kernel", a.kernel},
              {"dropped_rows", panel.dropped_rows},
              {"dropped_dates", panel.dropped_dates}};
  out.write("meta.json", meta_json("var", config));
  out.finish("var", config, a.seed, threads, start);
}

// ---------------------------------------------------------------------------
// anomaly

struct AnomalyArgs {
  std::string voyages;
  std::string durations;
  bool synthetic = false;
  std::string shape = "time";
  std::uint64_t seed = 1;
  std::size_t k = 40;
  double threshold = 0.95;
  std::size_t max_points = 500;
  std::optional<std::size_t> dtw_window;
  bool kernel_weighted = false;
  std::string out;
};

void anomaly(const AnomalyArgs& a, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  igroup::VoyageSet set;
  std::vector<bool> planted;
  json source;
  if (a.synthetic) {
    if (!a.voyages.empty()) fail(ErrorKind::Configuration, "--synthetic excludes --voyages");
    igroup::SyntheticPortSpec spec;
    spec.seed = a.seed;
    spec.shape = igroup::parse_planted_shape(a.shape);
    auto port = igroup::synthetic_port(spec);
    set = std::move(port.set);
    planted.assign(set.size(), false);
    for (auto i : port.planted) planted[i] = true;
    source = {{"synthetic", true}, {"planted_shape", a.shape}, {"seed", a.seed}};
  } else {
    if (a.voyages.empty()) fail(ErrorKind::Configuration, "anomaly needs --voyages or --synthetic");
    std::optional<std::string> durations;
    if (!a.durations.empty()) durations = a.durations;
    set = igroup::ingest_voyages_csv(a.voyages, durations);
    source = {{"voyages", a.voyages}, {"durations", a.durations}};
  }

  igroup::AnomalyOptions opts;
  opts.k_neighbors = a.k;
  opts.threshold = a.threshold;
  opts.max_points = a.max_points;
  opts.dtw.window = a.dtw_window;
  opts.kernel_weighted = a.kernel_weighted;
  opts.threads = threads;
  const auto report = igroup::anomaly_scores(set, opts);

  using igroup::csv::Row;
  std::vector<std::string> scores{planted.empty() ? "voyage_id,sailing_time,mu,sigma,risk,flagged,group"
                                                  : "voyage_id,sailing_time,mu,sigma,risk,flagged,planted,group"};
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    std::string group;
    for (const auto& g : e.group) group += (group.empty() ? "" : ";") + g;
    Row row;
    row << e.id << e.sailing_time << e.mu << e.sigma << e.risk << (e.flagged ? 1 : 0);
    if (!planted.empty()) row << (planted[i] ? 1 : 0);
    row << group;
    scores.push_back(row.str());
  }
  RunOutput out(a.out);
  out.write_csv("scores.csv", scores);
  json config{{"source", source},
              {"k", a.k},
              {"threshold", a.threshold},
              {"max_points", a.max_points},
              {"dtw_window", a.dtw_window ? json(*a.dtw_window) : json(nullptr)},
              {"kernel_weighted", a.kernel_weighted},
              {"voyages", set.size()},
              {"dropped_rows", set.dropped_rows},
              {"flagged", report.flagged()}};
  out.write("meta.json", meta_json("anomaly", config));
  out.finish("anomaly", config, a.seed, threads, start);
}

// ---------------------------------------------------------------------------
// bandwidth / weights-dump

struct PopulationArgs {
  std::string population;
  std::string scheme = "z";
  std::string kernel = "gaussian";
  std::uint64_t seed = 1;
  std::size_t draws = 1;
};

struct Prepared {
  igroup::Population pop;
  std::optional<igroup::BootstrapPairs> pairs;
  igroup::WeightSetup setup;
  const igroup::BootstrapPairs* pairs_ptr() const { return pairs ? &*pairs : nullptr; }
};

Prepared prepare(const PopulationArgs& a) {
  Prepared p{igroup::load_population_csv(a.population), std::nullopt, {}};
  p.setup.scheme = igroup::parse_scheme(a.scheme);
  const auto k = igroup::parse_kernel(a.kernel);
  p.setup.kernels = {k, k, k};
  if (igroup::uses_theta(p.setup.scheme)) p.pairs = igroup::bootstrap_mean_pairs(p.pop, a.seed, 0, a.draws);
  p.setup.bandwidths = igroup::default_bandwidths(p.pop, p.pairs_ptr(), p.setup.scheme);
  return p;
}

json bandwidths_json(const igroup::WeightBandwidths& b) {
  auto one = [](const std::optional<igroup::Bandwidth>& v) { return v ? json(v->value()) : json(nullptr); };
  return {{"b1", one(b.b1)}, {"b2", one(b.b2)}, {"b3", one(b.b3)}};
}

struct BandwidthArgs {
  PopulationArgs pop;
  std::string grid;
  std::size_t grid_points = 20;
  std::string axis;
  std::string scope = "global";
  std::string center;
  std::optional<double> epsilon;
  std::string out;
};

void bandwidth(const BandwidthArgs& a, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  auto p = prepare(a.pop);
  igroup::CvConfig cfg;
  cfg.setup = p.setup;
  cfg.threads = threads;
  const std::string axis = a.axis.empty() ? (p.setup.scheme == igroup::WeightScheme::ThetaOnly ? "theta" : "b1") : a.axis;
  if (axis == "b1") {
    if (!igroup::uses_z(p.setup.scheme)) fail(ErrorKind::Configuration, "axis b1 needs a scheme with z");
    cfg.axis = igroup::CvAxis::B1;
  } else if (axis == "theta") {
    if (!igroup::uses_theta(p.setup.scheme)) fail(ErrorKind::Configuration, "axis theta needs a scheme with theta");
    cfg.axis = igroup::CvAxis::Theta;
  } else {
    fail(ErrorKind::Configuration, "unknown axis '" + axis + "' (b1|theta)");
  }
  const double rot = cfg.axis == igroup::CvAxis::B1 ? p.setup.bandwidths.b1->value() : p.setup.bandwidths.b2->value();
  cfg.grid = a.grid.empty() ? igroup::log_grid(rot, a.grid_points) : parse_grid(a.grid);
  if (a.scope == "global") {
    cfg.omega = igroup::Omega0::global();
  } else if (a.scope == "local") {
    if (a.center.empty()) fail(ErrorKind::Configuration, "--cv-scope local needs --center");
    cfg.omega = igroup::Omega0::local(a.center, a.epsilon);
  } else {
    fail(ErrorKind::Configuration, "unknown cv scope '" + a.scope + "' (global|local)");
  }
  const auto rep = igroup::select_bandwidth(p.pop, p.pairs_ptr(), cfg);

  using igroup::csv::Row;
  std::vector<std::string> cv{"bandwidth,cv_error,selected"};
  for (std::size_t i = 0; i < rep.grid.size(); ++i) {
    cv.push_back((Row() << rep.grid[i] << rep.errors[i] << (i == rep.selected_index ? 1 : 0)).str());
  }
  RunOutput out(a.out);
  out.write_csv("cv.csv", cv);
  json config{{"population", a.pop.population},
              {"scheme", a.pop.scheme},
              {"kernel", a.pop.kernel},
              {"axis", axis},
              {"cv_scope", a.scope},
              {"center", a.center},
              {"epsilon", a.epsilon ? json(*a.epsilon) : json(nullptr)},
              {"grid", cfg.grid},
              {"rule_of_thumb", bandwidths_json(p.setup.bandwidths)},
              {"draws", a.pop.draws},
              {"seed", a.pop.seed},
              {"selected", rep.selected},
              {"omega0_size", rep.omega0_size}};
  out.write("meta.json", meta_json("bandwidth", config));
  out.finish("bandwidth", config, a.pop.seed, threads, start);
}

struct WeightsArgs {
  PopulationArgs pop;
  std::string target;
  std::optional<double> b1, b2, b3;
  std::string out;
};

void weights_dump(const WeightsArgs& a, unsigned threads) {
  const auto start = std::chrono::steady_clock::now();
  auto p = prepare(a.pop);
  auto& bw = p.setup.bandwidths;
  if (a.b1) bw.b1 = igroup::Bandwidth(*a.b1);
  if (a.b2) bw.b2 = igroup::Bandwidth(*a.b2);
  if (a.b3) bw.b3 = igroup::Bandwidth(*a.b3);
  const std::size_t target = p.pop.index_of(a.target);
  const std::size_t targets[] = {target};
  const auto factors = igroup::weight_factors(p.pop, p.pairs_ptr(), p.setup, targets, threads);
  const auto w = igroup::weight_matrix(p.pop, p.pairs_ptr(), p.setup, targets, threads);
  if (!(w.sum() > 0.0)) fail(ErrorKind::EmptyNeighborhood, "all weights vanish for target '" + a.target + "'");

  std::vector<std::size_t> order(p.pop.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return w(static_cast<Eigen::Index>(x), 0) > w(static_cast<Eigen::Index>(y), 0);
  });
  using igroup::csv::Row;
  std::vector<std::string> rows{"id,w1,w2,product"};
  for (auto k : order) {
    const auto i = static_cast<Eigen::Index>(k);
    rows.push_back((Row() << p.pop[k].id << factors.w1(i, 0) << factors.w2(i, 0) << w(i, 0)).str());
  }
  RunOutput out(a.out);
  out.write_csv("weights.csv", rows);
  json config{{"population", a.pop.population},
              {"target", a.target},
              {"scheme", a.pop.scheme},
              {"kernel", a.pop.kernel},
              {"bandwidths", bandwidths_json(bw)},
              {"draws", a.pop.draws},
              {"seed", a.pop.seed}};
  out.write("meta.json", meta_json("weights-dump", config));
  out.finish("weights-dump", config, a.pop.seed, threads, start);
}

void report_error(ErrorKind kind, const std::string& message) {
  json e{{"error", igroup::to_string(kind)}, {"exit", igroup::exit_code(kind)}, {"message", message}};
  std::cerr << e.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Individualized group learning: simulations, VaR backtests and trajectory anomaly scores", "igroup"};
  app.set_version_flag("--version", std::string("igroup ") + IGROUP_VERSION);
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads (0 = one per core); never changes outputs")
      ->capture_default_str();

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a simulation study (case1|case2|case3)");
  simulate_cmd->add_option("case", sim.which, "Study to run")->required()->check(CLI::IsMember({"case1", "case2", "case3"}));
  simulate_cmd->add_option("--config", sim.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  simulate_cmd->add_option("--seed", sim.seed, "Master seed");
  simulate_cmd->add_option("--row", sim.row, "case3: reference table row 1-12");
  simulate_cmd->add_option("--replications", sim.replications, "Override the replication count");
  simulate_cmd->add_option("--out", sim.out, "Output directory")->required();

  VarArgs va;
  auto* var_cmd = app.add_subcommand("var", "Backtest Value-at-Risk on a return panel");
  var_cmd->add_option("--returns", va.returns, "Returns CSV: date,ticker,return");
  var_cmd->add_option("--factors", va.factors, "Factors CSV: date,mkt_rf,smb,hml,rf");
  var_cmd->add_option("--synthetic", va.synthetic, "Use a generated panel: heterogeneous|homogeneous");
  var_cmd->add_option("--seed", va.seed, "Seed for --synthetic")->capture_default_str();
  var_cmd->add_option("--method", va.method, "individual|market|igroup|all")->capture_default_str();
  var_cmd->add_option("--alpha", va.alpha, "Tail probability")->capture_default_str();
  var_cmd->add_option("--window", va.window, "Trailing window S in days")->capture_default_str();
  var_cmd->add_option("--bandwidth-grid", va.grid, "Comma-separated bandwidths for igroup");
  var_cmd->add_option("--bandwidth", va.bandwidth, "Single igroup bandwidth");
  var_cmd->add_option("--kernel", va.kernel, "gaussian|epanechnikov|boxcar")->capture_default_str();
  var_cmd->add_option("--out", va.out, "Output directory")->required();

  AnomalyArgs an;
  auto* anomaly_cmd = app.add_subcommand("anomaly", "Score voyage sailing times against DTW neighbor groups");
  anomaly_cmd->add_option("--voyages", an.voyages, "Voyages CSV: voyage_id,seq,lat,lon[,sailing_time_hours]");
  anomaly_cmd->add_option("--durations", an.durations, "Sidecar CSV: voyage_id,hours");
  anomaly_cmd->add_flag("--synthetic", an.synthetic, "Use the generated port with planted anomalies");
  anomaly_cmd->add_option("--planted-shape", an.shape, "time|detour|anchor")->capture_default_str();
  anomaly_cmd->add_option("--seed", an.seed, "Seed for --synthetic")->capture_default_str();
  anomaly_cmd->add_option("--k", an.k, "Neighbors per group")->capture_default_str();
  anomaly_cmd->add_option("--threshold", an.threshold, "Flag when risk exceeds this")->capture_default_str();
  anomaly_cmd->add_option("--max-points", an.max_points, "Subsample trajectories to at most this many points")
      ->capture_default_str();
  anomaly_cmd->add_option("--dtw-window", an.dtw_window, "Sakoe-Chiba radius");
  anomaly_cmd->add_flag("--kernel-weighted", an.kernel_weighted, "Gaussian weights over DTW distance");
  anomaly_cmd->add_option("--out", an.out, "Output directory")->required();

  auto add_population = [](CLI::App* cmd, PopulationArgs& p) {
    cmd->add_option("--population", p.population, "Population CSV: id[,theta_hat][,z|z1..][,x1..]")->required();
    cmd->add_option("--scheme", p.scheme, "z|theta|combined")->capture_default_str();
    cmd->add_option("--kernel", p.kernel, "gaussian|epanechnikov|boxcar")->capture_default_str();
    cmd->add_option("--seed", p.seed, "Bootstrap seed")->capture_default_str();
    cmd->add_option("--draws", p.draws, "Bootstrap draws per individual")->capture_default_str();
  };

  BandwidthArgs bw;
  auto* bandwidth_cmd = app.add_subcommand("bandwidth", "Leave-one-out cross-validation over a bandwidth grid");
  add_population(bandwidth_cmd, bw.pop);
  bandwidth_cmd->add_option("--bandwidth-grid", bw.grid, "Comma-separated grid (default: log grid around the rule of thumb)");
  bandwidth_cmd->add_option("--grid-points", bw.grid_points, "Points of the default grid")->capture_default_str();
  bandwidth_cmd->add_option("--axis", bw.axis, "b1|theta (default from the scheme)");
  bandwidth_cmd->add_option("--cv-scope", bw.scope, "global|local")->capture_default_str();
  bandwidth_cmd->add_option("--center", bw.center, "Center id for --cv-scope local");
  bandwidth_cmd->add_option("--epsilon", bw.epsilon, "z radius for --cv-scope local");
  bandwidth_cmd->add_option("--out", bw.out, "Output directory")->required();

  WeightsArgs wd;
  auto* weights_cmd = app.add_subcommand("weights-dump", "Write w1, w2 and their product for one target");
  add_population(weights_cmd, wd.pop);
  weights_cmd->add_option("--target", wd.target, "Target id")->required();
  weights_cmd->add_option("--b1", wd.b1, "z bandwidth (default: rule of thumb)");
  weights_cmd->add_option("--b2", wd.b2, "First-draw theta bandwidth");
  weights_cmd->add_option("--b3", wd.b3, "Second-draw theta bandwidth");
  weights_cmd->add_option("--out", wd.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << app.help();
    report_error(ErrorKind::Configuration, e.what());
    return 1;
  }

  try {
    if (*simulate_cmd) simulate(sim, threads);
    if (*var_cmd) var(va, threads);
    if (*anomaly_cmd) anomaly(an, threads);
    if (*bandwidth_cmd) bandwidth(bw, threads);
    if (*weights_cmd) weights_dump(wd, threads);
  } catch (const igroup::Error& e) {
    report_error(e.kind(), e.what());
    return igroup::exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error(ErrorKind::InvalidInput, e.what());
    return 1;
  }
  return 0;
}
