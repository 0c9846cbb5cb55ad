#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mobisec/collector.hpp"
#include "mobisec/report.hpp"
#include "mobisec/service.hpp"

using namespace mobisec;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::optional<fs::path>& out) {
  if (!out) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  if (out->has_parent_path()) fs::create_directories(out->parent_path());
  std::ofstream f(*out);
  if (!f) throw std::runtime_error("cannot write " + out->string());
  f << j.dump(2) << "\n";
}

ScenarioConfig scenario(const fs::path& path) {
  auto cfg = load_config(path);
  apply_env_overrides(cfg, process_env());
  cfg.validate();
  return cfg;
}

std::vector<Alarm> alarms_of(const std::vector<StreamRecord>& records) {
  std::vector<Alarm> out;
  for (const auto& r : records) {
    if (const auto* a = std::get_if<Alarm>(&r)) out.push_back(*a);
  }
  return out;
}

volatile std::sig_atomic_t g_interrupted = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile network signaling-security testbed"};
  app.require_subcommand(1);
  app.footer(
      "Environment overrides for scenario configs: MOBISEC_SEED, MOBISEC_DURATION_MS,\n"
      "MOBISEC_POPULATION, MOBISEC_LABELED, MOBISEC_SPEED.\n"
      "Exit codes: 0 success, 1 invalid input, 2 runtime failure.");

  // run
  fs::path run_config, run_out;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and write its run directory");
  run_cmd->add_option("--config", run_config, "Scenario JSON")->required();
  run_cmd->add_option("--out", run_out, "Run directory")->required();

  // replay
  fs::path replay_in;
  std::optional<fs::path> replay_params, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the detector over a recorded run");
  replay_cmd->add_option("--in", replay_in, "Run directory")->required();
  replay_cmd->add_option("--detector-params", replay_params, "JSON merged over the run's detector config");
  replay_cmd->add_option("--out", replay_out, "Write the alarm stream here (JSON lines) instead of stdout");

  // calibrate
  fs::path cal_in, cal_out;
  std::optional<fs::path> cal_params;
  auto* cal_cmd = app.add_subcommand("calibrate", "Baseline statistics from an attack-free run");
  cal_cmd->add_option("--in", cal_in, "Run directory")->required();
  cal_cmd->add_option("--out", cal_out, "Baseline JSON")->required();
  cal_cmd->add_option("--params", cal_params, "Calibration parameters JSON");

  // train
  std::vector<fs::path> train_in;
  fs::path train_out;
  std::optional<fs::path> train_params;
  auto* train_cmd = app.add_subcommand("train", "Train the window classifier on labeled runs");
  train_cmd->add_option("--in", train_in, "Run directories")->required()->expected(1, -1);
  train_cmd->add_option("--out", train_out, "Model JSON")->required();
  train_cmd->add_option("--params", train_params, "Training parameters JSON");

  // collector verbs
  fs::path store_dir;
  std::vector<fs::path> ingest_in;
  auto* ingest_cmd = app.add_subcommand("ingest", "Add honeypot trace files to a store");
  ingest_cmd->add_option("--store", store_dir, "Store directory")->required();
  ingest_cmd->add_option("--in", ingest_in, "Trace files (JSON lines)")->required()->expected(1, -1);

  fs::path providers;
  std::uint64_t enrich_timeout_ms = 1000;
  auto* enrich_cmd = app.add_subcommand("enrich", "Fill enrichment fields of stored traces");
  enrich_cmd->add_option("--store", store_dir, "Store directory")->required();
  enrich_cmd->add_option("--providers", providers, "Provider config JSON")->required();
  enrich_cmd->add_option("--timeout-ms", enrich_timeout_ms, "Per-provider timeout")->capture_default_str();

  double theta = 0.5;
  auto* cluster_cmd = app.add_subcommand("cluster", "Group stored traces into campaigns");
  cluster_cmd->add_option("--store", store_dir, "Store directory")->required();
  cluster_cmd->add_option("--theta", theta, "Similarity threshold in [0, 1]")->capture_default_str();

  fs::path corr_run;
  std::optional<fs::path> corr_out;
  std::optional<std::string> corr_epoch;
  CorrelateConfig corr_cfg;
  auto* corr_cmd = app.add_subcommand("correlate", "Attribute a run's alarms to trace clusters");
  corr_cmd->add_option("--store", store_dir, "Clustered store directory")->required();
  corr_cmd->add_option("--run", corr_run, "Run directory whose alarms are attributed")->required();
  corr_cmd->add_option("--sim-epoch", corr_epoch, "Wall-clock instant of t=0 (default: the run's)");
  corr_cmd->add_option("--window-ms", corr_cfg.window_ms, "Time-proximity window")->capture_default_str();
  corr_cmd->add_option("--min-score", corr_cfg.min_score, "Drop weaker matches")->capture_default_str();
  corr_cmd->add_option("--out", corr_out, "Report JSON (default stdout)");

  fs::path gen_run, gen_out;
  std::uint64_t gen_seed = 1;
  std::size_t gen_per_attack = 5, gen_noise = 20;
  auto* gen_cmd = app.add_subcommand("gen-traces", "Synthetic honeypot traces matching a labeled run");
  gen_cmd->add_option("--run", gen_run, "Labeled run directory")->required();
  gen_cmd->add_option("--out", gen_out, "Trace file (JSON lines)")->required();
  gen_cmd->add_option("--seed", gen_seed)->capture_default_str();
  gen_cmd->add_option("--per-attack", gen_per_attack)->capture_default_str();
  gen_cmd->add_option("--noise", gen_noise)->capture_default_str();

  // report
  std::vector<fs::path> report_in;
  fs::path report_out;
  auto* report_cmd = app.add_subcommand("report", "Detection summary over labeled runs");
  report_cmd->add_option("--in", report_in, "Run directories")->required()->expected(1, -1);
  report_cmd->add_option("--out", report_out, "Output directory")->required();

  // serve
  std::optional<fs::path> serve_config, serve_runs;
  std::string listen = "127.0.0.1:8080";
  auto* serve_cmd = app.add_subcommand("serve", "HTTP/WebSocket control and streaming service");
  serve_cmd->add_option("--config", serve_config, "Base scenario that POST /run bodies patch");
  serve_cmd->add_option("--listen", listen, "ADDR:PORT")->capture_default_str();
  serve_cmd->add_option("--runs", serve_runs, "Write finished runs under this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) {
      const auto out = run(scenario(run_config));
      const auto manifest = write_run(out, run_out);
      std::cout << json{{"out", run_out.string()},
                        {"config_hash", manifest.at("config_hash")},
                        {"streams", manifest.at("streams")}}
                       .dump(2)
                << "\n";
    } else if (*replay_cmd) {
      const auto recorded = load_run(replay_in);
      DetectorConfig detector = recorded.config.detector;
      if (replay_params) {
        json merged = detector;
        merged.merge_patch(read_json(*replay_params));
        try {
          detector = merged.get<DetectorConfig>();
        } catch (const json::exception& e) {
          throw ValidationError(std::string("detector params: ") + e.what());
        }
      }
      const auto records = replay(recorded, detector);
      std::ofstream file;
      if (replay_out) {
        file.open(*replay_out);
        if (!file) throw std::runtime_error("cannot write " + replay_out->string());
      }
      std::ostream& os = replay_out ? file : std::cout;
      for (const auto& r : records) os << record_to_json(r).dump() << "\n";
      std::cerr << json{{"records", records.size()},
                        {"alarms", alarms_of(records).size()},
                        {"matches_recorded", records == recorded.alarms}}
                       .dump()
                << "\n";
    } else if (*cal_cmd) {
      CalibrationParams params;
      if (cal_params) params = read_json(*cal_params).get<CalibrationParams>();
      const auto model = calibrate_run(load_run(cal_in), params);
      write_json(model, cal_out);
    } else if (*train_cmd) {
      ClassifierParams params;
      if (train_params) params = read_json(*train_params).get<ClassifierParams>();
      std::vector<LabeledWindow> data;
      for (const auto& dir : train_in) {
        const auto recorded = load_run(dir);
        if (!recorded.config.labeled) throw ValidationError(dir.string() + " is not labeled; rerun with labeled: true");
        const auto windows = replay_detailed(recorded, recorded.config.detector).long_windows;
        auto labeled = labeled_windows(windows, recorded.truth);
        data.insert(data.end(), labeled.begin(), labeled.end());
      }
      const auto model = train_classifier(data, params);
      write_json(model, train_out);
      std::cerr << json{{"windows", data.size()},
                        {"epochs", model.meta.epochs},
                        {"final_loss", model.meta.loss_curve.empty() ? 0.0 : model.meta.loss_curve.back()}}
                       .dump()
                << "\n";
    } else if (*ingest_cmd) {
      TraceStore store(store_dir);
      json results = json::array();
      for (const auto& f : ingest_in) {
        auto r = json(store.ingest_file(f));
        r["file"] = f.string();
        results.push_back(std::move(r));
      }
      std::cout << json{{"files", results}, {"stored", store.size()}}.dump(2) << "\n";
    } else if (*enrich_cmd) {
      TraceStore store(store_dir);
      const auto set = load_providers(providers);
      EnrichStats stats;
      std::size_t added = 0;
      for (const auto& r : store.records()) {
        const auto e = enrich(r, set, std::chrono::milliseconds(enrich_timeout_ms), &stats);
        added += store.add_enrichment(r.trace_id, e.enrichment);
      }
      std::cout << json{{"records", store.size()}, {"fields_added", added}, {"providers", stats}}.dump(2) << "\n";
    } else if (*cluster_cmd) {
      TraceStore store(store_dir);
      const auto c = cluster(store.records(), theta);
      store.set_clusters(c.assignment, theta);
      std::cout << json{{"records", c.assignment.size()}, {"clusters", c.founders.size()}, {"theta", theta}}.dump(2)
                << "\n";
    } else if (*corr_cmd) {
      TraceStore store(store_dir);
      const auto recorded = load_run(corr_run, false);
      corr_cfg.sim_epoch = corr_epoch ? *corr_epoch : recorded.config.sim_epoch;
      const auto alarms = alarms_of(recorded.alarms);
      const auto reports = correlate(alarms, store.records(), corr_cfg);
      write_json(json{{"version", 1}, {"reports", reports}}, corr_out);
    } else if (*gen_cmd) {
      const auto recorded = load_run(gen_run, false);
      if (!recorded.config.labeled) throw ValidationError("gen-traces needs a labeled run");
      const auto traces = generate_traces(recorded.truth, recorded.config.sim_epoch, recorded.config.duration_ms,
                                          gen_seed, gen_per_attack, gen_noise);
      if (gen_out.has_parent_path()) fs::create_directories(gen_out.parent_path());
      std::ofstream f(gen_out);
      if (!f) throw std::runtime_error("cannot write " + gen_out.string());
      for (const auto& t : traces) f << t.dump() << "\n";
      std::cout << json{{"traces", traces.size()}}.dump() << "\n";
    } else if (*report_cmd) {
      std::vector<RunReport> reports;
      for (const auto& dir : report_in) reports.push_back(report_run(load_run(dir, false)));
      const auto summary = summarize(reports);
      write_report(summary, report_out);
      std::cout << render_text(summary);
    } else if (*serve_cmd) {
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw ValidationError("--listen must be ADDR:PORT");
      unsigned long port = 0;
      try {
        port = std::stoul(listen.substr(colon + 1));
      } catch (const std::exception&) {
        throw ValidationError("bad port in --listen " + listen);
      }
      if (port > 65535) throw ValidationError("bad port in --listen " + listen);
      std::optional<ScenarioConfig> base;
      if (serve_config) base = scenario(*serve_config);
      ServiceOptions options;
      options.out_dir = serve_runs;
      ServiceCore core(options);
      HttpServer server(core, listen.substr(0, colon), static_cast<unsigned short>(port), base);
      server.start();
      std::cerr << "listening on " << listen.substr(0, colon) << ":" << server.port() << "\n";
      std::signal(SIGINT, [](int) { g_interrupted = 1; });
      std::signal(SIGTERM, [](int) { g_interrupted = 1; });
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      if (core.state() == RunState::RUNNING) core.stop();
      server.stop();
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
