// SPDX-License-Identifier: Apache-2.0
//
// flapnet: synth | train | eval | infer | bench
//
// Exit codes: 0 ok, 2 usage or configuration, 3 data, 4 numeric failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flapnet/checkpoint.hpp"
#include "flapnet/config.hpp"
#include "flapnet/data.hpp"
#include "flapnet/errors.hpp"
#include "flapnet/eval.hpp"
#include "flapnet/pipeline.hpp"
#include "flapnet/synth.hpp"

namespace fs = std::filesystem;
using namespace flapnet;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Failure {
  int code;
  std::string message;
};

// Runs one pipeline stage, tagging any library error with the command and stage.
template <typename F>
auto stage(const std::string& cmd, const char* name, F&& f) -> decltype(f()) {
  auto fail = [&](int code, const std::exception& e) {
    return Failure{code, "flapnet " + cmd + " [" + name + "]: " + e.what()};
  };
  try {
    return f();
  } catch (const ConfigError& e) {
    throw fail(kExitUsage, e);
  } catch (const NumericError& e) {
    throw fail(kExitNumeric, e);
  } catch (const DataError& e) {
    throw fail(kExitData, e);
  } catch (const DimensionError& e) {
    throw fail(kExitData, e);
  } catch (const GeometryError& e) {
    throw fail(kExitData, e);
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --config FILE, --set key=value (repeatable) and one --<key> option per RunConfig key.
struct ConfigOptions {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> keyed;

  void attach(CLI::App* sub) {
    sub->add_option("--config", file, "configuration file (JSON object or key=value lines)");
    sub->add_option("--set", sets, "override, key=value (repeatable)");
    auto* group = sub->add_option_group("config keys", "individual configuration overrides");
    for (const auto& k : RunConfig::keys()) group->add_option("--" + k, keyed[k]);
  }

  RunConfig resolve(CLI::App* sub) const {
    RunConfig c;
    if (!file.empty()) c.load_file(file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.set_text(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : keyed) {
      if (sub->count("--" + k) > 0) c.set_text(k, v);
    }
    return c;
  }
};

Dataset load_dataset(const std::string& dir) {
  if (dir.empty()) throw ConfigError("no dataset path given (use --data or --data_dir)");
  if (!fs::is_directory(dir)) throw ConfigError("dataset path '" + dir + "' is not a directory");
  return load_events(dir);
}

fs::path output_dir(const std::string& dir) {
  const fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory " + p.string() + ": " + ec.message());
  return p;
}

// Rows of comma-separated forces; a leading non-numeric row is a header.
Tensor read_window(const fs::path& path, std::size_t channels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open window file " + path.string());
  std::vector<double> values;
  std::size_t rows = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows == 0 && values.empty()) continue;
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (row.size() != channels) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(channels) +
                      " force channels, got " + std::to_string(row.size()));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  Tensor t({rows, channels});
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

void check_compatible(const Checkpoint& ck, const Dataset& data) {
  if (ck.input_channels != data.force_dim()) {
    throw DataError("checkpoint expects " + std::to_string(ck.input_channels) + " force channels, dataset has " +
                    std::to_string(data.force_dim()));
  }
  if (std::abs(ck.sample_rate - data.sample_rate) > 1e-9 * ck.sample_rate) {
    throw DataError("checkpoint was trained at " + fmt(ck.sample_rate) + " Hz, dataset is sampled at " +
                    fmt(data.sample_rate) + " Hz");
  }
}

std::vector<Event> pick_events(const Dataset& data, const RunConfig& cfg, const std::string& which) {
  if (which == "all") return data.events;
  const Split s = split_events(data.events.size(), cfg.train_percent, cfg.val_percent, cfg.seed);
  if (which == "test") return select_events(data, s.test);
  if (which == "val") return select_events(data, s.val);
  if (which == "train") return select_events(data, s.train);
  throw ConfigError("--events must be all, train, val or test, got '" + which + "'");
}

void print_latency_table(const std::vector<SweepRow>& rows) {
  std::printf("%12s %10s %12s %10s %10s\n", "enc_hidden", "params", "median_ms", "mad_ms", "min_ms");
  for (const auto& r : rows) {
    std::printf("%12zu %10zu %12.4f %10.4f %10.4f\n", r.enc_hidden_size, r.params, r.latency.median_ms,
                r.latency.mad_ms, r.latency.min_ms);
  }
}

// ------------------------------------------------------------------ synth

int cmd_synth(CLI::App* sub, const ConfigOptions& opts, const std::string& out_flag) {
  const std::string cmd = "synth";
  const RunConfig cfg = stage(cmd, "config", [&] {
    RunConfig c = opts.resolve(sub);
    c.validate();
    return c;
  });
  const std::string out = out_flag.empty() ? cfg.data_dir : out_flag;
  if (out.empty()) throw Failure{kExitUsage, "flapnet synth [config]: no output directory (use --out or --data_dir)"};
  const Dataset d = stage(cmd, "generate", [&] {
    return generate_dataset(cfg.synth_n_events, cfg.synth_ranges(), QsParams{}, cfg.seed);
  });
  stage(cmd, "write", [&] {
    std::error_code ec;
    fs::create_directories(out, ec);
    write_events(d, out);
  });
  std::printf("wrote %zu events (%zu force channels, %.6g Hz) to %s\n", d.events.size(), d.force_dim(),
              d.sample_rate, out.c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ train

int cmd_train(CLI::App* sub, const ConfigOptions& opts, const std::string& data_flag, const std::string& out_flag,
              const std::string& grid_file, std::size_t budget, bool quiet) {
  const std::string cmd = "train";
  RunConfig cfg = stage(cmd, "config", [&] {
    RunConfig c = opts.resolve(sub);
    if (!data_flag.empty()) c.data_dir = data_flag;
    if (!out_flag.empty()) c.output_dir = out_flag;
    c.validate();
    return c;
  });
  const Dataset data = stage(cmd, "load", [&] { return load_dataset(cfg.data_dir); });
  const fs::path out = stage(cmd, "output", [&] { return output_dir(cfg.output_dir); });

  if (!grid_file.empty()) {
    const GridSpace space = stage(cmd, "grid", [&] {
      std::ifstream in(grid_file);
      if (!in) throw ConfigError("cannot read grid file " + grid_file);
      const json j = json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw ConfigError("grid file must hold a JSON object of lists");
      GridSpace s;
      for (const auto& [k, v] : j.items()) {
        if (!v.is_array()) throw ConfigError("grid key '" + k + "' must map to a list");
        s.emplace_back(k, v.get<std::vector<json>>());
      }
      return s;
    });
    const auto trials = stage(cmd, "grid", [&] { return grid_search(cfg, space, data, budget); });
    stage(cmd, "write", [&] { write_grid_ledger(trials, out / "grid.csv"); });
    for (std::size_t r = 0; r < trials.size(); ++r) {
      std::printf("%3zu  val %.6f  epoch %2zu  %s\n", r + 1, trials[r].best_val_loss, trials[r].best_epoch,
                  trials[r].assignment.dump().c_str());
    }
    return kExitOk;
  }

  const PreparedData prepared = stage(cmd, "prepare", [&] { return prepare_data(data, cfg); });
  std::fprintf(stderr, "events %zu/%zu/%zu  windows train %zu val %zu\n", prepared.split.train.size(),
               prepared.split.val.size(), prepared.split.test.size(), prepared.train.size(), prepared.val.size());
  const TrainedRun run = stage(cmd, "train", [&] {
    return run_training(data, cfg, prepared, [&](const EpochRecord& e) {
      if (!quiet) {
        std::fprintf(stderr, "epoch %3zu  train %.6f  val %.6f  %.1fs\n", e.epoch, e.train_loss, e.val_loss,
                     e.seconds);
      }
    });
  });

  const EvalReport test = stage(cmd, "evaluate", [&] {
    if (prepared.test_events.empty()) return EvalReport{};
    return evaluate_events(run.model, run.norm, prepared.test_events, run.config.eval_window_spec());
  });

  stage(cmd, "write", [&] {
    json meta = {{"best_epoch", run.report.best_epoch},
                 {"best_val_loss", run.report.best_val_loss},
                 {"train_events", run.split.train},
                 {"val_events", run.split.val},
                 {"test_events", run.split.test}};
    save_checkpoint(out / "model.ckpt", run.config, run.model, run.norm, meta);

    std::ofstream ep(out / "epochs.csv");
    ep << "epoch,train_loss,val_loss\n";
    for (const auto& e : run.report.epochs) ep << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << '\n';
    if (!ep) throw DataError("failed writing " + (out / "epochs.csv").string());

    json epochs = json::array();
    for (const auto& e : run.report.epochs) {
      epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                        {"seconds", e.seconds}});
    }
    json rep = {{"initial_train_loss", run.report.initial_train_loss},
                {"best_epoch", run.report.best_epoch},
                {"best_val_loss", run.report.best_val_loss},
                {"stop_reason", run.report.stop_reason},
                {"optimizer_steps", run.report.optimizer_steps},
                {"parameters", run.model.param_count()},
                {"epochs", epochs},
                {"split", {{"train", run.split.train.size()}, {"val", run.split.val.size()},
                           {"test", run.split.test.size()}}}};
    if (!test.events.empty()) {
      rep["test"] = {{"events", test.events.size()}, {"median_mae", test.median}, {"mean_mae", test.mean}};
      write_eval_report(test, out / "test_eval.csv");
    }
    std::ofstream rj(out / "train_report.json");
    rj << rep.dump(2) << '\n';
    if (!rj) throw DataError("failed writing " + (out / "train_report.json").string());
  });

  std::printf("best epoch %zu  val loss %.6f  stop %s\n", run.report.best_epoch, run.report.best_val_loss,
              run.report.stop_reason.c_str());
  if (!test.events.empty()) {
    std::printf("test events %zu  median MAE %.6f rad  mean MAE %.6f rad\n", test.events.size(), test.median,
                test.mean);
  }
  std::printf("wrote %s\n", (out / "model.ckpt").string().c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& events_sel, bool use_mean,
             const std::string& compare, const std::string& out_file) {
  const std::string cmd = "eval";
  const Checkpoint ck = stage(cmd, "load checkpoint", [&] { return load_checkpoint(ckpt); });
  const Dataset data = stage(cmd, "load data", [&] {
    Dataset d = load_dataset(data_dir);
    check_compatible(ck, d);
    return d;
  });
  const std::vector<Event> events = stage(cmd, "select", [&] {
    auto ev = pick_events(data, ck.config, events_sel);
    if (ev.empty()) throw DataError("no events selected (--events " + events_sel + ")");
    return ev;
  });
  EvalReport rep = stage(cmd, "evaluate", [&] {
    return evaluate_events(ck.model, ck.norm, events, ck.config.eval_window_spec());
  });
  if (!compare.empty()) {
    const Checkpoint other = stage(cmd, "load compare", [&] {
      Checkpoint o = load_checkpoint(compare);
      check_compatible(o, data);
      return o;
    });
    const EvalReport orep = stage(cmd, "evaluate compare", [&] {
      return evaluate_events(other.model, other.norm, events, other.config.eval_window_spec());
    });
    rep.comparison = wilcoxon_signed_rank(rep.maes(), orep.maes());
    std::printf("compare %s: median %.6f  mean %.6f\n", compare.c_str(), orep.median, orep.mean);
  }
  if (!out_file.empty()) stage(cmd, "write", [&] { write_eval_report(rep, out_file, compare); });

  const Aggregate agg = use_mean ? Aggregate::kMean : Aggregate::kMedian;
  std::printf("events %zu  %s MAE %.6f rad\n", rep.events.size(), to_string(agg).c_str(),
              use_mean ? rep.mean : rep.median);
  if (rep.comparison) {
    const auto& w = *rep.comparison;
    if (w.degenerate) {
      std::printf("wilcoxon: all differences zero, p = 1 (degenerate)\n");
    } else {
      std::printf("wilcoxon n %zu  W+ %.1f  p(less) %.6g  p(greater) %.6g  p(two-sided) %.6g  %s\n", w.n, w.w_plus,
                  w.p_less, w.p_greater, w.p_two_sided, w.exact ? "exact" : "normal");
    }
  }
  return kExitOk;
}

// ------------------------------------------------------------------ infer

int cmd_infer(const std::string& ckpt, const std::string& window_file, const std::string& out_file) {
  const std::string cmd = "infer";
  const Checkpoint ck = stage(cmd, "load checkpoint", [&] { return load_checkpoint(ckpt); });
  const Tensor raw = stage(cmd, "read window", [&] {
    Tensor w = read_window(window_file, ck.input_channels);
    const std::size_t fw = ck.model.config().feature_win;
    if (w.rows() != fw) {
      throw DataError("window has " + std::to_string(w.rows()) + " samples, expected feature_win = " +
                      std::to_string(fw));
    }
    return w;
  });
  const Tensor angles = stage(cmd, "predict", [&] {
    return ck.norm.invert_targets(ck.model.predict(ck.norm.apply_features(raw)));
  });
  std::ostringstream os;
  os << "phi,theta,psi\n";
  for (std::size_t r = 0; r < angles.rows(); ++r) {
    os << fmt(angles(r, 0)) << ',' << fmt(angles(r, 1)) << ',' << fmt(angles(r, 2)) << '\n';
  }
  if (out_file.empty()) {
    std::cout << os.str();
  } else {
    stage(cmd, "write", [&] {
      std::ofstream f(out_file);
      f << os.str();
      if (!f) throw DataError("failed writing " + out_file);
    });
  }
  return kExitOk;
}

// ------------------------------------------------------------------ bench

int cmd_bench(CLI::App* sub, const ConfigOptions& opts, const std::string& ckpt, const std::vector<std::size_t>& sweep,
              std::size_t channels, std::size_t reps, std::size_t warmup, const std::string& out_file) {
  const std::string cmd = "bench";
  if (ckpt.empty() == sweep.empty()) {
    throw Failure{kExitUsage, "flapnet bench [config]: give exactly one of --checkpoint or --sweep"};
  }
  std::vector<SweepRow> rows;
  if (!ckpt.empty()) {
    const Checkpoint ck = stage(cmd, "load checkpoint", [&] { return load_checkpoint(ckpt); });
    rows.push_back({ck.model.config().enc_hidden_size, ck.model.param_count(),
                    stage(cmd, "measure", [&] { return bench_latency(ck.model, reps, warmup, ck.config.seed); })});
  } else {
    const RunConfig cfg = stage(cmd, "config", [&] {
      RunConfig c = opts.resolve(sub);
      c.validate();
      return c;
    });
    rows = stage(cmd, "measure", [&] {
      return param_sweep(cfg.model_config(channels, cfg.synth_sample_rate), sweep, reps, warmup, cfg.seed);
    });
  }
  print_latency_table(rows);
  if (!out_file.empty()) stage(cmd, "write", [&] { write_sweep_table(rows, out_file); });
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flapnet: force-to-kinematics inverse mapping"};
  app.require_subcommand(1);

  ConfigOptions synth_opts, train_opts, bench_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic event dataset");
  synth->add_option("-o,--out", synth_out, "output dataset directory (defaults to data_dir)");
  synth_opts.attach(synth);

  std::string train_data, train_out, grid_file;
  std::size_t budget = 0;
  bool quiet = false;
  auto* trn = app.add_subcommand("train", "train a model and write checkpoint + report");
  trn->add_option("-d,--data", train_data, "dataset directory (defaults to data_dir)");
  trn->add_option("-o,--out", train_out, "output directory (defaults to output_dir, then .)");
  trn->add_option("--grid", grid_file, "JSON object of key -> candidate list; runs a grid search");
  trn->add_option("--budget", budget, "random subset size for --grid (0 = all points)");
  trn->add_flag("-q,--quiet", quiet, "no per-epoch progress");
  train_opts.attach(trn);

  std::string ev_ckpt, ev_data, ev_events = "test", ev_compare, ev_out;
  bool ev_mean = false, ev_median = false;
  auto* ev = app.add_subcommand("eval", "per-event MAE table for a checkpoint");
  ev->add_option("checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("-d,--data", ev_data, "dataset directory")->required();
  ev->add_option("--events", ev_events, "all | train | val | test (split recomputed from the stored seed)");
  auto* mean_flag = ev->add_flag("--mean", ev_mean, "report the mean aggregate");
  ev->add_flag("--median", ev_median, "report the median aggregate (default)")->excludes(mean_flag);
  ev->add_option("--compare", ev_compare, "second checkpoint for a paired Wilcoxon test");
  ev->add_option("-o,--out", ev_out, "write the per-event report here");

  std::string inf_ckpt, inf_window, inf_out;
  auto* inf = app.add_subcommand("infer", "predict angles for one force window");
  inf->add_option("checkpoint", inf_ckpt, "checkpoint file")->required();
  inf->add_option("window", inf_window, "CSV force window, feature_win rows")->required();
  inf->add_option("-o,--out", inf_out, "output CSV (default stdout)");

  std::string bench_ckpt, bench_out;
  std::vector<std::size_t> sweep;
  std::size_t channels = 4, reps = 200, warmup = 20;
  auto* bench = app.add_subcommand("bench", "single-window inference latency");
  bench->add_option("--checkpoint", bench_ckpt, "checkpoint to time");
  bench->add_option("--sweep", sweep, "encoder/decoder hidden sizes to sweep")->delimiter(',');
  bench->add_option("--channels", channels, "force channels for --sweep models");
  bench->add_option("--reps", reps, "timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "untimed warm-up passes");
  bench->add_option("-o,--out", bench_out, "write the latency table here");
  bench_opts.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth, synth_opts, synth_out);
    if (trn->parsed()) return cmd_train(trn, train_opts, train_data, train_out, grid_file, budget, quiet);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_events, ev_mean, ev_compare, ev_out);
    if (inf->parsed()) return cmd_infer(inf_ckpt, inf_window, inf_out);
    if (bench->parsed()) return cmd_bench(bench, bench_opts, bench_ckpt, sweep, channels, reps, warmup, bench_out);
  } catch (const Failure& f) {
    std::fprintf(stderr, "%s\n", f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "flapnet: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
