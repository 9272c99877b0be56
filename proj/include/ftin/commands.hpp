#pragma once

// Subcommands of the `ftin` executable. Each command writes its outputs and a
// manifest.json under --out. Exit codes: 0 success, 2 usage or validation
// failure, 3 runtime or numeric failure.
//
// Flag precedence: command-line flags override config-file values, which
// override built-in defaults.

#include "ftin/checkpoint.hpp"
#include "ftin/evaluation.hpp"
#include "ftin/manifest.hpp"
#include "ftin/plot.hpp"
#include "ftin/synth_world.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace ftin {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

// ---------------------------------------------------------------- data prep

struct PreparedData {
  std::vector<NamedSequence> all;
  Split<NamedSequence> split;
};

inline NamedSequence to_world(NamedSequence s) {
  if (s.seq.frame == Frame::Body) s.seq = rotate_to_world(s.seq);
  return s;
}

inline PreparedData prepare_data(const fs::path& dir, std::uint64_t split_seed) {
  PreparedData d;
  for (auto& s : load_corpus(dir)) {
    validate(s.seq);
    d.all.push_back(to_world(std::move(s)));
  }
  d.split = split_dataset(d.all, split_seed);
  return d;
}

inline std::vector<LabeledWindow> windows_of(const std::vector<NamedSequence>& seqs, Index window, Index stride) {
  std::vector<LabeledWindow> out;
  for (const auto& s : seqs) {
    auto w = make_windows(s.seq, window, stride);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

inline void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

// --------------------------------------------------------------- train / eval

struct TrainRunResult {
  fs::path best_checkpoint;
  fs::path last_checkpoint;
  fs::path history;
  fs::path log;
  TrainHistory history_records;
};

// Trains on the training split, checkpointing every epoch. With `resume` and
// an existing out/last.ckpt, continues from the stored state; the stored model
// config must match.
inline TrainRunResult train_run(RunConfig cfg, const PreparedData& data, const fs::path& out, bool resume,
                                std::ostream* progress = nullptr) {
  fs::create_directories(out);
  TrainRunResult r{out / "best.ckpt", out / "last.ckpt", out / "history.json", out / "train.log", {}};

  std::optional<TrainState<float>> state;
  if (resume && fs::exists(r.last_checkpoint)) {
    const Archive a = load_archive(r.last_checkpoint);
    const RunConfig stored = run_config_of(a);
    if (to_json(stored.model) != to_json(cfg.model)) throw ValidationError("resume: model config differs from " + r.last_checkpoint.string());
    state = train_state_of<float>(a);
    state->finished = state->lr < cfg.train.lr_floor * (1.0 - 1e-9);
  }
  if (!state) state = initial_train_state<float>(cfg.model, cfg.train);

  const auto train_w = windows_of(data.split.train, cfg.model.window, cfg.data.stride);
  const auto val_w = windows_of(data.split.val, cfg.model.window, cfg.data.stride);

  std::ofstream log(r.log, resume ? std::ios::app : std::ios::trunc);
  auto say = [&](const std::string& line) {
    log << line << '\n';
    log.flush();
    if (progress) *progress << line << '\n';
  };
  say("train windows " + std::to_string(train_w.size()) + ", val windows " + std::to_string(val_w.size()) + ", params " +
      std::to_string(nn::parameter_count(state->params)) + ", starting at epoch " + std::to_string(state->next_epoch));

  TrainCallbacks<float> cb;
  cb.log = say;
  cb.on_epoch = [&](const TrainState<float>& st) {
    save_archive(r.last_checkpoint, make_resume_checkpoint(cfg, st));
    const auto& last = st.history.epochs.back();
    if (last.val_loss == st.best_val || !fs::exists(r.best_checkpoint)) {
      save_archive(r.best_checkpoint,
                   make_checkpoint(cfg, st.best, {{"epoch", last.epoch}, {"val_loss", st.best_val}}));
    }
    write_json(r.history, history_to_json(st.history));
  };
  auto result = train<float>(cfg.model, cfg.train, train_w, val_w, std::move(*state), cb);
  r.history_records = std::move(result.history);
  if (!fs::exists(r.best_checkpoint)) throw Error("training produced no checkpoint");
  if (!fs::exists(r.history)) write_json(r.history, history_to_json(r.history_records));
  return r;
}

enum class PredictorKind { Model, Oracle, Zero };

struct EvalRunResult {
  MetricsReport report;
  std::vector<fs::path> files;
};

inline EvalRunResult eval_run(const VelocityPredictor& predictor, const std::vector<NamedSequence>& seqs, Index window,
                              Index stride, const fs::path& out) {
  fs::create_directories(out);
  EvalRunResult r;
  std::vector<SequenceMetrics> rows;
  for (const auto& s : seqs) {
    const EvaluatedSequence e = evaluate_sequence(predictor, s, window, stride);
    const fs::path csv = out / ("trajectory_" + s.name + ".csv");
    write_trajectory_csv(csv, e);
    r.files.push_back(csv);
    rows.push_back(e.metrics);
  }
  r.report = summarize(std::move(rows));
  const fs::path metrics = out / "metrics.json";
  write_json(metrics, to_json(r.report));
  r.files.insert(r.files.begin(), metrics);
  return r;
}

// Short content hash of a model configuration, for ablation rows.
inline std::string config_hash(const FtinConfig& c) { return sha1_hex(to_json(c).dump()).substr(0, 12); }

// ------------------------------------------------------------------ commands

namespace cli {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

inline RunConfig resolve_config(const Common& c, std::optional<int> epochs) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.threads) cfg.train.threads = *c.threads;
  if (epochs) cfg.train.max_epochs = *epochs;
  validate(cfg.train);
  return cfg;
}

inline std::vector<std::string> strings(const std::vector<fs::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

inline int cmd_synth(const Common& c) {
  RunManifest m;
  m.command = "synth";
  m.started = utc_timestamp();
  if (c.config.empty()) throw ValidationError("synth: --config <corpus spec JSON> is required");
  if (!fs::exists(c.config)) throw ValidationError("corpus spec not found: " + c.config);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(c.config));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("corpus spec " + c.config + " is not valid JSON: " + e.what());
  }
  CorpusSpec spec = corpus_spec_from_json(j);
  if (c.seed) spec.seed = *c.seed;
  validate(spec);
  const fs::path out = c.out;
  const nlohmann::json corpus = write_corpus(spec, out);
  m.config = {{"count", spec.count}, {"seed", spec.seed}, {"trajectory", spec.trajectory}};
  m.seed = spec.seed;
  m.inputs = {c.config};
  m.outputs.push_back((out / "corpus.json").string());
  for (const auto& t : corpus.at("trajectories")) m.outputs.push_back((out / t.at("name").get<std::string>()).string());
  m.write(out);
  std::cerr << "wrote " << spec.count << " sequences to " << out.string() << '\n';
  return kExitOk;
}

inline int cmd_train(const Common& c, const std::string& data_dir, bool resume, std::optional<int> epochs) {
  RunManifest m;
  m.command = "train";
  m.started = utc_timestamp();
  RunConfig cfg = resolve_config(c, epochs);
  const PreparedData data = prepare_data(data_dir, cfg.data.split_seed);
  const fs::path out = c.out;
  const TrainRunResult r = train_run(cfg, data, out, resume, &std::cerr);
  m.config = to_json(cfg);
  m.seed = cfg.train.seed;
  m.inputs = {data_dir};
  if (!c.config.empty()) m.inputs.push_back(c.config);
  m.outputs = strings({r.best_checkpoint, r.last_checkpoint, r.history, r.log});
  m.checkpoint_hash = git_blob_hash_file(r.best_checkpoint);
  m.write(out);
  return kExitOk;
}

inline int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data_dir, const std::string& predictor_name,
                    const std::string& split, std::optional<Index> stride, std::optional<Index> window) {
  RunManifest m;
  m.command = "eval";
  m.started = utc_timestamp();
  PredictorKind kind;
  if (predictor_name == "model") kind = PredictorKind::Model;
  else if (predictor_name == "oracle") kind = PredictorKind::Oracle;
  else if (predictor_name == "zero") kind = PredictorKind::Zero;
  else throw ValidationError("eval: unknown predictor '" + predictor_name + "'");

  RunConfig cfg;
  std::optional<FtinParams<float>> params;
  if (!checkpoint.empty()) {
    const Archive a = load_archive(checkpoint);
    cfg = run_config_of(a);
    params = FtinParams<float>(cfg.model);
    read_tensors(a, *params);
    m.checkpoint_hash = git_blob_hash_file(checkpoint);
    m.inputs.push_back(checkpoint);
  } else if (kind == PredictorKind::Model) {
    throw ValidationError("eval: --checkpoint is required for the model predictor");
  } else if (!c.config.empty()) {
    cfg = load_run_config(c.config);
  }
  if (window) cfg.model.window = *window;
  if (stride) cfg.data.eval_stride = *stride;
  if (c.threads) cfg.train.threads = *c.threads;

  const PreparedData data = prepare_data(data_dir, cfg.data.split_seed);
  const std::vector<NamedSequence>* seqs = nullptr;
  if (split == "test") seqs = &data.split.test;
  else if (split == "val") seqs = &data.split.val;
  else if (split == "train") seqs = &data.split.train;
  else if (split == "all") seqs = &data.all;
  else throw ValidationError("eval: unknown split '" + split + "'");

  VelocityPredictor pred = kind == PredictorKind::Oracle ? oracle_predictor()
                           : kind == PredictorKind::Zero ? zero_predictor()
                                                         : model_predictor(*params, cfg.model, cfg.train.threads);
  const fs::path out = c.out;
  const EvalRunResult r = eval_run(pred, *seqs, cfg.model.window, cfg.eval_stride(), out);
  m.config = to_json(cfg);
  m.config["eval"] = {{"predictor", predictor_name}, {"split", split}, {"stride", cfg.eval_stride()}};
  m.seed = cfg.train.seed;
  m.inputs.push_back(data_dir);
  m.outputs = strings(r.files);
  m.write(out);
  std::cerr << "ATE " << r.report.ate << " m, RTE " << r.report.rte << " m, PDE " << r.report.pde << " over "
            << r.report.sequences.size() << " sequences\n";
  return kExitOk;
}

struct AblationRow {
  std::string model;
  bool fdl = false, tdl = false;
  std::string config_hash;
  MetricsReport metrics;
};

inline int cmd_ablate(const Common& c, const std::string& data_dir, std::optional<int> epochs) {
  RunManifest m;
  m.command = "ablate";
  m.started = utc_timestamp();
  const RunConfig base = resolve_config(c, epochs);
  const PreparedData data = prepare_data(data_dir, base.data.split_seed);
  const fs::path out = c.out;
  fs::create_directories(out);

  struct Variant {
    const char* name;
    bool fdl, tdl;
  };
  const Variant variants[] = {{"i", false, false}, {"ii", true, false}, {"iii", false, true}, {"iv", true, true}};
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    RunConfig cfg = base;
    cfg.model.fdl_enabled = v.fdl;
    cfg.model.tdl_enabled = v.tdl;
    const fs::path dir = out / ("model_" + std::string(v.name));
    std::cerr << "== model " << v.name << " (fdl " << v.fdl << ", tdl " << v.tdl << ")\n";
    const TrainRunResult tr = train_run(cfg, data, dir, false, &std::cerr);
    const FtinParams<float> params = params_of<float>(load_archive(tr.best_checkpoint));
    const EvalRunResult er =
        eval_run(model_predictor(params, cfg.model, cfg.train.threads), data.split.test, cfg.model.window, cfg.eval_stride(), dir / "eval");
    rows.push_back({v.name, v.fdl, v.tdl, config_hash(cfg.model), er.report});
    for (const auto& p : {tr.best_checkpoint, tr.last_checkpoint, tr.history, tr.log}) m.outputs.push_back(p.string());
    for (const auto& p : er.files) m.outputs.push_back(p.string());
  }
  const double zero_ate = zero_velocity_ate(data.split.test, base.model.window, base.eval_stride());

  nlohmann::json table = nlohmann::json::array();
  std::string md = "| model | FDL | TDL | ATE (m) | RTE (m) | PDE | config hash |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    table.push_back({{"model", r.model}, {"fdl", r.fdl}, {"tdl", r.tdl}, {"ate_m", r.metrics.ate}, {"rte_m", r.metrics.rte},
                     {"pde", r.metrics.pde}, {"config_hash", r.config_hash}});
    md += "| " + r.model + " | " + (r.fdl ? "yes" : "no") + " | " + (r.tdl ? "yes" : "no") + " | " + plot::fmt(r.metrics.ate) +
          " | " + plot::fmt(r.metrics.rte) + " | " + plot::fmt(r.metrics.pde) + " | " + r.config_hash + " |\n";
  }
  md += "\nzero-velocity baseline ATE: " + plot::fmt(zero_ate) + " m\n";
  write_json(out / "ablation.json", {{"rows", table}, {"zero_velocity_ate_m", zero_ate}, {"seed", base.train.seed}});
  std::ofstream(out / "ablation.md", std::ios::binary) << md;
  m.outputs.push_back((out / "ablation.json").string());
  m.outputs.push_back((out / "ablation.md").string());
  m.config = to_json(base);
  m.seed = base.train.seed;
  m.inputs = {data_dir};
  if (!c.config.empty()) m.inputs.push_back(c.config);
  m.write(out);
  std::cerr << md;
  return kExitOk;
}

inline std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p, std::vector<std::string>& header) {
  std::istringstream in(detail::read_file(p));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    for (auto sv : detail::split_commas(line)) cells.emplace_back(sv);
    if (first) {
      header = std::move(cells);
      first = false;
    } else {
      rows.push_back(std::move(cells));
    }
  }
  return rows;
}

inline plot::Axes trajectory_axes(const fs::path& csv) {
  std::vector<std::string> header;
  const auto rows = read_csv_rows(csv, header);
  const std::vector<std::string> expect{"t", "px_gt", "py_gt", "px_pred", "py_pred"};
  if (header != expect) throw SchemaError("trajectory csv header in " + csv.string());
  plot::Series gt{"ground truth", {}, {}}, pr{"prediction", {}, {}};
  Index r = 0;
  for (const auto& row : rows) {
    if (row.size() != 5) throw IntegrityError("expected 5 columns in " + csv.string(), r);
    gt.x.push_back(detail::parse_double(row[1], r, "px_gt"));
    gt.y.push_back(detail::parse_double(row[2], r, "py_gt"));
    pr.x.push_back(detail::parse_double(row[3], r, "px_pred"));
    pr.y.push_back(detail::parse_double(row[4], r, "py_pred"));
    ++r;
  }
  return {csv.stem().string(), "x (m)", "y (m)", true, {gt, pr}};
}

inline int cmd_plot(const Common& c, const std::vector<std::string>& inputs) {
  RunManifest m;
  m.command = "plot";
  m.started = utc_timestamp();
  if (inputs.empty()) throw ValidationError("plot: no input files given");
  for (const auto& in : inputs) {
    if (!fs::exists(in)) throw ValidationError("plot: input not found: " + in);
  }
  const fs::path out = c.out;
  fs::create_directories(out);

  plot::Axes ate_cdf{"ATE CDF", "ATE (m)", "fraction", false, {}};
  plot::Axes rte_cdf{"RTE CDF", "RTE (m)", "fraction", false, {}};
  plot::Axes pde_cdf{"PDE CDF", "PDE", "fraction", false, {}};
  for (const auto& in : inputs) {
    const fs::path p = in;
    if (p.extension() == ".csv") {
      const fs::path svg = out / (p.stem().string() + ".svg");
      plot::write_svg(svg, {trajectory_axes(p)});
      m.outputs.push_back(svg.string());
    } else if (p.extension() == ".json") {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(detail::read_file(p));
      } catch (const nlohmann::json::parse_error&) {
        throw ValidationError("plot: " + in + " is not valid JSON");
      }
      if (!j.contains("cdf_ate") || !j.contains("sequences")) throw SchemaError("metrics file " + in);
      const std::string label = p.has_parent_path() && !p.parent_path().filename().empty() ? p.parent_path().filename().string() : p.stem().string();
      auto curve = [&](const nlohmann::json& arr) {
        plot::Series s{label, {}, {}, true};
        for (const auto& pt : arr) {
          s.x.push_back(pt.at("threshold_m").get<double>());
          s.y.push_back(pt.at("fraction").get<double>());
        }
        return s;
      };
      ate_cdf.series.push_back(curve(j.at("cdf_ate")));
      rte_cdf.series.push_back(curve(j.at("cdf_rte")));
      std::vector<double> pdes;
      for (const auto& row : j.at("sequences")) pdes.push_back(row.at("pde").get<double>());
      plot::Series s{label, {}, {}, true};
      for (const auto& pt : cdf(pdes)) {
        s.x.push_back(pt.threshold);
        s.y.push_back(pt.fraction);
      }
      pde_cdf.series.push_back(std::move(s));
    } else {
      throw ValidationError("plot: unsupported input type: " + in);
    }
    m.inputs.push_back(in);
  }
  if (!ate_cdf.series.empty()) {
    const fs::path svg = out / "cdf.svg";
    plot::write_svg(svg, {ate_cdf, rte_cdf, pde_cdf});
    m.outputs.push_back(svg.string());
  }
  m.write(out);
  return kExitOk;
}

}  // namespace cli

inline int run_cli(std::vector<std::string> args, std::ostream& err = std::cerr) {
  CLI::App app{"FTIN inertial odometry: synthesize data, train, evaluate, ablate, plot"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ftin 0.1.0");

  cli::Common common;
  auto add_common = [&common](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", common.config, "config JSON file");
    auto* o = sub->add_option("--out", common.out, "output directory");
    if (needs_out) o->required();
    sub->add_option_function<std::uint64_t>("--seed", [&common](const std::uint64_t& s) { common.seed = s; }, "random seed");
    sub->add_option_function<int>("--threads", [&common](const int& t) { common.threads = t; }, "worker threads")->check(CLI::PositiveNumber);
  };

  std::string data_dir, checkpoint, predictor = "model", split = "test";
  bool resume = false;
  std::optional<int> epochs;
  std::optional<Index> stride, window;
  std::vector<std::string> inputs;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus from a corpus spec");
  add_common(synth);

  auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "corpus directory")->required();
  train_cmd->add_flag("--resume", resume, "continue from out/last.ckpt when present");
  train_cmd->add_option_function<int>("--epochs", [&epochs](const int& e) { epochs = e; }, "override max_epochs");

  auto* eval_cmd = app.add_subcommand("eval", "reconstruct trajectories and compute metrics");
  add_common(eval_cmd);
  eval_cmd->add_option("--data", data_dir, "corpus directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval_cmd->add_option("--predictor", predictor, "model, oracle or zero")->check(CLI::IsMember({"model", "oracle", "zero"}));
  eval_cmd->add_option("--split", split, "test, val, train or all")->check(CLI::IsMember({"test", "val", "train", "all"}));
  eval_cmd->add_option_function<Index>("--stride", [&stride](const Index& s) { stride = s; }, "reconstruction stride (samples)");
  eval_cmd->add_option_function<Index>("--window", [&window](const Index& w) { window = w; }, "window length without a checkpoint");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate models i-iv");
  add_common(ablate);
  ablate->add_option("--data", data_dir, "corpus directory")->required();
  ablate->add_option_function<int>("--epochs", [&epochs](const int& e) { epochs = e; }, "override max_epochs");

  auto* plot_cmd = app.add_subcommand("plot", "render trajectory CSVs and metrics files as SVG");
  add_common(plot_cmd);
  plot_cmd->add_option("inputs", inputs, "trajectory_*.csv and metrics.json files")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      err << (e.get_name() == "CallForVersion" ? std::string("ftin 0.1.0\n") : app.help());
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (*synth) return cli::cmd_synth(common);
    if (*train_cmd) return cli::cmd_train(common, data_dir, resume, epochs);
    if (*eval_cmd) return cli::cmd_eval(common, checkpoint, data_dir, predictor, split, stride, window);
    if (*ablate) return cli::cmd_ablate(common, data_dir, epochs);
    if (*plot_cmd) return cli::cmd_plot(common, inputs);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

inline int run_cli(int argc, char** argv, std::ostream& err = std::cerr) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), err);
}

}  // namespace ftin
