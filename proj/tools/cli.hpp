#pragma once

// Command-line front end: synth, train, gridsearch, features, bench, inspect.
//
// Every command writes its effective configuration as the first line of its
// report, then the results, in JSON (one object per line) or CSV. Exit codes:
// 0 success, 2 usage, 3 data, 4 capacity, 5 numeric.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tensorkernel/tensorkernel.hpp"

namespace tk::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_data = 3;
inline constexpr int exit_capacity = 4;
inline constexpr int exit_numeric = 5;

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::invalid_order:
    case ErrorKind::unsupported: return exit_usage;
    case ErrorKind::parse:
    case ErrorKind::io:
    case ErrorKind::shape:
    case ErrorKind::bounds: return exit_data;
    case ErrorKind::capacity: return exit_capacity;
    case ErrorKind::range:
    case ErrorKind::numeric: return exit_numeric;
  }
  return exit_usage;
}

inline std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::invalid_order: return "invalid_order";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::bounds: return "bounds";
    case ErrorKind::shape: return "shape";
    case ErrorKind::range: return "range";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
    case ErrorKind::unsupported: return "unsupported";
  }
  return "error";
}

/// Ordered key/value report printed as one JSON object or a two-line CSV.
class Report {
 public:
  using Json = nlohmann::ordered_json;

  template <class T>
  Report& set(const std::string& key, T&& value) {
    fields_[key] = Json(std::forward<T>(value));
    return *this;
  }

  [[nodiscard]] const Json& fields() const { return fields_; }

  void print(std::ostream& out, const std::string& format) const {
    if (format == "json") {
      out << fields_.dump() << '\n';
      return;
    }
    std::string header, values;
    bool first = true;
    for (const auto& [k, v] : fields_.items()) {
      header += (first ? "" : ",") + k;
      std::string cell = scalar(v);
      if (cell.find(',') != std::string::npos) cell = '"' + cell + '"';
      values += (first ? "" : ",") + cell;
      first = false;
    }
    out << header << '\n' << values << '\n';
  }

  static std::string scalar(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

 private:
  Json fields_ = Json::object();
};

struct GlobalOptions {
  std::uint64_t seed = 42;
  std::size_t threads = 0;
  std::string output;
  std::string format = "json";
  std::string config;
};

namespace detail {

/// Appends "--key value" for every "key=value" line of the config file whose
/// flag is not already on the command line, so flags take precedence.
inline std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = tk::detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value in config file", line_no);
    std::string key(tk::detail::trim(t.substr(0, eq)));
    std::string value(tk::detail::trim(t.substr(eq + 1)));
    if (key.rfind("--", 0) != 0) key = "--" + key;
    bool present = false;
    for (const auto& a : args) {
      if (a == key || a.rfind(key + "=", 0) == 0) present = true;
    }
    if (!present) {
      args.push_back(key);
      args.push_back(value);
    }
  }
  return args;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  for (auto field : tk::detail::split_fields(text, ',')) {
    if (field.empty()) continue;
    auto v = tk::detail::parse_double(field);
    if (!v) throw InvalidArgumentError(std::string("bad value in ") + what + ": '" + std::string(field) + "'");
    out.push_back(static_cast<T>(*v));
  }
  if (out.empty()) throw InvalidArgumentError(std::string("empty list for ") + what);
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::size_t> to_indices(std::span<const std::size_t> v) { return {v.begin(), v.end()}; }

}  // namespace detail

/// Parses and runs one command. `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  GlobalOptions global;
  CLI::App app{"Sparse regression with tensor kernels", "tk"};
  app.require_subcommand(1);
  app.add_option("--seed", global.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", global.threads, "Worker threads (0 = all; TK_THREADS overrides)");
  app.add_option("--output", global.output, "Write the report here instead of stdout");
  app.add_option("--format", global.format, "Report format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  app.add_option("--config", global.config, "key=value file; command-line flags win");

  // synth
  SyntheticSpec synth;
  std::string synth_out;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic sparse regression dataset");
  c_synth->add_option("--n", synth.n, "Examples")->capture_default_str();
  c_synth->add_option("--d", synth.d, "Features")->capture_default_str();
  c_synth->add_option("--s", synth.sparsity, "Nonzero true weights")->capture_default_str();
  c_synth->add_option("--sigma", synth.sigma, "Noise level")->capture_default_str();
  c_synth->add_option("--out", synth_out, "Output CSV (truth goes to <out>.truth.json)")->required();

  // shared model flags
  std::string kernel_name = "linear";
  unsigned q = 4;
  unsigned degree = 2;
  TrainConfig cfg;
  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--kernel", kernel_name, "linear | poly | exp")
        ->check(CLI::IsMember({"linear", "poly", "polynomial", "exp", "exponential"}))
        ->capture_default_str();
    c->add_option("--q", q, "Tensor order (even)")->capture_default_str();
    c->add_option("--degree", degree, "Polynomial degree")->capture_default_str();
    c->add_option("--iters", cfg.max_iters, "Optimizer iterations")->capture_default_str();
    c->add_option("--rel-tol", cfg.rel_tol, "Relative objective change to stop at")->capture_default_str();
  };

  // train
  std::string train_path, model_out, solver_name = "dual";
  std::optional<std::size_t> train_m;
  auto* c_train = app.add_subcommand("train", "Fit a model");
  c_train->add_option("--train", train_path, "Training data")->required();
  add_model_flags(c_train);
  c_train->add_option("--gamma", cfg.gamma, "Regularization (larger = weaker)")->capture_default_str();
  c_train->add_option("--m", train_m, "Subsample size (default: all rows)");
  c_train->add_option("--out-model", model_out, "Model JSON path");
  c_train->add_option("--solver", solver_name, "dual | krr (closed form, q = 2 linear only)")
      ->check(CLI::IsMember({"dual", "krr"}))
      ->capture_default_str();

  // gridsearch
  std::string grid_train, grid_val, grid_gammas = "0.01,0.1,1,10", grid_ms, grid_out;
  unsigned grid_reps = 1;
  auto* c_grid = app.add_subcommand("gridsearch", "Validation MSE over an (m, gamma) grid");
  c_grid->add_option("--train", grid_train, "Training data")->required();
  c_grid->add_option("--val", grid_val, "Validation data")->required();
  add_model_flags(c_grid);
  c_grid->add_option("--gammas", grid_gammas, "Comma-separated gammas")->capture_default_str();
  c_grid->add_option("--ms", grid_ms, "Comma-separated subsample sizes")->required();
  c_grid->add_option("--reps", grid_reps, "Subsamples per (m, gamma)")->capture_default_str();
  c_grid->add_option("--out", grid_out, "Grid table CSV path");

  // features
  std::string feat_model, feat_truth, feat_out;
  auto* c_feat = app.add_subcommand("features", "Threshold the weights of a linear model");
  c_feat->add_option("--model", feat_model, "Model JSON")->required();
  c_feat->add_option("--truth", feat_truth, "Ground-truth JSON (support list)");
  c_feat->add_option("--out", feat_out, "Selection JSON path");

  // bench
  std::size_t bench_n = 10, bench_d = 10;
  std::size_t bench_cap = default_dense_cap;
  std::string bench_layout = "packed", bench_dump;
  auto* c_bench = app.add_subcommand("bench", "Compare packed and dense Gram layouts");
  c_bench->add_option("--n", bench_n, "Points")->capture_default_str();
  c_bench->add_option("--d", bench_d, "Features")->capture_default_str();
  add_model_flags(c_bench);
  c_bench->add_option("--gamma", cfg.gamma, "Regularization for the timed solve")->capture_default_str();
  c_bench->add_option("--layout", bench_layout, "packed | dense | both")
      ->check(CLI::IsMember({"packed", "dense", "both"}))
      ->capture_default_str();
  c_bench->add_option("--cap", bench_cap, "Largest n the dense layout accepts")->capture_default_str();
  c_bench->add_option("--dump", bench_dump, "Write the packed tensor to this file");

  // inspect
  std::string inspect_path;
  auto* c_inspect = app.add_subcommand("inspect", "Summarize a packed tensor dump");
  c_inspect->add_option("--tensor", inspect_path, "Dump file")->required();

  std::ostringstream buffer;
  try {
    args = detail::merge_config(std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return exit_ok;
    }
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }

  if (const char* env = std::getenv("TK_THREADS")) {
    if (auto v = tk::detail::parse_double(env); v && *v >= 0) global.threads = static_cast<std::size_t>(*v);
  }
  set_thread_count(global.threads);
  cfg.seed = global.seed;

  Report config;
  config.set("seed", global.seed).set("threads", thread_count()).set("format", global.format);
  if (!global.output.empty()) config.set("output", global.output);
  Report result;

  bool config_emitted = false;
  auto emit_config = [&](const std::string& command,
                         const std::vector<std::pair<std::string, Report::Json>>& flags) {
    config_emitted = true;
    Report echo;
    echo.set("command", command);
    for (const auto& [k, v] : config.fields().items()) echo.set(k, v);
    for (const auto& [k, v] : flags) echo.set(k, v);
    if (global.format == "json") {
      buffer << Report::Json{{"config", echo.fields()}}.dump() << '\n';
    } else {
      buffer << "# config:";
      for (const auto& [k, v] : echo.fields().items()) buffer << ' ' << k << '=' << Report::scalar(v);
      buffer << '\n';
    }
  };

  int code = exit_ok;
  try {
    if (*c_synth) {
      emit_config("synth", {{"n", synth.n}, {"d", synth.d}, {"s", synth.sparsity}, {"sigma", synth.sigma}, {"out", synth_out}});
      synth.seed = global.seed;
      const Dataset ds = gen_synthetic(synth);
      std::ostringstream csv;
      write_dense_csv(csv, ds);
      detail::write_text(synth_out, csv.str());
      detail::write_text(synth_out + ".truth.json", truth_to_json(*ds.truth).dump() + "\n");
      result.set("rows", ds.size()).set("dim", ds.dim()).set("support", ds.truth->support)
          .set("data", synth_out).set("truth", synth_out + ".truth.json");
    } else if (*c_train) {
      emit_config("train", {{"train", train_path}, {"kernel", kernel_name}, {"q", q}, {"degree", degree},
                            {"gamma", cfg.gamma}, {"m", train_m ? Report::Json(*train_m) : Report::Json("all")},
                            {"iters", cfg.max_iters}, {"rel_tol", cfg.rel_tol}, {"solver", solver_name},
                            {"out_model", model_out}});
      const auto kernel = TensorKernelSpec::parse(kernel_name, q, degree);
      const Dataset train = load_dataset(train_path);
      const std::size_t m = train_m.value_or(train.size());
      const NystromPlan plan = m == train.size() ? full_plan(train.size(), global.seed)
                                                 : nystrom_sample(train.size(), m, global.seed);
      if (m > train.size()) throw InvalidArgumentError("m exceeds the training set size");
      Model model;
      Timing timing;
      if (solver_name == "krr") {
        if (kernel.family() != KernelFamily::linear || q != 2) {
          throw UnsupportedError("the closed-form solver needs the linear kernel with q = 2");
        }
        cfg.validate();
        const auto t0 = std::chrono::steady_clock::now();
        Matrix raw = train.x.select_rows(plan.indices);
        model.kernel = kernel;
        model.standardizer = Standardizer::fit(raw);
        model.retained_points = model.standardizer.apply(raw);
        Vector y;
        for (auto i : plan.indices) y.push_back(train.y[i]);
        model.alpha = krr_closed_form(model.retained_points, y, cfg.gamma);
        model.weights = recover_weights(model.retained_points, model.alpha, 2);
        timing.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.set("iters_run", 0).set("converged", true);
      } else {
        auto fitted = fit_detailed(train.x, train.y, kernel, cfg, plan);
        model = std::move(fitted.model);
        timing = {fitted.gram_stats.seconds, fitted.solution.seconds};
        result.set("iters_run", fitted.solution.iters_run).set("converged", fitted.solution.converged)
            .set("final_objective", fitted.solution.objective_trace.back());
      }
      const auto report = evaluate(model, train, timing);
      result.set("train_mse", report.mse).set("count", report.count)
          .set("gram_build_seconds", timing.gram_build_seconds).set("solve_seconds", timing.solve_seconds);
      if (!model_out.empty()) {
        detail::write_text(model_out, model_to_json(model));
        result.set("model", model_out);
      }
    } else if (*c_grid) {
      emit_config("gridsearch", {{"train", grid_train}, {"val", grid_val}, {"kernel", kernel_name}, {"q", q},
                                 {"degree", degree}, {"gammas", grid_gammas}, {"ms", grid_ms}, {"reps", grid_reps},
                                 {"iters", cfg.max_iters}, {"rel_tol", cfg.rel_tol}, {"out", grid_out}});
      const auto kernel = TensorKernelSpec::parse(kernel_name, q, degree);
      GridSearchOptions opt;
      opt.gammas = detail::parse_list<double>(grid_gammas, "--gammas");
      opt.ms = detail::parse_list<std::size_t>(grid_ms, "--ms");
      opt.repetitions = grid_reps;
      opt.seed = global.seed;
      const Dataset train = load_dataset(grid_train);
      const Dataset val = load_dataset(grid_val);
      const auto rows = grid_search(train, val, kernel, opt, cfg);
      std::ostringstream table;
      write_grid_csv(table, rows);
      if (!grid_out.empty()) detail::write_text(grid_out, table.str());
      const auto best = best_cell(summarize(rows));
      result.set("rows", rows.size()).set("best_m", best.m).set("best_gamma", best.gamma)
          .set("best_val_mse", best.val_mse_mean).set("best_val_mse_std", best.val_mse_std);
      if (!grid_out.empty()) result.set("table", grid_out);
      if (grid_out.empty() && global.format == "csv") {
        result.print(buffer, global.format);
        buffer << table.str();
        result = Report{};
      }
    } else if (*c_feat) {
      emit_config("features", {{"model", feat_model}, {"truth", feat_truth}, {"out", feat_out}});
      const Model model = model_from_json(detail::read_text(feat_model));
      std::optional<std::vector<std::size_t>> truth;
      if (!feat_truth.empty()) truth = load_truth(feat_truth).support;
      const auto sel = select_features(model, truth);
      nlohmann::ordered_json doc;
      doc["threshold"] = sel.threshold;
      doc["mean"] = sel.mean;
      doc["std"] = sel.std;
      doc["degenerate"] = sel.degenerate;
      doc["selected"] = sel.selected;
      doc["weights"] = *model.weights;
      if (truth) {
        doc["truth"] = *truth;
        doc["true_positive"] = *sel.true_positive;
        doc["false_positive"] = *sel.false_positive;
      }
      if (!feat_out.empty()) detail::write_text(feat_out, doc.dump(2) + "\n");
      result.set("threshold", sel.threshold).set("selected", sel.selected).set("degenerate", sel.degenerate);
      if (truth) result.set("true_positive", *sel.true_positive).set("false_positive", *sel.false_positive);
    } else if (*c_bench) {
      emit_config("bench", {{"n", bench_n}, {"d", bench_d}, {"q", q}, {"kernel", kernel_name},
                            {"degree", degree}, {"layout", bench_layout}, {"cap", bench_cap},
                            {"iters", cfg.max_iters}, {"gamma", cfg.gamma}});
      const auto kernel = TensorKernelSpec::parse(kernel_name, q, degree);
      SyntheticSpec spec;
      spec.n = bench_n;
      spec.d = bench_d;
      spec.sparsity = std::min<std::size_t>(5, bench_d);
      spec.seed = global.seed;
      const Dataset ds = gen_synthetic(spec);
      const auto mem = memory_report(bench_n, q);
      result.set("n", bench_n).set("d", bench_d).set("q", q)
          .set("packed_entries", mem.packed_entries).set("dense_entries", mem.dense_entries)
          .set("entry_ratio", static_cast<double>(mem.packed_entries) / mem.dense_entries)
          .set("packed_bytes", mem.packed_bytes).set("dense_bytes", mem.dense_bytes)
          .set("reduction_fraction", mem.reduction_fraction);
      if (bench_layout != "dense") {
        GramBuildStats stats;
        const auto k = build_packed_gram(kernel, ds.x, &stats);
        const auto sol = solve_dual(k, ds.y, cfg);
        result.set("packed_status", "ok").set("packed_evaluations", stats.evaluations)
            .set("packed_build_seconds", stats.seconds).set("packed_solve_seconds", sol.seconds);
        if (!bench_dump.empty()) {
          std::ofstream dump(bench_dump, std::ios::binary);
          if (!dump) throw IoError("cannot open '" + bench_dump + "' for writing");
          write_packed(dump, k);
          result.set("dump", bench_dump);
        }
      }
      if (bench_layout != "packed") {
        try {
          GramBuildStats stats;
          const auto dense = build_dense_gram_matrix(kernel, ds.x, bench_cap, &stats);
          const auto sol = solve_dual_with([&](std::span<const double> a) { return dense.contract(a); }, ds.y, cfg);
          result.set("dense_status", "ok").set("dense_matrix_entries", dense.stored_entries())
              .set("dense_build_seconds", stats.seconds).set("dense_solve_seconds", sol.seconds);
        } catch (const CapacityError& e) {
          result.set("dense_status", "refused").set("dense_error", "capacity").set("dense_message", e.what());
          code = exit_capacity;
        }
      }
    } else if (*c_inspect) {
      emit_config("inspect", {{"tensor", inspect_path}});
      std::ifstream in(inspect_path, std::ios::binary);
      if (!in) throw IoError("cannot open '" + inspect_path + "'");
      const auto k = read_packed(in);
      const auto vals = k.values();
      const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
      result.set("n", k.n()).set("q", k.q()).set("entries", k.size()).set("min", *lo).set("max", *hi)
          .set("first", std::vector<double>(vals.begin(), vals.begin() + std::min<std::size_t>(5, vals.size())));
    }
  } catch (const Error& e) {
    if (!config_emitted) emit_config(app.get_subcommands().front()->get_name(), {});
    result = Report{};
    result.set("error", std::string(kind_name(e.kind()))).set("message", e.what());
    code = exit_code_for(e.kind());
    err << "error: " << e.what() << '\n';
  }

  result.print(buffer, global.format);
  if (global.output.empty()) {
    out << buffer.str();
  } else {
    try {
      detail::write_text(global.output, buffer.str());
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code_for(e.kind());
    }
  }
  return code;
}

}  // namespace tk::cli
