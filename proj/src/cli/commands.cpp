#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "vmp/cli.hpp"
#include "vmp/models.hpp"

namespace vmp::cli {

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kNumerical = 2;
constexpr int kNotConverged = 3;

struct FitFlags {
  std::string spec;
  std::vector<std::string> data;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_sweeps;
  std::optional<double> tolerance;
  std::string broadcast = "on";
  std::optional<std::string> missing_token;
};

Model prepare(const ModelSpec& spec, const FitFlags& flags) {
  if (!flags.data.empty() && flags.data.size() != spec.observe.size()) {
    throw ValidationError("got " + std::to_string(flags.data.size()) + " data files for " +
                          std::to_string(spec.observe.size()) + " observe entries");
  }
  Model model = build_model(spec, flags.broadcast == "on");
  for (std::size_t i = 0; i < spec.observe.size(); ++i) {
    const ObserveSpec& o = spec.observe[i];
    std::filesystem::path path;
    if (!flags.data.empty()) {
      path = flags.data[i];
    } else if (!o.data.empty()) {
      path = spec.base_dir / o.data;
    } else {
      throw ValidationError("observe[" + std::to_string(i) + "]: no data file for \"" + o.node +
                            "\"");
    }
    const std::string token = flags.missing_token.value_or(o.missing_token.value_or("NA"));
    bind_data(model, o.node, load_data_csv(path, token));
  }
  return model;
}

void apply_overrides(EngineSpec& engine, const FitFlags& flags) {
  if (flags.seed) engine.seed = *flags.seed;
  if (flags.max_sweeps) engine.max_sweeps = *flags.max_sweeps;
  if (flags.tolerance) engine.tolerance = *flags.tolerance;
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path);
  if (!file || !(file << text)) throw IoError("cannot write " + path);
}

std::string number(double value) {
  std::ostringstream s;
  s << std::setprecision(17) << value;
  return s.str();
}

int cmd_fit(const FitFlags& flags, std::ostream& out, std::ostream& err) {
  ModelSpec spec = load_model_spec(flags.spec);
  apply_overrides(spec.engine, flags);
  Model model = prepare(spec, flags);
  const FitReport report = fit_model(model, spec.engine);
  write_output(flags.output, posterior_dump(model, report).dump(2) + "\n", out);
  if (!report.converged) {
    err << "not converged after " << report.sweeps << " sweeps\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_validate(const std::string& path, std::ostream& out) {
  const ModelSpec spec = load_model_spec(path);
  build_model(spec);
  out << "OK\n";
  return kOk;
}

int cmd_evaluate(const FitFlags& flags, const std::string& dump_path, std::ostream& out) {
  const ModelSpec spec = load_model_spec(flags.spec);
  Model model = prepare(spec, flags);
  std::ifstream in(dump_path);
  if (!in) throw IoError("cannot read dump file " + dump_path);
  nlohmann::json dump;
  try {
    dump = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON in dump: ") + e.what());
  }
  apply_dump(model, dump);
  out << number(elbo(model.graph)) << "\n";
  return kOk;
}

int cmd_benchmark(const std::string& name, const FitFlags& flags, std::ostream& out,
                  std::ostream& err) {
  const auto config = benchmark_config(name);
  if (!config) {
    std::string known;
    for (const auto& n : benchmark_names()) known += " " + n;
    throw ValidationError("unknown benchmark \"" + name + "\" (known:" + known + ")");
  }
  FitOptions options;
  if (flags.seed) options.seed = *flags.seed;
  if (flags.max_sweeps) options.max_sweeps = *flags.max_sweeps;
  if (flags.tolerance) options.tolerance = *flags.tolerance;

  std::vector<bool> modes;
  if (flags.broadcast != "off") modes.push_back(true);
  if (flags.broadcast != "on") modes.push_back(false);
  std::ostringstream table;
  table << std::left << std::setw(11) << "model" << std::setw(11) << "broadcast" << std::setw(8)
        << "sweeps" << std::setw(11) << "converged" << std::setw(12) << "ms/sweep"
        << "final_elbo\n";
  std::vector<double> medians;
  for (const bool broadcasting : modes) {
    const BenchmarkRow row = run_benchmark(*config, broadcasting, options);
    const FitReport& r = row.report;
    medians.push_back(r.median_ms());
    std::ostringstream ms;
    ms << std::fixed << std::setprecision(3) << r.median_ms();
    table << std::setw(11) << row.name << std::setw(11) << (broadcasting ? "on" : "off")
          << std::setw(8) << r.sweeps << std::setw(11) << (r.converged ? "yes" : "no")
          << std::setw(12) << ms.str() << number(r.elbo_trace.back()) << "\n";
    if (r.sweeps < 10) err << "note: fewer than 10 sweeps; the timing is not reliable\n";
  }
  if (medians.size() == 2 && medians[0] > 0.0) {
    table << "off/on time ratio: " << std::fixed << std::setprecision(2) << medians[1] / medians[0]
          << "\n";
  }
  out << table.str();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variational message passing for conjugate exponential family models", "vmp"};
  app.require_subcommand(1);
  FitFlags flags;
  std::string dump_path;
  std::string benchmark;

  auto add_engine_flags = [&](CLI::App* cmd) {
    cmd->add_option("--seed", flags.seed, "Seed for random initialization and minibatches");
    cmd->add_option("--max-sweeps", flags.max_sweeps, "Maximum number of sweeps")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tol", flags.tolerance, "Relative change of the bound that stops the fit")
        ->check(CLI::PositiveNumber);
  };

  auto* fit = app.add_subcommand("fit", "Fit a model and write its posterior as JSON");
  fit->add_option("spec", flags.spec, "Model spec (JSON)")->required();
  fit->add_option("data", flags.data, "CSV files, one per observe entry, in order");
  fit->add_option("-o,--output", flags.output, "Output file (default: standard output)");
  add_engine_flags(fit);
  fit->add_option("--broadcast", flags.broadcast, "Broadcast elision")
      ->check(CLI::IsMember({"on", "off"}));
  fit->add_option("--missing-token", flags.missing_token, "CSV cell marking a missing value");

  auto* validate = app.add_subcommand("validate", "Check a model spec without fitting");
  validate->add_option("spec", flags.spec, "Model spec (JSON)")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Print the bound of a dumped posterior");
  evaluate->add_option("spec", flags.spec, "Model spec (JSON)")->required();
  evaluate->add_option("dump", dump_path, "Posterior dump written by fit")->required();
  evaluate->add_option("data", flags.data, "CSV files, one per observe entry, in order");
  evaluate->add_option("--missing-token", flags.missing_token, "CSV cell marking a missing value");

  auto* bench = app.add_subcommand("benchmark", "Time a synthetic benchmark model");
  bench->add_option("model", benchmark, "gmm-small, gmm-large, pca-small or pca-large")->required();
  add_engine_flags(bench);
  bench->add_option("--broadcast", flags.broadcast, "Broadcast elision")
      ->check(CLI::IsMember({"on", "off", "both"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*fit) return cmd_fit(flags, out, err);
    if (*validate) return cmd_validate(flags.spec, out);
    if (*evaluate) return cmd_evaluate(flags, dump_path, out);
    return cmd_benchmark(benchmark, flags, out, err);
  } catch (const FitAborted& e) {
    err << "error: fit aborted after " << e.report().sweeps << " sweeps: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

}  // namespace vmp::cli
