#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "closer/error.hpp"
#include "closer/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string preset_name;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  auto* cfg = cmd->add_option("--config", flags.config_path, "Experiment config (JSON)")
                  ->check(CLI::ExistingFile);
  cmd->add_option("--preset", flags.preset_name, "Preset: baseline, baseline_rs, closer")
      ->excludes(cfg);
  cmd->add_option("--seed", flags.seed, "Master seed override");
  cmd->add_option("--out", flags.out, "Output directory override");
}

closer::ExperimentConfig resolve(const CommonFlags& flags) {
  closer::ExperimentConfig config;
  if (!flags.config_path.empty()) {
    config = closer::load_config(flags.config_path);
  } else {
    config = closer::preset(flags.preset_name.empty() ? "closer" : flags.preset_name);
  }
  if (flags.seed) config.master_seed = *flags.seed;
  if (!flags.out.empty()) config.output_dir = flags.out;
  config.validate();
  return config;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt(const std::optional<closer::MeanStd>& m) {
  return m ? fmt(m->mean) + " ± " + fmt(m->std) : "-";
}

void print_run(const closer::RunResult& r) {
  const auto& a = r.aggregate;
  std::cout << "config " << r.config_hash << "  preset " << r.config.preset << "  seeds "
            << r.reports.size() << "\n";
  std::cout << "session  A_B              A_N              A_W\n";
  for (std::size_t t = 0; t < a.whole_accuracy.size(); ++t) {
    std::cout << t << "        " << fmt(a.base_accuracy[t]) << "    " << fmt(a.new_accuracy[t])
              << "    " << fmt(a.whole_accuracy[t].mean) << " ± " << fmt(a.whole_accuracy[t].std)
              << "\n";
  }
  std::cout << "PD " << fmt(a.performance_drop) << "  T " << fmt(a.transferability)
            << "  CR drop " << fmt(a.cr_drop.mean) << "\n";
  std::cout << "wrote " << r.config.output_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"closer: few-shot class-incremental learning lab"};
  app.require_subcommand(1);

  CommonFlags run_flags, ablate_flags, validate_flags;
  auto* run_cmd = app.add_subcommand("run", "Train, run the incremental sessions and write reports");
  add_common(run_cmd, run_flags);

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the low-τ × SSC × inter ablation grid");
  add_common(ablate_cmd, ablate_flags);

  auto* validate_cmd = app.add_subcommand("validate-config", "Check a config and print it canonically");
  add_common(validate_cmd, validate_flags);

  std::string export_dir, export_what;
  auto* export_cmd = app.add_subcommand("export", "Rewrite CSV exports of a finished run");
  export_cmd->add_option("what", export_what, "metrics | histograms | features | ib")->required();
  export_cmd->add_option("--out", export_dir, "Run directory")->required();

  std::string ib_dir;
  auto* ib_cmd = app.add_subcommand("ib-eval", "Estimate IB-plane points for a finished run");
  ib_cmd->add_option("--out", ib_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      print_run(closer::run(resolve(run_flags)));
    } else if (*ablate_cmd) {
      const auto config = resolve(ablate_flags);
      const auto rows = closer::ablate(config, closer::AblationGrid{});
      std::cout << "low_tau ssc inter  A_B     A_N     A_W     PD\n";
      for (const auto& row : rows) {
        auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("-"); };
        std::cout << row.low_tau << "       " << row.ssc << "   " << row.inter << "      "
                  << opt(row.base_accuracy) << "   " << opt(row.new_accuracy) << "   "
                  << fmt(row.whole_accuracy) << "   " << opt(row.performance_drop) << "\n";
      }
      std::cout << "wrote " << config.output_dir << "/ablation.csv\n";
    } else if (*validate_cmd) {
      const auto config = resolve(validate_flags);
      std::cout << closer::config_to_json(config) << "\n";
      std::cerr << "config ok, hash " << closer::config_hash(config) << "\n";
    } else if (*export_cmd) {
      for (const auto& p : closer::export_run(export_dir, export_what)) std::cout << p.string() << "\n";
    } else if (*ib_cmd) {
      const auto r = closer::ib_eval(ib_dir);
      for (const auto& rep : r.reports)
        for (const auto& p : rep.ib)
          std::cout << "seed " << rep.seed << "  " << p.group << "  I(X;Z) " << fmt(p.i_xz)
                    << "  I(Y;Z) " << fmt(p.i_yz) << "\n";
    }
  } catch (const closer::Error& e) {
    std::cerr << "error [" << closer::to_string(e.code()) << "] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error " << e.what() << "\n";
    return 1;
  }
  return 0;
}
