// Command-line front end: simulate, analyze, master, constants, verify.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fsim/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "run configuration (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "parent directory for the run directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "override simulation.seed");
}

fsim::RunConfig load(const Common& c) {
  auto cfg = fsim::load_config(c.config);
  if (c.seed) cfg.override_seed(*c.seed);
  return cfg;
}

int report(const fsim::CommandResult& r) {
  std::ostream& os = r.exit_code == fsim::exit_ok ? std::cout : std::cerr;
  if (!r.message.empty()) os << r.message << (r.message.back() == '\n' ? "" : "\n");
  if (!r.dir.empty()) std::cout << r.dir.string() << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial birth-death-fission simulator and analysis tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fsim::library_version);

  Common sim, ana, mas, con, ver;
  std::string run_dir, level = "quick", fault;

  auto* s_sim = app.add_subcommand("simulate", "run an ensemble and write trajectories");
  add_common(s_sim, sim, true);
  auto* s_ana = app.add_subcommand("analyze", "estimator reports for a simulate directory");
  add_common(s_ana, ana, false);
  s_ana->add_option("--run", run_dir, "directory written by simulate")->required();
  auto* s_mas = app.add_subcommand("master", "integrate the truncated master equation");
  add_common(s_mas, mas, true);
  auto* s_con = app.add_subcommand("constants", "domination certificate, time bounds and schedule");
  add_common(s_con, con, true);
  auto* s_ver = app.add_subcommand("verify", "run the oracle suites");
  add_common(s_ver, ver, false);
  s_ver->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}))->capture_default_str();
  s_ver->add_option("--inject-fault", fault, "test fixture: corrupt the generator")
      ->check(CLI::IsMember({"column-sum"}))
      ->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s_sim) return report(fsim::cmd_simulate(load(sim), sim.out));
    if (*s_ana) {
      Common c = ana;
      if (!std::filesystem::is_directory(run_dir))
        throw fsim::Error(fsim::ErrorCode::MissingData, "no run directory at " + run_dir);
      if (c.config.empty()) c.config = (std::filesystem::path(run_dir) / "config.json").string();
      return report(fsim::cmd_analyze(run_dir, load(c), c.out));
    }
    if (*s_mas) return report(fsim::cmd_master(load(mas), mas.out));
    if (*s_con) return report(fsim::cmd_constants(load(con), con.out));
    if (*s_ver) {
      fsim::VerifyOptions opt;
      if (fault == "column-sum")
        opt.generator_hook = [](fsim::GeneratorMatrix& q) { q.raw_entries().front().rate += 0.5; };
      return report(fsim::cmd_verify(level, ver.out, opt));
    }
  } catch (const fsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fsim::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return fsim::exit_internal;
  }
  return fsim::exit_internal;
}
