#include <dptl/cli.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Common
{
  std::string config;
  std::string out = ".";
  std::size_t threads = 1;
  std::string seed;
  std::string kernel;
  std::string threshold;
};

// Leftover "--key value" or "--key=value" pairs become config overrides, so
// any config key can also be given on the command line.
void apply_overrides(dptl::cli::Config& c, const std::vector<std::string>& extras)
{
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3)
      throw dptl::ConfigError("unexpected argument '" + a + "'");
    auto key = a.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else {
      if (i + 1 >= extras.size())
        throw dptl::ConfigError("option '" + a + "' needs a value");
      value = extras[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    c.set(key, value);
  }
}

dptl::cli::Config load(const Common& opt, const std::vector<std::string>& extras)
{
  auto c = opt.config.empty() ? dptl::cli::Config{} : dptl::cli::Config::from_file(opt.config);
  apply_overrides(c, extras);
  if (!opt.seed.empty())
    c.set("seed", opt.seed);
  if (!opt.kernel.empty())
    c.set("kernel", opt.kernel);
  if (!opt.threshold.empty())
    c.set("threshold_variant", opt.threshold);
  return c;
}

CLI::App* add_command(CLI::App& app, const char* name, const char* help, Common& opt, bool randomized)
{
  auto* sub = app.add_subcommand(name, help);
  sub->allow_extras();
  sub->add_option("--config", opt.config, "key = value parameter file")->check(CLI::ExistingFile);
  sub->add_option("--out", opt.out, "output directory")->capture_default_str();
  if (randomized) {
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--kernel", opt.kernel, "smoothing kernel")
      ->check(CLI::IsMember({ "triangular", "epanechnikov", "gaussian" }));
    sub->add_option("--threshold-variant", opt.threshold, "general threshold form")
      ->check(CLI::IsMember({ "prose", "box" }));
  }
  sub->footer("Any config key may also be passed as --key value.");
  return sub;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Private transfer-learning classifiers: rates, simulations and real-data runs" };
  app.set_version_flag("--version", std::string(dptl::cli::kVersion));
  app.require_subcommand(1);

  Common rates_opt, sim_opt, cls_opt;
  auto* rates = add_command(app, "rates", "excess-risk rate curves and phase boundaries", rates_opt, false);
  auto* sim = add_command(app, "simulate", "simulation sweeps over eps, gamma or m", sim_opt, true);
  auto* cls = add_command(app, "classify", "adaptive classifiers on multi-server CSV data", cls_opt, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    dptl::cli::RunResult res;
    if (rates->parsed()) {
      res = dptl::cli::cmd_rates(load(rates_opt, rates->remaining()), rates_opt.out);
    } else if (sim->parsed()) {
      res = dptl::cli::cmd_simulate(load(sim_opt, sim->remaining()), sim_opt.out, { sim_opt.threads });
    } else {
      res = dptl::cli::cmd_classify(load(cls_opt, cls->remaining()), cls_opt.out, { cls_opt.threads });
    }
    std::cout << "manifest " << res.manifest.hash() << "\n";
    for (const auto& f : res.files)
      std::cout << "wrote " << f.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "dptl: " << e.what() << "\n";
    return dptl::cli::exit_code_for(e);
  }
}
