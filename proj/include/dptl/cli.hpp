#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "adaptive.hpp"
#include "config.hpp"
#include "dataio.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "rates.hpp"
#include "simbench.hpp"

namespace dptl::cli {

//! Settings that do not affect results and stay out of the manifest.
struct RunOptions
{
  std::size_t threads = 1;
};

struct RunResult
{
  Manifest manifest;
  std::vector<std::filesystem::path> files;
};

inline std::string format_number(double v)
{
  if (std::isnan(v))
    return "NA";
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

inline void write_header(std::ostream& out, const Manifest& m, const std::vector<std::string>& notes = {})
{
  out << "# manifest_hash=" << m.hash() << "\n# dptl " << m.version << " " << m.command << "\n";
  for (const auto& n : notes)
    out << "# " << n << "\n";
}

inline std::filesystem::path write_manifest(const std::filesystem::path& dir, const Manifest& m)
{
  const auto path = dir / "manifest.txt";
  auto out = open_output(path);
  out << "# manifest_hash=" << m.hash() << "\n" << m.text();
  return path;
}

inline KernelFamily kernel_from(const Config& c)
{
  const auto name = c.get_string("kernel", "triangular");
  const auto k = parse_kernel_family(name);
  if (!k)
    throw ConfigError("unknown kernel '" + name + "' (triangular, epanechnikov, gaussian)");
  return *k;
}

inline adaptive::SessionOptions session_from(const Config& c)
{
  adaptive::SessionOptions s;
  s.g_max = c.get_double("g_max", 1.0);
  const auto v = c.get_string("threshold_variant", "prose");
  const auto t = adaptive::parse_threshold_variant(v);
  if (!t)
    throw ConfigError("unknown threshold variant '" + v + "' (prose, box)");
  s.threshold = *t;
  if (!(s.g_max > 0.0))
    throw ConfigError("g_max must be positive");
  return s;
}

inline std::vector<sim::Method> methods_from(const Config& c, const std::vector<std::string>& fallback)
{
  std::vector<sim::Method> out;
  for (const auto& name : c.get_strings("methods", fallback)) {
    const auto m = sim::parse_method(name);
    if (!m)
      throw ConfigError("unknown method '" + name + "'");
    out.push_back(*m);
  }
  return out;
}

inline std::string endpoints_field(const std::optional<rates::Endpoints>& e)
{
  if (!e)
    return "";
  return "eps1=" + format_number(e->eps1) + ";eps2=" + format_number(e->eps2) +
         ";eps3=" + format_number(e->eps3) + ";eps11=" + format_number(e->eps11) +
         ";eps21=" + format_number(e->eps21) + ";gamma_star=" + format_number(e->gamma_star);
}

inline void write_rows(std::ostream& out, const std::vector<sim::ResultRow>& rows)
{
  out << "method,eps,gamma,m,n,replicate,accuracy,f1,h_selected,w0_selected\n";
  for (const auto& r : rows)
    out << r.method << ',' << format_number(r.eps) << ',' << format_number(r.gamma) << ',' << r.m << ','
        << r.n << ',' << r.replicate << ',' << format_number(r.accuracy) << ',' << format_number(r.f1)
        << ',' << format_number(r.h_selected) << ',' << format_number(r.w0_selected) << '\n';
}

inline void write_summary(std::ostream& out, const std::vector<sim::SummaryRow>& rows)
{
  out << "method,eps,gamma,m,n,replications,mean_accuracy,se_accuracy,mean_f1,mean_excess_risk,"
         "bayes_gap,mean_h,mean_w0\n";
  for (const auto& r : rows)
    out << r.method << ',' << format_number(r.eps) << ',' << format_number(r.gamma) << ',' << r.m << ','
        << r.n << ',' << r.replications << ',' << format_number(r.mean_accuracy) << ','
        << format_number(r.se_accuracy) << ',' << format_number(r.mean_f1) << ','
        << format_number(r.mean_excess_risk) << ',' << format_number(r.bayes_gap) << ','
        << format_number(r.mean_h) << ',' << format_number(r.mean_w0) << '\n';
}

} // namespace detail

//! Rate-versus-eps curve and phase-diagram boundaries for the homogeneous
//! setting with a common budget on all servers.
//!
//! Keys: n0, m, n, gamma, beta, alpha, d, eps_grid, gamma_grid, delta.
inline RunResult cmd_rates(const Config& c, const std::filesystem::path& out_dir)
{
  rates::HomogeneousParams base;
  base.n0 = c.get_double("n0", 1000);
  base.m = static_cast<double>(c.get_size("m", 4));
  base.n = c.get_double("n", 500);
  base.gamma = c.get_double("gamma", 1.0);
  base.beta = c.get_double("beta", 0.25);
  base.alpha = c.get_double("alpha", 1.0);
  base.d = static_cast<double>(c.get_size("d", 2));
  const auto eps_grid = c.get_doubles("eps_grid", c.get_doubles("eps", {}));
  const auto gamma_grid = c.get_doubles("gamma_grid", { 0.25, 0.5, 1.0, 1.5, 2.0, 4.0 });
  const double delta = c.get_double("delta", 1.0 / (base.n0 * base.n0));
  c.check_all_used();

  std::vector<double> grid = eps_grid;
  if (grid.empty()) {
    for (int i = 0; i <= 200; ++i)
      grid.push_back(std::pow(10.0, -6.0 + 6.0 * i / 200.0));
  }
  auto p = base.general();
  p.eps.assign(p.n.size(), 1.0);
  p.validate();
  if (!(delta > 0.0 && delta < 1.0))
    throw ConfigError("delta must lie in (0, 1)");

  Manifest man{ "rates", c.canonical() };
  std::filesystem::create_directories(out_dir);
  RunResult res{ man, {} };
  res.files.push_back(detail::write_manifest(out_dir, man));

  const double gmin = base.m >= 1 ? std::min(base.gamma, 1.0) : 1.0;
  const double inflate = rates::log_factor(delta, base.beta, base.alpha, gmin, base.d);
  {
    const auto path = out_dir / "rates_curve.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man, { "rates ignore the logarithmic factor; rate_ln_inflated multiplies by "
                                     "log(1/delta)^{beta(1+alpha)/(2 beta (gamma ∧ 1) + d)}, an order bound" });
    out << "epsilon,rate,log_rate,regime,endpoints,rate_solver,rate_ln_inflated\n";
    for (const auto& pt : rates::rate_curve(base, grid)) {
      rates::HomogeneousParams h = base;
      h.eps0 = h.eps = pt.eps;
      const auto sol = rates::solve_rate_equation(h.general());
      out << format_number(pt.eps) << ',' << format_number(pt.rate) << ',' << format_number(pt.log_rate)
          << ',' << rates::to_string(pt.regime) << ',' << detail::endpoints_field(pt.endpoints) << ','
          << format_number(sol.excess_risk) << ',' << format_number(std::min(1.0, pt.rate * inflate)) << '\n';
    }
    res.files.push_back(path);
  }
  {
    const auto path = out_dir / "rates_boundaries.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man);
    out << "gamma,band,eps1,eps2,eps3,eps11,eps21,gamma_star\n";
    const bool in_scope = base.m >= 1 && base.n <= base.n0 && base.n0 <= base.m * base.n;
    if (in_scope) {
      for (double g : gamma_grid) {
        const auto cell = rates::classify_regime(base.n0, base.m, base.n, 1.0, g, base.beta, base.d);
        const auto& e = cell.endpoints;
        out << format_number(g) << ',' << rates::to_string(cell.band) << ',' << format_number(e.eps1) << ','
            << format_number(e.eps2) << ',' << format_number(e.eps3) << ',' << format_number(e.eps11) << ','
            << format_number(e.eps21) << ',' << format_number(e.gamma_star) << '\n';
      }
    }
    res.files.push_back(path);
  }
  return res;
}

//! Simulation sweep. Keys: sweep, values, n, m, gamma, eps, delta,
//! source_total, total_includes_target, replications, test_size, methods,
//! kernel, seed, bayes_samples, h_grid, w_steps, g_max, threshold_variant.
inline sim::SweepSpec sweep_from(const Config& c)
{
  sim::SweepSpec sw;
  auto& s = sw.base;
  const auto var = c.get_string("sweep", "none");
  const auto v = sim::parse_sweep_variable(var);
  if (!v)
    throw ConfigError("unknown sweep variable '" + var + "' (none, eps, gamma, m)");
  sw.variable = *v;
  sw.values = c.get_doubles("values", {});
  s.n = c.get_size("n", 500);
  s.m = c.get_size("m", 1);
  s.gamma = c.get_double("gamma", 1.0);
  s.eps = c.get_double("eps", 1.0);
  s.delta = c.get_optional_double("delta");
  if (auto t = c.get_optional_double("source_total")) {
    if (!(*t >= 1.0) || *t != std::floor(*t))
      throw ConfigError("source_total must be a positive integer");
    s.source_total = static_cast<std::size_t>(*t);
  }
  s.total_includes_target = c.get_bool("total_includes_target", false);
  s.replications = c.get_size("replications", 50);
  s.test_size = c.get_size("test_size", 2000);
  s.methods = detail::methods_from(c, { "DTK", "DT-HIST", "AdaptDTK" });
  s.kernel = detail::kernel_from(c);
  s.seed = c.get_seed("seed", 20240101);
  s.bayes_samples = c.get_size("bayes_samples", 1000000);
  s.oracle.h_grid = c.get_doubles("h_grid", sim::default_oracle_bandwidths());
  s.oracle.w_steps = c.get_size("w_steps", 100);
  s.session = detail::session_from(c);
  for (double h : s.oracle.h_grid)
    if (!(h > 0.0 && h <= 1.0))
      throw ConfigError("h_grid values must lie in (0, 1]");
  if (s.oracle.w_steps < 1)
    throw ConfigError("w_steps must be positive");
  return sw;
}

inline RunResult cmd_simulate(const Config& c, const std::filesystem::path& out_dir, const RunOptions& opt = {})
{
  const auto sw = sweep_from(c);
  c.check_all_used();
  for (const auto& cell : sw.cells())
    cell.validate();

  Manifest man{ "simulate", c.canonical() };
  std::filesystem::create_directories(out_dir);
  RunResult res{ man, {} };
  res.files.push_back(detail::write_manifest(out_dir, man));

  const auto report = sim::run_sweep(sw, opt.threads);
  auto notes = report.notes;
  notes.push_back("bayes_accuracy=" + format_number(report.bayes.mean) + " se=" + format_number(report.bayes.se));
  notes.push_back("h_selected and w0_selected of adaptive methods are averages over test points");
  {
    const auto path = out_dir / "sim_rows.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man, notes);
    detail::write_rows(out, report.rows);
    res.files.push_back(path);
  }
  {
    const auto path = out_dir / "sim_summary.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man, notes);
    detail::write_summary(out, report.summary);
    res.files.push_back(path);
  }
  return res;
}

//! Real-data run. Keys: target, sources (comma list of paths),
//! target_label, source_labels, has_header, delimiter, missing, columns,
//! covariates, label, label_threshold, test_size, eps, delta, replications,
//! methods, kernel, seed, recenter, scale_upper, g_max, threshold_variant.
inline sim::RealDataScenario real_data_from(const Config& c)
{
  sim::RealDataScenario sc;
  const auto target = c.get_string("target", "");
  if (target.empty())
    throw ConfigError("classify needs 'target = <path>'");
  const auto sources = c.get_strings("sources", {});
  const auto target_label = c.get_string("target_label", "target");
  auto source_labels = c.get_strings("source_labels", {});
  if (!source_labels.empty() && source_labels.size() != sources.size())
    throw ConfigError("source_labels needs one entry per source");
  sc.sources.push_back({ target, target_label });
  for (std::size_t k = 0; k < sources.size(); ++k)
    sc.sources.push_back({ sources[k], source_labels.empty() ? "source" + std::to_string(k + 1) : source_labels[k] });

  auto& sch = sc.schema;
  sch.has_header = c.get_bool("has_header", false);
  const auto delim = c.get_string("delimiter", ",");
  if (delim.size() != 1)
    throw ConfigError("delimiter must be a single character");
  sch.delimiter = delim == "\\t" ? '\t' : delim[0];
  sch.missing = c.get_string("missing", "?");
  sch.columns = c.get_strings("columns", io::uci_heart_columns());
  sch.covariates = c.get_strings("covariates", io::heart_covariates());
  sch.label = c.get_string("label", "num");
  sch.label_threshold = c.get_double("label_threshold", 0.0);

  sc.test_size = c.get_size("test_size", 150);
  sc.eps_values = c.get_doubles("eps", { 5.0 });
  sc.delta = c.get_optional_double("delta");
  sc.replications = c.get_size("replications", 50);
  sc.methods = detail::methods_from(c, { "AdaptAll", "AdaptTar", "AdaptSamp", "AdaptHomog" });
  for (auto m : sc.methods)
    if (!sim::is_adaptive(m) || m == sim::Method::AdaptDTK)
      throw ConfigError("classify supports AdaptAll, AdaptTar, AdaptSamp and AdaptHomog");
  sc.kernel = detail::kernel_from(c);
  sc.seed = c.get_seed("seed", 20240101);
  sc.preprocess.recenter = c.get_bool("recenter", true);
  sc.preprocess.upper = c.get_double("scale_upper", 0.5);
  sc.session = detail::session_from(c);
  if (!(sc.preprocess.upper > 0.0 && sc.preprocess.upper <= 1.0))
    throw ConfigError("scale_upper must lie in (0, 1]");
  return sc;
}

inline RunResult cmd_classify(const Config& c, const std::filesystem::path& out_dir, const RunOptions& opt = {})
{
  const auto sc = real_data_from(c);
  c.check_all_used();
  const auto tables = io::load_csv(sc.sources, sc.schema);

  Manifest man{ "classify", c.canonical() };
  std::filesystem::create_directories(out_dir);
  RunResult res{ man, {} };
  res.files.push_back(detail::write_manifest(out_dir, man));

  const auto report = sim::run_real_data(sc, tables, opt.threads);
  auto notes = report.notes;
  notes.push_back("majority_baseline_accuracy=" + format_number(report.majority_baseline));
  for (std::size_t k = 0; k < report.server_labels.size(); ++k)
    notes.push_back("server " + std::to_string(k) + " " + report.server_labels[k] +
                    ": train_size=" + std::to_string(report.train_sizes[k]) +
                    " dropped_rows=" + std::to_string(report.dropped[k]) +
                    " prevalence=" + format_number(report.prevalences[k]));
  {
    const auto path = out_dir / "classify_rows.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man, notes);
    detail::write_rows(out, report.rows);
    res.files.push_back(path);
  }
  {
    const auto path = out_dir / "classify_summary.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man, notes);
    detail::write_summary(out, report.summary);
    res.files.push_back(path);
  }
  {
    const auto path = out_dir / "predictions.csv";
    auto out = detail::open_output(path);
    detail::write_header(out, man);
    out << "method,eps,replicate,test_row,prediction,label\n";
    for (const auto& p : report.predictions)
      out << p.method << ',' << format_number(p.eps) << ',' << p.replicate << ',' << p.row << ','
          << p.label << ',' << p.truth << '\n';
    res.files.push_back(path);
  }
  return res;
}

//! Exit status for an exception escaping a command.
inline int exit_code_for(const std::exception& e) noexcept
{
  if (dynamic_cast<const NumericalError*>(&e))
    return 4;
  if (dynamic_cast<const DataError*>(&e))
    return 3;
  return 2;
}

} // namespace dptl::cli
