// survchart: risk-adjusted survival control charts from the command line.
//
// Subcommands wrap the library one-to-one; every numeric artifact can also be
// emitted as JSON. Exit codes: 0 ok, 2 bad input, 1 runtime failure.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "survchart/survchart.hpp"

using nlohmann::ordered_json;
using namespace survchart;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

unsigned env_workers() {
  const char* v = std::getenv("SURVCHART_WORKERS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  unsigned long n = std::strtoul(v, &end, 10);
  if (end && *end == '\0') return static_cast<unsigned>(n);
  return 0;
}

// --- dataset flags -----------------------------------------------------

struct DataOpts {
  std::string path;
  std::string col_entry = "entrytime", col_surv = "survtime";
  std::string col_censor = "censorid", col_unit = "unit";
  std::vector<std::string> covariates; // empty = every non-role column
  CLI::Option* opt_path = nullptr;

  void attach(CLI::App* cmd, const std::string& flag, const std::string& help, bool required) {
    opt_path = cmd->add_option(flag, path, help);
    if (required) opt_path->required();
    cmd->add_option("--col-entry", col_entry, "entry time column name");
    cmd->add_option("--col-surv", col_surv, "survival time column name");
    cmd->add_option("--col-censor", col_censor, "censoring indicator column name");
    cmd->add_option("--col-unit", col_unit, "unit label column name");
    cmd->add_option("--covariates", covariates,
                    "comma-separated covariate columns (default: all other columns)")
        ->delimiter(',');
  }

  Dataset load_from(const std::string& p) const {
    std::string text = read_file(p);
    Schema schema;
    schema.entrytime = col_entry;
    schema.survtime = col_surv;
    schema.censorid = col_censor;
    schema.unit = col_unit;
    if (!covariates.empty()) {
      schema.covariates = covariates;
    } else {
      std::istringstream probe(text);
      csv::Table t = csv::read(probe);
      for (const auto& name : t.header)
        if (name != col_entry && name != col_surv && name != col_censor && name != col_unit)
          schema.covariates.push_back(name);
    }
    std::istringstream in(text);
    try {
      return parse_dataset(in, schema);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(p + ": " + e.what());
    }
  }

  Dataset load() const { return load_from(path); }
};

Dataset select_unit(Dataset d, const std::string& unit) {
  if (!unit.empty()) {
    Dataset s = d.subset_unit(unit);
    if (s.records.empty()) throw std::invalid_argument("unit '" + unit + "' has no records");
    return s;
  }
  auto us = d.units();
  if (us.size() > 1)
    throw std::invalid_argument("data contains " + std::to_string(us.size()) +
                                " units; pass --unit to pick one");
  return d;
}

// --- model / bundle loading --------------------------------------------

AnyModel load_model(const std::string& path) {
  ordered_json j = ordered_json::parse(read_file(path));
  try {
    return model_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

struct BundleFile {
  std::string data_path, baseline_path;
  std::optional<AnyModel> glm, cox;
  std::optional<double> theta, psi, time, alpha, maxtheta, followup, p0;
};

BundleFile load_bundle(const std::string& path) {
  ordered_json j = ordered_json::parse(read_file(path));
  if (!j.is_object()) throw std::invalid_argument(path + ": assist bundle must be a JSON object");
  BundleFile out;
  auto num = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_number()) throw std::invalid_argument(path + ": field '" + key + "' must be a number");
    return j[key].get<double>();
  };
  if (j.contains("data") && j["data"].is_string()) out.data_path = j["data"].get<std::string>();
  if (j.contains("baseline_data") && j["baseline_data"].is_string())
    out.baseline_path = j["baseline_data"].get<std::string>();
  out.theta = num("theta");
  out.psi = num("psi");
  out.time = num("time");
  out.alpha = num("alpha");
  out.maxtheta = num("maxtheta");
  out.followup = num("followup");
  out.p0 = num("p0");
  if (j.contains("glmmod") && !j["glmmod"].is_null()) out.glm = model_from_json(j["glmmod"]);
  if (j.contains("coxphmod") && !j["coxphmod"].is_null()) out.cox = model_from_json(j["coxphmod"]);
  return out;
}

// --- output plumbing ----------------------------------------------------

void emit_json_artifact(const ordered_json& j, const std::string& out_path, bool json_stdout,
                        const std::string& human_summary) {
  if (!out_path.empty()) write_file(out_path, j.dump(2) + "\n");
  if (json_stdout)
    std::cout << j.dump(2) << "\n";
  else if (!human_summary.empty())
    std::cout << human_summary;
}

std::string chart_summary(const Chart& c) {
  std::ostringstream ss;
  ss << chart_kind_name(c.kind) << " chart: " << c.points.size() << " points";
  if (!c.points.empty()) {
    double ext = chart_max(c, c.start_time, c.points.back().t);
    ss << ", final value " << csv::format_double(c.points.back().value) << ", extremum "
       << csv::format_double(ext);
  }
  if (c.h) {
    double rl = runlength(c, *c.h);
    if (std::isinf(rl))
      ss << ", no signal at h=" << csv::format_double(*c.h);
    else
      ss << ", signal after " << csv::format_double(rl) << " time units";
  }
  ss << "\n";
  return ss.str();
}

void emit_chart(const Chart& c, const std::string& out_path, bool json_stdout) {
  if (!out_path.empty()) {
    std::ostringstream ss;
    if (ends_with(out_path, ".json"))
      ss << chart_to_json(c).dump(2) << "\n";
    else
      chart_to_csv(c, ss);
    write_file(out_path, ss.str());
  }
  if (json_stdout)
    std::cout << chart_to_json(c).dump(2) << "\n";
  else
    std::cout << chart_summary(c);
}

void emit_chart(const ChartPair& pair, const std::string& out_path, bool json_stdout) {
  if (!out_path.empty()) {
    std::ostringstream ss;
    if (ends_with(out_path, ".json"))
      ss << chart_to_json(pair).dump(2) << "\n";
    else
      chart_to_csv(pair, ss);
    write_file(out_path, ss.str());
  }
  if (json_stdout) {
    std::cout << chart_to_json(pair).dump(2) << "\n";
  } else {
    std::cout << "upper " << chart_summary(pair.upper) << "lower " << chart_summary(pair.lower);
    if (pair.upper.h && pair.lower.h) {
      double rl = runlength(pair, *pair.upper.h, *pair.lower.h);
      if (std::isinf(rl))
        std::cout << "no two-sided signal\n";
      else
        std::cout << "two-sided signal after " << csv::format_double(rl) << " time units\n";
    }
  }
}

// Present-or-default plumbing for flags that can fall back to a bundle value.
double pick_required(const CLI::Option* opt, double flag_value, const std::optional<double>& fallback,
                     const char* what) {
  if (opt->count()) return flag_value;
  if (fallback) return *fallback;
  throw std::invalid_argument(std::string(what) + " required (flag or --assist bundle)");
}

std::optional<double> pick_optional(const CLI::Option* opt, double flag_value,
                                    const std::optional<double>& fallback) {
  if (opt->count()) return flag_value;
  return fallback;
}

// --- assist -------------------------------------------------------------

struct AssistCmd {
  DataOpts base, data;
  std::vector<std::string> covariates;
  double followup = 0, theta = 0, time = 0, alpha = 0, maxtheta = 0;
  CLI::Option *o_followup = nullptr, *o_theta = nullptr, *o_time = nullptr, *o_alpha = nullptr,
              *o_maxtheta = nullptr;
  std::string out;
  bool json = false;
};

ordered_json bundle_to_json(const std::string& call, const std::string& data_path,
                            const std::string& baseline_path, const AssistBundle& b) {
  ordered_json j = ordered_json::object();
  j["call"] = call;
  j["data"] = data_path;
  j["baseline_data"] = baseline_path;
  j["glmmod"] = b.glm ? model_to_json(AnyModel{*b.glm}) : ordered_json(nullptr);
  j["coxphmod"] = b.cox ? model_to_json(AnyModel{*b.cox}) : ordered_json(nullptr);
  j["theta"] = b.theta;
  j["psi"] = b.psi;
  j["time"] = b.time;
  j["alpha"] = b.alpha;
  j["maxtheta"] = b.maxtheta;
  j["followup"] = b.followup ? ordered_json(*b.followup) : ordered_json(nullptr);
  j["p0"] = b.p0 ? ordered_json(*b.p0) : ordered_json(nullptr);
  return j;
}

void run_assist(const AssistCmd& c, const std::string& call) {
  Dataset baseline = c.base.load();
  Dataset monitored = c.data.load();
  AssistOptions o;
  o.covariates = c.covariates;
  if (c.o_followup->count()) o.followup = c.followup;
  if (c.o_theta->count()) o.theta = c.theta;
  if (c.o_time->count()) o.time = c.time;
  if (c.o_alpha->count()) o.alpha = c.alpha;
  if (c.o_maxtheta->count()) o.maxtheta = c.maxtheta;
  AssistBundle b = parameter_assist(baseline, monitored, o);

  ordered_json j = bundle_to_json(call, c.data.path, c.base.path, b);
  std::ostringstream human;
  human << "theta    = " << csv::format_double(b.theta) << "\n"
        << "psi      = " << csv::format_double(b.psi) << "\n"
        << "time     = " << csv::format_double(b.time) << "\n"
        << "alpha    = " << csv::format_double(b.alpha) << "\n"
        << "maxtheta = " << csv::format_double(b.maxtheta) << "\n"
        << "followup = " << (b.followup ? csv::format_double(*b.followup) : "none") << "\n"
        << "p0       = " << (b.p0 ? csv::format_double(*b.p0) : "none") << "\n"
        << "glm      = " << (b.glm ? "fitted" : "none") << "\n"
        << "cox      = " << (b.cox ? "fitted" : "none") << "\n";
  if (!c.out.empty()) human << "bundle written to " << c.out << "\n";
  emit_json_artifact(j, c.out, c.json, human.str());
}

// --- fit-glm / fit-cox ---------------------------------------------------

struct FitCmd {
  DataOpts data;
  std::vector<std::string> fit_covariates;
  double followup = 0;
  std::string out;
  bool json = false;
};

std::string coef_table(const NamedCoefs& coefs, std::optional<double> intercept) {
  std::ostringstream ss;
  if (intercept) ss << "(intercept) " << csv::format_double(*intercept) << "\n";
  for (const auto& [name, value] : coefs) ss << name << " " << csv::format_double(value) << "\n";
  return ss.str();
}

void run_fit_glm(const FitCmd& c) {
  Dataset d = c.data.load();
  std::vector<std::string> covs = c.fit_covariates.empty() ? d.covariate_names : c.fit_covariates;
  LogisticModel m = fit_logistic(d, covs, c.followup);
  ordered_json j = model_to_json(AnyModel{m});
  std::ostringstream human;
  human << coef_table(m.coefficients, m.intercept)
        << "p0_marginal " << csv::format_double(m.p0_marginal) << "\n";
  if (!c.out.empty()) human << "model written to " << c.out << "\n";
  emit_json_artifact(j, c.out, c.json, human.str());
}

void run_fit_cox(const FitCmd& c) {
  Dataset d = c.data.load();
  std::vector<std::string> covs = c.fit_covariates.empty() ? d.covariate_names : c.fit_covariates;
  CoxModel m = fit_coxph(d, covs);
  ordered_json j = model_to_json(AnyModel{m});
  std::ostringstream human;
  human << coef_table(m.coefficients, std::nullopt)
        << "baseline steps " << m.baseline.table.times.size() << "\n";
  if (!c.out.empty()) human << "model written to " << c.out << "\n";
  emit_json_artifact(j, c.out, c.json, human.str());
}

// --- funnel ---------------------------------------------------------------

struct FunnelCmd {
  DataOpts data;
  std::string model_path, assist_path, out, plot_out;
  double followup = 0, ctime = 0, p0 = 0;
  CLI::Option *o_followup = nullptr, *o_ctime = nullptr, *o_p0 = nullptr;
  std::vector<double> conflevs = {0.95, 0.99};
  bool json = false;
};

LogisticModel funnel_model_from(const AnyModel& m, double followup) {
  if (const auto* g = std::get_if<LogisticModel>(&m)) return *g;
  if (const auto* mm = std::get_if<ManualModel>(&m)) {
    if (!mm->intercept)
      throw std::invalid_argument("funnel: a manual model needs an intercept");
    LogisticModel g;
    g.intercept = *mm->intercept;
    g.coefficients = mm->coefficients;
    g.followup = followup;
    g.converged = true;
    g.p0_marginal = std::numeric_limits<double>::quiet_NaN();
    return g;
  }
  throw std::invalid_argument("funnel: model must be logistic or manual with an intercept");
}

void run_funnel(const FunnelCmd& c) {
  std::optional<BundleFile> bundle;
  if (!c.assist_path.empty()) bundle = load_bundle(c.assist_path);

  std::string data_path = c.data.opt_path->count() ? c.data.path
                          : bundle && !bundle->data_path.empty()
                              ? bundle->data_path
                              : throw std::invalid_argument("--data required");
  Dataset d = c.data.load_from(data_path);

  double followup = pick_required(c.o_followup, c.followup, bundle ? bundle->followup : std::nullopt,
                                  "--followup");
  std::optional<LogisticModel> glm;
  if (!c.model_path.empty())
    glm = funnel_model_from(load_model(c.model_path), followup);
  else if (bundle && bundle->glm)
    glm = funnel_model_from(*bundle->glm, followup);

  std::optional<double> ctime = c.o_ctime->count() ? std::optional<double>(c.ctime) : std::nullopt;
  std::optional<double> p0 = c.o_p0->count() ? std::optional<double>(c.p0) : std::nullopt;
  FunnelSummary s = funnel_summary(d, glm, followup, ctime, p0, c.conflevs);

  if (!c.plot_out.empty()) {
    std::ostringstream ss;
    funnel_plot_data_csv(s, ss);
    write_file(c.plot_out, ss.str());
  }
  std::ostringstream csv_text;
  funnel_to_csv(s, csv_text);
  if (!c.out.empty()) write_file(c.out, csv_text.str());

  if (c.json) {
    ordered_json j = ordered_json::object();
    j["p0"] = s.p0;
    j["conflevs"] = s.conflevs;
    ordered_json rows = ordered_json::array();
    for (const auto& row : s.rows) {
      ordered_json r = ordered_json::object();
      r["unit"] = row.unit;
      r["observed"] = row.observed;
      r["expected"] = row.expected;
      r["numtotal"] = row.numtotal;
      r["p"] = row.p;
      ordered_json cls = ordered_json::object();
      for (std::size_t i = 0; i < s.conflevs.size(); ++i)
        cls[csv::format_double(s.conflevs[i])] = row.classification[i];
      r["classification"] = cls;
      rows.push_back(r);
    }
    j["rows"] = rows;
    std::cout << j.dump(2) << "\n";
  } else if (c.out.empty()) {
    std::cout << csv_text.str();
  } else {
    std::cout << "funnel written to " << c.out << "\n";
  }
}

// --- chart subcommands ------------------------------------------------------

struct ChartCmd {
  DataOpts data;
  std::string unit, model_path, assist_path, out;
  double theta = 0, p0 = 0, p1 = 0, followup = 0, h = 0, stoptime = 0, maxtheta = 0;
  CLI::Option *o_theta = nullptr, *o_p0 = nullptr, *o_p1 = nullptr, *o_followup = nullptr,
              *o_h = nullptr, *o_stoptime = nullptr, *o_maxtheta = nullptr;
  bool twosided = false, json = false;
  std::string method = "matrix";
  unsigned workers = 0;
  CLI::Option* o_workers = nullptr;
};

Dataset chart_data(const ChartCmd& c, const std::optional<BundleFile>& bundle) {
  std::string path = c.data.opt_path->count() ? c.data.path
                     : bundle && !bundle->data_path.empty()
                         ? bundle->data_path
                         : throw std::invalid_argument("--data required");
  return select_unit(c.data.load_from(path), c.unit);
}

std::optional<double> opt_flag(const CLI::Option* o, double v) {
  return o->count() ? std::optional<double>(v) : std::nullopt;
}

void run_bernoulli(const ChartCmd& c) {
  std::optional<BundleFile> bundle;
  if (!c.assist_path.empty()) bundle = load_bundle(c.assist_path);
  Dataset d = chart_data(c, bundle);

  BernoulliSpec spec;
  if (!c.model_path.empty())
    spec.model = load_model(c.model_path);
  else if (bundle && bundle->glm)
    spec.model = bundle->glm;
  if (c.o_p0->count()) {
    spec.p0 = c.p0;
    spec.model.reset(); // explicit p0 supersedes a bundled risk model
  } else if (!spec.model && bundle) {
    spec.p0 = bundle->p0;
  }
  if (c.o_p1->count()) spec.p1 = c.p1;
  if (c.o_theta->count())
    spec.theta = c.theta;
  else if (!c.o_p1->count() && bundle)
    spec.theta = bundle->theta;
  spec.followup = pick_optional(c.o_followup, c.followup, bundle ? bundle->followup : std::nullopt);

  Chart chart = bernoulli_cusum(d, spec, opt_flag(c.o_stoptime, c.stoptime), opt_flag(c.o_h, c.h));
  emit_chart(chart, c.out, c.json);
}

AnyModel hazard_model_for(const ChartCmd& c, const std::optional<BundleFile>& bundle,
                          const char* chart_name) {
  if (!c.model_path.empty()) return load_model(c.model_path);
  if (bundle && bundle->cox) return *bundle->cox;
  throw std::invalid_argument(std::string(chart_name) +
                              ": provide --model or an --assist bundle with a fitted cox model");
}

void run_bk(const ChartCmd& c) {
  std::optional<BundleFile> bundle;
  if (!c.assist_path.empty()) bundle = load_bundle(c.assist_path);
  Dataset d = chart_data(c, bundle);

  BKSpec spec;
  spec.model = hazard_model_for(c, bundle, "bk");
  spec.theta1 = pick_required(c.o_theta, c.theta, bundle ? bundle->theta : std::nullopt, "--theta");
  spec.C = opt_flag(c.o_followup, c.followup);
  spec.stoptime = opt_flag(c.o_stoptime, c.stoptime);
  if (c.twosided) {
    spec.twosided = true;
    ChartPair pair = bk_cusum_twosided(d, spec, opt_flag(c.o_h, c.h));
    emit_chart(pair, c.out, c.json);
  } else {
    Chart chart = bk_cusum(d, spec, opt_flag(c.o_h, c.h));
    emit_chart(chart, c.out, c.json);
  }
}

void run_cgr(const ChartCmd& c) {
  std::optional<BundleFile> bundle;
  if (!c.assist_path.empty()) bundle = load_bundle(c.assist_path);
  Dataset d = chart_data(c, bundle);

  CGRSpec spec;
  spec.model = hazard_model_for(c, bundle, "cgr");
  spec.maxtheta =
      pick_required(c.o_maxtheta, c.maxtheta, bundle && bundle->maxtheta ? bundle->maxtheta
                                                                         : std::optional<double>(6.0),
                    "--maxtheta");
  spec.C = opt_flag(c.o_followup, c.followup);
  spec.stoptime = opt_flag(c.o_stoptime, c.stoptime);
  if (c.method == "matrix")
    spec.method = CgrMethod::matrix;
  else if (c.method == "rescan")
    spec.method = CgrMethod::rescan;
  else
    throw std::invalid_argument("cgr: --method must be matrix or rescan");
  unsigned workers = c.o_workers->count() ? c.workers : env_workers();
  Chart chart = cgr_cusum(d, spec, opt_flag(c.o_h, c.h), workers ? workers : default_workers());
  emit_chart(chart, c.out, c.json);
}

// --- control-limit ------------------------------------------------------

struct ClCmd {
  std::string kind;
  DataOpts baseline;
  std::string model_path, assist_path, out;
  double time = 0, alpha = 0, psi = 0, theta = 0, p0 = 0, p1 = 0, followup = 0, maxtheta = 0;
  CLI::Option *o_time = nullptr, *o_alpha = nullptr, *o_psi = nullptr, *o_theta = nullptr,
              *o_p0 = nullptr, *o_p1 = nullptr, *o_followup = nullptr, *o_maxtheta = nullptr;
  std::size_t n_sim = 0;
  int h_precision = 2;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  CLI::Option* o_workers = nullptr;
  bool progress = false, json = false;
};

void run_control_limit(const ClCmd& c) {
  MonitorKind kind = monitor_kind_from_name(c.kind);
  std::optional<BundleFile> bundle;
  if (!c.assist_path.empty()) bundle = load_bundle(c.assist_path);

  SimConfig cfg;
  cfg.time = pick_required(c.o_time, c.time, bundle ? bundle->time : std::nullopt, "--time");
  cfg.psi = pick_required(c.o_psi, c.psi, bundle ? bundle->psi : std::nullopt, "--psi");
  cfg.alpha = c.o_alpha->count() ? c.alpha
              : bundle && bundle->alpha ? *bundle->alpha
                                        : 0.05;
  cfg.n_sim = c.n_sim;
  cfg.h_precision = c.h_precision;
  cfg.seed = c.seed;
  cfg.maxtheta = c.o_maxtheta->count() ? c.maxtheta
                 : bundle && bundle->maxtheta ? *bundle->maxtheta
                                              : 6.0;

  if (!c.model_path.empty())
    cfg.model = load_model(c.model_path);
  else if (bundle)
    cfg.model = kind == MonitorKind::bernoulli ? bundle->glm : bundle->cox;

  if (c.o_p0->count()) {
    cfg.p0 = c.p0;
    if (kind == MonitorKind::bernoulli && c.model_path.empty()) cfg.model.reset();
  }
  if (c.o_p1->count()) cfg.p1 = c.p1;
  if (c.o_theta->count())
    cfg.theta = c.theta;
  else if (kind != MonitorKind::cgr && !c.o_p1->count() && bundle)
    cfg.theta = bundle->theta;

  if (kind == MonitorKind::bernoulli)
    cfg.followup = pick_optional(c.o_followup, c.followup, bundle ? bundle->followup : std::nullopt);
  else
    cfg.followup = opt_flag(c.o_followup, c.followup); // truncation is opt-in for bk/cgr

  std::string baseline_path = c.baseline.opt_path->count() ? c.baseline.path
                              : bundle && !bundle->baseline_path.empty()
                                  ? bundle->baseline_path
                                  : throw std::invalid_argument("--baseline required");
  cfg.baseline_data = c.baseline.load_from(baseline_path);

  std::size_t effective_n = cfg.n_sim ? cfg.n_sim : default_n_sim(kind);
  if (kind == MonitorKind::cgr && effective_n < 50)
    std::cerr << "warning: n_sim=" << effective_n
              << " gives a rough cgr limit; consider --n-sim 100 or more\n";

  ProgressFn progress;
  std::mutex progress_mu;
  if (c.progress)
    progress = [&](std::size_t done, std::size_t total) {
      std::lock_guard<std::mutex> lock(progress_mu);
      std::cerr << "\rsimulated " << done << "/" << total << std::flush;
      if (done == total) std::cerr << "\n";
    };

  unsigned workers = c.o_workers->count() ? c.workers : env_workers();
  ControlLimitResult r = control_limit(kind, cfg, workers, progress);

  ordered_json j = control_limit_to_json(r);
  std::ostringstream human;
  human << "h = " << csv::format_double(r.h) << "\n"
        << "achieved alpha = " << csv::format_double(r.achieved_alpha) << " (target "
        << csv::format_double(r.alpha) << ", n_sim " << r.n_sim << ")\n";
  if (!c.out.empty()) human << "result written to " << c.out << "\n";
  emit_json_artifact(j, c.out, c.json, human.str());
}

// --- simulate --------------------------------------------------------------

struct SimulateCmd {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t n_units = 45;
  std::vector<double> psi_levels = {0.5, 1.0, 1.5};
  double horizon = 730, rate = 0.01, theta_sd = 0.4, followup_cap = 0;
  CLI::Option* o_cap = nullptr;
  unsigned workers = 0;
  CLI::Option* o_workers = nullptr;
  bool json = false;
};

void run_simulate(const SimulateCmd& c) {
  GenConfig cfg;
  cfg.n_units = c.n_units;
  cfg.psi_levels = c.psi_levels;
  cfg.entry_horizon = c.horizon;
  cfg.baseline_rate = c.rate;
  cfg.theta_sd = c.theta_sd;
  if (c.o_cap->count()) cfg.followup_cap = c.followup_cap;
  cfg.seed = c.seed;
  unsigned workers = c.o_workers->count() ? c.workers : env_workers();
  Dataset d = generate_surgery_data(cfg, workers);
  std::ostringstream ss;
  write_csv(d, ss);
  write_file(c.out, ss.str());
  if (c.json) {
    ordered_json j = ordered_json::object();
    j["path"] = c.out;
    j["records"] = d.records.size();
    j["units"] = d.units().size();
    j["seed"] = c.seed;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "wrote " << d.records.size() << " records for " << d.units().size()
              << " units to " << c.out << "\n";
  }
}

// --- runlength / plot -------------------------------------------------------

struct RunlengthCmd {
  std::string chart_path, kind;
  double h = 0;
  bool json = false;
};

void run_runlength(const RunlengthCmd& c) {
  std::optional<ChartKind> kind;
  if (!c.kind.empty()) kind = chart_kind_from_name(c.kind);
  std::istringstream in(read_file(c.chart_path));
  Chart chart = chart_from_csv(in, kind);
  double rl = runlength(chart, c.h);
  if (c.json) {
    ordered_json j = ordered_json::object();
    j["h"] = c.h;
    j["runlength"] = std::isinf(rl) ? ordered_json("inf") : ordered_json(rl);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << (std::isinf(rl) ? std::string("inf") : csv::format_double(rl)) << "\n";
  }
}

struct PlotCmd {
  std::string chart_path, kind, out;
  double h = 0;
  CLI::Option* o_h = nullptr;
};

void run_plot(const PlotCmd& c) {
  std::optional<ChartKind> kind;
  if (!c.kind.empty()) kind = chart_kind_from_name(c.kind);
  std::istringstream in(read_file(c.chart_path));
  Chart chart = chart_from_csv(in, kind);
  std::string out = c.out.empty() ? c.chart_path + ".svg" : c.out;
  write_file(out, chart_svg(chart, opt_flag(c.o_h, c.h)));
  std::cout << "plot written to " << out << "\n";
}

} // namespace

int main(int argc, char** argv) {
  std::string call;
  for (int i = 0; i < argc; ++i) {
    if (i) call += ' ';
    call += argv[i];
  }

  CLI::App app{"risk-adjusted survival control charts"};
  app.require_subcommand(1);

  // assist
  auto assist = std::make_shared<AssistCmd>();
  {
    CLI::App* cmd = app.add_subcommand("assist", "suggest chart parameters from baseline data");
    assist->base.attach(cmd, "--baseline", "baseline (in-control) dataset CSV", true);
    assist->data.attach(cmd, "--data", "dataset to monitor", true);
    cmd->add_option("--covariates", assist->covariates,
                    "covariates for risk models (omit for no risk adjustment)")
        ->delimiter(',');
    assist->o_followup = cmd->add_option("--followup", assist->followup,
                                         "outcome window (needed for discrete-time charts)");
    assist->o_theta = cmd->add_option("--theta", assist->theta, "log hazard/odds ratio to detect");
    assist->o_time = cmd->add_option("--time", assist->time, "monitoring horizon");
    assist->o_alpha = cmd->add_option("--alpha", assist->alpha, "target type-I error");
    assist->o_maxtheta = cmd->add_option("--maxtheta", assist->maxtheta, "cgr estimate cap");
    cmd->add_option("--out", assist->out, "write the bundle JSON here");
    cmd->add_flag("--json", assist->json, "print the bundle JSON to stdout");
    cmd->callback([assist, &call] { run_assist(*assist, call); });
  }

  // fit-glm / fit-cox
  auto fglm = std::make_shared<FitCmd>();
  {
    CLI::App* cmd = app.add_subcommand("fit-glm", "fit a logistic risk model");
    fglm->data.attach(cmd, "--data", "training dataset CSV", true);
    cmd->add_option("--fit-covariates", fglm->fit_covariates,
                    "model terms (default: the dataset's covariate columns)")
        ->delimiter(',');
    cmd->add_option("--followup", fglm->followup, "outcome window")->required();
    cmd->add_option("--out", fglm->out, "write model JSON here");
    cmd->add_flag("--json", fglm->json, "print model JSON to stdout");
    cmd->callback([fglm] { run_fit_glm(*fglm); });
  }
  auto fcox = std::make_shared<FitCmd>();
  {
    CLI::App* cmd = app.add_subcommand("fit-cox", "fit a cox risk model");
    fcox->data.attach(cmd, "--data", "training dataset CSV", true);
    cmd->add_option("--fit-covariates", fcox->fit_covariates,
                    "model terms (default: the dataset's covariate columns)")
        ->delimiter(',');
    cmd->add_option("--out", fcox->out, "write model JSON here");
    cmd->add_flag("--json", fcox->json, "print model JSON to stdout");
    cmd->callback([fcox] { run_fit_cox(*fcox); });
  }

  // funnel
  auto funnel = std::make_shared<FunnelCmd>();
  {
    CLI::App* cmd = app.add_subcommand("funnel", "funnel comparison of units");
    funnel->data.attach(cmd, "--data", "dataset CSV", false);
    cmd->add_option("--model", funnel->model_path, "logistic model JSON for risk adjustment");
    cmd->add_option("--assist", funnel->assist_path, "assist bundle JSON");
    funnel->o_followup = cmd->add_option("--followup", funnel->followup, "outcome window");
    funnel->o_ctime = cmd->add_option("--ctime", funnel->ctime, "evaluate at this chronological time");
    funnel->o_p0 = cmd->add_option("--p0", funnel->p0, "override the baseline failure proportion");
    cmd->add_option("--conflev", funnel->conflevs, "confidence levels")->delimiter(',');
    cmd->add_option("--out", funnel->out, "write summary CSV here");
    cmd->add_option("--plot-out", funnel->plot_out, "write point/bound plot data CSV here");
    cmd->add_flag("--json", funnel->json, "print rows as JSON");
    cmd->callback([funnel] { run_funnel(*funnel); });
  }

  auto add_chart_common = [](CLI::App* cmd, ChartCmd& c, bool required_data) {
    c.data.attach(cmd, "--data", "dataset CSV", required_data);
    cmd->add_option("--unit", c.unit, "restrict to one unit");
    cmd->add_option("--model", c.model_path, "risk model JSON");
    cmd->add_option("--assist", c.assist_path, "assist bundle JSON");
    c.o_h = cmd->add_option("--h", c.h, "control limit (early-stops the chart)");
    c.o_stoptime = cmd->add_option("--stoptime", c.stoptime, "truncate the chart at this time");
    cmd->add_option("--out", c.out, "write chart CSV (or .json) here");
    cmd->add_flag("--json", c.json, "print chart JSON to stdout");
  };

  // bernoulli
  auto bern = std::make_shared<ChartCmd>();
  {
    CLI::App* cmd = app.add_subcommand("bernoulli", "risk-adjusted bernoulli cusum");
    add_chart_common(cmd, *bern, false);
    bern->o_theta = cmd->add_option("--theta", bern->theta, "log odds ratio to detect");
    bern->o_p0 = cmd->add_option("--p0", bern->p0, "in-control failure probability");
    bern->o_p1 = cmd->add_option("--p1", bern->p1, "out-of-control failure probability");
    bern->o_followup = cmd->add_option("--followup", bern->followup, "outcome window");
    cmd->callback([bern] { run_bernoulli(*bern); });
  }

  // bk
  auto bk = std::make_shared<ChartCmd>();
  {
    CLI::App* cmd = app.add_subcommand("bk", "bk cusum for a prespecified hazard ratio");
    add_chart_common(cmd, *bk, false);
    bk->o_theta = cmd->add_option("--theta", bk->theta, "log hazard ratio to detect");
    bk->o_followup = cmd->add_option("--followup", bk->followup, "truncate each subject's window");
    cmd->add_flag("--twosided", bk->twosided, "build the +/- pair");
    cmd->callback([bk] { run_bk(*bk); });
  }

  // cgr
  auto cgr = std::make_shared<ChartCmd>();
  {
    CLI::App* cmd = app.add_subcommand("cgr", "cgr cusum with estimated hazard ratio");
    add_chart_common(cmd, *cgr, false);
    cgr->o_maxtheta = cmd->add_option("--maxtheta", cgr->maxtheta, "cap on the estimated hazard ratio");
    cgr->o_followup = cmd->add_option("--followup", cgr->followup, "truncate each subject's window");
    cmd->add_option("--method", cgr->method, "matrix or rescan");
    cgr->o_workers = cmd->add_option("--workers", cgr->workers, "worker threads (0 = auto)");
    cmd->callback([cgr] { run_cgr(*cgr); });
  }

  // control-limit
  auto cl = std::make_shared<ClCmd>();
  {
    CLI::App* cmd = app.add_subcommand("control-limit", "calibrate h by in-control simulation");
    cmd->add_option("--kind", cl->kind, "bernoulli, bk or cgr")->required();
    cl->baseline.attach(cmd, "--baseline", "baseline dataset CSV (covariate pool)", false);
    cmd->add_option("--model", cl->model_path, "risk model JSON");
    cmd->add_option("--assist", cl->assist_path, "assist bundle JSON");
    cl->o_time = cmd->add_option("--time", cl->time, "monitoring horizon");
    cl->o_alpha = cmd->add_option("--alpha", cl->alpha, "target type-I error");
    cl->o_psi = cmd->add_option("--psi", cl->psi, "arrival rate");
    cl->o_theta = cmd->add_option("--theta", cl->theta, "log ratio to detect");
    cl->o_p0 = cmd->add_option("--p0", cl->p0, "in-control failure probability");
    cl->o_p1 = cmd->add_option("--p1", cl->p1, "out-of-control failure probability");
    cl->o_followup = cmd->add_option("--followup", cl->followup,
                                     "outcome window (bernoulli) / truncation (bk, cgr)");
    cl->o_maxtheta = cmd->add_option("--maxtheta", cl->maxtheta, "cgr estimate cap");
    cmd->add_option("--n-sim", cl->n_sim, "simulated units (default 200; cgr 20)");
    cmd->add_option("--h-precision", cl->h_precision, "significant digits of h");
    cmd->add_option("--seed", cl->seed, "RNG seed");
    cl->o_workers = cmd->add_option("--workers", cl->workers, "worker threads (0 = auto)");
    cmd->add_flag("--progress", cl->progress, "report simulation progress on stderr");
    cmd->add_option("--out", cl->out, "write result JSON here");
    cmd->add_flag("--json", cl->json, "print result JSON to stdout");
    cmd->callback([cl] { run_control_limit(*cl); });
  }

  // simulate
  auto sim = std::make_shared<SimulateCmd>();
  {
    CLI::App* cmd = app.add_subcommand("simulate", "generate a synthetic surgery benchmark");
    cmd->add_option("--out", sim->out, "output CSV path")->required();
    cmd->add_option("--seed", sim->seed, "RNG seed");
    cmd->add_option("--n-units", sim->n_units, "number of units");
    cmd->add_option("--psi-levels", sim->psi_levels, "arrival-rate levels, equal unit share each")
        ->delimiter(',');
    cmd->add_option("--horizon", sim->horizon, "arrival window length");
    cmd->add_option("--rate", sim->rate, "baseline hazard rate");
    cmd->add_option("--theta-sd", sim->theta_sd, "sd of per-unit log hazard ratios");
    sim->o_cap = cmd->add_option("--followup-cap", sim->followup_cap,
                                 "administratively censor beyond this survival time");
    sim->o_workers = cmd->add_option("--workers", sim->workers, "worker threads (0 = auto)");
    cmd->add_flag("--json", sim->json, "print a JSON summary");
    cmd->callback([sim] { run_simulate(*sim); });
  }

  // runlength
  auto rl = std::make_shared<RunlengthCmd>();
  {
    CLI::App* cmd = app.add_subcommand("runlength", "time until a serialized chart crosses h");
    cmd->add_option("--chart", rl->chart_path, "chart CSV path")->required();
    cmd->add_option("--h", rl->h, "control limit")->required();
    cmd->add_option("--kind", rl->kind, "override the chart kind");
    cmd->add_flag("--json", rl->json, "print JSON");
    cmd->callback([rl] { run_runlength(*rl); });
  }

  // plot
  auto plot = std::make_shared<PlotCmd>();
  {
    CLI::App* cmd = app.add_subcommand("plot", "render a serialized chart as SVG");
    cmd->add_option("--chart", plot->chart_path, "chart CSV path")->required();
    plot->o_h = cmd->add_option("--h", plot->h, "draw this control limit");
    cmd->add_option("--kind", plot->kind, "override the chart kind");
    cmd->add_option("--out", plot->out, "output SVG path (default: <chart>.svg)");
    cmd->callback([plot] { run_plot(*plot); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
