#include "psse/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "psse/random.hpp"

namespace psse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

[[noreturn]] void config_error(const std::string& message) { throw ConfigError(message); }

double positive(const json& j, const char* key, double fallback, const std::string& where) {
  const double v = j.value(key, fallback);
  if (!(v > 0.0)) config_error(where + ": '" + key + "' must be positive");
  return v;
}

double nonnegative(const json& j, const char* key, double fallback, const std::string& where) {
  const double v = j.value(key, fallback);
  if (!(v >= 0.0)) config_error(where + ": '" + key + "' must be nonnegative");
  return v;
}

int positive_int(const json& j, const char* key, int fallback, const std::string& where) {
  const int v = j.value(key, fallback);
  if (v <= 0) config_error(where + ": '" + key + "' must be a positive integer");
  return v;
}

std::pair<double, double> range(const json& j, const char* key, std::pair<double, double> fallback,
                                const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
    config_error(where + ": '" + key + "' must be a [low, high] pair");
  const double lo = r[0].get<double>();
  const double hi = r[1].get<double>();
  if (hi < lo) config_error(where + ": '" + key + "' has high < low");
  return {lo, hi};
}

SolverSpec parse_solver(const json& js, int index, const json& stopping) {
  const std::string where = "solvers[" + std::to_string(index) + "]";
  if (!js.is_object()) config_error(where + " must be an object");
  if (!js.contains("type") || !js.at("type").is_string()) config_error(where + ": missing 'type'");
  const std::string type = js.at("type").get<std::string>();
  SolverSpec spec;
  spec.name = js.value("name", type);
  if (spec.name.empty() || spec.name.find_first_of("/\\ ") != std::string::npos)
    config_error(where + ": 'name' must be a non-empty token without spaces or slashes");

  const int max_iters = positive_int(js, "max_iters", stopping.value("max_iters", 100), where);
  const double tol = nonnegative(js, "tol", stopping.value("tol", 1e-10), where);

  if (type == "deterministic") {
    spec.type = SolverType::Deterministic;
    auto& c = spec.deterministic;
    c.mu = positive(js, "mu", 200.0, where);
    c.rho = positive(js, "rho", 100.0, where);
    c.inner_iters = positive_int(js, "inner_iters", 150, where);
    c.max_outer = max_iters;
    c.tol = tol;
    if (js.contains("inner_tol")) c.inner_tol = nonnegative(js, "inner_tol", 0.0, where);
    c.l1_weight = positive(js, "l1_weight", 0.5, where);
  } else if (type == "stochastic") {
    spec.type = SolverType::Stochastic;
    auto& c = spec.stochastic;
    if (js.contains("constant_step")) c.constant_step = positive(js, "constant_step", 1.0, where);
    c.alpha = positive(js, "alpha", 1.0, where);
    c.beta = js.value("beta", 0.8);
    if (!(c.beta > 0.5 && c.beta <= 1.0)) config_error(where + ": 'beta' must lie in (0.5, 1]");
    const std::string sampling = js.value("sampling", "uniform");
    if (sampling == "uniform")
      c.sampling = Sampling::Uniform;
    else if (sampling == "cyclic")
      c.sampling = Sampling::Cyclic;
    else if (sampling == "sequential")
      c.sampling = Sampling::Sequential;
    else
      config_error(where + ": unknown sampling '" + sampling + "'");
    c.max_epochs = max_iters;
    c.tol = tol;
    spec.minibatch = js.value("minibatch", false);
  } else if (type == "gauss_newton" || type == "irls") {
    spec.type = type == "irls" ? SolverType::Irls : SolverType::GaussNewton;
    spec.baseline.max_iters = max_iters;
    spec.baseline.tol = tol;
    spec.baseline.epsilon = positive(js, "epsilon", 1e-8, where);
  } else {
    config_error(where + ": unknown solver type '" + type + "'");
  }
  return spec;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string point_label(const ExperimentConfig& config, int point) {
  if (config.ordered_type_counts.empty()) return "plan";
  return "types_" + std::to_string(config.ordered_type_counts[point]);
}

int point_count(const ExperimentConfig& config) {
  return config.ordered_type_counts.empty() ? 1 : static_cast<int>(config.ordered_type_counts.size());
}

NoiseSpec noise_spec(const ExperimentConfig& config, std::uint64_t seed) {
  return NoiseSpec::by_class(config.noise_sigma[0], config.noise_sigma[1], config.noise_sigma[2], seed);
}

std::uint64_t trial_seed(const ExperimentConfig& config, int trial) {
  return Rng::derive(config.seed, static_cast<std::uint64_t>(trial));
}

json stats(const std::vector<double>& values) {
  if (values.empty()) return {{"mean", nullptr}, {"stddev", nullptr}, {"count", 0}};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double stddev = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  return {{"mean", mean}, {"stddev", stddev}, {"count", values.size()}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

json complex_array(const VoltageState& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back({v(i).real(), v(i).imag()});
  return arr;
}

VoltageState complex_from_json(const json& arr) {
  VoltageState v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = Complex(arr[i].at(0).get<double>(), arr[i].at(1).get<double>());
  return v;
}

}  // namespace

std::string_view to_string(SolverType type) {
  switch (type) {
    case SolverType::Deterministic: return "deterministic";
    case SolverType::Stochastic: return "stochastic";
    case SolverType::GaussNewton: return "gauss_newton";
    case SolverType::Irls: return "irls";
  }
  return "?";
}

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) config_error("config must be a JSON object");
  try {
    const int version = doc.value("schema_version", kSchemaVersion);
    if (version != kSchemaVersion)
      config_error("unsupported schema_version " + std::to_string(version));

    ExperimentConfig config;
    config.name = doc.value("name", "experiment");
    if (!doc.contains("case") || !doc.at("case").is_string()) config_error("missing 'case' path");
    config.case_path = resolve(base_dir, doc.at("case").get<std::string>());

    if (doc.contains("truth")) {
      const auto& jt = doc.at("truth");
      const std::string source = jt.value("source", "case");
      if (source == "case") {
        config.truth.from_case = true;
      } else if (source == "random") {
        config.truth.from_case = false;
        const auto [mlo, mhi] = range(jt, "magnitude", {0.9, 1.1}, "truth");
        config.truth.magnitude_lo = mlo;
        config.truth.magnitude_hi = mhi;
        // Angles may be given in radians ("angle") or in multiples of pi ("angle_pi").
        if (jt.contains("angle_pi")) {
          const auto [alo, ahi] = range(jt, "angle_pi", {-0.1, 0.1}, "truth");
          config.truth.angle_lo = alo * std::numbers::pi;
          config.truth.angle_hi = ahi * std::numbers::pi;
        } else {
          const auto [alo, ahi] = range(jt, "angle", {-0.1 * std::numbers::pi, 0.1 * std::numbers::pi}, "truth");
          config.truth.angle_lo = alo;
          config.truth.angle_hi = ahi;
        }
      } else {
        config_error("truth: unknown source '" + source + "'");
      }
    }

    if (!doc.contains("measurements")) config_error("missing 'measurements' section");
    const auto& jm = doc.at("measurements");
    if (jm.contains("replay")) {
      config.replay_path = resolve(base_dir, jm.at("replay").get<std::string>());
    } else if (jm.contains("ordered_types")) {
      const auto& jo = jm.at("ordered_types");
      if (jo.is_number_integer()) {
        config.ordered_type_counts.push_back(jo.get<int>());
      } else if (jo.is_array() && !jo.empty()) {
        for (const auto& x : jo) config.ordered_type_counts.push_back(x.get<int>());
      } else {
        config_error("measurements: 'ordered_types' must be an integer or non-empty list");
      }
      for (int k : config.ordered_type_counts)
        if (k < 1 || k > 7) config_error("measurements: ordered type counts must be in 1..7");
    } else if (jm.contains("kinds")) {
      for (const auto& k : jm.at("kinds")) {
        try {
          config.kinds.push_back(kind_from_string(k.get<std::string>()));
        } catch (const std::invalid_argument& e) {
          config_error(std::string("measurements: ") + e.what());
        }
      }
      if (config.kinds.empty()) config_error("measurements: 'kinds' is empty");
    } else {
      config_error("measurements: need one of 'kinds', 'ordered_types' or 'replay'");
    }

    if (doc.contains("noise")) {
      const auto& jn = doc.at("noise");
      config.noise_sigma = {nonnegative(jn, "voltage", 0.0, "noise"), nonnegative(jn, "flow", 0.0, "noise"),
                            nonnegative(jn, "injection", 0.0, "noise")};
    }

    if (doc.contains("corruption") && !doc.at("corruption").is_null()) {
      const auto& jc = doc.at("corruption");
      CorruptionSpec spec;
      const std::string model = jc.value("model", "M1");
      if (model == "M1")
        spec.model = CorruptionModel::M1;
      else if (model == "M2")
        spec.model = CorruptionModel::M2;
      else
        config_error("corruption: unknown model '" + model + "'");
      spec.fraction = jc.value("fraction", 0.0);
      if (!(spec.fraction >= 0.0 && spec.fraction <= 1.0))
        config_error("corruption: 'fraction' must lie in [0, 1]");
      if (jc.contains("eligible")) {
        spec.eligible_kinds.clear();
        for (const auto& k : jc.at("eligible")) {
          try {
            spec.eligible_kinds.push_back(kind_from_string(k.get<std::string>()));
          } catch (const std::invalid_argument& e) {
            config_error(std::string("corruption: ") + e.what());
          }
        }
      }
      spec.laplace_mean = jc.value("laplace_mean", 0.0);
      spec.laplace_stddev = nonnegative(jc, "laplace_stddev", 30.0, "corruption");
      config.corruption = spec;
    }

    const std::string init = doc.value("init", "measured-magnitude");
    if (init == "flat")
      config.init = InitMode::Flat;
    else if (init == "measured-magnitude")
      config.init = InitMode::MeasuredMagnitude;
    else
      config_error("unknown init '" + init + "' (expected 'flat' or 'measured-magnitude')");

    const json stopping = doc.value("stopping", json::object());
    if (!doc.contains("solvers") || !doc.at("solvers").is_array() || doc.at("solvers").empty())
      config_error("'solvers' must be a non-empty list");
    int index = 0;
    for (const auto& js : doc.at("solvers")) config.solvers.push_back(parse_solver(js, index++, stopping));
    for (std::size_t i = 0; i < config.solvers.size(); ++i)
      for (std::size_t j = i + 1; j < config.solvers.size(); ++j)
        if (config.solvers[i].name == config.solvers[j].name)
          config_error("duplicate solver name '" + config.solvers[i].name + "'");

    config.trials = positive_int(doc, "trials", 1, "config");
    config.seed = doc.value("seed", std::uint64_t{1});
    config.output_dir = resolve(base_dir, doc.value("output_dir", std::string("out/") + config.name));
    if (config.replay_path && config.trials != 1) config_error("replay runs use exactly one trial");
    return config;
  } catch (const json::exception& e) {
    config_error(std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    config_error("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_experiment_config(doc, path.parent_path());
}

void apply_overrides(ExperimentConfig& config, const RunOverrides& overrides) {
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  if (overrides.trials) {
    if (*overrides.trials <= 0) config_error("--trials must be positive");
    if (config.replay_path && *overrides.trials != 1) config_error("replay runs use exactly one trial");
    config.trials = *overrides.trials;
  }
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.solvers) {
    std::vector<SolverSpec> kept;
    for (const auto& name : *overrides.solvers) {
      auto it = std::find_if(config.solvers.begin(), config.solvers.end(),
                             [&](const SolverSpec& s) { return s.name == name; });
      if (it == config.solvers.end()) config_error("--solvers: no solver named '" + name + "' in config");
      kept.push_back(*it);
    }
    if (kept.empty()) config_error("--solvers selected no solvers");
    config.solvers = std::move(kept);
  }
}

PreparedTrial prepare_trial(const ExperimentConfig& config, const NetworkCase& network,
                            const AdmittanceModel& model, int point, int trial) {
  const std::uint64_t seed = trial_seed(config, trial);
  PreparedTrial prepared;
  prepared.noise = noise_spec(config, Rng::derive(seed, 100 + static_cast<std::uint64_t>(point)));

  if (config.replay_path) {
    std::ifstream in(*config.replay_path, std::ios::binary);
    if (!in) throw IoError("cannot open replay file '" + config.replay_path->string() + "'");
    try {
      const json doc = json::parse(in);
      prepared.truth.reference_bus = doc.at("reference_bus").get<int>();
      prepared.truth.voltages = complex_from_json(doc.at("truth"));
      prepared.raw = measurement_set_from_json(doc.at("measurements"), model);
    } catch (const json::exception& e) {
      throw ConfigError("malformed replay file: " + std::string(e.what()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("replay file does not match the case: " + std::string(e.what()));
    }
    if (prepared.truth.voltages.size() != model.bus_count())
      throw ConfigError("replay truth length does not match the case");
    return prepared;
  }

  prepared.truth.reference_bus = network.reference_bus();
  if (config.truth.from_case) {
    prepared.truth.voltages = network.stored_profile();
  } else {
    prepared.truth.voltages =
        random_truth(network, config.truth.magnitude_lo, config.truth.magnitude_hi,
                     config.truth.angle_lo, config.truth.angle_hi, Rng::derive(seed, 1));
  }

  const std::vector<MeasurementKind> kinds =
      config.ordered_type_counts.empty() ? config.kinds : ordered_types(config.ordered_type_counts[point]);
  const auto plan = full_plan(model, kinds);
  prepared.raw = simulate(model, prepared.truth.voltages, plan, prepared.noise);
  if (config.corruption) {
    CorruptionSpec spec = *config.corruption;
    spec.seed = Rng::derive(seed, 200 + static_cast<std::uint64_t>(point));
    try {
      prepared.raw = corrupt(prepared.raw, spec).set;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("corruption: ") + e.what());
    }
  }
  return prepared;
}

TrialOutcome run_trial(const ExperimentConfig& config, const PreparedTrial& prepared, int point,
                       int trial) {
  TrialOutcome outcome;
  outcome.point = point;
  outcome.trial = trial;
  outcome.measurement_count = prepared.raw.size();
  outcome.corrupted_count = static_cast<int>(std::count_if(
      prepared.raw.records.begin(), prepared.raw.records.end(),
      [](const MeasurementRecord& r) { return r.corrupted; }));

  const MeasurementSet normalized = normalize(prepared.raw);
  const VoltageState v0 = config.init == InitMode::Flat ? VoltageState(VoltageState::Ones(prepared.raw.bus_count))
                                                        : measured_magnitude_start(prepared.raw);
  const std::optional<Truth> truth = prepared.truth;
  const std::uint64_t seed = trial_seed(config, trial);

  for (std::size_t s = 0; s < config.solvers.size(); ++s) {
    const auto& spec = config.solvers[s];
    SolverOutcome so;
    so.solver = spec.name;
    try {
      switch (spec.type) {
        case SolverType::Deterministic:
          so.result = solve_deterministic(normalized, spec.deterministic, v0, truth);
          break;
        case SolverType::Stochastic: {
          StochasticConfig sc = spec.stochastic;
          sc.seed = Rng::derive(seed, 300 + s);
          if (spec.minibatch) {
            const MiniBatchSchedule schedule = build_minibatches(normalized);
            so.result = solve_stochastic(normalized, sc, v0, &schedule, truth);
          } else {
            so.result = solve_stochastic(normalized, sc, v0, nullptr, truth);
          }
          break;
        }
        case SolverType::GaussNewton:
          so.result = gauss_newton_wls(prepared.raw, inverse_variance_weights(prepared.raw, prepared.noise),
                                       v0, prepared.truth.reference_bus, spec.baseline, truth);
          break;
        case SolverType::Irls:
          so.result = irls_lav(prepared.raw, v0, prepared.truth.reference_bus, spec.baseline, truth);
          break;
      }
      so.final_rmse = rmse(so.result->estimate, prepared.truth.voltages, prepared.truth.reference_bus);
      so.final_objective = lav_objective(normalized, so.result->estimate);
    } catch (const SolverError& e) {
      so.result.reset();
      so.error = e.what();
    }
    outcome.solvers.push_back(std::move(so));
  }
  return outcome;
}

json replay_document(const PreparedTrial& prepared) {
  return {{"schema_version", kSchemaVersion},
          {"reference_bus", prepared.truth.reference_bus},
          {"truth", complex_array(prepared.truth.voltages)},
          {"measurements", to_json(prepared.raw)}};
}

ExperimentReport run_experiment(const ExperimentConfig& config, bool write_artifacts, unsigned threads) {
  if (!fs::exists(config.case_path)) throw IoError("case file '" + config.case_path.string() + "' not found");
  NetworkCase network;
  try {
    network = load_case(config.case_path.string());
  } catch (const CaseError& e) {
    throw ConfigError("case '" + config.case_path.string() + "': " + e.what());
  }
  const AdmittanceModel model = build_admittance(network);

  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PSSE_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) threads = std::min(threads, static_cast<unsigned>(cap));
    }
  }

  const int points = point_count(config);
  const int jobs = points * config.trials;
  std::vector<TrialOutcome> outcomes(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<int> next{0};

  auto worker = [&] {
    for (int job = next++; job < jobs; job = next++) {
      const int point = job / config.trials;
      const int trial = job % config.trials;
      try {
        const PreparedTrial prepared = prepare_trial(config, network, model, point, trial);
        outcomes[job] = run_trial(config, prepared, point, trial);
        if (write_artifacts) {
          const fs::path dir =
              config.output_dir / point_label(config, point) / ("trial_" + std::to_string(trial));
          write_text(dir / "measurements.json", replay_document(prepared).dump());
          for (const auto& so : outcomes[job].solvers) {
            if (!so.result) continue;
            std::ostringstream csv;
            so.result->trace.write_csv(csv);
            write_text(dir / (so.solver + ".csv"), csv.str());
          }
        }
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(jobs));
  for (unsigned i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  json jpoints = json::array();
  for (int point = 0; point < points; ++point) {
    json jp;
    jp["label"] = point_label(config, point);
    if (!config.ordered_type_counts.empty()) jp["ordered_types"] = config.ordered_type_counts[point];
    jp["measurement_count"] = outcomes[point * config.trials].measurement_count;
    jp["corrupted_count"] = outcomes[point * config.trials].corrupted_count;
    json jsolvers = json::object();
    for (std::size_t s = 0; s < config.solvers.size(); ++s) {
      std::vector<double> rmses, objectives, iterations, seconds;
      json per_trial = json::array();
      int failures = 0;
      for (int trial = 0; trial < config.trials; ++trial) {
        const auto& so = outcomes[point * config.trials + trial].solvers[s];
        json jt{{"trial", trial}};
        if (so.result) {
          rmses.push_back(so.final_rmse);
          objectives.push_back(so.final_objective);
          iterations.push_back(so.result->iterations);
          seconds.push_back(so.result->trace.rows.back().seconds);
          jt["rmse"] = so.final_rmse;
          jt["objective"] = so.final_objective;
          jt["iterations"] = so.result->iterations;
          jt["seconds"] = so.result->trace.rows.back().seconds;
          jt["converged"] = so.result->converged;
        } else {
          ++failures;
          jt["error"] = so.error;
        }
        per_trial.push_back(std::move(jt));
      }
      report.failures += failures;
      jsolvers[config.solvers[s].name] = {{"type", to_string(config.solvers[s].type)},
                                          {"rmse", stats(rmses)},
                                          {"objective", stats(objectives)},
                                          {"iterations", stats(iterations)},
                                          {"seconds", stats(seconds)},
                                          {"failures", failures},
                                          {"trials", std::move(per_trial)}};
    }
    jp["solvers"] = std::move(jsolvers);
    jpoints.push_back(std::move(jp));
  }
  report.summary = {{"schema_version", kSchemaVersion},
                    {"name", config.name},
                    {"case", config.case_path.filename().string()},
                    {"bus_count", network.bus_count()},
                    {"trials", config.trials},
                    {"seed", config.seed},
                    {"points", std::move(jpoints)}};
  if (write_artifacts) write_text(config.output_dir / "summary.json", report.summary.dump(2) + "\n");
  report.outcomes = std::move(outcomes);
  return report;
}

}  // namespace psse
