#include "contregime/dgp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "contregime/errors.hpp"
#include "contregime/format.hpp"
#include "contregime/parallel.hpp"

namespace contregime {

std::string_view to_string(DgpKind kind) {
  return kind == DgpKind::discrete_chain ? "discrete-chain" : "euler-diffusion";
}

double HazardSpec::at(double l, double a) const noexcept {
  return std::clamp(base + covariate * l + treatment * a, 0.0, 0.99);
}

double chain_step_prob(const ChainParams& p, double l, double a) noexcept {
  return std::clamp(p.trans_intercept + p.trans_treatment * a + p.trans_covariate * l, p.clip_lo,
                    p.clip_hi);
}

void validate(const DgpSpec& spec) {
  if (!spec.fine_grid) throw InvalidArgument("dgp has no simulation grid");
  auto check_hazard = [](const std::optional<HazardSpec>& h, const char* what) {
    if (h && !(std::isfinite(h->base) && std::isfinite(h->covariate) && std::isfinite(h->treatment))) {
      throw InvalidArgument(std::string(what) + " hazard coefficients must be finite");
    }
  };
  check_hazard(spec.censoring, "censoring");
  check_hazard(spec.terminal, "terminal");
  if (const auto* c = std::get_if<ChainParams>(&spec.params)) {
    if (!(c->baseline_prob >= 0.0 && c->baseline_prob <= 1.0)) {
      throw InvalidArgument("baseline_prob must lie in [0, 1]");
    }
    if (!(c->clip_lo > 0.0 && c->clip_lo < c->clip_hi && c->clip_hi < 1.0)) {
      throw InvalidArgument("clip bounds must satisfy 0 < clip_lo < clip_hi < 1");
    }
    if (!(c->margin > 0.0 && c->margin < 0.5)) throw InvalidArgument("margin must lie in (0, 0.5)");
    for (double l : {0.0, 1.0}) {
      const double pi = c->treat_intercept + c->treat_covariate * l;
      if (!(pi >= c->margin && pi <= 1.0 - c->margin)) {
        throw InvalidArgument("propensity " + format_double(pi) + " at L = " + format_double(l) +
                              " violates the positivity margin " + format_double(c->margin));
      }
    }
  } else {
    const auto& d = std::get<DiffusionParams>(spec.params);
    if (!(d.baseline_sd > 0.0) || !(d.treat_sd > 0.0) || !(d.noise >= 0.0)) {
      throw InvalidArgument("diffusion standard deviations must be positive");
    }
  }
}

DgpSpec bin3() {
  DgpSpec s;
  s.name = "BIN3";
  s.params = ChainParams{};
  s.fine_grid = std::make_shared<const Partition>(make_partition(3.0, 3));
  return s;
}

DgpSpec ou1(std::size_t fine_steps) {
  DgpSpec s;
  s.name = "OU1";
  s.params = DiffusionParams{};
  s.fine_grid = std::make_shared<const Partition>(make_partition(1.0, fine_steps));
  return s;
}

DgpSpec cens3() {
  DgpSpec s = bin3();
  s.name = "CENS3";
  s.censoring = HazardSpec{0.1, 0.0, 0.0};
  return s;
}

DgpSpec preset(std::string_view name) {
  std::string upper(name);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "BIN3") return bin3();
  if (upper == "OU1") return ou1();
  if (upper == "CENS3") return cens3();
  throw InvalidArgument("unknown dgp preset '" + std::string(name) + "'");
}

namespace {

using ParamTable = std::vector<std::pair<const char*, double*>>;

ParamTable param_table(ChainParams& c) {
  return {{"baseline_prob", &c.baseline_prob},     {"treat_intercept", &c.treat_intercept},
          {"treat_covariate", &c.treat_covariate}, {"trans_intercept", &c.trans_intercept},
          {"trans_treatment", &c.trans_treatment}, {"trans_covariate", &c.trans_covariate},
          {"clip_lo", &c.clip_lo},                 {"clip_hi", &c.clip_hi},
          {"margin", &c.margin},                   {"covariate_reference", &c.covariate_reference}};
}

ParamTable param_table(DiffusionParams& d) {
  return {{"baseline_mean", &d.baseline_mean},     {"baseline_sd", &d.baseline_sd},
          {"drift_intercept", &d.drift_intercept}, {"drift_covariate", &d.drift_covariate},
          {"drift_treatment", &d.drift_treatment}, {"noise", &d.noise},
          {"treat_intercept", &d.treat_intercept}, {"treat_covariate", &d.treat_covariate},
          {"treat_sd", &d.treat_sd},               {"covariate_reference", &d.covariate_reference}};
}

double json_number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

HazardSpec hazard_from_json(const nlohmann::json& j, const std::string& path) {
  if (j.is_number()) return HazardSpec{j.get<double>(), 0.0, 0.0};
  if (!j.is_object()) throw ConfigError(path, "expected a number or a table");
  HazardSpec h;
  for (const auto& [key, value] : j.items()) {
    const std::string p = path + "." + key;
    if (key == "base") h.base = json_number(value, p);
    else if (key == "covariate") h.covariate = json_number(value, p);
    else if (key == "treatment") h.treatment = json_number(value, p);
    else throw ConfigError(p, "unknown hazard field");
  }
  return h;
}

nlohmann::json hazard_to_json(const HazardSpec& h) {
  return {{"base", h.base}, {"covariate", h.covariate}, {"treatment", h.treatment}};
}

}  // namespace

std::map<std::string, double> named_params(const DgpSpec& spec) {
  std::map<std::string, double> out;
  auto copy = spec.params;
  std::visit(
      [&](auto& p) {
        for (auto [name, ptr] : param_table(p)) out[name] = *ptr;
      },
      copy);
  return out;
}

DgpSpec dgp_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected a table");
  DgpSpec spec;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError(path + ".preset", "expected a string");
    try {
      spec = preset(j["preset"].get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ConfigError(path + ".preset", e.what());
    }
  } else if (j.contains("kind")) {
    const std::string kind = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
    if (kind == "discrete-chain") spec = bin3();
    else if (kind == "euler-diffusion") spec = ou1();
    else throw ConfigError(path + ".kind", "expected \"discrete-chain\" or \"euler-diffusion\"");
    spec.name = kind;
  } else {
    throw ConfigError(path, "needs either 'preset' or 'kind'");
  }

  double horizon = spec.fine_grid->horizon();
  std::size_t steps = spec.fine_grid->steps();
  for (const auto& [key, value] : j.items()) {
    const std::string p = path + "." + key;
    if (key == "preset" || key == "kind") continue;
    if (key == "name") {
      if (!value.is_string()) throw ConfigError(p, "expected a string");
      spec.name = value.get<std::string>();
    } else if (key == "horizon") {
      horizon = json_number(value, p);
      if (!(horizon > 0.0)) throw ConfigError(p, "must be positive");
    } else if (key == "fine_steps") {
      if (!value.is_number_integer() || value.get<long long>() < 1) {
        throw ConfigError(p, "expected a positive integer");
      }
      steps = value.get<std::size_t>();
    } else if (key == "params") {
      if (!value.is_object()) throw ConfigError(p, "expected a table");
      std::visit(
          [&](auto& params) {
            auto table = param_table(params);
            for (const auto& [pname, pvalue] : value.items()) {
              auto it = std::find_if(table.begin(), table.end(),
                                     [&](const auto& e) { return pname == e.first; });
              if (it == table.end()) throw ConfigError(p + "." + pname, "unknown parameter");
              *it->second = json_number(pvalue, p + "." + pname);
            }
          },
          spec.params);
    } else if (key == "censoring") {
      spec.censoring = value.is_null() ? std::nullopt : std::optional(hazard_from_json(value, p));
    } else if (key == "terminal") {
      spec.terminal = value.is_null() ? std::nullopt : std::optional(hazard_from_json(value, p));
    } else if (key == "summary") {
      if (value != "last_value") throw ConfigError(p, "only \"last_value\" is supported");
    } else {
      throw ConfigError(p, "unknown field");
    }
  }
  spec.fine_grid = std::make_shared<const Partition>(make_partition(horizon, steps));
  try {
    validate(spec);
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

nlohmann::json to_json(const DgpSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["kind"] = std::string(to_string(spec.kind()));
  j["horizon"] = spec.fine_grid->horizon();
  j["fine_steps"] = spec.fine_grid->steps();
  j["summary"] = "last_value";
  j["params"] = named_params(spec);
  j["censoring"] = spec.censoring ? hazard_to_json(*spec.censoring) : nlohmann::json(nullptr);
  j["terminal"] = spec.terminal ? hazard_to_json(*spec.terminal) : nlohmann::json(nullptr);
  if (!spec.perturbation.empty()) j["perturbation"] = spec.perturbation;
  return j;
}

TreatmentLaw propensity_law(const DgpSpec& spec, std::span<const double> f_summary) {
  const double l = f_summary[0];
  if (const auto* c = std::get_if<ChainParams>(&spec.params)) {
    const double pi = std::clamp(c->treat_intercept + c->treat_covariate * l, c->margin, 1.0 - c->margin);
    return DiscreteLaw{{0.0, 1.0}, {1.0 - pi, pi}};
  }
  const auto& d = std::get<DiffusionParams>(spec.params);
  return GaussianLaw{d.treat_intercept + d.treat_covariate * l, d.treat_sd};
}

TreatmentLaw baseline_law(const DgpSpec& spec) {
  if (const auto* c = std::get_if<ChainParams>(&spec.params)) {
    return DiscreteLaw{{0.0, 1.0}, {1.0 - c->baseline_prob, c->baseline_prob}};
  }
  const auto& d = std::get<DiffusionParams>(spec.params);
  return GaussianLaw{d.baseline_mean, d.baseline_sd};
}

double transition_density(const DgpSpec& spec, const HistoryView& h, std::span<const double> l_new) {
  if (!h.current_treatment) {
    throw InvalidArgument("transition density needs a treatment-aware history view");
  }
  const Partition& grid = *spec.fine_grid;
  if (h.upto_index + 1 >= grid.size()) throw InvalidArgument("no transition out of the horizon");
  const double dt = grid[h.upto_index + 1] - grid[h.upto_index];
  const double l = h.summary[0];
  const double a = (*h.current_treatment)[0];
  const double x = l_new[0];
  if (const auto* c = std::get_if<ChainParams>(&spec.params)) {
    if (x != 0.0 && x != 1.0) {
      throw DomainError("covariate value " + format_double(x) + " is outside the chain support {0, 1}");
    }
    const double p = chain_step_prob(*c, l, a);
    return x == 1.0 ? p : 1.0 - p;
  }
  const auto& d = std::get<DiffusionParams>(spec.params);
  const double mean = l + (d.drift_intercept + d.drift_covariate * l + d.drift_treatment * a) * dt;
  const double sd = d.noise * std::sqrt(dt);
  return normal_pdf((x - mean) / sd) / sd;
}

double propensity_density(const DgpSpec& spec, const HistoryView& h, std::span<const double> a_new) {
  if (h.current_treatment) {
    throw InvalidArgument("propensity density needs a history view without current treatment");
  }
  const auto law = propensity_law(spec, h.summary);
  if (spec.kind() == DgpKind::discrete_chain && a_new[0] != 0.0 && a_new[0] != 1.0) {
    throw DomainError("treatment value " + format_double(a_new[0]) + " is outside {0, 1}");
  }
  return density(law, a_new[0]);
}

GaussianInterval diffusion_interval(const DiffusionParams& p, std::span<const double> step_widths) {
  GaussianInterval g;
  for (double dt : step_widths) {
    const double c = 1.0 + p.drift_covariate * dt;
    g.scale *= c;
    g.shift0 = g.shift0 * c + p.drift_intercept * dt;
    g.shift_treatment = g.shift_treatment * c + p.drift_treatment * dt;
    g.variance = g.variance * c * c + p.noise * p.noise * dt;
  }
  return g;
}

double censoring_survival(const DgpSpec& spec, const Trajectory& tr, std::size_t j) {
  if (!spec.censoring) return 1.0;
  const std::size_t exit = tr.exit_index();
  const std::size_t last_step = tr.grid->steps();
  double s = 1.0;
  for (std::size_t m = 0; m <= j && m < last_step && m < exit; ++m) {
    if (tr.died() && m + 1 == exit) break;
    s *= 1.0 - spec.censoring->at(tr.covariate_at(m)[0], tr.treatment_at(m)[0]);
  }
  return s;
}

namespace {

// Writes nothing; used when only the outcome is needed.
struct NullRecorder {
  void record(std::size_t, double, double) {}
  void freeze(std::size_t, double, double) {}
};

struct PathRecorder {
  Trajectory* tr;
  void record(std::size_t m, double a, double l) {
    tr->treatment[m] = a;
    tr->covariate[m] = l;
  }
  void freeze(std::size_t from, double a, double l) {
    for (std::size_t m = from; m < tr->grid->size(); ++m) record(m, a, l);
  }
};

struct PathEnd {
  double outcome;
  double event_time = kInfinity;
  double censor_time = kInfinity;
};

template <class Recorder>
PathEnd run_path(const DgpSpec& spec, std::span<const std::size_t> decisions,
                 const TreatmentPolicy& policy, const CounterRng& rng, std::uint64_t subject,
                 const PathOptions& options, Recorder& rec) {
  const Partition& grid = *spec.fine_grid;
  const std::size_t steps = grid.steps();
  const HazardSpec* terminal = options.terminal && spec.terminal ? &*spec.terminal : nullptr;
  const HazardSpec* censoring = options.censoring && spec.censoring ? &*spec.censoring : nullptr;
  const ChainParams* chain = std::get_if<ChainParams>(&spec.params);
  const DiffusionParams* diff = std::get_if<DiffusionParams>(&spec.params);

  double l = chain ? (rng.uniform(subject, 0, DrawRole::baseline) < chain->baseline_prob ? 1.0 : 0.0)
                   : diff->baseline_mean + diff->baseline_sd * rng.normal(subject, 0, DrawRole::baseline);
  double a = 0.0;
  std::size_t next = 0;
  for (std::size_t m = 0; m < steps; ++m) {
    const auto idx = static_cast<std::uint32_t>(m);
    if (next < decisions.size() && decisions[next] == m) {
      a = policy(next, std::span<const double>(&l, 1), rng.draw(subject, idx, DrawRole::treatment));
      ++next;
    }
    rec.record(m, a, l);
    if (terminal && rng.uniform(subject, idx, DrawRole::terminal) < terminal->at(l, a)) {
      rec.freeze(m + 1, a, l);
      return {l, grid[m + 1], kInfinity};
    }
    if (censoring && rng.uniform(subject, idx, DrawRole::censoring) < censoring->at(l, a)) {
      rec.freeze(m + 1, a, l);
      return {l, kInfinity, grid[m + 1]};
    }
    if (chain) {
      l = rng.uniform(subject, idx, DrawRole::transition) < chain_step_prob(*chain, l, a) ? 1.0 : 0.0;
    } else {
      const double dt = grid[m + 1] - grid[m];
      l += (diff->drift_intercept + diff->drift_covariate * l + diff->drift_treatment * a) * dt +
           diff->noise * std::sqrt(dt) * rng.normal(subject, idx, DrawRole::transition);
    }
  }
  rec.record(steps, a, l);
  return {l};
}

}  // namespace

Trajectory simulate_path(const DgpSpec& spec, std::span<const std::size_t> decision_fine_index,
                         const TreatmentPolicy& policy, const CounterRng& rng, std::uint64_t subject,
                         const PathOptions& options) {
  Trajectory tr;
  tr.grid = spec.fine_grid;
  tr.treatment.assign(spec.fine_grid->size(), 0.0);
  tr.covariate.assign(spec.fine_grid->size(), 0.0);
  PathRecorder rec{&tr};
  const PathEnd end = run_path(spec, decision_fine_index, policy, rng, subject, options, rec);
  tr.outcome = end.outcome;
  tr.event_time = end.event_time;
  tr.censor_time = end.censor_time;
  return tr;
}

double simulate_outcome(const DgpSpec& spec, std::span<const std::size_t> decision_fine_index,
                        const TreatmentPolicy& policy, const CounterRng& rng, std::uint64_t subject,
                        const PathOptions& options) {
  NullRecorder rec;
  return run_path(spec, decision_fine_index, policy, rng, subject, options, rec).outcome;
}

Cohort simulate_observed(const DgpSpec& spec, const Partition& decisions, std::size_t n,
                         std::uint64_t seed, unsigned threads) {
  validate(spec);
  const auto idx = subgrid_indices(decisions, *spec.fine_grid);
  const CounterRng rng(seed);
  const TreatmentPolicy natural = [&spec](std::size_t, std::span<const double> s, const TreatmentDraw& d) {
    return sample(propensity_law(spec, s), d);
  };
  Cohort cohort(n);
  parallel_for(n, threads, [&](std::size_t i) { cohort[i] = simulate_path(spec, idx, natural, rng, i); });
  return cohort;
}

Knob Knob::parse(std::string_view text) {
  auto strip = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = strip(text);
  if (text == "identity" || text == "none") return {Kind::identity, 0.0};
  if (text == "propensity_drop_covariate") return {Kind::propensity_drop_covariate, 0.0};
  if (text == "censoring_ignore") return {Kind::censoring_ignore, 0.0};
  constexpr std::string_view shift = "transition_shift(";
  if (text.starts_with(shift) && text.ends_with(")")) {
    const std::string arg(strip(text.substr(shift.size(), text.size() - shift.size() - 1)));
    char* end = nullptr;
    const double v = std::strtod(arg.c_str(), &end);
    if (arg.empty() || *end != '\0' || !std::isfinite(v)) {
      throw InvalidArgument("transition_shift needs a numeric argument, got '" + arg + "'");
    }
    return {Kind::transition_shift, v};
  }
  throw InvalidArgument("unknown misspecification knob '" + std::string(text) + "'");
}

std::string Knob::to_string() const {
  switch (kind) {
    case Kind::identity: return "identity";
    case Kind::transition_shift: return "transition_shift(" + format_double(value) + ")";
    case Kind::propensity_drop_covariate: return "propensity_drop_covariate";
    case Kind::censoring_ignore: return "censoring_ignore";
  }
  return "identity";
}

DgpSpec misspecify(const DgpSpec& spec, const Knob& knob) {
  DgpSpec out = spec;
  out.perturbation = knob.to_string();
  switch (knob.kind) {
    case Knob::Kind::identity:
      break;
    case Knob::Kind::transition_shift:
      if (auto* c = std::get_if<ChainParams>(&out.params)) c->trans_intercept += knob.value;
      else std::get<DiffusionParams>(out.params).drift_intercept += knob.value;
      break;
    case Knob::Kind::propensity_drop_covariate:
      std::visit(
          [](auto& p) {
            p.treat_intercept += p.treat_covariate * p.covariate_reference;
            p.treat_covariate = 0.0;
          },
          out.params);
      break;
    case Knob::Kind::censoring_ignore:
      if (!spec.censoring) throw InvalidArgument("censoring_ignore needs a spec with censoring");
      out.censoring.reset();
      break;
  }
  return out;
}

}  // namespace contregime
