#include "contregime/regimes.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "contregime/errors.hpp"
#include "contregime/format.hpp"

namespace contregime {

std::string_view to_string(RegimeVariant v) {
  switch (v) {
    case RegimeVariant::null: return "null";
    case RegimeVariant::point_mass: return "point_mass";
    case RegimeVariant::deterministic_dynamic: return "deterministic_dynamic";
    case RegimeVariant::stochastic_prespecified: return "stochastic_prespecified";
    case RegimeVariant::shift: return "shift";
    case RegimeVariant::threshold: return "threshold";
    case RegimeVariant::incremental: return "incremental";
  }
  return "null";
}

std::string RegimeSpec::describe() const {
  std::ostringstream os;
  os << to_string(variant);
  switch (variant) {
    case RegimeVariant::null: break;
    case RegimeVariant::point_mass:
      if (rule) os << "(" << (rule_label.empty() ? "rule" : rule_label) << ")";
      else os << "(" << format_double(value) << ")";
      break;
    case RegimeVariant::deterministic_dynamic:
      os << "(cutoff=" << format_double(cutoff) << ", above=" << format_double(above)
         << ", below=" << format_double(below) << ")";
      break;
    case RegimeVariant::stochastic_prespecified:
      os << "(intercept=" << format_double(intercept) << ", slope=" << format_double(slope)
         << ", sd=" << format_double(sd) << ")";
      break;
    case RegimeVariant::shift: os << "(" << format_double(delta) << ")"; break;
    case RegimeVariant::threshold: os << "(" << format_double(theta) << ")"; break;
    case RegimeVariant::incremental: os << "(" << format_double(multiplier) << ")"; break;
  }
  return os.str();
}

RegimeSpec null_regime() { return {}; }

RegimeSpec point_mass(double value) {
  RegimeSpec g;
  g.variant = RegimeVariant::point_mass;
  g.value = value;
  return g;
}

RegimeSpec point_mass(SummaryRule rule, std::string label) {
  RegimeSpec g;
  g.variant = RegimeVariant::point_mass;
  g.rule = std::move(rule);
  g.rule_label = std::move(label);
  return g;
}

RegimeSpec always_treat() { return point_mass(1.0); }
RegimeSpec never_treat() { return point_mass(0.0); }

RegimeSpec deterministic_dynamic(double cutoff, double above, double below) {
  RegimeSpec g;
  g.variant = RegimeVariant::deterministic_dynamic;
  g.cutoff = cutoff;
  g.above = above;
  g.below = below;
  return g;
}

RegimeSpec stochastic_bernoulli(double intercept, double slope) {
  RegimeSpec g;
  g.variant = RegimeVariant::stochastic_prespecified;
  g.intercept = intercept;
  g.slope = slope;
  return g;
}

RegimeSpec stochastic_gaussian(double intercept, double slope, double sd) {
  if (!(sd > 0.0)) throw InvalidArgument("stochastic regime sd must be positive");
  RegimeSpec g = stochastic_bernoulli(intercept, slope);
  g.sd = sd;
  return g;
}

RegimeSpec shift(double delta) {
  if (!std::isfinite(delta)) throw InvalidArgument("shift delta must be finite");
  RegimeSpec g;
  g.variant = RegimeVariant::shift;
  g.delta = delta;
  return g;
}

RegimeSpec threshold(double theta) {
  if (std::isnan(theta)) throw InvalidArgument("threshold theta must not be NaN");
  RegimeSpec g;
  g.variant = RegimeVariant::threshold;
  g.theta = theta;
  return g;
}

RegimeSpec incremental(double multiplier) {
  if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
    throw InvalidArgument("incremental odds multiplier must be positive and finite, got " +
                          format_double(multiplier));
  }
  RegimeSpec g;
  g.variant = RegimeVariant::incremental;
  g.multiplier = multiplier;
  return g;
}

namespace {

double parse_number(const std::string& text, const std::string& what) {
  if (text == "-inf" || text == "-Infinity") return -kInfinity;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0') throw InvalidArgument("bad number '" + text + "' for " + what);
  return v;
}

// Builds a regime from a variant name and its numeric arguments; unknown
// names and keys raise InvalidArgument naming them.
RegimeSpec build(const std::string& variant, const std::map<std::string, double>& args) {
  auto get = [&](const char* key, std::optional<double> fallback = std::nullopt) {
    auto it = args.find(key);
    if (it != args.end()) return it->second;
    if (fallback) return *fallback;
    throw InvalidArgument("regime '" + variant + "' needs '" + key + "'");
  };
  auto allow = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : args) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
        throw InvalidArgument("regime '" + variant + "' has no parameter '" + k + "'");
      }
    }
  };
  if (variant == "null" || variant == "natural") {
    allow({});
    return null_regime();
  }
  if (variant == "always_treat") {
    allow({});
    return always_treat();
  }
  if (variant == "never_treat") {
    allow({});
    return never_treat();
  }
  if (variant == "point_mass") {
    allow({"value"});
    return point_mass(get("value"));
  }
  if (variant == "deterministic_dynamic" || variant == "dynamic") {
    allow({"cutoff", "above", "below"});
    return deterministic_dynamic(get("cutoff"), get("above", 1.0), get("below", 0.0));
  }
  if (variant == "stochastic_prespecified" || variant == "stochastic") {
    allow({"intercept", "slope", "sd"});
    const double sd = get("sd", 0.0);
    return sd > 0.0 ? stochastic_gaussian(get("intercept"), get("slope", 0.0), sd)
                    : stochastic_bernoulli(get("intercept"), get("slope", 0.0));
  }
  if (variant == "shift") {
    allow({"delta"});
    return shift(get("delta"));
  }
  if (variant == "threshold") {
    allow({"theta"});
    return threshold(get("theta"));
  }
  if (variant == "incremental") {
    allow({"multiplier", "odds_multiplier"});
    return incremental(args.contains("odds_multiplier") ? get("odds_multiplier") : get("multiplier"));
  }
  throw InvalidArgument("unknown regime variant '" + variant + "'");
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

RegimeSpec parse_regime(std::string_view text) {
  const auto colon = text.find(':');
  const std::string variant = trim(text.substr(0, colon));
  std::map<std::string, double> args;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw InvalidArgument("regime argument '" + trim(item) + "' is not key=value");
      }
      const std::string key = trim(item.substr(0, eq));
      args[key] = parse_number(trim(item.substr(eq + 1)), key);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  return build(variant, args);
}

RegimeSpec regime_from_json(const nlohmann::json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return parse_regime(j.get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ConfigError(path, e.what());
    }
  }
  if (!j.is_object()) throw ConfigError(path, "expected a table or a string");
  if (!j.contains("variant") || !j["variant"].is_string()) {
    throw ConfigError(path + ".variant", "missing regime variant name");
  }
  const std::string variant = j["variant"].get<std::string>();
  std::map<std::string, double> args;
  for (const auto& [key, value] : j.items()) {
    if (key == "variant") continue;
    if (value.is_number()) {
      args[key] = value.get<double>();
    } else if (value.is_string()) {
      try {
        args[key] = parse_number(value.get<std::string>(), key);
      } catch (const InvalidArgument& e) {
        throw ConfigError(path + "." + key, e.what());
      }
    } else {
      throw ConfigError(path + "." + key, "expected a number");
    }
  }
  try {
    return build(variant, args);
  } catch (const InvalidArgument& e) {
    const bool unknown_variant = std::string_view(e.what()).starts_with("unknown regime variant");
    throw ConfigError(unknown_variant ? path + ".variant" : path, e.what());
  }
}

nlohmann::json to_json(const RegimeSpec& g) {
  nlohmann::json j;
  j["variant"] = std::string(to_string(g.variant));
  switch (g.variant) {
    case RegimeVariant::null: break;
    case RegimeVariant::point_mass:
      if (g.rule) j["rule"] = g.rule_label;
      else j["value"] = g.value;
      break;
    case RegimeVariant::deterministic_dynamic:
      j["cutoff"] = g.cutoff;
      j["above"] = g.above;
      j["below"] = g.below;
      break;
    case RegimeVariant::stochastic_prespecified:
      j["intercept"] = g.intercept;
      j["slope"] = g.slope;
      j["sd"] = g.sd;
      break;
    case RegimeVariant::shift: j["delta"] = g.delta; break;
    case RegimeVariant::threshold:
      if (std::isinf(g.theta)) j["theta"] = format_double(g.theta);
      else j["theta"] = g.theta;
      break;
    case RegimeVariant::incremental: j["multiplier"] = g.multiplier; break;
  }
  return j;
}

namespace {

const DiscreteLaw* binary_law(const TreatmentLaw& propensity) {
  const auto* d = std::get_if<DiscreteLaw>(&propensity);
  if (d && d->support.size() == 2 && d->support[0] == 0.0 && d->support[1] == 1.0) return d;
  return nullptr;
}

}  // namespace

TreatmentLaw regime_law(const RegimeSpec& g, std::span<const double> f_summary,
                        const TreatmentLaw& propensity) {
  const double l = f_summary.empty() ? 0.0 : f_summary[0];
  switch (g.variant) {
    case RegimeVariant::null:
      return propensity;
    case RegimeVariant::point_mass:
      return PointMassLaw{g.rule ? g.rule(f_summary) : g.value};
    case RegimeVariant::deterministic_dynamic:
      return PointMassLaw{l >= g.cutoff ? g.above : g.below};
    case RegimeVariant::stochastic_prespecified: {
      const double mean = g.intercept + g.slope * l;
      if (g.sd > 0.0) return GaussianLaw{mean, g.sd};
      const double p = std::clamp(mean, 0.0, 1.0);
      return DiscreteLaw{{0.0, 1.0}, {1.0 - p, p}};
    }
    case RegimeVariant::shift: {
      const auto* gauss = std::get_if<GaussianLaw>(&propensity);
      if (!gauss) throw InvalidArgument("shift needs a continuous (Gaussian) treatment law");
      if (g.delta == 0.0) return propensity;
      return GaussianLaw{gauss->mean + g.delta, gauss->sd};
    }
    case RegimeVariant::threshold: {
      if (g.theta == -kInfinity) return propensity;
      if (const auto* gauss = std::get_if<GaussianLaw>(&propensity)) {
        return ThresholdGaussianLaw{gauss->mean, gauss->sd, g.theta};
      }
      if (const auto* d = std::get_if<DiscreteLaw>(&propensity)) {
        // pushforward of max(A, theta), merging atoms that coincide
        DiscreteLaw out;
        for (std::size_t k = 0; k < d->support.size(); ++k) {
          const double a = std::max(d->support[k], g.theta);
          auto it = std::find(out.support.begin(), out.support.end(), a);
          if (it == out.support.end()) {
            out.support.push_back(a);
            out.probs.push_back(d->probs[k]);
          } else {
            out.probs[static_cast<std::size_t>(it - out.support.begin())] += d->probs[k];
          }
        }
        return out;
      }
      throw InvalidArgument("threshold needs a Gaussian or discrete treatment law");
    }
    case RegimeVariant::incremental: {
      const DiscreteLaw* d = binary_law(propensity);
      if (!d) throw InvalidArgument("incremental intervention needs a binary treatment");
      if (g.multiplier == 1.0) return propensity;
      const double pi = d->probs[1];
      const double shifted = g.multiplier * pi / (g.multiplier * pi + 1.0 - pi);
      return DiscreteLaw{{0.0, 1.0}, {1.0 - shifted, shifted}};
    }
  }
  return propensity;
}

double sample_regime(const RegimeSpec& g, std::span<const double> f_summary,
                     const TreatmentLaw& propensity, const TreatmentDraw& draw) {
  switch (g.variant) {
    case RegimeVariant::null:
      return sample(propensity, draw);
    case RegimeVariant::shift:
      // natural value, then shifted; regime_law checks the treatment type
      (void)regime_law(g, f_summary, propensity);
      return sample(propensity, draw) + g.delta;
    case RegimeVariant::threshold:
      (void)regime_law(g, f_summary, propensity);
      return std::max(sample(propensity, draw), g.theta);
    default:
      return sample(regime_law(g, f_summary, propensity), draw);
  }
}

double density_ratio(const RegimeSpec& g, std::span<const double> f_summary,
                     const TreatmentLaw& propensity, double observed_a) {
  if (g.variant == RegimeVariant::null) return 1.0;
  return density_ratio(regime_law(g, f_summary, propensity), propensity, observed_a);
}

double sample_regime(const RegimeSpec& g, const HistoryView& h, const DgpSpec& spec,
                     const TreatmentDraw& draw) {
  if (h.current_treatment) throw InvalidArgument("regime draws need a history without current treatment");
  return sample_regime(g, h.summary, propensity_law(spec, h.summary), draw);
}

double density_ratio(const RegimeSpec& g, const HistoryView& h, double observed_a, const DgpSpec& spec) {
  if (h.current_treatment) throw InvalidArgument("density ratios need a history without current treatment");
  return density_ratio(g, h.summary, propensity_law(spec, h.summary), observed_a);
}

TreatmentPolicy regime_policy(const RegimeSpec& g, const DgpSpec& spec) {
  return [g, &spec](std::size_t, std::span<const double> s, const TreatmentDraw& draw) {
    return sample_regime(g, s, propensity_law(spec, s), draw);
  };
}

}  // namespace contregime
