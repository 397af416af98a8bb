#include "privmarket/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include "privmarket/anonymize.hpp"

namespace privmarket {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) {
    throw ConfigError(context + " must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(context + ": unknown key '" + key + "'");
    }
  }
}

UserId parse_user_key(const std::string& key, const std::string& context) {
  UserId id = 0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
  if (ec != std::errc{} || ptr != key.data() + key.size()) {
    throw ConfigError(context + ": bad user id key '" + key + "'");
  }
  return id;
}

std::map<UserId, double> user_map_from_json(const json& j,
                                            const std::string& context) {
  std::map<UserId, double> out;
  if (!j.is_object()) {
    throw ConfigError(context + " must map user ids to numbers");
  }
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) {
      throw ConfigError(context + ": value for user " + key +
                        " must be a number");
    }
    out[parse_user_key(key, context)] = value.get<double>();
  }
  return out;
}

json user_map_to_json(const std::map<UserId, double>& m) {
  json j = json::object();
  for (const auto& [user, value] : m) j[std::to_string(user)] = value;
  return j;
}

}  // namespace

OracleSpec oracle_spec_from_json(const json& j) {
  check_keys(j,
             {"kind", "weights", "base", "rho", "test_fraction", "split_seed",
              "iterations", "step", "l2"},
             "oracle");
  if (!j.contains("kind")) throw ConfigError("oracle: missing 'kind'");
  OracleSpec spec;
  spec.kind = oracle_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("weights")) {
    spec.weights = user_map_from_json(j.at("weights"), "oracle.weights");
  }
  spec.base = j.value("base", 0.0);
  spec.rho = j.value("rho", 1.0);
  spec.test_fraction = j.value("test_fraction", 0.3);
  spec.split_seed = j.value("split_seed", std::uint64_t{0});
  spec.params.iterations = j.value("iterations", 300);
  spec.params.step = j.value("step", 0.1);
  spec.params.l2 = j.value("l2", 1e-4);
  return spec;
}

json oracle_spec_to_json(const OracleSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  if (spec.kind == OracleKind::Classifier) {
    j["test_fraction"] = spec.test_fraction;
    j["split_seed"] = spec.split_seed;
    j["iterations"] = spec.params.iterations;
    j["step"] = spec.params.step;
    j["l2"] = spec.params.l2;
  } else {
    j["weights"] = user_map_to_json(spec.weights);
    if (spec.kind == OracleKind::Harm) {
      j["base"] = spec.base;
      j["rho"] = spec.rho;
    }
  }
  return j;
}

namespace {

AccuracyOracle build_oracle(const OracleSpec& spec, Dataset test_set) {
  switch (spec.kind) {
    case OracleKind::Additive:
      return AccuracyOracle::additive({spec.weights});
    case OracleKind::Diminishing:
      return AccuracyOracle::diminishing({spec.weights});
    case OracleKind::Harm:
      return AccuracyOracle::harm({spec.weights, spec.base, spec.rho});
    case OracleKind::Classifier:
      return AccuracyOracle::classifier(std::move(test_set), spec.params);
  }
  throw ConfigError("unreachable oracle kind");
}

}  // namespace

Experiment prepare_experiment(const OracleSpec& spec,
                              const std::optional<Dataset>& data,
                              const std::map<UserId, double>& privacy,
                              std::uint64_t noise_seed) {
  Dataset train_source;
  Dataset test_set;
  std::vector<std::string> warnings;
  if (spec.kind == OracleKind::Classifier) {
    if (!data || data->empty()) {
      throw ConfigError("the classifier oracle requires a dataset");
    }
    SplitResult parts = split(*data, {spec.test_fraction, spec.split_seed});
    warnings = std::move(parts.warnings);
    train_source = std::move(parts.train);
    test_set = std::move(parts.test);
  } else if (data) {
    train_source = *data;
  }

  std::map<UserId, std::vector<Record>> by_user;
  for (const Record& r : train_source.records()) {
    if (r.owner.kind != OwnerKind::User) {
      throw StructuralError(
          "market construction expects user-owned records, found " +
          to_string(r.owner));
    }
    by_user[r.owner.value].push_back(r);
  }

  std::set<UserId> users;
  for (const auto& [id, rs] : by_user) users.insert(id);
  for (const auto& [id, w] : spec.weights) users.insert(id);
  for (const auto& [id, p] : privacy) {
    if (!users.contains(id)) {
      throw ConfigError("privacy level given for unknown user " +
                        std::to_string(id));
    }
  }

  MarketState::Builder builder;
  builder.noise_seed(noise_seed);
  std::map<UserId, Dataset> true_data;
  for (UserId id : users) {
    const auto it = by_user.find(id);
    Dataset own = it == by_user.end()
                      ? Dataset{}
                      : Dataset(std::move(it->second), train_source.dim());
    const auto pit = privacy.find(id);
    const PrivacyLevel level(pit == privacy.end() ? 0.0 : pit->second);
    builder.add(make_submission(
        id, anonymize(own, {level, noise_seed}), level));
    true_data.emplace(id, std::move(own));
  }

  return Experiment{std::move(builder).build(),
                    build_oracle(spec, std::move(test_set)),
                    std::move(true_data), std::move(warnings)};
}

MarketState with_privacy_level(const Experiment& exp, UserId user, double p) {
  const auto it = exp.true_data.find(user);
  if (it == exp.true_data.end()) {
    throw LookupError("unknown user " + std::to_string(user));
  }
  const PrivacyLevel level(p);
  return exp.market.with_submission(make_submission(
      user, anonymize(it->second, {level, exp.market.noise_seed()}), level));
}

std::vector<StandaloneEntry> standalone_accuracy(
    const MarketState& market, const AccuracyOracle& oracle) {
  std::vector<StandaloneEntry> rows;
  for (const auto& [id, sub] : market.submissions()) {
    const UserId user = id;
    rows.push_back({user, oracle.evaluate(market, {&user, 1}),
                    sub.data.size()});
  }
  return rows;
}

namespace {

void validate_grid(const SweepGrid& g) {
  if (g.grid.empty()) {
    throw ConfigError("sweep grid for user " + std::to_string(g.user) +
                      " is empty");
  }
  for (std::size_t i = 0; i < g.grid.size(); ++i) {
    if (!(g.grid[i] >= 0.0)) {
      throw ConfigError("sweep grid values must be >= 0");
    }
    if (i > 0 && !(g.grid[i] > g.grid[i - 1])) {
      throw ConfigError("sweep grid must be strictly increasing");
    }
  }
}

// Smallest p in [lo, hi] with payoff(p) < -eps, to 1e-3 resolution.
// Requires payoff(lo) >= -eps and payoff(hi) < -eps.
double bisect_crossing(const std::function<double(double)>& payoff_at,
                       double lo, double hi, double eps) {
  constexpr double kTol = 1e-3;
  while (hi - lo > kTol) {
    const double mid = 0.5 * (lo + hi);
    if (payoff_at(mid) < -eps) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SweepResult privacy_sweep(const SweepConfig& cfg,
                          const std::optional<Dataset>& data) {
  if (cfg.varying.empty()) {
    throw ConfigError("sweep needs at least one varying user");
  }
  for (const SweepGrid& g : cfg.varying) validate_grid(g);

  const Experiment exp =
      prepare_experiment(cfg.oracle, data, cfg.fixed_privacy, cfg.seed);
  const std::vector<UserId> users = exp.market.users();

  SweepResult result;
  result.seed = cfg.seed;
  result.epsilon = cfg.epsilon.value_or(exp.oracle.default_epsilon());

  for (const SweepGrid& g : cfg.varying) {
    if (!exp.market.has_user(g.user)) {
      throw LookupError("varying user " + std::to_string(g.user) +
                        " is not in the market");
    }
    const auto payoff_at = [&](double p) {
      const MarketState varied = with_privacy_level(exp, g.user, p);
      const double f_full = exp.oracle.evaluate(varied, users);
      std::vector<UserId> rest;
      rest.reserve(users.size() - 1);
      for (UserId u : users) {
        if (u != g.user) rest.push_back(u);
      }
      return std::pair(f_full, f_full - exp.oracle.evaluate(varied, rest));
    };

    UserSweepSummary summary;
    for (std::size_t i = 0; i < g.grid.size(); ++i) {
      const double p = g.grid[i];
      const auto [f_full, payoff] = payoff_at(p);
      result.rows.push_back({g.user, p, f_full, payoff});
      if (!summary.critical_point && payoff < -result.epsilon) {
        summary.critical_point = p;
        if (cfg.refine && exp.oracle.is_synthetic()) {
          const double lo = i == 0 ? 0.0 : g.grid[i - 1];
          summary.refined_critical = bisect_crossing(
              [&](double q) { return payoff_at(q).second; }, lo, p,
              result.epsilon);
        }
      }
      if (!summary.over_anonymization && payoff < 0.0) {
        summary.over_anonymization = p;
      }
    }
    result.summary.emplace(g.user, summary);
  }
  return result;
}

CoalitionReport coalition_experiment(const MarketState& market,
                                     const AccuracyOracle& oracle,
                                     CoalitionId id, ShapleyMethod method,
                                     const ShapleySettings& settings) {
  CoalitionReport report;
  const Coalition& c = market.coalition(id);
  report.id = id;
  report.members = c.members;
  report.k_anonymity = k_anonymity_level(c);
  report.payoff = coalition_payoff(market, oracle, id);

  const CharacteristicFunction v(market, oracle, id);
  report.shapley =
      method == ShapleyMethod::Exact
          ? shapley_exact(v, settings.exact_limit)
          : shapley_monte_carlo(v, settings.permutations, settings.seed);

  for (UserId member : c.members) {
    CoalitionMemberRow row;
    row.user = member;
    row.shapley_value = report.shapley.allocations.at(member);
    row.standalone_payoff = vcg_payoff(market, oracle, member);
    if (const auto it = report.shapley.standard_error.find(member);
        it != report.shapley.standard_error.end()) {
      row.standard_error = it->second;
    }
    report.table.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Emission

nlohmann::json to_json(const PayoffReport& report) {
  json users = json::array();
  for (const UserPayoff& u : report.users) {
    users.push_back({{"user", u.user},
                     {"payoff", u.payoff},
                     {"class", to_string(u.contribution)}});
  }
  return {{"type", "payoffs"},
          {"f_full", report.f_full},
          {"epsilon", report.epsilon},
          {"users", users}};
}

PayoffReport payoff_report_from_json(const json& j) {
  check_keys(j, {"type", "f_full", "epsilon", "users"}, "payoffs report");
  PayoffReport report;
  report.f_full = j.at("f_full").get<double>();
  report.epsilon = j.at("epsilon").get<double>();
  for (const json& u : j.at("users")) {
    report.users.push_back(
        {u.at("user").get<UserId>(), u.at("payoff").get<double>(),
         contribution_from_string(u.at("class").get<std::string>())});
  }
  return report;
}

void write_csv(const PayoffReport& report, std::ostream& out) {
  out << "user,payoff,class\n";
  for (const UserPayoff& u : report.users) {
    out << u.user << ',' << format_double(u.payoff) << ','
        << to_string(u.contribution) << '\n';
  }
}

nlohmann::json to_json(const SweepResult& result, const SweepConfig& cfg) {
  json rows = json::array();
  for (const SweepRow& r : result.rows) {
    rows.push_back({{"user", r.user},
                    {"p", r.p},
                    {"f_full", r.f_full},
                    {"payoff", r.payoff}});
  }
  json summary = json::object();
  for (const auto& [user, s] : result.summary) {
    json entry;
    entry["critical_point"] =
        s.critical_point ? json(*s.critical_point) : json(nullptr);
    entry["over_anonymization"] =
        s.over_anonymization ? json(*s.over_anonymization) : json(nullptr);
    entry["refined_critical"] =
        s.refined_critical ? json(*s.refined_critical) : json(nullptr);
    summary[std::to_string(user)] = entry;
  }
  return {{"type", "sweep"},
          {"epsilon", result.epsilon},
          {"seed", result.seed},
          {"rows", rows},
          {"summary", summary},
          {"config", sweep_config_to_json(cfg)}};
}

SweepResult sweep_result_from_json(const json& j) {
  check_keys(j, {"type", "epsilon", "seed", "rows", "summary", "config"},
             "sweep report");
  SweepResult result;
  result.epsilon = j.at("epsilon").get<double>();
  result.seed = j.at("seed").get<std::uint64_t>();
  for (const json& r : j.at("rows")) {
    result.rows.push_back({r.at("user").get<UserId>(), r.at("p").get<double>(),
                           r.at("f_full").get<double>(),
                           r.at("payoff").get<double>()});
  }
  for (const auto& [key, s] : j.at("summary").items()) {
    UserSweepSummary summary;
    if (!s.at("critical_point").is_null()) {
      summary.critical_point = s.at("critical_point").get<double>();
    }
    if (!s.at("over_anonymization").is_null()) {
      summary.over_anonymization = s.at("over_anonymization").get<double>();
    }
    if (!s.at("refined_critical").is_null()) {
      summary.refined_critical = s.at("refined_critical").get<double>();
    }
    result.summary[parse_user_key(key, "sweep summary")] = summary;
  }
  return result;
}

void write_csv(const SweepResult& result, std::ostream& out) {
  out << "user,p,f_full,payoff\n";
  for (const SweepRow& r : result.rows) {
    out << r.user << ',' << format_double(r.p) << ','
        << format_double(r.f_full) << ',' << format_double(r.payoff) << '\n';
  }
}

nlohmann::json to_json(const std::vector<StandaloneEntry>& rows) {
  json arr = json::array();
  for (const StandaloneEntry& r : rows) {
    arr.push_back({{"user", r.user},
                   {"accuracy", r.accuracy},
                   {"records", r.records}});
  }
  return {{"type", "standalone"}, {"rows", arr}};
}

void write_csv(const std::vector<StandaloneEntry>& rows, std::ostream& out) {
  out << "user,accuracy,records\n";
  for (const StandaloneEntry& r : rows) {
    out << r.user << ',' << format_double(r.accuracy) << ',' << r.records
        << '\n';
  }
}

nlohmann::json to_json(const CoalitionReport& report) {
  json table = json::array();
  for (const CoalitionMemberRow& row : report.table) {
    table.push_back({{"user", row.user},
                     {"shapley", row.shapley_value},
                     {"standalone", row.standalone_payoff},
                     {"stderr", row.standard_error}});
  }
  return {{"type", "coalition"},
          {"id", report.id},
          {"members", report.members},
          {"k_anonymity", report.k_anonymity},
          {"payoff", report.payoff},
          {"method", to_string(report.shapley.method)},
          {"permutations", report.shapley.permutations},
          {"table", table}};
}

void write_csv(const CoalitionReport& report, std::ostream& out) {
  out << "user,shapley,standalone,stderr\n";
  for (const CoalitionMemberRow& row : report.table) {
    out << row.user << ',' << format_double(row.shapley_value) << ','
        << format_double(row.standalone_payoff) << ','
        << format_double(row.standard_error) << '\n';
  }
}

nlohmann::json to_json(const FilterResult& result) {
  return {{"type", "filter"},
          {"excluded", result.excluded},
          {"retained", result.retained.users()},
          {"payoffs", to_json(result.payoffs)}};
}

void write_csv(const FilterResult& result, std::ostream& out) {
  write_csv(result.payoffs, out);
}

SweepConfig sweep_config_from_json(const json& j) {
  check_keys(j,
             {"oracle", "privacy", "vary", "seed", "epsilon", "refine",
              "dataset", "out_csv", "out_json"},
             "sweep config");
  SweepConfig cfg;
  if (!j.contains("oracle")) throw ConfigError("sweep config: missing 'oracle'");
  cfg.oracle = oracle_spec_from_json(j.at("oracle"));
  if (j.contains("privacy")) {
    cfg.fixed_privacy = user_map_from_json(j.at("privacy"), "sweep privacy");
  }
  if (!j.contains("vary")) throw ConfigError("sweep config: missing 'vary'");
  for (const json& v : j.at("vary")) {
    check_keys(v, {"user", "grid"}, "sweep vary entry");
    SweepGrid g;
    g.user = v.at("user").get<UserId>();
    g.grid = v.at("grid").get<std::vector<double>>();
    cfg.varying.push_back(std::move(g));
  }
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("epsilon") && !j.at("epsilon").is_null()) {
    cfg.epsilon = j.at("epsilon").get<double>();
  }
  cfg.refine = j.value("refine", true);
  cfg.dataset_path = j.value("dataset", std::string{});
  cfg.out_csv = j.value("out_csv", std::string{});
  cfg.out_json = j.value("out_json", std::string{});
  return cfg;
}

nlohmann::json sweep_config_to_json(const SweepConfig& cfg) {
  json vary = json::array();
  for (const SweepGrid& g : cfg.varying) {
    vary.push_back({{"user", g.user}, {"grid", g.grid}});
  }
  json j = {{"oracle", oracle_spec_to_json(cfg.oracle)},
            {"privacy", user_map_to_json(cfg.fixed_privacy)},
            {"vary", vary},
            {"seed", cfg.seed},
            {"epsilon", cfg.epsilon ? json(*cfg.epsilon) : json(nullptr)},
            {"refine", cfg.refine}};
  if (!cfg.dataset_path.empty()) j["dataset"] = cfg.dataset_path;
  if (!cfg.out_csv.empty()) j["out_csv"] = cfg.out_csv;
  if (!cfg.out_json.empty()) j["out_json"] = cfg.out_json;
  return j;
}

std::string report_json_to_csv(const json& j) {
  if (!j.is_object() || !j.contains("type")) {
    throw FormatError("report JSON must carry a 'type' tag");
  }
  const std::string type = j.at("type").get<std::string>();
  std::ostringstream out;
  if (type == "payoffs") {
    write_csv(payoff_report_from_json(j), out);
  } else if (type == "sweep") {
    write_csv(sweep_result_from_json(j), out);
  } else if (type == "standalone") {
    out << "user,accuracy,records\n";
    for (const json& r : j.at("rows")) {
      out << r.at("user").get<UserId>() << ','
          << format_double(r.at("accuracy").get<double>()) << ','
          << r.at("records").get<std::size_t>() << '\n';
    }
  } else if (type == "coalition") {
    out << "user,shapley,standalone,stderr\n";
    for (const json& r : j.at("table")) {
      out << r.at("user").get<UserId>() << ','
          << format_double(r.at("shapley").get<double>()) << ','
          << format_double(r.at("standalone").get<double>()) << ','
          << format_double(r.at("stderr").get<double>()) << '\n';
    }
  } else if (type == "filter") {
    write_csv(payoff_report_from_json(j.at("payoffs")), out);
  } else {
    throw FormatError("unknown report type: '" + type + "'");
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out.good()) throw IoError("write failed: " + path);
}

}  // namespace privmarket
