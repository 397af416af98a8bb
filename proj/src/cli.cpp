#include "privmarket/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "privmarket/anonymize.hpp"
#include "privmarket/experiments.hpp"
#include "privmarket/ingest.hpp"
#include "privmarket/rng.hpp"

namespace privmarket {

namespace {

using nlohmann::json;

std::map<UserId, double> privacy_from_json(const json& j) {
  if (j.is_string()) return parse_privacy_map(j.get<std::string>());
  std::map<UserId, double> out;
  if (!j.is_object()) {
    throw ConfigError("privacy must be an object or a 'user:level' string");
  }
  for (const auto& [key, value] : j.items()) {
    UserId id = 0;
    const auto [ptr, ec] =
        std::from_chars(key.data(), key.data() + key.size(), id);
    if (ec != std::errc{} || ptr != key.data() + key.size()) {
      throw ConfigError("privacy: bad user id '" + key + "'");
    }
    out[id] = value.get<double>();
  }
  return out;
}

json user_map_to_echo(const std::map<UserId, double>& m) {
  json j = json::object();
  for (const auto& [user, value] : m) j[std::to_string(user)] = value;
  return j;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

/// `--oracle` accepts inline JSON or a path to a JSON file.
json oracle_json_from_string(const std::string& text) {
  if (!text.empty() && text.front() == '{') {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("bad inline oracle JSON: ") + e.what());
    }
  }
  return load_json_file(text);
}

/// Holds every recognized flag; each subcommand only registers its subset.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::optional<std::string> input;
  std::optional<std::string> oracle;
  std::optional<std::string> privacy;
  std::optional<std::string> out;
  std::optional<std::string> json_out;
  std::optional<std::string> members;
  std::optional<std::string> method;
  std::optional<std::string> in_path;
  std::optional<std::string> format;
  std::optional<double> p;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> permutations;
  std::optional<std::uint64_t> exact_limit;
  std::optional<int> window;
  std::optional<int> downsample;
};

/// Effective per-command configuration: config-file values overridden by
/// flags, with unknown config keys rejected.
class Effective {
 public:
  Effective(const Flags& flags, const std::set<std::string>& allowed)
      : flags_(flags) {
    if (flags.config) {
      config_ = load_json_file(*flags.config);
      if (!config_.is_object()) {
        throw ConfigError("config file must hold a JSON object");
      }
      for (const auto& [key, value] : config_.items()) {
        if (!allowed.contains(key)) {
          throw ConfigError("config: unknown key '" + key + "'");
        }
      }
    }
  }

  template <typename T>
  std::optional<T> pick(const std::optional<T>& flag,
                        const std::string& key) const {
    if (flag) return flag;
    if (config_.contains(key)) return config_.at(key).get<T>();
    return std::nullopt;
  }

  std::optional<json> pick_json(const std::optional<std::string>& flag,
                                const std::string& key,
                                bool flag_is_oracle = false) const {
    if (flag) {
      return flag_is_oracle ? oracle_json_from_string(*flag) : json(*flag);
    }
    if (config_.contains(key)) return config_.at(key);
    return std::nullopt;
  }

  std::uint64_t seed() const {
    if (const auto s = pick(flags_.seed, "seed")) return *s;
    if (const char* env = std::getenv("PRIVMARKET_SEED")) {
      std::uint64_t v = 0;
      const std::string text(env);
      const auto [ptr, ec] =
          std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("PRIVMARKET_SEED is not a valid integer: '" +
                          text + "'");
      }
      return v;
    }
    return 0;
  }

  OracleSpec oracle_spec() const {
    const auto j = pick_json(flags_.oracle, "oracle", /*flag_is_oracle=*/true);
    if (!j) throw ConfigError("an --oracle specification is required");
    if (j->is_string()) return oracle_spec_from_json(load_json_file(*j));
    return oracle_spec_from_json(*j);
  }

  std::map<UserId, double> privacy() const {
    if (flags_.privacy) return parse_privacy_map(*flags_.privacy);
    if (config_.contains("privacy")) {
      return privacy_from_json(config_.at("privacy"));
    }
    return {};
  }

  std::optional<Dataset> dataset() const {
    const auto path = pick(flags_.dataset, "dataset");
    if (!path || path->empty()) return std::nullopt;
    return read_csv_file(*path);
  }

  const json& raw_config() const { return config_; }
  const Flags& flags() const { return flags_; }

 private:
  const Flags& flags_;
  json config_ = json::object();
};

void log_run(const std::string& command, std::uint64_t seed,
             const json& echo) {
  std::cerr << "info: command=" << command << " seed=" << seed << '\n';
  std::cerr << "info: config=" << echo.dump() << '\n';
}

/// CSV goes to --out when given, stdout otherwise; JSON only on request.
void emit_outputs(const std::string& csv, const json& report,
                  const std::optional<std::string>& out,
                  const std::optional<std::string>& json_out) {
  if (out && !out->empty()) {
    write_text_file(*out, csv);
  } else {
    std::cout << csv;
  }
  if (json_out && !json_out->empty()) {
    write_text_file(*json_out, report.dump(2) + "\n");
  }
}

Experiment prepare_from(const Effective& eff) {
  return prepare_experiment(eff.oracle_spec(), eff.dataset(), eff.privacy(),
                            eff.seed());
}

void warn_all(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
}

// --------------------------------------------------------------------------
// Command runners

int run_ingest(const Effective& eff) {
  const auto input = eff.pick(eff.flags().input, "input");
  const auto out = eff.pick(eff.flags().out, "out");
  if (!input) throw ConfigError("ingest requires --input");
  if (!out) throw ConfigError("ingest requires --out");
  const int window = eff.pick(eff.flags().window, "window").value_or(200);
  const int downsample =
      eff.pick(eff.flags().downsample, "downsample").value_or(5);
  log_run("ingest", 0,
          {{"input", *input}, {"out", *out}, {"window", window},
           {"downsample", downsample}});

  const RawSeries series = parse_raw_file(*input);
  std::cerr << "info: parsed=" << series.parsed_lines
            << " malformed=" << series.malformed_lines
            << " users=" << series.users().size() << '\n';
  for (const auto& [name, code] : label_codes(series)) {
    std::cerr << "info: label " << code << " = " << name << '\n';
  }
  const Dataset data = windowize(series, window, downsample);
  std::cerr << "info: records=" << data.size() << " dim=" << data.dim()
            << '\n';
  write_csv_file(data, *out);
  return 0;
}

int run_anonymize(const Effective& eff) {
  const auto dataset = eff.pick(eff.flags().dataset, "dataset");
  const auto out = eff.pick(eff.flags().out, "out");
  const auto p = eff.pick(eff.flags().p, "p");
  if (!dataset) throw ConfigError("anonymize requires --dataset");
  if (!out) throw ConfigError("anonymize requires --out");
  if (!p) throw ConfigError("anonymize requires --p");
  const std::uint64_t seed = eff.seed();
  log_run("anonymize", seed,
          {{"dataset", *dataset}, {"out", *out}, {"p", *p}});
  const Dataset data = read_csv_file(*dataset);
  write_csv_file(anonymize(data, {PrivacyLevel(*p), seed}), *out);
  return 0;
}

int run_accuracy(const Effective& eff) {
  const Experiment exp = prepare_from(eff);
  warn_all(exp.warnings);
  log_run("accuracy", eff.seed(),
          {{"oracle", oracle_spec_to_json(eff.oracle_spec())},
           {"privacy", user_map_to_echo(eff.privacy())}});
  const double value = exp.oracle.evaluate(exp.market, exp.market.users());
  const json report = {{"type", "accuracy"},
                       {"accuracy", value},
                       {"f_empty", exp.oracle.empty_value()}};
  const auto json_out = eff.pick(eff.flags().json_out, "json");
  if (json_out && !json_out->empty()) {
    write_text_file(*json_out, report.dump(2) + "\n");
  } else {
    std::cout << report.dump(2) << '\n';
  }
  return 0;
}

int run_payoffs(const Effective& eff) {
  const Experiment exp = prepare_from(eff);
  warn_all(exp.warnings);
  log_run("payoffs", eff.seed(),
          {{"oracle", oracle_spec_to_json(eff.oracle_spec())},
           {"privacy", user_map_to_echo(eff.privacy())}});
  const PayoffReport report = payoffs_all(
      exp.market, exp.oracle, eff.pick(eff.flags().epsilon, "epsilon"));
  std::ostringstream csv;
  write_csv(report, csv);
  emit_outputs(csv.str(), to_json(report), eff.pick(eff.flags().out, "out"),
               eff.pick(eff.flags().json_out, "json"));
  return 0;
}

int run_filter(const Effective& eff) {
  const Experiment exp = prepare_from(eff);
  warn_all(exp.warnings);
  log_run("filter", eff.seed(),
          {{"oracle", oracle_spec_to_json(eff.oracle_spec())},
           {"privacy", user_map_to_echo(eff.privacy())}});
  const FilterResult result = filter_negative_contributors(
      exp.market, exp.oracle, eff.pick(eff.flags().epsilon, "epsilon"));
  for (UserId u : result.excluded) {
    std::cerr << "info: excluded user " << u << '\n';
  }
  std::ostringstream csv;
  write_csv(result, csv);
  emit_outputs(csv.str(), to_json(result), eff.pick(eff.flags().out, "out"),
               eff.pick(eff.flags().json_out, "json"));
  return 0;
}

int run_standalone(const Effective& eff) {
  const Experiment exp = prepare_from(eff);
  warn_all(exp.warnings);
  log_run("standalone", eff.seed(),
          {{"oracle", oracle_spec_to_json(eff.oracle_spec())},
           {"privacy", user_map_to_echo(eff.privacy())}});
  const auto rows = standalone_accuracy(exp.market, exp.oracle);
  std::ostringstream csv;
  write_csv(rows, csv);
  emit_outputs(csv.str(), to_json(rows), eff.pick(eff.flags().out, "out"),
               eff.pick(eff.flags().json_out, "json"));
  return 0;
}

int run_coalition(const Effective& eff, bool full_experiment) {
  const auto members_text = eff.pick(eff.flags().members, "members");
  if (!members_text) throw ConfigError("--members is required");
  const std::vector<UserId> members = parse_member_list(*members_text);
  const ShapleyMethod method = shapley_method_from_string(
      eff.pick(eff.flags().method, "method").value_or("exact"));

  ShapleySettings settings;
  settings.permutations =
      eff.pick(eff.flags().permutations, "permutations").value_or(20000);
  settings.exact_limit =
      eff.pick(eff.flags().exact_limit, "exact_limit").value_or(10);
  settings.seed = rng::derive(eff.seed(), {0x5348u});  // shapley stream

  const Experiment exp = prepare_from(eff);
  warn_all(exp.warnings);
  log_run(full_experiment ? "coalition-exp" : "coalition", eff.seed(),
          {{"members", members},
           {"method", to_string(method)},
           {"permutations", settings.permutations}});

  constexpr CoalitionId kCliCoalition = 1;
  const MarketState market = exp.market.with_coalition(kCliCoalition, members);
  const CoalitionReport report = coalition_experiment(
      market, exp.oracle, kCliCoalition, method, settings);

  json j = to_json(report);
  if (!full_experiment) j.erase("table");
  std::ostringstream csv;
  write_csv(report, csv);
  emit_outputs(csv.str(), j, eff.pick(eff.flags().out, "out"),
               eff.pick(eff.flags().json_out, "json"));
  return 0;
}

int run_sweep(const Effective& eff) {
  if (!eff.flags().config) throw ConfigError("sweep requires --config");
  SweepConfig cfg = sweep_config_from_json(eff.raw_config());
  if (eff.flags().seed) cfg.seed = *eff.flags().seed;
  if (eff.flags().dataset) cfg.dataset_path = *eff.flags().dataset;
  if (eff.flags().out) cfg.out_csv = *eff.flags().out;
  if (eff.flags().json_out) cfg.out_json = *eff.flags().json_out;
  if (eff.flags().epsilon) cfg.epsilon = *eff.flags().epsilon;
  log_run("sweep", cfg.seed, sweep_config_to_json(cfg));

  std::optional<Dataset> data;
  if (!cfg.dataset_path.empty()) data = read_csv_file(cfg.dataset_path);
  const SweepResult result = privacy_sweep(cfg, data);

  std::ostringstream csv;
  write_csv(result, csv);
  if (!cfg.out_csv.empty()) {
    write_text_file(cfg.out_csv, csv.str());
  } else {
    std::cout << csv.str();
  }
  if (!cfg.out_json.empty()) {
    write_text_file(cfg.out_json, to_json(result, cfg).dump(2) + "\n");
  }
  return 0;
}

int run_report(const Effective& eff) {
  const auto in_path = eff.pick(eff.flags().in_path, "in");
  if (!in_path) throw ConfigError("report requires --in");
  const std::string format =
      eff.pick(eff.flags().format, "format").value_or("csv");
  if (format != "csv") {
    throw ConfigError("unsupported report format: '" + format + "'");
  }
  log_run("report", 0, {{"in", *in_path}, {"format", format}});
  const std::string csv = report_json_to_csv(load_json_file(*in_path));
  const auto out = eff.pick(eff.flags().out, "out");
  if (out && !out->empty()) {
    write_text_file(*out, csv);
  } else {
    std::cout << csv;
  }
  return 0;
}

}  // namespace

std::map<UserId, double> parse_privacy_map(const std::string& text) {
  std::map<UserId, double> out;
  if (text.empty()) return out;
  std::istringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const std::size_t colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("privacy entry '" + item +
                        "' must look like 'user:level'");
    }
    UserId id = 0;
    const std::string user_part = item.substr(0, colon);
    const auto [uptr, uec] = std::from_chars(
        user_part.data(), user_part.data() + user_part.size(), id);
    if (uec != std::errc{} || uptr != user_part.data() + user_part.size()) {
      throw ConfigError("privacy entry '" + item + "' has a bad user id");
    }
    const double level = parse_double(item.substr(colon + 1));
    if (out.contains(id)) {
      throw ConfigError("privacy level for user " + std::to_string(id) +
                        " given twice");
    }
    out.emplace(id, level);
  }
  return out;
}

std::vector<UserId> parse_member_list(const std::string& text) {
  std::vector<UserId> members;
  std::istringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    UserId id = 0;
    const auto [ptr, ec] =
        std::from_chars(item.data(), item.data() + item.size(), id);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError("bad member id '" + item + "'");
    }
    members.push_back(id);
  }
  if (members.empty()) throw ConfigError("member list is empty");
  std::vector<UserId> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("member list contains duplicates");
  }
  return sorted;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"privacy-preserving crowdsensing market simulator"};
  app.require_subcommand(1);

  Flags flags;
  const auto add_common = [&](CLI::App* cmd, bool with_oracle) {
    cmd->add_option("--config", flags.config, "JSON config file");
    cmd->add_option("--seed", flags.seed, "base seed (PRIVMARKET_SEED fallback)");
    if (with_oracle) {
      cmd->add_option("--oracle", flags.oracle,
                      "oracle spec (inline JSON or path)");
      cmd->add_option("--dataset", flags.dataset, "dataset CSV path");
      cmd->add_option("--privacy", flags.privacy,
                      "privacy levels, e.g. \"2:4,3:8\"");
    }
  };

  CLI::App* ingest = app.add_subcommand("ingest", "parse raw accelerometer CSV");
  add_common(ingest, false);
  ingest->add_option("--input", flags.input, "raw input path");
  ingest->add_option("--out", flags.out, "dataset CSV output path");
  ingest->add_option("--window", flags.window, "samples per window");
  ingest->add_option("--downsample", flags.downsample, "averaging factor");

  CLI::App* anon = app.add_subcommand("anonymize", "add Gaussian noise");
  add_common(anon, false);
  anon->add_option("--dataset", flags.dataset, "dataset CSV path");
  anon->add_option("--p", flags.p, "noise variance");
  anon->add_option("--out", flags.out, "output CSV path");

  CLI::App* accuracy = app.add_subcommand("accuracy", "evaluate f on a market");
  add_common(accuracy, true);
  accuracy->add_option("--json", flags.json_out, "JSON output path");

  CLI::App* payoffs = app.add_subcommand("payoffs", "per-user VCG payoffs");
  add_common(payoffs, true);
  payoffs->add_option("--epsilon", flags.epsilon, "classification tolerance");
  payoffs->add_option("--out", flags.out, "CSV output path");
  payoffs->add_option("--json", flags.json_out, "JSON output path");

  CLI::App* filter = app.add_subcommand("filter", "drop negative contributors");
  add_common(filter, true);
  filter->add_option("--epsilon", flags.epsilon, "classification tolerance");
  filter->add_option("--out", flags.out, "CSV output path");
  filter->add_option("--json", flags.json_out, "JSON output path");

  CLI::App* standalone =
      app.add_subcommand("standalone", "per-user standalone accuracy");
  add_common(standalone, true);
  standalone->add_option("--out", flags.out, "CSV output path");
  standalone->add_option("--json", flags.json_out, "JSON output path");

  const auto add_coalition_flags = [&](CLI::App* cmd) {
    add_common(cmd, true);
    cmd->add_option("--members", flags.members, "coalition members, e.g. 2,3");
    cmd->add_option("--method", flags.method, "exact|mc");
    cmd->add_option("--permutations", flags.permutations,
                    "Monte Carlo permutations");
    cmd->add_option("--exact-limit", flags.exact_limit,
                    "max members for exact enumeration");
    cmd->add_option("--out", flags.out, "CSV output path");
    cmd->add_option("--json", flags.json_out, "JSON output path");
  };
  CLI::App* coalition =
      app.add_subcommand("coalition", "coalition payoff and Shapley split");
  add_coalition_flags(coalition);
  CLI::App* coalition_exp = app.add_subcommand(
      "coalition-exp", "coalition experiment with standalone comparison");
  add_coalition_flags(coalition_exp);

  CLI::App* sweep = app.add_subcommand("sweep", "privacy level sweep");
  sweep->add_option("--config", flags.config, "sweep config JSON (required)");
  sweep->add_option("--seed", flags.seed, "base seed override");
  sweep->add_option("--dataset", flags.dataset, "dataset CSV override");
  sweep->add_option("--epsilon", flags.epsilon, "tolerance override");
  sweep->add_option("--out", flags.out, "CSV output path override");
  sweep->add_option("--json", flags.json_out, "JSON output path override");

  CLI::App* report = app.add_subcommand("report", "render a JSON report as CSV");
  report->add_option("--in", flags.in_path, "report JSON path");
  report->add_option("--format", flags.format, "output format (csv)");
  report->add_option("--out", flags.out, "output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::set<std::string> market_keys = {"oracle", "dataset", "privacy",
                                             "seed", "epsilon", "out", "json"};
  try {
    if (app.got_subcommand(ingest)) {
      return run_ingest(Effective(
          flags, {"input", "out", "window", "downsample", "seed"}));
    }
    if (app.got_subcommand(anon)) {
      return run_anonymize(
          Effective(flags, {"dataset", "p", "seed", "out"}));
    }
    if (app.got_subcommand(accuracy)) {
      return run_accuracy(Effective(flags, market_keys));
    }
    if (app.got_subcommand(payoffs)) {
      return run_payoffs(Effective(flags, market_keys));
    }
    if (app.got_subcommand(filter)) {
      return run_filter(Effective(flags, market_keys));
    }
    if (app.got_subcommand(standalone)) {
      return run_standalone(Effective(flags, market_keys));
    }
    if (app.got_subcommand(coalition) || app.got_subcommand(coalition_exp)) {
      std::set<std::string> keys = market_keys;
      keys.insert({"members", "method", "permutations", "exact_limit"});
      return run_coalition(Effective(flags, keys),
                           app.got_subcommand(coalition_exp));
    }
    if (app.got_subcommand(sweep)) {
      return run_sweep(Effective(
          flags, {"oracle", "privacy", "vary", "seed", "epsilon", "refine",
                  "dataset", "out_csv", "out_json"}));
    }
    if (app.got_subcommand(report)) {
      return run_report(Effective(flags, {"in", "format", "out"}));
    }
    throw ConfigError("no command selected");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace privmarket
