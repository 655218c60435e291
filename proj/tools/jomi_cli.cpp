// Command-line surface: dataset ingestion or synthetic generation,
// prediction-set construction for selected units, Monte Carlo evaluation and
// desk-scale oracle equivalence checks.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jomi/jomi.hpp"

namespace {

using namespace jomi;

struct RunConfig {
  std::string command;  // predict | evaluate | oracle-check
  std::string dgp;      // homoscedastic | heteroscedastic | logistic | weakfcr | ""
  std::string calib_path;
  std::string test_path;
  std::string rule = "topk";
  std::string method = "jomi";
  std::string family = "abs";
  std::string first_family = "scaled";
  std::string taxonomy = "all";
  std::string cost = "none";
  std::string check = "none";  // none | theorem-band
  double alpha = 0.1;
  double beta = 0.2;
  double q = 0.5;
  double budget = 50.0;
  double rule_param = 5.0;  // lambda / bound for preliminary-set rules
  int k = 10;
  int n = 200;
  int m = 100;
  int trials = 100;
  int n_labels = 2;
  int instances = 200;  // oracle-check instance count
  std::uint64_t seed = 1;
  std::string out;
  std::string detail;  // optional per-unit CSV, execution detail like `out`
};

void load_config(const nlohmann::json& j, RunConfig& c) {
  static const std::vector<std::string> known{
      "command", "dgp",    "calib",      "test",   "rule",   "method",
      "family",  "first_family", "taxonomy", "cost", "check",  "alpha",
      "beta",    "q",      "budget",     "rule_param", "k",  "m",
      "n",       "trials", "n_labels",   "instances",  "seed"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw data_error("unknown config key '" + key + "'");
  }
  c.command = j.at("command").get<std::string>();
  c.dgp = j.at("dgp").get<std::string>();
  c.calib_path = j.at("calib").get<std::string>();
  c.test_path = j.at("test").get<std::string>();
  c.rule = j.at("rule").get<std::string>();
  c.method = j.at("method").get<std::string>();
  c.family = j.at("family").get<std::string>();
  c.first_family = j.at("first_family").get<std::string>();
  c.taxonomy = j.at("taxonomy").get<std::string>();
  c.cost = j.at("cost").get<std::string>();
  c.check = j.at("check").get<std::string>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.q = j.at("q").get<double>();
  c.budget = j.at("budget").get<double>();
  c.rule_param = j.at("rule_param").get<double>();
  c.k = j.at("k").get<int>();
  c.n = j.at("n").get<int>();
  c.m = j.at("m").get<int>();
  c.trials = j.at("trials").get<int>();
  c.n_labels = j.at("n_labels").get<int>();
  c.instances = j.at("instances").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

JsonValue json_of_config(const RunConfig& c) {
  JsonValue v = JsonValue::object();
  v.set("command", JsonValue::str(c.command));
  v.set("dgp", JsonValue::str(c.dgp));
  v.set("calib", JsonValue::str(c.calib_path));
  v.set("test", JsonValue::str(c.test_path));
  v.set("rule", JsonValue::str(c.rule));
  v.set("method", JsonValue::str(c.method));
  v.set("family", JsonValue::str(c.family));
  v.set("first_family", JsonValue::str(c.first_family));
  v.set("taxonomy", JsonValue::str(c.taxonomy));
  v.set("cost", JsonValue::str(c.cost));
  v.set("check", JsonValue::str(c.check));
  v.set("alpha", JsonValue::number(c.alpha));
  v.set("beta", JsonValue::number(c.beta));
  v.set("q", JsonValue::number(c.q));
  v.set("budget", JsonValue::number(c.budget));
  v.set("rule_param", JsonValue::number(c.rule_param));
  v.set("k", JsonValue::integer(c.k));
  v.set("m", JsonValue::integer(c.m));
  v.set("n", JsonValue::integer(c.n));
  v.set("trials", JsonValue::integer(c.trials));
  v.set("n_labels", JsonValue::integer(c.n_labels));
  v.set("instances", JsonValue::integer(c.instances));
  v.set("seed", JsonValue::integer(static_cast<long long>(c.seed)));
  return v;
}

ScoreFamily parse_family(const std::string& name, int n_labels) {
  if (name == "abs") return ScoreFamily{ScoreKind::AbsResidual};
  if (name == "scaled") return ScoreFamily{ScoreKind::ScaledResidual};
  if (name == "cqr") return ScoreFamily{ScoreKind::Cqr};
  if (name == "binary") return ScoreFamily{ScoreKind::Binary};
  if (name == "aps") return ScoreFamily{ScoreKind::Aps, n_labels};
  throw CLI::ValidationError("unknown score family '" + name + "'");
}

DgpParams parse_dgp(const RunConfig& c) {
  DgpParams p;
  if (c.dgp == "homoscedastic") p.kind = DgpKind::HomoscedasticReg;
  else if (c.dgp == "heteroscedastic") p.kind = DgpKind::HeteroscedasticReg;
  else if (c.dgp == "logistic") p.kind = DgpKind::LogisticBinary;
  else throw CLI::ValidationError("unknown dgp '" + c.dgp + "'");
  if (c.cost == "none") p.cost = CostKind::None;
  else if (c.cost == "dpp") p.cost = CostKind::DppCost;
  else if (c.cost == "dti") p.cost = CostKind::DtiCost;
  else throw CLI::ValidationError("unknown cost model '" + c.cost + "'");
  return p;
}

std::unique_ptr<SelectionRule> build_rule(const RunConfig& c) {
  if (c.rule == "topk") return std::make_unique<TopKRule>(c.k, false);
  if (c.rule == "topk-lowest") return std::make_unique<TopKRule>(c.k, true);
  if (c.rule == "jq") return std::make_unique<JointQuantileRule>(c.q);
  if (c.rule == "cq") return std::make_unique<CalibQuantileRule>(c.q);
  if (c.rule == "knapsack-greedy")
    return std::make_unique<KnapsackRule>(c.budget, KnapsackBackend::ThresholdGreedy);
  if (c.rule == "knapsack-dp")
    return std::make_unique<KnapsackRule>(c.budget, KnapsackBackend::ExactDp);
  if (c.rule == "fixed-pvalue") return std::make_unique<FixedPValueRule>(c.q);
  if (c.rule == "bh-pvalue") return std::make_unique<BHPValueRule>(c.q);
  if (c.rule.rfind("prelim-", 0) == 0) {
    PrelimRule pr;
    pr.first_stage = parse_family(c.first_family, c.n_labels);
    pr.param = c.rule_param;
    if (c.rule == "prelim-length") pr.kind = PrelimRule::Kind::LengthLe;
    else if (c.rule == "prelim-upper") pr.kind = PrelimRule::Kind::UpperLe;
    else if (c.rule == "prelim-lower") pr.kind = PrelimRule::Kind::LowerGe;
    else if (c.rule == "prelim-singleton") pr.kind = PrelimRule::Kind::Singleton;
    else throw CLI::ValidationError("unknown rule '" + c.rule + "'");
    return std::make_unique<PrelimSetRule>(pr, c.beta);
  }
  throw CLI::ValidationError("unknown rule '" + c.rule + "'");
}

Method parse_method(const std::string& name) {
  if (name == "vanilla") return Method::Vanilla;
  if (name == "jomi") return Method::Jomi;
  if (name == "jomi-rand") return Method::JomiRand;
  if (name == "ps") return Method::Ps;
  throw CLI::ValidationError("unknown method '" + name + "'");
}

int default_threads() {
  if (const char* env = std::getenv("JOMI_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  return 1;
}

void emit(const RunConfig& c, const std::string& content) {
  if (c.out.empty()) std::cout << content;
  else write_text_file(c.out, content);
}

// ---------------------------------------------------------------------------

int cmd_predict(const RunConfig& c) {
  Dataset data;
  if (!c.dgp.empty()) data = generate_dataset(parse_dgp(c), c.n, c.m, Rng(c.seed).fork(0).fork(rng_role::kData));
  else data = ingest(c.calib_path, c.test_path);

  const auto rule = build_rule(c);
  const ScoreFamily family = parse_family(c.family, c.n_labels);
  const Method method = parse_method(c.method);
  for (const Unit& u : data.calib) family.validate_unit(u);
  for (const Unit& u : data.test) family.validate_unit(u);
  const SelectionResult sel = rule->select(IdentityView(data));
  const Taxonomy taxonomy = c.taxonomy == "fixed-size"
                                ? Taxonomy::fixed_size(static_cast<int>(sel.selected.size()))
                                : Taxonomy::all();

  const bool pvalue_rule = c.rule == "fixed-pvalue" || c.rule == "bh-pvalue";
  std::optional<PValueInputs> pin;
  if (pvalue_rule) pin = make_pvalue_inputs(IdentityView(data), SelScoreKind::MuhatMinusC);

  std::optional<PrelimCalibration> prelim_cal;
  const auto* prelim_rule = dynamic_cast<const PrelimSetRule*>(rule.get());
  if (method == Method::Ps) {
    if (!prelim_rule) throw data_error("method 'ps' requires a prelim-* rule");
    std::vector<double> s(data.n());
    for (int i = 0; i < data.n(); ++i)
      s[i] = prelim_rule->rule().first_stage.value_at_truth(data.calib[i]);
    prelim_cal = prelim_calibrate(std::move(s), prelim_rule->beta());
  }

  std::vector<double> vanilla_scores;
  if (method == Method::Vanilla) vanilla_scores = calibration_scores(data.calib, family);

  Rng u_rng = Rng(c.seed).fork(0).fork(rng_role::kUniform);
  std::string out = "id,selected,pvalue,set,ref\n";
  for (int j = 0; j < data.m(); ++j) {
    const bool selected = sel.contains(j);
    out += data.test[j].id;
    out += selected ? ",true," : ",false,";
    if (pvalue_rule) out += format_double(conf_pvalue(j, *pin));
    out += ',';
    std::string ref_field;
    if (selected) {
      PredictionSet set;
      switch (method) {
        case Method::Vanilla:
          set = scp_set(data.test[j], vanilla_scores, family, c.alpha);
          ref_field = std::to_string(data.n());
          break;
        case Method::Jomi:
        case Method::JomiRand: {
          std::optional<double> u;
          if (method == Method::JomiRand) u = u_rng.fork(j).u01();
          if (rule->ref_structure() == RefStructure::TwoBranch) {
            const auto pair = *rule->branch_references(j, data, taxonomy);
            ref_field = std::to_string(pair.first.size()) + "|" +
                        std::to_string(pair.second.size());
            set = pvalue_jomi_set(j, data, pair.first, pair.second, family, c.alpha, u);
          } else {
            const auto pred = jomi_predict(j, *rule, taxonomy, family, c.alpha, data, u);
            set = pred.set;
            ref_field = std::to_string(pred.ref_size_at_truth);
          }
          break;
        }
        case Method::Ps: {
          const auto qs = ps_quantiles(j, prelim_rule->rule(), *prelim_cal, family,
                                       taxonomy, c.alpha, data);
          set = ps_set(j, qs, *prelim_cal, prelim_rule->rule().first_stage, family, data);
          ref_field = format_double(qs.q1) + "|" + format_double(qs.q2);
          break;
        }
      }
      out += serialize_prediction_set(set);
    }
    out += ',';
    out += ref_field;
    out += '\n';
  }
  emit(c, out);
  return 0;
}

struct CheckLine {
  std::string name;
  bool pass;
  double observed;
  double lo, hi;
};

int cmd_evaluate(const RunConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<CheckLine> checks;
  JsonValue summary = JsonValue::object();

  if (c.dgp == "weakfcr") {
    const auto r = weak_fcr_counterexample(c.alpha, c.trials, c.seed);
    summary.set("weak_coverage", JsonValue::number(r.weak_coverage));
    summary.set("fcr", JsonValue::number(r.fcr));
    summary.set("trials", JsonValue::integer(r.trials));
    if (c.check == "theorem-band") {
      const double want_fcr = 2.0 * c.alpha / (1.0 + c.alpha);
      checks.push_back({"weak_coverage", std::fabs(r.weak_coverage - (1.0 - c.alpha)) <= 0.03,
                        r.weak_coverage, 1.0 - c.alpha - 0.03, 1.0 - c.alpha + 0.03});
      checks.push_back({"fcr_gap", std::fabs(r.fcr - want_fcr) <= 0.03, r.fcr, want_fcr - 0.03,
                        want_fcr + 0.03});
    }
  } else {
    ExperimentConfig cfg;
    cfg.dgp = parse_dgp(c);
    cfg.n = c.n;
    cfg.m = c.m;
    cfg.trials = c.trials;
    cfg.alpha = c.alpha;
    cfg.method = parse_method(c.method);
    cfg.family = parse_family(c.family, c.n_labels);
    cfg.taxonomy = c.taxonomy == "fixed-size" ? TaxonomyMode::FixedRealized : TaxonomyMode::All;
    cfg.master_seed = c.seed;
    cfg.threads = default_threads();
    cfg.beta = c.beta;
    const auto rule = build_rule(c);
    const auto records = run_trials(cfg, *rule);
    const auto cov = summarize_coverage(records);
    const auto miscov = miscov_estimate(records);

    if (!c.detail.empty()) {
      std::string csv = "trial,unit,covered,set_size,segments,ref_size,outcome,set\n";
      for (const auto& rec : records)
        for (const auto& u : rec.units) {
          csv += std::to_string(rec.trial);
          csv += ',';
          csv += std::to_string(u.j);
          csv += u.covered ? ",1," : ",0,";
          csv += format_double(u.set_size);
          csv += ',';
          csv += std::to_string(u.segments);
          csv += ',';
          csv += std::to_string(u.ref_size);
          csv += ',';
          csv += format_double(u.outcome);
          csv += ',';
          csv += u.set_text;
          csv += '\n';
        }
      write_text_file(c.detail, csv);
    }

    summary.set("trials", JsonValue::integer(c.trials));
    summary.set("events", JsonValue::integer(cov.events));
    if (c.trials == 0) summary.set("status", JsonValue::str("no trials"));
    if (miscov) summary.set("miscov", JsonValue::number(*miscov));
    else summary.set("miscov", JsonValue::str("undefined"));
    summary.set("fcr", JsonValue::number(fcr_estimate(records)));
    summary.set("coverage", JsonValue::number(cov.coverage));
    summary.set("coverage_se", JsonValue::number(cov.se));
    summary.set("mean_set_size", JsonValue::number(cov.mean_set_size));
    summary.set("mean_ref_size", JsonValue::number(cov.mean_ref_size));
    summary.set("mean_segments", JsonValue::number(cov.mean_segments));
    summary.set("mean_inv_ref", JsonValue::number(cov.mean_inv_ref));
    summary.set("mean_selected", JsonValue::number(cov.mean_selected));
    std::map<int, long long> hist;
    for (const auto& rec : records) ++hist[rec.selected_count];
    JsonValue hist_json = JsonValue::array();
    for (const auto& [size, count] : hist) {
      JsonValue pair = JsonValue::array();
      pair.push(JsonValue::integer(size));
      pair.push(JsonValue::integer(count));
      hist_json.push(std::move(pair));
    }
    summary.set("selected_hist", std::move(hist_json));

    if (c.check == "theorem-band" && miscov) {
      const double a = c.alpha;
      double lo = 0.0, hi = 1.0;
      switch (cfg.method) {
        case Method::Vanilla:
          lo = a - 3.0 * cov.se - 1.0 / (c.n + 1);
          hi = a + 3.0 * cov.se;
          break;
        case Method::Jomi:
          lo = a - cov.mean_inv_ref - 3.0 * cov.se;
          hi = a + 3.0 * cov.se;
          break;
        case Method::JomiRand:
          lo = a - 3.0 * cov.se;
          hi = a + 3.0 * cov.se;
          break;
        case Method::Ps:
          lo = a - 0.03 - 3.0 * cov.se;
          hi = a + 3.0 * cov.se;
          break;
      }
      checks.push_back({"miscoverage_band", *miscov >= lo && *miscov <= hi, *miscov, lo, hi});
    }
  }

  bool all_pass = true;
  JsonValue checks_json = JsonValue::array();
  for (const auto& ch : checks) {
    all_pass = all_pass && ch.pass;
    JsonValue line = JsonValue::object();
    line.set("name", JsonValue::str(ch.name));
    line.set("pass", JsonValue::boolean(ch.pass));
    line.set("observed", JsonValue::number(ch.observed));
    line.set("lo", JsonValue::number(ch.lo));
    line.set("hi", JsonValue::number(ch.hi));
    checks_json.push(std::move(line));
  }

  JsonValue doc = JsonValue::object();
  doc.set("tool", JsonValue::str("jomi"));
  doc.set("version", JsonValue::str(kToolVersion));
  doc.set("config", json_of_config(c));
  doc.set("summary", std::move(summary));
  doc.set("checks", std::move(checks_json));
  emit(c, doc.dump());

  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
  std::cerr << "evaluate: " << format_double(elapsed.count()) << "s\n";
  return all_pass ? 0 : 2;
}

int cmd_oracle_check(const RunConfig& c) {
  Rng rng(c.seed);
  long long mismatches = 0, compared = 0;
  for (int inst = 0; inst < c.instances; ++inst) {
    Rng ir = rng.fork(inst);
    const int n = 5 + static_cast<int>(ir.below(26));
    const int m = 2 + static_cast<int>(ir.below(7));
    DgpParams params;
    params.kind = DgpKind::HeteroscedasticReg;
    params.cost = CostKind::DtiCost;
    const Dataset data = generate_dataset(params, n, m, ir.fork(rng_role::kData));

    std::vector<std::unique_ptr<SelectionRule>> rules;
    rules.push_back(std::make_unique<TopKRule>(1 + static_cast<int>(ir.below(m))));
    rules.push_back(std::make_unique<JointQuantileRule>(0.2 + 0.6 * ir.u01()));
    rules.push_back(std::make_unique<CalibQuantileRule>(0.2 + 0.6 * ir.u01()));
    rules.push_back(std::make_unique<FixedPValueRule>(0.2 + 0.6 * ir.u01()));
    rules.push_back(std::make_unique<BHPValueRule>(0.2 + 0.6 * ir.u01()));

    for (const auto& rule : rules) {
      const auto sel = rule->select(IdentityView(data));
      for (const bool fixed_size : {false, true}) {
        const Taxonomy tax = fixed_size
                                 ? Taxonomy::fixed_size(static_cast<int>(sel.selected.size()))
                                 : Taxonomy::all();
        for (int j : sel.selected) {
          if (rule->ref_structure() == RefStructure::Covariate) {
            const auto fast = *rule->covariate_reference(data, tax);
            ++compared;
            if (fast != oracle_reference_set(j, std::nullopt, *rule, tax, data)) ++mismatches;
          } else {
            const auto pair = *rule->branch_references(j, data, tax);
            const double cth = *data.test[j].threshold_c;
            compared += 2;
            if (pair.first != oracle_reference_set(j, cth + 1.0, *rule, tax, data)) ++mismatches;
            if (pair.second != oracle_reference_set(j, cth - 1.0, *rule, tax, data)) ++mismatches;
          }
        }
      }
    }
  }

  JsonValue doc = JsonValue::object();
  doc.set("tool", JsonValue::str("jomi"));
  doc.set("version", JsonValue::str(kToolVersion));
  doc.set("config", json_of_config(c));
  JsonValue summary = JsonValue::object();
  summary.set("instances", JsonValue::integer(c.instances));
  summary.set("comparisons", JsonValue::integer(compared));
  summary.set("mismatches", JsonValue::integer(mismatches));
  doc.set("summary", std::move(summary));
  JsonValue checks = JsonValue::array();
  JsonValue line = JsonValue::object();
  line.set("name", JsonValue::str("oracle_equivalence"));
  line.set("pass", JsonValue::boolean(mismatches == 0));
  line.set("observed", JsonValue::integer(mismatches));
  checks.push(std::move(line));
  doc.set("checks", std::move(checks));
  emit(c, doc.dump());
  return mismatches == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selection-conditional conformal prediction"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON document whose config block drives the run");
    sub->add_option("--dgp", cfg.dgp, "synthetic data: homoscedastic|heteroscedastic|logistic|weakfcr");
    sub->add_option("--calib", cfg.calib_path, "calibration CSV");
    sub->add_option("--test", cfg.test_path, "test CSV");
    sub->add_option("--rule", cfg.rule,
                    "topk|topk-lowest|jq|cq|knapsack-greedy|knapsack-dp|fixed-pvalue|bh-pvalue|"
                    "prelim-length|prelim-upper|prelim-lower|prelim-singleton");
    sub->add_option("--method", cfg.method, "vanilla|jomi|jomi-rand|ps");
    sub->add_option("--family", cfg.family, "abs|scaled|cqr|binary|aps");
    sub->add_option("--first-family", cfg.first_family, "first-stage score family for prelim rules");
    sub->add_option("--taxonomy", cfg.taxonomy, "all|fixed-size");
    sub->add_option("--cost", cfg.cost, "none|dpp|dti");
    sub->add_option("--check", cfg.check, "none|theorem-band");
    sub->add_option("--alpha", cfg.alpha, "miscoverage level");
    sub->add_option("--beta", cfg.beta, "first-stage miscoverage level");
    sub->add_option("--q", cfg.q, "quantile / FDR / p-value threshold");
    sub->add_option("--budget", cfg.budget, "knapsack budget");
    sub->add_option("--rule-param", cfg.rule_param, "prelim rule bound (length / upper / lower)");
    sub->add_option("--k", cfg.k, "top-K size");
    sub->add_option("--n", cfg.n, "calibration size (synthetic)");
    sub->add_option("--m", cfg.m, "test size (synthetic)");
    sub->add_option("--trials", cfg.trials, "Monte Carlo trials");
    sub->add_option("--n-labels", cfg.n_labels, "label alphabet size for aps");
    sub->add_option("--instances", cfg.instances, "oracle-check instances");
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--out", cfg.out, "output path (stdout when omitted)");
    sub->add_option("--detail", cfg.detail, "per-unit CSV detail table (evaluate only)");
  };

  CLI::App* predict = app.add_subcommand("predict", "prediction sets for selected test units");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Monte Carlo coverage evaluation");
  CLI::App* oracle = app.add_subcommand("oracle-check", "reference-set equivalence sweep");
  add_common(predict);
  add_common(evaluate);
  add_common(oracle);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!config_path.empty()) {
      const auto doc = nlohmann::json::parse(read_text_file(config_path));
      load_config(doc.contains("config") ? doc.at("config") : doc, cfg);
    }
    if (predict->parsed()) cfg.command = "predict";
    if (evaluate->parsed()) cfg.command = "evaluate";
    if (oracle->parsed()) cfg.command = "oracle-check";

    const bool has_files = !cfg.calib_path.empty() || !cfg.test_path.empty();
    if (cfg.command != "oracle-check" && cfg.dgp.empty() == !has_files) {
      std::cerr << "error: exactly one of --dgp and --calib/--test must be given\n";
      return 1;
    }

    if (cfg.command == "predict") return cmd_predict(cfg);
    if (cfg.command == "evaluate") return cmd_evaluate(cfg);
    return cmd_oracle_check(cfg);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
