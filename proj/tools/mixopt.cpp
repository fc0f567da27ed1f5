#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mixopt/campaign/store.hpp"
#include "mixopt/errors.hpp"
#include "mixopt/service/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixopt;

namespace {

enum class Format { table, json, csv };

struct Globals {
  std::string store = "mixopt-store";
  std::string campaign = "default";
  Format format = Format::table;
  bool verbose = false;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string mixture_csv_header() {
  std::string h;
  for (auto id : domain::kAllIngredients) h += std::string(domain::to_string(id)) + ",";
  return h;
}

std::string mixture_csv(const domain::Mixture& m) {
  std::string out;
  for (double q : m.quantities()) out += num(q) + ",";
  return out;
}

std::string mixture_brief(const domain::Mixture& m) {
  std::string out;
  for (auto id : domain::kAllIngredients) {
    if (m[id] == 0.0) continue;
    std::ostringstream s;
    s << domain::to_string(id) << '=' << std::fixed << std::setprecision(1) << m[id] << ' ';
    out += s.str();
  }
  return out;
}

/// Emits `data` as JSON, or runs `csv` / `table` writers.
void emit(const Globals& g, const json& data, const std::function<void(std::ostream&)>& csv,
          const std::function<void(std::ostream&)>& table) {
  switch (g.format) {
    case Format::json:
      std::cout << data.dump(2) << '\n';
      break;
    case Format::csv:
      csv(std::cout);
      break;
    case Format::table:
      table(std::cout);
      break;
  }
}

struct Context {
  campaign::CampaignStore store;
  campaign::Campaign campaign;
};

Context open(const Globals& g) {
  campaign::CampaignStore store(g.store);
  if (!store.exists(g.campaign)) throw ConfigurationError("campaign '" + g.campaign + "' not found in " + g.store);
  auto c = store.load(g.campaign);
  return {std::move(store), std::move(c)};
}

// ---------------------------------------------------------------------------

struct InitArgs {
  std::string constraints, gwp, objectives, model_config, acquisition;
};

void cmd_init(const Globals& g, const InitArgs& a) {
  campaign::CampaignStore store(g.store);
  auto c = campaign::make_campaign(
      g.campaign, domain::constraints_from_json(read_json_file(a.constraints)), objectives::GwpTable::load(a.gwp),
      a.objectives.empty() ? objectives::ObjectiveSpec{} : read_json_file(a.objectives).get<objectives::ObjectiveSpec>());
  if (!a.model_config.empty()) c.model_config = read_json_file(a.model_config).get<strength::StrengthModelConfig>();
  if (!a.acquisition.empty()) c.acquisition = read_json_file(a.acquisition).get<moo::AcquisitionConfig>();
  store.create(c);
  const json out = {{"campaign", c.id}, {"store", fs::absolute(store.dir(c.id)).string()}};
  emit(g, out, [&](std::ostream& o) { o << "campaign,dir\n" << c.id << ',' << out["store"].get<std::string>() << '\n'; },
       [&](std::ostream& o) { o << "created campaign '" << c.id << "' in " << out["store"].get<std::string>() << '\n'; });
}

void cmd_ingest(const Globals& g, const std::string& file, bool strict) {
  auto ctx = open(g);
  campaign::IngestResult result;
  try {
    result = file.ends_with(".json") ? campaign::ingest_json_rows(read_json_file(file), strict)
                                     : campaign::ingest_csv_text(read_text_file(file), strict);
  } catch (const campaign::RowErrors& e) {
    for (const auto& err : e.report().errors) std::cerr << file << ':' << err.line << ": " << err.message << '\n';
    throw;
  }
  const auto added = ctx.store.append(g.campaign, result.rows);
  const json out = {{"report", result.report}, {"appended", added.size()}};
  emit(
      g, out,
      [&](std::ostream& o) {
        o << "line,status,message\n";
        for (const auto& r : result.rows) o << r.line << ",accepted,\n";
        for (const auto& e : result.report.errors) o << e.line << ",rejected,\"" << e.message << "\"\n";
      },
      [&](std::ostream& o) {
        o << result.report.accepted << " of " << result.report.rows << " rows accepted, " << added.size()
          << " measurements appended\n";
        for (const auto& e : result.report.errors) o << "  line " << e.line << ": " << e.message << '\n';
      });
}

void cmd_fit(const Globals& g) {
  auto ctx = open(g);
  bool restored = false;
  const auto model = ctx.store.current_model(ctx.campaign, &restored);
  const auto snap = model.snapshot();
  if (!restored) ctx.store.write_snapshot(g.campaign, snap);
  const json out = {{"digest", model.training_digest()},
                    {"n_training", snap.at("n_training")},
                    {"restored", restored},
                    {"snapshot", snap}};
  emit(
      g, out,
      [&](std::ostream& o) {
        o << "digest,n_training,restored\n"
          << model.training_digest() << ',' << snap.at("n_training") << ',' << (restored ? "true" : "false") << '\n';
      },
      [&](std::ostream& o) {
        o << (restored ? "restored" : "fitted") << " model " << model.training_digest() << " on "
          << snap.at("n_training") << " training records\n";
      });
}

void cmd_propose(const Globals& g, std::size_t q, std::uint64_t seed) {
  auto ctx = open(g);
  const auto model = ctx.store.current_model(ctx.campaign);
  const auto proposal = campaign::propose_batch(ctx.campaign, model, q, seed);
  const auto batch = ctx.store.commit_proposal(g.campaign, proposal);
  const auto names = ctx.campaign.objective_spec.names();
  const json out = {{"batch", batch},
                    {"objectives", names},
                    {"acquisition_value", proposal.acquisition_value},
                    {"degenerate", proposal.degenerate}};
  emit(
      g, out,
      [&](std::ostream& o) {
        o << "batch," << mixture_csv_header();
        for (const auto& n : names) o << n << "_mean," << n << "_sd,";
        o << "gwp\n";
        for (std::size_t i = 0; i < batch.mixtures.size(); ++i) {
          const auto& p = batch.predictions.at(i);
          o << batch.id << ',' << mixture_csv(batch.mixtures[i]);
          for (std::size_t k = 0; k < names.size(); ++k) {
            o << num(p.at("mean").at(k).get<double>()) << ',' << num(p.at("sd").at(k).get<double>()) << ',';
          }
          o << num(objectives::gwp(ctx.campaign.gwp_table, batch.mixtures[i])) << '\n';
        }
      },
      [&](std::ostream& o) {
        o << "batch " << batch.id << " (" << batch.mixtures.size() << " mixtures, acquisition " << num(proposal.acquisition_value)
          << (proposal.degenerate ? ", degenerate region" : "") << ")\n";
        for (std::size_t i = 0; i < batch.mixtures.size(); ++i) {
          const auto& p = batch.predictions.at(i);
          o << "  " << i + 1 << ". " << mixture_brief(batch.mixtures[i]) << "\n     ";
          for (std::size_t k = 0; k < names.size(); ++k) {
            o << names[k] << ' ' << std::fixed << std::setprecision(2) << p.at("mean").at(k).get<double>() << " +/- "
              << p.at("sd").at(k).get<double>() << "  ";
          }
          o << std::defaultfloat << '\n';
        }
      });
}

void cmd_pareto(const Globals& g, std::optional<double> age) {
  auto ctx = open(g);
  const auto f = campaign::empirical_pareto(ctx.campaign, age.value_or(ctx.campaign.objective_spec.ages_days.back()));
  emit(
      g, campaign::empirical_json(f),
      [&](std::ostream& o) {
        o << "batch," << mixture_csv_header() << "strength_mpa,replicates,gwp,dominated\n";
        for (const auto& p : f.points) {
          o << p.batch << ',' << mixture_csv(p.mixture) << num(p.strength_mpa) << ',' << p.replicates << ',' << num(p.gwp)
            << ',' << (p.dominated ? "true" : "false") << '\n';
        }
      },
      [&](std::ostream& o) {
        o << "age " << f.age_days << " d: " << f.points.size() << " mixtures, " << f.frontier.size()
          << " on the frontier, hypervolume " << num(f.hypervolume) << '\n';
        for (auto i : f.frontier) {
          const auto& p = f.points[i];
          o << "  " << std::fixed << std::setprecision(2) << p.strength_mpa << " MPa  " << p.gwp << " kgCO2e/m3  ["
            << p.batch << "] " << mixture_brief(p.mixture) << std::defaultfloat << '\n';
        }
      });
}

void cmd_infer(const Globals& g, const std::string& scenario_file, campaign::InferConfig cfg) {
  auto ctx = open(g);
  const json scenario_json = scenario_file.empty() ? json::object() : read_json_file(scenario_file);
  const auto scenario = campaign::scenario_from_json(scenario_json);
  const auto model = ctx.store.current_model(ctx.campaign);
  const auto f = campaign::inferred_pareto(ctx.campaign, model, scenario, cfg);
  auto out = campaign::inferred_json(f, ctx.campaign.objective_spec);
  out["scenario"] = scenario_json;
  out["seed"] = cfg.seed;
  const auto names = ctx.campaign.objective_spec.names();
  emit(
      g, out,
      [&](std::ostream& o) {
        o << mixture_csv_header();
        for (std::size_t k = 0; k < names.size(); ++k) o << names[k] << "_mean," << names[k] << "_sd" << (k + 1 < names.size() ? "," : "\n");
        for (const auto& p : f.points) {
          o << mixture_csv(p.mixture);
          for (Eigen::Index k = 0; k < p.mean.size(); ++k) o << num(p.mean[k]) << ',' << num(p.sd[k]) << (k + 1 < p.mean.size() ? "," : "\n");
        }
      },
      [&](std::ostream& o) {
        o << f.points.size() << " frontier mixtures from " << f.candidates << " candidates, hypervolume " << num(f.hypervolume)
          << '\n';
        for (const auto& p : f.points) {
          o << "  ";
          for (Eigen::Index k = 0; k < p.mean.size(); ++k) {
            o << names[k] << ' ' << std::fixed << std::setprecision(2) << p.mean[k];
            if (p.sd[k] > 0) o << " +/- " << p.sd[k];
            o << "  ";
          }
          o << std::defaultfloat << "| " << mixture_brief(p.mixture) << '\n';
        }
      });
}

void cmd_cv(const Globals& g, std::size_t folds, std::uint64_t seed) {
  auto ctx = open(g);
  const auto data = ctx.campaign.measured();
  const auto r = strength::cross_validate(data, folds, seed, campaign::effective_model_config(ctx.campaign));
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"observation", p.observation}, {"fold", p.fold}, {"actual_mpa", p.actual_mpa}, {"mean_mpa", p.mean_mpa}, {"sd_mpa", p.sd_mpa}});
  }
  const json out = {{"folds", folds}, {"seed", seed}, {"rmse", r.rmse}, {"coverage95", r.coverage95}, {"points", points}};
  emit(
      g, out,
      [&](std::ostream& o) {
        o << "observation,fold,age_days,actual_mpa,mean_mpa,sd_mpa\n";
        for (const auto& p : r.points) {
          o << p.observation << ',' << p.fold << ',' << num(data[p.observation].age_days) << ',' << num(p.actual_mpa) << ','
            << num(p.mean_mpa) << ',' << num(p.sd_mpa) << '\n';
        }
      },
      [&](std::ostream& o) {
        o << folds << "-fold CV over " << data.size() << " measurements: RMSE " << std::fixed << std::setprecision(3) << r.rmse
          << " MPa, 95% interval coverage " << r.coverage95 << std::defaultfloat << '\n';
      });
}

void cmd_state(const Globals& g) {
  auto ctx = open(g);
  const auto& c = ctx.campaign;
  json batches = json::array();
  for (const auto& b : c.batches) batches.push_back({{"id", b.id}, {"origin", campaign::to_string(b.origin)}, {"mixtures", b.mixtures.size()}});
  json hv = json::object();
  for (double a : c.objective_spec.ages_days) hv[num(a)] = campaign::empirical_pareto(c, a).hypervolume;
  hv["joint"] = campaign::empirical_hypervolume(c);
  const auto data = c.measured();
  const json out = {{"campaign", c.id},
                    {"observations", c.observations.size()},
                    {"data_digest", strength::digest(data)},
                    {"batches", batches},
                    {"hypervolume", hv},
                    {"snapshots", c.snapshots.size()}};
  emit(
      g, out,
      [&](std::ostream& o) {
        o << "batch,origin,mixtures\n";
        for (const auto& b : c.batches) o << b.id << ',' << campaign::to_string(b.origin) << ',' << b.mixtures.size() << '\n';
      },
      [&](std::ostream& o) {
        o << "campaign " << c.id << ": " << c.observations.size() << " measurements, " << c.batches.size() << " batches, "
          << c.snapshots.size() << " model snapshots\n";
        for (const auto& b : c.batches) o << "  " << b.id << " (" << campaign::to_string(b.origin) << ", " << b.mixtures.size() << " mixtures)\n";
        for (const auto& [k, v] : hv.items()) o << "  hypervolume[" << k << "] = " << num(v.get<double>()) << '\n';
      });
}

void cmd_serve(const Globals& g, const std::string& host, int port, const std::string& token) {
  service::ServiceOptions opts;
  opts.store_root = g.store;
  if (!token.empty()) opts.bearer_token = token;
  fs::create_directories(g.store);
  service::Service svc(opts);
  spdlog::info("serving {} on http://{}:{}/v1", g.store, host, port);
  if (!svc.run(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return 3;
  if (dynamic_cast<const ConstraintError*>(&e)) return 4;
  if (dynamic_cast<const InsufficientDataError*>(&e)) return 5;
  if (dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const MigrationError*>(&e)) return 6;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective Bayesian optimization of concrete mixtures"};
  app.require_subcommand(1);
  Globals g;
  if (const char* env = std::getenv("MIXOPT_STORE")) g.store = env;
  const std::map<std::string, Format> formats{{"table", Format::table}, {"json", Format::json}, {"csv", Format::csv}};
  app.add_option("--store", g.store, "Campaign store directory (env MIXOPT_STORE)");
  app.add_option("--campaign", g.campaign, "Campaign id");
  app.add_option("--format", g.format, "Output format")->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
  app.add_flag("-v,--verbose", g.verbose, "Log progress to stderr");

  InitArgs init;
  auto* c_init = app.add_subcommand("init", "Create a campaign");
  c_init->add_option("--constraints", init.constraints, "Constraints JSON")->required()->check(CLI::ExistingFile);
  c_init->add_option("--gwp", init.gwp, "GWP coefficient table (JSON or CSV)")->required()->check(CLI::ExistingFile);
  c_init->add_option("--objectives", init.objectives, "Objective spec JSON")->check(CLI::ExistingFile);
  c_init->add_option("--model-config", init.model_config, "Strength model config JSON")->check(CLI::ExistingFile);
  c_init->add_option("--acquisition", init.acquisition, "Acquisition config JSON")->check(CLI::ExistingFile);

  std::string ingest_file;
  bool strict = false;
  auto* c_ingest = app.add_subcommand("ingest", "Append measurements from a CSV or JSON file");
  c_ingest->add_option("file", ingest_file, "Measurements file")->required()->check(CLI::ExistingFile);
  c_ingest->add_flag("--strict", strict, "Reject the whole file if any row is bad");

  auto* c_fit = app.add_subcommand("fit", "Fit the strength model and store a snapshot");

  std::size_t q = 6;
  std::uint64_t seed = 0;
  auto* c_propose = app.add_subcommand("propose", "Propose the next batch");
  c_propose->add_option("--q", q, "Batch size")->check(CLI::PositiveNumber);
  c_propose->add_option("--seed", seed, "Random seed");

  std::optional<double> age;
  auto* c_pareto = app.add_subcommand("pareto", "Empirical Pareto frontier at one age");
  c_pareto->add_option("--age", age, "Age in days (default: last objective age)");

  std::string scenario;
  campaign::InferConfig infer_cfg;
  auto* c_infer = app.add_subcommand("infer", "Inferred Pareto frontier under a scenario");
  c_infer->add_option("--scenario", scenario, "Scenario JSON")->check(CLI::ExistingFile);
  c_infer->add_option("--candidates", infer_cfg.candidates, "Random feasible candidates")->check(CLI::PositiveNumber);
  c_infer->add_option("--seed", infer_cfg.seed, "Random seed");

  std::size_t folds = 10;
  std::uint64_t cv_seed = 0;
  auto* c_cv = app.add_subcommand("cv", "Grouped K-fold cross-validation of the strength model");
  c_cv->add_option("--folds", folds, "Number of folds")->check(CLI::Range(2, 1000));
  c_cv->add_option("--seed", cv_seed, "Fold assignment seed");

  auto* c_state = app.add_subcommand("state", "Campaign summary");

  std::string host = "127.0.0.1", token;
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP API");
  c_serve->add_option("--host", host, "Bind address");
  c_serve->add_option("--port", port, "Port");
  c_serve->add_option("--token", token, "Require this bearer token");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::default_logger()->clone("mixopt"));
  spdlog::set_level(g.verbose || c_serve->parsed() ? spdlog::level::info : spdlog::level::warn);

  try {
    if (c_init->parsed()) cmd_init(g, init);
    if (c_ingest->parsed()) cmd_ingest(g, ingest_file, strict);
    if (c_fit->parsed()) cmd_fit(g);
    if (c_propose->parsed()) cmd_propose(g, q, seed);
    if (c_pareto->parsed()) cmd_pareto(g, age);
    if (c_infer->parsed()) cmd_infer(g, scenario, infer_cfg);
    if (c_cv->parsed()) cmd_cv(g, folds, cv_seed);
    if (c_state->parsed()) cmd_state(g);
    if (c_serve->parsed()) cmd_serve(g, host, port, token);
  } catch (const std::exception& e) {
    std::cerr << "mixopt: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
