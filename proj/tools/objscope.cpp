// objscope command-line front end. Each subcommand runs one pipeline stage;
// `run` executes the whole chain from a config file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "objscope/analysis.hpp"
#include "objscope/gridworld.hpp"
#include "objscope/pipeline.hpp"

namespace fs = std::filesystem;
using namespace objscope;

namespace {

void print_matrix(std::ostream& out, const std::string& title, const analysis::Matrix& m) {
  constexpr const char* kSymbols[] = {"R", "S", "C", "I", "E"};
  auto pad = [](std::string s, std::size_t w) { return s.size() < w ? std::string(w - s.size(), ' ') + s : s; };
  out << title << '\n' << std::string(18, ' ');
  for (const char* sym : kSymbols) out << pad(sym, 11);
  out << '\n';
  for (auto r : kObjectives) {
    std::string label(objective_label(r));
    out << "  " << label << std::string(16 - label.size(), ' ');
    for (auto c : kObjectives) {
      const double v = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      out << pad(std::isnan(v) ? "NA" : fixed6(v), 11);
    }
    out << '\n';
  }
}

analysis::Matrix matrix_from_json(const nlohmann::json& j) {
  analysis::Matrix m{};
  for (std::size_t r = 0; r < kObjectiveCount; ++r) {
    for (std::size_t c = 0; c < kObjectiveCount; ++c) {
      const auto& v = j.at(r).at(c);
      m[r][c] = v.is_null() ? std::nan("") : v.get<double>();
    }
  }
  return m;
}

std::string dataset_name(const fs::path& p) { return p.stem().string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"objscope: retrospective objective analysis of agent trajectory datasets"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a gridworld trajectory dataset");
  std::string policy = "random";
  std::uint64_t steps = 10000;
  std::uint64_t seed = 0;
  double sticky = 0.25;
  fs::path synth_out;
  std::string synth_env = "gridworld";
  std::string synth_agent;
  std::string synth_role = "agent";
  int render_size = 48;
  synth->add_option("--policy", policy, "noop | random | sweeper | reward_seeker")->capture_default_str();
  synth->add_option("--steps", steps, "number of recorded frames")->capture_default_str();
  synth->add_option("--seed", seed, "RNG seed")->capture_default_str();
  synth->add_option("--sticky", sticky, "sticky-action probability")->capture_default_str();
  synth->add_option("--out", synth_out, "trajectory file to write")->required();
  synth->add_option("--environment", synth_env, "environment id stored in the manifest")->capture_default_str();
  synth->add_option("--agent-id", synth_agent, "agent id (defaults to the policy name)");
  synth->add_option("--role", synth_role, "agent | human")->check(CLI::IsMember({"agent", "human"}));
  synth->add_option("--render-size", render_size, "frame side in pixels, a multiple of 12")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "pass 1: pool per-pixel brightness values");
  std::vector<fs::path> ingest_files;
  std::size_t grid = kDefaultGridSide;
  fs::path pool_out;
  std::size_t parallelism = 1;
  ingest->add_option("files", ingest_files, "trajectory files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--grid", grid, "side of the resized grid")->capture_default_str();
  ingest->add_option("--out", pool_out, "pool artifact")->required();
  ingest->add_option("--parallelism", parallelism)->capture_default_str();

  // thresholds
  auto* thresholds = app.add_subcommand("thresholds", "percentile thresholds from a pool");
  fs::path pool_in;
  std::size_t levels = kDefaultLevels;
  std::string scope = "shared";
  fs::path thresholds_out;
  thresholds->add_option("--pool", pool_in)->required()->check(CLI::ExistingFile);
  thresholds->add_option("--levels", levels)->capture_default_str();
  thresholds->add_option("--discretization", scope, "shared | per-agent")->capture_default_str();
  thresholds->add_option("--out", thresholds_out)->required();

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "pass 2: codebook and transition count tensors");
  std::vector<fs::path> aggregate_files;
  fs::path thresholds_in;
  fs::path aggregate_dir;
  std::string resets = "exclude";
  aggregate->add_option("files", aggregate_files, "trajectory files")->required()->check(CLI::ExistingFile);
  aggregate->add_option("--thresholds", thresholds_in)->required()->check(CLI::ExistingFile);
  aggregate->add_option("--out-dir", aggregate_dir)->required();
  aggregate->add_option("--resets", resets, "exclude | include transitions into episode starts")
      ->check(CLI::IsMember({"exclude", "include"}))
      ->capture_default_str();
  aggregate->add_option("--parallelism", parallelism)->capture_default_str();

  // objectives
  auto* objectives = app.add_subcommand("objectives", "objective values from an aggregate");
  fs::path objectives_dir;
  std::string human;
  std::string info_gain = "dirichlet_unique";
  std::string similarity = "jaccard";
  fs::path objectives_out;
  objectives->add_option("--dir", objectives_dir, "aggregate directory")->required()->check(CLI::ExistingDirectory);
  objectives->add_option("--human", human, "dataset name of the human reference (default: the one tagged human)");
  objectives->add_option("--information-gain", info_gain, "dirichlet_counts | dirichlet_unique | log_counts | sqrt_counts")
      ->capture_default_str();
  objectives->add_option("--similarity", similarity, "jaccard | jsd")->capture_default_str();
  objectives->add_option("--out", objectives_out, "objective CSV (default: stdout)");

  // correlate
  auto* correlate = app.add_subcommand("correlate", "Pearson correlation matrices from an objective table");
  fs::path table_in;
  std::string scheme = std::string(analysis::scheme_name(analysis::kDefaultScheme));
  fs::path reference;
  fs::path correlate_out;
  std::vector<std::string> variant_overrides;
  auto* table_opt = correlate->add_option("--table", table_in, "objective CSV")->check(CLI::ExistingFile);
  auto* fixture_opt = correlate->add_option("--fixture", table_in, "published objective fixture (same format)")
                          ->check(CLI::ExistingFile);
  table_opt->excludes(fixture_opt);
  correlate->add_option("--scheme", scheme, "raw | minmax | zscore | auto")->capture_default_str();
  correlate->add_option("--reference", reference, "reference matrices for residuals / auto scheme")
      ->check(CLI::ExistingFile);
  correlate->add_option("--out-dir", correlate_out, "write report.json and CSV matrices here");
  correlate->add_option("--variant", variant_overrides, "objective=variant column selection");

  // report
  auto* report = app.add_subcommand("report", "print the matrices of a report.json");
  fs::path report_in;
  report->add_option("report", report_in, "report.json")->required()->check(CLI::ExistingFile);

  // run
  auto* run = app.add_subcommand("run", "execute the whole pipeline from a config file");
  fs::path config_path;
  std::vector<std::string> overrides;
  run->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "override a [run] key: key=value");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto config = synth::GridworldConfig::default_layout();
      config.seed = seed;
      config.sticky_prob = sticky;
      config.render_size = render_size;
      synth::DatasetSpec spec;
      spec.policy = synth::parse_policy(policy);
      spec.steps = steps;
      spec.environment_id = synth_env;
      spec.agent_id = synth_agent;
      spec.role = synth_role == "human" ? DatasetRole::human : DatasetRole::agent;
      const auto m = synth::generate_dataset(config, spec, synth_out);
      std::cout << "wrote " << synth_out.string() << " (" << m.frame_count << " frames, agent " << m.agent_id
                << ")\n";
    } else if (*ingest) {
      const auto pool = pipeline::pool_files(ingest_files, grid, parallelism);
      pipeline::write_binary(pool_out, pool);
      std::cout << "pooled " << ingest_files.size() << " file(s) -> " << pool_out.string() << '\n';
    } else if (*thresholds) {
      const auto pool = pipeline::read_binary<PixelValuePool>(pool_in);
      const auto table = compute_thresholds(pool, levels, parse_scope(scope));
      pipeline::write_binary(thresholds_out, table);
      std::cout << "thresholds (" << table.side << "x" << table.side << ", " << table.levels << " levels) -> "
                << thresholds_out.string() << '\n';
    } else if (*aggregate) {
      const auto table = pipeline::read_binary<ThresholdTable>(thresholds_in);
      std::vector<pipeline::AggregateInput> inputs;
      std::set<std::string> names;
      for (const auto& f : aggregate_files) {
        const std::string name = dataset_name(f);
        if (!names.insert(name).second) throw ConfigError("aggregate: duplicate dataset name '" + name + "'");
        inputs.push_back({name, f, &table});
      }
      const auto agg = pipeline::aggregate_files(
          inputs, resets == "include" ? ResetPolicy::include : ResetPolicy::exclude, parallelism);
      pipeline::write_aggregate(aggregate_dir, agg);
      std::cout << "codebook |X| = " << agg.codebook.size() << ", " << agg.tensors.size() << " tensor(s) -> "
                << aggregate_dir.string() << '\n';
    } else if (*objectives) {
      const auto agg = pipeline::read_aggregate(objectives_dir);
      ObjectiveOptions options;
      options.info_gain = parse_info_gain_variant(info_gain);
      if (similarity != "jaccard" && similarity != "jsd") throw ConfigError("--similarity must be jaccard or jsd");
      options.jsd_similarity = similarity == "jsd";
      if (human.empty()) {
        for (std::size_t i = 0; i < agg.names.size(); ++i) {
          if (agg.stats[i].role != DatasetRole::human) continue;
          if (!human.empty()) throw ConfigError("objectives: more than one human dataset; pick one with --human");
          human = agg.names[i];
        }
      }
      std::vector<std::string> agents;
      for (const auto& n : agg.names) {
        if (n != human && agg.stats[agg.find(n)].role != DatasetRole::human) agents.push_back(n);
      }
      pipeline::SimilaritySource sim{&agg, human};
      const auto vectors = pipeline::objectives_for(agg, agents, human.empty() ? nullptr : &sim, options);
      std::vector<ObjectiveRow> rows;
      for (const auto& v : vectors) {
        auto r = to_rows(v);
        if (!v.human_similarity) {
          r.push_back({v.environment_id, v.agent_id, Objective::human_similarity, options.jsd_similarity ? "jsd" : "jaccard",
                       std::nullopt, v.steps});
        }
        rows.insert(rows.end(), r.begin(), r.end());
      }
      if (objectives_out.empty()) {
        write_objective_csv(std::cout, rows);
      } else {
        std::ofstream out(objectives_out, std::ios::binary);
        write_objective_csv(out, rows);
        if (!out) throw IoError("cannot write " + objectives_out.string());
      }
    } else if (*correlate) {
      if (table_in.empty()) throw ConfigError("correlate: one of --table or --fixture is required");
      auto variants = analysis::default_variants();
      for (const auto& ov : variant_overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("--variant expects objective=variant");
        variants[static_cast<std::size_t>(parse_objective(ov.substr(0, eq)))] = ov.substr(eq + 1);
      }
      const auto table = analysis::build_table(read_objective_csv(table_in), variants);
      std::map<std::string, analysis::Matrix> refs;
      if (!reference.empty()) refs = analysis::read_reference_matrices(reference);
      analysis::Scheme chosen = analysis::kDefaultScheme;
      std::optional<analysis::SchemeSelection> selection;
      if (scheme == "auto") {
        auto it = refs.find("combined");
        if (it == refs.end()) throw ConfigError("--scheme auto needs a --reference with a 'combined' matrix");
        const auto sel = analysis::select_scheme(table, it->second);
        for (const auto& [s, worst] : sel.max_residual) {
          std::cout << "scheme " << analysis::scheme_name(s) << ": max |residual| vs reference = " << fixed6(worst)
                    << '\n';
        }
        chosen = sel.best;
        selection = sel;
        std::cout << "selected scheme: " << analysis::scheme_name(chosen) << "\n\n";
      } else {
        chosen = analysis::parse_scheme(scheme);
      }
      const auto rep = analysis::correlation_report(table, chosen);
      for (const auto& b : rep.per_environment) print_matrix(std::cout, b.name, b.r);
      print_matrix(std::cout, "Combined (" + std::string(analysis::scheme_name(chosen)) + ")", rep.combined.r);
      if (!refs.empty()) {
        std::cout << "\nmax |residual| vs reference:\n";
        for (const auto& b : rep.per_environment) {
          if (auto it = refs.find(b.name); it != refs.end()) {
            std::cout << "  " << b.name << ": " << fixed6(analysis::max_abs_residual(b.r, it->second)) << '\n';
          }
        }
        if (auto it = refs.find("combined"); it != refs.end()) {
          std::cout << "  combined: " << fixed6(analysis::max_abs_residual(rep.combined.r, it->second)) << '\n';
        }
      }
      if (!correlate_out.empty()) {
        nlohmann::ordered_json meta;
        meta["source"] = table_in.filename().string();
        meta["scheme"] = analysis::scheme_name(chosen);
        if (selection) meta["scheme_selection"] = analysis::selection_json(*selection);
        analysis::write_report_files(correlate_out, rep, table, meta);
      }
    } else if (*report) {
      std::ifstream in(report_in);
      const auto j = nlohmann::json::parse(in);
      for (const auto& b : j.at("per_environment")) {
        print_matrix(std::cout, b.at("name").get<std::string>(), matrix_from_json(b.at("r")));
      }
      print_matrix(std::cout, "Combined (" + j.at("normalization").get<std::string>() + ")",
                   matrix_from_json(j.at("combined").at("r")));
    } else if (*run) {
      auto config = pipeline::load_run_config(config_path);
      for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value");
        pipeline::apply_run_setting(config, ov.substr(0, eq), ov.substr(eq + 1), fs::current_path());
      }
      const auto result = pipeline::run_pipeline(config);
      for (const auto& s : result.stages) {
        std::cout << (s.cache_hit ? "cached  " : "computed") << "  " << s.stage << "  " << s.scope << "  "
                  << s.key.substr(0, 12) << '\n';
      }
      print_matrix(std::cout, "Combined (" + std::string(analysis::scheme_name(result.report.scheme)) + ")",
                   result.report.combined.r);
      std::cout << "report: " << (result.output / "report.json").string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "objscope: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
