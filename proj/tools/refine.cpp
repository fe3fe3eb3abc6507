// Command-line entry point: data preparation, group store inspection,
// training-set export, simulated experiments and the HTTP server.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "refine/api_server.hpp"
#include "refine/dataset.hpp"
#include "refine/errors.hpp"
#include "refine/feedback_export.hpp"
#include "refine/group_store.hpp"
#include "refine/pca.hpp"
#include "refine/session.hpp"
#include "refine/simulation.hpp"

namespace {

using namespace refine;
using nlohmann::ordered_json;

constexpr int kExitError = 1;
constexpr int kExitInvariant = 3;

struct DataArgs {
  std::string manifest;
  std::string features;
};

struct ConfigArgs {
  std::size_t scope = 20;
  std::size_t max_iterations = 6;
  double delta = 1e-6;
  std::string weight_mode = "discriminant";
  std::uint64_t seed = 0;

  SessionConfig build() const {
    SessionConfig cfg;
    cfg.scope = scope;
    cfg.max_iterations = max_iterations;
    cfg.delta = delta;
    cfg.weight_mode = parse_weight_mode(weight_mode);
    cfg.rng_seed = seed;
    cfg.validate();
    return cfg;
  }
};

void add_data_args(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--manifest", args.manifest, "Item manifest (JSON lines)")->required();
  cmd->add_option("--features", args.features, "Feature matrix (FVEC1)")->required();
}

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--scope", args.scope, "Relevant items wanted per query")->capture_default_str();
  cmd->add_option("--max-iterations", args.max_iterations, "Feedback rounds per session")->capture_default_str();
  cmd->add_option("--delta", args.delta, "Floor for the relevant-set deviation")->capture_default_str();
  cmd->add_option("--weight-mode", args.weight_mode, "sigma_ratio or discriminant")->capture_default_str();
  cmd->add_option("--seed", args.seed, "Random seed")->capture_default_str();
}

Dataset load_dataset(const DataArgs& args) {
  return load_features(args.features, load_manifest(args.manifest));
}

void write_json(const std::string& path, const ordered_json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  fn(out);
}

ordered_json split_json(const DatasetSplit& split) {
  ordered_json j;
  j["test"] = split.test;
  j["validation"] = split.validation;
  j["retrieval_db"] = split.retrieval_db;
  return j;
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto token = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!token.empty()) out.push_back(std::stod(token));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relevance-feedback retrieval engine over precomputed feature vectors"};
  app.require_subcommand(1);

  // data
  auto* data = app.add_subcommand("data", "Dataset preparation");
  data->require_subcommand(1);

  DataArgs split_data;
  SplitOptions split_opts;
  std::string split_out;
  bool split_biased = false;
  std::size_t split_scope = 20;
  auto* split_cmd = data->add_subcommand("split", "Split into test / validation / retrieval database");
  add_data_args(split_cmd, split_data);
  split_cmd->add_option("--seed", split_opts.seed, "Random seed")->capture_default_str();
  split_cmd->add_option("--test-per-label", split_opts.test_per_label, "Test items per label")->capture_default_str();
  split_cmd->add_option("--validation", split_opts.validation, "Validation items")->capture_default_str();
  split_cmd->add_flag("--low-precision-test", split_biased,
                      "Pick each label's lowest iteration-0 precision items as test items");
  split_cmd->add_option("--scope", split_scope, "Scope used for --low-precision-test")->capture_default_str();
  split_cmd->add_option("--out", split_out, "Output directory")->required();

  std::string pca_features;
  std::string pca_out;
  std::string pca_model;
  std::size_t pca_k = kDefaultPcaComponents;
  auto* pca_cmd = data->add_subcommand("pca", "Project features onto their top principal components");
  pca_cmd->add_option("--features", pca_features, "Input feature matrix")->required();
  pca_cmd->add_option("--k", pca_k, "Components to keep (clamped to the data)")->capture_default_str();
  pca_cmd->add_option("--out", pca_out, "Output feature matrix")->required();
  pca_cmd->add_option("--model", pca_model, "Also write the fitted model here");

  SyntheticSpec synth;
  std::string synth_manifest;
  std::string synth_features;
  auto* synth_cmd = data->add_subcommand("synth", "Generate a labelled Gaussian-cluster dataset");
  synth_cmd->add_option("--labels", synth.labels)->capture_default_str();
  synth_cmd->add_option("--per-label", synth.per_label)->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim)->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--manifest-out", synth_manifest)->required();
  synth_cmd->add_option("--features-out", synth_features)->required();

  // groups
  auto* groups = app.add_subcommand("groups", "Inspect the persisted group store");
  groups->require_subcommand(1);
  std::string groups_store;
  std::string groups_out;
  auto* groups_export = groups->add_subcommand("export", "Write group membership as JSON lines");
  groups_export->add_option("--store", groups_store, "Group store file")->required();
  groups_export->add_option("--out", groups_out, "Output file")->required();
  auto* groups_stats = groups->add_subcommand("stats", "Group count and size histogram");
  groups_stats->add_option("--store", groups_store, "Group store file")->required();

  // export
  auto* exp = app.add_subcommand("export", "Training datasets from accumulated feedback");
  exp->require_subcommand(1);
  std::string pairs_events;
  std::string pairs_manifest;
  std::string pairs_out;
  auto* pairs_cmd = exp->add_subcommand("pairs", "Similar / dissimilar item pairs (CSV)");
  pairs_cmd->add_option("--events", pairs_events, "Feedback event log")->required();
  pairs_cmd->add_option("--manifest", pairs_manifest, "Manifest for thumbnail columns");
  pairs_cmd->add_option("--out", pairs_out, "Output CSV")->required();

  std::string classes_store;
  std::string classes_out;
  std::size_t classes_min = 10;
  double classes_val = 0.2;
  std::uint64_t classes_seed = 0;
  auto* classes_cmd = exp->add_subcommand("classes", "Per-group train / validation manifest (JSON)");
  classes_cmd->add_option("--store", classes_store, "Group store file")->required();
  classes_cmd->add_option("--min-size", classes_min, "Drop groups smaller than this")->capture_default_str();
  classes_cmd->add_option("--val-fraction", classes_val, "Validation share per group")->capture_default_str();
  classes_cmd->add_option("--seed", classes_seed)->capture_default_str();
  classes_cmd->add_option("--out", classes_out, "Output JSON")->required();

  // sim
  auto* sim = app.add_subcommand("sim", "Simulated-user experiments");
  sim->require_subcommand(1);
  DataArgs sim_data;
  ConfigArgs sim_cfg;
  std::string sim_report;
  std::string sim_csv;
  bool sim_timing = false;
  std::size_t sim_test_per_label = 1;
  std::size_t sim_validation = 0;
  auto add_sim_common = [&](CLI::App* cmd) {
    add_data_args(cmd, sim_data);
    add_config_args(cmd, sim_cfg);
    cmd->add_option("--report", sim_report, "Report JSON (stdout when omitted)");
    cmd->add_option("--csv", sim_csv, "Summary table CSV");
    cmd->add_flag("--timing", sim_timing, "Include wall-clock time in the report");
  };

  bool baseline_all = false;
  auto* sim_baseline = sim->add_subcommand("baseline", "Feature re-weighting sessions without grouping");
  add_sim_common(sim_baseline);
  sim_baseline->add_option("--test-per-label", sim_test_per_label)->capture_default_str();
  sim_baseline->add_option("--validation", sim_validation)->capture_default_str();
  sim_baseline->add_flag("--all-queries", baseline_all, "Query with every item against the whole dataset");

  std::size_t sim_checkpoints = 5;
  std::string sim_groups_out;
  std::string sim_events_out;
  auto* sim_grouping = sim->add_subcommand("grouping", "Group memory built from validation queries");
  add_sim_common(sim_grouping);
  sim_grouping->add_option("--test-per-label", sim_test_per_label)->capture_default_str();
  sim_grouping->add_option("--validation", sim_validation)->capture_default_str();
  sim_grouping->add_option("--checkpoints", sim_checkpoints)->capture_default_str();
  sim_grouping->add_option("--groups-out", sim_groups_out, "Write the final group store");
  sim_grouping->add_option("--events-out", sim_events_out, "Write the validation feedback log");

  std::string sim_fractions = "0,0.05,0.1,0.3,0.5,0.7,0.9,1";
  std::vector<std::string> sim_swaps;
  std::string sim_pairs_dir;
  auto* sim_sampling = sim->add_subcommand("sampling", "Sample-fraction precision protocol");
  add_sim_common(sim_sampling);
  sim_sampling->add_option("--fractions", sim_fractions, "Comma-separated fractions in [0,1]")
      ->capture_default_str();
  sim_sampling->add_option("--swap", sim_swaps, "FRACTION=PATH feature file from a retrained encoder");
  sim_sampling->add_option("--pairs-dir", sim_pairs_dir, "Write exported pairs per fraction here");

  // serve
  ServerOptions server;
  DataArgs serve_data;
  ConfigArgs serve_cfg;
  std::string serve_groups;
  std::string serve_events;
  std::string serve_thumbs;
  std::string serve_static;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  add_data_args(serve_cmd, serve_data);
  add_config_args(serve_cmd, serve_cfg);
  serve_cmd->add_option("--host", server.host)->capture_default_str()->envname("REFINE_HOST");
  serve_cmd->add_option("--port", server.port)->capture_default_str()->envname("REFINE_PORT");
  serve_cmd->add_option("--groups", serve_groups, "Group store file (created on first session)")
      ->envname("REFINE_GROUPS");
  serve_cmd->add_option("--events", serve_events, "Feedback event log (appended)")->envname("REFINE_EVENTS");
  serve_cmd->add_option("--thumbnails", serve_thumbs, "Directory served under /thumbnails");
  serve_cmd->add_option("--static-root", serve_static, "Directory served at / (web UI build)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (split_cmd->parsed()) {
      const Dataset ds = load_dataset(split_data);
      if (split_biased) split_opts.rf0_precision = rf0_precisions(ds, split_scope);
      const DatasetSplit split = split_dataset(ds, split_opts);
      std::filesystem::create_directories(split_out);
      write_json((std::filesystem::path(split_out) / "split.json").string(), split_json(split));
      std::cerr << "test " << split.test.size() << ", validation " << split.validation.size()
                << ", retrieval_db " << split.retrieval_db.size() << '\n';
    } else if (pca_cmd->parsed()) {
      const FeatureMatrix features = read_fvec(pca_features);
      const PcaModel model = fit_pca_clamped(features, pca_k);
      if (model.output_dim() != pca_k) {
        std::cerr << "warning: k clamped to " << model.output_dim() << '\n';
      }
      save_fvec(pca_out, transform(model, features));
      if (!pca_model.empty()) save_pca(pca_model, model);
    } else if (synth_cmd->parsed()) {
      const Dataset ds = generate_synthetic(synth);
      save_manifest(synth_manifest, ds);
      save_fvec(synth_features, ds.features());
    } else if (groups_export->parsed()) {
      GroupStore::load(groups_store).save(groups_out);
    } else if (groups_stats->parsed()) {
      const GroupStore store = GroupStore::load(groups_store);
      ordered_json j;
      j["group_count"] = store.group_count();
      j["grouped_items"] = store.member_count();
      j["generation"] = store.generation();
      ordered_json hist = ordered_json::object();
      for (const auto& [size, count] : store.size_histogram()) hist[std::to_string(size)] = count;
      j["size_histogram"] = hist;
      std::cout << j.dump(2) << '\n';
    } else if (pairs_cmd->parsed()) {
      const auto events = load_events(pairs_events);
      std::optional<Dataset> manifest;
      if (!pairs_manifest.empty()) manifest = load_manifest(pairs_manifest);
      const PairExport pairs = export_pairs(events);
      write_file(pairs_out, [&](std::ostream& out) { write_pairs_csv(out, pairs, manifest ? &*manifest : nullptr); });
      std::cerr << pairs.pairs.size() << " pairs, " << pairs.conflicts << " flagged\n";
    } else if (classes_cmd->parsed()) {
      const GroupStore store = GroupStore::load(classes_store);
      write_json(classes_out, to_json(export_class_dataset(store, classes_min, classes_val, classes_seed)));
    } else if (sim_baseline->parsed()) {
      const Dataset ds = load_dataset(sim_data);
      const SessionConfig cfg = sim_cfg.build();
      ExperimentReport report;
      if (baseline_all) {
        std::vector<std::string> ids;
        for (const auto& item : ds.items()) ids.push_back(item.id);
        report = run_baseline(ds, make_queries(ds, ids), cfg);
      } else {
        const DatasetSplit split = split_dataset(ds, sim_cfg.seed, sim_test_per_label, sim_validation);
        const auto rows = indices_of(ds, split.retrieval_db);
        report = run_baseline(ds.subset(rows), make_queries(ds, split.test), cfg);
      }
      write_json(sim_report, to_json(report, sim_timing));
      if (!sim_csv.empty()) write_file(sim_csv, [&](std::ostream& out) { write_checkpoints_csv(out, report); });
    } else if (sim_grouping->parsed()) {
      const Dataset ds = load_dataset(sim_data);
      const DatasetSplit split = split_dataset(ds, sim_cfg.seed, sim_test_per_label, sim_validation);
      GroupingArtifacts artifacts;
      const auto report = run_grouping_experiment(ds, split, sim_checkpoints, sim_cfg.build(), &artifacts);
      write_json(sim_report, to_json(report, sim_timing));
      if (!sim_csv.empty()) write_file(sim_csv, [&](std::ostream& out) { write_checkpoints_csv(out, report); });
      if (!sim_groups_out.empty()) artifacts.store.save(sim_groups_out);
      if (!sim_events_out.empty()) {
        write_file(sim_events_out, [&](std::ostream& out) {
          for (const auto& e : artifacts.events) write_event(out, e);
        });
      }
    } else if (sim_sampling->parsed()) {
      const Dataset ds = load_dataset(sim_data);
      SamplingOptions opts;
      opts.fractions = parse_fractions(sim_fractions);
      opts.seed = sim_cfg.seed;
      opts.encoder_swaps.resize(opts.fractions.size());
      for (const auto& spec : sim_swaps) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw ParameterError("--swap expects FRACTION=PATH, got '" + spec + "'");
        const double x = std::stod(spec.substr(0, eq));
        bool placed = false;
        for (std::size_t f = 0; f < opts.fractions.size(); ++f) {
          if (opts.fractions[f] == x) {
            opts.encoder_swaps[f] = spec.substr(eq + 1);
            placed = true;
          }
        }
        if (!placed) throw ParameterError("--swap fraction " + spec.substr(0, eq) + " is not in --fractions");
      }
      if (!sim_pairs_dir.empty()) opts.pairs_dir = sim_pairs_dir;
      const auto report = run_sampling_protocol(ds, opts, sim_cfg.build());
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      write_json(sim_report, to_json(report, sim_timing));
      if (!sim_csv.empty()) write_file(sim_csv, [&](std::ostream& out) { write_fractions_csv(out, report); });
    } else if (serve_cmd->parsed()) {
      server.manifest = serve_data.manifest;
      server.features = serve_data.features;
      server.defaults = serve_cfg.build();
      if (!serve_groups.empty()) server.groups_path = serve_groups;
      if (!serve_events.empty()) server.events_path = serve_events;
      if (!serve_thumbs.empty()) server.thumbnails_root = serve_thumbs;
      if (!serve_static.empty()) server.static_root = serve_static;
      serve(server);
    }
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
