// plbench: generate, characterize, train and evaluate preference models.
//
// Every subcommand writes its artifacts under --out-dir together with
// manifest-<command>.json naming input hashes, derived seeds and the
// effective configuration. Precedence: flags > --config file > environment
// (PLBENCH_OUT_DIR, PLBENCH_WORKERS) > defaults.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "manifest.hpp"
#include "plbench/characterize.hpp"
#include "plbench/error.hpp"
#include "plbench/eval.hpp"
#include "plbench/experiments.hpp"
#include "plbench/models.hpp"
#include "plbench/synthgen.hpp"

namespace plbench::cli {
namespace {

struct Global {
  std::string out_dir = ".";
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

// Training knobs shared by train, adapt and sweep.
struct TrainFlags {
  double lr = 1e-2;
  std::size_t batch = 64;
  std::size_t epochs = 200;
  std::size_t patience = 10;
  std::string optimizer = "adam";
  double alpha = 0.8;
  std::size_t prm_hidden = 32;
  std::size_t user_dim = 8;
  std::size_t latent = 8;
  double beta = 0.1;
  std::size_t vpl_context = 8;
  std::size_t gpo_context = 30;
  std::size_t gpo_width = 32;
  std::size_t gpo_layers = 2;
  std::size_t gpo_heads = 2;
  std::size_t gpo_episodes = 512;
  std::size_t knn_k = 3;

  void attach(CLI::App* app) {
    app->add_option("--lr", lr, "Learning rate")->capture_default_str();
    app->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--patience", patience, "Early-stop patience (0 disables)")->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam or sgd")->capture_default_str();
    app->add_option("--alpha", alpha, "PRM user-specific loss weight")->capture_default_str();
    app->add_option("--prm-hidden", prm_hidden)->capture_default_str();
    app->add_option("--user-dim", user_dim, "PRM user embedding size")->capture_default_str();
    app->add_option("--latent", latent, "VPL latent size")->capture_default_str();
    app->add_option("--beta", beta, "VPL KL weight")->capture_default_str();
    app->add_option("--vpl-context", vpl_context)->capture_default_str();
    app->add_option("--gpo-context", gpo_context)->capture_default_str();
    app->add_option("--gpo-width", gpo_width)->capture_default_str();
    app->add_option("--gpo-layers", gpo_layers)->capture_default_str();
    app->add_option("--gpo-heads", gpo_heads)->capture_default_str();
    app->add_option("--gpo-episodes", gpo_episodes, "Episodes per epoch")->capture_default_str();
    app->add_option("--knn-k", knn_k)->capture_default_str();
  }

  MethodOptions options() const {
    MethodOptions o;
    o.optim.learning_rate = lr;
    o.optim.batch_size = batch;
    o.optim.epochs = epochs;
    o.optim.patience = patience;
    o.optim.optimizer = parse_optimizer(optimizer);
    validate(o.optim);
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("--alpha must lie in [0, 1]");
    o.prm.alpha = alpha;
    o.prm.hidden = prm_hidden;
    o.prm.user_dim = user_dim;
    o.vpl.latent = latent;
    o.vpl.beta = beta;
    o.vpl.context = vpl_context;
    o.gpo.context = gpo_context;
    o.gpo.width = gpo_width;
    o.gpo.layers = gpo_layers;
    o.gpo.heads = gpo_heads;
    o.gpo.episodes_per_epoch = gpo_episodes;
    o.knn_k = knn_k;
    return o;
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text)) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || v == 0) throw UsageError(std::string(flag) + ": expected positive integers, got '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(flag) + " is empty");
  return out;
}

std::vector<std::string> resolve_methods(const std::string& text) {
  if (text == "all") return {"vanilla", "individual", "conditional", "prm", "vpl", "gpo", "knn"};
  auto out = split_list(text);
  if (out.empty()) throw UsageError("--methods is empty");
  for (const auto& m : out) parse_method(m);  // validates
  return out;
}

void print_written(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
}

// ---------------------------------------------------------------------------

struct GenFlags {
  std::string mode = "soups";
  std::size_t users = 6;
  std::size_t triples = 1000;
  std::size_t dimension = 8;
  std::optional<double> tau;
  std::size_t minority = 0;
  double duplicates = 0.1;
  std::string out = "dataset.jsonl";
};

void cmd_gen(const Global& g, const GenFlags& f) {
  GeneratorConfig c;
  c.mode = parse_generator_mode(f.mode);
  c.n_users = f.users;
  c.n_triples = f.triples;
  c.dimension = f.dimension;
  c.tau = f.tau;
  c.minority_count = f.minority;
  c.duplicate_fraction = f.duplicates;
  c.seed = g.seed;
  validate(c);
  const GeneratedData gen = generate_dataset(c);
  Run run("gen", g.out_dir, g.seed);
  run.set_config(gen.dataset.metadata().generator);
  run.add_output(f.out, dataset_to_string(gen.dataset));
  run.add_output(profiles_path_for(f.out),
                 profiles_to_string(gen.archetypes, gen.users, gen.dataset.dimension()));
  print_written(run.commit());
}

struct ProfileFlags {
  std::string data;
  std::string name;
  double threshold = 0.30;
  double minority_cutoff = 0.5;
};

void cmd_profile(const Global& g, const ProfileFlags& f) {
  const PreferenceDataset d = load_dataset(f.data);
  const DatasetProfile p = profile_dataset(d, f.threshold, f.minority_cutoff);
  const std::string name = f.name.empty() ? std::filesystem::path(f.data).stem().string() : f.name;
  const std::string table = render_profile_table(name, p);
  Run run("profile", g.out_dir, g.seed);
  run.add_input(f.data);
  run.set_config({{"threshold", f.threshold}, {"minority_cutoff", f.minority_cutoff}});
  run.add_output("profile.json", to_json(p).dump(2) + "\n");
  run.add_output("profile.txt", table);
  std::cout << table;
  print_written(run.commit());
}

struct TrainCmd {
  std::string data;
  std::string methods = "all";
  std::string split = "by-triple";
  bool no_split = false;
  TrainFlags t;
};

void cmd_train(const Global& g, const TrainCmd& f) {
  const auto methods = resolve_methods(f.methods);
  MethodOptions base = f.t.options();
  const PreferenceDataset d = load_dataset(f.data);
  Run run("train", g.out_dir, g.seed);
  run.add_input(f.data);
  DatasetSplit split;
  if (f.no_split) {
    split.train = d;
  } else {
    const std::uint64_t s = derive_seed(g.seed, "train-split");
    run.add_seed("split", s);
    split = split_dataset(d, parse_split_mode(f.split), {}, s);
    run.add_output("split-train.jsonl", dataset_to_string(split.train));
    run.add_output("split-validation.jsonl", dataset_to_string(split.validation));
    run.add_output("split-test.jsonl", dataset_to_string(split.test));
  }
  const PreferenceDataset* val = split.validation.empty() ? nullptr : &split.validation;
  Json cfg = to_json(base);
  cfg["methods"] = methods;
  cfg["split"] = f.no_split ? "none" : f.split;
  run.set_config(cfg);
  for (const auto& m : methods) {
    MethodOptions o = base;
    o.optim.seed = derive_seed(g.seed, "train:" + m);
    run.add_seed("train:" + m, o.optim.seed);
    const MethodKind kind = parse_method(m);
    if (kind == MethodKind::kGpo) {
      const std::uint64_t seed = o.optim.seed;
      o.optim = default_gpo_optim();
      o.optim.seed = seed;
    }
    std::cerr << "training " << m << "\n";
    const PreferenceModel model = train_method(kind, split.train, val, o);
    run.add_output(to_string(kind) + ".ckpt.json", to_json(model).dump() + "\n");
  }
  print_written(run.commit());
}

struct EvalCmd {
  std::vector<std::string> checkpoints;
  std::string data;
  bool per_user = false;
  std::string policy = "strict";
};

void cmd_eval(const Global& g, const EvalCmd& f) {
  if (f.checkpoints.empty()) throw UsageError("--checkpoint is required");
  UserPolicy policy;
  if (f.policy == "strict") {
    policy = UserPolicy::kStrict;
  } else if (f.policy == "agnostic") {
    policy = UserPolicy::kUserAgnostic;
  } else {
    throw UsageError("--policy must be strict or agnostic, got '" + f.policy + "'");
  }
  const PreferenceDataset test = load_dataset(f.data);
  Run run("eval", g.out_dir, g.seed);
  run.add_input(f.data);
  run.set_config({{"policy", f.policy}, {"checkpoints", f.checkpoints}});
  std::vector<EvalReport> reports;
  for (const auto& path : f.checkpoints) {
    run.add_input(path);
    const PreferenceModel model = load_checkpoint(path);
    if (model.dimension != test.dimension()) {
      throw DataError("checkpoint '" + path + "' has dimension " + std::to_string(model.dimension) +
                      " but data has " + std::to_string(test.dimension()));
    }
    reports.push_back(evaluate(model, test, policy, g.seed));
  }
  Json all = Json::array();
  for (const auto& r : reports) {
    all.push_back(to_json(r));
    std::printf("%-12s %.4f\n", r.method.c_str(), r.accuracy);
  }
  run.add_output("eval.json", all.dump(2) + "\n");
  if (f.per_user) {
    const UserTable table = per_user_table(reports);
    const std::string text = render_user_table(table);
    std::cout << text;
    run.add_output("eval-per-user.txt", text);
    run.add_output("eval-per-user.csv", to_csv(table));
  }
  print_written(run.commit());
}

struct AdaptCmd {
  std::string data;
  std::string methods = "gpo,similar-user,finetune,individual";
  std::string budgets = "30,100,300";
  std::size_t n_test = 1000;
  std::string gpo_checkpoint;
  std::size_t gpo_epochs = 400;
  double gpo_lr = 3e-3;
  TrainFlags t;
};

void cmd_adapt(const Global& g, const AdaptCmd& f) {
  AdaptationConfig a;
  a.methods = split_list(f.methods);
  a.budgets = parse_sizes(f.budgets, "--budgets");
  a.n_test = f.n_test;
  a.options = f.t.options();
  a.gpo_optim.epochs = f.gpo_epochs;
  a.gpo_optim.learning_rate = f.gpo_lr;
  a.seed = g.seed;
  a.workers = g.workers;
  const PreferenceDataset d = load_dataset(f.data);
  Run run("adapt", g.out_dir, g.seed);
  run.add_input(f.data);
  const std::uint64_t split_seed = derive_seed(g.seed, "adapt-split");
  a.options.optim.seed = derive_seed(g.seed, "adapt-train");
  a.gpo_optim.seed = derive_seed(g.seed, "adapt-gpo");
  run.add_seed("split", split_seed);
  run.add_seed("train", a.options.optim.seed);
  run.add_seed("gpo", a.gpo_optim.seed);
  const DatasetSplit split = split_dataset(d, SplitMode::kByUser, {0.7, 0.1, 0.2}, split_seed);
  std::optional<PreferenceModel> gpo;
  if (!f.gpo_checkpoint.empty()) {
    run.add_input(f.gpo_checkpoint);
    gpo = load_checkpoint(f.gpo_checkpoint);
    if (gpo->kind() != MethodKind::kGpo) {
      throw UsageError("--gpo-checkpoint holds a " + to_string(gpo->kind()) + " model, expected gpo");
    }
  }
  Json cfg;
  cfg["methods"] = a.methods;
  cfg["budgets"] = a.budgets;
  cfg["n_test"] = a.n_test;
  cfg["options"] = to_json(a.options);
  cfg["gpo_optim"] = to_json(a.gpo_optim);
  run.set_config(cfg);
  const AdaptationCurve curve = adaptation_protocol(split, a, gpo ? &*gpo : nullptr);
  const std::string csv = to_csv(curve);
  std::cout << csv;
  run.add_output("adapt.json", to_json(curve).dump(2) + "\n");
  run.add_output("adapt.csv", csv);
  print_written(run.commit());
}

struct TaxCmd {
  TaxExperimentConfig c;
  double lr = 1e-2;
  std::size_t epochs = 200;
};

void cmd_tax(const Global& g, TaxCmd f) {
  f.c.seed = g.seed;
  f.c.pretrain_optim.seed = derive_seed(g.seed, "tax-pretrain");
  f.c.finetune_optim.seed = derive_seed(g.seed, "tax-finetune");
  f.c.finetune_optim.learning_rate = f.lr;
  f.c.finetune_optim.epochs = f.epochs;
  Run run("tax", g.out_dir, g.seed);
  run.add_seed("pretrain", f.c.pretrain_optim.seed);
  run.add_seed("finetune", f.c.finetune_optim.seed);
  run.set_config({{"dimension", f.c.dimension},
                  {"n_users", f.c.n_users},
                  {"user_triples", f.c.user_triples},
                  {"n_probes", f.c.n_probes},
                  {"margin", f.c.margin},
                  {"pretrain_probes", f.c.pretrain_probes},
                  {"user_id", f.c.user_id},
                  {"finetune_optim", to_json(f.c.finetune_optim)}});
  const TaxExperimentResult r = run_tax_experiment(f.c);
  std::printf("divergent user: user %+.3f probe %+.3f\n", r.divergent.user_delta, r.divergent.probe_delta);
  std::printf("aligned user:   user %+.3f probe %+.3f\n", r.aligned.user_delta, r.aligned.probe_delta);
  run.add_output("tax.json", to_json(r).dump(2) + "\n");
  print_written(run.commit());
}

struct SweepCmd {
  std::string data;
  std::string methods = "vanilla,individual,conditional,prm";
  std::string sizes = "100,300,1000,3000";
  std::string split = "by-triple";
  TrainFlags t;
};

void cmd_sweep(const Global& g, const SweepCmd& f) {
  const auto methods = resolve_methods(f.methods);
  const auto sizes = parse_sizes(f.sizes, "--sizes");
  const MethodOptions o = f.t.options();
  const PreferenceDataset d = load_dataset(f.data);
  Run run("sweep", g.out_dir, g.seed);
  run.add_input(f.data);
  const std::uint64_t split_seed = derive_seed(g.seed, "sweep-split");
  run.add_seed("split", split_seed);
  const DatasetSplit split = split_dataset(d, parse_split_mode(f.split), {}, split_seed);
  Json cfg = to_json(o);
  cfg["methods"] = methods;
  cfg["sizes"] = sizes;
  cfg["split"] = f.split;
  run.set_config(cfg);
  const auto cells = sample_efficiency_sweep(methods, split, sizes, o, g.seed, g.workers);
  const std::string csv = to_csv(cells);
  std::cout << csv;
  run.add_output("sweep.csv", csv);
  print_written(run.commit());
}

struct ExportCmd {
  std::string checkpoint;
  std::string out = "embeddings.csv";
};

void cmd_export(const Global& g, const ExportCmd& f) {
  const PreferenceModel m = load_checkpoint(f.checkpoint);
  Run run("export-embeddings", g.out_dir, g.seed);
  run.add_input(f.checkpoint);
  run.add_output(f.out, to_csv(export_user_embeddings(m)));
  print_written(run.commit());
}

int exit_code(ErrorKind k) { return static_cast<int>(k); }

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized preference-learning benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults (flags win)");
  Global g;
  app.add_option("--out-dir", g.out_dir, "Output directory")->envname("PLBENCH_OUT_DIR")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for independent cells")
      ->envname("PLBENCH_WORKERS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--seed", g.seed, "Global seed")->capture_default_str();

  GenFlags gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic preference dataset");
  c_gen->add_option("--mode", gen.mode, "soups, personalllm or tldr")->capture_default_str();
  c_gen->add_option("--users", gen.users)->capture_default_str();
  c_gen->add_option("--triples", gen.triples)->capture_default_str();
  c_gen->add_option("--dim", gen.dimension, "Embedding dimension")->capture_default_str();
  c_gen->add_option("--tau", gen.tau, "Label noise temperature (default per mode)");
  c_gen->add_option("--minority", gen.minority, "Adversarial minority users")->capture_default_str();
  c_gen->add_option("--duplicates", gen.duplicates, "Fraction of triples re-annotated")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Dataset file")->capture_default_str();

  ProfileFlags prof;
  auto* c_prof = app.add_subcommand("profile", "Disagreement and consistency statistics");
  c_prof->add_option("--data", prof.data)->required();
  c_prof->add_option("--name", prof.name, "Row label (defaults to the file stem)");
  c_prof->add_option("--threshold", prof.threshold, "High-divergence minority share")->capture_default_str();
  c_prof->add_option("--minority-cutoff", prof.minority_cutoff)->capture_default_str();

  TrainCmd train;
  auto* c_train = app.add_subcommand("train", "Train one checkpoint per method");
  c_train->add_option("--data", train.data)->required();
  c_train->add_option("--methods", train.methods, "Comma list or 'all'")->capture_default_str();
  c_train->add_option("--split", train.split, "by-triple or by-user")->capture_default_str();
  c_train->add_flag("--no-split", train.no_split, "Train on every record");
  train.t.attach(c_train);

  EvalCmd ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate checkpoints on a dataset");
  c_eval->add_option("--checkpoint", ev.checkpoints, "Checkpoint file (repeatable)")->required();
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_flag("--per-user", ev.per_user, "Also write the per-user table");
  c_eval->add_option("--policy", ev.policy, "strict or agnostic")->capture_default_str();

  AdaptCmd ad;
  auto* c_adapt = app.add_subcommand("adapt", "Few-shot adaptation curve on held-out users");
  c_adapt->add_option("--data", ad.data)->required();
  c_adapt->add_option("--methods", ad.methods)->capture_default_str();
  c_adapt->add_option("--budgets", ad.budgets)->capture_default_str();
  c_adapt->add_option("--n-test", ad.n_test, "Test pairs per held-out user")->capture_default_str();
  c_adapt->add_option("--gpo-checkpoint", ad.gpo_checkpoint, "Skip meta-training and use this model");
  c_adapt->add_option("--gpo-epochs", ad.gpo_epochs)->capture_default_str();
  c_adapt->add_option("--gpo-lr", ad.gpo_lr)->capture_default_str();
  ad.t.attach(c_adapt);

  TaxCmd tax;
  auto* c_tax = app.add_subcommand("tax", "Probe accuracy before and after personal fine-tuning");
  c_tax->add_option("--dim", tax.c.dimension)->capture_default_str();
  c_tax->add_option("--users", tax.c.n_users)->capture_default_str();
  c_tax->add_option("--user-triples", tax.c.user_triples)->capture_default_str();
  c_tax->add_option("--probes", tax.c.n_probes)->capture_default_str();
  c_tax->add_option("--margin", tax.c.margin)->capture_default_str();
  c_tax->add_option("--pretrain-probes", tax.c.pretrain_probes)->capture_default_str();
  c_tax->add_option("--user", tax.c.user_id)->capture_default_str();
  c_tax->add_option("--lr", tax.lr, "Fine-tune learning rate")->capture_default_str();
  c_tax->add_option("--epochs", tax.epochs, "Fine-tune epochs")->capture_default_str();

  SweepCmd sw;
  auto* c_sweep = app.add_subcommand("sweep", "Accuracy against training-set size");
  c_sweep->add_option("--data", sw.data)->required();
  c_sweep->add_option("--methods", sw.methods)->capture_default_str();
  c_sweep->add_option("--sizes", sw.sizes)->capture_default_str();
  c_sweep->add_option("--split", sw.split)->capture_default_str();
  sw.t.attach(c_sweep);

  ExportCmd ex;
  auto* c_export = app.add_subcommand("export-embeddings", "Per-user vectors as CSV");
  c_export->add_option("--checkpoint", ex.checkpoint)->required();
  c_export->add_option("--out", ex.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (*c_gen) cmd_gen(g, gen);
    if (*c_prof) cmd_profile(g, prof);
    if (*c_train) cmd_train(g, train);
    if (*c_eval) cmd_eval(g, ev);
    if (*c_adapt) cmd_adapt(g, ad);
    if (*c_tax) cmd_tax(g, tax);
    if (*c_sweep) cmd_sweep(g, sw);
    if (*c_export) cmd_export(g, ex);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: data: " << one_line(e.what()) << "\n";
    return 2;
  }
  return 0;
}

}  // namespace plbench::cli

int main(int argc, char** argv) { return plbench::cli::main(argc, argv); }
