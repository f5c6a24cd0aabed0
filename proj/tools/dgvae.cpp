// dgvae command-line driver: synth, prepare, graph, train, eval, explain, gradcheck.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgvae/dgvae.hpp"
#include "dgvae/fixtures.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace dgvae;
using cli::Manifest;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError("--k expects a comma-separated list of positive integers, got '" + s + "'");
    }
  }
  if (ks.empty()) throw ConfigError("--k is empty");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

// "keep=2" or "keep=0,fraction=0.2"
ColdStartOptions parse_cold_start(const std::string& spec) {
  ColdStartOptions c;
  bool has_keep = false;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto eq = part.find('=');
    const std::string key = part.substr(0, eq), value = eq == std::string::npos ? "" : part.substr(eq + 1);
    try {
      if (key == "keep") {
        c.keep_per_item = std::stoul(value);
        has_keep = true;
      } else if (key == "fraction") {
        c.item_fraction = std::stod(value);
      } else {
        throw ConfigError("--cold-start: unknown key '" + key + "' (expected keep=N[,fraction=F])");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--cold-start: bad value in '" + part + "'");
    }
  }
  if (!has_keep) throw ConfigError("--cold-start needs keep=N");
  return c;
}

struct ModelFlags {
  ModelConfig model;
  TrainConfig train;
  bool no_word_branch = false;

  void add(CLI::App* app) {
    app->add_option("--prototypes", model.num_prototypes, "number of latent prototypes K")->capture_default_str();
    app->add_option("--dim", model.latent_dim, "latent dimension d")->capture_default_str();
    app->add_option("--layers", model.gcn_layers, "Res-GCN layers L")->capture_default_str();
    app->add_option("--tau", model.temperature, "temperature")->capture_default_str();
    app->add_option("--prior-scale", model.prior_scale, "prior standard deviation sigma0")->capture_default_str();
    app->add_flag("--no-word-branch", no_word_branch, "train the rating branch only (disables MI)");
    app->add_option("--lr", train.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", train.batch_size, "users per mini-batch")->capture_default_str();
    app->add_option("--epochs", train.max_epochs, "maximum epochs")->capture_default_str();
    app->add_option("--patience", train.patience, "early-stopping patience in epochs")->capture_default_str();
    app->add_option("--lambda", train.mi_weight, "MI loss weight")->capture_default_str();
    app->add_option("--beta", train.kl_weight, "KL weight")->capture_default_str();
    app->add_option("--rating-weight", train.rating_weight, "rating-branch bound weight")->capture_default_str();
    app->add_option("--word-weight", train.word_weight, "word-branch bound weight")->capture_default_str();
    app->add_option("--seed", train.seed, "random seed")->capture_default_str();
    app->add_option("--eval-every", train.eval_every, "validate every N epochs")->capture_default_str();
    app->add_option("--monitor-k", train.monitor_k, "K of the validation recall used for early stopping")
        ->capture_default_str();
  }
};

std::optional<fs::path> resolve_graph(const fs::path& data, const std::string& flag, bool none) {
  if (none) {
    if (!flag.empty()) throw ConfigError("--graph and --no-graph are mutually exclusive");
    return std::nullopt;
  }
  if (!flag.empty()) return fs::path(flag);
  const fs::path dflt = data / "graph.bin";
  if (!fs::exists(dflt))
    throw IoError("no item graph at '" + dflt.string() + "'; run `dgvae graph` or pass --graph/--no-graph");
  return dflt;
}

std::vector<fs::path> prepared_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const char* f : {"split.tsv", "users.tsv", "items.tsv", "words.tsv", "user_word.tsv", "documents.jsonl"})
    out.push_back(dir / f);
  return out;
}

// ---------------------------------------------------------------------------

struct SynthCmd {
  SynthConfig cfg;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--seed", cfg.seed)->capture_default_str();
    app->add_option("--users", cfg.users)->capture_default_str();
    app->add_option("--items", cfg.items)->capture_default_str();
    app->add_option("--words", cfg.words)->capture_default_str();
    app->add_option("--prototypes", cfg.prototypes, "planted prototypes")->capture_default_str();
    app->add_option("--interactions-per-user", cfg.interactions_per_user)->capture_default_str();
    app->add_option("--text-tokens", cfg.text_tokens_per_item)->capture_default_str();
    app->add_option("--visual-tokens", cfg.visual_tokens_per_item)->capture_default_str();
    app->add_option("--noise", cfg.noise, "noise rate eta")->capture_default_str();
    app->add_option("--one-hot-fraction", cfg.one_hot_fraction)->capture_default_str();
    app->add_option("--embedding-dim", cfg.embedding_dim)->capture_default_str();
    app->add_option("--embedding-noise", cfg.embedding_noise)->capture_default_str();
  }

  void run(const CLI::App& app) const {
    const auto d = generate(cfg);
    write_synth(out, d);
    Manifest m{"synth", cfg.seed, cli::effective_config(app), {},
               {"interactions.tsv", "visual.emb", "textual.emb", "tokens.jsonl", "truth.json"}};
    m.write(fs::path(out) / "manifest.json");
    std::printf("wrote %zu interactions, %zu items, %zu words to %s\n", d.interactions.size(), cfg.items, cfg.words,
                out.c_str());
  }
};

struct PrepareCmd {
  std::string interactions, tokens, visual, textual, out, cold_start;
  PrepareOptions opt;
  double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;

  void add(CLI::App* app) {
    app->add_option("--interactions", interactions, "user<TAB>item TSV")->required();
    app->add_option("--tokens", tokens, "item tokens JSONL")->required();
    app->add_option("--visual", visual, "visual embeddings (rows in tokens order)")->required();
    app->add_option("--textual", textual, "textual embeddings (rows in tokens order)")->required();
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--seed", opt.seed)->capture_default_str();
    app->add_option("--train-ratio", train_ratio)->capture_default_str();
    app->add_option("--val-ratio", val_ratio)->capture_default_str();
    app->add_option("--test-ratio", test_ratio)->capture_default_str();
    app->add_flag("--strict", opt.strict, "fail on users too small to split instead of warning");
    app->add_option("--cold-start", cold_start, "cold-start split, e.g. keep=2 or keep=0,fraction=0.2");
    app->add_option("--top-v", opt.top_v, "visual tokens appended per item")->capture_default_str();
    app->add_option("--core", opt.core, "k-core threshold")->capture_default_str();
    app->add_option("--min-df", opt.vocabulary.min_df)->capture_default_str();
    app->add_option("--max-df-ratio", opt.vocabulary.max_df_ratio)->capture_default_str();
  }

  void run(const CLI::App& app) {
    opt.ratios = {train_ratio, val_ratio, test_ratio};
    if (!cold_start.empty()) opt.cold_start = parse_cold_start(cold_start);
    const auto raw = load_interactions(interactions);
    const auto toks = load_tokens(tokens);
    const auto vis = load_embeddings(visual, Modality::kVisual);
    const auto txt = load_embeddings(textual, Modality::kTextual);
    const auto p = prepare(raw, toks, vis, txt, opt);
    write_prepared(out, p);
    for (const auto& w : p.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    Manifest m{"prepare", opt.seed, cli::effective_config(app), {interactions, tokens, visual, textual}, {}};
    for (const auto& f : prepared_files(out)) m.outputs.push_back(f.filename().string());
    m.outputs.insert(m.outputs.end(), {"visual.emb", "textual.emb", "stats.json"});
    m.write(fs::path(out) / "manifest.json");
    std::printf("%s", stats_table(p.stats).c_str());
    std::printf("train %zu  validation %zu  test %zu  vocabulary %zu\n", p.split.train.size(), p.split.validation.size(),
                p.split.test.size(), p.words.num_words());
  }
};

struct GraphCmd {
  std::string data, out;
  KnnOptions knn;
  double alpha_v = 0.1;

  void add(CLI::App* app) {
    app->add_option("--data", data, "prepared dataset directory")->required();
    app->add_option("--out", out, "graph file (default: <data>/graph.bin)");
    app->add_option("--k", knn.k, "neighbours per item")->capture_default_str();
    app->add_option("--alpha-v", alpha_v, "visual modality weight")->capture_default_str();
    app->add_option("--block-rows", knn.block_rows, "rows per similarity block")->capture_default_str();
  }

  void run(const CLI::App& app) {
    const fs::path dir(data);
    const fs::path target = out.empty() ? dir / "graph.bin" : fs::path(out);
    const auto vis = load_embeddings(dir / "visual.emb", Modality::kVisual);
    const auto txt = load_embeddings(dir / "textual.emb", Modality::kTextual);
    std::vector<std::string> warnings;
    const auto g = build_item_graph(vis, txt, alpha_v, knn, &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    save_graph(target, g);
    Manifest m{"graph", 0, cli::effective_config(app), {dir / "visual.emb", dir / "textual.emb"},
               {target.filename().string()}};
    m.write(target.parent_path() / (target.stem().string() + ".manifest.json"));
    std::printf("graph: %zu items, %zu nonzeros -> %s\n", g.num_items(), g.matrix().nnz(), target.string().c_str());
  }
};

struct TrainCmd {
  std::string data, graph, out, resume;
  bool no_graph = false, quiet = false;
  ModelFlags flags;

  void add(CLI::App* app) {
    app->add_option("--data", data, "prepared dataset directory")->required();
    app->add_option("--graph", graph, "item graph (default: <data>/graph.bin)");
    app->add_flag("--no-graph", no_graph, "use the identity instead of an item graph");
    app->add_option("--out", out, "run directory for log, checkpoints and manifest")->required();
    app->add_option("--resume", resume, "checkpoint to resume from");
    app->add_flag("--quiet", quiet, "no per-epoch output");
    flags.add(app);
  }

  void run(const CLI::App& app) {
    ModelConfig cfg = flags.model;
    cfg.word_branch = !flags.no_word_branch;
    const fs::path dir(data), run(out);
    const auto gpath = resolve_graph(dir, graph, no_graph);
    const auto p = load_prepared(dir);
    std::optional<ItemGraph> g;
    if (gpath) {
      g = load_graph(*gpath);
      if (g->num_items() != p.split.num_items())
        throw ConfigError("graph has " + std::to_string(g->num_items()) + " items but the dataset has " +
                          std::to_string(p.split.num_items()));
    }
    const SparseMatrix ratings = p.split.matrix(SplitPart::kTrain);
    TrainData td{&ratings, cfg.word_branch ? &p.words.weights : nullptr, g ? &g->matrix() : nullptr,
                 p.split.items_by_user(SplitPart::kValidation)};
    FitOptions fo;
    fo.checkpoint_dir = run;
    if (!resume.empty()) fo.resume_from = resume;
    if (!quiet)
      fo.on_epoch = [&](const EpochLog& e) {
        std::printf("epoch %4zu  loss %.6f", e.epoch, e.loss.total);
        if (e.val_recall) std::printf("  val R@%zu %.4f", flags.train.monitor_k, *e.val_recall);
        std::printf("\n");
        std::fflush(stdout);
      };
    const auto res = fit(cfg, flags.train, td, fo);
    write_text(run / "train_log.jsonl", log_jsonl(res.log, flags.train.monitor_k));
    std::vector<fs::path> inputs = prepared_files(dir);
    if (gpath) inputs.push_back(*gpath);
    if (!resume.empty()) inputs.push_back(resume);
    Manifest m{"train", flags.train.seed, cli::effective_config(app), inputs,
               {"train_log.jsonl", "last.ckpt", "best.ckpt"}};
    m.write(run / "manifest.json");
    // Wall-clock data is kept apart so the log and manifest stay reproducible.
    nlohmann::json timing{{"epoch_seconds", res.epoch_seconds}};
    write_text(run / "timing.json", timing.dump(1) + "\n");
    std::printf("best epoch %zu  val R@%zu %.4f%s\n", res.best_epoch, flags.train.monitor_k, res.best_recall,
                res.early_stopped ? "  (early stop)" : "");
  }
};

struct EvalCmd {
  std::string data, graph, checkpoint, out, per_user, split = "test", ks = "10,20";
  bool no_graph = false;
  std::size_t batch_size = 256;

  void add(CLI::App* app) {
    app->add_option("--data", data, "prepared dataset directory")->required();
    app->add_option("--checkpoint", checkpoint, "trained checkpoint (its best parameters are used)")->required();
    app->add_option("--graph", graph, "item graph (default: <data>/graph.bin)");
    app->add_flag("--no-graph", no_graph, "use the identity instead of an item graph");
    app->add_option("--split", split, "test or val")->check(CLI::IsMember({"test", "val"}))->capture_default_str();
    app->add_option("--k", ks, "cutoffs, comma separated")->capture_default_str();
    app->add_option("--out", out, "report JSON (default: stdout)");
    app->add_option("--per-user-tsv", per_user, "per-user metric table");
    app->add_option("--batch-size", batch_size, "users scored per batch")->capture_default_str();
  }

  void run(const CLI::App& app) {
    const auto cutoffs = parse_ks(ks);
    const fs::path dir(data);
    const auto gpath = resolve_graph(dir, graph, no_graph);
    const auto p = load_prepared(dir);
    const Checkpoint ck = load_checkpoint(checkpoint);
    std::optional<ItemGraph> g;
    if (gpath) g = load_graph(*gpath);
    if (ck.best_params.num_items() != p.split.num_items())
      throw ConfigError("checkpoint was trained on " + std::to_string(ck.best_params.num_items()) + " items, dataset has " +
                        std::to_string(p.split.num_items()));
    const SparseMatrix train = p.split.matrix(SplitPart::kTrain);
    const auto truth = p.split.items_by_user(split == "test" ? SplitPart::kTest : SplitPart::kValidation);
    const auto users = users_with_items(truth);
    if (users.empty()) throw ConfigError("the " + split + " split is empty");
    const std::size_t kmax = cutoffs.back();
    const auto ours = evaluate_rankings(
        rank_items(ck.best_params, ck.model, g ? &g->matrix() : nullptr, train, users, {.k = kmax, .batch_size = batch_size}),
        users, truth, cutoffs);
    const auto pop = evaluate_rankings(rank_by_popularity(train, users, kmax), users, truth, cutoffs);

    nlohmann::json j = report_json(ours);
    j["split"] = split;
    j["popularity"] = report_json(pop);
    nlohmann::json imp = nlohmann::json::object();
    for (auto k : cutoffs) {
      if (pop.recall.at(k) > 0.0) imp["R@" + std::to_string(k)] = format_improvement(improvement_percent(ours.recall.at(k), pop.recall.at(k)));
      if (pop.ndcg.at(k) > 0.0) imp["N@" + std::to_string(k)] = format_improvement(improvement_percent(ours.ndcg.at(k), pop.ndcg.at(k)));
    }
    j["improvement_over_popularity"] = imp;
    const std::string text = j.dump(1) + "\n";
    if (out.empty()) {
      std::cout << text;
    } else {
      write_text(out, text);
    }
    if (!per_user.empty()) write_text(per_user, per_user_tsv(ours, p.split.user_ids));
    std::vector<fs::path> inputs = prepared_files(dir);
    inputs.push_back(checkpoint);
    if (gpath) inputs.push_back(*gpath);
    const fs::path mdir = out.empty() ? fs::path(checkpoint).parent_path() : fs::path(out).parent_path();
    Manifest m{"eval", ck.train.seed, cli::effective_config(app), inputs, {}};
    if (!out.empty()) m.outputs.push_back(fs::path(out).filename().string());
    if (!per_user.empty()) m.outputs.push_back(fs::path(per_user).filename().string());
    m.write((mdir.empty() ? fs::path(".") : mdir) / "eval.manifest.json");
  }
};

struct ExplainCmd {
  std::string data, graph, checkpoint, user, item, out, tsv, items_out;
  bool no_graph = false;
  std::size_t n_words = 10;

  void add(CLI::App* app) {
    app->add_option("--data", data, "prepared dataset directory")->required();
    app->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    app->add_option("--user", user, "user id as in the interactions file")->required();
    app->add_option("--item", item, "item id to explain (default: the user's top recommendation)");
    app->add_option("--graph", graph, "item graph used to pick the top recommendation (default: <data>/graph.bin)");
    app->add_flag("--no-graph", no_graph, "use the identity instead of an item graph");
    app->add_option("--n-words", n_words, "top words per prototype")->capture_default_str();
    app->add_option("--out", out, "explanation JSON (default: stdout)");
    app->add_option("--tsv", tsv, "word/prototype/score table for word-cloud tools");
    app->add_option("--items-out", items_out, "item prototype memberships JSON");
  }

  void run(const CLI::App& app) {
    const fs::path dir(data);
    const auto p = load_prepared(dir);
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (!ck.model.word_branch) throw ConfigError("explain needs a model trained with the word branch");
    if (ck.best_params.num_items() != p.split.num_items() || ck.best_params.num_words() != p.words.num_words())
      throw ConfigError("checkpoint does not match the dataset dimensions");
    auto find = [](const std::vector<std::string>& ids, const std::string& id, const char* what) {
      auto it = std::find(ids.begin(), ids.end(), id);
      if (it == ids.end()) throw ConfigError(std::string("unknown ") + what + " '" + id + "'");
      return static_cast<std::uint32_t>(it - ids.begin());
    };
    const std::uint32_t u = find(p.split.user_ids, user, "user");
    std::uint32_t i = 0;
    std::optional<fs::path> gpath;
    if (item.empty()) {
      gpath = resolve_graph(dir, graph, no_graph);
      std::optional<ItemGraph> g;
      if (gpath) g = load_graph(*gpath);
      const SparseMatrix train = p.split.matrix(SplitPart::kTrain);
      const auto top = rank_items(ck.best_params, ck.model, g ? &g->matrix() : nullptr, train,
                                  std::vector<std::uint32_t>{u}, {.k = 1});
      if (top[0].empty()) throw ConfigError("user '" + user + "' has no unseen items to recommend");
      i = top[0][0];
    } else {
      i = find(p.split.item_ids, item, "item");
    }
    const auto items = item_prototypes(ck.best_params, ck.model);
    const ExplainContext ctx{&ck.best_params, &ck.model, &p.split, &p.words, &p.documents};
    const Explanation ex = explain(ctx, u, i, n_words, items);
    if (!ex.item_has_tokens) std::fprintf(stderr, "warning: item '%s' has no tokens; only prototype weights are reported\n",
                                          ex.item_id.c_str());
    const std::string text = explanation_json(ex).dump(1) + "\n";
    if (out.empty()) {
      std::cout << text;
    } else {
      write_text(out, text);
    }
    if (!tsv.empty()) write_text(tsv, word_frequency_tsv(ex.prototype_words));
    if (!items_out.empty()) {
      nlohmann::json j = nlohmann::json::array();
      for (std::size_t k = 0; k < items.size(); ++k)
        j.push_back({{"item", p.split.item_ids[k]},
                     {"prototype", items[k].prototype},
                     {"ambiguous", items[k].ambiguous},
                     {"memberships", items[k].memberships}});
      write_text(items_out, j.dump(1) + "\n");
    }
    std::vector<fs::path> inputs = prepared_files(dir);
    inputs.push_back(checkpoint);
    if (gpath) inputs.push_back(*gpath);
    Manifest m{"explain", ck.train.seed, cli::effective_config(app), inputs, {}};
    for (const auto* o : {&out, &tsv, &items_out})
      if (!o->empty()) m.outputs.push_back(fs::path(*o).filename().string());
    const fs::path mdir = out.empty() ? fs::path(checkpoint).parent_path() : fs::path(out).parent_path();
    m.write((mdir.empty() ? fs::path(".") : mdir) / "explain.manifest.json");
  }
};

struct GradcheckCmd {
  std::string fixture = "tiny", out;
  GradcheckOptions opt;
  std::uint64_t seed = 11;

  void add(CLI::App* app) {
    app->add_option("--fixture", fixture, "fixture name")->check(CLI::IsMember({"tiny"}))->capture_default_str();
    app->add_option("--step", opt.step, "central-difference step h")->capture_default_str();
    app->add_option("--tol", opt.tolerance, "max relative error")->capture_default_str();
    app->add_option("--seed", seed, "fixture seed")->capture_default_str();
    app->add_option("--out", out, "directory for report.json and manifest.json");
  }

  int run(const CLI::App& app) const {
    const auto f = tiny_fixture(seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = tiny_gradcheck(f, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%-22s %6s %14s %14s  %s\n", "parameter", "count", "max rel err", "max abs err", "result");
    nlohmann::json j{{"loss", rep.loss}, {"step", opt.step}, {"tolerance", opt.tolerance}, {"passed", rep.passed}};
    j["params"] = nlohmann::json::array();
    for (const auto& pc : rep.params) {
      const bool ok = pc.max_relative_error < opt.tolerance;
      std::printf("%-22s %6zu %14.3e %14.3e  %s\n", pc.name.c_str(), pc.count, pc.max_relative_error,
                  pc.max_absolute_error, ok ? "pass" : "FAIL");
      j["params"].push_back({{"name", pc.name},
                             {"count", pc.count},
                             {"max_relative_error", pc.max_relative_error},
                             {"max_absolute_error", pc.max_absolute_error}});
    }
    std::printf("overall max rel err %.3e (tol %.1e) in %.2fs: %s\n", rep.max_relative_error, opt.tolerance, secs,
                rep.passed ? "PASS" : "FAIL");
    if (!out.empty()) {
      write_text(fs::path(out) / "report.json", j.dump(1) + "\n");
      Manifest m{"gradcheck", seed, cli::effective_config(app), {}, {"report.json"}};
      m.write(fs::path(out) / "manifest.json");
    }
    return rep.passed ? 0 : 1;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled graph VAE recommender"};
  app.set_config("--config", "", "TOML config; [subcommand] sections hold option defaults, flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.set_version_flag("--version", DGVAE_VERSION);

  SynthCmd synth;
  PrepareCmd prep;
  GraphCmd graph;
  TrainCmd train;
  EvalCmd eval;
  ExplainCmd expl;
  GradcheckCmd grad;
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic dataset with planted prototypes");
  auto* s_prep = app.add_subcommand("prepare", "5-core filter, split, align tokens and build the user-word matrix");
  auto* s_graph = app.add_subcommand("graph", "build the frozen item-item graph from modality embeddings");
  auto* s_train = app.add_subcommand("train", "train a model with early stopping and checkpoints");
  auto* s_eval = app.add_subcommand("eval", "Recall/NDCG of a checkpoint against the popularity baseline");
  auto* s_expl = app.add_subcommand("explain", "prototype weights and top words behind a recommendation");
  auto* s_grad = app.add_subcommand("gradcheck", "finite-difference gradient check on a built-in fixture");
  synth.add(s_synth);
  prep.add(s_prep);
  graph.add(s_graph);
  train.add(s_train);
  eval.add(s_eval);
  expl.add(s_expl);
  grad.add(s_grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s_synth) synth.run(*s_synth);
    if (*s_prep) prep.run(*s_prep);
    if (*s_graph) graph.run(*s_graph);
    if (*s_train) train.run(*s_train);
    if (*s_eval) eval.run(*s_eval);
    if (*s_expl) expl.run(*s_expl);
    if (*s_grad) return grad.run(*s_grad);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
