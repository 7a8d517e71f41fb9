// samwalker command-line front end: prepare, synth, train, evaluate, bench.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samwalker/oracle.hpp"
#include "samwalker/samwalker.hpp"

namespace fs = std::filesystem;
using namespace samwalker;

namespace {

// ---- run configuration ------------------------------------------------------

/// One configurable key: usable as `key=value` in a config file and as
/// `--key` (underscores become dashes) on the command line.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const TrainConfig&)> show;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value '" + text + "' for " + key);
  return v;
}

template <class T>
std::string show_value(T v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

#define SW_KEY(key, field, type, help)                                                            \
  ConfigKey {                                                                                     \
    key, help, [](const TrainConfig& c) { return show_value(c.field); },                          \
        [](TrainConfig& c, const std::string& v) { c.field = parse_value<type>(key, v); }         \
  }

std::vector<ConfigKey> config_keys() {
  return {
      ConfigKey{"mode", "samwalker | samwalker_pp | exmf_dense | uniform_mf",
                [](const TrainConfig& c) { return std::string(to_string(c.mode)); },
                [](TrainConfig& c, const std::string& v) { c.mode = parse_train_mode(v); }},
      SW_KEY("epochs", epochs, int, "training epochs"),
      SW_KEY("n_si", n_si, int, "items per exposure-graph step"),
      SW_KEY("theta_steps", theta_steps_per_epoch, int, "preference batches per epoch"),
      SW_KEY("eval_every", eval_every, int, "epochs between metric snapshots (0 = never)"),
      SW_KEY("patience", early_stop_patience, int, "early-stop patience on NDCG (0 = off)"),
      SW_KEY("seed", seed, std::uint64_t, "master seed"),
      SW_KEY("threads", threads, int, "worker threads"),
      SW_KEY("k", communities, std::size_t, "community nodes of the pseudo graph"),
      SW_KEY("d", model.d, int, "latent dimension"),
      SW_KEY("eta", model.eta, double, "exposure prior"),
      SW_KEY("epsilon", model.epsilon, double, "consumption probability when unexposed"),
      SW_KEY("lr_theta", model.learning_rate_theta, double, "preference learning rate"),
      SW_KEY("lr_phi", model.learning_rate_phi, double, "graph learning rate"),
      SW_KEY("l2", model.l2_theta, double, "L2 penalty on factors"),
      SW_KEY("alpha", sampler.alpha, int, "walks per user per batch"),
      SW_KEY("beta", sampler.beta, int, "emission thinning (keep 1/beta)"),
      SW_KEY("c", sampler.c, double, "continuation probability"),
      SW_KEY("tm", sampler.t_m, int, "maximum walk depth / propagation steps"),
  };
}

#undef SW_KEY

std::string flag_of(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

/// Registers every config key plus --config on `cmd`.
struct RunConfigOptions {
  std::vector<ConfigKey> keys = config_keys();
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> opts;
  std::string config_file;
  bool deterministic = false;

  /// `skip` names keys whose flag the subcommand repurposes.
  void attach(CLI::App* cmd, std::initializer_list<std::string_view> skip = {}) {
    const TrainConfig defaults;
    for (const auto& k : keys)
      if (std::find(skip.begin(), skip.end(), k.name) == skip.end())
        opts[k.name] = cmd->add_option(flag_of(k.name), raw[k.name], k.help + " (default " + k.show(defaults) + ")");
    cmd->add_option("--config", config_file, "key=value file; flags override it");
    cmd->add_flag("--deterministic", deterministic, "single-threaded, reproducible run");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot open config " + config_file);
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
          s.erase(0, s.find_first_not_of(" \t\r"));
          s.erase(s.find_last_not_of(" \t\r") + 1);
          return s;
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(config_file + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
        if (it == keys.end()) throw ConfigError(config_file + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->set(cfg, value);
      }
    }
    for (const auto& k : keys) {
      auto it = opts.find(k.name);
      if (it != opts.end() && it->second->count() > 0) k.set(cfg, raw.at(k.name));
    }
    if (deterministic) cfg.threads = 1;
    cfg.validate();
    return cfg;
  }
};

// ---- dataset directory ------------------------------------------------------

struct Dataset {
  InteractionMatrix train;
  InteractionMatrix test;
  std::optional<SocialEdges> social;
};

void write_manifest(const fs::path& dir, const nlohmann::json& j) {
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir, const std::string& social_override, bool symmetrize) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw ConfigError("no dataset at " + dir.string() + " (missing manifest.json)");
  nlohmann::json j;
  man >> j;
  const std::size_t n = j.at("users"), m = j.at("items");
  Dataset d;
  d.train = read_pairs((dir / "train.tsv").string(), n, m);
  d.test = read_pairs((dir / "test.tsv").string(), n, m);
  if (!social_override.empty()) {
    d.social = load_social(social_override, read_id_map((dir / "users.tsv").string()), symmetrize);
  } else if (fs::exists(dir / "social.tsv")) {
    d.social = read_social((dir / "social.tsv").string(), n);
  }
  return d;
}

void write_dataset(const fs::path& out, const InteractionMatrix& x, const IdMap& users, const IdMap& items,
                   const SocialEdges* social, const SplitSpec& split, nlohmann::json manifest) {
  fs::create_directories(out);
  auto s = split_train_test(x, split);
  write_pairs((out / "train.tsv").string(), s.train);
  write_pairs((out / "test.tsv").string(), s.test);
  write_id_map((out / "users.tsv").string(), users);
  write_id_map((out / "items.tsv").string(), items);
  if (social) write_social((out / "social.tsv").string(), *social);
  manifest["users"] = x.n();
  manifest["items"] = x.m();
  manifest["train_positives"] = s.train.nnz();
  manifest["test_positives"] = s.test.nnz();
  manifest["test_fraction"] = split.test_fraction;
  manifest["split_seed"] = split.seed;
  manifest["social_edges"] = social ? social->edge_count() : 0;
  write_manifest(out, manifest);
}

IdMap sequential_ids(std::size_t count, const char* prefix) {
  std::vector<std::string> raw(count);
  for (std::size_t k = 0; k < count; ++k) raw[k] = prefix + std::to_string(k);
  return IdMap::from_raw(std::move(raw));
}

// ---- helpers ------------------------------------------------------------------

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) ks.push_back(parse_value<int>("--topk", part));
  if (ks.empty()) throw ConfigError("--topk needs at least one value");
  return ks;
}

std::pair<int, int> parse_range(const std::string& text) {
  auto dots = text.find("..");
  if (dots == std::string::npos) {
    int v = parse_value<int>("--tm", text);
    return {v, v};
  }
  int lo = parse_value<int>("--tm", text.substr(0, dots)), hi = parse_value<int>("--tm", text.substr(dots + 2));
  if (lo > hi || lo < 0) throw ConfigError("bad --tm range " + text);
  return {lo, hi};
}

TrainState train_or_load(const Dataset& d, const TrainConfig& cfg, const std::string& checkpoint) {
  const SocialEdges* social = d.social ? &*d.social : nullptr;
  if (!checkpoint.empty()) return load_checkpoint(checkpoint, d.train, social, cfg);
  return fit(d.train, social, cfg);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"samwalker: exposure-aware recommendation with informative walk sampling"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "binarize, filter and split a raw interaction file");
  std::string in_path, out_dir, social_path, format = "auto";
  std::size_t min_item = 3, max_item = 100;
  double test_frac = 0.2;
  std::uint64_t split_seed = 0;
  bool symmetrize = false;
  prepare->add_option("--input", in_path, "interaction file: <user> <item> [<weight>] per line")->required();
  prepare->add_option("--out", out_dir, "output dataset directory")->required();
  prepare->add_option("--social", social_path, "social file: <user> <friend> per line");
  prepare->add_option("--format", format, "auto | tsv | csv")->capture_default_str();
  prepare->add_option("--min-item", min_item, "drop items with fewer consumers")->capture_default_str();
  prepare->add_option("--max-item", max_item, "drop items with more consumers")->capture_default_str();
  prepare->add_option("--test-frac", test_frac, "held-out share of each user's positives")->capture_default_str();
  prepare->add_option("--seed", split_seed, "split seed")->capture_default_str();
  prepare->add_flag("--symmetrize", symmetrize, "treat social edges as undirected");

  // synth
  auto* synth = app.add_subcommand("synth", "write a planted-community dataset");
  SyntheticSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--n", spec.n, "users")->capture_default_str();
  synth->add_option("--m", spec.m, "items")->capture_default_str();
  synth->add_option("--communities", spec.communities, "planted communities")->capture_default_str();
  synth->add_option("--d", spec.d, "planted latent dimension")->capture_default_str();
  synth->add_option("--exposure-in", spec.exposure_in, "exposure inside a community")->capture_default_str();
  synth->add_option("--exposure-out", spec.exposure_out, "exposure across communities")->capture_default_str();
  synth->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  synth->add_option("--test-frac", test_frac, "held-out share of each user's positives")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "fit a model and write a checkpoint");
  RunConfigOptions train_opts;
  std::string data_dir, ck_dir, train_social, disable, metrics_log;
  bool resume = false;
  train_opts.attach(train);
  train->add_option("--data", data_dir, "dataset directory from prepare or synth")->required();
  train->add_option("--out", ck_dir, "checkpoint directory")->required();
  train->add_option("--social", train_social, "raw social file (overrides the dataset's)");
  train->add_option("--disable", disable, "ablate a bridge path: community | item");
  train->add_option("--log", metrics_log, "metric log (JSON lines); default <out>/metrics.jsonl");
  train->add_flag("--resume", resume, "continue from the checkpoint in --out");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "ranking metrics of a checkpoint on the test split");
  RunConfigOptions eval_opts;
  std::string eval_data, eval_ck, topk = "5,10,20";
  bool eval_json = false;
  eval_opts.attach(evaluate_cmd);
  evaluate_cmd->add_option("--data", eval_data, "dataset directory")->required();
  evaluate_cmd->add_option("--checkpoint", eval_ck, "checkpoint directory")->required();
  evaluate_cmd->add_option("--topk", topk, "comma-separated cutoffs")->capture_default_str();
  evaluate_cmd->add_flag("--json", eval_json, "JSON instead of CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "sampler and model benchmarks (CSV on stdout)");
  RunConfigOptions bench_opts;
  std::string bench_kind, bench_data, bench_ck, bench_disable, tm_range = "1..8";
  int repeats = 1000;
  std::size_t draws = 1'000'000;
  bench_opts.attach(bench, {"tm"});
  bench->add_option("kind", bench_kind, "sampler | variance | tm_sweep | ablation")
      ->required()
      ->check(CLI::IsMember({"sampler", "variance", "tm_sweep", "ablation"}));
  bench->add_option("--data", bench_data, "dataset directory")->required();
  bench->add_option("--checkpoint", bench_ck, "trained checkpoint (otherwise train first)");
  bench->add_option("--repeats", repeats, "variance: batches per sampler")->capture_default_str();
  bench->add_option("--draws", draws, "sampler: pairs drawn per sampler")->capture_default_str();
  bench->add_option("--tm", tm_range, "depth lo..hi (tm_sweep) or a single depth (default 5)")->capture_default_str();
  bench->add_option("--disable", bench_disable, "ablation: community | item (default: both variants)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*prepare) {
      const FileFormat ff = format == "tsv" ? FileFormat::tsv : format == "csv" ? FileFormat::csv : FileFormat::automatic;
      if (format != "auto" && format != "tsv" && format != "csv") throw ConfigError("--format must be auto, tsv or csv");
      auto log = load_interactions(in_path, ff);
      auto corpus = binarize_and_filter(log, min_item, max_item);
      std::optional<SocialEdges> social;
      if (!social_path.empty()) social = load_social(social_path, corpus.users, symmetrize, ff);
      nlohmann::json manifest{{"source", fs::path(in_path).filename().string()},
                              {"min_item", min_item},
                              {"max_item", max_item},
                              {"symmetrized", symmetrize}};
      write_dataset(out_dir, corpus.matrix, corpus.users, corpus.items, social ? &*social : nullptr,
                    {test_frac, std::nullopt, 0, split_seed}, manifest);
      std::cout << "users " << corpus.matrix.n() << ", items " << corpus.matrix.m() << ", positives "
                << corpus.matrix.nnz() << "\n";
      return 0;
    }

    if (*synth) {
      auto data = generate_synthetic(spec);
      nlohmann::json manifest{{"source", "synthetic"}, {"communities", spec.communities}, {"generator_seed", spec.seed}};
      write_dataset(synth_out, data.x, sequential_ids(spec.n, "u"), sequential_ids(spec.m, "i"), &data.social,
                    {test_frac, std::nullopt, 0, spec.seed}, manifest);
      std::cout << "users " << data.x.n() << ", items " << data.x.m() << ", positives " << data.x.nnz() << "\n";
      return 0;
    }

    if (*train) {
      auto cfg = train_opts.resolve();
      if (!disable.empty()) cfg.bridges = parse_bridges(disable);
      auto data = load_dataset(data_dir, train_social, false);
      const SocialEdges* social = data.social ? &*data.social : nullptr;
      if (cfg.mode == TrainMode::samwalker && !social)
        throw ConfigError("mode samwalker needs a social graph: pass --social or prepare with --social");
      TrainState state = resume ? load_checkpoint(ck_dir, data.train, social, cfg) : init_state(data.train, social, cfg);
      fs::create_directories(ck_dir);
      std::ofstream log(metrics_log.empty() ? fs::path(ck_dir) / "metrics.jsonl" : fs::path(metrics_log),
                        resume ? std::ios::app : std::ios::trunc);
      auto sink = [&](const MetricRecord& r) { log << r.to_json().dump() << "\n"; };
      const InteractionMatrix* test = data.test.nnz() > 0 ? &data.test : nullptr;
      state = fit(std::move(state), data.train, cfg, test, sink);
      save_checkpoint(ck_dir, state);
      std::cerr << "trained " << state.epoch << " epochs -> " << ck_dir << "\n";
      return 0;
    }

    if (*evaluate_cmd) {
      auto cfg = eval_opts.resolve();
      auto data = load_dataset(eval_data, "", false);
      if (!fs::exists(fs::path(eval_ck) / "factors.bin")) throw ConfigError("no checkpoint at " + eval_ck);
      auto f = load_factors((fs::path(eval_ck) / "factors.bin").string());
      if (f.n() != data.train.n() || f.m() != data.train.m()) throw ConfigError("checkpoint does not match the dataset");
      auto rep = evaluate(f, data.train, data.test, parse_ks(topk));
      (void)cfg;
      if (eval_json)
        std::cout << rep.to_json().dump(2) << "\n";
      else
        std::cout << rep.to_csv();
      return 0;
    }

    if (*bench) {
      auto cfg = bench_opts.resolve();
      if (bench_kind != "tm_sweep" && bench->get_option("--tm")->count() > 0) {
        auto [lo, hi] = parse_range(tm_range);
        if (lo != hi) throw ConfigError("--tm takes a range only for tm_sweep");
        cfg.sampler.t_m = lo;
      }
      auto data = load_dataset(bench_data, "", false);
      const SocialEdges* social = data.social ? &*data.social : nullptr;
      if (!bench_ck.empty() && !fs::exists(fs::path(bench_ck) / "factors.bin"))
        throw ConfigError("no checkpoint at " + bench_ck);

      if (bench_kind == "variance" || bench_kind == "sampler") {
        if (cfg.mode != TrainMode::samwalker && cfg.mode != TrainMode::samwalker_pp)
          throw ConfigError("sampler benchmarks need a graph mode");
        auto state = train_or_load(data, cfg, bench_ck);
        SamplerConfig sc = cfg.sampler;
        sc.seed = cfg.seed;
        if (bench_kind == "variance") {
          VarianceBenchConfig vb;
          vb.repeats = repeats;
          vb.seed = cfg.seed;
          auto rows = std::visit([&](const auto& g) { return variance_bench(g, state.factors, data.train, sc, vb); },
                                 *state.graph);
          std::cout << "sampler,average_variance,batch_size\n";
          for (const auto& r : rows) std::cout << r.sampler << "," << fmt(r.average_variance) << "," << fmt(r.batch_size) << "\n";
          return 0;
        }
        // sampler: total-variation distance between empirical and analytic pair laws
        const auto& x = data.train;
        if (static_cast<double>(x.n()) * static_cast<double>(x.m()) > 1e7) throw GuardError("sampler bench refuses n*m > 1e7");
        std::cout << "sampler,draws,total_variation\n";
        const std::size_t cells = x.n() * x.m();
        for (auto kind : {BaselineKind::allunion, BaselineKind::balunion, BaselineKind::itempop, BaselineKind::cobias}) {
          BaselineSampler s(kind, x);
          Rng rng = stream_rng(cfg.seed, 0x5a3b, static_cast<std::uint64_t>(kind));
          std::vector<double> freq(cells, 0.0);
          for (std::size_t k = 0; k < draws; ++k) {
            auto e = s.draw(rng);
            freq[e.user * x.m() + e.item] += 1.0;
          }
          double tv = 0.0;
          for (std::size_t u = 0; u < x.n(); ++u)
            for (std::size_t i = 0; i < x.m(); ++i) tv += std::abs(freq[u * x.m() + i] / draws - s.probability(u, i));
          std::cout << to_string(kind) << "," << draws << "," << fmt(0.5 * tv) << "\n";
        }
        const RowMatrix law = std::visit([&](const auto& g) { return walk_law(g, x, sc.t_m, sc.c); }, *state.graph);
        const double z = law.sum();
        std::vector<double> freq(cells, 0.0);
        std::size_t emitted = 0;
        for (std::uint64_t epoch = 0; emitted < draws; ++epoch) {
          auto batch = sample_batch(*state.graph, x, sc, epoch, cfg.threads);
          if (batch.entries.empty() && epoch > 1000) break;
          for (const auto& e : batch.entries) freq[e.user * x.m() + e.item] += 1.0;
          emitted += batch.entries.size();
        }
        double tv = 0.0;
        for (std::size_t u = 0; u < x.n(); ++u)
          for (std::size_t i = 0; i < x.m(); ++i)
            tv += std::abs(freq[u * x.m() + i] / std::max<std::size_t>(emitted, 1) -
                           law(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i)) / z);
        std::cout << "walk," << emitted << "," << fmt(0.5 * tv) << "\n";
        return 0;
      }

      if (data.test.nnz() == 0) throw EmptyDatasetError("the test split is empty");
      if (bench_kind == "tm_sweep") {
        auto [lo, hi] = parse_range(tm_range);
        std::cout << "tm,rec@5,pre@5,ndcg,mrr\n";
        for (int tm = lo; tm <= hi; ++tm) {
          auto c = cfg;
          c.sampler.t_m = tm;
          auto s = fit(data.train, social, c);
          auto rep = evaluate(s.factors, data.train, data.test, {5});
          std::cout << tm << "," << fmt(rep.recall_at(5)) << "," << fmt(rep.precision_at(5)) << "," << fmt(rep.ndcg)
                    << "," << fmt(rep.mrr) << "\n";
        }
        return 0;
      }

      // ablation
      std::vector<std::pair<std::string, BridgeMode>> variants;
      if (bench_disable.empty()) {
        variants = {{"full", BridgeMode::both}, {"no_community", BridgeMode::items_only}, {"no_item", BridgeMode::communities_only}};
      } else {
        const auto b = parse_bridges(bench_disable);
        variants = {{b == BridgeMode::items_only ? "no_community" : "no_item", b}};
      }
      std::cout << "variant,rec@5,pre@5,ndcg,mrr\n";
      for (const auto& [name, bridges] : variants) {
        auto c = cfg;
        c.mode = TrainMode::samwalker_pp;
        c.bridges = bridges;
        auto s = fit(data.train, social, c);
        auto rep = evaluate(s.factors, data.train, data.test, {5});
        std::cout << name << "," << fmt(rep.recall_at(5)) << "," << fmt(rep.precision_at(5)) << "," << fmt(rep.ndcg)
                  << "," << fmt(rep.mrr) << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
