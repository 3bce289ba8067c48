// mecos: command-line driver for cold-start meta-learning experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mecos/experiment.hpp"
#include "mecos/synth.hpp"

namespace fs = std::filesystem;
using namespace mecos;

namespace {

struct RunConfig {
  Hyperparams hyper;
  SynthConfig synth;
  std::string data_path;
  std::string embeddings_path;
  std::string checkpoint_path;
  std::string out_dir = ".";
};

bool apply_synth_key(SynthConfig& s, const std::string& key, const std::string& v) {
  if (key == "synth_clusters") s.n_clusters = detail::to_size(key, v);
  else if (key == "synth_items_per_cluster") s.items_per_cluster = detail::to_size(key, v);
  else if (key == "synth_sequences") s.n_sequences = detail::to_size(key, v);
  else if (key == "synth_min_len") s.min_len = detail::to_size(key, v);
  else if (key == "synth_max_len") s.max_len = detail::to_size(key, v);
  else if (key == "synth_within_prob") s.within_cluster_prob = detail::to_double(key, v);
  else return false;
  return true;
}

void apply_key(RunConfig& rc, const std::string& key, const std::string& value) {
  if (apply_hyperparam(rc.hyper, key, value) || apply_synth_key(rc.synth, key, value)) return;
  if (key == "data") rc.data_path = value;
  else if (key == "embeddings") rc.embeddings_path = value;
  else if (key == "checkpoint") rc.checkpoint_path = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string config_text(const RunConfig& rc) {
  std::ostringstream out;
  out << to_config_text(rc.hyper) << "synth_clusters = " << rc.synth.n_clusters << '\n'
      << "synth_items_per_cluster = " << rc.synth.items_per_cluster << '\n'
      << "synth_sequences = " << rc.synth.n_sequences << '\n'
      << "synth_min_len = " << rc.synth.min_len << '\n'
      << "synth_max_len = " << rc.synth.max_len << '\n'
      << "synth_within_prob = " << format_double(rc.synth.within_cluster_prob) << '\n';
  if (!rc.data_path.empty()) out << "data = " << rc.data_path << '\n';
  if (!rc.embeddings_path.empty()) out << "embeddings = " << rc.embeddings_path << '\n';
  if (!rc.checkpoint_path.empty()) out << "checkpoint = " << rc.checkpoint_path << '\n';
  return out.str();
}

std::string commented(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

fs::path output(const RunConfig& rc, const std::string& name) {
  fs::create_directories(rc.out_dir);
  return fs::path(rc.out_dir) / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

Dataset load_data(const RunConfig& rc) {
  if (rc.data_path.empty()) throw ConfigError("no interaction log given (use --data)");
  if (!fs::exists(rc.data_path)) throw ConfigError("interaction log '" + rc.data_path + "' does not exist");
  return make_dataset(load_interactions(rc.data_path), rc.hyper.max_len);
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  if (count == 0) throw ConfigError("--seeds must be at least 1");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(first + i);
  return out;
}

std::string metric_key(const char* name, std::size_t p) { return std::string(name) + "@" + std::to_string(p); }

std::string report_text(const EvalReport& r) {
  std::string out = "metric\tvalue\n";
  auto line = [&out](const std::string& k, double v) { out += k + "\t" + format_double(v) + "\n"; };
  for (std::size_t i = 0; i < r.cutoffs.size(); ++i) line(metric_key("HR", r.cutoffs[i]), r.mean.hr[i]);
  for (std::size_t i = 0; i < r.cutoffs.size(); ++i) line(metric_key("NDCG", r.cutoffs[i]), r.mean.ndcg[i]);
  line("MRR", r.mean.mrr);
  for (const auto& s : r.per_seed) {
    const std::string suffix = "/seed=" + std::to_string(s.seed);
    for (std::size_t i = 0; i < r.cutoffs.size(); ++i) line(metric_key("HR", r.cutoffs[i]) + suffix, s.metrics.hr[i]);
    for (std::size_t i = 0; i < r.cutoffs.size(); ++i) line(metric_key("NDCG", r.cutoffs[i]) + suffix, s.metrics.ndcg[i]);
    line("MRR" + suffix, s.metrics.mrr);
  }
  return out;
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json mean, per_seed;
  std::vector<std::uint64_t> seeds;
  for (const auto& s : r.per_seed) seeds.push_back(s.seed);
  per_seed["seeds"] = seeds;
  for (std::size_t i = 0; i < r.cutoffs.size(); ++i) {
    mean[metric_key("HR", r.cutoffs[i])] = r.mean.hr[i];
    mean[metric_key("NDCG", r.cutoffs[i])] = r.mean.ndcg[i];
    std::vector<double> hr, ndcg;
    for (const auto& s : r.per_seed) {
      hr.push_back(s.metrics.hr[i]);
      ndcg.push_back(s.metrics.ndcg[i]);
    }
    per_seed[metric_key("HR", r.cutoffs[i])] = hr;
    per_seed[metric_key("NDCG", r.cutoffs[i])] = ndcg;
  }
  mean["MRR"] = r.mean.mrr;
  std::vector<double> mrr;
  for (const auto& s : r.per_seed) mrr.push_back(s.metrics.mrr);
  per_seed["MRR"] = mrr;
  return {{"mean", mean},
          {"per_seed", per_seed},
          {"queries_per_seed", r.per_seed.empty() ? 0 : r.per_seed.front().metrics.queries},
          {"negative_pool_size", r.negative_pool_size},
          {"excluded_items", r.excluded_items}};
}

// ---- commands ------------------------------------------------------------

int cmd_synth(const RunConfig& rc, const std::string& name) {
  Rng rng(rc.hyper.seed);
  const auto log = synth_generate(rc.synth, rng);
  std::ostringstream body;
  body << commented(config_text(rc));
  write_interactions(body, log);
  const auto path = output(rc, name);
  write_file(path, body.str());
  std::cout << "wrote " << log.sequences.size() << " sequences over " << log.vocab.size() << " items to " << path.string()
            << '\n';
  return 0;
}

int cmd_prepare(const RunConfig& rc) {
  const Dataset data = load_data(rc);
  const Prepared prep = prepare(data, rc.hyper);
  const std::string summary = to_text(summarize(data, prep, rc.hyper));
  write_file(output(rc, "prepare.txt"), commented(config_text(rc)) + summary);
  std::cout << summary;
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const Dataset data = load_data(rc);
  const Prepared prep = prepare(data, rc.hyper);
  EmbeddingTable table;
  if (!rc.embeddings_path.empty()) table = load_embeddings(rc.embeddings_path);
  const Hyperparams& h = rc.hyper;

  std::string log = commented(config_text(rc)) + "epoch\tmean_loss\tvalid_hr10\timproved\n";
  auto on_epoch = [&](const EpochLog& e) {
    std::string row = std::to_string(e.epoch) + "\t" + format_double(e.mean_loss) + "\t" + format_double(e.valid_hr10) +
                      "\t" + (e.improved ? "1" : "0") + "\n";
    log += row;
    std::cerr << row << std::flush;
  };
  Checkpoint ck;
  double probe_initial = 0.0, probe_final = 0.0;
  auto run = [&](auto tag) {
    using T = decltype(tag);
    auto out = meta_train<T>(data, prep.splits, h, rc.embeddings_path.empty() ? nullptr : &table, on_epoch);
    ck = std::move(out.checkpoint);
    probe_initial = out.probe_loss_initial;
    probe_final = out.probe_loss_final;
  };
  if (h.precision == Precision::f64) run(double{});
  else run(float{});

  log += "# probe_loss_initial = " + format_double(probe_initial) + "\n";
  log += "# probe_loss_final = " + format_double(probe_final) + "\n";
  log += "# best_valid_hr10 = " + format_double(ck.best_valid) + "\n";
  const auto ck_path = output(rc, "checkpoint.bin");
  save_checkpoint(ck_path.string(), ck);
  write_file(output(rc, "train_log.tsv"), log);
  std::cout << "checkpoint\t" << ck_path.string() << "\nbest_valid_hr10\t" << format_double(ck.best_valid) << '\n';
  return 0;
}

Scorer pick_scorer(const std::string& name) {
  if (name == "oracle") return oracle_scorer();
  if (name == "random") return random_scorer();
  if (name == "constant") return constant_scorer();
  throw ConfigError("unknown scorer '" + name + "' (expected model, oracle, random, constant)");
}

SplitKind parse_split(const std::string& s) {
  if (s == "test") return SplitKind::test;
  if (s == "valid") return SplitKind::valid;
  if (s == "train") return SplitKind::train;
  throw ConfigError("unknown split '" + s + "'");
}

int cmd_evaluate(RunConfig rc, const std::string& scorer, const std::string& split_name, std::size_t n_seeds,
                 std::size_t queries) {
  const SplitKind split = parse_split(split_name);
  Checkpoint ck;
  if (scorer == "model") {
    if (rc.checkpoint_path.empty()) throw ConfigError("evaluate needs --checkpoint for the model scorer");
    ck = load_checkpoint(rc.checkpoint_path);
    // Evaluation settings follow the command line; model settings follow the checkpoint.
    Hyperparams h = ck.hyper;
    h.n_eval = rc.hyper.n_eval;
    h.negative_pool = rc.hyper.negative_pool;
    h.seed = rc.hyper.seed;
    h.cold_fraction = rc.hyper.cold_fraction;
    h.ratios = rc.hyper.ratios;
    h.max_len = rc.hyper.max_len;
    h.test_queries = rc.hyper.test_queries;
    h.valid_queries = rc.hyper.valid_queries;
    rc.hyper = h;
  }
  const Dataset data = load_data(rc);
  const Prepared prep = prepare(data, rc.hyper);
  if (queries == 0) queries = split == SplitKind::valid ? rc.hyper.valid_queries : rc.hyper.test_queries;
  const auto settings = EvalSettings::from(rc.hyper, queries, seed_list(rc.hyper.seed, n_seeds));
  const EvalReport report = scorer == "model" ? evaluate_checkpoint(data, prep, ck, split, settings)
                                              : evaluate(data, prep.splits, split, pick_scorer(scorer), settings);
  if (report.excluded_items > 0) {
    std::cerr << "note: " << report.excluded_items << " items lack " << rc.hyper.k
              << " support pairs and were left out of the negative pool\n";
  }
  const std::string text = report_text(report);
  write_file(output(rc, "eval.txt"), commented(config_text(rc)) + "# scorer = " + scorer + "\n# split = " + split_name +
                                         "\n" + text);
  nlohmann::json j = report_json(report);
  j["config"] = config_text(rc);
  j["scorer"] = scorer;
  j["split"] = split_name;
  write_file(output(rc, "eval.json"), j.dump(2) + "\n");
  std::cout << text;
  return 0;
}

int cmd_ablate(const RunConfig& rc, std::size_t n_seeds) {
  const Dataset data = load_data(rc);
  const auto seeds = seed_list(rc.hyper.seed, n_seeds);
  const Variant variants[] = {Variant::full, Variant::variant1, Variant::variant2, Variant::variant3};
  EmbeddingTable table;
  if (!rc.embeddings_path.empty()) table = load_embeddings(rc.embeddings_path);

  struct Row {
    std::vector<double> hr10, ndcg10, mrr;
    std::string config;
  };
  std::vector<Row> rows(4);
  for (std::uint64_t seed : seeds) {
    Hyperparams base = rc.hyper;
    base.seed = seed;
    const Prepared prep = prepare(data, base);
    for (std::size_t v = 0; v < 4; ++v) {
      Hyperparams h = base;
      h.variant = variants[v];
      h = h.resolved();
      std::cerr << "ablate: " << to_string(h.variant) << " seed " << seed << '\n';
      const auto result = run_experiment(data, prep, h, {seed}, rc.embeddings_path.empty() ? nullptr : &table);
      rows[v].hr10.push_back(result.test.mean.hr_at(10));
      rows[v].ndcg10.push_back(result.test.mean.ndcg_at(10));
      rows[v].mrr.push_back(result.test.mean.mrr);
      Hyperparams echo = h;
      echo.seed = rc.hyper.seed;
      rows[v].config = to_config_text(echo);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  std::string seeds_text;
  for (std::uint64_t s : seeds) seeds_text += (seeds_text.empty() ? "" : ",") + std::to_string(s);
  std::string table_text = "metric";
  for (Variant v : variants) table_text += std::string("\t") + to_string(v);
  table_text += "\n";
  auto add_row = [&](const char* name, std::vector<double> Row::*field) {
    table_text += name;
    for (const auto& r : rows) table_text += "\t" + format_double(mean(r.*field));
    table_text += "\n";
  };
  add_row("HR@10", &Row::hr10);
  add_row("NDCG@10", &Row::ndcg10);
  add_row("MRR", &Row::mrr);

  std::string header = commented(config_text(rc)) + "# seeds = " + seeds_text + "\n";
  write_file(output(rc, "ablation.tsv"), header + table_text);
  nlohmann::json j;
  j["seeds"] = seeds;
  j["config"] = config_text(rc);
  for (std::size_t v = 0; v < 4; ++v) {
    j["variants"][to_string(variants[v])] = {{"HR@10", rows[v].hr10},
                                             {"NDCG@10", rows[v].ndcg10},
                                             {"MRR", rows[v].mrr},
                                             {"seeds", seeds},
                                             {"config", rows[v].config}};
  }
  write_file(output(rc, "ablation.json"), j.dump(2) + "\n");
  std::cout << table_text;
  return 0;
}

template <typename T>
EmbeddingTable export_queries(const Dataset& data, const Prepared& prep, const ModelParams<T>& params,
                              const Hyperparams& h, std::size_t n_items, std::size_t per_item) {
  std::vector<ItemIndex> items;
  for (ItemIndex it : prep.splits.test_items)
    if (!prep.splits.pools[it].empty()) items.push_back(it);
  if (items.size() < n_items) {
    throw SamplingError("meta-test split has " + std::to_string(items.size()) + " items with pairs; " +
                        std::to_string(n_items) + " requested");
  }
  Rng rng = Rng::derive(h.seed, 0xe4b0);
  EmbeddingTable table;
  table.dim = 2 * params.dim();
  const auto opt = h.pipeline().encoder;
  for (std::size_t i : rng.distinct(items.size(), n_items)) {
    const ItemIndex item = items[i];
    std::vector<PairIndex> pool = prep.splits.pools[item];
    rng.shuffle(pool);
    for (std::size_t q = 0; q < per_item; ++q) {
      // Distinct pairs first; smaller pools are revisited in random order.
      const PairIndex p = q < pool.size() ? pool[q] : pool[rng.index(pool.size())];
      const Tensor<T> repr = encode_query(data.pairs[p], params, opt);
      table.rows.push_back({data.log.vocab.id(item), std::vector<double>(repr.values().begin(), repr.values().end())});
    }
  }
  return table;
}

int cmd_export(RunConfig rc, std::size_t n_items, std::size_t per_item) {
  if (rc.checkpoint_path.empty()) throw ConfigError("export-embeddings needs --checkpoint");
  const Checkpoint ck = load_checkpoint(rc.checkpoint_path);
  Hyperparams h = ck.hyper;
  h.seed = rc.hyper.seed;
  h.cold_fraction = rc.hyper.cold_fraction;
  h.ratios = rc.hyper.ratios;
  h.max_len = rc.hyper.max_len;
  rc.hyper = h;
  const Dataset data = load_data(rc);
  const Prepared prep = prepare(data, h);
  if (ck.tensors.front().shape.at(0) != data.vocab_size()) throw CheckpointError("checkpoint vocabulary does not match the dataset");
  const EmbeddingTable table = h.precision == Precision::f64
                                   ? export_queries(data, prep, params_from<double>(ck), h, n_items, per_item)
                                   : export_queries(data, prep, params_from<float>(ck), h, n_items, per_item);
  std::ostringstream body;
  write_embeddings(body, table);
  const auto path = output(rc, "query_embeddings.txt");
  write_file(path, body.str());
  write_file(output(rc, "query_embeddings.config"), config_text(rc));
  std::cout << "wrote " << table.rows.size() << " query representations to " << path.string() << '\n';
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot meta-learning for cold-start sequential recommendation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  RunConfig rc;
  app.add_option("--config", config_path, "key = value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--out", rc.out_dir, "output directory");
  app.add_option("--set", overrides, "override one configuration key (key=value)");

  std::string data, embeddings, checkpoint, variant;
  auto add_data = [&](CLI::App* sub) { sub->add_option("--data", data, "interaction log (user<TAB>item<TAB>timestamp)"); };

  auto* synth = app.add_subcommand("synth", "generate a clustered synthetic interaction log");
  std::string synth_name = "interactions.tsv";
  synth->add_option("--name", synth_name, "output file name inside --out");

  auto* prep = app.add_subcommand("prepare", "cold-item partition and split summary");
  add_data(prep);

  auto* train = app.add_subcommand("train", "meta-train and write the selected checkpoint");
  add_data(train);
  train->add_option("--embeddings", embeddings, "pre-trained item embeddings");
  train->add_option("--variant", variant, "full, variant1, variant2 or variant3");

  auto* eval = app.add_subcommand("evaluate", "ranking metrics with sampled negatives");
  add_data(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");
  std::string scorer = "model", split = "test";
  std::size_t n_seeds = 3, queries = 0;
  eval->add_option("--scorer", scorer, "model, oracle, random or constant");
  eval->add_option("--split", split, "test or valid");
  eval->add_option("--seeds", n_seeds, "number of evaluation seeds");
  eval->add_option("--queries", queries, "queries per seed (default from config)");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate all four variants");
  add_data(ablate);
  ablate->add_option("--embeddings", embeddings, "pre-trained item embeddings");
  std::size_t ablate_seeds = 3;
  ablate->add_option("--seeds", ablate_seeds, "number of training seeds");

  auto* exp = app.add_subcommand("export-embeddings", "query representations of sampled meta-test queries");
  add_data(exp);
  exp->add_option("--checkpoint", checkpoint, "trained checkpoint");
  std::size_t n_items = 4, per_item = 100;
  exp->add_option("--items", n_items, "number of ground-truth items");
  exp->add_option("--per-item", per_item, "queries per item");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
      std::stringstream text;
      text << in.rdbuf();
      for (const auto& [k, v] : parse_key_values(text.str())) apply_key(rc, k, v);
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
        return s;
      };
      apply_key(rc, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (*seed_opt) rc.hyper.seed = seed;
    if (!data.empty()) rc.data_path = data;
    if (!embeddings.empty()) rc.embeddings_path = embeddings;
    if (!checkpoint.empty()) rc.checkpoint_path = checkpoint;
    if (!variant.empty()) rc.hyper.variant = parse_variant(variant);
    rc.hyper = rc.hyper.resolved();
    rc.hyper.validate();
    rc.synth.validate();

    if (*synth) return cmd_synth(rc, synth_name);
    if (*prep) return cmd_prepare(rc);
    if (*train) return cmd_train(rc);
    if (*eval) return cmd_evaluate(rc, scorer, split, n_seeds, queries);
    if (*ablate) return cmd_ablate(rc, ablate_seeds);
    if (*exp) return cmd_export(rc, n_items, per_item);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
