// pdn: prepare -> train -> build-index -> retrieve / eval

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "pdn/pipeline.h"

namespace {

enum Exit { kOk = 0, kFailure = 1, kDataError = 2, kIdMismatch = 3, kUnknownUser = 4 };

void print_train(const pdn::TrainResult& r) {
  std::printf("epoch 0 mean loss %.6f\n", r.initial_loss);
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) std::printf("epoch %zu mean loss %.6f\n", e + 1, r.epoch_loss[e]);
  std::printf("%zu examples per epoch, %.1f s\n", r.examples_per_epoch, r.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-based deep network matching: training, index build, retrieval and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every stochastic stage");
  app.add_option("--threads", threads, "Worker threads for index build and eval (0 = all cores)");
  app.add_option("--out", out, "Output directory for all artifacts");

  auto* prepare = app.add_subcommand("prepare", "Parse, filter and split an interaction log");
  std::string input, format;
  std::optional<std::size_t> min_interactions;
  prepare->add_option("--input", input, "Interaction file");
  prepare->add_option("--format", format, "tsv or movielens");
  prepare->add_option("--min-interactions", min_interactions, "Drop users with fewer interactions");

  auto* train = app.add_subcommand("train", "Train the model on the prepared split");
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);

  auto* build = app.add_subcommand("build-index", "Score candidate pairs and write the SimNet index");
  std::optional<std::size_t> index_k;
  build->add_option("--k", index_k, "Neighbors kept per item");

  auto* retrieve = app.add_subcommand("retrieve", "Retrieve items for one user");
  std::string user;
  std::optional<std::size_t> K, m;
  bool allow_mismatch = false;
  retrieve->add_option("--user", user, "User id as it appears in the input")->required();
  retrieve->add_option("--k", K, "Number of items to return");
  retrieve->add_option("--m", m, "Number of triggers to expand");
  retrieve->add_flag("--allow-model-mismatch", allow_mismatch, "Serve an index built by another model");

  auto* eval = app.add_subcommand("eval", "Leave-one-out evaluation");
  std::vector<std::string> protocols, methods;
  eval->add_option("--protocol", protocols, "all, sampled or sampled-N (repeatable)");
  eval->add_option("--method", methods, "pdn, pdn-retrieval, simnet-i2i, pcf-i2i (repeatable)");
  eval->add_flag("--allow-model-mismatch", allow_mismatch, "Evaluate an index built by another model");

  auto* all = app.add_subcommand("all", "prepare, train, build-index and eval in sequence");
  all->add_option("--input", input, "Interaction file");
  all->add_option("--format", format, "tsv or movielens");

  auto* synth = app.add_subcommand("synth", "Write a synthetic category-structured log");
  std::string synth_out;
  pdn::SyntheticConfig sc;
  synth->add_option("--output", synth_out, "TSV file to write")->required();
  synth->add_option("--users", sc.users);
  synth->add_option("--items", sc.items);
  synth->add_option("--categories", sc.categories);
  synth->add_option("--min-length", sc.min_length);
  synth->add_option("--max-length", sc.max_length);
  synth->add_option("--dominant-share", sc.dominant_share);

  CLI11_PARSE(app, argc, argv);

  try {
    pdn::RunConfig cfg = config_path.empty() ? pdn::RunConfig{} : pdn::RunConfig::load(config_path);
    if (seed) cfg.apply_seed(*seed);
    if (threads) cfg.threads = *threads;
    if (!out.empty()) cfg.out = out;
    if (!input.empty()) cfg.data_path = input;
    if (!format.empty()) cfg.data_format = format;
    if (min_interactions) cfg.min_interactions = *min_interactions;
    if (epochs) cfg.train.epochs = *epochs;
    if (lr) cfg.train.adam.lr = *lr;
    if (index_k) {
      cfg.index.k = *index_k;
      cfg.index.k_hat = std::max(cfg.index.k_hat, *index_k);
    }
    if (!protocols.empty()) cfg.eval_protocols = protocols;
    if (!methods.empty()) cfg.eval_methods = methods;

    if (*prepare || *all) {
      const auto r = pdn::run_prepare(cfg);
      std::printf("users %zu  items %zu  interactions %zu  (dropped %zu users, %zu interactions)\n", r.stats.users,
                  r.stats.items, r.stats.interactions, r.stats.dropped_users, r.stats.dropped_interactions);
      std::printf("wrote %s\n", cfg.data_dir().c_str());
    }
    if (*train || *all) {
      print_train(pdn::run_train(cfg));
      std::printf("wrote %s\n", cfg.model_dir().c_str());
    }
    if (*build || *all) {
      const auto s = pdn::run_build_index(cfg);
      std::printf("scored %zu pairs, skipped %zu, %zu items with neighbors, %.1f s\n", s.pairs_scored, s.pairs_skipped,
                  s.items_with_neighbors, s.seconds);
      std::printf("wrote %s\n", cfg.index_dir().c_str());
    }
    if (*retrieve) {
      pdn::RetrievalDiagnostics diag;
      const auto items = pdn::run_retrieve(cfg, user, K.value_or(cfg.retrieve_K), m.value_or(cfg.retrieve_m),
                                           allow_mismatch, &diag);
      std::printf("rank\titem\tscore\ttriggers\n");
      for (std::size_t r = 0; r < items.size(); ++r) {
        std::string trig;
        for (const auto& t : items[r].triggers) trig += (trig.empty() ? "" : ",") + t;
        std::printf("%zu\t%s\t%.10g\t%s\n", r + 1, items[r].item.c_str(), items[r].score, trig.c_str());
      }
      std::fprintf(stderr, "%zu candidates, %zu triggers without neighbors, %.3f ms\n", diag.candidates,
                   diag.triggers_missing, diag.wall_ms);
    }
    if (*eval || *all) {
      const auto reports = pdn::run_eval(cfg, allow_mismatch);
      std::cout << pdn::format_summary(reports);
      std::printf("wrote %s\n", cfg.eval_dir().c_str());
    }
    if (*synth) {
      pdn::write_log_tsv(pdn::generate_synthetic(sc), synth_out);
      std::printf("wrote %s\n", synth_out.c_str());
    }
  } catch (const pdn::UnknownEntityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUnknownUser;
  } catch (const pdn::ModelMismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIdMismatch;
  } catch (const pdn::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  } catch (const pdn::IntegrityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
