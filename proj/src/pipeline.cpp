#include "pdn/pipeline.h"

#include <chrono>
#include <fstream>
#include <iostream>

#include "pdn/checkpoint.h"

namespace pdn {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::filesystem::path require(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) throw DataError("missing '" + p.string() + "'; run `" + hint + "` first");
  return p;
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  model.init_seed = s;
  train.seed = s;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json model_json = model.to_json();
  model_json.erase("schemas");
  model_json.erase("init_seed");
  nlohmann::json train_json = train.to_json();
  train_json.erase("seed");
  return {{"data", {{"path", data_path.string()}, {"format", data_format}, {"min_interactions", min_interactions}}},
          {"schema", schema},
          {"model", model_json},
          {"train", train_json},
          {"index", index.to_json()},
          {"retrieval", {{"m", retrieve_m}, {"K", retrieve_K}}},
          {"eval", {{"protocols", eval_protocols}, {"methods", eval_methods}, {"K", eval_K}, {"cf_k_hat", cf_k_hat}}},
          {"seed", seed},
          {"threads", threads},
          {"out", out.string()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data_path = d.value("path", std::string());
      c.data_format = d.value("format", c.data_format);
      c.min_interactions = d.value("min_interactions", c.min_interactions);
    }
    if (j.contains("schema")) c.schema = j.at("schema");
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("index")) c.index = IndexConfig::from_json(j.at("index"));
    if (j.contains("retrieval")) {
      c.retrieve_m = j.at("retrieval").value("m", c.retrieve_m);
      c.retrieve_K = j.at("retrieval").value("K", c.retrieve_K);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval_protocols = e.value("protocols", c.eval_protocols);
      c.eval_methods = e.value("methods", c.eval_methods);
      c.eval_K = e.value("K", c.eval_K);
      c.cf_k_hat = e.value("cf_k_hat", c.cf_k_hat);
    }
    c.threads = j.value("threads", c.threads);
    c.out = j.value("out", c.out.string());
    c.apply_seed(j.value("seed", c.seed));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  (void)parse_log_format(c.data_format);
  for (const auto& p : c.eval_protocols) (void)Protocol::parse(p, c.seed);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return from_json(nlohmann::json::parse(in, nullptr, true, true));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

std::string file_digest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  Fnv1a h;
  h.update(bytes);
  return to_hex(h.digest());
}

void StageManifest::write(const std::filesystem::path& dir, const RunConfig& config) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["stage"] = stage;
  auto hashes = [](const std::vector<std::filesystem::path>& files) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& f : files) o[f.string()] = std::filesystem::exists(f) ? file_digest(f) : "missing";
    return o;
  };
  j["inputs"] = hashes(inputs);
  j["outputs"] = hashes(outputs);
  j["config"] = config.to_json();
  j["timings"] = timings;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json(dir / "manifest.json", j);
  write_json(dir / "config.resolved.json", config.to_json());
}

SchemaSet resolve_schemas(const RunConfig& config, const InteractionLog& log, std::shared_ptr<const CooccurrenceStats> stats) {
  SchemaSet base;
  if (config.schema.is_null()) {
    base = default_schemas(log.has_categories());
  } else if (config.schema.is_string()) {
    base = load_schemas(config.schema.get<std::string>());
  } else {
    base = schemas_from_json(config.schema);
  }
  return FeatureExtractor::resolve(std::move(base), log, std::move(stats), config.train.n_max, config.seed);
}

Workspace::Workspace(const RunConfig& config, bool with_model) {
  data_ = load_dataset(require(config.data_dir(), "prepare"));
  stats_ = std::make_shared<CooccurrenceStats>(data_.train, config.threads);
  if (!with_model) return;
  require(config.model_dir() / "checkpoint.bin", "train");
  model_ = std::make_unique<PdnModel>(PdnModel::load(config.model_dir()));
  features_ = std::make_unique<FeatureExtractor>(data_.train, stats_, model_->config().schemas);
  encoder_ = std::make_unique<ContextEncoder>(*model_, *features_);
}

const PdnModel& Workspace::model() const {
  if (!model_) throw ConfigError("workspace was loaded without a model");
  return *model_;
}

const ContextEncoder& Workspace::encoder() const {
  if (!encoder_) throw ConfigError("workspace was loaded without a model");
  return *encoder_;
}

PrepareResult run_prepare(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.data_path.empty()) throw ConfigError("no input data path (set data.path or --input)");
  if (!std::filesystem::exists(config.data_path)) throw DataError("input '" + config.data_path.string() + "' does not exist");
  LoadOptions opts;
  opts.min_interactions = config.min_interactions;
  const auto log = load_log(config.data_path, parse_log_format(config.data_format), opts);
  const auto data = split_leave_one_out(log);
  const auto dir = config.data_dir();
  save_dataset(data, dir);
  const auto& s = log.stats();
  write_json(dir / "stats.json", {{"users", s.users},
                                  {"items", s.items},
                                  {"interactions", s.interactions},
                                  {"dropped_users", s.dropped_users},
                                  {"dropped_interactions", s.dropped_interactions},
                                  {"categories", log.num_categories()},
                                  {"test_cases", data.test.size()}});
  StageManifest m;
  m.stage = "prepare";
  m.inputs = {config.data_path};
  m.outputs = {dir / "users.tsv", dir / "items.tsv", dir / "train.tsv", dir / "test.tsv", dir / "stats.json"};
  m.timings["total_s"] = seconds_since(t0);
  m.write(dir, config);
  return PrepareResult{s, data.test.size()};
}

TrainResult run_train(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Workspace ws(config, false);
  ModelConfig mc = config.model;
  mc.schemas = resolve_schemas(config, ws.log(), ws.stats());
  PdnModel model(mc);
  FeatureExtractor features(ws.log(), ws.stats(), mc.schemas);
  ContextEncoder encoder(model, features);
  TrainConfig tc = config.train;
  if (tc.debug_dir.is_relative()) tc.debug_dir = config.model_dir() / tc.debug_dir;
  const auto load_s = seconds_since(t0);
  auto result = train(model, encoder, ws.data(), tc);

  const auto dir = config.model_dir();
  model.save(dir);
  {
    std::ofstream out(dir / "loss.tsv", std::ios::trunc);
    out << "epoch\tmean_loss\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", result.initial_loss);
    out << 0 << '\t' << buf << '\n';
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%.17g", result.epoch_loss[e]);
      out << e + 1 << '\t' << buf << '\n';
    }
  }
  StageManifest m;
  m.stage = "train";
  const auto data = config.data_dir();
  m.inputs = {data / "users.tsv", data / "items.tsv", data / "train.tsv", data / "test.tsv"};
  m.outputs = {dir / "model.json", dir / "checkpoint.bin", dir / "loss.tsv"};
  m.timings["load_s"] = load_s;
  m.timings["train_s"] = result.seconds;
  m.timings["total_s"] = seconds_since(t0);
  m.extra["model_id"] = to_hex(model.id());
  m.extra["examples_per_epoch"] = result.examples_per_epoch;
  m.write(dir, config);
  return result;
}

IndexBuildSummary run_build_index(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Workspace ws(config, true);
  const auto load_s = seconds_since(t0);
  IndexConfig ic = config.index;
  if (ic.threads == 0) ic.threads = config.threads;
  const auto t1 = std::chrono::steady_clock::now();
  const auto pairs = generate_candidate_pairs(ws.log(), ic);
  const auto pairs_s = seconds_since(t1);
  IndexBuildSummary summary;
  const auto index = build_index(ws.encoder(), pairs, ic.k, ic.threads, &summary);
  const auto dir = config.index_dir();
  std::filesystem::create_directories(dir);
  save_index(index, dir / "index.bin");
  export_index_tsv(index, ws.log(), dir / "index.tsv");

  StageManifest m;
  m.stage = "build-index";
  m.inputs = {config.model_dir() / "checkpoint.bin", config.data_dir() / "train.tsv"};
  m.outputs = {dir / "index.bin", dir / "index.tsv"};
  m.timings["load_s"] = load_s;
  m.timings["pairs_s"] = pairs_s;
  m.timings["score_s"] = summary.seconds;
  m.timings["total_s"] = seconds_since(t0);
  m.extra["model_id"] = to_hex(index.header().model_id);
  m.extra["candidate_pairs"] = pairs.size();
  m.extra["pairs_scored"] = summary.pairs_scored;
  m.extra["pairs_skipped"] = summary.pairs_skipped;
  m.extra["items_with_neighbors"] = summary.items_with_neighbors;
  m.write(dir, config);
  return summary;
}

std::vector<NamedRetrieval> run_retrieve(const RunConfig& config, const std::string& user, std::size_t K, std::size_t m,
                                         bool allow_model_mismatch, RetrievalDiagnostics* diagnostics) {
  Workspace ws(config, true);
  const auto u = ws.log().find_user(user);
  if (!u) throw UnknownEntityError("unknown user '" + user + "'");
  const auto index = load_index(require(config.index_dir() / "index.bin", "build-index"), ws.model().id(), allow_model_mismatch);
  RetrieverOptions opts;
  opts.allow_model_mismatch = allow_model_mismatch;
  opts.cache_towers = false;
  const Retriever retriever(ws.encoder(), index, opts);
  const auto result = retriever.retrieve(*u, m, K);
  if (diagnostics) *diagnostics = result.diagnostics;
  std::vector<NamedRetrieval> out;
  for (const auto& r : result.items) {
    NamedRetrieval n{ws.log().item_name(r.item), r.score, {}};
    for (ItemId j : r.triggers) n.triggers.push_back(ws.log().item_name(j));
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<EvalReport> run_eval(const RunConfig& config, bool allow_model_mismatch) {
  const auto t0 = std::chrono::steady_clock::now();
  bool needs_model = false, needs_index = false;
  for (const auto& name : config.eval_methods) {
    if (name == "pdn") needs_model = true;
    else if (name == "pdn-retrieval" || name == "simnet-i2i") needs_model = needs_index = true;
    else if (name != "pcf-i2i") throw ConfigError("unknown evaluation method '" + name + "'");
  }
  Workspace ws(config, needs_model);
  std::optional<SimIndex> index;
  std::optional<Retriever> retriever;
  TowerCache towers;
  if (needs_model) towers = TowerCache::build(ws.encoder(), config.threads);
  if (needs_index) {
    index = load_index(require(config.index_dir() / "index.bin", "build-index"), ws.model().id(), allow_model_mismatch);
    RetrieverOptions opts;
    opts.allow_model_mismatch = allow_model_mismatch;
    opts.threads = config.threads;
    retriever.emplace(ws.encoder(), *index, opts);
  }
  std::optional<CfMatrix> cf;
  std::optional<IndexSimilarity> index_sim;
  std::optional<CfSimilarity> cf_sim;
  std::vector<std::unique_ptr<EvalMethod>> methods;
  for (const auto& name : config.eval_methods) {
    if (name == "pdn") {
      methods.push_back(std::make_unique<PdnScoreMethod>(ws.encoder(), config.train.n_max, &towers));
    } else if (name == "pdn-retrieval") {
      methods.push_back(std::make_unique<PdnRetrievalMethod>(*retriever, config.retrieve_m));
    } else if (name == "simnet-i2i") {
      index_sim.emplace(*index);
      methods.push_back(std::make_unique<ItemToItemMethod>(*index_sim));
    } else {
      CfConfig cc;
      cc.k_hat = config.cf_k_hat;
      cc.threads = config.threads;
      cf = CfMatrix::build(*ws.stats(), cc);
      cf_sim.emplace(*cf);
      methods.push_back(std::make_unique<ItemToItemMethod>(*cf_sim));
    }
  }
  EvalOptions eo;
  eo.K = config.eval_K;
  eo.threads = config.threads;
  std::vector<EvalReport> reports;
  nlohmann::json timings = nlohmann::json::object();
  for (const auto& p : config.eval_protocols) {
    const auto protocol = Protocol::parse(p, config.seed);
    for (const auto& method : methods) {
      const auto t1 = std::chrono::steady_clock::now();
      reports.push_back(evaluate(*method, ws.data(), protocol, eo));
      timings[method->name() + "/" + protocol.label() + "_s"] = seconds_since(t1);
    }
  }
  const auto dir = config.eval_dir();
  std::filesystem::create_directories(dir);
  write_report_tsv(reports, dir / "report.tsv");
  {
    std::ofstream out(dir / "summary.txt", std::ios::trunc);
    out << format_summary(reports);
  }
  StageManifest m;
  m.stage = "eval";
  m.inputs = {config.data_dir() / "train.tsv", config.data_dir() / "test.tsv"};
  if (needs_model) m.inputs.push_back(config.model_dir() / "checkpoint.bin");
  if (needs_index) m.inputs.push_back(config.index_dir() / "index.bin");
  m.outputs = {dir / "report.tsv", dir / "summary.txt"};
  m.timings = timings;
  m.timings["total_s"] = seconds_since(t0);
  m.write(dir, config);
  return reports;
}

}  // namespace pdn
