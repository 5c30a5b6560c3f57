#pragma once

// End-to-end orchestration: pools -> thresholds -> codebook + tensors ->
// objectives -> report, with per-stage artifacts cached under content hashes.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "objscope/analysis.hpp"
#include "objscope/dataset_io.hpp"
#include "objscope/error.hpp"
#include "objscope/objectives.hpp"
#include "objscope/preprocess.hpp"
#include "objscope/transition_tensor.hpp"

namespace objscope::pipeline {

namespace fs = std::filesystem;

// Raised for any failure inside a stage; carries where it happened.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string file, const std::string& cause)
      : Error("stage '" + stage + "' failed" + (file.empty() ? "" : " on " + file) + ": " + cause),
        stage_(std::move(stage)),
        file_(std::move(file)) {}

  [[nodiscard]] const std::string& stage() const { return stage_; }
  [[nodiscard]] const std::string& file() const { return file_; }

 private:
  std::string stage_;
  std::string file_;
};

template <typename F>
auto in_stage(const std::string& stage, const std::string& file, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, file, e.what());
  }
}

// Runs fn(0..n-1) on up to `degree` threads; rethrows the first failure.
inline void parallel_for(std::size_t n, std::size_t degree, const std::function<void(std::size_t)>& fn) {
  degree = std::max<std::size_t>(1, std::min(degree, n));
  if (degree == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < degree; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Hashing

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("sha256: update failed");
    return *this;
  }
  // Length-prefixed so concatenated fields cannot alias.
  Sha256& field(std::string_view s) {
    const std::uint64_t n = s.size();
    update(&n, sizeof n);
    return update(s.data(), s.size());
  }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) throw Error("sha256: final failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

// Hash of a trajectory file plus its manifest sidecar (which carries ids).
inline std::string content_hash(const fs::path& path) {
  Sha256 h;
  for (const auto& p : {path, sidecar_path(path)}) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
      h.field("<absent>");
      continue;
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
      in.read(buf.data(), buf.size());
      h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    h.field("|");
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Per-dataset statistics carried next to each tensor

struct DatasetStats {
  std::string environment_id;
  std::string agent_id;
  DatasetRole role = DatasetRole::agent;
  std::uint64_t steps = 0;
  std::uint64_t episodes = 0;
  double reward_sum = 0.0;

  bool operator==(const DatasetStats&) const = default;
};

inline std::string stats_to_text(const DatasetStats& s) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), s.reward_sum);
  std::ostringstream os;
  os << "environment_id=" << s.environment_id << '\n'
     << "agent_id=" << s.agent_id << '\n'
     << "role=" << role_name(s.role) << '\n'
     << "steps=" << s.steps << '\n'
     << "episodes=" << s.episodes << '\n'
     << "reward_sum=" << std::string(buf.data(), ptr) << '\n';
  return os.str();
}

inline DatasetStats stats_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(std::string("stats: missing key ") + k);
    return it->second;
  };
  DatasetStats s;
  s.environment_id = need("environment_id");
  s.agent_id = need("agent_id");
  s.role = need("role") == "human" ? DatasetRole::human : DatasetRole::agent;
  auto u64 = [&](const char* k) {
    const auto& v = need(k);
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw FormatError(std::string("stats: bad ") + k);
    return out;
  };
  s.steps = u64("steps");
  s.episodes = u64("episodes");
  const auto& r = need("reward_sum");
  auto [p, ec] = std::from_chars(r.data(), r.data() + r.size(), s.reward_sum);
  if (ec != std::errc{} || p != r.data() + r.size()) throw FormatError("stats: bad reward_sum");
  return s;
}

// ---------------------------------------------------------------------------
// Pass 1

inline PixelValuePool pool_file(const fs::path& path, std::size_t side) {
  return in_stage("ingest", path.string(), [&] {
    TrajectoryFile file(path);
    const auto& m = file.manifest();
    FrameReducer reduce(m.frame_width, m.frame_height, m.channels, side);
    PixelValuePool pool(side);
    TrajectoryRecord rec;
    while (file.next(rec)) pool.add(reduce(rec.frame));
    return pool;
  });
}

inline PixelValuePool pool_files(const std::vector<fs::path>& files, std::size_t side, std::size_t parallelism = 1) {
  std::vector<PixelValuePool> parts(files.size(), PixelValuePool(side));
  parallel_for(files.size(), parallelism, [&](std::size_t i) { parts[i] = pool_file(files[i], side); });
  PixelValuePool pool(side);
  for (const auto& p : parts) pool.merge(p);
  return pool;
}

// ---------------------------------------------------------------------------
// Pass 2

struct FileScan {
  DigestTransitionCounter counter;
  DatasetStats stats;
  std::uint16_t action_count = 0;
};

inline FileScan scan_file(const fs::path& path, const ThresholdTable& thresholds, ResetPolicy resets) {
  return in_stage("aggregate", path.string(), [&] {
    TrajectoryFile file(path);
    const auto& m = file.manifest();
    FrameReducer reduce(m.frame_width, m.frame_height, m.channels, thresholds.side);
    FileScan scan{DigestTransitionCounter(resets), {}, m.action_count};
    scan.stats.environment_id = m.environment_id;
    scan.stats.agent_id = m.agent_id;
    scan.stats.role = m.role;
    TrajectoryRecord rec;
    while (file.next(rec)) {
      scan.counter.push(digest_of(reduce(rec.frame), thresholds), rec.action, rec.episode_start);
      ++scan.stats.steps;
      scan.stats.episodes += rec.episode_start ? 1 : 0;
      scan.stats.reward_sum += rec.reward;
    }
    return scan;
  });
}

struct AggregateInput {
  std::string name;  // unique key inside the aggregate (file stem / agent id)
  fs::path path;
  const ThresholdTable* thresholds = nullptr;
};

struct Aggregate {
  Codebook codebook;
  std::vector<std::string> names;
  std::vector<CountTensor> tensors;
  std::vector<DatasetStats> stats;

  [[nodiscard]] std::size_t find(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw PreconditionError("aggregate: no dataset named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
};

// One codebook over every dataset's digests, then per-dataset tensors.
inline Aggregate aggregate_files(const std::vector<AggregateInput>& inputs, ResetPolicy resets,
                                 std::size_t parallelism = 1) {
  std::vector<std::optional<FileScan>> scans(inputs.size());
  parallel_for(inputs.size(), parallelism, [&](std::size_t i) {
    scans[i] = scan_file(inputs[i].path, *inputs[i].thresholds, resets);
  });
  CodebookBuilder builder;
  std::uint16_t actions = 0;
  for (const auto& s : scans) {
    builder.merge(s->counter.digests());
    actions = std::max(actions, s->action_count);
  }
  Aggregate agg{builder.build(), {}, {}, {}};
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    agg.names.push_back(inputs[i].name);
    agg.tensors.push_back(scans[i]->counter.to_tensor(agg.codebook, actions));
    agg.stats.push_back(scans[i]->stats);
  }
  return agg;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

template <typename T>
void write_binary(const fs::path& path, const T& artifact) {
  std::ofstream out(path, std::ios::binary);
  artifact.write(out);
  if (!out) throw IoError("cannot write " + path.string());
}

template <typename T>
T read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return T::read(in);
}

// Layout: codebook.bin, datasets.txt (one name per line), <name>.tensor,
// <name>.stats.
inline void write_aggregate(const fs::path& dir, const Aggregate& agg) {
  fs::create_directories(dir);
  write_binary(dir / "codebook.bin", agg.codebook);
  std::string list;
  for (std::size_t i = 0; i < agg.names.size(); ++i) {
    write_binary(dir / (agg.names[i] + ".tensor"), agg.tensors[i]);
    write_text(dir / (agg.names[i] + ".stats"), stats_to_text(agg.stats[i]));
    list += agg.names[i] + '\n';
  }
  write_text(dir / "datasets.txt", list);
}

inline Aggregate read_aggregate(const fs::path& dir) {
  Aggregate agg{read_binary<Codebook>(dir / "codebook.bin"), {}, {}, {}};
  std::istringstream list(read_text(dir / "datasets.txt"));
  std::string name;
  while (std::getline(list, name)) {
    if (name.empty()) continue;
    agg.names.push_back(name);
    agg.tensors.push_back(read_binary<CountTensor>(dir / (name + ".tensor")));
    if (agg.tensors.back().dims().inputs != agg.codebook.size()) {
      throw IntegrityError("aggregate: tensor " + name + " does not match the codebook size");
    }
    agg.stats.push_back(stats_from_text(read_text(dir / (name + ".stats"))));
  }
  return agg;
}

// ---------------------------------------------------------------------------
// Objectives over an aggregate

struct SimilaritySource {
  const Aggregate* aggregate = nullptr;  // tensors discretized with shared thresholds
  std::string human;                     // dataset name of the human reference
};

// Agent datasets of an aggregate: everything not tagged as human.
inline std::vector<std::string> agent_names(const Aggregate& agg) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < agg.names.size(); ++i) {
    if (agg.stats[i].role != DatasetRole::human) out.push_back(agg.names[i]);
  }
  return out;
}

// `intrinsic` holds the tensors used for C/I/E (and R via its stats);
// similarity, when given, compares each agent against the human tensor.
inline std::vector<ObjectiveVector> objectives_for(const Aggregate& intrinsic, const std::vector<std::string>& agents,
                                                   const SimilaritySource* similarity,
                                                   const ObjectiveOptions& options) {
  std::vector<ObjectiveVector> out;
  for (const auto& name : agents) {
    const std::size_t i = intrinsic.find(name);
    const auto& s = intrinsic.stats[i];
    ObjectiveVector v = in_stage("objectives", intrinsic.names[i], [&] {
      ObjectiveVector ov = compute_objectives(intrinsic.tensors[i], s.reward_sum, s.steps, nullptr, options);
      if (similarity != nullptr) {
        const auto& agg = *similarity->aggregate;
        const ProbTensor p(agg.tensors[agg.find(intrinsic.names[i])]);
        const ProbTensor h(agg.tensors[agg.find(similarity->human)]);
        const double jac = human_similarity_jaccard(p, h);
        const double jsd = human_similarity_jsd(p, h);
        ov.variants["human_similarity/jaccard"] = jac;
        ov.variants["human_similarity/jsd"] = jsd;
        ov.human_similarity = options.jsd_similarity ? jsd : jac;
      }
      return ov;
    });
    v.environment_id = s.environment_id;
    v.agent_id = s.agent_id;
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration

struct EnvironmentConfig {
  std::string name;
  std::vector<std::pair<std::string, fs::path>> agents;  // agent id -> dataset
  std::optional<fs::path> human;
  DiscretizationScope scope = DiscretizationScope::shared;
};

enum class SimilarityMode { jaccard, jsd, none };

struct RunConfig {
  std::vector<EnvironmentConfig> environments;
  fs::path output = "objscope-out";
  std::optional<fs::path> cache_dir;  // default: $OBJSCOPE_CACHE_DIR or <output>/cache
  analysis::Scheme scheme = analysis::kDefaultScheme;
  std::optional<fs::path> reference;  // reference matrices for scheme selection
  bool select_scheme = false;
  ObjectiveOptions objectives;
  SimilarityMode similarity = SimilarityMode::jaccard;
  std::size_t side = kDefaultGridSide;
  std::size_t levels = kDefaultLevels;
  ResetPolicy resets = ResetPolicy::exclude;
  std::size_t parallelism = 1;

  void validate() const {
    if (environments.empty()) throw ConfigError("config: no [environment ...] sections");
    if (parallelism == 0) throw ConfigError("config: parallelism must be at least 1");
    if (levels < 2) throw ConfigError("config: levels must be at least 2");
    check_digest_capacity(side, levels);
    if (select_scheme && !reference) throw ConfigError("config: scheme = auto needs a reference file");
    if (reference && !fs::exists(*reference)) throw ConfigError("config: reference " + reference->string() + " not found");
    std::vector<std::string> names;
    for (const auto& env : environments) {
      if (std::find(names.begin(), names.end(), env.name) != names.end()) {
        throw ConfigError("config: duplicate environment '" + env.name + "'");
      }
      names.push_back(env.name);
      if (env.agents.empty()) throw ConfigError("config: environment '" + env.name + "' lists no agents");
      if (similarity != SimilarityMode::none && !env.human) {
        throw ConfigError("config: environment '" + env.name + "' needs exactly one human dataset for similarity");
      }
      std::vector<std::string> ids;
      for (const auto& [id, path] : env.agents) {
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
          throw ConfigError("config: duplicate agent '" + id + "' in environment '" + env.name + "'");
        }
        if (id == "human") throw ConfigError("config: agent id 'human' is reserved");
        ids.push_back(id);
        if (!fs::exists(path)) throw ConfigError("config: dataset " + path.string() + " not found");
      }
      if (env.human && !fs::exists(*env.human)) {
        throw ConfigError("config: human dataset " + env.human->string() + " not found");
      }
    }
  }

  [[nodiscard]] fs::path effective_cache_dir() const {
    if (cache_dir) return *cache_dir;
    if (const char* env = std::getenv("OBJSCOPE_CACHE_DIR"); env != nullptr && *env != '\0') return env;
    return output / "cache";
  }
};

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("config: " + key + " must be an integer");
  return out;
}

// Applies one `key = value` setting of the [run] section; also used for
// command-line overrides.
inline void apply_run_setting(RunConfig& c, const std::string& key, const std::string& value, const fs::path& base) {
  auto resolve = [&](const std::string& v) { return fs::path(v).is_absolute() ? fs::path(v) : base / v; };
  if (key == "output") {
    c.output = resolve(value);
  } else if (key == "cache_dir") {
    c.cache_dir = resolve(value);
  } else if (key == "scheme") {
    if (value == "auto") {
      c.select_scheme = true;
    } else {
      c.select_scheme = false;
      c.scheme = analysis::parse_scheme(value);
    }
  } else if (key == "reference") {
    c.reference = resolve(value);
  } else if (key == "information_gain") {
    c.objectives.info_gain = parse_info_gain_variant(value);
  } else if (key == "human_similarity") {
    if (value == "jaccard") {
      c.similarity = SimilarityMode::jaccard;
    } else if (value == "jsd") {
      c.similarity = SimilarityMode::jsd;
    } else if (value == "none") {
      c.similarity = SimilarityMode::none;
    } else {
      throw ConfigError("config: human_similarity must be jaccard, jsd or none");
    }
    c.objectives.jsd_similarity = c.similarity == SimilarityMode::jsd;
  } else if (key == "grid") {
    c.side = parse_count(key, value);
  } else if (key == "levels") {
    c.levels = parse_count(key, value);
  } else if (key == "resets") {
    if (value == "exclude") {
      c.resets = ResetPolicy::exclude;
    } else if (value == "include") {
      c.resets = ResetPolicy::include;
    } else {
      throw ConfigError("config: resets must be exclude or include");
    }
  } else if (key == "parallelism") {
    c.parallelism = parse_count(key, value);
  } else {
    throw ConfigError("config: unknown [run] key '" + key + "'");
  }
}

// INI text: a [run] section and one [environment <name>] section per
// environment with `discretization`, `human` and `agent.<id>` keys. Relative
// paths resolve against `base`.
inline RunConfig parse_run_config(std::istream& in, const fs::path& base) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  auto resolve = [&](const std::string& v) { return fs::path(v).is_absolute() ? fs::path(v) : base / v; };
  for (const auto& [section, body] : tree) {
    if (section == "run") {
      for (const auto& [key, value] : body) apply_run_setting(c, key, value.data(), base);
      continue;
    }
    constexpr std::string_view kPrefix = "environment ";
    if (section.rfind(kPrefix, 0) != 0 || section.size() == kPrefix.size()) {
      throw ConfigError("config: unknown section [" + section + "]");
    }
    EnvironmentConfig env;
    env.name = section.substr(kPrefix.size());
    for (const auto& [key, value] : body) {
      const std::string v = value.data();
      if (key == "human") {
        env.human = resolve(v);
      } else if (key == "discretization") {
        env.scope = parse_scope(v);
      } else if (key.rfind("agent.", 0) == 0 && key.size() > 6) {
        env.agents.emplace_back(key.substr(6), resolve(v));
      } else {
        throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      }
    }
    c.environments.push_back(std::move(env));
  }
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_run_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Cached stage execution

struct StageOutcome {
  std::string stage;
  std::string scope;  // environment / dataset the artifact belongs to
  std::string key;
  bool cache_hit = false;
};

struct RunResult {
  analysis::CorrelationReport report;
  std::optional<analysis::SchemeSelection> selection;
  std::vector<StageOutcome> stages;
  fs::path output;

  [[nodiscard]] bool all_cached() const {
    return std::all_of(stages.begin(), stages.end(), [](const auto& s) { return s.cache_hit; });
  }
};

class StageCache {
 public:
  explicit StageCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  // Produces `<dir>/<stage>-<key><suffix>` via `make(tmp_path)` unless it
  // already exists; the rename keeps half-written artifacts out of the cache.
  bool ensure(const std::string& stage, const std::string& key, const std::string& suffix,
              const std::function<void(const fs::path&)>& make, fs::path& out) {
    out = dir_ / (stage + "-" + key + suffix);
    if (fs::exists(out)) return true;
    const fs::path tmp = dir_ / (stage + "-" + key + suffix + ".partial");
    fs::remove_all(tmp);
    make(tmp);
    fs::rename(tmp, out);
    return false;
  }

 private:
  fs::path dir_;
};

class Runner {
 public:
  explicit Runner(const RunConfig& config) : config_(config), cache_(config.effective_cache_dir()) {}

  RunResult run() {
    RunResult result;
    result.output = config_.output;
    fs::create_directories(config_.output);
    std::vector<ObjectiveRow> rows;
    for (const auto& env : config_.environments) {
      const fs::path objectives = environment_objectives(env, result);
      auto part = in_stage("objectives", objectives.string(), [&] { return read_objective_csv(objectives); });
      rows.insert(rows.end(), part.begin(), part.end());
    }
    {
      std::ofstream out(config_.output / "objectives.csv", std::ios::binary);
      write_objective_csv(out, rows);
      if (!out) throw StageError("objectives", (config_.output / "objectives.csv").string(), "write failed");
    }

    Sha256 h;
    h.field("report").field(read_text(config_.output / "objectives.csv"));
    h.field(config_.select_scheme ? "auto" : analysis::scheme_name(config_.scheme));
    h.field(config_.reference ? read_text(*config_.reference) : "");
    h.field(variant_key());
    const std::string key = h.hex();
    const auto table = analysis::build_table(rows, variants());
    analysis::Scheme scheme = config_.scheme;
    if (config_.select_scheme) {
      result.selection = in_stage("report", config_.reference->string(), [&] {
        const auto refs = analysis::read_reference_matrices(*config_.reference);
        auto it = refs.find("combined");
        if (it == refs.end()) throw FormatError("reference has no 'combined' matrix");
        return analysis::select_scheme(table, it->second);
      });
      scheme = result.selection->best;
    }
    result.report = in_stage("report", "", [&] { return analysis::correlation_report(table, scheme); });
    fs::path dir;
    const bool hit = cache_.ensure("report", key, "", [&](const fs::path& tmp) {
      in_stage("report", tmp.string(), [&] {
        analysis::write_report_files(tmp, result.report, table, metadata(scheme, result.selection));
      });
    }, dir);
    result.stages.push_back({"report", "all", key, hit});
    for (const auto& entry : fs::directory_iterator(dir)) {
      fs::copy_file(entry.path(), config_.output / entry.path().filename(), fs::copy_options::overwrite_existing);
    }
    return result;
  }

 private:
  [[nodiscard]] analysis::VariantSelection variants() const {
    auto v = analysis::default_variants();
    v[static_cast<std::size_t>(Objective::information_gain)] = std::string(variant_name(config_.objectives.info_gain));
    v[static_cast<std::size_t>(Objective::human_similarity)] = config_.objectives.jsd_similarity ? "jsd" : "jaccard";
    return v;
  }

  [[nodiscard]] std::string variant_key() const {
    std::string s;
    for (const auto& v : variants()) s += v + ";";
    return s;
  }

  [[nodiscard]] nlohmann::ordered_json metadata(analysis::Scheme scheme,
                                                const std::optional<analysis::SchemeSelection>& selection) const {
    nlohmann::ordered_json m;
    m["scheme"] = analysis::scheme_name(scheme);
    if (selection) m["scheme_selection"] = analysis::selection_json(*selection);
    m["units"] =
        "entropy and empowerment in nats of the lifetime distribution; information gain in nats summed over the "
        "lifetime; reward per step";
    m["grid"] = config_.side;
    m["levels"] = config_.levels;
    m["resets"] = config_.resets == ResetPolicy::exclude ? "exclude" : "include";
    auto& vs = m["variants"];
    const auto v = variants();
    for (auto o : kObjectives) vs[std::string(objective_name(o))] = v[static_cast<std::size_t>(o)];
    auto& envs = m["environments"];
    for (const auto& env : config_.environments) {
      nlohmann::ordered_json e;
      e["name"] = env.name;
      e["discretization"] = scope_name(env.scope);
      for (const auto& a : env.agents) e["agents"].push_back(a.first);
      envs.push_back(e);
    }
    return m;
  }

  const std::string& file_hash(const fs::path& p) {
    auto it = hashes_.find(p);
    if (it != hashes_.end()) return it->second;
    return hashes_[p] = in_stage("ingest", p.string(), [&] { return content_hash(p); });
  }

  // Pool + thresholds over a file set; returns the thresholds artifact key.
  std::string thresholds_for(const std::string& scope, const std::vector<fs::path>& files, DiscretizationScope ds,
                             RunResult& result, ThresholdTable& table) {
    Sha256 ph;
    ph.field("pool").field(std::to_string(config_.side));
    std::vector<std::string> hs;
    for (const auto& f : files) hs.push_back(file_hash(f));
    std::sort(hs.begin(), hs.end());
    for (const auto& h : hs) ph.field(h);
    const std::string pool_key = ph.hex();
    fs::path pool_path;
    const bool pool_hit = cache_.ensure("pool", pool_key, ".bin", [&](const fs::path& tmp) {
      write_binary(tmp, pool_files(files, config_.side, config_.parallelism));
    }, pool_path);
    result.stages.push_back({"pool", scope, pool_key, pool_hit});

    Sha256 th;
    th.field("thresholds").field(pool_key).field(std::to_string(config_.levels)).field(scope_name(ds));
    const std::string key = th.hex();
    fs::path path;
    const bool hit = cache_.ensure("thresholds", key, ".bin", [&](const fs::path& tmp) {
      in_stage("thresholds", pool_path.string(), [&] {
        write_binary(tmp, compute_thresholds(read_binary<PixelValuePool>(pool_path), config_.levels, ds));
      });
    }, path);
    result.stages.push_back({"thresholds", scope, key, hit});
    table = in_stage("thresholds", path.string(), [&] { return read_binary<ThresholdTable>(path); });
    return key;
  }

  fs::path aggregate_for(const std::string& scope, const std::vector<std::pair<AggregateInput, std::string>>& inputs,
                         RunResult& result, std::string& key_out) {
    Sha256 h;
    h.field("aggregate").field(config_.resets == ResetPolicy::exclude ? "exclude" : "include");
    for (const auto& [in, tkey] : inputs) h.field(in.name).field(file_hash(in.path)).field(tkey);
    key_out = h.hex();
    std::vector<AggregateInput> plain;
    for (const auto& p : inputs) plain.push_back(p.first);
    fs::path dir;
    const bool hit = cache_.ensure("aggregate", key_out, "", [&](const fs::path& tmp) {
      write_aggregate(tmp, aggregate_files(plain, config_.resets, config_.parallelism));
    }, dir);
    result.stages.push_back({"aggregate", scope, key_out, hit});
    return dir;
  }

  fs::path environment_objectives(const EnvironmentConfig& env, RunResult& result) {
    std::vector<fs::path> agent_files;
    for (const auto& a : env.agents) agent_files.push_back(a.second);
    const bool want_similarity = config_.similarity != SimilarityMode::none;

    // Shared thresholds: pooled over the environment's agent datasets; the
    // human dataset is discretized with them but does not shape them.
    ThresholdTable shared;
    const std::string shared_key = thresholds_for(env.name, agent_files, DiscretizationScope::shared, result, shared);
    std::vector<std::pair<AggregateInput, std::string>> shared_inputs;
    for (const auto& [id, path] : env.agents) shared_inputs.push_back({{id, path, &shared}, shared_key});
    if (want_similarity) shared_inputs.push_back({{"human", *env.human, &shared}, shared_key});
    std::string shared_agg_key;
    const fs::path shared_dir = aggregate_for(env.name, shared_inputs, result, shared_agg_key);

    std::string intrinsic_key = shared_agg_key;
    fs::path intrinsic_dir = shared_dir;
    std::vector<ThresholdTable> own(env.agents.size());
    if (env.scope == DiscretizationScope::per_agent) {
      std::vector<std::pair<AggregateInput, std::string>> inputs;
      for (std::size_t a = 0; a < env.agents.size(); ++a) {
        const auto& [id, path] = env.agents[a];
        const std::string k =
            thresholds_for(env.name + "/" + id, {path}, DiscretizationScope::per_agent, result, own[a]);
        inputs.push_back({{id, path, &own[a]}, k});
      }
      intrinsic_dir = aggregate_for(env.name + "/per-agent", inputs, result, intrinsic_key);
    }

    Sha256 h;
    h.field("objectives").field(env.name).field(intrinsic_key).field(shared_agg_key).field(variant_key());
    const std::string key = h.hex();
    fs::path path;
    const bool hit = cache_.ensure("objectives", key, ".csv", [&](const fs::path& tmp) {
      const Aggregate intrinsic = in_stage("objectives", intrinsic_dir.string(), [&] { return read_aggregate(intrinsic_dir); });
      std::optional<Aggregate> shared_agg;
      SimilaritySource sim;
      if (want_similarity) {
        shared_agg = in_stage("objectives", shared_dir.string(), [&] { return read_aggregate(shared_dir); });
        sim = {&*shared_agg, "human"};
      }
      std::vector<std::string> ids;
      for (const auto& a : env.agents) ids.push_back(a.first);
      auto vectors = objectives_for(intrinsic, ids, want_similarity ? &sim : nullptr, config_.objectives);
      std::vector<ObjectiveRow> rows;
      for (std::size_t a = 0; a < vectors.size(); ++a) {
        // The config names agents and the environment; manifests may not agree.
        vectors[a].environment_id = env.name;
        vectors[a].agent_id = env.agents[a].first;
        auto r = to_rows(vectors[a]);
        if (!want_similarity) {
          r.push_back({env.name, env.agents[a].first, Objective::human_similarity,
                       config_.objectives.jsd_similarity ? "jsd" : "jaccard", std::nullopt, vectors[a].steps});
        }
        rows.insert(rows.end(), r.begin(), r.end());
      }
      std::ofstream out(tmp, std::ios::binary);
      write_objective_csv(out, rows);
      if (!out) throw IoError("cannot write " + tmp.string());
    }, path);
    result.stages.push_back({"objectives", env.name, key, hit});
    return path;
  }

  const RunConfig& config_;
  StageCache cache_;
  std::map<fs::path, std::string> hashes_;
};

inline RunResult run_pipeline(const RunConfig& config) {
  config.validate();
  return Runner(config).run();
}

}  // namespace objscope::pipeline
