#include "v6forge/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "v6forge/errors.hpp"
#include "v6forge/random.hpp"

namespace v6forge::pipeline {
namespace fs = std::filesystem;
using addr6::NybbleSeq;
using addr6::SeedSet;

namespace {

constexpr int kMaxIncludeDepth = 16;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read error on " + path.string());
  return buf.str();
}

void parse_into(KeyValues& kv, std::string_view text, const fs::path& base_dir, const std::string& where,
                int depth) {
  if (depth > kMaxIncludeDepth) throw ConfigError("include nesting too deep at " + where);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ":" + std::to_string(line_no) + ": empty key");
    if (key == "include") {
      const fs::path inc = base_dir / value;
      parse_into(kv, read_file(inc), inc.parent_path(), inc.string(), depth + 1);
      continue;
    }
    kv[key] = value;
  }
}

// --- typed config values ---------------------------------------------------

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  const std::string* raw(const std::string& key) {
    used_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? nullptr : &it->second;
  }

  void path(const std::string& key, fs::path& out) {
    if (const auto* v = raw(key)) out = *v;
  }

  template <typename U>
  void integer(const std::string& key, U& out, U min = 0) {
    const auto* v = raw(key);
    if (!v) return;
    U parsed{};
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
    if (ec != std::errc() || p != v->data() + v->size() || parsed < min)
      throw ConfigError(key + ": expected an integer >= " + std::to_string(min) + ", got '" + *v + "'");
    out = parsed;
  }

  void real(const std::string& key, double& out) {
    const auto* v = raw(key);
    if (!v) return;
    std::size_t used = 0;
    double parsed = 0;
    try {
      parsed = std::stod(*v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v->size() || !(parsed > 0))
      throw ConfigError(key + ": expected a positive number, got '" + *v + "'");
    out = parsed;
  }

  void boolean(const std::string& key, bool& out) {
    const auto* v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "yes" || *v == "1")
      out = true;
    else if (*v == "false" || *v == "no" || *v == "0")
      out = false;
    else
      throw ConfigError(key + ": expected true or false, got '" + *v + "'");
  }

  template <typename E>
  void choice(const std::string& key, E& out, std::initializer_list<std::pair<std::string_view, E>> options) {
    const auto* v = raw(key);
    if (!v) return;
    for (const auto& [name, value] : options)
      if (*v == name) {
        out = value;
        return;
      }
    std::string names;
    for (const auto& o : options) names += (names.empty() ? "" : ", ") + std::string(o.first);
    throw ConfigError(key + ": expected one of " + names + ", got '" + *v + "'");
  }

  void reject_unknown() const {
    for (const auto& [k, v] : kv_)
      if (!used_.contains(k)) throw ConfigError("unknown key '" + k + "'");
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> used_;
};

std::string_view classification_name(Classification c) {
  switch (c) {
    case Classification::None: return "none";
    case Classification::Manual: return "manual";
    case Classification::Cluster: return "cluster";
  }
  return "none";
}

// --- formatting --------------------------------------------------------------

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string grouped(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

// First column left-aligned, the rest right-aligned.
std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      if (c > 0) s += "  ";
      s += c == 0 ? r[c] + pad : pad + r[c];
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

std::string address_text(const std::vector<NybbleSeq>& seqs) {
  std::ostringstream out;
  addr6::write_address_list(out, seqs);
  return out.str();
}

std::string slugify(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!s.empty() && s.back() != '_')
      s += '_';
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

// --- inputs ------------------------------------------------------------------

void require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string(key) + " is required for this command");
}

SeedSet load_seeds(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  auto r = addr6::load_seed_set(in, addr6::LoadMode::Lenient, path.string());
  if (in.bad()) throw IoError("read error on " + path.string());
  return std::move(r.seeds);
}

vae::VaeParams<float> load_model(const fs::path& path) {
  const std::string bytes = read_file(path);
  return vae::load_params(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string model_bytes(const vae::VaeParams<float>& p) {
  const auto b = vae::save_params(p);
  return std::string(b.begin(), b.end());
}

bool is_model_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  return in.gcount() == 4 && magic == vae::kModelMagic;
}

// Either a single model file or an index written by `train` with one
// "name<TAB>file" line per category model.
std::vector<CategoryModel> load_models(const fs::path& path) {
  if (is_model_file(path)) return {{"model", load_model(path)}};
  std::vector<CategoryModel> out;
  std::istringstream lines(read_file(path));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw CorruptModel("malformed model index line: " + line);
    const std::string file = line.substr(tab + 1, line.find('\t', tab + 1) - tab - 1);
    out.push_back({line.substr(0, tab), load_model(path.parent_path() / file)});
  }
  if (out.empty()) throw CorruptModel("model index lists no models: " + path.string());
  return out;
}

class Stopwatch {
 public:
  explicit Stopwatch(RunResult& r) : result_(r) {}
  template <typename Fn>
  decltype(auto) time(const std::string& stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      RunResult& r;
      const std::string& stage;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        r.timings.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      }
    } record{result_, stage, start};
    return fn();
  }

 private:
  RunResult& result_;
};

vae::TrainConfig train_config(const PipelineConfig& cfg, std::uint64_t seed) {
  vae::TrainConfig t = cfg.train;
  t.rng_seed = seed;
  t.workers = cfg.workers;
  return t;
}

// Per-category config; under the steps schedule the epoch count is scaled
// so the category model gets the step count of one model over all seeds.
vae::TrainConfig category_train_config(const PipelineConfig& cfg, std::uint64_t seed, std::size_t category_size,
                                       std::size_t total_size) {
  vae::TrainConfig t = train_config(cfg, seed);
  if (cfg.category_schedule == CategorySchedule::Steps && category_size > 0) {
    const std::size_t bs = t.batch_size;
    const std::size_t all_steps = t.epochs * ((total_size + bs - 1) / bs);
    const std::size_t per_epoch = (category_size + bs - 1) / bs;
    t.epochs = (all_steps + per_epoch - 1) / per_epoch;
  }
  return t;
}

vae::GenerateOptions generate_options(const PipelineConfig& cfg) {
  return {cfg.decoding, cfg.workers};
}

// Seed categories for the chosen classification mode, in a fixed order.
// Empty categories are dropped.
std::vector<std::pair<std::string, SeedSet>> categorize(const SeedSet& seeds, const PipelineConfig& cfg,
                                                        std::string* cluster_report = nullptr) {
  std::vector<std::pair<std::string, SeedSet>> out;
  switch (cfg.classification) {
    case Classification::None:
      out.emplace_back("all", seeds);
      break;
    case Classification::Manual: {
      std::vector<SeedSet> by_label(seedclass::kAllLabels.size());
      for (const auto& s : seeds) by_label[static_cast<std::size_t>(seedclass::classify_manual(s))].insert(s);
      for (auto label : seedclass::kAllLabels) {
        auto& set = by_label[static_cast<std::size_t>(label)];
        if (!set.empty()) out.emplace_back(std::string(seedclass::label_name(label)), std::move(set));
      }
      break;
    }
    case Classification::Cluster: {
      auto opts = cfg.cluster;
      opts.rng_seed = derive_seed(cfg.rng_seed, "cluster");
      auto c = seedclass::cluster_seeds(seeds, opts);
      for (std::size_t i = 0; i < c.clusters.size(); ++i)
        if (!c.clusters[i].empty()) out.emplace_back("Cluster " + std::to_string(i + 1), std::move(c.clusters[i]));
      if (!c.unclassified.empty()) out.emplace_back("Unclustered", std::move(c.unclassified));
      if (cluster_report)
        *cluster_report = "k=" + std::to_string(c.model.k) + " groups=" + std::to_string(c.fingerprints.size());
      break;
    }
  }
  return out;
}

// Prefixes every line of `text`.
std::string prefixed(const std::string& prefix, const std::string& text) {
  std::string out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out += prefix + l + "\n";
  return out;
}

std::vector<std::string> report_cells(const std::string& name, const evalkit::GenerationReport& r, int decimals) {
  return {name,
          grouped(r.n_candidate),
          grouped(r.n_hit),
          grouped(r.n_new),
          r.r_hit().percent(decimals) + "%",
          r.r_gen().percent(decimals) + "%"};
}

const std::vector<std::string> kReportHeader = {"Model", "N_candidate", "N_hit", "N_new", "r_hit", "r_gen"};

// --- commands ------------------------------------------------------------------

RunResult cmd_classify(const PipelineConfig& cfg) {
  require_path(cfg.seeds, "seeds");
  RunResult result;
  Stopwatch sw(result);
  const SeedSet seeds = sw.time("load", [&] { return load_seeds(cfg.seeds); });
  std::vector<std::vector<NybbleSeq>> by_label(seedclass::kAllLabels.size());
  sw.time("classify", [&] {
    for (const auto& s : seeds) by_label[static_cast<std::size_t>(seedclass::classify_manual(s))].push_back(s);
  });

  // basis points via largest remainder so the column sums to exactly 100%
  std::vector<std::size_t> bp(by_label.size(), 0);
  if (!seeds.empty()) {
    std::vector<evalkit::CategoryRate> shares;
    for (std::size_t i = 0; i < by_label.size(); ++i) shares.push_back({"", {by_label[i].size(), seeds.size()}});
    const auto alloc = evalkit::allocate_budget(shares, 10000);
    for (std::size_t i = 0; i < bp.size(); ++i) bp[i] = alloc[i].draws;
  }
  auto pct = [](std::size_t basis_points) {
    return std::to_string(basis_points / 100) + "." + (basis_points % 100 < 10 ? "0" : "") +
           std::to_string(basis_points % 100);
  };

  std::vector<std::vector<std::string>> rows;
  std::string kv;
  for (auto label : seedclass::kAllLabels) {
    const auto i = static_cast<std::size_t>(label);
    const std::string slug(seedclass::label_slug(label));
    result.artifacts.add(slug + ".txt", address_text(by_label[i]));
    rows.push_back({std::string(seedclass::label_name(label)), grouped(by_label[i].size()), pct(bp[i]) + "%"});
    kv += "classify." + slug + ".seeds=" + std::to_string(by_label[i].size()) + "\n";
    kv += "classify." + slug + ".percent=" + pct(bp[i]) + "\n";
  }
  rows.push_back({"Total", grouped(seeds.size()), seeds.empty() ? "0.00%" : "100.00%"});
  kv += "classify.total=" + std::to_string(seeds.size()) + "\n";
  result.artifacts.add("classify_report.txt", table({"Category", "Seeds", "Percentage"}, rows) + "\n" + kv);
  result.summary = "classified " + std::to_string(seeds.size()) + " seeds";
  return result;
}

RunResult cmd_cluster(const PipelineConfig& cfg) {
  require_path(cfg.seeds, "seeds");
  RunResult result;
  Stopwatch sw(result);
  const SeedSet seeds = sw.time("load", [&] { return load_seeds(cfg.seeds); });
  auto opts = cfg.cluster;
  opts.rng_seed = derive_seed(cfg.rng_seed, "cluster");
  const auto c = sw.time("cluster", [&] { return seedclass::cluster_seeds(seeds, opts); });

  std::vector<std::vector<std::string>> rows;
  std::string kv = "cluster.k=" + std::to_string(c.model.k) + "\n";
  kv += "cluster.groups=" + std::to_string(c.fingerprints.size()) + "\n";
  for (std::size_t j = 0; j < c.clusters.size(); ++j) {
    const std::string id = std::to_string(j + 1);
    const auto groups = std::count(c.model.assignments.begin(), c.model.assignments.end(), j);
    result.artifacts.add("cluster_" + id + ".txt", address_text(c.clusters[j].members()));
    rows.push_back({"Cluster " + id, grouped(static_cast<std::size_t>(groups)), grouped(c.clusters[j].size())});
    kv += "cluster." + id + ".groups=" + std::to_string(groups) + "\n";
    kv += "cluster." + id + ".seeds=" + std::to_string(c.clusters[j].size()) + "\n";
  }
  rows.push_back({"Unclustered", "-", grouped(c.unclassified.size())});
  kv += "cluster.unclustered.seeds=" + std::to_string(c.unclassified.size()) + "\n";
  result.artifacts.add("unclustered.txt", address_text(c.unclassified.members()));

  std::string sse = "k,sse\n";
  for (std::size_t k = 0; k < c.sse_curve.size(); ++k) sse += std::to_string(k + 1) + "," + fixed(c.sse_curve[k], 9) + "\n";
  if (c.sse_curve.empty()) sse += std::to_string(c.model.k) + "," + fixed(c.model.sse, 9) + "\n";
  result.artifacts.add("sse_curve.csv", sse);

  std::string centroids = "cluster";
  for (std::size_t i = opts.a; i <= opts.b; ++i) centroids += ",h" + std::to_string(i);
  centroids += "\n";
  for (std::size_t j = 0; j < c.model.centroids.size(); ++j) {
    centroids += std::to_string(j + 1);
    for (double v : c.model.centroids[j]) centroids += "," + fixed(v, 9);
    centroids += "\n";
  }
  result.artifacts.add("centroids.csv", centroids);

  std::string groups = "prefix,cluster,seeds\n";
  for (std::size_t g = 0; g < c.fingerprints.size(); ++g)
    groups += c.fingerprints[g].prefix + "," + std::to_string(c.model.assignments[g] + 1) + "," +
              std::to_string(c.fingerprints[g].support) + "\n";
  result.artifacts.add("groups.csv", groups);

  result.artifacts.add("cluster_report.txt", table({"Cluster", "Groups", "Seeds"}, rows) + "\n" + kv);
  result.summary = "k=" + std::to_string(c.model.k) + " over " + std::to_string(c.fingerprints.size()) + " groups";
  return result;
}

std::string log_lines(const std::string& category, const std::vector<vae::LossBreakdown>& history) {
  std::string out;
  for (std::size_t e = 0; e < history.size(); ++e)
    out += category + "," + std::to_string(e + 1) + "," + fixed(history[e].j_xent, 6) + "," +
           fixed(history[e].j_kl, 6) + "," + fixed(history[e].j_vae, 6) + "\n";
  return out;
}

RunResult cmd_train(const PipelineConfig& cfg) {
  require_path(cfg.seeds, "seeds");
  RunResult result;
  Stopwatch sw(result);
  const SeedSet seeds = sw.time("load", [&] { return load_seeds(cfg.seeds); });
  if (seeds.empty()) throw EmptySeedSet("no valid addresses in " + cfg.seeds.string());
  const auto categories = sw.time("categorize", [&] { return categorize(seeds, cfg); });
  const std::uint64_t train_seed = derive_seed(cfg.rng_seed, "train");

  std::string log = "category,epoch,j_xent,j_kl,j_vae\n";
  if (cfg.classification == Classification::None) {
    const auto r = sw.time("train", [&] { return vae::train(seeds, train_config(cfg, train_seed)); });
    log += log_lines("all", r.history);
    result.artifacts.add("model.6gcv", model_bytes(r.params));
    result.summary = "trained " + std::to_string(r.steps) + " steps";
  } else {
    std::string index;
    for (const auto& [name, set] : categories) {
      const std::string slug = slugify(name);
      const auto r = sw.time("train " + slug, [&] { return vae::train(set, category_train_config(cfg, derive_seed(train_seed, slug), set.size(), seeds.size()));
      });
      log += log_lines(slug, r.history);
      result.artifacts.add("model_" + slug + ".6gcv", model_bytes(r.params));
      index += name + "\tmodel_" + slug + ".6gcv\t" + std::to_string(set.size()) + "\n";
    }
    result.artifacts.add("models.txt", index);
    result.summary = "trained " + std::to_string(categories.size()) + " category models";
  }
  result.artifacts.add("train_log.csv", log);
  return result;
}

std::string allocation_kv(const BudgetedGeneration& g, const std::string& prefix) {
  std::string kv;
  for (const auto& c : g.categories) {
    const std::string slug = slugify(c.name);
    kv += prefix + slug + ".draws=" + std::to_string(c.draws) + "\n";
    if (c.pilot) kv += prefix + slug + ".pilot_r_gen=" + c.pilot->r_gen().percent(2) + "\n";
  }
  return kv + prefix + "split=" + (g.even_split ? "even" : "budget") + "\n";
}

std::string allocation_report(const BudgetedGeneration& g) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : g.categories)
    rows.push_back({c.name, c.pilot ? c.pilot->r_gen().percent(2) + "%" : "-", grouped(c.draws)});
  return table({"Category", "Pilot r_gen", "Draws"}, rows) + "\n" + allocation_kv(g, "generate.") +
         "generate.n_candidate=" + std::to_string(g.candidates.size()) + "\n";
}

RunResult cmd_generate(const PipelineConfig& cfg) {
  require_path(cfg.model, "model");
  if (cfg.exclude_seeds || cfg.budget) require_path(cfg.seeds, "seeds");
  if (cfg.budget) require_path(cfg.oracle, "oracle");
  RunResult result;
  Stopwatch sw(result);
  const auto models = sw.time("load", [&] { return load_models(cfg.model); });
  std::optional<SeedSet> seeds;
  std::optional<evalkit::SetOracle> oracle;
  if (!cfg.seeds.empty()) seeds = load_seeds(cfg.seeds);
  if (cfg.budget) oracle = evalkit::oracle_from_file(cfg.oracle);

  auto g = sw.time("generate", [&] {
    return generate_budgeted(models, cfg.generate_n, cfg.pilot_n, oracle ? &*oracle : nullptr,
                             seeds ? &*seeds : nullptr, derive_seed(cfg.rng_seed, "generate"), generate_options(cfg));
  });
  if (cfg.exclude_seeds)
    std::erase_if(g.candidates, [&](const NybbleSeq& s) { return seeds->contains(s); });
  result.artifacts.add("candidates.txt", address_text(g.candidates));
  result.artifacts.add("generate_report.txt", allocation_report(g));
  result.summary = std::to_string(g.candidates.size()) + " candidates from " + std::to_string(cfg.generate_n) + " draws";
  return result;
}

RunResult cmd_evaluate(const PipelineConfig& cfg) {
  require_path(cfg.candidates, "candidates");
  require_path(cfg.seeds, "seeds");
  require_path(cfg.oracle, "oracle");
  RunResult result;
  Stopwatch sw(result);
  const SeedSet candidates = sw.time("load", [&] { return load_seeds(cfg.candidates); });
  const SeedSet seeds = load_seeds(cfg.seeds);
  const auto oracle = evalkit::oracle_from_file(cfg.oracle);
  const auto r = sw.time("evaluate", [&] {
    return evalkit::evaluate(candidates.members(), seeds, oracle, cfg.n_sampled.value_or(candidates.size()),
                             {cfg.evaluate_exclude_seeds});
  });
  result.artifacts.add("evaluation.txt",
                       table(kReportHeader, {report_cells("candidates", r, 2)}) + "\n" + evalkit::format_key_values(r));
  result.summary = "r_hit=" + r.r_hit().percent(2) + "% r_gen=" + r.r_gen().percent(2) + "%";
  return result;
}

RunResult cmd_bench(const PipelineConfig& cfg) {
  RunResult result;
  Stopwatch sw(result);
  auto ucfg = cfg.universe;
  ucfg.rng_seed = derive_seed(cfg.rng_seed, "universe");
  const auto u = sw.time("universe", [&] { return evalkit::synth_universe(ucfg); });
  result.artifacts.add("universe.txt", address_text(u.universe.members()));
  result.artifacts.add("seeds.txt", address_text(u.seeds.members()));

  const std::size_t n = cfg.generate_n;
  const auto opts = generate_options(cfg);
  const std::uint64_t train_seed = derive_seed(cfg.rng_seed, "train");
  const std::uint64_t gen_seed = derive_seed(cfg.rng_seed, "generate");
  std::vector<std::pair<std::string, evalkit::GenerationReport>> arms;
  std::string details;
  std::string split_kv;

  auto score = [&](const std::string& arm, const std::vector<NybbleSeq>& cands) {
    result.artifacts.add("candidates_" + arm + ".txt", address_text(cands));
    return evalkit::evaluate(cands, u.seeds, u.oracle, n);
  };

  const auto baseline = sw.time("random baseline", [&] {
    return evalkit::random_baseline(n, evalkit::prefixes_of(u.seeds), derive_seed(cfg.rng_seed, "baseline"));
  });
  arms.emplace_back("Random IID baseline", score("random", baseline));

  const auto plain = sw.time("train unclassified", [&] { return vae::train(u.seeds, train_config(cfg, train_seed)); });
  const auto plain_cands = sw.time("generate unclassified", [&] { return vae::generate(plain.params, n, gen_seed, opts); });
  arms.emplace_back("Gated-conv VAE", score("unclassified", plain_cands));
  std::string log = "arm,category,epoch,j_xent,j_kl,j_vae\n";
  log += prefixed("unclassified,", log_lines("all", plain.history));

  for (auto mode : {Classification::Manual, Classification::Cluster}) {
    const std::string arm(classification_name(mode));
    PipelineConfig sub = cfg;
    sub.classification = mode;
    std::string cluster_note;
    const auto categories = sw.time("categorize " + arm, [&] { return categorize(u.seeds, sub, &cluster_note); });
    std::vector<CategoryModel> models;
    for (const auto& [name, set] : categories) {
      const std::string slug = slugify(name);
      const auto r = sw.time("train " + arm + " " + slug, [&] {
        return vae::train(set, category_train_config(cfg, derive_seed(derive_seed(train_seed, arm), slug), set.size(),
                                                     u.seeds.size()));
      });
      log += prefixed(arm + ",", log_lines(slug, r.history));
      models.push_back({name, r.params});
    }
    const auto g = sw.time("generate " + arm, [&] {
      return generate_budgeted(models, n, cfg.pilot_n, &u.oracle, &u.seeds, derive_seed(gen_seed, arm), opts);
    });
    arms.emplace_back(mode == Classification::Manual ? "Gated-conv VAE with manual classification"
                                                     : "Gated-conv VAE with unsupervised clustering",
                      score(arm, g.candidates));

    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < g.categories.size(); ++i) {
      const auto& c = g.categories[i];
      auto cells = c.pilot ? report_cells(c.name, *c.pilot, 2)
                           : std::vector<std::string>{c.name, "-", "-", "-", "-", "-"};
      cells.insert(cells.begin() + 1, grouped(categories[i].second.size()));
      cells.push_back(grouped(c.draws));
      rows.push_back(std::move(cells));
    }
    details += "Per-category pilot (" + arm + (cluster_note.empty() ? "" : ", " + cluster_note) + ", " +
               grouped(cfg.pilot_n) + " draws each)\n";
    details += table({"Category", "Seeds", "N_candidate", "N_hit", "N_new", "r_hit", "r_gen", "Draws"}, rows);
    details += std::string("Draws split ") + (g.even_split ? "evenly (no pilot hits)" : "by pilot r_gen") + "\n\n";
    split_kv += allocation_kv(g, "bench." + arm + ".");
  }
  result.artifacts.add("train_log.csv", log);

  std::vector<std::vector<std::string>> rows;
  std::string kv = "bench.universe=" + std::to_string(u.universe.size()) + "\n" +
                   "bench.seeds=" + std::to_string(u.seeds.size()) + "\n" + "bench.n=" + std::to_string(n) + "\n";
  const std::vector<std::string> keys = {"random", "unclassified", "manual", "cluster"};
  for (std::size_t i = 0; i < arms.size(); ++i) {
    rows.push_back(report_cells(arms[i].first, arms[i].second, 3));
    kv += evalkit::format_key_values(arms[i].second, "bench." + keys[i] + ".");
  }
  std::string report = "Synthetic universe of " + grouped(u.universe.size()) + " active addresses, " +
                       grouped(u.seeds.size()) + " seeds, N = " + grouped(n) + " draws per arm\n\n";
  report += table(kReportHeader, rows) + "\n" + details + kv + split_kv;
  result.artifacts.add("bench_report.txt", report);
  result.summary = "unclassified r_gen=" + arms[1].second.r_gen().percent(3) + "%";
  return result;
}

}  // namespace

KeyValues parse_config_text(std::string_view text, const fs::path& base_dir) {
  KeyValues kv;
  parse_into(kv, text, base_dir, "<config>", 0);
  return kv;
}

KeyValues load_config(const fs::path& path) {
  KeyValues kv;
  parse_into(kv, read_file(path), path.parent_path(), path.string(), 0);
  return kv;
}

PipelineConfig parse_pipeline_config(const KeyValues& kv) {
  PipelineConfig c;
  Reader r(kv);
  r.path("seeds", c.seeds);
  r.path("model", c.model);
  r.path("candidates", c.candidates);
  r.path("oracle", c.oracle);
  r.path("out", c.out);
  r.integer("rng_seed", c.rng_seed);
  r.integer<std::size_t>("workers", c.workers, 1);
  r.choice("classification", c.classification,
           {{"none", Classification::None}, {"manual", Classification::Manual}, {"cluster", Classification::Cluster}});

  if (const auto* k = r.raw("cluster.k"); k && *k != "auto") r.integer<std::size_t>("cluster.k", c.cluster.k, 1);
  r.integer<std::size_t>("cluster.k_max", c.cluster.k_max, 2);
  r.integer<std::size_t>("cluster.min_group_size", c.cluster.min_group_size, 1);
  r.integer<std::size_t>("cluster.prefix_nybbles", c.cluster.prefix_nybbles, 1);
  r.integer<std::size_t>("cluster.restarts", c.cluster.restarts, 1);
  r.integer<std::size_t>("cluster.a", c.cluster.a, 1);
  r.integer<std::size_t>("cluster.b", c.cluster.b, 1);
  if (c.cluster.prefix_nybbles > 31) throw ConfigError("cluster.prefix_nybbles must be at most 31");
  if (c.cluster.a > c.cluster.b || c.cluster.b > addr6::kNybbles)
    throw ConfigError("cluster.a and cluster.b must satisfy 1 <= a <= b <= 32");

  r.integer<std::size_t>("train.epochs", c.train.epochs, 1);
  r.integer<std::size_t>("train.batch_size", c.train.batch_size, 1);
  r.real("train.learning_rate", c.train.learning_rate);
  r.integer<std::size_t>("train.patience", c.train.patience);
  r.choice("train.category_schedule", c.category_schedule,
           {{"steps", CategorySchedule::Steps}, {"epochs", CategorySchedule::Epochs}});
  r.choice("train.reconstruction", c.train.reconstruction,
           {{"binary", vae::ReconstructionLoss::Binary}, {"categorical", vae::ReconstructionLoss::Categorical}});
  r.integer<std::size_t>("train.channels", c.train.shape.channels, 1);
  r.integer<std::size_t>("train.latent", c.train.shape.latent, 1);

  r.integer<std::size_t>("generate.n", c.generate_n, 1);
  r.integer<std::size_t>("generate.pilot", c.pilot_n, 1);
  r.choice("generate.decoding", c.decoding, {{"argmax", vae::Decoding::Argmax}, {"sample", vae::Decoding::Sample}});
  r.boolean("generate.exclude_seeds", c.exclude_seeds);
  r.boolean("generate.budget", c.budget);

  if (const auto* v = r.raw("evaluate.n_sampled"); v && *v != "auto") {
    std::size_t n = 0;
    r.integer<std::size_t>("evaluate.n_sampled", n, 1);
    c.n_sampled = n;
  }
  r.boolean("evaluate.exclude_seeds", c.evaluate_exclude_seeds);

  auto& u = c.universe;
  r.integer<std::size_t>("universe.prefixes_per_scheme", u.prefixes_per_scheme, 1);
  r.integer<std::size_t>("universe.fixed_subnets", u.fixed_subnets, 1);
  r.integer<std::size_t>("universe.fixed_hosts", u.fixed_hosts, 1);
  r.integer<std::size_t>("universe.low64_subnets", u.low64_subnets, 1);
  r.integer<std::size_t>("universe.low64_inner", u.low64_inner, 1);
  r.integer<std::size_t>("universe.low64_hosts", u.low64_hosts, 1);
  r.integer<std::size_t>("universe.eui_subnets", u.eui_subnets, 1);
  r.integer<std::size_t>("universe.eui_macs", u.eui_macs, 1);
  r.integer<std::size_t>("universe.privacy_subnets", u.privacy_subnets, 1);
  r.integer<std::size_t>("universe.privacy_hosts", u.privacy_hosts, 1);
  r.integer<std::size_t>("universe.seed_sample", u.seed_sample, 1);

  r.reject_unknown();
  return c;
}

std::map<std::string, std::string> PipelineConfig::snapshot() const {
  std::map<std::string, std::string> s;
  s["seeds"] = seeds.string();
  s["model"] = model.string();
  s["candidates"] = candidates.string();
  s["oracle"] = oracle.string();
  s["rng_seed"] = std::to_string(rng_seed);
  s["workers"] = std::to_string(workers);
  s["classification"] = std::string(classification_name(classification));
  s["cluster.k"] = cluster.k == 0 ? "auto" : std::to_string(cluster.k);
  s["cluster.k_max"] = std::to_string(cluster.k_max);
  s["cluster.min_group_size"] = std::to_string(cluster.min_group_size);
  s["cluster.prefix_nybbles"] = std::to_string(cluster.prefix_nybbles);
  s["cluster.restarts"] = std::to_string(cluster.restarts);
  s["cluster.a"] = std::to_string(cluster.a);
  s["cluster.b"] = std::to_string(cluster.b);
  s["train.epochs"] = std::to_string(train.epochs);
  s["train.batch_size"] = std::to_string(train.batch_size);
  s["train.learning_rate"] = fixed(train.learning_rate, 9);
  s["train.patience"] = std::to_string(train.patience);
  s["train.category_schedule"] = category_schedule == CategorySchedule::Steps ? "steps" : "epochs";
  s["train.reconstruction"] = train.reconstruction == vae::ReconstructionLoss::Binary ? "binary" : "categorical";
  s["train.channels"] = std::to_string(train.shape.channels);
  s["train.latent"] = std::to_string(train.shape.latent);
  s["generate.n"] = std::to_string(generate_n);
  s["generate.pilot"] = std::to_string(pilot_n);
  s["generate.decoding"] = decoding == vae::Decoding::Argmax ? "argmax" : "sample";
  s["generate.exclude_seeds"] = exclude_seeds ? "true" : "false";
  s["generate.budget"] = budget ? "true" : "false";
  s["evaluate.n_sampled"] = n_sampled ? std::to_string(*n_sampled) : "auto";
  s["evaluate.exclude_seeds"] = evaluate_exclude_seeds ? "true" : "false";
  s["universe.prefixes_per_scheme"] = std::to_string(universe.prefixes_per_scheme);
  s["universe.fixed_subnets"] = std::to_string(universe.fixed_subnets);
  s["universe.fixed_hosts"] = std::to_string(universe.fixed_hosts);
  s["universe.low64_subnets"] = std::to_string(universe.low64_subnets);
  s["universe.low64_inner"] = std::to_string(universe.low64_inner);
  s["universe.low64_hosts"] = std::to_string(universe.low64_hosts);
  s["universe.eui_subnets"] = std::to_string(universe.eui_subnets);
  s["universe.eui_macs"] = std::to_string(universe.eui_macs);
  s["universe.privacy_subnets"] = std::to_string(universe.privacy_subnets);
  s["universe.privacy_hosts"] = std::to_string(universe.privacy_hosts);
  s["universe.seed_sample"] = std::to_string(universe.seed_sample);
  return s;
}

std::optional<Command> parse_command(std::string_view name) {
  for (auto c : {Command::Classify, Command::Cluster, Command::Train, Command::Generate, Command::Evaluate,
                 Command::Bench})
    if (command_name(c) == name) return c;
  return std::nullopt;
}

std::string_view command_name(Command c) noexcept {
  switch (c) {
    case Command::Classify: return "classify";
    case Command::Cluster: return "cluster";
    case Command::Train: return "train";
    case Command::Generate: return "generate";
    case Command::Evaluate: return "evaluate";
    case Command::Bench: return "bench";
  }
  return "";
}

const std::string* Artifacts::find(std::string_view name) const {
  for (const auto& [n, bytes] : files)
    if (n == name) return &bytes;
  return nullptr;
}

RunResult run(Command command, const PipelineConfig& cfg) {
  switch (command) {
    case Command::Classify: return cmd_classify(cfg);
    case Command::Cluster: return cmd_cluster(cfg);
    case Command::Train: return cmd_train(cfg);
    case Command::Generate: return cmd_generate(cfg);
    case Command::Evaluate: return cmd_evaluate(cfg);
    case Command::Bench: return cmd_bench(cfg);
  }
  throw InvalidArgument("unknown command");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::string manifest_text(Command command, const PipelineConfig& cfg, const Artifacts& artifacts) {
  std::string out = "version=" + std::string(kVersion) + "\n";
  out += "command=" + std::string(command_name(command)) + "\n";
  for (const auto& [k, v] : cfg.snapshot()) out += "config." + k + "=" + v + "\n";
  for (const auto& [name, bytes] : artifacts.files)
    out += "artifact." + name + "=sha256:" + sha256_hex(bytes) + " bytes=" + std::to_string(bytes.size()) + "\n";
  return out;
}

void commit(const fs::path& out_dir, Command command, const PipelineConfig& cfg, const RunResult& result) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::string timings;
  for (const auto& [stage, seconds] : result.timings) timings += stage + "=" + fixed(seconds, 3) + "\n";
  std::vector<std::pair<std::string, std::string>> files = result.artifacts.files;
  files.emplace_back("manifest.txt", manifest_text(command, cfg, result.artifacts));
  files.emplace_back("timings.txt", timings);

  // stage everything first so a failure leaves the directory untouched
  std::vector<std::pair<fs::path, fs::path>> staged;
  auto discard = [&] {
    for (const auto& [tmp, dest] : staged) fs::remove(tmp, ec);
  };
  for (const auto& [name, bytes] : files) {
    const fs::path dest = out_dir / name;
    const fs::path tmp = out_dir / ("." + name + ".tmp");
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (out) staged.emplace_back(tmp, dest);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) {
      discard();
      throw IoError("cannot write " + tmp.string());
    }
  }
  for (const auto& [tmp, dest] : staged) {
    fs::rename(tmp, dest, ec);
    if (ec) {
      discard();
      throw IoError("cannot rename into " + dest.string() + ": " + ec.message());
    }
  }
}

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const CorruptModel*>(&e) || dynamic_cast<const VersionMismatch*>(&e)) return kExitModel;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const Error*>(&e)) return kExitConfig;
  return kExitFailure;
}

BudgetedGeneration generate_budgeted(const std::vector<CategoryModel>& models, std::size_t n_total,
                                     std::size_t pilot_n, const evalkit::ActivityOracle* oracle,
                                     const SeedSet* seeds, std::uint64_t rng_seed,
                                     const vae::GenerateOptions& options) {
  if (models.empty()) throw InvalidArgument("no models to generate from");
  BudgetedGeneration out;
  std::vector<evalkit::CategoryRate> rates;
  const bool piloted = oracle && seeds && models.size() > 1;
  for (const auto& m : models) {
    CategoryOutcome c{m.name, std::nullopt, 0};
    if (piloted) {
      const auto pilot = vae::generate(m.params, pilot_n, derive_seed(derive_seed(rng_seed, "pilot"), m.name), options);
      c.pilot = evalkit::evaluate(pilot, *seeds, *oracle, pilot_n);
      rates.push_back({m.name, c.pilot->r_gen()});
    } else {
      rates.push_back({m.name, {1, 1}});
    }
    out.categories.push_back(std::move(c));
  }
  out.even_split = !piloted || std::all_of(rates.begin(), rates.end(), [](const auto& r) { return r.r_gen.num == 0; });
  if (out.even_split)
    for (auto& r : rates) r.r_gen = {1, 1};
  const auto alloc = evalkit::allocate_budget(rates, n_total);

  SeedSet merged;
  for (std::size_t i = 0; i < models.size(); ++i) {
    out.categories[i].draws = alloc[i].draws;
    if (alloc[i].draws == 0) continue;
    const auto seed = models.size() == 1 ? rng_seed : derive_seed(rng_seed, models[i].name);
    for (const auto& s : vae::generate(models[i].params, alloc[i].draws, seed, options)) merged.insert(s);
  }
  out.candidates = merged.members();
  return out;
}

}  // namespace v6forge::pipeline
