#pragma once

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "csapo/errors.hpp"
#include "csapo/game.hpp"
#include "csapo/hindsight.hpp"
#include "csapo/lagrangian.hpp"
#include "csapo/metrics.hpp"

#ifndef CSAPO_VERSION
#define CSAPO_VERSION "0.1.0"
#endif

namespace csapo {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = CSAPO_VERSION;
inline constexpr const char* kOutputRootEnv = "CSAPO_OUTPUT_ROOT";

inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string header_line(const std::string& config_hash) {
  return std::string("csapo ") + kVersion + " config=" + config_hash;
}

inline std::string default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? env : "csapo-out";
}

// -- Config text -------------------------------------------------------------------
//
// A TOML subset: `[table]` headers, `key = value` pairs, `#` comments.
// Values are double-quoted strings, integers, floats, true/false, or
// single-line arrays of those.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct TomlCursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ContractViolationError("config line " + std::to_string(line) + ": " + what);
  }
  void skip_space() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool done() {
    skip_space();
    return pos >= text.size() || text[pos] == '#';
  }
};

inline nlohmann::json parse_toml_value(TomlCursor& c) {
  c.skip_space();
  if (c.pos >= c.text.size()) c.fail("missing value");
  const char ch = c.text[c.pos];
  if (ch == '"') {
    std::string out;
    ++c.pos;
    while (true) {
      if (c.pos >= c.text.size()) c.fail("unterminated string");
      char d = c.text[c.pos++];
      if (d == '"') break;
      if (d == '\\') {
        if (c.pos >= c.text.size()) c.fail("dangling escape");
        const char e = c.text[c.pos++];
        d = e == 'n' ? '\n' : e == 't' ? '\t' : e;
      }
      out.push_back(d);
    }
    return out;
  }
  if (ch == '[') {
    ++c.pos;
    nlohmann::json arr = nlohmann::json::array();
    c.skip_space();
    if (c.pos < c.text.size() && c.text[c.pos] == ']') {
      ++c.pos;
      return arr;
    }
    while (true) {
      arr.push_back(parse_toml_value(c));
      c.skip_space();
      if (c.pos >= c.text.size()) c.fail("unterminated array");
      if (c.text[c.pos] == ',') {
        ++c.pos;
        c.skip_space();
        if (c.pos < c.text.size() && c.text[c.pos] == ']') {
          ++c.pos;
          return arr;
        }
        continue;
      }
      if (c.text[c.pos] == ']') {
        ++c.pos;
        return arr;
      }
      c.fail("expected ',' or ']' in array");
    }
  }
  std::size_t end = c.pos;
  while (end < c.text.size() && c.text[end] != ',' && c.text[end] != ']' &&
         c.text[end] != '#' && c.text[end] != ' ' && c.text[end] != '\t') {
    ++end;
  }
  std::string token(c.text.substr(c.pos, end - c.pos));
  c.pos = end;
  if (token == "true") return true;
  if (token == "false") return false;
  std::string digits;
  for (char d : token) {
    if (d != '_') digits.push_back(d);
  }
  if (digits.empty()) c.fail("missing value");
  const bool integral = digits.find_first_of(".eEinn") == std::string::npos;
  char* stop = nullptr;
  if (integral) {
    errno = 0;
    const long long v = std::strtoll(digits.c_str(), &stop, 10);
    if (*stop == '\0' && errno == 0) return v;
  }
  const double v = std::strtod(digits.c_str(), &stop);
  if (*stop != '\0') c.fail("cannot parse value '" + token + "'");
  return v;
}

}  // namespace detail

inline nlohmann::json parse_config_text(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    detail::TomlCursor c{raw, 0, line_no};
    if (c.done()) continue;
    if (raw[c.pos] == '[') {
      const auto close = raw.find(']', c.pos);
      if (close == std::string::npos) c.fail("unterminated table header");
      const std::string name = detail::trim(std::string_view(raw).substr(c.pos + 1, close - c.pos - 1));
      if (name.empty()) c.fail("empty table name");
      c.pos = close + 1;
      if (!c.done()) c.fail("trailing text after table header");
      if (root.contains(name)) c.fail("table [" + name + "] defined twice");
      root[name] = nlohmann::json::object();
      table = &root[name];
      continue;
    }
    const auto eq = raw.find('=', c.pos);
    if (eq == std::string::npos) c.fail("expected key = value");
    const std::string key = detail::trim(std::string_view(raw).substr(c.pos, eq - c.pos));
    if (key.empty()) c.fail("empty key");
    if (table->contains(key)) c.fail("duplicate key '" + key + "'");
    c.pos = eq + 1;
    (*table)[key] = detail::parse_toml_value(c);
    if (!c.done()) c.fail("trailing text after value");
  }
  return root;
}

// -- Experiment configuration ----------------------------------------------------------

struct ExperimentConfig {
  GameSpec game_spec;
  std::optional<std::string> game_path;
  std::vector<std::int64_t> episodes{1024};
  ConstraintMode mode = ConstraintMode::kCoupled;
  std::optional<double> V;
  std::optional<double> eta;
  std::optional<double> theta;
  double delta = 0.1;
  EpochTrigger trigger = EpochTrigger::kLiteral;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;
  std::int64_t snapshot_every = 0;
  double comparator_tol = 1e-3;
  bool trace_solver = false;
  int jobs = 1;

  void check() const {
    if (episodes.empty()) throw ContractViolationError("config needs at least one T");
    for (auto T : episodes) {
      if (T < 1) throw ContractViolationError("T must be >= 1");
    }
    if (seeds.empty()) throw ContractViolationError("config needs at least one seed");
    if (!(delta > 0.0 && delta < 1.0)) throw ContractViolationError("delta must lie in (0, 1)");
    if (snapshot_every < 0) throw ContractViolationError("snapshot interval must be >= 0");
    if (jobs < 1) throw ContractViolationError("jobs must be >= 1");
  }
};

namespace detail {

template <typename T>
std::vector<T> scalar_or_list(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

inline void reject_unknown(const nlohmann::json& table, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (const auto& [key, _] : table.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ContractViolationError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    detail::reject_unknown(j, {"game", "run", "params", "evaluate"}, "config");
    if (j.contains("game")) {
      const auto& g = j.at("game");
      detail::reject_unknown(g, {"path", "min_layers", "max_layers", "min_actions", "max_actions",
                                 "budget", "margin", "seed", "noise_width", "side_budgets",
                                 "reward_mode", "reward_tables", "adversarial_weight"},
                             "[game]");
      auto& s = cfg.game_spec;
      if (g.contains("path")) cfg.game_path = g.at("path").get<std::string>();
      s.min_layers = g.value("min_layers", s.min_layers);
      s.max_layers = g.value("max_layers", s.max_layers);
      s.min_actions = g.value("min_actions", s.min_actions);
      s.max_actions = g.value("max_actions", s.max_actions);
      s.budget = g.value("budget", s.budget);
      s.margin = g.value("margin", s.margin);
      s.seed = g.value("seed", s.seed);
      s.noise_width = g.value("noise_width", s.noise_width);
      if (g.contains("side_budgets")) {
        const auto sb = g.at("side_budgets").get<std::vector<double>>();
        if (sb.size() != 2) throw ContractViolationError("side_budgets needs two values");
        s.side_budgets = SideBudgets{sb[0], sb[1]};
      }
      if (g.contains("reward_mode")) {
        const auto m = g.at("reward_mode").get<std::string>();
        if (m == "fixed-sequence") {
          s.reward_mode = RewardMode::kFixedSequence;
        } else if (m == "adversarial") {
          s.reward_mode = RewardMode::kAdversarial;
        } else {
          throw ContractViolationError("unknown reward_mode '" + m + "'");
        }
      }
      s.reward_tables = g.value("reward_tables", s.reward_tables);
      s.adversarial_weight = g.value("adversarial_weight", s.adversarial_weight);
    }
    if (j.contains("run")) {
      const auto& r = j.at("run");
      detail::reject_unknown(r, {"T", "mode", "seeds", "out", "snapshot_every", "trace_solver",
                                 "jobs", "trigger"},
                             "[run]");
      if (r.contains("T")) cfg.episodes = detail::scalar_or_list<std::int64_t>(r.at("T"));
      if (r.contains("mode")) cfg.mode = constraint_mode_from_string(r.at("mode").get<std::string>());
      if (r.contains("seeds")) cfg.seeds = detail::scalar_or_list<std::uint64_t>(r.at("seeds"));
      cfg.out_dir = r.value("out", cfg.out_dir);
      cfg.snapshot_every = r.value("snapshot_every", cfg.snapshot_every);
      cfg.trace_solver = r.value("trace_solver", cfg.trace_solver);
      cfg.jobs = r.value("jobs", cfg.jobs);
      if (r.contains("trigger")) {
        const auto t = r.at("trigger").get<std::string>();
        if (t == "literal") {
          cfg.trigger = EpochTrigger::kLiteral;
        } else if (t == "require-visit") {
          cfg.trigger = EpochTrigger::kRequireVisit;
        } else {
          throw ContractViolationError("unknown trigger '" + t + "'");
        }
      }
    }
    if (j.contains("params")) {
      const auto& p = j.at("params");
      detail::reject_unknown(p, {"V", "eta", "theta", "delta"}, "[params]");
      if (p.contains("V")) cfg.V = p.at("V").get<double>();
      if (p.contains("eta")) cfg.eta = p.at("eta").get<double>();
      if (p.contains("theta")) cfg.theta = p.at("theta").get<double>();
      cfg.delta = p.value("delta", cfg.delta);
    }
    if (j.contains("evaluate")) {
      const auto& e = j.at("evaluate");
      detail::reject_unknown(e, {"comparator_tol"}, "[evaluate]");
      cfg.comparator_tol = e.value("comparator_tol", cfg.comparator_tol);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolationError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config_file(const fs::path& path) {
  return config_from_json(parse_config_text(read_text_file(path)));
}

inline LayeredGame load_game_file(const fs::path& path) {
  if (!fs::exists(path)) throw ContractViolationError("game file '" + path.string() + "' not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ShapeMismatchError("game file '" + path.string() + "': " + e.what());
  }
  return game_from_json(j);
}

inline LayeredGame resolve_game(const ExperimentConfig& cfg) {
  return cfg.game_path ? load_game_file(*cfg.game_path) : generate_random_game(cfg.game_spec);
}

inline LearnerParams resolve_params(const ExperimentConfig& cfg, int horizon,
                                    std::int64_t episodes) {
  LearnerParams p = theorem_defaults(horizon, episodes, cfg.delta);
  if (cfg.V) p.V = *cfg.V;
  if (cfg.eta) p.eta = *cfg.eta;
  if (cfg.theta) p.theta = *cfg.theta;
  p.trigger = cfg.trigger;
  p.check();
  return p;
}

// Hash of everything that determines one run's artifacts.
inline std::string run_hash(const LayeredGame& game, const LearnerParams& p, ConstraintMode mode,
                            std::int64_t episodes, std::uint64_t seed,
                            std::int64_t snapshot_every, bool trace_solver) {
  std::ostringstream ss;
  ss << kVersion << '|' << game_to_json(game).dump() << "|T=" << episodes
     << "|mode=" << to_string(mode) << "|V=" << format_double(p.V)
     << "|eta=" << format_double(p.eta) << "|theta=" << format_double(p.theta)
     << "|delta=" << format_double(p.delta)
     << "|trigger=" << (p.trigger == EpochTrigger::kLiteral ? "literal" : "require-visit")
     << "|seed=" << seed << "|snapshot=" << snapshot_every << "|trace=" << trace_solver;
  return hex64(fnv1a(ss.str()));
}

// -- Episode archive ---------------------------------------------------------------------
//
// One CSV row per episode holding everything the metrics pass needs:
// multipliers, epochs, both trajectories, both policies and (optionally)
// the q-hat marginals.

namespace detail {

inline void append_table(std::ostream& os, const StateActionTable& t) {
  for (int l = 0; l < t.space().horizon(); ++l) {
    for (double v : t.layer(l)) os << ',' << format_double(v);
  }
}

inline void append_table_names(std::ostream& os, const LayeredStateSpace& s, const char* prefix) {
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) os << ',' << prefix << '_' << l << '_' << x << '_' << a;
    }
  }
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ShapeMismatchError("archive: bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline void write_archive(std::ostream& os, const EpisodeLog& log, const LayeredGame& game,
                          const std::string& header) {
  const auto& xs = game.min_player.space;
  const auto& ys = game.max_player.space;
  const int L = xs.horizon();
  const bool estimates = log.has_estimates();
  os << "# " << header << '\n';
  os << "# mode=" << to_string(log.mode) << " seed=" << log.seed << " episodes=" << log.rows.size()
     << " estimates=" << (estimates ? 1 : 0) << '\n';
  os << "t,lambda1,lambda2,epoch1,epoch2";
  for (int p = 1; p <= 2; ++p) {
    for (int l = 0; l <= L; ++l) os << ",x" << p << '_' << l;
    for (int l = 0; l < L; ++l) os << ",a" << p << '_' << l;
  }
  detail::append_table_names(os, xs, "pi1");
  detail::append_table_names(os, ys, "pi2");
  if (estimates) {
    detail::append_table_names(os, xs, "qhat1");
    detail::append_table_names(os, ys, "qhat2");
  }
  os << '\n';
  for (const auto& r : log.rows) {
    os << r.t << ',' << format_double(r.lambda1) << ',' << format_double(r.lambda2) << ','
       << r.epoch1 << ',' << r.epoch2;
    for (const Trajectory* tr : {&r.trajectory1, &r.trajectory2}) {
      for (int x : tr->states) os << ',' << x;
      for (int a : tr->actions) os << ',' << a;
    }
    detail::append_table(os, r.pi1);
    detail::append_table(os, r.pi2);
    if (estimates) {
      detail::append_table(os, *r.q1_hat);
      detail::append_table(os, *r.q2_hat);
    }
    os << '\n';
  }
}

inline EpisodeLog read_archive(std::istream& is, const LayeredGame& game) {
  const auto& xs = game.min_player.space;
  const auto& ys = game.max_player.space;
  const int L = xs.horizon();
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) {
    throw ShapeMismatchError("archive: missing header line");
  }
  if (!std::getline(is, line) || line.rfind("# mode=", 0) != 0) {
    throw ShapeMismatchError("archive: missing metadata line");
  }
  EpisodeLog log;
  bool estimates = false;
  {
    std::istringstream meta(line.substr(2));
    std::string kv;
    while (meta >> kv) {
      const auto eq = kv.find('=');
      const auto k = kv.substr(0, eq);
      const auto v = kv.substr(eq + 1);
      if (k == "mode") log.mode = constraint_mode_from_string(v);
      if (k == "seed") log.seed = std::stoull(v);
      if (k == "estimates") estimates = v == "1";
    }
  }
  std::getline(is, line);  // column names
  const std::size_t n1 = static_cast<std::size_t>(xs.num_pairs());
  const std::size_t n2 = static_cast<std::size_t>(ys.num_pairs());
  const std::size_t expected =
      5 + 2 * static_cast<std::size_t>(2 * L + 1) + (n1 + n2) * (estimates ? 2 : 1);
  auto fill = [](StateActionTable& t, const std::vector<std::string>& f, std::size_t& i) {
    for (int l = 0; l < t.space().horizon(); ++l) {
      for (double& v : t.layer(l)) v = detail::parse_double(f[i++]);
    }
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != expected) throw ShapeMismatchError("archive: row has wrong column count");
    EpisodeRecord r;
    std::size_t i = 0;
    r.t = std::stoll(f[i++]);
    r.lambda1 = detail::parse_double(f[i++]);
    r.lambda2 = detail::parse_double(f[i++]);
    r.epoch1 = std::stoi(f[i++]);
    r.epoch2 = std::stoi(f[i++]);
    for (Trajectory* tr : {&r.trajectory1, &r.trajectory2}) {
      for (int l = 0; l <= L; ++l) tr->states.push_back(std::stoi(f[i++]));
      for (int l = 0; l < L; ++l) tr->actions.push_back(std::stoi(f[i++]));
    }
    r.pi1 = Policy(xs);
    r.pi2 = Policy(ys);
    fill(r.pi1, f, i);
    fill(r.pi2, f, i);
    if (estimates) {
      r.q1_hat = StateActionTable(xs);
      r.q2_hat = StateActionTable(ys);
      fill(*r.q1_hat, f, i);
      fill(*r.q2_hat, f, i);
    }
    log.rows.push_back(std::move(r));
  }
  return log;
}

// -- Commands ----------------------------------------------------------------------------

struct RunPaths {
  fs::path run_csv;
  fs::path archive;
  fs::path metrics;
  fs::path snapshots;
};

inline RunPaths run_paths(const fs::path& out, std::int64_t episodes, std::uint64_t seed) {
  const std::string tag = "T" + std::to_string(episodes) + "_seed" + std::to_string(seed);
  return {out / ("run_" + tag + ".csv"), out / ("archive_" + tag + ".csv"),
          out / ("metrics_" + tag + ".csv"), out / "snapshots" / tag};
}

// Writes through a temporary file so a present output is always complete.
template <typename F>
void write_atomically(const fs::path& path, F&& body) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ContractViolationError("cannot write '" + tmp.string() + "'");
    body(os);
    if (!os) throw ContractViolationError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

inline WitnessCheck cmd_generate(const GameSpec& spec, const fs::path& out) {
  const LayeredGame game = generate_random_game(spec);
  const WitnessCheck check = check_witness(game);
  auto j = game_to_json(game);
  const std::string hash = hex64(fnv1a(j.dump()));
  j["version"] = kVersion;
  j["config_hash"] = hash;
  write_atomically(out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return check;
}

struct RunTask {
  std::int64_t episodes = 0;
  std::uint64_t seed = 0;
};

inline std::vector<RunTask> run_tasks(const ExperimentConfig& cfg) {
  std::vector<RunTask> tasks;
  for (auto T : cfg.episodes) {
    for (auto s : cfg.seeds) tasks.push_back({T, s});
  }
  return tasks;
}

// One (T, seed) run: run CSV, archive and optional occupancy snapshots.
inline RunPaths execute_run(const ExperimentConfig& cfg, const LayeredGame& game,
                            const fs::path& out, const RunTask& task) {
  const auto params = resolve_params(cfg, game.horizon(), task.episodes);
  const auto paths = run_paths(out, task.episodes, task.seed);
  const auto hash = run_hash(game, params, cfg.mode, task.episodes, task.seed,
                             cfg.snapshot_every, cfg.trace_solver);
  RunOptions opt;
  opt.mode = cfg.mode;
  opt.keep_estimates = cfg.snapshot_every > 0;
  if (cfg.snapshot_every > 0) {
    opt.on_episode = [&](const EpisodeRecord& r, const OccupancyMeasure& q1,
                         const OccupancyMeasure& q2) {
      if (r.t % cfg.snapshot_every != 0) return;
      const std::string stem = "t" + std::to_string(r.t);
      write_atomically(paths.snapshots / ("q1_" + stem + ".csv"), [&](std::ostream& os) {
        os << "# " << header_line(hash) << '\n';
        write_occupancy_csv(os, q1);
      });
      write_atomically(paths.snapshots / ("q2_" + stem + ".csv"), [&](std::ostream& os) {
        os << "# " << header_line(hash) << '\n';
        write_occupancy_csv(os, q2);
      });
    };
  }
  const EpisodeLog log = run_ucb_csapo(game, params, task.episodes, task.seed, opt);
  write_atomically(paths.archive,
                   [&](std::ostream& os) { write_archive(os, log, game, header_line(hash)); });
  write_atomically(paths.run_csv, [&](std::ostream& os) {
    write_run_csv(os, log, header_line(hash), cfg.trace_solver);
  });
  return paths;
}

inline fs::path output_dir(const ExperimentConfig& cfg) {
  return cfg.out_dir.empty() ? fs::path(default_output_root()) : fs::path(cfg.out_dir);
}

// Runs every (T, seed) pair, `cfg.jobs` at a time. With `skip_existing`,
// pairs whose run CSV already exists are left alone. Returns the run CSV
// paths in task order.
inline std::vector<fs::path> cmd_run(const ExperimentConfig& cfg, bool skip_existing = false) {
  cfg.check();
  const LayeredGame game = resolve_game(cfg);
  const fs::path out = output_dir(cfg);
  fs::create_directories(out);
  const fs::path game_file = out / "game.json";
  const std::string game_dump = game_to_json(game).dump();
  if (fs::exists(game_file)) {
    if (game_to_json(load_game_file(game_file)).dump() != game_dump) {
      throw ContractViolationError("'" + game_file.string() +
                                   "' holds a different game; use a fresh output directory");
    }
  } else {
    auto j = game_to_json(game);
    j["version"] = kVersion;
    j["config_hash"] = hex64(fnv1a(game_dump));
    write_atomically(game_file, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }
  const auto tasks = run_tasks(cfg);
  std::vector<fs::path> produced(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      {
        std::lock_guard<std::mutex> lock(err_mu);
        if (first_error) return;
      }
      try {
        const auto paths = run_paths(out, tasks[i].episodes, tasks[i].seed);
        if (skip_existing && fs::exists(paths.run_csv) && fs::exists(paths.archive)) {
          produced[i] = paths.run_csv;
          continue;
        }
        produced[i] = execute_run(cfg, game, out, tasks[i]).run_csv;
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n = std::min<int>(cfg.jobs, static_cast<int>(tasks.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return produced;
}

// Episode-averaged reward over t = 1..T; the table itself when stationary.
inline RewardTable aggregate_reward(const LayeredGame& game, std::int64_t episodes) {
  if (game.reward.stationary()) return game.reward.tables.front();
  RewardTable sum(game.min_player.space, game.max_player.space, 0.0);
  for (std::int64_t t = 1; t <= episodes; ++t) {
    const auto r = game.reward.at(t);
    for (int l = 0; l < sum.min_space().horizon(); ++l) {
      auto& s = sum.layer(l);
      const auto& v = r.layer(l);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += v[i];
    }
  }
  for (int l = 0; l < sum.min_space().horizon(); ++l) {
    for (double& v : sum.layer(l)) v /= static_cast<double>(episodes);
  }
  return sum;
}

struct RunEvaluation {
  std::int64_t episodes = 0;
  std::uint64_t seed = 0;
  ConstraintMode mode = ConstraintMode::kCoupled;
  double regret = 0.0;
  double violation = 0.0;
  double violation_mean_variant = 0.0;
  double violation1 = 0.0;
  double violation2 = 0.0;
  double max_lambda = 0.0;
  std::optional<double> decomposition_residual;
};

// Metrics for one archived run; writes the metrics CSV next to it.
inline RunEvaluation evaluate_run(const LayeredGame& game, const EpisodeLog& log,
                                  const SaddleSolution& comparator, const fs::path& metrics_path,
                                  const std::string& header) {
  RunEvaluation ev;
  ev.episodes = static_cast<std::int64_t>(log.rows.size());
  ev.seed = log.seed;
  ev.mode = log.mode;
  const auto reg = regret(log, comparator, game);
  const auto vio = violation(log, game);
  std::optional<Decomposition> dec;
  if (log.has_estimates()) {
    dec = decomposition_diagnostics(log, comparator, game);
    ev.decomposition_residual = std::abs(reg.final_value() - dec->hat_regret.final_value() -
                                         dec->error1.final_value() - dec->error2.final_value());
  }
  ev.regret = reg.final_value();
  ev.violation = ViolationSeries::positive(vio.coupled.final_value());
  ev.violation_mean_variant = ViolationSeries::positive(vio.mean_variant.final_value());
  if (log.mode == ConstraintMode::kSide) {
    ev.violation1 = ViolationSeries::positive(vio.min_player.final_value());
    ev.violation2 = ViolationSeries::positive(vio.max_player.final_value());
  }
  for (const auto& r : log.rows) ev.max_lambda = std::max({ev.max_lambda, r.lambda1, r.lambda2});
  write_atomically(metrics_path, [&](std::ostream& os) {
    write_metrics_csv(os, log, game, reg, vio, dec ? &*dec : nullptr, header);
  });
  return ev;
}

// Evaluates every archive in `run_dir` against the comparator of
// `game_file` and writes summary.json. Slopes are fitted over distinct T
// when at least three are present.
inline nlohmann::json cmd_evaluate(const fs::path& run_dir, const fs::path& game_file,
                                   double comparator_tol = 1e-3) {
  if (!fs::is_directory(run_dir)) {
    throw ContractViolationError("run directory '" + run_dir.string() + "' not found");
  }
  const LayeredGame game = load_game_file(game_file);
  std::vector<fs::path> archives;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("archive_", 0) == 0 && e.path().extension() == ".csv") {
      archives.push_back(e.path());
    }
  }
  std::sort(archives.begin(), archives.end());
  if (archives.empty()) throw ContractViolationError("no run archives in '" + run_dir.string() + "'");

  std::map<std::pair<std::int64_t, int>, SaddleSolution> comparators;
  std::vector<RunEvaluation> evals;
  std::string digest = game_to_json(game).dump();
  for (const auto& path : archives) {
    std::ifstream in(path, std::ios::binary);
    const EpisodeLog log = read_archive(in, game);
    const auto T = static_cast<std::int64_t>(log.rows.size());
    const auto coupling =
        log.mode == ConstraintMode::kSide ? BudgetCoupling::kSide : BudgetCoupling::kCoupled;
    const auto key = std::make_pair(game.reward.stationary() ? 0 : T, static_cast<int>(coupling));
    if (!comparators.count(key)) {
      HindsightOptions ho;
      ho.tol = comparator_tol;
      ho.coupling = coupling;
      comparators.emplace(key, solve_hindsight(game, aggregate_reward(game, T), ho));
    }
    const auto& cmp = comparators.at(key);
    const std::string tag = path.filename().string().substr(std::string("archive_").size());
    const std::string header = header_line(hex64(fnv1a(read_text_file(path))));
    evals.push_back(evaluate_run(game, log, cmp, run_dir / ("metrics_" + tag), header));
    digest += "|" + path.filename().string();
  }

  nlohmann::json summary;
  summary["version"] = kVersion;
  summary["config_hash"] = hex64(fnv1a(digest));
  summary["runs"] = nlohmann::json::array();
  std::map<std::int64_t, std::vector<const RunEvaluation*>> by_T;
  for (const auto& e : evals) {
    nlohmann::json r{{"T", e.episodes},          {"seed", e.seed},
                     {"mode", to_string(e.mode)}, {"regret", e.regret},
                     {"violation", e.violation},  {"violation_mean_variant", e.violation_mean_variant},
                     {"max_lambda", e.max_lambda}};
    if (e.mode == ConstraintMode::kSide) {
      r["violation1"] = e.violation1;
      r["violation2"] = e.violation2;
    }
    if (e.decomposition_residual) r["decomposition_residual"] = *e.decomposition_residual;
    summary["runs"].push_back(std::move(r));
    by_T[e.episodes].push_back(&e);
  }
  std::vector<double> ts, reg, vio, vio1, vio2;
  summary["by_T"] = nlohmann::json::array();
  for (const auto& [T, list] : by_T) {
    double r = 0, v = 0, v1 = 0, v2 = 0, lam = 0;
    for (const auto* e : list) {
      r += e->regret;
      v += e->violation;
      v1 += e->violation1;
      v2 += e->violation2;
      lam = std::max(lam, e->max_lambda);
    }
    const double n = static_cast<double>(list.size());
    ts.push_back(static_cast<double>(T));
    reg.push_back(r / n);
    vio.push_back(v / n);
    vio1.push_back(v1 / n);
    vio2.push_back(v2 / n);
    summary["by_T"].push_back({{"T", T},
                               {"runs", list.size()},
                               {"mean_regret", r / n},
                               {"mean_violation", v / n},
                               {"mean_violation1", v1 / n},
                               {"mean_violation2", v2 / n},
                               {"max_lambda", lam}});
  }
  auto slope_json = [&](const std::vector<double>& values) -> nlohmann::json {
    if (ts.size() < 3) return nullptr;
    std::vector<double> mags(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) mags[i] = std::abs(values[i]);
    const auto fit = rate_fit(mags, ts);
    return {{"slope", fit.slope},
            {"intercept", fit.intercept},
            {"r_squared", fit.r_squared},
            {"slope_stderr", fit.slope_stderr},
            {"clamped", fit.clamped}};
  };
  summary["slopes"] = {{"regret", slope_json(reg)},
                       {"violation", slope_json(vio)},
                       {"violation1", slope_json(vio1)},
                       {"violation2", slope_json(vio2)}};
  summary["comparators"] = nlohmann::json::array();
  for (const auto& [key, cmp] : comparators) {
    summary["comparators"].push_back({{"T", key.first},
                                      {"coupling", key.second == 0 ? "coupled" : "side"},
                                      {"value", cmp.value},
                                      {"exploitability", cmp.exploitability},
                                      {"constraint_slack", cmp.constraint_slack},
                                      {"rounds", cmp.rounds}});
  }
  write_atomically(run_dir / "summary.json",
                   [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
  return summary;
}

// cmd_run with resumption, then cmd_evaluate over the output directory.
inline nlohmann::json cmd_sweep(const ExperimentConfig& cfg) {
  cmd_run(cfg, /*skip_existing=*/true);
  const fs::path out = output_dir(cfg);
  return cmd_evaluate(out, out / "game.json", cfg.comparator_tol);
}

}  // namespace csapo
