#include "pgs/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"

namespace pgs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!text.empty() && text.back() == sep) out.push_back("");
  return out;
}

// Shortest representation that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += f(xs[i]);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    throw InvalidArgument("config " + key + ": not a number: '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  long long x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw InvalidArgument("config " + key + ": not an integer: '" + v + "'");
  }
  return x;
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_integer(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config " + key + ": not a boolean: '" + v + "'");
}

std::string bstr(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;
};

#define PGS_INT(key, member)                                                              \
  {                                                                                       \
    key, Field {                                                                          \
      [](RunConfig& c, const std::string& v) { c.member = to_int(key, v); },              \
          [](const RunConfig& c) { return std::to_string(c.member); }                     \
    }                                                                                     \
  }
#define PGS_DOUBLE(key, member)                                                           \
  {                                                                                       \
    key, Field {                                                                          \
      [](RunConfig& c, const std::string& v) { c.member = to_double(key, v); },           \
          [](const RunConfig& c) { return fmt(c.member); }                                \
    }                                                                                     \
  }
#define PGS_BOOL(key, member)                                                             \
  {                                                                                       \
    key, Field {                                                                          \
      [](RunConfig& c, const std::string& v) { c.member = to_bool(key, v); },             \
          [](const RunConfig& c) { return bstr(c.member); }                               \
    }                                                                                     \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"task", Field{[](RunConfig& c, const std::string& v) { c.task = v; },
                     [](const RunConfig& c) { return c.task; }}},
      PGS_INT("dataset.pool_size", pool_size),
      PGS_DOUBLE("dataset.keep_percentile", keep_percentile),
      {"dataset.seed",
       Field{[](RunConfig& c, const std::string& v) {
               c.dataset_seed = static_cast<std::uint64_t>(to_integer("dataset.seed", v));
             },
             [](const RunConfig& c) { return std::to_string(c.dataset_seed); }}},
      {"dataset.path", Field{[](RunConfig& c, const std::string& v) { c.dataset_path = v; },
                             [](const RunConfig& c) { return c.dataset_path; }}},

      PGS_INT("surrogate.hidden_width", surrogate.hidden_width),
      PGS_INT("surrogate.hidden_layers", surrogate.hidden_layers),
      PGS_INT("surrogate.epochs", surrogate.epochs),
      PGS_INT("surrogate.batch_size", surrogate.batch_size),
      PGS_DOUBLE("surrogate.lr", surrogate.lr),

      {"trajectories.p", Field{[](RunConfig& c, const std::string& v) { c.top_p = parse_double_list(v); },
                               [](const RunConfig& c) {
                                 return join<double>(c.top_p, [](const double& x) { return fmt(x); });
                               }}},
      {"trajectories.m", Field{[](RunConfig& c, const std::string& v) { c.traj_counts = parse_int_list(v); },
                               [](const RunConfig& c) {
                                 return join<int>(c.traj_counts, [](const int& x) { return std::to_string(x); });
                               }}},
      PGS_INT("trajectories.T", traj_length),
      PGS_BOOL("trajectories.monotonic", monotonic),
      PGS_DOUBLE("trajectories.a_max", a_max),
      PGS_DOUBLE("trajectories.grad_eps", grad_eps),

      {"agent.method", Field{[](RunConfig& c, const std::string& v) {
                               c.methods.clear();
                               for (const auto& name : split(v, ',')) c.methods.push_back(parse_method(name));
                             },
                             [](const RunConfig& c) {
                               return join<Method>(c.methods, [](const Method& m) { return method_name(m); });
                             }}},
      PGS_INT("agent.epochs", agent.epochs),
      PGS_INT("agent.steps_per_epoch", agent.steps_per_epoch),
      PGS_INT("agent.batch_size", agent.batch_size),
      PGS_DOUBLE("agent.actor_lr", agent.actor_lr),
      PGS_DOUBLE("agent.critic_lr", agent.critic_lr),
      PGS_DOUBLE("agent.temperature_lr", agent.temperature_lr),
      PGS_DOUBLE("agent.gamma", agent.gamma),
      PGS_DOUBLE("agent.polyak", agent.polyak),
      PGS_DOUBLE("agent.w_cons", agent.w_cons),
      PGS_INT("agent.sampled_actions", agent.sampled_actions),
      PGS_INT("agent.checkpoint_interval", agent.checkpoint_interval),
      PGS_INT("agent.hidden_width", agent.hidden_width),
      PGS_INT("agent.hidden_layers", agent.hidden_layers),
      PGS_DOUBLE("agent.initial_temperature", agent.initial_temperature),
      PGS_BOOL("agent.auto_temperature", agent.auto_temperature),
      PGS_BOOL("agent.backup_entropy", agent.backup_entropy),

      PGS_INT("search.N", num_starts),
      {"search.T_test", Field{[](RunConfig& c, const std::string& v) { c.test_lengths = parse_int_list(v); },
                              [](const RunConfig& c) {
                                return join<int>(c.test_lengths, [](const int& x) { return std::to_string(x); });
                              }}},
      PGS_DOUBLE("search.grad_step", grad_step),
      PGS_BOOL("search.deterministic", deterministic),
      PGS_BOOL("search.record_wall_time", record_wall_time),

      {"osel.p_grid", Field{[](RunConfig& c, const std::string& v) { c.grid.p_values = parse_double_list(v); },
                            [](const RunConfig& c) {
                              return join<double>(c.grid.p_values, [](const double& x) { return fmt(x); });
                            }}},
      PGS_INT("osel.max_epochs", grid.max_epochs),
      PGS_INT("osel.interval", grid.interval),
      PGS_INT("osel.k", grid.k),
      PGS_INT("osel.k_tie", grid.k_tie),
      PGS_DOUBLE("osel.tie_tolerance", grid.tie_tolerance),
      PGS_INT("osel.latent_dim", encoder.latent_dim),
      PGS_INT("osel.window", encoder.window),
      PGS_INT("osel.hidden_width", encoder.hidden_width),
      PGS_INT("osel.hidden_layers", encoder.hidden_layers),
      PGS_INT("osel.trajectories", encoder.trajectories),
      PGS_INT("osel.length", encoder.length),
      PGS_INT("osel.epochs", encoder.epochs),
      PGS_INT("osel.batch_size", encoder.batch_size),
      PGS_DOUBLE("osel.lr", encoder.lr),

      {"run.seeds", Field{[](RunConfig& c, const std::string& v) {
                            c.seeds.clear();
                            for (const auto& s : split(v, ','))
                              c.seeds.push_back(static_cast<std::uint64_t>(to_integer("run.seeds", s)));
                          },
                          [](const RunConfig& c) {
                            return join<std::uint64_t>(c.seeds,
                                                       [](const std::uint64_t& x) { return std::to_string(x); });
                          }}},
      {"run.output_dir", Field{[](RunConfig& c, const std::string& v) { c.output_dir = v; },
                               [](const RunConfig& c) { return c.output_dir; }, false}},
      {"run.cache_dir", Field{[](RunConfig& c, const std::string& v) { c.cache_dir = v; },
                              [](const RunConfig& c) { return c.cache_dir; }, false}},
      {"run.jobs", Field{[](RunConfig& c, const std::string& v) { c.jobs = to_int("run.jobs", v); },
                         [](const RunConfig& c) { return std::to_string(c.jobs); }, false}},
  };
  return table;
}

#undef PGS_INT
#undef PGS_DOUBLE
#undef PGS_BOOL

const Field& field(const std::string& key) {
  auto it = fields().find(key);
  if (it == fields().end()) throw InvalidArgument("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& t : split(text, ',')) out.push_back(to_double("list", t));
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& t : split(text, ',')) out.push_back(to_int("list", t));
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, trim(value));
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    try {
      set_config_value(base, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const Error& e) {
      throw InvalidArgument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + "=" + f.get(cfg) + "\n";
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, f] : fields()) {
    if (f.hashed) out += k + "=" + f.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return content_hash(canonical()); }

void RunConfig::validate() const {
  if (task.empty() && dataset_path.empty()) throw InvalidArgument("config: task is required");
  if (!task.empty()) make_task(task);
  if (dataset_path.empty()) {
    if (pool_size < 100) throw InvalidArgument("config: dataset.pool_size must be at least 100");
    if (!(keep_percentile > 0 && keep_percentile <= 100)) {
      throw InvalidArgument("config: dataset.keep_percentile must lie in (0, 100]");
    }
  }
  if (surrogate.hidden_width < 1 || surrogate.hidden_layers < 0 || surrogate.epochs < 0 || surrogate.batch_size < 1 ||
      !(surrogate.lr > 0)) {
    throw InvalidArgument("config: invalid surrogate settings");
  }
  for (double p : top_p) {
    if (!(p > 0 && p <= 100)) throw InvalidArgument("config: trajectories.p values must lie in (0, 100]");
  }
  if (top_p.empty() || traj_counts.empty() || test_lengths.empty() || methods.empty() || seeds.empty()) {
    throw InvalidArgument("config: list settings must not be empty");
  }
  for (int m : traj_counts) {
    if (m < 1) throw InvalidArgument("config: trajectories.m must be positive");
  }
  if (traj_length < 2) throw InvalidArgument("config: trajectories.T must be at least 2");
  if (!(a_max > 0) || !(grad_eps >= 0)) throw InvalidArgument("config: invalid a_max or grad_eps");
  agent.validate();
  if (num_starts < 1) throw InvalidArgument("config: search.N must be positive");
  for (int T : test_lengths) {
    if (T < 0) throw InvalidArgument("config: search.T_test must be non-negative");
  }
  if (!std::isfinite(grad_step)) throw InvalidArgument("config: search.grad_step must be finite");
  if (grid.p_values.empty() || grid.max_epochs < 1 || grid.interval < 1 || grid.k < 1 || grid.k_tie < 1 ||
      !(grid.tie_tolerance >= 0)) {
    throw InvalidArgument("config: invalid osel grid");
  }
  if (encoder.latent_dim < 1 || encoder.window < 1 || encoder.hidden_width < 1 || encoder.trajectories < 1 ||
      encoder.length <= encoder.window || encoder.epochs < 0 || encoder.batch_size < 1 || !(encoder.lr > 0)) {
    throw InvalidArgument("config: invalid osel encoder settings");
  }
  if (jobs < 1) throw InvalidArgument("config: run.jobs must be positive");
}

}  // namespace pgs
