#include "eqface/config.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "eqface/csv_io.hpp"
#include "eqface/errors.hpp"

namespace eqface {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k{
        "seed",
        "data.n_classes", "data.samples_per_class", "data.d_in", "data.d",
        "data.noise_levels", "data.lift_seed", "data.observation_noise",
        "split.n_ref_ids", "split.n_ref_per_id", "split.n_query_per_id",
        "split.n_disturb_ids", "split.seed",
        "model.hidden", "model.d", "model.q",
        "loss.m1", "loss.m2", "loss.m3", "loss.scale",
        "train.iterations", "train.step3_restart", "train.qwdf_threshold",
        "eval.mode", "eval.fusion", "eval.f_th", "eval.s_th", "eval.max_records",
    };
    for (const char* step : {"step1", "step2", "step3"}) {
      for (const char* field : {"lr0", "momentum", "weight_decay", "decay_epochs",
                                "decay_factor", "epochs", "batch_size"}) {
        k.insert(std::string(step) + "." + field);
      }
    }
    return k;
  }();
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double as_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v, key);
  } catch (const FormatError&) {
    throw InvalidConfig("config key '" + key + "': not a number: '" + v + "'");
  }
}

long long as_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) {
    throw InvalidConfig("config key '" + key + "': not an integer: '" + v + "'");
  }
  return out;
}

std::uint64_t as_seed(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || v.front() == '-') {
    throw InvalidConfig("config key '" + key + "': not an unsigned integer: '" + v + "'");
  }
  return out;
}

std::vector<std::string> list_items(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& item : split_fields(v)) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

void apply_optim(const KeyValues& kv, const std::string& step, OptimConfig& o) {
  auto get = [&](const char* field) -> const std::string* {
    auto it = kv.find(step + "." + field);
    return it == kv.end() ? nullptr : &it->second;
  };
  const std::string p = step + ".";
  if (auto v = get("lr0")) o.lr0 = as_double(p + "lr0", *v);
  if (auto v = get("momentum")) o.momentum = as_double(p + "momentum", *v);
  if (auto v = get("weight_decay")) o.weight_decay = as_double(p + "weight_decay", *v);
  if (auto v = get("decay_factor")) o.decay_factor = as_double(p + "decay_factor", *v);
  if (auto v = get("epochs")) o.total_epochs = static_cast<int>(as_int(p + "epochs", *v));
  if (auto v = get("batch_size")) o.batch_size = static_cast<int>(as_int(p + "batch_size", *v));
  if (auto v = get("decay_epochs")) {
    o.decay_epochs.clear();
    for (const auto& item : list_items(*v)) {
      o.decay_epochs.push_back(static_cast<int>(as_int(p + "decay_epochs", item)));
    }
  }
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": empty key");
    }
    if (!known_keys().contains(key)) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": unknown key '" + key +
                          "'");
    }
    if (!kv.emplace(key, value).second) {
      throw InvalidConfig("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                          "'");
    }
  }
  return kv;
}

RunConfig build_run_config(const KeyValues& kv, const std::vector<std::string>& required) {
  RunConfig rc;
  rc.raw = kv;
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  if (auto v = get("seed")) {
    rc.seed = as_seed("seed", *v);
  } else if (const char* env = std::getenv("EQFACE_SEED")) {
    rc.seed = as_seed("EQFACE_SEED", env);
  }
  for (const auto& key : required) {
    if (key == "seed" ? !rc.seed.has_value() : !kv.contains(key)) {
      throw InvalidConfig("missing required config key '" + key + "'");
    }
  }

  GenConfig& g = rc.gen;
  if (rc.seed) g.seed = *rc.seed;
  if (auto v = get("data.n_classes")) g.n_classes = static_cast<int>(as_int("data.n_classes", *v));
  if (auto v = get("data.samples_per_class")) {
    g.samples_per_class = static_cast<int>(as_int("data.samples_per_class", *v));
  }
  if (auto v = get("data.d_in")) g.d_in = static_cast<int>(as_int("data.d_in", *v));
  if (auto v = get("data.d")) g.d = static_cast<int>(as_int("data.d", *v));
  if (auto v = get("data.lift_seed")) g.lift_seed = as_seed("data.lift_seed", *v);
  if (auto v = get("data.observation_noise")) {
    g.observation_noise = as_double("data.observation_noise", *v);
  }
  if (auto v = get("data.noise_levels")) {
    g.noise_levels.clear();
    for (const auto& item : list_items(*v)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw InvalidConfig("config key 'data.noise_levels': expected sigma:fraction, got '" +
                            item + "'");
      }
      g.noise_levels.push_back({as_double("data.noise_levels", trim(item.substr(0, colon))),
                                as_double("data.noise_levels", trim(item.substr(colon + 1)))});
    }
  }

  const char* split_keys[] = {"split.n_ref_ids", "split.n_ref_per_id", "split.n_query_per_id",
                              "split.n_disturb_ids"};
  int present = 0;
  for (const char* k : split_keys) present += kv.contains(k) ? 1 : 0;
  if (present > 0) {
    for (const char* k : split_keys) {
      if (!kv.contains(k)) throw InvalidConfig(std::string("missing required config key '") + k + "'");
    }
    SplitConfig s;
    s.n_ref_ids = static_cast<int>(as_int("split.n_ref_ids", *get("split.n_ref_ids")));
    s.n_ref_per_id = static_cast<int>(as_int("split.n_ref_per_id", *get("split.n_ref_per_id")));
    s.n_query_per_id =
        static_cast<int>(as_int("split.n_query_per_id", *get("split.n_query_per_id")));
    s.n_disturb_ids = static_cast<int>(as_int("split.n_disturb_ids", *get("split.n_disturb_ids")));
    s.seed = g.seed;
    if (auto v = get("split.seed")) s.seed = as_seed("split.seed", *v);
    rc.split = s;
  } else if (kv.contains("split.seed")) {
    throw InvalidConfig("missing required config key 'split.n_ref_ids'");
  }

  ModelDims& d = rc.dims;
  d.d_in = g.d_in;
  d.n_classes = g.n_classes;
  if (auto v = get("model.hidden")) d.hidden = static_cast<int>(as_int("model.hidden", *v));
  d.d = g.d;
  if (auto v = get("model.d")) {
    d.d = static_cast<int>(as_int("model.d", *v));
    rc.dims_d_set = true;
  }
  d.q = std::max(1, d.d / 4);
  if (auto v = get("model.q")) {
    d.q = static_cast<int>(as_int("model.q", *v));
    rc.dims_q_set = true;
  }

  PipelineConfig& p = rc.pipeline;
  if (rc.seed) {
    p.seed = *rc.seed;
    p.step1.seed = p.step2.seed = p.step3.seed = *rc.seed;
  }
  if (auto v = get("loss.m1")) p.loss.m1 = as_double("loss.m1", *v);
  if (auto v = get("loss.m2")) p.loss.m2 = as_double("loss.m2", *v);
  if (auto v = get("loss.m3")) p.loss.m3 = as_double("loss.m3", *v);
  if (auto v = get("loss.scale")) p.loss.scale = as_double("loss.scale", *v);
  if (auto v = get("train.iterations")) {
    p.iterations = static_cast<int>(as_int("train.iterations", *v));
  }
  if (auto v = get("train.step3_restart")) {
    if (*v == "continue") {
      p.step3_restart = Step3Restart::continue_training;
    } else if (*v == "scratch") {
      p.step3_restart = Step3Restart::scratch;
    } else {
      throw InvalidConfig("config key 'train.step3_restart': expected continue or scratch");
    }
  }
  if (auto v = get("train.qwdf_threshold")) {
    p.qwdf_threshold = as_double("train.qwdf_threshold", *v);
  }
  apply_optim(kv, "step1", p.step1);
  apply_optim(kv, "step2", p.step2);
  apply_optim(kv, "step3", p.step3);

  EvalConfig& e = rc.eval;
  if (auto v = get("eval.mode")) e.mode = *v;
  if (auto v = get("eval.fusion")) {
    if (*v != "template" && *v != "running") {
      throw InvalidConfig("config key 'eval.fusion': expected template or running");
    }
    e.fusion = *v;
  }
  if (auto v = get("eval.f_th")) e.f_th = as_double("eval.f_th", *v);
  if (auto v = get("eval.s_th")) e.s_th = as_double("eval.s_th", *v);
  if (auto v = get("eval.max_records")) {
    const long long m = as_int("eval.max_records", *v);
    if (m < 0) throw InvalidConfig("config key 'eval.max_records' must be >= 0");
    e.max_records = static_cast<std::size_t>(m);
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& required) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw InvalidConfig(e.what());
  }
  return build_run_config(parse_key_values(text), required);
}

const std::vector<std::string>& gen_required_keys() {
  static const std::vector<std::string> keys{"seed", "data.n_classes", "data.samples_per_class",
                                             "data.d_in", "data.d", "data.noise_levels"};
  return keys;
}

}  // namespace eqface
