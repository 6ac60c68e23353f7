#include "rrid/config.hpp"

#include <limits>
#include <set>

#include "binary.hpp"
#include "rrid/errors.hpp"

namespace rrid {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& msg) {
  throw ConfigError("config /" + key + ": " + msg);
}

std::uint64_t get_uint(const json& v, const std::string& key, std::uint64_t min = 0) {
  if (!v.is_number_integer()) bad(key, "expected an integer");
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u < min) bad(key, "must be >= " + std::to_string(min));
    return u;
  }
  const auto s = v.get<std::int64_t>();
  if (s < static_cast<std::int64_t>(min)) bad(key, "must be >= " + std::to_string(min));
  return static_cast<std::uint64_t>(s);
}

std::size_t get_size(const json& v, const std::string& key, std::size_t min = 0) {
  const auto u = get_uint(v, key, min);
  if (u > std::numeric_limits<std::uint32_t>::max()) bad(key, "too large");
  return static_cast<std::size_t>(u);
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["scales"] = head.scales;
  j["channels"] = head.channels;
  j["embed_dim"] = head.embed_dim;
  j["part_pool"] = to_string(head.part_pool);
  j["global_mode"] = to_string(head.global_mode);
  j["relation_enabled"] = head.relation_enabled;
  j["use_global"] = head.use_global;
  j["use_local"] = head.use_local;
  j["N_K"] = train.n_k;
  j["N_M"] = train.n_m;
  j["epochs"] = train.epochs;
  j["base_lr_head"] = train.base_lr_head;
  j["base_lr_backbone"] = train.base_lr_backbone;
  j["momentum"] = train.momentum;
  j["weight_decay"] = train.weight_decay;
  j["lambda"] = train.lambda;
  j["alpha"] = train.alpha;
  j["seed"] = train.seed;
  j["decay_start_epoch"] = train.decay.start_epoch;
  j["decay_period"] = train.decay.period;
  j["decay_factor"] = train.decay.factor;
  j["data"] = data;
  j["out"] = out;
  return j;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object at the top level");
  RunConfig cfg;
  if (doc.contains("parts") && doc.contains("scales")) {
    bad("parts", "give either \"parts\" or \"scales\", not both");
  }
  for (const auto& [key, v] : doc.items()) {
    if (key == "scales") {
      if (!v.is_array()) bad(key, "expected an array of part counts");
      cfg.head.scales.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        cfg.head.scales.push_back(get_size(v[i], key + "/" + std::to_string(i), 1));
      }
    } else if (key == "parts") {
      cfg.head.scales = {get_size(v, key, 1)};
    } else if (key == "channels") {
      cfg.head.channels = get_size(v, key, 1);
    } else if (key == "embed_dim") {
      cfg.head.embed_dim = get_size(v, key, 1);
    } else if (key == "part_pool") {
      try {
        cfg.head.part_pool = parse_pool_mode(get_string(v, key));
      } catch (const ConfigError& e) {
        bad(key, e.what());
      }
    } else if (key == "global_mode") {
      try {
        cfg.head.global_mode = parse_global_mode(get_string(v, key));
      } catch (const ConfigError& e) {
        bad(key, e.what());
      }
    } else if (key == "relation_enabled") {
      cfg.head.relation_enabled = get_bool(v, key);
    } else if (key == "use_global") {
      cfg.head.use_global = get_bool(v, key);
    } else if (key == "use_local") {
      cfg.head.use_local = get_bool(v, key);
    } else if (key == "N_K") {
      cfg.train.n_k = get_size(v, key);
    } else if (key == "N_M") {
      cfg.train.n_m = get_size(v, key);
    } else if (key == "epochs") {
      cfg.train.epochs = get_size(v, key);
    } else if (key == "base_lr_head") {
      cfg.train.base_lr_head = get_real(v, key);
    } else if (key == "base_lr_backbone") {
      cfg.train.base_lr_backbone = get_real(v, key);
    } else if (key == "momentum") {
      cfg.train.momentum = get_real(v, key);
    } else if (key == "weight_decay") {
      cfg.train.weight_decay = get_real(v, key);
    } else if (key == "lambda") {
      cfg.train.lambda = get_real(v, key);
    } else if (key == "alpha") {
      cfg.train.alpha = get_real(v, key);
    } else if (key == "seed") {
      cfg.train.seed = get_uint(v, key);
    } else if (key == "decay_start_epoch") {
      cfg.train.decay.start_epoch = get_size(v, key);
    } else if (key == "decay_period") {
      cfg.train.decay.period = get_size(v, key);
    } else if (key == "decay_factor") {
      cfg.train.decay.factor = get_real(v, key);
    } else if (key == "data") {
      cfg.data = get_string(v, key);
    } else if (key == "out") {
      cfg.out = get_string(v, key);
    } else {
      std::string escaped;
      for (char ch : key) escaped += ch == '~' ? "~0" : ch == '/' ? "~1" : std::string(1, ch);
      bad(escaped, "unknown key");
    }
  }
  // Height-dependent checks wait until the feature maps are known.
  cfg.head.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(bin::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

Checkpoint make_checkpoint(const RunConfig& run, TrainResult result) {
  Checkpoint ckpt;
  ckpt.params = std::move(result.params);
  ckpt.config = {{"run", run.to_json()},
                 {"num_classes", result.num_classes},
                 {"rng_digest", result.rng_digest}};
  ckpt.epoch = static_cast<std::uint32_t>(result.log.size());
  return ckpt;
}

RunConfig checkpoint_run_config(const Checkpoint& ckpt) {
  if (!ckpt.config.is_object() || !ckpt.config.contains("run")) {
    throw FormatError("checkpoint config blob has no \"run\" section");
  }
  return parse_config(ckpt.config.at("run"));
}

}  // namespace rrid
