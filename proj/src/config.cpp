// Copyright 2026 The fedqssl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "fedq/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fedq/error.hpp"
#include "json.hpp"

namespace fedq {
namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& field, const std::string& what) {
  raise(ErrorCode::kParseError, "field '" + field + "': " + what);
}

[[noreturn]] void invalid(const std::string& what) { raise(ErrorCode::kValidationError, what); }

// Typed access to one JSON object with unknown-key rejection.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::set<std::string> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) parse_fail(path_.empty() ? "<root>" : path_, "expected an object");
    for (const auto& item : obj_.items()) {
      if (!allowed.count(item.key())) parse_fail(field(item.key()), "unknown key");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key) && !obj_[key].is_null(); }
  const json& raw(const std::string& key) const { return obj_[key]; }

  void require(const std::string& key) const {
    if (!has(key)) parse_fail(field(key), "required");
  }

  std::optional<long long> integer(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    const json& v = obj_[key];
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (std::floor(x) == x && std::abs(x) < 9e15) return static_cast<long long>(x);
    }
    parse_fail(field(key), "expected an integer");
  }

  std::optional<int> int32(const std::string& key) const {
    auto v = integer(key);
    if (!v) return std::nullopt;
    if (*v < -2147483647LL || *v > 2147483647LL) parse_fail(field(key), "integer out of range");
    return static_cast<int>(*v);
  }

  std::optional<std::uint64_t> seed(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    const json& v = obj_[key];
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) {
      return static_cast<std::uint64_t>(v.get<long long>());
    }
    parse_fail(field(key), "expected a non-negative integer");
  }

  std::optional<double> number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    if (!obj_[key].is_number()) parse_fail(field(key), "expected a number");
    return obj_[key].get<double>();
  }

  std::optional<bool> boolean(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    if (!obj_[key].is_boolean()) parse_fail(field(key), "expected true or false");
    return obj_[key].get<bool>();
  }

  std::optional<std::string> string(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    if (!obj_[key].is_string()) parse_fail(field(key), "expected a string");
    return obj_[key].get<std::string>();
  }

  std::optional<std::vector<int>> int_list(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    const json& v = obj_[key];
    if (!v.is_array()) parse_fail(field(key), "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) {
        parse_fail(field(key) + "[" + std::to_string(i) + "]", "expected an integer");
      }
      const auto x = v[i].get<long long>();
      if (x < -2147483647LL || x > 2147483647LL) {
        parse_fail(field(key) + "[" + std::to_string(i) + "]", "integer out of range");
      }
      out.push_back(static_cast<int>(x));
    }
    return out;
  }

 private:
  const json& obj_;
  std::string path_;
};

template <typename T>
void set_if(std::optional<T> v, T& dst) {
  if (v) dst = *v;
}

int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

}  // namespace

const char* activation_name(client::Activation a) {
  return a == client::Activation::kRelu ? "relu" : "identity";
}

data::DataGenParams ExperimentConfig::data_params() const {
  data::DataGenParams p;
  p.n = n_clients;
  p.d = d;
  p.frequent_count = data.frequent_count;
  p.infrequent_exponent = data.infrequent_exponent;
  p.seed = seeds.data;
  p.mu_override = data.mu_override;
  return p;
}

bool ExperimentConfig::activations_quantized() const {
  if (model.quantize_activations) return *model.quantize_activations;
  return model.layers.size() >= 2;
}

double ExperimentConfig::init_std() const {
  if (model.init_std) return *model.init_std;
  return 0.1 / std::sqrt(static_cast<double>(d));
}

void ExperimentConfig::validate() const {
  if (n_clients < 1) invalid("n_clients must be >= 1");
  if (d < 1) invalid("d must be >= 1");
  if (n_clients > d) invalid("n_clients must not exceed d");
  if (static_cast<int>(bitwidths.size()) != n_clients) {
    invalid("bitwidths length (" + std::to_string(bitwidths.size()) +
            ") must equal n_clients (" + std::to_string(n_clients) + ")");
  }
  if (grad_extra_bits < 0) invalid("grad_extra_bits must be >= 0");
  for (std::size_t k = 0; k < bitwidths.size(); ++k) {
    if (bitwidths[k] < 1) invalid("bitwidths[" + std::to_string(k) + "] must be >= 1");
    if (bitwidths[k] + grad_extra_bits > quant::kMaxRate) {
      invalid("bitwidths[" + std::to_string(k) + "] + grad_extra_bits must not exceed " +
              std::to_string(quant::kMaxRate));
    }
  }
  if (rounds < 1) invalid("rounds must be >= 1");
  if (local_epochs < 1) invalid("local_epochs must be >= 1");
  if (batch_size < 0) invalid("batch_size must be >= 0");
  if (!(aug_sigma >= 0.0) || !std::isfinite(aug_sigma)) invalid("aug_sigma must be >= 0");
  if (lr.base && !(*lr.base > 0.0 && std::isfinite(*lr.base))) invalid("lr.base must be > 0");
  if (model.layers.empty()) invalid("model.layers must not be empty");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (model.layers[l] < 1) invalid("model.layers[" + std::to_string(l) + "] must be >= 1");
  }
  if (model.m != model.layers.back()) invalid("model.m must equal the last layer width");
  if (model.init_std && !(*model.init_std > 0.0 && std::isfinite(*model.init_std))) {
    invalid("model.init_std must be > 0");
  }
  try {
    data_params().validate();
  } catch (const Error& e) {
    invalid(std::string("data: ") + e.what());
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::kParseError, "line " + std::to_string(line_of(text, e.byte)) + ": " +
                                      std::string(e.what()));
  }
  ExperimentConfig cfg;
  const Reader top(root, "",
                   {"n_clients", "d", "bitwidths", "rounds", "grad_extra_bits", "local_epochs",
                    "batch_size", "aug_sigma", "output_dir", "lr", "model", "data", "seeds",
                    "metrics"});
  for (const char* key : {"n_clients", "d", "bitwidths", "rounds"}) top.require(key);
  set_if(top.int32("n_clients"), cfg.n_clients);
  set_if(top.int32("d"), cfg.d);
  set_if(top.int_list("bitwidths"), cfg.bitwidths);
  set_if(top.int32("rounds"), cfg.rounds);
  set_if(top.int32("grad_extra_bits"), cfg.grad_extra_bits);
  set_if(top.int32("local_epochs"), cfg.local_epochs);
  set_if(top.int32("batch_size"), cfg.batch_size);
  set_if(top.number("aug_sigma"), cfg.aug_sigma);
  set_if(top.string("output_dir"), cfg.output_dir);

  if (top.has("lr")) {
    const Reader r(top.raw("lr"), "lr", {"kind", "base", "constant_within_round"});
    if (auto kind = r.string("kind")) {
      if (*kind == "constant") {
        cfg.lr.kind = client::LrSchedule::Kind::kConstant;
      } else if (*kind == "inverse_sqrt") {
        cfg.lr.kind = client::LrSchedule::Kind::kInverseSqrt;
      } else {
        parse_fail("lr.kind", "expected \"constant\" or \"inverse_sqrt\"");
      }
    }
    cfg.lr.base = r.number("base");
    set_if(r.boolean("constant_within_round"), cfg.lr.constant_within_round);
  }

  std::optional<int> m;
  if (top.has("model")) {
    const Reader r(top.raw("model"), "model",
                   {"layers", "activation", "m", "quantize_activations", "init_std"});
    set_if(r.int_list("layers"), cfg.model.layers);
    if (auto act = r.string("activation")) {
      if (*act == "identity") {
        cfg.model.activation = client::Activation::kIdentity;
      } else if (*act == "relu") {
        cfg.model.activation = client::Activation::kRelu;
      } else {
        parse_fail("model.activation", "expected \"identity\" or \"relu\"");
      }
    }
    m = r.int32("m");
    cfg.model.quantize_activations = r.boolean("quantize_activations");
    cfg.model.init_std = r.number("init_std");
  }
  if (cfg.model.layers.empty()) cfg.model.layers.push_back(m ? *m : cfg.n_clients);
  cfg.model.m = m ? *m : cfg.model.layers.back();

  if (top.has("data")) {
    const Reader r(top.raw("data"), "data",
                   {"frequent_count", "infrequent_exponent", "mu_override", "identical",
                    "data_dir"});
    set_if(r.int32("frequent_count"), cfg.data.frequent_count);
    set_if(r.number("infrequent_exponent"), cfg.data.infrequent_exponent);
    cfg.data.mu_override = r.number("mu_override");
    set_if(r.boolean("identical"), cfg.data.identical);
    cfg.data.data_dir = r.string("data_dir");
  }
  if (top.has("seeds")) {
    const Reader r(top.raw("seeds"), "seeds", {"data", "training"});
    set_if(r.seed("data"), cfg.seeds.data);
    set_if(r.seed("training"), cfg.seeds.training);
  }
  if (top.has("metrics")) {
    const Reader r(top.raw("metrics"), "metrics", {"moreau", "representability"});
    set_if(r.boolean("moreau"), cfg.metrics.moreau);
    set_if(r.boolean("representability"), cfg.metrics.representability);
  }
  cfg.validate();
  return cfg;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  const char* env = std::getenv("FEDQ_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    raise(ErrorCode::kValidationError, "FEDQ_SEED must be a non-negative integer");
  }
  cfg.seeds.data = v;
  cfg.seeds.training = v;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorCode::kIoError, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str());
  apply_env_overrides(cfg);
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_clients"] = cfg.n_clients;
  j["d"] = cfg.d;
  j["bitwidths"] = cfg.bitwidths;
  j["rounds"] = cfg.rounds;
  j["grad_extra_bits"] = cfg.grad_extra_bits;
  j["local_epochs"] = cfg.local_epochs;
  j["batch_size"] = cfg.batch_size;
  j["aug_sigma"] = cfg.aug_sigma;
  j["output_dir"] = cfg.output_dir;
  j["lr"]["kind"] =
      cfg.lr.kind == client::LrSchedule::Kind::kConstant ? "constant" : "inverse_sqrt";
  j["lr"]["base"] = cfg.lr.base ? nlohmann::ordered_json(*cfg.lr.base) : nullptr;
  j["lr"]["constant_within_round"] = cfg.lr.constant_within_round;
  j["model"]["layers"] = cfg.model.layers;
  j["model"]["activation"] = activation_name(cfg.model.activation);
  j["model"]["m"] = cfg.model.m;
  j["model"]["quantize_activations"] = cfg.activations_quantized();
  j["model"]["init_std"] = cfg.init_std();
  j["data"]["frequent_count"] = cfg.data.frequent_count;
  j["data"]["infrequent_exponent"] = cfg.data.infrequent_exponent;
  j["data"]["mu_override"] =
      cfg.data.mu_override ? nlohmann::ordered_json(*cfg.data.mu_override) : nullptr;
  j["data"]["identical"] = cfg.data.identical;
  j["data"]["data_dir"] = cfg.data.data_dir ? nlohmann::ordered_json(*cfg.data.data_dir) : nullptr;
  j["seeds"]["data"] = cfg.seeds.data;
  j["seeds"]["training"] = cfg.seeds.training;
  j["metrics"]["moreau"] = cfg.metrics.moreau;
  j["metrics"]["representability"] = cfg.metrics.representability;
  return j.dump(2);
}

}  // namespace fedq
