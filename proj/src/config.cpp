#include "textar/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace textar::config {

using nlohmann::json;

nlohmann::json default_run_json() {
  const RunConfig d;
  json train_stage1_class_weights = json::array();  // empty = unweighted
  return json{
      {"seed", d.seed},
      {"threads", d.threads},
      {"geometry", {{"k", d.geometry_k}, {"m", d.geometry_m}}},
      {"synth",
       {{"docs", d.synth_docs},
        {"words_min", d.synth.words_min},
        {"words_max", d.synth.words_max},
        {"page_w", d.synth.page_w},
        {"page_h", d.synth.page_h},
        {"stroke_width_normal", d.synth.stroke_width_normal},
        {"stroke_width_bold", d.synth.stroke_width_bold},
        {"shear_min_deg", d.synth.shear_min_deg},
        {"shear_max_deg", d.synth.shear_max_deg},
        {"class_mix", d.synth.class_mix},
        {"ambiguity_rate", d.synth.ambiguity_rate}}},
      {"model", d.model.to_json()},
      {"train",
       {{"lr", d.train.lr},
        {"beta1", d.train.beta1},
        {"beta2", d.train.beta2},
        {"eps", d.train.eps},
        {"epochs", d.train.epochs},
        {"max_steps", d.train.max_steps},
        {"batch_windows", d.train.batch_windows},
        {"weight_t1", d.train.weight_t1},
        {"weight_t2", d.train.weight_t2},
        {"class_weights_t1", d.train.class_weights_t1},
        {"class_weights_t2", d.train.class_weights_t2},
        {"augment", d.train.augment},
        {"stage", train::stage_name(d.train.stage)}}},
      {"eval", {{"batch_windows", d.eval_batch_windows}}}};
}

namespace {

void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object())
    throw ConfigError("config: expected an object at '" + (prefix.empty() ? "." : prefix) + "'");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && !slot.empty())
      merge_checked(slot, it.value(), path);
    else
      slot = it.value();
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts)
    if (p.empty()) throw ConfigError("config: bad override path '" + path + "'");
  return parts;
}

}  // namespace

nlohmann::json resolve_run_json(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
  json merged = default_run_json();
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("config: cannot open " + config_path);
    json user;
    try {
      is >> user;
    } catch (const json::exception& e) {
      throw ConfigError("config: " + config_path + ": " + e.what());
    }
    merge_checked(merged, user, "");
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config: override must look like path.key=value: '" + ov + "'");
    const auto parts = split_path(ov.substr(0, eq));
    const std::string raw = ov.substr(eq + 1);

    json* slot = &merged;
    std::string walked;
    for (const auto& part : parts) {
      walked = walked.empty() ? part : walked + "." + part;
      if (!slot->is_object() || !slot->contains(part))
        throw ConfigError("config: unknown key '" + walked + "'");
      slot = &(*slot)[part];
    }
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare strings need no quotes
    if (slot->is_object()) throw ConfigError("config: '" + walked + "' is a section, not a value");
    *slot = std::move(value);
  }
  return merged;
}

RunConfig parse_run_config(const nlohmann::json& merged) {
  RunConfig c;
  try {
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.threads = merged.at("threads").get<int>();
    if (c.threads < 1) throw ConfigError("config: threads must be >= 1");

    const json& g = merged.at("geometry");
    c.geometry_k = g.at("k").get<double>();
    c.geometry_m = g.at("m").get<double>();

    const json& s = merged.at("synth");
    c.synth_docs = s.at("docs").get<int>();
    if (c.synth_docs < 1) throw ConfigError("config: synth.docs must be >= 1");
    c.synth.words_min = s.at("words_min").get<int>();
    c.synth.words_max = s.at("words_max").get<int>();
    c.synth.page_w = s.at("page_w").get<int>();
    c.synth.page_h = s.at("page_h").get<int>();
    c.synth.stroke_width_normal = s.at("stroke_width_normal").get<double>();
    c.synth.stroke_width_bold = s.at("stroke_width_bold").get<double>();
    c.synth.shear_min_deg = s.at("shear_min_deg").get<double>();
    c.synth.shear_max_deg = s.at("shear_max_deg").get<double>();
    c.synth.class_mix = s.at("class_mix").get<std::array<double, 16>>();
    c.synth.ambiguity_rate = s.at("ambiguity_rate").get<double>();
    c.synth.seed = c.seed;

    c.model = model::ModelConfig::from_json(merged.at("model"));
    c.synth.crop_h = c.model.crop_h;
    c.synth.crop_w = c.model.crop_w;

    const json& t = merged.at("train");
    c.train.lr = t.at("lr").get<double>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.beta2 = t.at("beta2").get<double>();
    c.train.eps = t.at("eps").get<double>();
    c.train.epochs = t.at("epochs").get<int>();
    c.train.max_steps = t.at("max_steps").get<int>();
    c.train.batch_windows = t.at("batch_windows").get<int>();
    c.train.weight_t1 = t.at("weight_t1").get<double>();
    c.train.weight_t2 = t.at("weight_t2").get<double>();
    c.train.class_weights_t1 = t.at("class_weights_t1").get<std::vector<double>>();
    c.train.class_weights_t2 = t.at("class_weights_t2").get<std::vector<double>>();
    c.train.augment = t.at("augment").get<bool>();
    c.train.stage = train::stage_from_name(t.at("stage").get<std::string>());
    c.train.seed = c.seed;

    c.eval_batch_windows = merged.at("eval").at("batch_windows").get<int>();
    if (c.eval_batch_windows < 1) throw ConfigError("config: eval.batch_windows must be >= 1");

    c.synth.validate();
    c.train.validate();
    geom::validate_metric_weights(c.geometry_k, c.geometry_m);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

}  // namespace textar::config
