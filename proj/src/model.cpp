#include "crpl/model.hpp"

namespace crpl {

using nlohmann::json;

json model_config_to_json(const ModelConfig& c) {
  json stages = json::array();
  for (const StageSpec& s : c.stages)
    stages.push_back({s.expansion, s.kernel, s.out_channels, s.repeats, s.stride});
  return json{{"width_mult", c.width_mult},
              {"depth_mult", c.depth_mult},
              {"resolution", c.resolution},
              {"stages", stages},
              {"stem_channels", c.stem_channels},
              {"head_channels", c.head_channels},
              {"use_se", c.use_se},
              {"se_ratio", c.se_ratio},
              {"num_outputs", c.num_outputs}};
}

ModelConfig model_config_from_json(const json& j) {
  check_arg(j.is_object(), "model config: expected a JSON object");
  static const char* allowed[] = {"width_mult", "depth_mult", "resolution",  "stages",
                                  "stem_channels", "head_channels", "use_se", "se_ratio",
                                  "num_outputs", "preset"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    check_usage(ok, "model config: unknown key '", it.key(), "'");
  }
  ModelConfig c = j.contains("preset") ? preset_config(j.at("preset").get<std::string>())
                                       : ModelConfig{};
  if (!j.contains("preset")) c.stages.clear();
  if (j.contains("width_mult")) c.width_mult = j.at("width_mult").get<double>();
  if (j.contains("depth_mult")) c.depth_mult = j.at("depth_mult").get<double>();
  if (j.contains("resolution")) c.resolution = j.at("resolution").get<int>();
  if (j.contains("stem_channels")) c.stem_channels = j.at("stem_channels").get<int>();
  if (j.contains("head_channels")) c.head_channels = j.at("head_channels").get<int>();
  if (j.contains("use_se")) c.use_se = j.at("use_se").get<bool>();
  if (j.contains("se_ratio")) c.se_ratio = j.at("se_ratio").get<double>();
  if (j.contains("num_outputs")) c.num_outputs = j.at("num_outputs").get<int>();
  if (j.contains("stages")) {
    c.stages.clear();
    for (const json& row : j.at("stages")) {
      check_arg(row.is_array() && row.size() == 5,
                "model config: stage rows must be [expansion,kernel,out_channels,repeats,stride]");
      c.stages.push_back(StageSpec{row[0].get<int>(), row[1].get<int>(), row[2].get<int>(),
                                   row[3].get<int>(), row[4].get<int>()});
    }
  }
  check_arg(!c.stages.empty(), "model config: needs a preset or an explicit stage table");
  return c;
}

ModelConfig preset_config(const std::string& name) {
  if (name == "b0") return b0_preset();
  if (name == "desk") return desk_preset();
  throw UsageError(cat("unknown model preset '", name, "' (expected 'b0' or 'desk')"));
}

}  // namespace crpl
