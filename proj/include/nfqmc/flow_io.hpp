// JSON persistence for FlowModel.
//
// {
//   "schema_version": 1,
//   "d": 2,
//   "base": "standard_normal",
//   "layers": [
//     {"kind": "affine" | "rq_spline",
//      "mask": [true, false, ...],
//      "spline": {"K": 8, "B": 4.0},            // rq_spline only
//      "conditioner": {"sizes": [...], "activation": "tanh" | "relu",
//                      "weights": [...], "biases": [...]}}
//   ]
// }
//
// Doubles are written in shortest round-trip form, so load(save(flow))
// reproduces every parameter bit for bit.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "nfqmc/errors.hpp"
#include "nfqmc/flow.hpp"

namespace nfqmc {

inline constexpr int kFlowSchemaVersion = 1;

inline nlohmann::json flow_to_json(const FlowModel& flow) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : flow.layers()) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(l.kind));
    j["mask"] = l.mask;
    if (l.kind == TransformKind::rq_spline) j["spline"] = {{"K", l.bins}, {"B", l.tail_bound}};
    j["conditioner"] = {{"sizes", l.conditioner.sizes},
                        {"activation", std::string(to_string(l.conditioner.activation))},
                        {"weights", l.conditioner.weights},
                        {"biases", l.conditioner.biases}};
    layers.push_back(std::move(j));
  }
  return {{"schema_version", kFlowSchemaVersion},
          {"d", flow.dim()},
          {"base", "standard_normal"},
          {"layers", std::move(layers)}};
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key,
                                   const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw SchemaError("flow file: missing field '" + where + key + "'");
  }
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("flow file: field '" + where + key + "' has the wrong type");
  }
}

}  // namespace detail

inline FlowModel flow_from_json(const nlohmann::json& j) {
  using detail::get_as;
  const int version = get_as<int>(j, "schema_version", "");
  if (version != kFlowSchemaVersion) {
    throw SchemaError("flow file: unsupported schema_version " + std::to_string(version) +
                      " (expected " + std::to_string(kFlowSchemaVersion) + ")");
  }
  const auto d = get_as<std::size_t>(j, "d", "");
  const auto base = get_as<std::string>(j, "base", "");
  if (base != "standard_normal") throw SchemaError("flow file: unsupported base '" + base + "'");
  const auto& layers_json = detail::field(j, "layers", "");
  if (!layers_json.is_array()) throw SchemaError("flow file: field 'layers' must be an array");
  std::vector<CouplingLayer> layers;
  for (std::size_t i = 0; i < layers_json.size(); ++i) {
    const auto& lj = layers_json[i];
    const std::string where = "layers[" + std::to_string(i) + "].";
    CouplingLayer layer;
    const auto kind = get_as<std::string>(lj, "kind", where);
    if (kind == "affine") {
      layer.kind = TransformKind::affine;
    } else if (kind == "rq_spline") {
      layer.kind = TransformKind::rq_spline;
      const auto& sj = detail::field(lj, "spline", where);
      layer.bins = get_as<std::size_t>(sj, "K", where + "spline.");
      layer.tail_bound = get_as<double>(sj, "B", where + "spline.");
    } else {
      throw SchemaError("flow file: field '" + where + "kind' has unknown value '" + kind + "'");
    }
    layer.mask = get_as<std::vector<bool>>(lj, "mask", where);
    const auto& cj = detail::field(lj, "conditioner", where);
    const std::string cw = where + "conditioner.";
    layer.conditioner.sizes = get_as<std::vector<std::size_t>>(cj, "sizes", cw);
    const auto act = get_as<std::string>(cj, "activation", cw);
    if (act == "tanh") {
      layer.conditioner.activation = Activation::tanh;
    } else if (act == "relu") {
      layer.conditioner.activation = Activation::relu;
    } else {
      throw SchemaError("flow file: field '" + cw + "activation' has unknown value '" + act + "'");
    }
    layer.conditioner.weights = get_as<std::vector<double>>(cj, "weights", cw);
    layer.conditioner.biases = get_as<std::vector<double>>(cj, "biases", cw);
    layers.push_back(std::move(layer));
  }
  try {
    return FlowModel(d, std::move(layers));
  } catch (const ContractError& e) {
    throw SchemaError(std::string("flow file: ") + e.what());
  }
}

inline void flow_save(const FlowModel& flow, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("flow_save: cannot open '" + path.string() + "' for writing");
  os << flow_to_json(flow).dump() << '\n';
  if (!os) throw Error("flow_save: write to '" + path.string() + "' failed");
}

inline FlowModel flow_load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw Error("flow_load: file '" + path.string() +
                "' not found; train one with `nfqmc train` or pass --train");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("flow file '" + path.string() + "': " + e.what());
  }
  return flow_from_json(j);
}

}  // namespace nfqmc
