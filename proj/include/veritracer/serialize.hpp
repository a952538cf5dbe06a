#pragma once

// Versioned JSON model format. Weights are stored as shortest
// round-trippable decimal strings of the exact 64-bit values, so
// serialize/parse is bit-exact.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "veritracer/model.hpp"

namespace veritracer {

inline constexpr int kModelFormatVersion = 1;

inline std::string double_to_string(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    throw std::runtime_error("double_to_string: conversion failed");
  return std::string(buf, ptr);
}

inline double string_to_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("string_to_double: bad value '" + s + "'");
  return v;
}

namespace detail {

inline nlohmann::ordered_json mlp_to_json(const MlpParams& p) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : p.layers) {
    nlohmann::ordered_json jl;
    jl["out"] = l.out;
    jl["in"] = l.in;
    nlohmann::ordered_json w = nlohmann::ordered_json::array();
    for (double v : l.weights) w.push_back(double_to_string(v));
    nlohmann::ordered_json b = nlohmann::ordered_json::array();
    for (double v : l.bias) b.push_back(double_to_string(v));
    jl["weights"] = std::move(w);
    jl["bias"] = std::move(b);
    layers.push_back(std::move(jl));
  }
  return layers;
}

inline MlpParams mlp_from_json(const nlohmann::json& layers) {
  MlpParams p;
  for (const auto& jl : layers) {
    MlpParams::Layer l;
    l.out = jl.at("out").get<std::size_t>();
    l.in = jl.at("in").get<std::size_t>();
    for (const auto& v : jl.at("weights")) l.weights.push_back(string_to_double(v));
    for (const auto& v : jl.at("bias")) l.bias.push_back(string_to_double(v));
    p.layers.push_back(std::move(l));
  }
  p.validate();
  return p;
}

inline nlohmann::ordered_json schema_to_json(const FeatureSchema& s) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json feats = nlohmann::ordered_json::array();
  for (const auto& f : s.features) {
    nlohmann::ordered_json jf;
    jf["name"] = f.name;
    jf["kind"] = f.continuous() ? "continuous" : "categorical";
    if (!f.continuous()) jf["cardinality"] = f.cardinality;
    feats.push_back(std::move(jf));
  }
  j["features"] = std::move(feats);
  j["label"] = s.label_name;
  nlohmann::ordered_json mn = nlohmann::ordered_json::array();
  nlohmann::ordered_json mx = nlohmann::ordered_json::array();
  for (double v : s.fitted_min) mn.push_back(double_to_string(v));
  for (double v : s.fitted_max) mx.push_back(double_to_string(v));
  j["fitted_min"] = std::move(mn);
  j["fitted_max"] = std::move(mx);
  return j;
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  for (const auto& jf : j.at("features")) {
    FeatureDescriptor f;
    f.name = jf.at("name").get<std::string>();
    f.cardinality = jf.at("kind") == "categorical"
                        ? jf.at("cardinality").get<std::size_t>()
                        : 0;
    s.features.push_back(std::move(f));
  }
  s.label_name = j.at("label").get<std::string>();
  for (const auto& v : j.at("fitted_min")) s.fitted_min.push_back(string_to_double(v));
  for (const auto& v : j.at("fitted_max")) s.fitted_max.push_back(string_to_double(v));
  return s;
}

}  // namespace detail

inline std::string model_to_json(const JointModel& m, const std::string& config_hash = "") {
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["feature_schema"] = detail::schema_to_json(m.schema);
  j["activations"] = {{"hidden", "relu"}, {"predictor_output", "sigmoid"}};
  j["encoder"] = detail::mlp_to_json(m.encoder);
  j["predictor_head"] = detail::mlp_to_json(m.predictor_head);
  j["cf_head"] = detail::mlp_to_json(m.cf_head);
  return j.dump(2) + "\n";
}

inline JointModel model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != kModelFormatVersion)
    throw std::runtime_error("model_from_json: unsupported format version");
  JointModel m;
  m.schema = detail::schema_from_json(j.at("feature_schema"));
  m.encoder = detail::mlp_from_json(j.at("encoder"));
  m.predictor_head = detail::mlp_from_json(j.at("predictor_head"));
  m.cf_head = detail::mlp_from_json(j.at("cf_head"));
  return m;
}

inline void save_model(const std::string& path, const JointModel& m,
                       const std::string& config_hash = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << model_to_json(m, config_hash);
}

inline JointModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(s)));
  return std::string(buf);
}

// Hash of the serialized weights; embedded in certificates so reports are
// self-describing.
inline std::string model_fingerprint(const JointModel& m) {
  return fnv1a_hex(model_to_json(m));
}

}  // namespace veritracer
