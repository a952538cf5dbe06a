#pragma once

// Run configuration: everything needed to reproduce a run, parsed from a
// TOML document. Unknown keys are rejected; the raw config text is
// embedded verbatim in every output artifact together with its hash.

#include <optional>
#include <set>
#include <string>

#include "veritracer/dataset.hpp"
#include "veritracer/eval.hpp"
#include "veritracer/serialize.hpp"
#include "veritracer/toml.hpp"
#include "veritracer/trainer.hpp"

namespace veritracer {

struct DatasetConfig {
  std::string kind = "blobs";  // "blobs" or "csv"
  BlobsSpec blobs;
  std::string csv_path;
  std::string schema_path;
};

struct RunConfig {
  DatasetConfig dataset;
  ArchSpec arch;
  TrainConfig train;
  MultiplicitySpec multiplicity;
  FleetSpec fleet;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  std::string raw_text;  // verbatim source document

  std::string hash() const { return fnv1a_hex(raw_text); }
};

namespace detail {

inline void reject_unknown_keys(const toml::Value& table, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [k, v] : table.table())
    if (!known.count(k))
      throw std::runtime_error("config: unknown key '" + k + "' in [" + where + "]");
}

inline double get_number(const toml::Value& t, const std::string& key, double dflt) {
  const toml::Value* v = t.find(key);
  return v ? v->number() : dflt;
}
inline std::int64_t get_int(const toml::Value& t, const std::string& key, std::int64_t dflt) {
  const toml::Value* v = t.find(key);
  return v ? v->integer() : dflt;
}
inline std::string get_string(const toml::Value& t, const std::string& key,
                              const std::string& dflt) {
  const toml::Value* v = t.find(key);
  return v ? v->string() : dflt;
}
inline bool get_bool(const toml::Value& t, const std::string& key, bool dflt) {
  const toml::Value* v = t.find(key);
  return v ? v->boolean() : dflt;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  toml::Value root = toml::parse(text);
  RunConfig cfg;
  cfg.raw_text = text;
  cfg.multiplicity.kappa = 0.05;

  detail::reject_unknown_keys(
      root, {"dataset", "arch", "train", "multiplicity", "loss", "fleet", "output_dir", "seed"},
      "root");
  cfg.output_dir = detail::get_string(root, "output_dir", "out");
  cfg.seed = static_cast<std::uint64_t>(detail::get_int(root, "seed", 0));

  if (const toml::Value* d = root.find("dataset")) {
    detail::reject_unknown_keys(*d,
                                {"kind", "n", "separation", "sigma", "test_fraction",
                                 "shift_points", "path", "schema"},
                                "dataset");
    cfg.dataset.kind = detail::get_string(*d, "kind", "blobs");
    if (cfg.dataset.kind != "blobs" && cfg.dataset.kind != "csv")
      throw std::runtime_error("config: dataset.kind must be 'blobs' or 'csv'");
    cfg.dataset.blobs.n = static_cast<std::size_t>(detail::get_int(*d, "n", 500));
    cfg.dataset.blobs.separation = detail::get_number(*d, "separation", 3.0);
    cfg.dataset.blobs.sigma = detail::get_number(*d, "sigma", 1.0);
    cfg.dataset.blobs.test_fraction = detail::get_number(*d, "test_fraction", 0.2);
    cfg.dataset.blobs.shift_points =
        static_cast<std::size_t>(detail::get_int(*d, "shift_points", 0));
    cfg.dataset.csv_path = detail::get_string(*d, "path", "");
    cfg.dataset.schema_path = detail::get_string(*d, "schema", "");
    if (cfg.dataset.kind == "csv" && (cfg.dataset.csv_path.empty() || cfg.dataset.schema_path.empty()))
      throw std::runtime_error("config: csv dataset needs 'path' and 'schema'");
  }

  if (const toml::Value* a = root.find("arch")) {
    detail::reject_unknown_keys(*a, {"encoder_hidden", "cf_hidden"}, "arch");
    if (const toml::Value* v = a->find("encoder_hidden")) {
      cfg.arch.encoder_hidden.clear();
      for (const auto& x : v->array())
        cfg.arch.encoder_hidden.push_back(static_cast<std::size_t>(x.integer()));
    }
    if (const toml::Value* v = a->find("cf_hidden")) {
      cfg.arch.cf_hidden.clear();
      for (const auto& x : v->array())
        cfg.arch.cf_hidden.push_back(static_cast<std::size_t>(x.integer()));
    }
  }

  if (const toml::Value* t = root.find("train")) {
    detail::reject_unknown_keys(*t,
                                {"max_epochs", "batch_size", "learning_rate", "adam_beta1",
                                 "adam_beta2", "adam_eps", "kappa_ramp"},
                                "train");
    cfg.train.max_epochs = static_cast<std::size_t>(detail::get_int(*t, "max_epochs", 100));
    cfg.train.batch_size = static_cast<std::size_t>(detail::get_int(*t, "batch_size", 128));
    cfg.train.learning_rate = detail::get_number(*t, "learning_rate", 1e-3);
    cfg.train.adam_beta1 = detail::get_number(*t, "adam_beta1", 0.9);
    cfg.train.adam_beta2 = detail::get_number(*t, "adam_beta2", 0.999);
    cfg.train.adam_eps = detail::get_number(*t, "adam_eps", 1e-8);
    cfg.train.kappa_ramp = detail::get_bool(*t, "kappa_ramp", true);
  }

  if (const toml::Value* m = root.find("multiplicity")) {
    detail::reject_unknown_keys(*m, {"norm", "kappa", "explicit_delta"}, "multiplicity");
    const std::string norm = detail::get_string(*m, "norm", "linf");
    if (norm == "linf") cfg.multiplicity.p = NormOrder::Linf;
    else if (norm == "l2") cfg.multiplicity.p = NormOrder::L2;
    else throw std::runtime_error("config: multiplicity.norm must be 'linf' or 'l2'");
    cfg.multiplicity.kappa = detail::get_number(*m, "kappa", 0.05);
    if (const toml::Value* v = m->find("explicit_delta"))
      cfg.multiplicity.explicit_delta = v->number();
  }
  cfg.train.kappa = cfg.multiplicity.kappa;
  cfg.train.p = cfg.multiplicity.p;

  if (const toml::Value* l = root.find("loss")) {
    detail::reject_unknown_keys(*l, {"lambda1", "lambda2", "lambda3", "lambda4", "method"},
                                "loss");
    cfg.train.weights.lambda1 = detail::get_number(*l, "lambda1", 1.0);
    cfg.train.weights.lambda2 = detail::get_number(*l, "lambda2", 0.5);
    cfg.train.weights.lambda3 = detail::get_number(*l, "lambda3", 0.2);
    cfg.train.weights.lambda4 = detail::get_number(*l, "lambda4", 1.0);
    cfg.train.weights.method =
        method_from_name(detail::get_string(*l, "method", "simul-crown"));
    cfg.train.weights.validate();
  }

  if (const toml::Value* f = root.find("fleet")) {
    detail::reject_unknown_keys(*f,
                                {"variation", "fleet_size", "loo_drop_fraction",
                                 "ds_finetune_epochs", "ds_trials"},
                                "fleet");
    const std::string v = detail::get_string(*f, "variation", "ri");
    if (v == "ri") cfg.fleet.variation = FleetVariation::RI;
    else if (v == "loo") cfg.fleet.variation = FleetVariation::LOO;
    else if (v == "ds") cfg.fleet.variation = FleetVariation::DS;
    else throw std::runtime_error("config: fleet.variation must be ri, loo or ds");
    cfg.fleet.fleet_size = static_cast<std::size_t>(detail::get_int(*f, "fleet_size", 10));
    cfg.fleet.loo_drop_fraction = detail::get_number(*f, "loo_drop_fraction", 0.01);
    cfg.fleet.ds_finetune_epochs =
        static_cast<std::size_t>(detail::get_int(*f, "ds_finetune_epochs", 20));
    cfg.fleet.ds_trials = static_cast<std::size_t>(detail::get_int(*f, "ds_trials", 3));
  }

  cfg.train.seed = cfg.seed;
  cfg.fleet.base_seed = cfg.seed;
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

// Schema spec TOML: parallel `names` / `kinds` arrays plus label metadata.
inline CsvSchemaSpec load_schema_spec(const std::string& path) {
  toml::Value root = toml::parse_file(path);
  detail::reject_unknown_keys(root, {"names", "kinds", "label", "label_kind", "test_fraction"},
                              "schema");
  CsvSchemaSpec spec;
  const toml::Value* names = root.find("names");
  const toml::Value* kinds = root.find("kinds");
  if (!names || !kinds || names->array().size() != kinds->array().size())
    throw std::runtime_error("schema: need parallel 'names' and 'kinds' arrays");
  for (std::size_t i = 0; i < names->array().size(); ++i) {
    ColumnSpec c;
    c.name = names->array()[i].string();
    const std::string k = kinds->array()[i].string();
    if (k == "continuous") c.kind = ColumnSpec::Kind::Continuous;
    else if (k == "categorical") c.kind = ColumnSpec::Kind::Categorical;
    else throw std::runtime_error("schema: kind must be continuous or categorical");
    spec.columns.push_back(std::move(c));
  }
  const toml::Value* label = root.find("label");
  if (!label) throw std::runtime_error("schema: missing 'label'");
  spec.label_column = label->string();
  spec.label_kind = detail::get_string(root, "label_kind", "binary");
  if (spec.label_kind != "binary" && spec.label_kind != "median")
    throw std::runtime_error("schema: label_kind must be binary or median");
  spec.test_fraction = detail::get_number(root, "test_fraction", 0.2);
  return spec;
}

inline SplitDataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.kind == "blobs") return make_blobs(cfg.dataset.blobs, cfg.seed);
  return load_csv(cfg.dataset.csv_path, load_schema_spec(cfg.dataset.schema_path), cfg.seed);
}

}  // namespace veritracer
