// Batch CLI for joint training, certification, counterfactual generation
// and fleet evaluation.
//
// Exit codes: 0 ok, 1 not-certified, 2 usage/config error, 3 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "veritracer/veritracer.hpp"

namespace vt = veritracer;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotCertified = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::vector<std::string> expanded_feature_names(const vt::FeatureSchema& schema) {
  std::vector<std::string> names;
  for (const auto& f : schema.features) {
    if (f.continuous()) {
      names.push_back(f.name);
    } else {
      for (std::size_t k = 0; k < f.cardinality; ++k)
        names.push_back(f.name + "#" + std::to_string(k));
    }
  }
  return names;
}

void write_inputs_csv(const std::string& path, const vt::FeatureSchema& schema,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<int>* labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  const auto names = expanded_feature_names(schema);
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  if (labels) out << ",label";
  out << "\n";
  for (std::size_t r = 0; r < xs.size(); ++r) {
    for (std::size_t i = 0; i < xs[r].size(); ++i)
      out << (i ? "," : "") << vt::double_to_string(xs[r][i]);
    if (labels) out << "," << (*labels)[r];
    out << "\n";
  }
}

// Reads preprocessed feature rows; columns are matched to the schema's
// expanded names, extra columns are ignored.
std::vector<std::vector<double>> read_inputs_csv(const std::string& path,
                                                 const vt::FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty input file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) header.push_back(cell);

  const auto names = expanded_feature_names(schema);
  std::vector<std::size_t> col(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = std::find(header.begin(), header.end(), names[i]);
    if (it == header.end())
      throw std::invalid_argument("input CSV is missing feature column '" + names[i] +
                                  "' (schema mismatch)");
    col[i] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    std::vector<double> row(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (col[i] >= cells.size()) throw std::runtime_error("ragged row in " + path);
      row[i] = vt::string_to_double(cells[col[i]]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest(const vt::RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& artifacts) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = cfg.hash();
  j["config_text"] = cfg.raw_text;
  j["artifacts"] = artifacts;
  write_text((fs::path(cfg.output_dir) / "manifest.json").string(), j.dump(2) + "\n");
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override) {
  vt::RunConfig cfg = vt::load_run_config(config_path);
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.train.seed = *seed_override;
    cfg.fleet.base_seed = *seed_override;
  }
  fs::create_directories(cfg.output_dir);
  vt::SplitDataset ds = vt::load_dataset(cfg);
  vt::TrainResult res = vt::train(ds, cfg.arch, cfg.train);

  const fs::path out(cfg.output_dir);
  vt::save_model((out / "model.json").string(), res.model, cfg.hash());

  std::string log;
  for (const auto& e : res.log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss-f"] = e.loss_f;
    j["loss-g"] = e.loss_g;
    j["acc"] = e.accuracy;
    j["validity"] = e.validity;
    j["cert-rate"] = e.cert_rate;
    log += j.dump() + "\n";
  }
  write_text((out / "train_log.jsonl").string(), log);
  write_inputs_csv((out / "test_inputs.csv").string(), ds.schema, ds.test_x, &ds.test_y);
  write_manifest(cfg, "train",
                 {"model.json", "train_log.jsonl", "test_inputs.csv"});

  const auto& last = res.log.back();
  std::cout << "trained " << cfg.train.max_epochs << " epochs; test acc " << last.accuracy
            << ", validity " << last.validity << ", cert-rate " << last.cert_rate << "\n";
  return kExitOk;
}

int cmd_certify(const std::string& model_path, const std::string& data_path,
                const std::string& method_name, double kappa, const std::string& norm,
                const std::string& output_path) {
  vt::JointModel model = vt::load_model(model_path);
  const auto xs = read_inputs_csv(data_path, model.schema);
  if (xs.empty()) throw std::runtime_error("certify: no input rows");

  vt::MultiplicitySpec spec;
  spec.kappa = kappa;
  spec.p = norm == "l2" ? vt::NormOrder::L2 : vt::NormOrder::Linf;
  const vt::BoundMethod method = vt::method_from_name(method_name);
  const std::string fp = vt::model_fingerprint(model);

  std::vector<vt::Certificate> certs(xs.size());
  vt::parallel_for(xs.size(), [&](std::size_t i) {
    const auto cf = vt::generate_cf(model, xs[i]);
    certs[i] = vt::certify_pair(model, spec, xs[i], cf, method, i, fp);
  });
  std::size_t robust = 0;
  for (const auto& c : certs) robust += c.robust ? 1 : 0;

  if (!output_path.empty()) write_text(output_path, vt::certificates_to_json(certs));
  const double rate = static_cast<double>(robust) / static_cast<double>(certs.size());
  std::cout << "robustness rate " << rate << " (" << robust << "/" << certs.size()
            << ", method " << method_name << ", kappa " << kappa << ")\n";
  return robust == certs.size() ? kExitOk : kExitNotCertified;
}

int cmd_gen_cf(const std::string& model_path, const std::string& input_path,
               const std::string& output_path, bool timing) {
  vt::JointModel model = vt::load_model(model_path);
  const auto xs = read_inputs_csv(input_path, model.schema);

  std::ofstream out(output_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + output_path);
  const auto names = expanded_feature_names(model.schema);
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << "cf_" << names[i];
  out << ",valid,proximity,sparsity\n";

  double total_seconds = 0.0;
  for (const auto& x : xs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cf = vt::generate_cf(model, x);
    total_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const int pred = vt::predict_hard(model, x);
    const bool valid = vt::predict_hard(model, cf) == 1 - pred;
    double prox = 0.0, spars = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      prox += std::fabs(x[i] - cf[i]);
      if (std::fabs(x[i] - cf[i]) > 1e-9) spars += 1.0;
    }
    prox /= static_cast<double>(x.size());
    spars /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < cf.size(); ++i)
      out << (i ? "," : "") << vt::double_to_string(cf[i]);
    out << "," << (valid ? 1 : 0) << "," << vt::double_to_string(prox) << ","
        << vt::double_to_string(spars) << "\n";
  }
  if (timing && !xs.empty())
    std::cout << "mean per-CF latency " << total_seconds / static_cast<double>(xs.size())
              << " s over " << xs.size() << " instances\n";
  std::cout << "wrote " << xs.size() << " counterfactuals to " << output_path << "\n";
  return kExitOk;
}

int cmd_eval_xmodel(const std::string& config_path, const std::string& variation,
                    std::optional<std::uint64_t> seed_override) {
  vt::RunConfig cfg = vt::load_run_config(config_path);
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.train.seed = *seed_override;
    cfg.fleet.base_seed = *seed_override;
  }
  fs::create_directories(cfg.output_dir);

  vt::EvalReport report;
  report.variation = variation;

  if (variation == "ds") {
    cfg.fleet.variation = vt::FleetVariation::DS;
    vt::BlobsSpec spec = cfg.dataset.blobs;
    if (spec.shift_points == 0) spec.shift_points = spec.n / 5;
    for (std::size_t trial = 0; trial < cfg.fleet.ds_trials; ++trial) {
      auto [original, shifted] = vt::make_synthetic_shift(spec, cfg.seed + 7919 * trial);
      vt::TrainConfig tc = cfg.train;
      tc.seed = cfg.seed + trial;
      vt::JointModel base = vt::train(original, cfg.arch, tc).model;
      vt::JointModel moved =
          vt::finetune(base, shifted, cfg.fleet.ds_finetune_epochs, tc).model;
      report.ds_trial_rates.push_back(vt::ds_validity(base, moved, original.test_x));
    }
    report.ds_rate = vt::mean_std(report.ds_trial_rates);
    // Quality metrics from the final trial's base model.
    auto [original, shifted] = vt::make_synthetic_shift(spec, cfg.seed);
    vt::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    vt::JointModel base = vt::train(original, cfg.arch, tc).model;
    std::vector<double> prox, spars, ddm;
    for (const auto& x : original.test_x) {
      const auto cf = vt::generate_cf(base, x);
      auto q = vt::quality_metrics(x, cf, original.train_x);
      prox.push_back(q.proximity);
      spars.push_back(q.sparsity);
      ddm.push_back(q.ddm);
    }
    report.proximity = vt::mean_std(prox);
    report.sparsity = vt::mean_std(spars);
    report.ddm = vt::mean_std(ddm);
  } else {
    cfg.fleet.variation =
        variation == "loo" ? vt::FleetVariation::LOO : vt::FleetVariation::RI;
    vt::SplitDataset ds = vt::load_dataset(cfg);
    auto fleet = vt::train_fleet(ds, cfg.arch, cfg.train, cfg.fleet);
    report.cross_model = vt::cross_model_validity(fleet, ds.test_x);
    std::vector<double> prox, spars, ddm;
    for (const auto& x : ds.test_x) {
      const auto cf = vt::generate_cf(fleet[0], x);
      auto q = vt::quality_metrics(x, cf, ds.train_x);
      prox.push_back(q.proximity);
      spars.push_back(q.sparsity);
      ddm.push_back(q.ddm);
    }
    report.proximity = vt::mean_std(prox);
    report.sparsity = vt::mean_std(spars);
    report.ddm = vt::mean_std(ddm);
  }

  const fs::path out(cfg.output_dir);
  const std::string base = "report_" + variation;
  write_text((out / (base + ".json")).string(),
             vt::report_to_json(report, cfg.hash()).dump(2) + "\n");
  write_text((out / (base + ".csv")).string(), vt::report_to_csv(report));
  write_manifest(cfg, "eval-xmodel", {base + ".json", base + ".csv"});
  std::cout << "validity (" << variation << ") mean "
            << (variation == "ds" ? report.ds_rate.mean : report.cross_model.rate.mean)
            << "\n";
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& inputs, bool force,
               const std::string& output_path) {
  nlohmann::ordered_json merged = nlohmann::ordered_json::array();
  std::string hash;
  for (const auto& path : inputs) {
    nlohmann::json j = nlohmann::json::parse(read_text(path));
    std::string h;
    if (j.is_array() && !j.empty() && j[0].contains("model_fingerprint"))
      h = "";  // certificate files carry fingerprints, not config hashes
    else if (j.contains("config_hash"))
      h = j["config_hash"].get<std::string>();
    if (!h.empty()) {
      if (hash.empty()) hash = h;
      else if (hash != h && !force)
        throw std::runtime_error("report: artifact " + path +
                                 " has mismatched config hash (use --force to override)");
    }
    nlohmann::ordered_json entry;
    entry["path"] = path;
    entry["content"] = j;
    merged.push_back(std::move(entry));
  }
  nlohmann::ordered_json out;
  out["config_hash"] = hash;
  out["artifacts"] = std::move(merged);
  const std::string text = out.dump(2) + "\n";
  if (output_path.empty()) std::cout << text;
  else write_text(output_path, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"veritracer: jointly trained, certifiably robust counterfactuals"};
  app.require_subcommand(1);

  std::string config_path, model_path, data_path, input_path, output_path;
  std::string method = "simul-crown", norm = "linf", variation = "ri";
  double kappa = 0.05;
  bool timing = false, force = false;
  std::optional<std::uint64_t> seed_override;
  std::vector<std::string> report_inputs;

  auto* train_cmd = app.add_subcommand("train", "train a joint model from a run config");
  train_cmd->add_option("--config", config_path, "run config (TOML)")->required();
  train_cmd->add_option("--seed", seed_override, "override the config seed");

  auto* certify_cmd =
      app.add_subcommand("certify", "certify generated counterfactuals for a dataset");
  certify_cmd->add_option("--model", model_path, "model JSON")->required();
  certify_cmd->add_option("--data", data_path, "preprocessed inputs CSV")->required();
  certify_cmd->add_option("--method", method, "ibp | crown-ibp | simul-crown");
  certify_cmd->add_option("--kappa", kappa, "multiplicity ratio");
  certify_cmd->add_option("--norm", norm, "linf | l2");
  certify_cmd->add_option("--output", output_path, "certificate JSON path");

  auto* gen_cmd = app.add_subcommand("gen-cf", "generate counterfactuals for a CSV");
  gen_cmd->add_option("--model", model_path, "model JSON")->required();
  gen_cmd->add_option("--input", input_path, "preprocessed inputs CSV")->required();
  gen_cmd->add_option("--output", output_path, "output CSV")->required();
  gen_cmd->add_flag("--timing", timing, "print mean per-CF latency");

  auto* eval_cmd = app.add_subcommand("eval-xmodel", "cross-model validity protocols");
  eval_cmd->add_option("--config", config_path, "run config (TOML)")->required();
  eval_cmd->add_option("--variation", variation, "ri | loo | ds")
      ->check(CLI::IsMember({"ri", "loo", "ds"}));
  eval_cmd->add_option("--seed", seed_override, "override the config seed");

  auto* report_cmd = app.add_subcommand("report", "aggregate artifacts into one summary");
  report_cmd->add_option("--inputs", report_inputs, "artifact JSON files")->required();
  report_cmd->add_flag("--force", force, "aggregate despite mismatched config hashes");
  report_cmd->add_option("--output", output_path, "summary JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, seed_override);
    if (*certify_cmd)
      return cmd_certify(model_path, data_path, method, kappa, norm, output_path);
    if (*gen_cmd) return cmd_gen_cf(model_path, input_path, output_path, timing);
    if (*eval_cmd) return cmd_eval_xmodel(config_path, variation, seed_override);
    if (*report_cmd) return cmd_report(report_inputs, force, output_path);
  } catch (const veritracer::toml::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const veritracer::TrainingNaNError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    // Config-shaped problems are usage errors.
    if (msg.rfind("config", 0) == 0 || msg.rfind("schema", 0) == 0) return kExitUsage;
    return kExitRuntime;
  }
  return kExitUsage;
}
