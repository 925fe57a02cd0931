// vlbc: run / ablate / report / inspect-stats

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlbc/dataset_io.hpp"
#include "vlbc/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string method;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "experiment config (JSON, or a run manifest)");
  cmd->add_option("--seed", o.seeds, "seed(s) to run instead of the configured list");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--method", o.method, "single method to run");
}

vlbc::ExperimentConfig resolve(const Overrides& o) {
  vlbc::ExperimentConfig cfg = o.config.empty() ? vlbc::ExperimentConfig::defaults() : vlbc::load_config(o.config);
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.method.empty()) cfg.methods = {vlbc::method_from_string(o.method)};
  cfg.validate();
  return cfg;
}

std::string cell(const vlbc::MeanStd& m) {
  if (m.count == 0) return "--";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f +- %.2f", m.mean, m.stddev);
  return buf;
}

int cmd_run(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto rows = vlbc::run_experiment(cfg);
  std::cout << vlbc::results_csv_header() << "\n";
  for (const auto& r : rows) std::cout << vlbc::results_csv_row(r) << "\n";
  return 0;
}

int cmd_ablate(const Overrides& o, const std::vector<double>& fractions) {
  const auto cfg = resolve(o);
  const auto rows = vlbc::run_ablation(cfg, fractions);
  std::cout << "wrote " << rows.size() << " sweep rows to " << (fs::path(cfg.output_dir) / "ablation.csv").string()
            << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "results.csv";
    files.push_back(p);
  }
  const auto summary = vlbc::summarize(files);
  std::ostringstream csv;
  csv << "task,method,n,accuracy_mean,accuracy_std,f1_mean,f1_std,acc_diff_mean,acc_diff_std,abs_acc_diff_mean,"
         "abs_acc_diff_std,delta_A_mean,delta_A_std,delta_M_mean,delta_M_std\n";
  auto pair = [](const vlbc::MeanStd& m) {
    if (m.count == 0) return std::string("--,--");
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", m.mean, m.stddev);
    return std::string(buf);
  };
  std::printf("%-8s %-20s %-16s %-16s %-16s %-16s %-16s\n", "task", "method", "accuracy", "f1", "acc_diff",
              "delta_A", "delta_M");
  for (const auto& s : summary) {
    const auto& a = s.aggregate;
    csv << s.task << "," << s.method << "," << a.accuracy.count << "," << pair(a.accuracy) << "," << pair(a.f1) << ","
        << pair(a.acc_diff) << "," << pair(a.abs_acc_diff) << "," << pair(a.delta_a) << "," << pair(a.delta_m)
        << "\n";
    std::printf("%-8s %-20s %-16s %-16s %-16s %-16s %-16s\n", s.task.c_str(), s.method.c_str(),
                cell(a.accuracy).c_str(), cell(a.f1).c_str(), cell(a.acc_diff).c_str(), cell(a.delta_a).c_str(),
                cell(a.delta_m).c_str());
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw vlbc::InputError("cannot write " + out);
    f << csv.str();
  }
  return 0;
}

void print_stats(const vlbc::DatasetStats& st, const std::string& label) {
  std::printf("%s  (attribute %d, n=%zu)\n", label.c_str(), st.attribute_index, st.total);
  std::printf("            p=0      p=1\n");
  for (int a = 0; a < 2; ++a) std::printf("  a=%d  %7zu  %7zu\n", a, st.counts[a][0], st.counts[a][1]);
  std::printf("  minority protected class: %d%s\n", st.minority_protected, st.tie ? " (tie)" : "");
  std::printf("  deficits: a=0 %zu, a=1 %zu\n", st.deficits[0], st.deficits[1]);
}

int cmd_inspect(const Overrides& o, const std::string& dataset, int attribute) {
  if (!dataset.empty()) {
    std::ifstream in(dataset, std::ios::binary);
    if (!in) throw vlbc::InputError("cannot open " + dataset);
    const auto data = vlbc::read_dataset(in);
    print_stats(vlbc::compute_stats(data, attribute), dataset);
    return 0;
  }
  const auto cfg = resolve(o);
  const auto world = vlbc::make_world(cfg.world);
  for (auto seed : cfg.seeds) {
    const auto train = vlbc::sample_real_dataset(cfg.train_size, cfg.bias, world,
                                                 vlbc::derive_seed(seed, vlbc::tag_of("train-set"), 0));
    print_stats(vlbc::compute_stats(train, cfg.bias.attribute_index), "seed " + std::to_string(seed) + " X_r");
  }
  return 0;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale vision-language bias control"};
  app.require_subcommand(1);

  Overrides run_o, ablate_o, inspect_o;
  auto* run = app.add_subcommand("run", "run the configured methods for every seed");
  add_common(run, run_o);

  auto* ablate = app.add_subcommand("ablate", "minority-fraction sweep");
  add_common(ablate, ablate_o);
  std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  ablate->add_option("--fractions", fractions, "minority fractions in (0, 1]")->delimiter(',');

  auto* report = app.add_subcommand("report", "aggregate results.csv files (mean +- population std)");
  std::vector<std::string> inputs;
  std::string report_out;
  report->add_option("inputs", inputs, "run directories or results.csv files")->required();
  report->add_option("--out", report_out, "write the summary CSV here");

  auto* inspect = app.add_subcommand("inspect-stats", "print attribute x protected count tables");
  add_common(inspect, inspect_o);
  std::string dataset;
  int attribute = 0;
  inspect->add_option("--dataset", dataset, "dataset file instead of a config");
  inspect->add_option("--attribute", attribute, "attribute index for --dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 64);
  }

  try {
    if (*run) return cmd_run(run_o);
    if (*ablate) return cmd_ablate(ablate_o, fractions);
    if (*report) return cmd_report(inputs, report_out);
    if (*inspect) return cmd_inspect(inspect_o, dataset, attribute);
  } catch (const vlbc::ConfigError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const vlbc::Error& e) {
    return fail(e.kind(), e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
