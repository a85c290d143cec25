// memarray: runs the two-stage multi-stream recipe stage by stage.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error
// (missing, corrupt or mismatched artifacts), 3 numeric failure.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "memarray/config.hpp"
#include "memarray/errors.hpp"
#include "memarray/experiment.hpp"
#include "memarray/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "corpus and training seed");
  cmd->add_option("--out", c.out, "run directory")->required();
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

mema::RunOptions options(const Common& c) {
  mema::RunOptions o;
  o.cfg = c.config.empty() ? mema::ExperimentConfig::defaults()
                           : mema::ExperimentConfig::from_json(mema::read_file(c.config));
  o.cfg.validate();
  o.seed = c.seed;
  o.layout = mema::RunLayout::under(c.out);
  o.jobs = c.jobs;
  o.log = [](const std::string& line) { std::cerr << line << std::endl; };
  return o;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const mema::ConfigError*>(&e)) return 1;
  if (dynamic_cast<const mema::NumericError*>(&e)) return 3;
  if (dynamic_cast<const mema::InvariantError*>(&e)) return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memarray: two-stage multi-stream CTC/attention recognizer on synthetic data"};
  app.require_subcommand(1);

  Common c;
  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    add_common(s, c);
    return s;
  };
  CLI::App* gen = sub("gen-data", "generate train/dev/test features");
  CLI::App* s1 = sub("train-stage1", "train the single-stream model on pooled streams");
  CLI::App* ufe = sub("extract-ufe", "encode every split with the Stage-1 encoder");
  CLI::App* s2 = sub("train-stage2", "train the stream attention on UFE features");
  CLI::App* dec = sub("decode", "beam-search every test condition and fusion mode");
  CLI::App* score = sub("score", "token error rates per condition and system");
  CLI::App* report = sub("report", "condition x system table (report.csv, report.json)");
  CLI::App* run = sub("run", "gen-data through report");
  CLI::App* sweep = sub("sweep", "Stage-2 data-fraction sweep on an existing run");
  CLI::App* show = app.add_subcommand("show-config", "print the effective config with every default");
  show->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (show->parsed()) {
      const auto cfg = c.config.empty() ? mema::ExperimentConfig::defaults()
                                        : mema::ExperimentConfig::from_json(mema::read_file(c.config));
      std::cout << cfg.to_json() << "\n";
      return 0;
    }
    const mema::RunOptions o = options(c);
    if (gen->parsed()) mema::cmd_gen_data(o);
    if (s1->parsed()) mema::cmd_train_stage1(o);
    if (ufe->parsed()) mema::cmd_extract_ufe(o);
    if (s2->parsed()) mema::cmd_train_stage2(o);
    if (dec->parsed()) mema::cmd_decode(o);
    if (score->parsed()) mema::cmd_score(o);
    if (report->parsed()) std::cout << mema::cmd_report(o).to_csv();
    if (run->parsed()) std::cout << mema::cmd_all(o).to_csv();
    if (sweep->parsed()) mema::cmd_sweep(o, c.out);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "memarray: " << e.what() << std::endl;
    return exit_code(e);
  }
}
