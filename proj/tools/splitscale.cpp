// splitscale: run, check, audit and replay split-ledger scenarios.
//
// Exit codes: 0 success, 1 scenario or configuration error, 2 invariant
// violation (failed audit, replay mismatch, invalid canonical block).

#include <CLI11.hpp>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "splitscale/chainstate_export.hpp"
#include "splitscale/scenario.hpp"

namespace fs = std::filesystem;
using namespace splitscale;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 1;
constexpr int kInvariant = 2;

std::optional<scenario::Scenario> load(const fs::path& file) {
  auto parsed = scenario::load_scenario(file);
  if (!parsed) {
    for (const auto& d : parsed.error()) std::cerr << file.string() << ": " << d.str() << '\n';
    return std::nullopt;
  }
  return std::move(parsed).value();
}

int run_one(const fs::path& file, const fs::path& out, std::optional<std::uint64_t> seed) {
  try {
    auto s = load(file);
    if (!s) return kConfig;
    if (seed) s->config.seed = *seed;
    auto r = scenario::run_scenario(*s, out);
    std::cout << s->config.name << ": height " << r.report.heights.size() << ", "
              << r.summary.tx_per_interval << " tx/interval";
    if (r.summary.scale_factor) std::cout << ", scale " << *r.summary.scale_factor;
    if (r.summary.bandwidth_ratio) std::cout << ", half/full bytes " << *r.summary.bandwidth_ratio;
    std::cout << ", trace " << r.report.trace_digest.hex() << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << file.string() << ": " << e.what() << '\n';
    return kConfig;
  } catch (const InvariantViolation& e) {
    std::cerr << file.string() << ": invariant violated: " << e.what() << '\n';
    return kInvariant;
  }
}

int cmd_run(const std::vector<fs::path>& files, const fs::path& out, std::optional<std::uint64_t> seed,
            std::size_t jobs) {
  if (files.size() == 1) return run_one(files[0], out, seed);

  // One child process per scenario, at most `jobs` at a time.
  int worst = kOk;
  std::size_t running = 0;
  auto reap = [&] {
    int status = 0;
    if (::wait(&status) < 0) return;
    --running;
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : kInvariant;
    worst = std::max(worst, code);
  };
  for (const auto& f : files) {
    while (running >= std::max<std::size_t>(jobs, 1)) reap();
    std::cout.flush();
    std::cerr.flush();
    pid_t pid = ::fork();
    if (pid < 0) {
      std::cerr << "fork failed\n";
      return kInvariant;
    }
    if (pid == 0) {
      int code = run_one(f, out / f.stem(), seed);
      std::cout.flush();
      std::cerr.flush();
      std::_Exit(code);
    }
    ++running;
  }
  while (running > 0) reap();
  return worst;
}

int cmd_check(const fs::path& file) {
  auto s = load(file);
  if (!s) return kConfig;
  std::cout << file.string() << ": ok (" << s->config.nodes.size() << " nodes, " << s->config.params.splits.size()
            << " splits)\n";
  return kOk;
}

int cmd_audit(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    std::cerr << "cannot read " << file.string() << '\n';
    return kConfig;
  }
  ledger::ParsedExport parsed;
  try {
    parsed = ledger::read_export(in);
  } catch (const DecodeError& e) {
    std::cerr << file.string() << ": " << e.what() << '\n';
    return kConfig;
  }
  auto report = ledger::audit_export(parsed);
  std::cout << "height " << parsed.header.height << " depth " << parsed.header.partition.depth << " total "
            << report.total_value;
  if (parsed.header.full) std::cout << " expected " << report.expected_value;
  std::cout << '\n';
  for (const auto& p : report.problems) std::cout << "problem: " << p << '\n';
  std::cout << (report.ok() ? "audit ok" : "audit FAILED") << '\n';
  return report.ok() ? kOk : kInvariant;
}

int cmd_replay(const fs::path& file, const fs::path& dir) {
  try {
    auto s = load(file);
    if (!s) return kConfig;
    std::ifstream blocks(dir / "blocks.bin", std::ios::binary);
    std::ifstream exported(dir / "chainstate.export", std::ios::binary);
    if (!blocks || !exported) {
      std::cerr << dir.string() << ": needs blocks.bin and chainstate.export\n";
      return kConfig;
    }
    std::stringstream recorded;
    recorded << exported.rdbuf();
    auto world = netsim::build_world(s->config);
    auto replayed = netsim::replay_blocks(world.params, world.genesis, netsim::read_blocks(blocks));
    auto digest = crypto::double_sha256(as_bytes(replayed));
    std::cout << "replayed digest " << digest.hex() << '\n';
    if (replayed != recorded.str()) {
      std::cout << "recorded digest " << crypto::double_sha256(as_bytes(recorded.str())).hex() << '\n';
      std::cerr << "replay does not match chainstate.export\n";
      return kInvariant;
    }
    std::cout << "replay matches\n";
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfig;
  } catch (const DecodeError& e) {
    std::cerr << "blocks.bin: " << e.what() << '\n';
    return kConfig;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kInvariant;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const char* level = std::getenv("SPLITSCALE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);

  CLI::App app{"Split-ledger scenario runner"};
  app.require_subcommand(1);

  std::vector<fs::path> run_files;
  fs::path run_out;
  std::optional<std::uint64_t> run_seed;
  std::size_t run_jobs = 1;
  auto* run = app.add_subcommand("run", "Run scenarios and write their outputs");
  run->add_option("scenario", run_files, "Scenario files")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Output directory (one subdirectory per scenario when several)")->required();
  run->add_option("--seed", run_seed, "Override the scenario seed");
  run->add_option("--jobs", run_jobs, "Scenarios run in parallel")->check(CLI::PositiveNumber);

  fs::path check_file;
  auto* check = app.add_subcommand("check", "Validate a scenario file");
  check->add_option("scenario", check_file)->required();

  fs::path audit_file;
  auto* audit = app.add_subcommand("audit", "Audit a chainstate export");
  audit->add_option("export", audit_file)->required();

  fs::path replay_file, replay_dir;
  auto* replay = app.add_subcommand("replay", "Re-connect a run's blocks and compare chainstates");
  replay->add_option("scenario", replay_file)->required()->check(CLI::ExistingFile);
  replay->add_option("outdir", replay_dir)->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(run_files, run_out, run_seed, run_jobs);
    if (*check) return cmd_check(check_file);
    if (*audit) return cmd_audit(audit_file);
    if (*replay) return cmd_replay(replay_file, replay_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvariant;
  }
  return kOk;
}
