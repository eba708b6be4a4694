#include "splitscale/scenario.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace splitscale;
using namespace splitscale::scenario;

namespace {

constexpr std::string_view kSmall = R"(# small split run
sim name=small seed=4 duration_s=100 stop_height=16 compression=1000
consensus capacity=10 subchain_bits=3 eigen_bits=7 subsidy=5000 eigen_window=2-12

node name=m role=miner hashpower=1
node name=f role=full
node name=h role=half follow=w:3
link a=m b=f latency_ms=20
link a=f b=h latency_ms=15

wallet name=w node=m keys=16 coins=64 value=100000
demand wallet=w rate=60 fee=50
split at_height=4 mode=logical
eigentx wallet=w from=1 to=0 amount=1000 at_height=6
)";

std::vector<Diagnostic> errors(std::string_view text) {
  auto r = parse_scenario(text);
  if (r) return {};
  return r.error();
}

bool mentions(const std::vector<Diagnostic>& ds, std::size_t line, std::string_view needle) {
  for (const auto& d : ds) {
    if (d.line == line && d.message.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Scenario, ParsesEveryDirective) {
  auto r = parse_scenario(kSmall);
  ASSERT_TRUE(r) << r.error().front().str();
  const auto& c = r.value().config;
  EXPECT_EQ(c.name, "small");
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.duration_ms, 100'000u);
  EXPECT_EQ(c.stop_height, 16u);
  EXPECT_EQ(c.params.target_interval_ms, 600u);
  EXPECT_EQ(c.params.block_tx_capacity, 10u);
  EXPECT_EQ(c.params.initial_targets.subchain, crypto::target_from_bits(3));
  EXPECT_EQ(c.params.eigentx_window, (xfer::EigenWindow{2, 12}));
  ASSERT_EQ(c.nodes.size(), 3u);
  EXPECT_EQ(c.nodes[2].role, node::Role::Half);
  EXPECT_EQ(c.nodes[2].follow_wallet, "w");
  EXPECT_EQ(c.nodes[2].follow_key, 3u);
  ASSERT_EQ(c.links.size(), 2u);
  EXPECT_EQ(c.links[1].a, 1u);
  EXPECT_EQ(c.links[1].b, 2u);
  EXPECT_EQ(c.links[1].latency_ms, 15u);
  ASSERT_EQ(c.wallets.size(), 1u);
  EXPECT_EQ(c.wallets[0].coins, 64u);
  EXPECT_EQ(c.demand[0].fee, 50u);
  ASSERT_EQ(c.params.splits.size(), 1u);
  EXPECT_EQ(c.params.splits[0].height, 4u);
  ASSERT_EQ(c.actions.size(), 1u);
  const auto& e = std::get<netsim::EigentxAction>(c.actions[0].body);
  EXPECT_EQ(e.from, 1u);
  EXPECT_EQ(e.amount, 1000u);
  EXPECT_EQ(r.value().metrics, all_metric_groups());
}

TEST(Scenario, PartitionExpandsToCrossingLinks) {
  auto r = parse_scenario(
      "node name=a role=miner\nnode name=b role=full\nnode name=c role=full\n"
      "link a=a b=b\nlink a=b b=c\nlink a=a b=c\n"
      "partition group=a from_s=1 to_s=2\noutage a=c b=b from_ms=5 to_ms=9\n");
  ASSERT_TRUE(r) << r.error().front().str();
  const auto& o = r.value().config.outages;
  ASSERT_EQ(o.size(), 3u);
  EXPECT_EQ(o[0].link, 0u);
  EXPECT_EQ(o[1].link, 2u);
  EXPECT_EQ(o[0].from_ms, 1000u);
  EXPECT_EQ(o[2].link, 1u);
  EXPECT_EQ(o[2].to_ms, 9u);
}

TEST(Scenario, ReportsLineAndColumn) {
  auto ds = errors("node name=m role=miner\nnode name=f role=full colour=red\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].line, 2u);
  EXPECT_EQ(ds[0].column, 23u);
  EXPECT_EQ(ds[0].str(), "line 2 col 23: unknown key 'colour' for 'node'");
}

TEST(Scenario, CollectsEveryProblem) {
  auto ds = errors(
      "frobnicate x=1\n"                               // 1
      "node name=m role=miner role=full\n"             // 2
      "node role=full\n"                               // 3
      "node name=f role=sideways\n"                    // 4
      "link a=m b=nowhere latency_ms=ten\n"            // 5
      "wallet name=w node=m coins=-3\n"                // 6
      "split at_height=9\n"                            // 7
      "split at_height=4\n"                            // 8
      "metrics include=confirmed,colours\n"            // 9
      "sim compression=0 dangling\n");                 // 10
  EXPECT_TRUE(mentions(ds, 1, "unknown directive 'frobnicate'"));
  EXPECT_TRUE(mentions(ds, 2, "duplicate key 'role'"));
  EXPECT_TRUE(mentions(ds, 3, "needs name="));
  EXPECT_TRUE(mentions(ds, 4, "role must be"));
  EXPECT_TRUE(mentions(ds, 5, "latency_ms"));
  EXPECT_TRUE(mentions(ds, 5, "unknown node 'nowhere'"));
  EXPECT_TRUE(mentions(ds, 6, "coins"));
  EXPECT_TRUE(mentions(ds, 8, "must be sorted"));
  EXPECT_TRUE(mentions(ds, 9, "unknown metric group 'colours'"));
  EXPECT_TRUE(mentions(ds, 10, "expected key=value"));
  EXPECT_FALSE(mentions(ds, 7, ""));
}

TEST(Scenario, ConfigValidationBecomesFileDiagnostic) {
  auto ds = errors("node name=a role=miner\nnode name=b role=full\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].line, 0u);
  EXPECT_NE(ds[0].str().find("scenario: "), std::string::npos);
}

TEST(Scenario, MissingFile) {
  auto r = load_scenario("/nonexistent/scenario.txt");
  ASSERT_FALSE(r);
  EXPECT_NE(r.error()[0].message.find("cannot read"), std::string::npos);
}

TEST(Scenario, RunWritesDeterministicOutputs) {
  auto s = parse_scenario(kSmall).value();
  const auto base = std::filesystem::temp_directory_path() / "splitscale_scenario_test";
  std::filesystem::remove_all(base);
  auto a = run_scenario(s, base / "a");
  auto b = run_scenario(s, base / "b");
  for (const char* f : {"metrics.csv", "summary.txt", "trace.log", "chainstate.export", "blocks.bin"}) {
    EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
    EXPECT_FALSE(slurp(base / "a" / f).empty()) << f;
  }
  const auto csv = slurp(base / "a" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_NE(csv.find("\nconfirmed,16,,1,txs,"), std::string::npos);
  EXPECT_NE(csv.find("\nstats,,h,,tip_height,16\n"), std::string::npos);
  EXPECT_EQ(a.report.trace_digest, crypto::double_sha256(as_bytes(slurp(base / "a" / "trace.log"))));
  EXPECT_EQ(a.report.chainstate_digest, crypto::double_sha256(as_bytes(slurp(base / "a" / "chainstate.export"))));
  const auto summary = slurp(base / "a" / "summary.txt");
  EXPECT_NE(summary.find("trace_digest " + a.report.trace_digest.hex() + "\n"), std::string::npos);
  ASSERT_TRUE(a.summary.scale_factor.has_value());
  ASSERT_TRUE(a.summary.bandwidth_ratio.has_value());
  EXPECT_LT(*a.summary.bandwidth_ratio, 1.0);
  std::filesystem::remove_all(base);
}

// The CSV header and every record/kind pair a depth-2 run emits. Per-message
// byte kinds are folded into <kind>_recv and <kind>_sent.
TEST(Scenario, MetricsSchemaMatchesGolden) {
  auto s = load_scenario(std::filesystem::path(SPLITSCALE_TEST_DATA) / "../../scenarios/depth2.txt").value();
  auto r = netsim::run_simulation(s.config);
  std::istringstream csv(metrics_csv(s, r));
  std::string line;
  std::getline(csv, line);
  std::string schema = line + "\n";
  std::set<std::string> pairs;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    ASSERT_GE(f.size(), 5u) << line;
    std::string kind = f[4];
    if (f[0] == "bytes") kind = "<kind>_" + kind.substr(kind.size() - 4);
    pairs.insert(f[0] + "," + kind);
  }
  for (const auto& p : pairs) schema += p + "\n";
  EXPECT_EQ(schema, slurp(std::filesystem::path(SPLITSCALE_TEST_DATA) / "metrics_schema.golden"));
}

TEST(Scenario, MetricsSelection) {
  auto s = parse_scenario(std::string(kSmall) + "metrics include=fees\n").value();
  auto r = netsim::run_simulation(s.config);
  std::istringstream csv(metrics_csv(s, r));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) EXPECT_EQ(line.rfind("fees,", 0), 0u) << line;
}
