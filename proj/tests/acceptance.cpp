// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Usage: acceptance <splitscale-cli> <scenario-dir>

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "splitscale/chainstate_export.hpp"
#include "splitscale/scenario.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace splitscale;
using namespace splitscale::testing;
using netsim::PayAction;
using netsim::PayVia;
using netsim::SimConfig;
using ledger::Height;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream out;
  out.precision(digits);
  out << std::fixed << v;
  return out.str();
}

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    } else if (pass) {
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Gate {
 public:
  Gate(fs::path cli, fs::path scenarios) : cli_(std::move(cli)), scenarios_(std::move(scenarios)) {
    work_ = fs::temp_directory_path() / ("splitscale-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(work_);
    fs::create_directories(work_);
  }
  ~Gate() { fs::remove_all(work_); }

  int run() {
    criterion(1, "throughput scales with split depth", [&] { return throughput(); });
    criterion(2, "half-node block bandwidth", [&] { return bandwidth(); });
    criterion(3, "deterministic split of 10,000 UTXOs", [&] { return deterministic_split(); });
    criterion(6, "straddling transactions rejected", [&] { return straddling(); });
    criterion(7, "HTLC adversarial schedules", [&] { return htlc_suite(); });
    criterion(8, "eigentransaction rules and consolidation", [&] { return eigentx_rules(); });
    criterion(5, "mutation fuzzing and tip heights", [&] { return mutations(); });
    criterion(10, "trace determinism", [&] { return determinism(); });
    criterion(9, "replay oracle", [&] { return replay(); });
    // Conservation covers every export produced above.
    criterion(4, "supply conservation via splitscale audit", [&] { return conservation(); });
    for (const auto& [n, line] : lines_) std::cout << line << '\n';
    return failures_ == 0 ? 0 : 1;
  }

 private:
  void criterion(int n, const std::string& name, const std::function<Verdict()>& body) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    std::ostringstream line;
    line << "criterion " << (n < 10 ? " " : "") << n << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << name << ": "
         << v.detail << " [" << fmt(seconds_since(t0), 1) << " s]";
    lines_.emplace(n, line.str());
    if (!v.pass) ++failures_;
  }

  /// Keeps an export for the conservation pass.
  void keep_export(const std::string& label, const std::string& exported) { exports_.emplace_back(label, exported); }

  // ---- 1 and 2 ------------------------------------------------------------

  static SimConfig saturated(unsigned depth) {
    SimConfig c;
    c.name = "saturated-d" + std::to_string(depth);
    c.seed = 101;
    c.stop_height = 200;
    c.duration_ms = 100'000'000;
    c.params.initial_targets = {crypto::target_from_bits(3), crypto::target_from_bits(7)};
    c.params.block_tx_capacity = 100;
    c.params.subsidy.initial = 5'000;
    c.params.target_interval_ms = c.block_interval_ms();
    for (unsigned d = 0; d < depth; ++d) c.params.splits.push_back({d + 1, ledger::PartitionMode::Logical});
    c.nodes = {{"m", node::Role::Miner, 1, {}}, {"f", node::Role::Full, 0, {}}, {"h", node::Role::Half, 0, "w"}};
    c.links = {{0, 1, 20}, {1, 2, 20}};
    c.wallets = {{"w", 0, 16, 3'200, 1'000'000}};
    c.demand = {{0, 3'000, 100}};
    return c;
  }

  Verdict throughput() {
    Verdict v;
    for (unsigned depth = 0; depth <= 3; ++depth) {
      const auto t0 = Clock::now();
      auto r = netsim::run_simulation(saturated(depth));
      const double secs = seconds_since(t0);
      keep_export("saturated depth " + std::to_string(depth), r.chainstate_export);
      saturated_[depth] = r;
      const double tpi = netsim::tx_per_interval(r);
      if (depth == 0) {
        baseline_ = tpi;
        v.require(r.heights.size() == 200 && tpi > 0, "baseline " + fmt(tpi, 1) + " tx/interval");
        v.require(secs < 120, "baseline run " + fmt(secs, 1) + " s");
        continue;
      }
      const double scale = tpi / baseline_;
      const double want = static_cast<double>(1u << depth);
      v.require(r.heights.size() == 200, "depth " + std::to_string(depth) + " reached height 200");
      v.require(std::abs(scale - want) <= 0.05 * want,
                "depth " + std::to_string(depth) + " scale " + fmt(scale) + " (want " + fmt(want, 0) + ")");
      v.require(secs < 120, "run " + fmt(secs, 1) + " s");
    }
    return v;
  }

  Verdict bandwidth() {
    Verdict v;
    if (!saturated_.contains(1) || !saturated_.contains(2)) {
      v.require(false, "depth 1 and 2 runs missing");
      return v;
    }
    const auto& d1 = saturated_.at(1);
    const auto& d2 = saturated_.at(2);
    const auto full1 = netsim::second_half_block_bytes(d1, 1);
    const auto full2 = netsim::second_half_block_bytes(d2, 1);
    const auto half2 = netsim::second_half_block_bytes(d2, 2);
    const double ratio = static_cast<double>(half2) / static_cast<double>(full2);
    const double growth = static_cast<double>(full2) / static_cast<double>(full1);
    v.require(ratio <= 0.35 && ratio >= 0.20, "half/full at depth 2 " + fmt(ratio) + " (want 0.20..0.35)");
    v.require(growth >= 1.8, "full bytes depth 1 to 2 x" + fmt(growth) + " (want >= 1.8)");
    v.require(d2.nodes[2].tip == d2.nodes[1].tip, "half node on the full node's tip");
    return v;
  }

  // ---- 3 ------------------------------------------------------------------

  static ledger::ChainState synthetic(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ledger::ChainState s(0);
    for (std::size_t i = 0; i < n; ++i) {
      crypto::AddressHash a;
      for (auto& b : a) b = static_cast<std::uint8_t>(rng());
      OutPoint op{crypto::double_sha256(as_bytes("utxo/" + std::to_string(i))), static_cast<std::uint32_t>(i % 4)};
      s.insert(op, ledger::Coin{{1 + rng() % 10'000'000, Script::p2pkh(a)}, static_cast<Height>(rng() % 50),
                                rng() % 10 == 0, false});
    }
    return s;
  }

  Verdict deterministic_split() {
    Verdict v;
    for (auto mode : {ledger::PartitionMode::Logical, ledger::PartitionMode::Economic}) {
      const auto t0 = Clock::now();
      // Two independently built replicas, each split twice.
      auto replica = [&] {
        ledger::ChainStateSet set(ledger::Partition{}, {synthetic(10'000, 77)});
        std::vector<ledger::Mempool> pools(1);
        splitter::apply_split(set, pools, {1, mode, 1}, 1, {});
        splitter::apply_split(set, pools, {2, mode, 2}, 2, {});
        ledger::ExportHeader header{set.partition(), 2, {}, false};
        return std::make_pair(ledger::export_string(header, set), set.total_value());
      };
      auto a = replica();
      auto b = replica();
      const double secs = seconds_since(t0);
      const std::string m(ledger::to_string(mode));
      v.require(a.first == b.first, m + " exports byte-identical (" + std::to_string(a.first.size()) + " bytes)");
      v.require(a.second == synthetic(10'000, 77).total_value(), m + " value preserved");
      std::istringstream in(a.first);
      auto parsed = ledger::read_export(in);
      v.require(ledger::audit_partition(parsed.states).empty(), m + " partition audit");
      v.require(secs < 5, m + " " + fmt(secs, 2) + " s");
    }
    return v;
  }

  // ---- 6 ------------------------------------------------------------------

  Verdict straddling() {
    Verdict v;
    auto params = easy_params();
    params.splits = {{1, ledger::PartitionMode::Logical}, {2, ledger::PartitionMode::Logical},
                     {3, ledger::PartitionMode::Logical}};
    const auto keys = netsim::wallet_keys("straddle", 16);
    std::vector<Script> scripts;
    for (int rep = 0; rep < 4; ++rep) {
      for (const auto& k : keys) scripts.push_back(p2pkh(k));
    }
    auto genesis = genesis_for(scripts, 50'000, params);
    MinerHarness h(params, genesis);
    std::mt19937_64 rng(606);
    std::size_t total = 0, mixed = 0;
    std::map<std::string, std::size_t> other;
    for (unsigned depth = 1; depth <= 3; ++depth) {
      h.mine();
      auto& n = h.node();
      const auto& part = n.partition();
      std::vector<const ledger::ChainState*> sibs;
      for (const auto& s : n.states().states()) sibs.push_back(&s);
      ledger::ValidationContext ctx{&part, n.tip_height() + 1, sibs};
      const std::size_t count = depth == 3 ? 334 : 333;
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t inputs = 2 + rng() % 3;
        std::vector<Spend> spends;
        std::set<std::size_t> used;
        std::set<SubchainId> homes;
        ledger::Amount in = 0;
        while (spends.size() < inputs || homes.size() < 2) {
          const auto idx = rng() % scripts.size();
          if (!used.insert(idx).second) continue;
          const auto home = part.route(scripts[idx].hash());
          if (spends.size() + 1 >= inputs && homes.size() == 1 && homes.contains(home)) continue;
          spends.push_back({genesis_outpoint(genesis, static_cast<std::uint32_t>(idx)), &keys[idx % keys.size()]});
          homes.insert(home);
          in += 50'000;
        }
        std::vector<ledger::TxOut> outs;
        const std::size_t nout = 1 + rng() % 2;
        for (std::size_t o = 0; o < nout; ++o) outs.push_back({(in - 500) / nout, p2pkh(keys[rng() % keys.size()])});
        auto tx = spend(spends, outs);
        ++total;
        bool all = true;
        auto r = n.submit_tx(tx);
        if (r || r.error() != ledger::TxError::MixedSubchains) {
          all = false;
          ++other[r ? "accepted" : std::string(ledger::to_string(r.error()))];
        }
        for (auto home : homes) {
          auto vr = ledger::validate_transaction(tx, *n.states().find(home), ctx);
          if (vr || vr.error() != ledger::TxError::MixedSubchains) all = false;
        }
        if (all) ++mixed;
      }
    }
    std::string others;
    for (const auto& [k, c] : other) others += " " + k + "=" + std::to_string(c);
    v.require(total == 1000 && mixed == total,
              std::to_string(mixed) + "/" + std::to_string(total) + " rejected with MixedSubchains at depths 1-3" +
                  others);
    return v;
  }

  // ---- 7 ------------------------------------------------------------------

  struct HtlcSchedule {
    std::string name;
    Height delta = 20;
    bool reveal = true;
    std::vector<netsim::Outage> outages;
    /// Either: no timing guarantee applies, but the outcome must still be all-or-nothing.
    enum { Claim, Refund, Either } expect = Claim;
  };

  static SimConfig htlc_config(const HtlcSchedule& s, std::uint64_t seed) {
    SimConfig c;
    c.name = "htlc-" + s.name;
    c.seed = seed;
    c.duration_ms = 10'000'000;
    c.params.initial_targets = {crypto::target_from_bits(3), crypto::target_from_bits(7)};
    c.params.block_tx_capacity = 20;
    c.params.subsidy.initial = 5'000;
    c.params.target_interval_ms = c.block_interval_ms();
    c.params.splits = {{1, ledger::PartitionMode::Logical}, {2, ledger::PartitionMode::Logical}};
    c.nodes = {{"m", node::Role::Miner, 1, {}}, {"alice-node", node::Role::Full, 0, {}},
               {"bob-node", node::Role::Full, 0, {}}};
    c.links = {{0, 1, 20}, {0, 2, 20}};  // link 0 reaches the sender, link 1 the receiver
    c.outages = s.outages;
    c.wallets = {{"alice", 1, 16, 16, 1'000}, {"bob", 2, 1, 0, 0}};
    c.actions = {{4, PayAction{0, 1, 9'000, PayVia::Htlc, 10, s.delta, s.reveal}}};
    c.stop_height = 4 + s.delta + 2 * xfer::kHtlcStagger + 15;
    return c;
  }

  Verdict htlc_suite() {
    Verdict v;
    using O = netsim::Outage;
    const std::vector<HtlcSchedule> suite = {
        {"prompt-reveal", 20, true, {}, HtlcSchedule::Claim},
        {"receiver-cut-off-while-legs-confirm", 30, true, {O{1, 2'000, 8'000}}, HtlcSchedule::Claim},
        {"claims-dropped-once", 20, true, {O{1, 2'500, 4'500}}, HtlcSchedule::Claim},
        {"sender-cut-off-after-funding", 20, true, {O{0, 3'000, 9'000}}, HtlcSchedule::Claim},
        {"funding-delayed", 25, true, {O{0, 2'200, 5'000}}, HtlcSchedule::Claim},
        {"receiver-silent", 10, false, {}, HtlcSchedule::Refund},
        {"receiver-silent-sender-cut-off-at-expiry", 10, false, {O{0, 8'000, 15'000}}, HtlcSchedule::Refund},
        {"receiver-sees-legs-too-late", 12, true, {O{1, 2'000, 12'000}}, HtlcSchedule::Either},
    };
    const auto alice_keys = netsim::wallet_keys("alice", 16);
    const auto bob_key = netsim::wallet_keys("bob", 1)[0];
    std::set<crypto::AddressHash> alice;
    for (const auto& k : alice_keys) alice.insert(k.address_hash());

    std::size_t ok = 0, runs = 0;
    std::string problems;
    for (const auto& s : suite) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        ++runs;
        auto c = htlc_config(s, seed);
        auto r = netsim::run_simulation(c);
        keep_export(c.name, r.chainstate_export);
        htlc_runs_.push_back({c, r});
        std::istringstream in(r.chainstate_export);
        auto parsed = ledger::read_export(in);
        ledger::Amount a = 0, b = 0;
        std::size_t open = 0;
        for (const auto& st : parsed.states.states()) {
          for (const auto& [op, coin] : st.entries()) {
            const auto& sc = coin.out.script_pubkey;
            if (sc.as_htlc()) ++open;
            if (const auto* pk = sc.as_p2pkh()) {
              if (alice.contains(pk->address)) a += coin.out.value;
              if (pk->address == bob_key.address_hash()) b += coin.out.value;
            }
          }
        }
        const ledger::Amount start = 16 * 1'000;
        const bool claimed = r.htlc_refunds == 0 && r.htlc_claims >= 2 && open == 0 &&
                             b == 9'000 - r.htlc_claims * 10 && a == start - 9'000 - r.htlc_claims * 10;
        const bool refunded = r.htlc_claims == 0 && r.htlc_refunds >= 2 && open == 0 && b == 0 &&
                              a == start - 2 * r.htlc_refunds * 10;
        const bool expected = s.expect == HtlcSchedule::Claim    ? claimed
                              : s.expect == HtlcSchedule::Refund ? refunded
                                                                 : claimed || refunded;
        if (expected && r.actions_failed == 0) {
          ++ok;
        } else {
          problems += " " + s.name + "/seed" + std::to_string(seed) + "(claims=" + std::to_string(r.htlc_claims) +
                      " refunds=" + std::to_string(r.htlc_refunds) + " open=" + std::to_string(open) +
                      " alice=" + std::to_string(a) + " bob=" + std::to_string(b) + ")";
        }
      }
    }
    v.require(ok == runs, std::to_string(ok) + "/" + std::to_string(runs) +
                              " schedules ended all-claimed or all-refunded as expected" + problems);
    return v;
  }

  // ---- 8 ------------------------------------------------------------------

  Verdict eigentx_rules() {
    Verdict v;
    auto params = easy_params();
    params.splits = {{1, ledger::PartitionMode::Logical}, {2, ledger::PartitionMode::Logical}};
    params.eigentx_window = xfer::EigenWindow{5, 40};
    const auto keys = netsim::wallet_keys("consolidate", 16);
    std::vector<Script> scripts;
    for (const auto& k : keys) scripts.push_back(p2pkh(k));
    auto genesis = genesis_for(scripts, 10'000, params);
    MinerHarness early(params, genesis);
    MinerHarness h(params, genesis);
    early.mine(2);
    h.mine(4);
    auto& n = h.node();
    std::mt19937_64 rng(808);
    auto home = [&](std::size_t i) { return n.partition().route(scripts[i].hash()); };
    auto coin = [&](std::size_t i) { return genesis_outpoint(genesis, static_cast<std::uint32_t>(i)); };
    auto other_sub = [&](SubchainId s) { return static_cast<SubchainId>((s + 1 + rng() % 3) % 4); };

    std::size_t mismatch = 0, same = 0, window = 0;
    const std::size_t trials = 200;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto i = rng() % keys.size();
      auto j = rng() % keys.size();
      if (j == i) j = (j + 1) % keys.size();
      const auto amount = 1 + rng() % 5'000;
      auto r1 = n.submit_eigentx(xfer::make_eigentx(keys[j], home(i), other_sub(home(i)), amount, {coin(i)}));
      if (!r1 && r1.error() == xfer::EigenError::AddressMismatch) ++mismatch;
      auto r2 = n.submit_eigentx(xfer::make_eigentx(keys[i], home(i), home(i), amount, {coin(i)}));
      if (!r2 && r2.error() == xfer::EigenError::SameSubchain) ++same;
      // Outside [5, 40]: below via a node still at height 2, above via the check itself.
      auto etx = xfer::make_eigentx(keys[i], home(i), other_sub(home(i)), amount, {coin(i)});
      bool closed = true;
      if (t % 2 == 0) {
        auto r3 = early.node().submit_eigentx(etx);
        closed = !r3 && r3.error() == xfer::EigenError::WindowClosed;
      }
      for (Height height : {Height{1}, Height{4}, static_cast<Height>(rng() % 5), static_cast<Height>(41 + rng() % 10'000)}) {
        auto r4 = xfer::check_eigentx(etx, n.states(), {height, params.eigentx_window, nullptr});
        closed = closed && !r4 && r4.error() == xfer::EigenError::WindowClosed;
      }
      if (closed) ++window;
    }
    v.require(mismatch == trials, "address mismatch " + std::to_string(mismatch) + "/" + std::to_string(trials));
    v.require(same == trials, "same sub-chain " + std::to_string(same) + "/" + std::to_string(trials));
    v.require(window == trials, "out of window " + std::to_string(window) + "/" + std::to_string(trials));
    v.require(n.eigenpool().size() == 0, "nothing admitted");

    // Consolidate every key's coin onto sub-chain 0.
    std::size_t moved = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (home(i) == 0) continue;
      auto r = n.submit_eigentx(xfer::make_eigentx(keys[i], home(i), 0, 10'000 - xfer::kEigenFee, {coin(i)}));
      if (r) ++moved;
    }
    for (int b = 0; b < 5 && n.eigenpool().size() > 0; ++b) h.mine();
    std::set<crypto::AddressHash> mine;
    for (const auto& k : keys) mine.insert(k.address_hash());
    ledger::Amount on0 = 0, elsewhere = 0;
    std::size_t pinned = 0;
    for (const auto& st : n.states().states()) {
      for (const auto& [op, c] : st.entries()) {
        const auto* pk = c.out.script_pubkey.as_p2pkh();
        if (pk == nullptr || !mine.contains(pk->address)) continue;
        (st.subchain() == 0 ? on0 : elsewhere) += c.out.value;
        if (c.pinned) ++pinned;
      }
    }
    v.require(moved == 12 && n.eigenpool().size() == 0, std::to_string(moved) + " eigentransactions mined");
    v.require(elsewhere == 0 && on0 == 16 * 10'000 - moved * xfer::kEigenFee,
              "wallet balance " + std::to_string(on0) + " all on sub-chain 0");
    v.require(pinned == moved, std::to_string(pinned) + " pinned entries");
    const auto exported = n.export_chainstate();
    std::istringstream in(exported);
    auto audit = ledger::audit_export(ledger::read_export(in));
    v.require(audit.ok(), audit.ok() ? "post-state audit ok" : "audit: " + audit.problems.front());
    keep_export("eigentx consolidation", exported);
    return v;
  }

  // ---- 5 ------------------------------------------------------------------

  Verdict mutations() {
    Verdict v;
    SimConfig c;
    c.name = "fuzz-source";
    c.seed = 55;
    c.stop_height = 14;
    c.duration_ms = 10'000'000;
    c.params.initial_targets = {crypto::target_from_bits(3), crypto::target_from_bits(16)};
    c.params.block_tx_capacity = 10;
    c.params.subsidy.initial = 5'000;
    c.params.eigentx_window = xfer::EigenWindow{1, 100};
    c.params.target_interval_ms = c.block_interval_ms();
    c.params.splits = {{1, ledger::PartitionMode::Logical}, {2, ledger::PartitionMode::Logical}};
    c.nodes = {{"m", node::Role::Miner, 1, {}}, {"f", node::Role::Full, 0, {}}};
    c.links = {{0, 1, 20}};
    c.wallets = {{"w", 1, 16, 64, 100'000}, {"v", 1, 1, 0, 0}};
    c.demand = {{0, 40, 100}};
    c.actions = {{3, netsim::EigentxAction{0, 1, 0, 5'000}},
                 {4, PayAction{0, 1, 350'000, PayVia::Htlc, 100, 20, true}}};
    auto src = netsim::run_simulation(c);
    keep_export("fuzz source", src.chainstate_export);
    std::size_t txs = 0, etxs = 0;
    for (const auto& hr : src.heights) {
      for (auto x : hr.confirmed) txs += x;
      etxs += hr.eigentxs;
    }
    v.require(src.blocks.size() == 14 && txs > 0 && etxs > 0,
              "source chain of 14 composites, " + std::to_string(txs) + " txs, " + std::to_string(etxs) +
                  " eigentxs");

    auto world = netsim::build_world(c);
    node::Node n({"fuzz", node::Role::Full, std::nullopt}, world.params, world.genesis);
    std::mt19937_64 rng(5'555);
    std::size_t tried = 0, decode = 0, invalid = 0, accepted = 0, other = 0, tip_failures = 0;
    for (std::size_t b = 0; b < src.blocks.size(); ++b) {
      const auto& honest = src.blocks[b];
      if (b >= 4) {
        const auto bytes = chain::serialize_composite(*honest);
        for (int k = 0; k < 100; ++k) {
          ++tried;
          auto m = bytes;
          const auto bit = rng() % (m.size() * 8);
          m[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
          std::shared_ptr<const chain::CompositeBlock> cb;
          try {
            cb = std::make_shared<const chain::CompositeBlock>(chain::deserialize_composite(m));
          } catch (const DecodeError&) {
            ++decode;
            continue;
          } catch (const std::exception&) {
            ++other;
            continue;
          }
          const auto before = n.tip().hash;
          auto r = n.receive_block(cb);
          if (r.status == node::BlockStatus::Invalid) ++invalid;
          else ++accepted;
          try {
            n.check_tip_heights();
          } catch (const InvariantViolation&) {
            ++tip_failures;
          }
          if (n.tip().hash != before) ++tip_failures;
        }
      }
      auto r = n.receive_block(honest);
      if (r.status != node::BlockStatus::Connected) {
        v.require(false, "honest block " + std::to_string(b + 1) + " " + std::string(node::to_string(r.status)));
        return v;
      }
    }
    v.require(tried == 1000 && accepted == 0 && other == 0,
              std::to_string(tried) + " mutations: " + std::to_string(decode) + " undecodable, " +
                  std::to_string(invalid) + " invalid, " + std::to_string(accepted) + " accepted");
    v.require(tip_failures == 0, "tip heights equal after every attempt");
    v.require(n.export_digest() == src.chainstate_digest, "honest chain still connects to the live export");
    return v;
  }

  // ---- 9 and 10 -----------------------------------------------------------

  struct ScenarioRun {
    fs::path file;
    fs::path out;
    netsim::SimReport report;
  };

  std::vector<ScenarioRun>& scenario_runs() {
    if (!runs_.empty()) return runs_;
    for (const auto& entry : fs::directory_iterator(scenarios_)) {
      if (entry.path().extension() == ".txt") files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end());
    for (const auto& f : files_) {
      auto s = scenario::load_scenario(f);
      if (!s) throw std::runtime_error(f.string() + ": " + s.error().front().str());
      const auto out = work_ / "runs" / f.stem();
      auto r = scenario::run_scenario(s.value(), out);
      keep_export("scenario " + f.stem().string(), r.report.chainstate_export);
      runs_.push_back({f, out, std::move(r.report)});
    }
    return runs_;
  }

  Verdict determinism() {
    Verdict v;
    std::size_t same = 0;
    for (const auto& run : scenario_runs()) {
      auto s = scenario::load_scenario(run.file).value();
      std::ostringstream trace;
      auto again = netsim::run_simulation(s.config, &trace);
      const bool eq = again.trace_digest == run.report.trace_digest && trace.str() == slurp(run.out / "trace.log") &&
                      again.chainstate_digest == run.report.chainstate_digest;
      if (eq) ++same;
      else v.require(false, run.file.stem().string() + " trace differs between runs");
    }
    v.require(same == runs_.size() && !runs_.empty(),
              std::to_string(same) + "/" + std::to_string(runs_.size()) + " scenarios byte-identical across runs");
    // Frozen digest: a build on any machine must reproduce it exactly.
    auto frozen = std::find_if(runs_.begin(), runs_.end(), [](const auto& r) { return r.file.stem() == "depth2"; });
    if (frozen != runs_.end()) {
      v.require(frozen->report.trace_digest.hex() == kDepth2TraceDigest,
                "depth2 trace digest " + frozen->report.trace_digest.hex().substr(0, 16) + " matches frozen value");
    }
    return v;
  }

  Verdict replay() {
    Verdict v;
    std::size_t ok = 0, total = 0;
    for (const auto& run : scenario_runs()) {
      ++total;
      const auto cmd = cli_.string() + " replay " + run.file.string() + " " + run.out.string() + " > /dev/null";
      if (std::system(cmd.c_str()) == 0) ++ok;
      else v.require(false, "splitscale replay failed for " + run.file.stem().string());
    }
    for (const auto& [c, r] : htlc_runs_) {
      ++total;
      auto world = netsim::build_world(c);
      auto exported = netsim::replay_blocks(world.params, world.genesis, r.blocks);
      if (crypto::double_sha256(as_bytes(exported)) == r.chainstate_digest) ++ok;
      else v.require(false, c.name + " replay digest differs");
    }
    v.require(ok == total && total > 0, std::to_string(ok) + "/" + std::to_string(total) +
                                            " runs replay to the live export digest");
    return v;
  }

  // ---- 4 ------------------------------------------------------------------

  Verdict conservation() {
    Verdict v;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < exports_.size(); ++i) {
      const auto path = work_ / ("export-" + std::to_string(i) + ".txt");
      {
        std::ofstream out(path, std::ios::binary);
        out << exports_[i].second;
      }
      const auto cmd = cli_.string() + " audit " + path.string() + " > /dev/null";
      std::istringstream in(exports_[i].second);
      auto parsed = ledger::read_export(in);
      const bool full = parsed.header.full;
      if (std::system(cmd.c_str()) == 0 && full) ++ok;
      else v.require(false, exports_[i].first + " fails audit");
    }
    v.require(ok == exports_.size() && ok > 0,
              std::to_string(ok) + "/" + std::to_string(exports_.size()) + " full exports conserve supply exactly");
    return v;
  }

  static constexpr std::string_view kDepth2TraceDigest =
      "7651aa8c3caac946826182a2e06632eb15a69bc106aff1beb8e2a603e24280f3";

  fs::path cli_, scenarios_, work_;
  std::map<int, std::string> lines_;
  int failures_ = 0;
  double baseline_ = 0;
  std::map<unsigned, netsim::SimReport> saturated_;
  std::vector<std::pair<SimConfig, netsim::SimReport>> htlc_runs_;
  std::vector<std::pair<std::string, std::string>> exports_;
  std::vector<fs::path> files_;
  std::vector<ScenarioRun> runs_;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: acceptance <splitscale-cli> <scenario-dir>\n";
    return 2;
  }
  Gate gate(argv[1], argv[2]);
  return gate.run();
}
