#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "splitscale/node.hpp"

namespace splitscale::netsim {

using crypto::Digest256;
using crypto::SubchainId;
using ledger::Amount;
using ledger::Height;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct NodeSpec {
  std::string name;
  node::Role role = node::Role::Full;
  double hashpower = 0;  ///< miners only; relative share
  /// Half nodes: the wallet key whose address picks the child kept at each split.
  std::optional<std::string> follow_wallet;
  std::size_t follow_key = 0;
};

struct LinkSpec {
  std::size_t a = 0;
  std::size_t b = 0;
  std::uint64_t latency_ms = 1;
};

/// Link `link` drops every message sent during [from_ms, to_ms).
struct Outage {
  std::size_t link = 0;
  std::uint64_t from_ms = 0;
  std::uint64_t to_ms = 0;
};

struct WalletSpec {
  std::string name;
  std::size_t node = 0;       ///< node the wallet submits to and watches
  std::size_t keys = 16;
  std::size_t coins = 0;      ///< genesis outputs, spread over the keys
  Amount coin_value = 0;
};

/// Poisson stream of self-payments from one wallet.
struct DemandSpec {
  std::size_t wallet = 0;
  double rate_per_s = 0;  ///< simulated seconds
  Amount fee = 100;
};

enum class PayVia { Direct, Htlc };

struct PayAction {
  std::size_t from = 0;
  std::size_t to = 0;
  Amount amount = 0;
  PayVia via = PayVia::Direct;
  Amount fee = 100;
  Height timelock_delta = 20;  ///< HTLC: first leg expires this many blocks after the trigger
  bool reveal = true;          ///< HTLC: receiver claims once every leg is confirmed
};

struct EigentxAction {
  std::size_t wallet = 0;
  SubchainId from = 0;
  SubchainId to = 0;
  Amount amount = 0;
};

/// Fires at the acting wallet's node once its tip reaches `at_height`.
struct Action {
  Height at_height = 0;
  std::variant<PayAction, EigentxAction> body;
};

struct SimConfig {
  std::string name = "sim";
  std::uint64_t seed = 1;
  std::uint64_t duration_ms = 60'000;
  std::optional<Height> stop_height;  ///< end once the reference node reaches it
  /// Block interval is 600 000 ms divided by this factor.
  std::uint64_t compression = 1000;
  chain::ConsensusParams params;  ///< splits, capacities and targets; subsidy.genesis_supply is derived
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<Outage> outages;
  std::vector<WalletSpec> wallets;
  std::vector<DemandSpec> demand;
  std::vector<Action> actions;

  /// Throws ConfigError.
  void validate() const;
  [[nodiscard]] std::uint64_t block_interval_ms() const { return 600'000 / compression; }
};

/// Keys of a wallet: `count` labelled keys chosen so that the first 16 land
/// on distinct depth-4 sub-chains, which keeps wallets balanced at any depth
/// up to 4.
std::vector<crypto::KeyPair> wallet_keys(const std::string& wallet, std::size_t count);

/// Genesis paying every wallet its coins, and params with the supply set.
struct World {
  chain::ConsensusParams params;
  chain::Genesis genesis;
  std::vector<std::vector<crypto::KeyPair>> wallet_keys;  ///< parallel to SimConfig::wallets
};
World build_world(const SimConfig& config);

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

enum class MsgKind : std::uint8_t { Tx, Eigentx, Block, BlockN, GetData };
inline constexpr std::size_t kMsgKinds = 5;
std::string_view to_string(MsgKind k);

struct Traffic {
  std::array<std::uint64_t, kMsgKinds> bytes_recv{};
  std::array<std::uint64_t, kMsgKinds> bytes_sent{};
  std::array<std::uint64_t, kMsgKinds> msgs_recv{};
  std::uint64_t rejected = 0;
  /// Block and BlockN bytes received, keyed by block height.
  std::map<Height, std::uint64_t> block_bytes_by_height;
};

struct ReorgEvent {
  std::uint64_t time_ms = 0;
  std::size_t node = 0;
  Height new_tip = 0;
  std::uint64_t depth = 0;
};

struct NodeReport {
  std::string name;
  node::Role role = node::Role::Full;
  Height tip_height = 0;
  Digest256 tip;
  Digest256 export_digest;
  node::NodeStats stats;
  Traffic traffic;
};

struct HeightRecord {
  Height height = 0;
  unsigned depth = 0;
  std::vector<std::size_t> confirmed;  ///< non-coinbase txs per subblock
  std::size_t eigentxs = 0;
  std::uint64_t block_bytes = 0;       ///< canonical composite size
  std::uint64_t eigen_bytes = 0;
};

struct SimReport {
  std::uint64_t end_time_ms = 0;
  std::size_t reference = 0;  ///< node whose canonical chain the metrics use
  std::vector<NodeReport> nodes;
  std::vector<HeightRecord> heights;  ///< canonical chain, heights 1..tip
  std::map<std::string, Amount> fees_by_miner;
  std::vector<ReorgEvent> reorgs;
  std::uint64_t trace_lines = 0;
  Digest256 trace_digest;
  std::string chainstate_export;  ///< reference node
  Digest256 chainstate_digest;
  /// Canonical composites of the reference node, heights 1..tip.
  std::vector<std::shared_ptr<const chain::CompositeBlock>> blocks;
  std::uint64_t htlc_claims = 0;
  std::uint64_t htlc_refunds = 0;
  std::uint64_t actions_failed = 0;
};

/// Runs the event loop. `trace`, when given, receives one line per event;
/// the report's trace digest covers the same bytes either way.
SimReport run_simulation(const SimConfig& config, std::ostream* trace = nullptr);

/// Confirmed transactions per composite over heights in (tip/2, tip].
double tx_per_interval(const SimReport& report);
/// Block and BlockN bytes received by `node` over heights in (tip/2, tip].
std::uint64_t second_half_block_bytes(const SimReport& report, std::size_t node);

// ---------------------------------------------------------------------------
// Block files
// ---------------------------------------------------------------------------

/// Length-prefixed canonical composites.
void write_blocks(std::ostream& out, const std::vector<std::shared_ptr<const chain::CompositeBlock>>& blocks);
std::vector<std::shared_ptr<const chain::CompositeBlock>> read_blocks(std::istream& in);

/// Connects `blocks` on a fresh full node; returns its export. Throws
/// InvariantViolation when a block fails to connect.
std::string replay_blocks(const chain::ConsensusParams& params, const chain::Genesis& genesis,
                          const std::vector<std::shared_ptr<const chain::CompositeBlock>>& blocks);

}  // namespace splitscale::netsim
