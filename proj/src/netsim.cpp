#include "splitscale/netsim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>
#include <cmath>
#include <deque>
#include <istream>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace splitscale::netsim {

namespace {

constexpr std::uint64_t kGetDataBytes = 40;  // hash plus envelope
constexpr std::size_t kNone = static_cast<std::size_t>(-1);

std::size_t kind_index(MsgKind k) { return static_cast<std::size_t>(k); }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(std::mt19937_64& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

double target_scale(const Digest256& t) { return crypto::to_u256(t).convert_to<double>() + 1.0; }

struct Message {
  MsgKind kind = MsgKind::Tx;
  std::size_t from = kNone;
  std::shared_ptr<const ledger::Transaction> tx;
  std::shared_ptr<const xfer::Eigentransaction> etx;
  node::BlockPayload block;
  Digest256 id;  ///< txid, eigentx id or block hash
  Height height = 0;
  std::uint64_t bytes = 0;
};

enum class EventKind { Deliver, Mine, Demand };

struct Event {
  std::uint64_t time = 0;
  std::size_t node = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Deliver;
  std::size_t index = 0;        ///< miner generation or demand stream
  std::size_t to = 0;
  std::shared_ptr<const Message> msg;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    return std::tie(a.time, a.node, a.seq) > std::tie(b.time, b.node, b.seq);
  }
};

struct Wallet {
  const WalletSpec* spec = nullptr;
  const std::vector<crypto::KeyPair>* keys = nullptr;
  std::map<Digest256, std::size_t> key_of_script;
  std::vector<std::map<ledger::OutPoint, ledger::Coin>> by_key;
  std::map<ledger::OutPoint, std::size_t> owner;
  std::map<ledger::OutPoint, Digest256> pending;
  std::map<Digest256, std::vector<ledger::OutPoint>> pending_by_tx;
  /// Per key, the coins `available` accepts; kept in step with the maps above.
  std::vector<std::set<ledger::OutPoint>> free_by_key;
  std::size_t cursor = 0;

  [[nodiscard]] bool available(const ledger::OutPoint& op, const ledger::Coin& c) const {
    return !c.pinned && !c.coinbase && !pending.contains(op);
  }
  void add(std::size_t key, const ledger::OutPoint& op, const ledger::Coin& c) {
    by_key[key][op] = c;
    owner[op] = key;
    if (available(op, c)) free_by_key[key].insert(op);
  }
  void remove(const ledger::OutPoint& op) {
    auto it = owner.find(op);
    if (it != owner.end()) {
      by_key[it->second].erase(op);
      free_by_key[it->second].erase(op);
      owner.erase(it);
    }
    pending.erase(op);
  }
  void mark(const Digest256& id, const std::vector<ledger::OutPoint>& ops) {
    for (const auto& op : ops) {
      pending[op] = id;
      if (auto it = owner.find(op); it != owner.end()) free_by_key[it->second].erase(op);
    }
    auto& v = pending_by_tx[id];
    v.insert(v.end(), ops.begin(), ops.end());
  }
  void release(const Digest256& id) {
    auto it = pending_by_tx.find(id);
    if (it == pending_by_tx.end()) return;
    for (const auto& op : it->second) {
      auto p = pending.find(op);
      if (p == pending.end() || p->second != id) continue;
      pending.erase(p);
      if (auto o = owner.find(op); o != owner.end()) {
        const auto& c = by_key[o->second].at(op);
        if (available(op, c)) free_by_key[o->second].insert(op);
      }
    }
    pending_by_tx.erase(it);
  }
};

struct HtlcState {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  bool reveal = true;
  Amount fee = 0;
  xfer::HtlcPayment payment;
  bool revealed = false;
  bool abandoned = false;  ///< too close to the earliest timelock to reveal safely
  std::vector<bool> refund_sent;
};

/// A transaction its wallet keeps rebroadcasting until its first input is spent.
struct Outbound {
  std::size_t wallet = 0;
  std::shared_ptr<const ledger::Transaction> tx;
  Digest256 id;
};

class Simulation {
 public:
  Simulation(const SimConfig& config, std::ostream* trace)
      : cfg_(config), world_(build_world(config)), trace_(trace), rng_(config.seed) {
    const auto n = cfg_.nodes.size();
    adjacency_.resize(n);
    for (std::size_t l = 0; l < cfg_.links.size(); ++l) {
      adjacency_[cfg_.links[l].a].push_back({cfg_.links[l].b, l});
      adjacency_[cfg_.links[l].b].push_back({cfg_.links[l].a, l});
    }
    traffic_.resize(n);
    relayed_.resize(n);
    mine_generation_.assign(n, 0);

    double total_power = 0;
    for (const auto& s : cfg_.nodes) total_power += s.role == node::Role::Miner ? s.hashpower : 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = cfg_.nodes[i];
      node::NodeConfig nc{s.name, s.role, std::nullopt};
      if (s.follow_wallet) {
        for (std::size_t w = 0; w < cfg_.wallets.size(); ++w) {
          if (cfg_.wallets[w].name == *s.follow_wallet) nc.follow = world_.wallet_keys[w][s.follow_key].address_hash();
        }
      }
      nodes_.push_back(std::make_unique<node::Node>(nc, world_.params, world_.genesis));
      share_.push_back(s.role == node::Role::Miner ? s.hashpower / total_power : 0);
      payout_.push_back(ledger::Script::p2pkh(crypto::KeyPair::from_label("miner/" + s.name).address_hash()));
      if (s.role == node::Role::Miner) miner_of_script_[payout_.back().hash()] = s.name;
    }
    reference_ = pick_reference();
    initial_eigen_scale_ = target_scale(world_.params.initial_targets.eigen);

    for (std::size_t w = 0; w < cfg_.wallets.size(); ++w) {
      Wallet wallet;
      wallet.spec = &cfg_.wallets[w];
      wallet.keys = &world_.wallet_keys[w];
      wallet.by_key.resize(wallet.keys->size());
      wallet.free_by_key.resize(wallet.keys->size());
      for (std::size_t k = 0; k < wallet.keys->size(); ++k) {
        wallet.key_of_script[ledger::Script::p2pkh((*wallet.keys)[k].address_hash()).hash()] = k;
      }
      wallets_.push_back(std::move(wallet));
    }
    // Seed wallets from the genesis allocation as seen by their node.
    const auto gid = ledger::txid(world_.genesis.allocation);
    for (auto& wallet : wallets_) {
      const auto& n0 = *nodes_[wallet.spec->node];
      for (std::uint32_t i = 0; i < world_.genesis.allocation.outputs.size(); ++i) {
        ledger::OutPoint op{gid, i};
        for (const auto& s : n0.states().states()) {
          if (const auto* c = s.find(op)) add_coin(wallet, op, *c);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      nodes_[i]->on_delta = [this, i](const node::ChainDelta& d) { on_delta(i, d); };
      nodes_[i]->on_evict = [this, i](const Digest256& id) { on_evict(i, id); };
    }
    pending_actions_.resize(cfg_.actions.size(), true);
  }

  SimReport run() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (share_[i] > 0) schedule_mine(i);
    }
    demand_clock_.assign(cfg_.demand.size(), 0.0);
    for (std::size_t d = 0; d < cfg_.demand.size(); ++d) {
      if (cfg_.demand[d].rate_per_s > 0) schedule_demand(d);
    }
    fire_actions_all();

    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      if (!draining_ && (ev.time > cfg_.duration_ms || stop_reached())) draining_ = true;
      if (draining_ && ev.kind != EventKind::Deliver) continue;
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::Deliver: deliver(ev.to, *ev.msg); break;
        case EventKind::Mine: mine(ev.node, ev.index); break;
        case EventKind::Demand: demand(ev.index); break;
      }
    }
    return report();
  }

 private:
  // ---- scheduling -------------------------------------------------------

  void push(Event ev) {
    ev.seq = ++seq_;
    queue_.push(std::move(ev));
  }

  bool stop_reached() const {
    return cfg_.stop_height && nodes_[reference_]->tip_height() >= *cfg_.stop_height;
  }

  void schedule_mine(std::size_t i) {
    const auto generation = ++mine_generation_[i];
    const auto& n = *nodes_[i];
    const double scale = initial_eigen_scale_ / target_scale(n.next_rules().targets.eigen);
    const double rate = share_[i] / static_cast<double>(cfg_.block_interval_ms()) / scale;
    const auto dt = static_cast<std::uint64_t>(std::ceil(exponential(rng_, rate)));
    push({now_ + std::max<std::uint64_t>(dt, 1), i, 0, EventKind::Mine, generation, i, nullptr});
  }

  void schedule_demand(std::size_t d) {
    const auto& spec = cfg_.demand[d];
    demand_clock_[d] += exponential(rng_, spec.rate_per_s / 1000.0);
    const auto t = static_cast<std::uint64_t>(demand_clock_[d]);
    push({t, wallets_[spec.wallet].spec->node, 0, EventKind::Demand, d, 0, nullptr});
  }

  bool link_up(std::size_t link) const {
    for (const auto& o : cfg_.outages) {
      if (o.link == link && now_ >= o.from_ms && now_ < o.to_ms) return false;
    }
    return true;
  }

  void send(std::size_t from, std::size_t to, std::size_t link, std::shared_ptr<const Message> msg) {
    traffic_[from].bytes_sent[kind_index(msg->kind)] += msg->bytes;
    push({now_ + cfg_.links[link].latency_ms, to, 0, EventKind::Deliver, 0, to, std::move(msg)});
  }

  // ---- tracing ----------------------------------------------------------

  void trace(std::size_t node, std::string_view kind, std::uint64_t bytes, const Digest256& digest) {
    std::string line = std::to_string(now_);
    line += ' ';
    line += cfg_.nodes[node].name;
    line += ' ';
    line += kind;
    line += ' ';
    line += std::to_string(bytes);
    line += ' ';
    line += digest.hex();
    line += '\n';
    trace_hash_.update(ByteView(reinterpret_cast<const std::uint8_t*>(line.data()), line.size()));
    if (trace_ != nullptr) *trace_ << line;
    ++trace_lines_;
  }

  // ---- message construction ----------------------------------------------

  std::uint64_t composite_bytes(const chain::CompositeBlock& cb) {
    auto h = cb.hash();
    auto it = composite_size_.find(h);
    if (it != composite_size_.end()) return it->second;
    auto size = chain::serialize_composite(cb).size();
    composite_size_.emplace(h, size);
    return size;
  }

  std::shared_ptr<const Message> block_message(const node::BlockEntry& e, std::size_t to) {
    auto m = std::make_shared<Message>();
    m->id = e.hash;
    m->height = e.height;
    const auto& cb = e.payload.composite;
    if (!cb) return nullptr;
    if (cfg_.nodes[to].role == node::Role::Half) {
      const unsigned depth = world_.params.depth_at(e.height);
      const auto index = cb->subblocks.size() == 1 ? 0 : node::half_tracked_subchain(nodes_[to]->config().follow, depth);
      if (index >= cb->subblocks.size()) return nullptr;
      m->kind = MsgKind::BlockN;
      m->block = node::BlockPayload::slice(cb, index);
      m->bytes = chain::serialize_block_n(cb->eigen, cb->subblocks[index]).size();
    } else {
      m->kind = MsgKind::Block;
      m->block = node::BlockPayload::full(cb);
      m->bytes = composite_bytes(*cb);
    }
    return m;
  }

  // ---- relay --------------------------------------------------------------

  bool is_half(std::size_t i) const { return cfg_.nodes[i].role == node::Role::Half; }

  void relay_block(std::size_t i, const Digest256& hash, std::size_t except) {
    if (is_half(i) || !relayed_[i].insert(hash).second) return;
    const auto* e = nodes_[i]->find(hash);
    if (e == nullptr) return;
    for (const auto& [j, link] : adjacency_[i]) {
      if (j == except || !link_up(link)) continue;
      auto m = block_message(*e, j);
      if (!m) continue;
      auto msg = std::const_pointer_cast<Message>(m);
      msg->from = i;
      send(i, j, link, std::move(m));
    }
  }

  void relay_tx(std::size_t i, const std::shared_ptr<const ledger::Transaction>& tx, const Digest256& id,
                SubchainId sub, std::size_t except) {
    if (is_half(i) && except != kNone) return;
    std::shared_ptr<Message> m;
    for (const auto& [j, link] : adjacency_[i]) {
      if (j == except || !link_up(link)) continue;
      if (is_half(j)) {
        auto tracked = nodes_[j]->tracked_subchain();
        if (!tracked || *tracked != sub) continue;
      }
      if (!m) {
        m = std::make_shared<Message>();
        m->kind = MsgKind::Tx;
        m->from = i;
        m->tx = tx;
        m->id = id;
        m->bytes = ledger::serialize_tx(*tx).size();
      }
      send(i, j, link, m);
    }
  }

  void relay_eigentx(std::size_t i, const std::shared_ptr<const xfer::Eigentransaction>& etx, const Digest256& id,
                     std::size_t except) {
    if (is_half(i) && except != kNone) return;
    std::shared_ptr<Message> m;
    for (const auto& [j, link] : adjacency_[i]) {
      if (j == except || !link_up(link)) continue;
      if (!m) {
        m = std::make_shared<Message>();
        m->kind = MsgKind::Eigentx;
        m->from = i;
        m->etx = etx;
        m->id = id;
        m->bytes = xfer::serialize_eigentx(*etx).size();
      }
      send(i, j, link, m);
    }
  }

  std::size_t link_between(std::size_t a, std::size_t b) const {
    for (const auto& [j, link] : adjacency_[a]) {
      if (j == b) return link;
    }
    return kNone;
  }

  // ---- event handlers -----------------------------------------------------

  void deliver(std::size_t to, const Message& m) {
    auto& t = traffic_[to];
    t.bytes_recv[kind_index(m.kind)] += m.bytes;
    ++t.msgs_recv[kind_index(m.kind)];
    auto& n = *nodes_[to];
    switch (m.kind) {
      case MsgKind::Tx: {
        auto r = n.submit_tx(*m.tx);
        trace(to, r ? "tx:ok" : "tx:rejected", m.bytes, m.id);
        if (r) relay_tx(to, m.tx, m.id, r.value(), m.from);
        break;
      }
      case MsgKind::Eigentx: {
        auto r = n.submit_eigentx(*m.etx);
        trace(to, r ? "eigentx:ok" : "eigentx:rejected", m.bytes, m.id);
        if (r) relay_eigentx(to, m.etx, m.id, m.from);
        break;
      }
      case MsgKind::Block:
      case MsgKind::BlockN: {
        t.block_bytes_by_height[m.height] += m.bytes;
        handle_block(to, m.block, m.from, m.kind == MsgKind::Block ? "block" : "blockn", m.bytes);
        break;
      }
      case MsgKind::GetData: {
        trace(to, "getdata", m.bytes, m.id);
        const auto* e = n.find(m.id);
        const auto link = link_between(to, m.from);
        if (e == nullptr || e->invalid || is_half(to) || link == kNone || !link_up(link)) break;
        auto reply = block_message(*e, m.from);
        if (!reply) break;
        std::const_pointer_cast<Message>(reply)->from = to;
        send(to, m.from, link, std::move(reply));
        break;
      }
    }
  }

  void handle_block(std::size_t i, const node::BlockPayload& payload, std::size_t from, std::string_view label,
                    std::uint64_t bytes) {
    auto& n = *nodes_[i];
    const auto reorgs_before = n.stats().reorgs;
    auto r = n.receive(payload);
    trace(i, std::string(label) + ":" + std::string(node::to_string(r.status)), bytes, r.hash);
    // A stored block can still complete a waiting orphan branch.
    if (!r.connected.empty()) after_connect(i, r, from, reorgs_before);
    switch (r.status) {
      case node::BlockStatus::Orphan:
        request(i, from, *r.missing_parent);
        break;
      case node::BlockStatus::Invalid:
        ++traffic_[i].rejected;
        break;
      default:
        break;
    }
  }

  void request(std::size_t i, std::size_t from, const Digest256& hash) {
    if (from == kNone) return;
    const auto link = link_between(i, from);
    if (link == kNone || !link_up(link)) return;
    auto m = std::make_shared<Message>();
    m->kind = MsgKind::GetData;
    m->from = i;
    m->id = hash;
    m->bytes = kGetDataBytes;
    send(i, from, link, std::move(m));
  }

  void after_connect(std::size_t i, const node::ReceiveResult& r, std::size_t from, std::uint64_t reorgs_before) {
    auto& n = *nodes_[i];
    if (n.stats().reorgs != reorgs_before) {
      reorgs_.push_back({now_, i, n.tip_height(), n.stats().last_reorg_depth});
      trace(i, "reorg", n.stats().last_reorg_depth, n.tip().hash);
    }
    for (const auto& h : r.connected) relay_block(i, h, from);
    if (share_[i] > 0) schedule_mine(i);
    fire_actions(i);
    advance_htlcs(i);
    rebroadcast(i);
  }

  void mine(std::size_t i, std::size_t generation) {
    if (generation != mine_generation_[i]) return;
    auto& n = *nodes_[i];
    const auto ts = std::max(now_, n.tip().timestamp());
    auto cb = n.mine(ts, payout_[i], rng_());
    auto payload = node::BlockPayload::full(cb);
    handle_block(i, payload, kNone, "mined", composite_bytes(*cb));
    if (mine_generation_[i] == generation) schedule_mine(i);
  }

  // ---- wallets ------------------------------------------------------------

  void add_coin(Wallet& w, const ledger::OutPoint& op, const ledger::Coin& c) {
    auto it = w.key_of_script.find(c.out.script_pubkey.hash());
    if (it == w.key_of_script.end()) return;
    w.add(it->second, op, c);
  }

  void on_delta(std::size_t node, const node::ChainDelta& d) {
    for (auto& w : wallets_) {
      if (w.spec->node != node) continue;
      for (const auto& op : d.removed) w.remove(op);
      for (const auto& a : d.added) add_coin(w, a.outpoint, a.coin);
    }
  }

  void on_evict(std::size_t node, const Digest256& id) {
    for (auto& w : wallets_) {
      if (w.spec->node == node) w.release(id);
    }
  }

  bool submit_local(std::size_t wallet, const ledger::Transaction& tx, std::string_view label, bool persist = false) {
    auto& w = wallets_[wallet];
    const auto i = w.spec->node;
    const auto id = ledger::txid(tx);
    std::vector<ledger::OutPoint> ops;
    for (const auto& in : tx.inputs) ops.push_back(in.prevout);
    w.mark(id, ops);
    auto r = nodes_[i]->submit_tx(tx);
    trace(i, std::string(label) + (r ? ":ok" : ":rejected"), ledger::serialize_tx(tx).size(), id);
    if (!r) {
      w.release(id);
      return false;
    }
    auto shared = std::make_shared<const ledger::Transaction>(tx);
    relay_tx(i, shared, id, r.value(), kNone);
    if (persist) outbound_.push_back({wallet, shared, id});
    return true;
  }

  /// Resends unconfirmed HTLC transactions from node i; messages lost to an
  /// outage would otherwise strand them in one mempool.
  void rebroadcast(std::size_t i) {
    std::erase_if(outbound_, [&](const Outbound& o) {
      if (wallets_[o.wallet].spec->node != i) return false;
      const auto& n = *nodes_[i];
      const auto& first = o.tx->inputs.front().prevout;
      bool unspent = false;
      std::optional<SubchainId> sub;
      for (const auto& st : n.states().states()) {
        if (st.contains(first)) {
          unspent = true;
          sub = st.subchain();
        }
      }
      if (!unspent) return true;
      auto r = nodes_[i]->submit_tx(*o.tx);
      if (r) sub = r.value();
      relay_tx(i, o.tx, o.id, *sub, kNone);
      return false;
    });
  }

  void demand(std::size_t d) {
    const auto& spec = cfg_.demand[d];
    auto& w = wallets_[spec.wallet];
    const auto keys = w.by_key.size();
    for (std::size_t step = 0; step < keys; ++step) {
      const auto k = (w.cursor + step) % keys;
      for (const auto& op : w.free_by_key[k]) {
        const auto& c = w.by_key[k].at(op);
        if (c.out.value <= spec.fee) continue;
        w.cursor = k + 1;
        ledger::Transaction tx;
        tx.inputs.push_back({op, {}});
        tx.outputs.push_back({c.out.value - spec.fee, c.out.script_pubkey});
        const crypto::KeyPair* signer[] = {&(*w.keys)[k]};
        ledger::sign_inputs(tx, signer);
        submit_local(spec.wallet, tx, "demand");
        schedule_demand(d);
        return;
      }
    }
    schedule_demand(d);
  }

  std::vector<xfer::WalletCoin> spendable(const Wallet& w) const {
    std::vector<xfer::WalletCoin> out;
    const auto& n = *nodes_[w.spec->node];
    for (std::size_t k = 0; k < w.by_key.size(); ++k) {
      for (const auto& [op, c] : w.by_key[k]) {
        if (!w.available(op, c)) continue;
        out.push_back({op, c, n.partition().route(c.out.script_pubkey.hash()), &(*w.keys)[k]});
      }
    }
    return out;
  }

  // ---- scripted actions ---------------------------------------------------

  void fire_actions_all() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) fire_actions(i);
  }

  std::size_t acting_wallet(const Action& a) const {
    if (const auto* p = std::get_if<PayAction>(&a.body)) return p->from;
    return std::get<EigentxAction>(a.body).wallet;
  }

  void fire_actions(std::size_t i) {
    for (std::size_t a = 0; a < cfg_.actions.size(); ++a) {
      if (!pending_actions_[a]) continue;
      const auto& action = cfg_.actions[a];
      const auto w = acting_wallet(action);
      if (wallets_[w].spec->node != i || nodes_[i]->tip_height() < action.at_height) continue;
      pending_actions_[a] = false;
      bool ok = false;
      if (const auto* p = std::get_if<PayAction>(&action.body)) {
        ok = p->via == PayVia::Htlc ? pay_htlc(*p) : pay_direct(*p);
      } else {
        ok = send_eigentx(std::get<EigentxAction>(action.body));
      }
      if (!ok) {
        ++actions_failed_;
        trace(i, "action:failed", 0, Digest256{});
      }
    }
  }

  bool pay_direct(const PayAction& p) {
    auto coins = spendable(wallets_[p.from]);
    std::map<SubchainId, Amount> balance;
    for (const auto& c : coins) balance[c.subchain] += c.coin.out.value;
    std::optional<SubchainId> best;
    for (const auto& [s, v] : balance) {
      if (v >= p.amount + p.fee && (!best || v > balance[*best])) best = s;
    }
    if (!best) return false;
    std::vector<const xfer::WalletCoin*> mine;
    for (const auto& c : coins) {
      if (c.subchain == *best) mine.push_back(&c);
    }
    std::stable_sort(mine.begin(), mine.end(),
                     [](const auto* a, const auto* b) { return a->coin.out.value > b->coin.out.value; });
    ledger::Transaction tx;
    std::vector<const crypto::KeyPair*> signers;
    Amount in = 0;
    for (const auto* c : mine) {
      if (in >= p.amount + p.fee) break;
      tx.inputs.push_back({c->outpoint, {}});
      signers.push_back(c->key);
      in += c->coin.out.value;
    }
    const auto& receiver = (*wallets_[p.to].keys)[0];
    tx.outputs.push_back({p.amount, ledger::Script::p2pkh(receiver.address_hash())});
    if (in > p.amount + p.fee) tx.outputs.push_back({in - p.amount - p.fee, mine.front()->coin.out.script_pubkey});
    ledger::sign_inputs(tx, signers);
    return submit_local(p.from, tx, "pay");
  }

  bool pay_htlc(const PayAction& p) {
    auto coins = spendable(wallets_[p.from]);
    xfer::HtlcRequest req;
    req.amount = p.amount;
    req.receiver = (*wallets_[p.to].keys)[0].address_hash();
    req.timelock_base = nodes_[wallets_[p.from].spec->node]->tip_height() + p.timelock_delta;
    req.preimage.resize(32);
    for (auto& b : req.preimage) b = static_cast<std::uint8_t>(rng_());
    req.fee_per_leg = p.fee;
    auto plan = xfer::plan_htlc_payment(coins, req);
    if (!plan) return false;
    HtlcState h{p.from, p.to, p.reveal, p.fee, std::move(plan.value()), false, {}};
    h.refund_sent.assign(h.payment.legs.size(), false);
    bool all = true;
    for (const auto& leg : h.payment.legs) all = submit_local(p.from, leg.tx, "htlc:fund", true) && all;
    htlcs_.push_back(std::move(h));
    return all;
  }

  bool send_eigentx(const EigentxAction& e) {
    auto& w = wallets_[e.wallet];
    const auto& n = *nodes_[w.spec->node];
    std::optional<std::size_t> best;
    Amount best_value = 0;
    std::vector<Amount> value(w.by_key.size(), 0);
    for (std::size_t k = 0; k < w.by_key.size(); ++k) {
      for (const auto& [op, c] : w.by_key[k]) {
        if (w.available(op, c) && n.partition().route(c.out.script_pubkey.hash()) == e.from) value[k] += c.out.value;
      }
      if (value[k] > best_value) {
        best = k;
        best_value = value[k];
      }
    }
    if (!best || best_value < e.amount + xfer::kEigenFee) return false;
    std::vector<ledger::OutPoint> ops;
    Amount in = 0;
    for (const auto& [op, c] : w.by_key[*best]) {
      if (in >= e.amount + xfer::kEigenFee) break;
      if (!w.available(op, c)) continue;
      ops.push_back(op);
      in += c.out.value;
    }
    auto etx = std::make_shared<const xfer::Eigentransaction>(
        xfer::make_eigentx((*w.keys)[*best], e.from, e.to, e.amount, ops));
    const auto id = xfer::eigentx_id(*etx);
    w.mark(id, ops);
    const auto i = w.spec->node;
    auto r = nodes_[i]->submit_eigentx(*etx);
    trace(i, r ? "eigentx:submit" : "eigentx:rejected", xfer::serialize_eigentx(*etx).size(), id);
    if (!r) {
      w.release(id);
      return false;
    }
    relay_eigentx(i, etx, id, kNone);
    return true;
  }

  static bool leg_confirmed(const node::Node& n, const xfer::HtlcLeg& leg) {
    for (const auto& s : n.states().states()) {
      if (s.contains(leg.htlc_outpoint)) return true;
    }
    return false;
  }

  void advance_htlcs(std::size_t i) {
    for (auto& h : htlcs_) {
      const auto recv_node = wallets_[h.receiver].spec->node;
      const auto send_node = wallets_[h.sender].spec->node;
      if (i == recv_node && h.reveal && !h.revealed) {
        const auto& n = *nodes_[i];
        bool all = std::all_of(h.payment.legs.begin(), h.payment.legs.end(),
                               [&](const auto& leg) { return leg_confirmed(n, leg); });
        Height earliest = std::numeric_limits<Height>::max();
        for (const auto& leg : h.payment.legs) earliest = std::min(earliest, leg.timelock);
        if (all && !h.abandoned && n.tip_height() + 1 + h.payment.stagger > earliest) {
          // Revealing now could let the earliest leg expire before its claim lands.
          h.abandoned = true;
          trace(i, "htlc:abandon", 0, h.payment.hashlock);
        }
        if (all && !h.abandoned) {
          h.revealed = true;
          const auto& key = (*wallets_[h.receiver].keys)[0];
          // Earliest-expiring leg last.
          for (auto leg = h.payment.legs.rbegin(); leg != h.payment.legs.rend(); ++leg) {
            auto claim = xfer::claim_htlc_leg(leg->htlc_outpoint, leg->tx.outputs[0], h.payment.preimage, key,
                                              ledger::Script::p2pkh(key.address_hash()), h.fee);
            if (claim && submit_local(h.receiver, claim.value(), "htlc:claim", true)) ++htlc_claims_;
          }
        }
      }
      if (i == send_node) {
        const auto& n = *nodes_[i];
        for (std::size_t l = 0; l < h.payment.legs.size(); ++l) {
          const auto& leg = h.payment.legs[l];
          if (h.refund_sent[l] || n.tip_height() + 1 < leg.timelock || !leg_confirmed(n, leg)) continue;
          const auto* script = leg.script.as_htlc();
          const crypto::KeyPair* key = nullptr;
          for (const auto& k : *wallets_[h.sender].keys) {
            if (k.address_hash() == script->sender) key = &k;
          }
          if (key == nullptr) continue;
          auto refund = xfer::refund_htlc_leg(leg.htlc_outpoint, leg.tx.outputs[0], *key, n.tip_height() + 1,
                                              ledger::Script::p2pkh(key->address_hash()), h.fee);
          if (!refund) continue;
          h.refund_sent[l] = true;
          if (submit_local(h.sender, refund.value(), "htlc:refund", true)) ++htlc_refunds_;
        }
      }
    }
  }

  // ---- report -------------------------------------------------------------

  std::size_t pick_reference() const {
    for (std::size_t i = 0; i < cfg_.nodes.size(); ++i) {
      if (cfg_.nodes[i].role == node::Role::Full) return i;
    }
    for (std::size_t i = 0; i < cfg_.nodes.size(); ++i) {
      if (cfg_.nodes[i].role == node::Role::Miner) return i;
    }
    throw ConfigError("no full node or miner");
  }

  SimReport report() {
    SimReport rep;
    rep.end_time_ms = now_;
    rep.reference = reference_;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = *nodes_[i];
      n.check_tip_heights();
      auto problems = ledger::audit_partition(n.states());
      if (!problems.empty()) throw InvariantViolation(cfg_.nodes[i].name + ": " + problems.front());
      rep.nodes.push_back({cfg_.nodes[i].name, cfg_.nodes[i].role, n.tip_height(), n.tip().hash, n.export_digest(),
                           n.stats(), traffic_[i]});
    }
    const auto& ref = *nodes_[reference_];
    for (const auto* e : ref.active_chain()) {
      if (e->height == 0) continue;
      const auto& cb = e->payload.composite;
      HeightRecord hr;
      hr.height = e->height;
      hr.depth = world_.params.depth_at(e->height);
      for (const auto& sub : cb->subblocks) hr.confirmed.push_back(sub.txs.size() - 1);
      hr.eigentxs = cb->eigen.eigentxs.size();
      hr.block_bytes = composite_bytes(*cb);
      ByteWriter w;
      chain::write_eigen(w, cb->eigen);
      hr.eigen_bytes = w.size();
      rep.heights.push_back(std::move(hr));
      rep.blocks.push_back(cb);

      Amount fees = cb->eigen.reward.amount - world_.params.subsidy.at(e->height);
      for (const auto& sub : cb->subblocks) {
        for (const auto& o : sub.txs[0].outputs) fees += o.value;
      }
      auto who = miner_of_script_.find(cb->eigen.reward.payout.hash());
      rep.fees_by_miner[who == miner_of_script_.end() ? "unknown" : who->second] += fees;
    }
    for (const auto& [script, name] : miner_of_script_) rep.fees_by_miner.try_emplace(name, 0);
    rep.reorgs = reorgs_;
    rep.trace_lines = trace_lines_;
    rep.trace_digest = trace_hash_.finish();
    rep.chainstate_export = ref.export_chainstate();
    rep.chainstate_digest = ref.export_digest();
    std::istringstream in(rep.chainstate_export);
    auto audit = ledger::audit_export(ledger::read_export(in));
    if (!audit.ok()) throw InvariantViolation("reference export audit: " + audit.problems.front());
    rep.htlc_claims = htlc_claims_;
    rep.htlc_refunds = htlc_refunds_;
    rep.actions_failed = actions_failed_;
    return rep;
  }

  const SimConfig& cfg_;
  World world_;
  std::ostream* trace_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<node::Node>> nodes_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency_;
  std::vector<Traffic> traffic_;
  std::vector<std::set<Digest256>> relayed_;
  std::vector<std::uint64_t> mine_generation_;
  std::vector<double> share_;
  std::vector<ledger::Script> payout_;
  std::map<Digest256, std::string> miner_of_script_;
  std::vector<Wallet> wallets_;
  std::vector<double> demand_clock_;
  std::vector<bool> pending_actions_;
  std::vector<HtlcState> htlcs_;
  std::vector<Outbound> outbound_;
  std::vector<ReorgEvent> reorgs_;
  std::unordered_map<Digest256, std::uint64_t> composite_size_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  crypto::DoubleSha256Stream trace_hash_;
  std::size_t reference_ = 0;
  double initial_eigen_scale_ = 1;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t trace_lines_ = 0;
  std::uint64_t htlc_claims_ = 0;
  std::uint64_t htlc_refunds_ = 0;
  std::uint64_t actions_failed_ = 0;
  bool draining_ = false;
};

}  // namespace

std::string_view to_string(MsgKind k) {
  switch (k) {
    case MsgKind::Tx: return "tx";
    case MsgKind::Eigentx: return "eigentx";
    case MsgKind::Block: return "block";
    case MsgKind::BlockN: return "blockn";
    case MsgKind::GetData: return "getdata";
  }
  return "?";
}

void SimConfig::validate() const {
  params.validate();
  if (compression == 0 || block_interval_ms() == 0) throw ConfigError("compression leaves no block interval");
  if (duration_ms == 0 && !stop_height) throw ConfigError("simulation needs a duration or a stop height");
  if (nodes.empty()) throw ConfigError("no nodes");
  std::set<std::string> names;
  bool miner = false;
  for (const auto& n : nodes) {
    if (!names.insert(n.name).second) throw ConfigError("duplicate node name " + n.name);
    if (n.role == node::Role::Miner) {
      if (!(n.hashpower > 0)) throw ConfigError("miner " + n.name + " needs positive hashpower");
      miner = true;
    }
    if (n.follow_wallet && n.role != node::Role::Half) throw ConfigError("only half nodes follow a wallet");
  }
  if (!miner) throw ConfigError("no miner");
  const bool has_half = std::any_of(nodes.begin(), nodes.end(), [](const auto& n) { return n.role == node::Role::Half; });
  const bool economic = std::any_of(params.splits.begin(), params.splits.end(),
                                    [](const auto& s) { return s.mode == ledger::PartitionMode::Economic; });
  if (has_half && economic) throw ConfigError("half nodes cannot follow economic splits");
  if (std::none_of(nodes.begin(), nodes.end(), [](const auto& n) { return n.role != node::Role::Half; })) {
    throw ConfigError("no full node or miner");
  }

  std::vector<std::vector<std::size_t>> adj(nodes.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& l : links) {
    if (l.a >= nodes.size() || l.b >= nodes.size() || l.a == l.b) throw ConfigError("link endpoints invalid");
    if (l.latency_ms == 0) throw ConfigError("link latency must be positive");
    if (!seen.insert(std::minmax(l.a, l.b)).second) throw ConfigError("duplicate link");
    adj[l.a].push_back(l.b);
    adj[l.b].push_back(l.a);
  }
  std::vector<bool> reached(nodes.size(), false);
  std::deque<std::size_t> todo{0};
  reached[0] = true;
  while (!todo.empty()) {
    auto v = todo.front();
    todo.pop_front();
    for (auto u : adj[v]) {
      if (!reached[u]) {
        reached[u] = true;
        todo.push_back(u);
      }
    }
  }
  if (std::find(reached.begin(), reached.end(), false) != reached.end()) throw ConfigError("topology is not connected");
  for (const auto& o : outages) {
    if (o.link >= links.size() || o.from_ms >= o.to_ms) throw ConfigError("outage invalid");
  }

  std::set<std::string> wallet_names;
  for (const auto& w : wallets) {
    if (!wallet_names.insert(w.name).second) throw ConfigError("duplicate wallet name " + w.name);
    if (w.node >= nodes.size()) throw ConfigError("wallet " + w.name + " attached to unknown node");
    if (w.keys == 0) throw ConfigError("wallet " + w.name + " has no keys");
  }
  for (const auto& n : nodes) {
    if (!n.follow_wallet) continue;
    auto w = std::find_if(wallets.begin(), wallets.end(), [&](const auto& x) { return x.name == *n.follow_wallet; });
    if (w == wallets.end()) throw ConfigError("unknown follow wallet " + *n.follow_wallet);
    if (n.follow_key >= w->keys) throw ConfigError("follow key index out of range for wallet " + w->name);
  }
  for (const auto& d : demand) {
    if (d.wallet >= wallets.size()) throw ConfigError("demand for unknown wallet");
    if (!(d.rate_per_s >= 0)) throw ConfigError("demand rate must be non-negative");
  }
  Height last = 0;
  for (const auto& a : actions) {
    if (a.at_height < last) throw ConfigError("action heights are not sorted");
    last = a.at_height;
    if (const auto* p = std::get_if<PayAction>(&a.body)) {
      if (p->from >= wallets.size() || p->to >= wallets.size()) throw ConfigError("pay names an unknown wallet");
      if (p->via == PayVia::Htlc && nodes[wallets[p->to].node].role == node::Role::Half) {
        throw ConfigError("an HTLC receiver must watch every leg, so it cannot use a half node");
      }
    } else {
      const auto& e = std::get<EigentxAction>(a.body);
      if (e.wallet >= wallets.size()) throw ConfigError("eigentx names an unknown wallet");
    }
  }
}

std::vector<crypto::KeyPair> wallet_keys(const std::string& wallet, std::size_t count) {
  std::vector<crypto::KeyPair> keys;
  for (std::size_t i = 0; i < count; ++i) {
    const auto bucket = static_cast<SubchainId>(i % 16);
    for (std::size_t attempt = 0;; ++attempt) {
      auto k = crypto::KeyPair::from_label("wallet/" + wallet + "/" + std::to_string(i) + "/" + std::to_string(attempt));
      if (crypto::assign_subchain(ledger::Script::p2pkh(k.address_hash()).hash(), 4) == bucket) {
        keys.push_back(std::move(k));
        break;
      }
    }
  }
  return keys;
}

World build_world(const SimConfig& config) {
  World w;
  w.params = config.params;
  std::vector<ledger::TxOut> outs;
  Amount supply = 0;
  for (const auto& spec : config.wallets) {
    w.wallet_keys.push_back(wallet_keys(spec.name, spec.keys));
    const auto& keys = w.wallet_keys.back();
    for (std::size_t c = 0; c < spec.coins; ++c) {
      outs.push_back({spec.coin_value, ledger::Script::p2pkh(keys[c % keys.size()].address_hash())});
      supply += spec.coin_value;
    }
  }
  w.params.subsidy.genesis_supply = supply;
  w.genesis = chain::make_genesis(std::move(outs));
  return w;
}

SimReport run_simulation(const SimConfig& config, std::ostream* trace) {
  config.validate();
  spdlog::debug("simulation {} seed {}", config.name, config.seed);
  Simulation sim(config, trace);
  return sim.run();
}

double tx_per_interval(const SimReport& report) {
  if (report.heights.empty()) return 0;
  const Height tip = report.heights.back().height;
  std::uint64_t txs = 0, blocks = 0;
  for (const auto& h : report.heights) {
    if (h.height <= tip / 2) continue;
    for (auto c : h.confirmed) txs += c;
    ++blocks;
  }
  return blocks == 0 ? 0 : static_cast<double>(txs) / static_cast<double>(blocks);
}

std::uint64_t second_half_block_bytes(const SimReport& report, std::size_t node) {
  if (report.heights.empty()) return 0;
  const Height tip = report.heights.back().height;
  std::uint64_t total = 0;
  for (const auto& [h, b] : report.nodes.at(node).traffic.block_bytes_by_height) {
    if (h > tip / 2) total += b;
  }
  return total;
}

void write_blocks(std::ostream& out, const std::vector<std::shared_ptr<const chain::CompositeBlock>>& blocks) {
  for (const auto& cb : blocks) {
    auto bytes = chain::serialize_composite(*cb);
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(bytes.size()));
    out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.size()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

std::vector<std::shared_ptr<const chain::CompositeBlock>> read_blocks(std::istream& in) {
  std::vector<std::shared_ptr<const chain::CompositeBlock>> blocks;
  for (;;) {
    std::uint8_t len_bytes[4];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) {
      if (in.gcount() != 0) throw DecodeError("truncated block length");
      break;
    }
    ByteReader r(ByteView(len_bytes, 4));
    const auto len = r.u32();
    if (len > (64u << 20)) throw DecodeError("block too large");
    Bytes bytes(len);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), len)) throw DecodeError("truncated block");
    blocks.push_back(std::make_shared<const chain::CompositeBlock>(chain::deserialize_composite(bytes)));
  }
  return blocks;
}

std::string replay_blocks(const chain::ConsensusParams& params, const chain::Genesis& genesis,
                          const std::vector<std::shared_ptr<const chain::CompositeBlock>>& blocks) {
  node::Node fresh({"replay", node::Role::Full, std::nullopt}, params, genesis);
  for (const auto& cb : blocks) {
    auto r = fresh.receive_block(cb);
    if (r.status != node::BlockStatus::Connected) {
      throw InvariantViolation("replayed block " + cb->hash().hex() + " did not connect: " +
                               std::string(node::to_string(r.status)) +
                               (r.error ? " " + r.error->describe() : std::string()));
    }
  }
  return fresh.export_chainstate();
}

}  // namespace splitscale::netsim
