#include "splitscale/scenario.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

namespace splitscale::scenario {

using crypto::SubchainId;
using ledger::Height;

namespace {

struct Token {
  std::string_view text;
  std::size_t column = 0;
};

struct Field {
  std::string_view value;
  std::size_t column = 0;      ///< of the key
  std::size_t value_column = 0;
  bool used = false;
};

/// A deferred name lookup, resolved once every declaration is known.
struct NameRef {
  std::size_t line = 0;
  std::size_t column = 0;
  std::string name;
  std::function<void(std::size_t)> bind;
};

class Parser {
 public:
  Result<Scenario, std::vector<Diagnostic>> parse(std::string_view text) {
    std::size_t line_no = 0;
    while (!text.empty()) {
      auto nl = text.find('\n');
      auto line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      parse_line(line_no, line);
    }
    resolve();
    s_.config.params.target_interval_ms = s_.config.block_interval_ms();
    if (diags_.empty()) {
      try {
        s_.config.validate();
      } catch (const ConfigError& e) {
        diags_.push_back({0, 0, e.what()});
      }
    }
    std::stable_sort(diags_.begin(), diags_.end(), [](const Diagnostic& a, const Diagnostic& b) {
      return std::tie(a.line, a.column) < std::tie(b.line, b.column);
    });
    if (!diags_.empty()) return fail(std::move(diags_));
    return std::move(s_);
  }

 private:
  void error(std::size_t line, std::size_t column, std::string message) {
    diags_.push_back({line, column, std::move(message)});
  }

  static std::vector<Token> tokenize(std::string_view line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      const auto start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
      if (i > start) out.push_back({line.substr(start, i - start), start + 1});
    }
    return out;
  }

  void parse_line(std::size_t line, std::string_view text) {
    auto tokens = tokenize(text);
    if (tokens.empty()) return;
    line_ = line;
    verb_ = tokens[0];
    fields_.clear();
    bool ok = true;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto& t = tokens[i];
      auto eq = t.text.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        error(line, t.column, "expected key=value, got '" + std::string(t.text) + "'");
        ok = false;
        continue;
      }
      auto key = t.text.substr(0, eq);
      if (fields_.contains(key)) {
        error(line, t.column, "duplicate key '" + std::string(key) + "'");
        ok = false;
        continue;
      }
      fields_[key] = {t.text.substr(eq + 1), t.column, t.column + eq + 1, false};
    }
    if (!ok) return;

    using Handler = void (Parser::*)();
    static const std::map<std::string_view, Handler> handlers{
        {"sim", &Parser::on_sim},         {"consensus", &Parser::on_consensus}, {"node", &Parser::on_node},
        {"link", &Parser::on_link},       {"outage", &Parser::on_outage},       {"partition", &Parser::on_partition},
        {"wallet", &Parser::on_wallet},   {"demand", &Parser::on_demand},       {"split", &Parser::on_split},
        {"pay", &Parser::on_pay},         {"eigentx", &Parser::on_eigentx},     {"metrics", &Parser::on_metrics},
    };
    auto h = handlers.find(verb_.text);
    if (h == handlers.end()) {
      error(line, verb_.column, "unknown directive '" + std::string(verb_.text) + "'");
      return;
    }
    (this->*(h->second))();
    for (const auto& [key, f] : fields_) {
      if (!f.used) {
        error(line, f.column, "unknown key '" + std::string(key) + "' for '" + std::string(verb_.text) + "'");
      }
    }
  }

  // ---- field access -------------------------------------------------------

  Field* field(std::string_view key) {
    auto it = fields_.find(key);
    if (it == fields_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  std::optional<std::string> text(std::string_view key, bool required) {
    auto* f = field(key);
    if (f == nullptr) {
      if (required) error(line_, verb_.column, "'" + std::string(verb_.text) + "' needs " + std::string(key) + "=");
      return std::nullopt;
    }
    if (f->value.empty()) {
      error(line_, f->value_column, "empty value for '" + std::string(key) + "'");
      return std::nullopt;
    }
    return std::string(f->value);
  }

  std::optional<std::uint64_t> integer(std::string_view key, bool required) {
    auto* f = field(key);
    if (f == nullptr) {
      if (required) error(line_, verb_.column, "'" + std::string(verb_.text) + "' needs " + std::string(key) + "=");
      return std::nullopt;
    }
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(f->value.data(), f->value.data() + f->value.size(), v);
    if (ec != std::errc{} || p != f->value.data() + f->value.size()) {
      error(line_, f->value_column, "'" + std::string(key) + "' expects a non-negative integer");
      return std::nullopt;
    }
    return v;
  }

  std::optional<double> real(std::string_view key, bool required) {
    auto* f = field(key);
    if (f == nullptr) {
      if (required) error(line_, verb_.column, "'" + std::string(verb_.text) + "' needs " + std::string(key) + "=");
      return std::nullopt;
    }
    double v = 0;
    auto [p, ec] = std::from_chars(f->value.data(), f->value.data() + f->value.size(), v);
    if (ec != std::errc{} || p != f->value.data() + f->value.size() || !(v >= 0)) {
      error(line_, f->value_column, "'" + std::string(key) + "' expects a non-negative number");
      return std::nullopt;
    }
    return v;
  }

  std::optional<bool> flag(std::string_view key) {
    auto* f = field(key);
    if (f == nullptr) return std::nullopt;
    if (f->value == "yes" || f->value == "true") return true;
    if (f->value == "no" || f->value == "false") return false;
    error(line_, f->value_column, "'" + std::string(key) + "' expects yes or no");
    return std::nullopt;
  }

  /// Time in ms from either key_s or key_ms.
  std::optional<std::uint64_t> millis(std::string_view stem, bool required) {
    auto s = integer(std::string(stem) + "_s", false);
    auto ms = integer(std::string(stem) + "_ms", false);
    if (s && ms) {
      error(line_, verb_.column, "give " + std::string(stem) + "_s or " + std::string(stem) + "_ms, not both");
      return std::nullopt;
    }
    if (s) return *s * 1000;
    if (ms) return *ms;
    if (required) error(line_, verb_.column, "'" + std::string(verb_.text) + "' needs " + std::string(stem) + "_s=");
    return std::nullopt;
  }

  void refer(std::string_view key, bool wallet, std::function<void(std::size_t)> bind, bool required = true) {
    auto* f = field(key);
    if (f == nullptr) {
      if (required) error(line_, verb_.column, "'" + std::string(verb_.text) + "' needs " + std::string(key) + "=");
      return;
    }
    (wallet ? wallet_refs_ : node_refs_).push_back({line_, f->value_column, std::string(f->value), std::move(bind)});
  }

  void declare(std::map<std::string, std::size_t>& names, const std::string& name, std::size_t index,
               std::string_view what) {
    if (!names.emplace(name, index).second) {
      error(line_, field_column("name"), "duplicate " + std::string(what) + " name '" + name + "'");
    }
  }

  std::size_t field_column(std::string_view key) const {
    auto it = fields_.find(key);
    return it == fields_.end() ? verb_.column : it->second.value_column;
  }

  void check_height(Height h) {
    if (h < last_height_) {
      error(line_, field_column("at_height"),
            "at_height=" + std::to_string(h) + " comes after at_height=" + std::to_string(last_height_) +
                "; action heights must be sorted");
    }
    last_height_ = std::max(last_height_, h);
  }

  // ---- directives ---------------------------------------------------------

  void on_sim() {
    auto& c = s_.config;
    if (auto v = text("name", false)) c.name = *v;
    if (auto v = integer("seed", false)) c.seed = *v;
    if (auto v = millis("duration", false)) c.duration_ms = *v;
    if (auto v = integer("stop_height", false)) c.stop_height = *v;
    if (auto v = integer("compression", false)) {
      if (*v == 0) error(line_, field_column("compression"), "compression must be positive");
      c.compression = std::max<std::uint64_t>(*v, 1);
    }
  }

  void on_consensus() {
    auto& p = s_.config.params;
    auto bits = [&](std::string_view key, crypto::Digest256& target) {
      if (auto v = integer(key, false)) {
        if (*v > 255) error(line_, field_column(key), std::string(key) + " must be below 256");
        else target = crypto::target_from_bits(static_cast<unsigned>(*v));
      }
    };
    bits("subchain_bits", p.initial_targets.subchain);
    bits("eigen_bits", p.initial_targets.eigen);
    if (auto v = integer("capacity", false)) p.block_tx_capacity = *v;
    if (auto v = integer("eigen_capacity", false)) p.eigen_capacity = *v;
    if (auto v = integer("retarget_window", false)) p.retarget_window = static_cast<Height>(*v);
    if (auto v = integer("subsidy", false)) p.subsidy.initial = *v;
    if (auto v = integer("halving", false)) p.subsidy.halving_interval = static_cast<Height>(*v);
    if (auto v = text("eigen_window", false)) {
      auto dash = v->find('-');
      Height a = 0, b = 0;
      bool ok = dash != std::string::npos;
      if (ok) {
        auto r1 = std::from_chars(v->data(), v->data() + dash, a);
        auto r2 = std::from_chars(v->data() + dash + 1, v->data() + v->size(), b);
        ok = r1.ec == std::errc{} && r1.ptr == v->data() + dash && r2.ec == std::errc{} &&
             r2.ptr == v->data() + v->size() && a <= b;
      }
      if (ok) p.eigentx_window = xfer::EigenWindow{a, b};
      else error(line_, field_column("eigen_window"), "eigen_window expects START-END with START <= END");
    }
  }

  void on_node() {
    netsim::NodeSpec n;
    auto name = text("name", true);
    auto role = text("role", true);
    if (role) {
      if (auto r = node::parse_role(*role)) n.role = *r;
      else error(line_, field_column("role"), "role must be miner, full or half");
    }
    if (auto v = real("hashpower", false)) n.hashpower = *v;
    else if (n.role == node::Role::Miner) n.hashpower = 1;
    if (auto f = text("follow", false)) {
      auto colon = f->find(':');
      n.follow_wallet = f->substr(0, colon);
      if (colon != std::string::npos) {
        std::size_t k = 0;
        auto tail = std::string_view(*f).substr(colon + 1);
        auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), k);
        if (ec != std::errc{} || p != tail.data() + tail.size()) {
          error(line_, field_column("follow"), "follow expects WALLET or WALLET:KEY");
        }
        n.follow_key = k;
      }
      const auto follow_col = field_column("follow");
      wallet_refs_.push_back({line_, follow_col, *n.follow_wallet, [](std::size_t) {}});
    }
    if (!name) return;
    n.name = *name;
    declare(node_names_, n.name, s_.config.nodes.size(), "node");
    s_.config.nodes.push_back(std::move(n));
  }

  void on_link() {
    auto index = s_.config.links.size();
    s_.config.links.push_back({});
    refer("a", false, [this, index](std::size_t i) { s_.config.links[index].a = i; });
    refer("b", false, [this, index](std::size_t i) { s_.config.links[index].b = i; });
    if (auto v = integer("latency_ms", false)) s_.config.links[index].latency_ms = *v;
    else s_.config.links[index].latency_ms = 20;
    link_lines_.push_back(line_);
  }

  void on_outage() {
    auto from = millis("from", true);
    auto to = millis("to", true);
    auto a = text("a", true), b = text("b", true);
    if (!from || !to || !a || !b) return;
    outage_specs_.push_back({line_, verb_.column, {*a}, {*b}, *from, *to, false});
  }

  void on_partition() {
    auto from = millis("from", true);
    auto to = millis("to", true);
    auto group = text("group", true);
    if (!from || !to || !group) return;
    std::vector<std::string> names;
    std::stringstream ss(*group);
    for (std::string n; std::getline(ss, n, ',');) names.push_back(n);
    outage_specs_.push_back({line_, field_column("group"), names, {}, *from, *to, true});
  }

  void on_wallet() {
    netsim::WalletSpec w;
    auto name = text("name", true);
    if (auto v = integer("keys", false)) w.keys = *v;
    if (auto v = integer("coins", false)) w.coins = *v;
    if (auto v = integer("value", false)) w.coin_value = *v;
    auto index = s_.config.wallets.size();
    refer("node", false, [this, index](std::size_t i) { s_.config.wallets[index].node = i; });
    if (w.keys == 0) error(line_, field_column("keys"), "a wallet needs at least one key");
    if (!name) name = "";
    w.name = *name;
    declare(wallet_names_, w.name, index, "wallet");
    s_.config.wallets.push_back(std::move(w));
  }

  void on_demand() {
    netsim::DemandSpec d;
    auto index = s_.config.demand.size();
    refer("wallet", true, [this, index](std::size_t i) { s_.config.demand[index].wallet = i; });
    if (auto v = real("rate", true)) d.rate_per_s = *v;
    if (auto v = integer("fee", false)) d.fee = *v;
    s_.config.demand.push_back(d);
  }

  void on_split() {
    auto h = integer("at_height", true);
    auto mode = text("mode", false);
    chain::SplitEvent e;
    if (mode) {
      if (auto m = ledger::parse_partition_mode(*mode)) e.mode = *m;
      else error(line_, field_column("mode"), "mode must be logical or economic");
    }
    if (!h) return;
    if (*h == 0) error(line_, field_column("at_height"), "splits happen at height 1 or later");
    check_height(static_cast<Height>(*h));
    e.height = static_cast<Height>(*h);
    s_.config.params.splits.push_back(e);
  }

  void on_pay() {
    netsim::PayAction p;
    auto index = s_.config.actions.size();
    auto h = integer("at_height", true);
    if (auto v = integer("amount", true)) p.amount = *v;
    if (auto v = integer("fee", false)) p.fee = *v;
    if (auto v = integer("timelock", false)) p.timelock_delta = static_cast<Height>(*v);
    if (auto v = flag("reveal")) p.reveal = *v;
    if (auto via = text("via", false)) {
      if (*via == "htlc") p.via = netsim::PayVia::Htlc;
      else if (*via != "direct") error(line_, field_column("via"), "via must be direct or htlc");
    }
    s_.config.actions.push_back({static_cast<Height>(h.value_or(0)), p});
    if (h) check_height(static_cast<Height>(*h));
    refer("from", true, [this, index](std::size_t i) { std::get<netsim::PayAction>(s_.config.actions[index].body).from = i; });
    refer("to", true, [this, index](std::size_t i) { std::get<netsim::PayAction>(s_.config.actions[index].body).to = i; });
  }

  void on_eigentx() {
    netsim::EigentxAction e;
    auto index = s_.config.actions.size();
    auto h = integer("at_height", true);
    if (auto v = integer("from", true)) e.from = static_cast<SubchainId>(*v);
    if (auto v = integer("to", true)) e.to = static_cast<SubchainId>(*v);
    if (auto v = integer("amount", true)) e.amount = *v;
    s_.config.actions.push_back({static_cast<Height>(h.value_or(0)), e});
    if (h) check_height(static_cast<Height>(*h));
    refer("wallet", true,
          [this, index](std::size_t i) { std::get<netsim::EigentxAction>(s_.config.actions[index].body).wallet = i; });
  }

  void on_metrics() {
    auto include = text("include", true);
    if (!include) return;
    s_.metrics.clear();
    std::stringstream ss(*include);
    for (std::string g; std::getline(ss, g, ',');) {
      if (!all_metric_groups().contains(g)) {
        error(line_, field_column("include"), "unknown metric group '" + g + "'");
        continue;
      }
      s_.metrics.insert(g);
    }
  }

  // ---- name resolution ----------------------------------------------------

  struct OutageSpec {
    std::size_t line, column;
    std::vector<std::string> a, b;
    std::uint64_t from, to;
    bool partition;
  };

  void resolve() {
    auto bind = [&](std::vector<NameRef>& refs, const std::map<std::string, std::size_t>& names,
                    std::string_view what) {
      for (auto& r : refs) {
        auto it = names.find(r.name);
        if (it == names.end()) {
          error(r.line, r.column, "unknown " + std::string(what) + " '" + r.name + "'");
          continue;
        }
        r.bind(it->second);
      }
    };
    bind(node_refs_, node_names_, "node");
    bind(wallet_refs_, wallet_names_, "wallet");

    auto& c = s_.config;
    for (const auto& o : outage_specs_) {
      std::set<std::size_t> group;
      bool ok = true;
      for (const auto& n : o.a) {
        auto it = node_names_.find(n);
        if (it == node_names_.end()) {
          error(o.line, o.column, "unknown node '" + n + "'");
          ok = false;
        } else {
          group.insert(it->second);
        }
      }
      std::optional<std::size_t> other;
      if (!o.partition) {
        auto it = node_names_.find(o.b[0]);
        if (it == node_names_.end()) {
          error(o.line, o.column, "unknown node '" + o.b[0] + "'");
          ok = false;
        } else {
          other = it->second;
        }
      }
      if (!ok) continue;
      bool matched = false;
      for (std::size_t l = 0; l < c.links.size(); ++l) {
        const auto& link = c.links[l];
        bool cut = o.partition ? group.contains(link.a) != group.contains(link.b)
                               : std::minmax(link.a, link.b) == std::minmax(*group.begin(), *other);
        if (cut) {
          c.outages.push_back({l, o.from, o.to});
          matched = true;
        }
      }
      if (!matched) error(o.line, o.column, o.partition ? "partition cuts no link" : "no link between those nodes");
    }
  }

  Scenario s_;
  std::vector<Diagnostic> diags_;
  std::size_t line_ = 0;
  Token verb_;
  std::map<std::string_view, Field> fields_;
  std::map<std::string, std::size_t> node_names_, wallet_names_;
  std::vector<NameRef> node_refs_, wallet_refs_;
  std::vector<std::size_t> link_lines_;
  std::vector<OutageSpec> outage_specs_;
  Height last_height_ = 0;
};

std::string fixed(double v, int digits = 6) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::string Diagnostic::str() const {
  if (line == 0) return "scenario: " + message;
  return "line " + std::to_string(line) + " col " + std::to_string(column) + ": " + message;
}

Result<Scenario, std::vector<Diagnostic>> parse_scenario(std::string_view text) {
  Parser p;
  return p.parse(text);
}

Result<Scenario, std::vector<Diagnostic>> load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return fail(std::vector<Diagnostic>{{0, 0, "cannot read " + file.string()}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

Summary summarize(const Scenario& s, const netsim::SimReport& report) {
  Summary out;
  out.tx_per_interval = netsim::tx_per_interval(report);
  if (s.config.params.splits.empty()) {
    out.baseline_tx_per_interval = out.tx_per_interval;
  } else {
    auto base = s.config;
    base.params.splits.clear();
    out.baseline_tx_per_interval = netsim::tx_per_interval(netsim::run_simulation(base));
  }
  if (*out.baseline_tx_per_interval > 0) out.scale_factor = out.tx_per_interval / *out.baseline_tx_per_interval;

  out.full_block_bytes = netsim::second_half_block_bytes(report, report.reference);
  for (std::size_t i = 0; i < report.nodes.size(); ++i) {
    if (report.nodes[i].role == node::Role::Half) {
      out.half_block_bytes = netsim::second_half_block_bytes(report, i);
      break;
    }
  }
  if (out.half_block_bytes && *out.full_block_bytes > 0) {
    out.bandwidth_ratio = static_cast<double>(*out.half_block_bytes) / static_cast<double>(*out.full_block_bytes);
  }
  return out;
}

std::string metrics_csv(const Scenario& s, const netsim::SimReport& report) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  auto row = [&](std::string_view record, std::optional<Height> height, std::string_view node,
                 std::optional<SubchainId> sub, std::string_view kind, auto value) {
    out << record << ',';
    if (height) out << *height;
    out << ',' << node << ',';
    if (sub) out << *sub;
    out << ',' << kind << ',' << value << '\n';
  };
  const auto& want = s.metrics;
  if (want.contains("confirmed")) {
    for (const auto& h : report.heights) {
      for (std::size_t i = 0; i < h.confirmed.size(); ++i) {
        row("confirmed", h.height, "", static_cast<SubchainId>(i), "txs", h.confirmed[i]);
      }
      row("confirmed", h.height, "", std::nullopt, "eigentxs", h.eigentxs);
    }
  }
  if (want.contains("blocks")) {
    for (const auto& h : report.heights) {
      row("block", h.height, "", std::nullopt, "depth", h.depth);
      row("block", h.height, "", std::nullopt, "composite_bytes", h.block_bytes);
      row("block", h.height, "", std::nullopt, "eigen_bytes", h.eigen_bytes);
    }
  }
  if (want.contains("bytes")) {
    for (const auto& n : report.nodes) {
      for (std::size_t k = 0; k < netsim::kMsgKinds; ++k) {
        const auto kind = std::string(netsim::to_string(static_cast<netsim::MsgKind>(k)));
        row("bytes", std::nullopt, n.name, std::nullopt, kind + "_recv", n.traffic.bytes_recv[k]);
        row("bytes", std::nullopt, n.name, std::nullopt, kind + "_sent", n.traffic.bytes_sent[k]);
      }
      for (const auto& [h, b] : n.traffic.block_bytes_by_height) {
        row("block_bytes_recv", h, n.name, std::nullopt, "block", b);
      }
    }
  }
  if (want.contains("fees")) {
    for (const auto& [miner, fees] : report.fees_by_miner) row("fees", std::nullopt, miner, std::nullopt, "fees", fees);
  }
  if (want.contains("reorgs")) {
    for (const auto& r : report.reorgs) {
      row("reorg", r.new_tip, report.nodes[r.node].name, std::nullopt, "depth", r.depth);
    }
  }
  if (want.contains("stats")) {
    for (const auto& n : report.nodes) {
      const auto& st = n.stats;
      const std::pair<std::string_view, std::uint64_t> values[] = {
          {"blocks_connected", st.blocks_connected}, {"blocks_disconnected", st.blocks_disconnected},
          {"blocks_rejected", st.blocks_rejected},   {"duplicates", st.duplicates},
          {"orphans", st.orphans},                   {"reorgs", st.reorgs},
          {"max_reorg_depth", st.max_reorg_depth},   {"txs_accepted", st.txs_accepted},
          {"txs_rejected", st.txs_rejected},         {"eigentxs_accepted", st.eigentxs_accepted},
          {"eigentxs_rejected", st.eigentxs_rejected}, {"messages_rejected", n.traffic.rejected},
          {"tip_height", n.tip_height},
      };
      for (const auto& [k, v] : values) row("stats", std::nullopt, n.name, std::nullopt, k, v);
    }
  }
  return out.str();
}

std::string summary_text(const Scenario& s, const netsim::SimReport& report, const Summary& sum) {
  std::ostringstream out;
  const auto& c = s.config;
  const Height tip = report.heights.empty() ? 0 : report.heights.back().height;
  out << "scenario " << c.name << '\n';
  out << "seed " << c.seed << '\n';
  out << "end_time_ms " << report.end_time_ms << '\n';
  out << "reference_node " << report.nodes[report.reference].name << '\n';
  out << "final_height " << tip << '\n';
  out << "final_depth " << c.params.depth_at(tip + 1) << '\n';
  out << "tx_per_interval " << fixed(sum.tx_per_interval) << '\n';
  out << "baseline_tx_per_interval "
      << (sum.baseline_tx_per_interval ? fixed(*sum.baseline_tx_per_interval) : std::string("n/a")) << '\n';
  out << "scale_factor " << (sum.scale_factor ? fixed(*sum.scale_factor) : std::string("n/a")) << '\n';
  out << "full_block_bytes " << (sum.full_block_bytes ? std::to_string(*sum.full_block_bytes) : "n/a") << '\n';
  out << "half_block_bytes " << (sum.half_block_bytes ? std::to_string(*sum.half_block_bytes) : "n/a") << '\n';
  out << "bandwidth_ratio " << (sum.bandwidth_ratio ? fixed(*sum.bandwidth_ratio) : std::string("n/a")) << '\n';
  for (const auto& [miner, fees] : report.fees_by_miner) out << "fees " << miner << ' ' << fees << '\n';
  out << "reorgs " << report.reorgs.size() << '\n';
  out << "htlc_claims " << report.htlc_claims << '\n';
  out << "htlc_refunds " << report.htlc_refunds << '\n';
  out << "actions_failed " << report.actions_failed << '\n';
  out << "trace_lines " << report.trace_lines << '\n';
  out << "trace_digest " << report.trace_digest.hex() << '\n';
  out << "chainstate_digest " << report.chainstate_digest.hex() << '\n';
  return out.str();
}

RunResult run_scenario(const Scenario& s, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  RunResult r;
  {
    std::ofstream trace(out / "trace.log", std::ios::binary);
    if (!trace) throw std::runtime_error("cannot write " + (out / "trace.log").string());
    r.report = netsim::run_simulation(s.config, &trace);
  }
  spdlog::debug("{}: height {} trace {}", s.config.name, r.report.heights.size(), r.report.trace_digest.hex());
  r.summary = summarize(s, r.report);
  write_file(out / "metrics.csv", metrics_csv(s, r.report));
  write_file(out / "summary.txt", summary_text(s, r.report, r.summary));
  write_file(out / "chainstate.export", r.report.chainstate_export);
  std::ofstream blocks(out / "blocks.bin", std::ios::binary);
  netsim::write_blocks(blocks, r.report.blocks);
  if (!blocks) throw std::runtime_error("cannot write " + (out / "blocks.bin").string());
  return r;
}

}  // namespace splitscale::scenario
