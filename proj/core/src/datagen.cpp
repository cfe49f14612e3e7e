#include "utxoshard/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace utxoshard {

namespace {

constexpr double kMaxLogAmount = 15.0;

// Opcodes the fixed templates already use; custom sets avoid them so a
// custom script is recognisable from its bag alone.
constexpr std::array<std::uint8_t, 7> kReserved = {op::OP_RETURN,        op::OP_DROP,    op::OP_DUP,
                                                   op::OP_EQUALVERIFY,   op::OP_HASH160, op::OP_CHECKSIG,
                                                   op::OP_CHECKLOCKTIMEVERIFY};

std::vector<std::uint8_t> custom_opcode_pool() {
  std::vector<std::uint8_t> pool;
  for (int b = 0x51; b <= 0xb9; ++b)
    if (std::find(kReserved.begin(), kReserved.end(), b) == kReserved.end()) pool.push_back(static_cast<std::uint8_t>(b));
  return pool;
}

struct Spendable {
  TxOutpoint outpoint;
  ScriptTemplate lock = ScriptTemplate::P2PKH;
  double log_amount = 0.0;
};

class Generator {
 public:
  explicit Generator(const GenConfig& config)
      : config_(config), profiles_(config.resolved_profiles()), rng_(config.seed), pools_(config.n_communities) {}

  GeneratedStream run() {
    for (std::size_t c = 0; c < config_.n_communities; ++c)
      for (std::size_t r = 0; r < config_.roots_per_community; ++r) mint_root(c, false);

    std::uniform_int_distribution<std::size_t> pick_community(0, config_.n_communities - 1);
    std::bernoulli_distribution intra(config_.p_intra);
    const std::size_t total = config_.n_communities * config_.txs_per_community;
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t c = pick_community(rng_);
      const auto& prof = profiles_[c];
      const std::size_t n_in = draw_count(prof.input_count_weights);

      RawTransaction tx;
      std::vector<Spendable> parents;
      for (std::size_t k = 0; k < n_in; ++k) {
        std::size_t source = c;
        if (config_.n_communities > 1 && !intra(rng_)) {
          std::uniform_int_distribution<std::size_t> other(0, config_.n_communities - 2);
          source = other(rng_);
          if (source >= c) ++source;
        }
        if (pools_[source].empty()) mint_root(source, true);
        auto& pool = pools_[source];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t idx = pick(rng_);
        parents.push_back(pool[idx]);
        pool[idx] = pool.back();
        pool.pop_back();

        TxInput in;
        in.prev_txid = parents.back().outpoint.txid;
        in.prev_vout = parents.back().outpoint.vout;
        in.unlocking_script = unlocking_script(parents.back().lock, c);
        tx.inputs.push_back(std::move(in));
      }

      // Output amounts drift from the mean in-community parent amount.
      double parent_log = 0.0;
      std::size_t own = 0;
      for (std::size_t k = 0; k < parents.size(); ++k) {
        if (std::abs(parents[k].log_amount - prof.amount_log10_center) < 4.0 * prof.amount_log10_sigma + 1e-9) {
          parent_log += parents[k].log_amount;
          ++own;
        }
      }
      const double anchor = own ? parent_log / static_cast<double>(own) : prof.amount_log10_center;

      const std::size_t n_out = draw_count(prof.output_count_weights);
      std::vector<Spendable> created;
      for (std::size_t v = 0; v < n_out; ++v) {
        const auto tmpl = draw_template(prof);
        const double log_amount = draw_amount(prof, anchor);
        tx.outputs.push_back({to_amount(log_amount), locking_script(tmpl, c)});
        created.push_back({{}, tmpl, log_amount});
        if (tmpl == ScriptTemplate::Locktime) tx.locktime = 500000 + static_cast<std::uint32_t>(c) * 1000;
      }
      emit(std::move(tx), c, created, parents);
    }
    return std::move(out_);
  }

 private:
  std::size_t draw_count(const std::vector<double>& weights) {
    std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
    return d(rng_) + 1;
  }

  ScriptTemplate draw_template(const CommunityProfile& prof) {
    std::discrete_distribution<int> d(prof.template_mix.begin(), prof.template_mix.end());
    return static_cast<ScriptTemplate>(d(rng_));
  }

  double draw_amount(const CommunityProfile& prof, double anchor) {
    const double m = config_.amount_memory;
    std::normal_distribution<double> noise(0.0, prof.amount_log10_sigma * std::sqrt(1.0 - m * m));
    const double x = prof.amount_log10_center + m * (anchor - prof.amount_log10_center) + noise(rng_);
    return std::clamp(x, 0.0, kMaxLogAmount);
  }

  static std::uint64_t to_amount(double log_amount) {
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(std::pow(10.0, log_amount))));
  }

  void push_random(Bytes& script, std::size_t len, std::uint8_t first = 0) {
    script.push_back(static_cast<std::uint8_t>(len));
    std::uniform_int_distribution<int> byte(0, 255);
    for (std::size_t i = 0; i < len; ++i) script.push_back(static_cast<std::uint8_t>(byte(rng_)));
    if (first && len) script[script.size() - len] = first;
  }

  Bytes p2pkh_body() {
    Bytes s{op::OP_DUP, op::OP_HASH160};
    push_random(s, 20);
    s.push_back(op::OP_EQUALVERIFY);
    s.push_back(op::OP_CHECKSIG);
    return s;
  }

  Bytes locking_script(ScriptTemplate tmpl, std::size_t c) {
    Bytes s;
    switch (tmpl) {
      case ScriptTemplate::P2PKH:
        return p2pkh_body();
      case ScriptTemplate::P2PK: {
        std::bernoulli_distribution compressed(0.7);
        if (compressed(rng_)) push_random(s, 33, 0x02);
        else push_random(s, 65, 0x04);
        s.push_back(op::OP_CHECKSIG);
        return s;
      }
      case ScriptTemplate::Locktime: {
        const std::uint32_t height = 700000 + static_cast<std::uint32_t>(c) * 5000;
        s.push_back(3);
        s.push_back(static_cast<std::uint8_t>(height));
        s.push_back(static_cast<std::uint8_t>(height >> 8));
        s.push_back(static_cast<std::uint8_t>(height >> 16));
        s.push_back(op::OP_CHECKLOCKTIMEVERIFY);
        s.push_back(op::OP_DROP);
        auto body = p2pkh_body();
        s.insert(s.end(), body.begin(), body.end());
        return s;
      }
      case ScriptTemplate::Custom: {
        auto ops = profiles_[c].custom_opcodes;
        std::shuffle(ops.begin(), ops.end(), rng_);
        std::uniform_int_distribution<std::size_t> count(std::min<std::size_t>(3, ops.size()), ops.size());
        ops.resize(count(rng_));
        push_random(s, 20);
        for (auto o : ops) s.push_back(o);
        s.push_back(op::OP_CHECKSIG);
        return s;
      }
    }
    return s;
  }

  Bytes unlocking_script(ScriptTemplate parent_lock, std::size_t c) {
    Bytes s;
    std::uniform_int_distribution<std::size_t> sig_len(71, 73);
    push_random(s, sig_len(rng_), 0x30);
    switch (parent_lock) {
      case ScriptTemplate::P2PKH:
      case ScriptTemplate::Locktime:
        push_random(s, 33, 0x03);
        break;
      case ScriptTemplate::P2PK:
        break;
      case ScriptTemplate::Custom:
        s.push_back(2);
        s.push_back(static_cast<std::uint8_t>(c));
        s.push_back(0xc5);
        break;
    }
    return s;
  }

  void mint_root(std::size_t c, bool exhausted) {
    const auto& prof = profiles_[c];
    RawTransaction tx;
    TxInput cb;
    cb.prev_vout = 0xffffffff;
    const auto height = static_cast<std::uint32_t>(out_.txs.size());
    cb.unlocking_script = {4, static_cast<std::uint8_t>(height), static_cast<std::uint8_t>(height >> 8),
                           static_cast<std::uint8_t>(height >> 16), static_cast<std::uint8_t>(height >> 24)};
    push_random(cb.unlocking_script, 8);
    tx.inputs.push_back(std::move(cb));
    std::vector<Spendable> created;
    for (std::size_t v = 0; v < config_.outputs_per_root; ++v) {
      const auto tmpl = draw_template(prof);
      const double log_amount = draw_amount(prof, prof.amount_log10_center);
      tx.outputs.push_back({to_amount(log_amount), locking_script(tmpl, c)});
      created.push_back({{}, tmpl, log_amount});
    }
    out_.roots.push_back({c, out_.txs.size(), exhausted});
    emit(std::move(tx), c, created, {});
  }

  void emit(RawTransaction tx, std::size_t c, std::vector<Spendable>& created, const std::vector<Spendable>& parents) {
    tx.update_txid();
    for (const auto& p : parents) out_.spends.push_back({p.outpoint, tx.txid});
    for (std::uint32_t v = 0; v < created.size(); ++v) {
      created[v].outpoint = tx.outpoint(v);
      pools_[c].push_back(created[v]);
    }
    out_.labels.push_back(static_cast<std::uint32_t>(c));
    out_.txs.push_back(std::move(tx));
  }

  const GenConfig& config_;
  std::vector<CommunityProfile> profiles_;
  std::mt19937_64 rng_;
  std::vector<std::vector<Spendable>> pools_;
  GeneratedStream out_;
};

// Summary used by the profile-distance check.
std::vector<double> profile_signature(const CommunityProfile& p) {
  std::vector<double> sig;
  const double mix_total = std::accumulate(p.template_mix.begin(), p.template_mix.end(), 0.0);
  for (double w : p.template_mix) sig.push_back(w / mix_total);
  sig.push_back(p.amount_log10_center);
  auto mean_count = [](const std::vector<double>& w) {
    double total = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      total += w[i];
      acc += w[i] * static_cast<double>(i + 1);
    }
    return acc / total;
  };
  sig.push_back(mean_count(p.input_count_weights));
  sig.push_back(mean_count(p.output_count_weights));
  return sig;
}

}  // namespace

const char* script_template_name(ScriptTemplate t) {
  switch (t) {
    case ScriptTemplate::P2PKH: return "p2pkh";
    case ScriptTemplate::P2PK: return "p2pk";
    case ScriptTemplate::Locktime: return "locktime";
    case ScriptTemplate::Custom: return "custom";
  }
  return "custom";
}

std::vector<CommunityProfile> default_profiles(std::size_t n_communities) {
  static const std::vector<std::vector<double>> kInputs = {{0.7, 0.2, 0.1}, {0.4, 0.4, 0.2}, {0.2, 0.3, 0.3, 0.2}};
  static const std::vector<std::vector<double>> kOutputs = {{0.1, 0.6, 0.2, 0.1},
                                                            {0.05, 0.25, 0.5, 0.2},
                                                            {0.0, 0.2, 0.3, 0.3, 0.2},
                                                            {0.1, 0.2, 0.2, 0.2, 0.2, 0.1},
                                                            {0.2, 0.5, 0.3}};
  const auto pool = custom_opcode_pool();
  constexpr std::size_t kCustomOps = 8;
  std::vector<CommunityProfile> out(n_communities);
  for (std::size_t c = 0; c < n_communities; ++c) {
    auto& p = out[c];
    p.template_mix = {0.15, 0.15, 0.15, 0.15};
    p.template_mix[c % 4] = 0.55;
    if (c % 4 != 3) p.template_mix[3] = 0.25;
    for (std::size_t i = 0; i < kCustomOps; ++i) p.custom_opcodes.push_back(pool[(c * kCustomOps + i) % pool.size()]);
    p.amount_log10_center =
        n_communities > 1 ? 2.5 + 6.5 * static_cast<double>(c) / static_cast<double>(n_communities - 1) : 6.0;
    p.amount_log10_sigma = 0.25;
    p.input_count_weights = kInputs[c % kInputs.size()];
    p.output_count_weights = kOutputs[c % kOutputs.size()];
  }
  return out;
}

std::vector<CommunityProfile> GenConfig::resolved_profiles() const {
  return profiles.empty() ? default_profiles(n_communities) : profiles;
}

void GenConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::BadConfig, m); };
  if (n_communities == 0) fail("n_communities must be positive");
  if (!(p_intra >= 0.0 && p_intra <= 1.0)) fail("p_intra must lie in [0,1]");
  if (!(amount_memory >= 0.0 && amount_memory < 1.0)) fail("amount_memory must lie in [0,1)");
  if (roots_per_community == 0 || outputs_per_root == 0) fail("roots need at least one output");
  if (!profiles.empty() && profiles.size() != n_communities)
    fail("expected " + std::to_string(n_communities) + " profiles, got " + std::to_string(profiles.size()));
  const auto prof = resolved_profiles();
  auto valid_weights = [](auto begin, auto end) {
    double total = 0.0;
    for (auto it = begin; it != end; ++it) {
      if (!(*it >= 0.0 && *it <= 1.0)) return false;
      total += *it;
    }
    return total > 0.0;
  };
  for (std::size_t c = 0; c < prof.size(); ++c) {
    const auto& p = prof[c];
    const std::string who = "community " + std::to_string(c) + ": ";
    if (!valid_weights(p.template_mix.begin(), p.template_mix.end())) fail(who + "bad template mix");
    if (!valid_weights(p.input_count_weights.begin(), p.input_count_weights.end())) fail(who + "bad input counts");
    if (!valid_weights(p.output_count_weights.begin(), p.output_count_weights.end())) fail(who + "bad output counts");
    if (p.template_mix[3] > 0.0 && p.custom_opcodes.empty()) fail(who + "custom template without opcodes");
    if (!(p.amount_log10_sigma > 0.0) || p.amount_log10_center < 0.0 || p.amount_log10_center > kMaxLogAmount)
      fail(who + "bad amount range");
  }
  for (std::size_t a = 0; a < prof.size(); ++a) {
    for (std::size_t b = a + 1; b < prof.size(); ++b) {
      const auto sa = profile_signature(prof[a]);
      const auto sb = profile_signature(prof[b]);
      double dist = 0.0;
      for (std::size_t i = 0; i < sa.size(); ++i) dist += std::abs(sa[i] - sb[i]);
      auto oa = prof[a].custom_opcodes, ob = prof[b].custom_opcodes;
      std::sort(oa.begin(), oa.end());
      std::sort(ob.begin(), ob.end());
      if (dist < 1e-9 && oa == ob)
        fail("communities " + std::to_string(a) + " and " + std::to_string(b) + " have indistinguishable profiles");
    }
  }
}

std::size_t GeneratedStream::exhausted_count() const {
  return static_cast<std::size_t>(std::count_if(roots.begin(), roots.end(), [](const RootEvent& r) { return r.exhausted; }));
}

std::string GeneratedStream::labels_jsonl() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < txs.size(); ++i)
    os << "{\"txid\":\"" << txs[i].txid.to_hex() << "\",\"community\":" << labels[i] << "}\n";
  return os.str();
}

GeneratedStream generate(const GenConfig& config) {
  config.validate();
  return Generator(config).run();
}

}  // namespace utxoshard
