#include "platoon/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace platoon {

void ChannelConfig::validate() const {
  if (!(delay_cap >= 0.0)) throw std::invalid_argument("channel: delay_cap must be >= 0");
  if (!(delay_lambda >= 0.0)) throw std::invalid_argument("channel: delay_lambda must be >= 0");
  if (!(loss_rate >= 0.0 && loss_rate < 1.0))
    throw std::invalid_argument("channel: loss_rate must be in [0,1)");
  if (!(outage_rho > 0.0 && outage_rho < 1.0))
    throw std::invalid_argument("channel: outage_rho must be in (0,1)");
  if (!(outage_upsilon >= 0.0))
    throw std::invalid_argument("channel: outage_upsilon must be >= 0");
}

int outage_bound(const ChannelConfig& config) {
  if (!(config.outage_rho > 0.0 && config.outage_rho < 1.0))
    throw std::invalid_argument("channel: outage_rho must be in (0,1)");
  const double raw = config.outage_upsilon / (1.0 - config.outage_rho);
  return std::max(1, static_cast<int>(std::ceil(raw - 1e-12)));
}

double delay_density_kernel(const ChannelConfig& config, double t) {
  if (t < 0.0 || t > config.delay_cap) return 0.0;
  return config.delay_lambda * std::exp(-config.delay_lambda * t);
}

double sample_delay(const ChannelConfig& config, rng::Stream& stream) {
  if (config.delay_cap <= 0.0) return 0.0;
  const double u = stream.canonical();
  if (config.delay_lambda <= 0.0) return u * config.delay_cap;  // flat limit
  // Inverse CDF of the exponential law conditioned on [0, cap].
  const double mass = 1.0 - std::exp(-config.delay_lambda * config.delay_cap);
  return -std::log1p(-u * mass) / config.delay_lambda;
}

const char* to_string(ReceiveClass c) {
  switch (c) {
    case ReceiveClass::Fresh: return "fresh";
    case ReceiveClass::StaleDelayed: return "stale";
    case ReceiveClass::Lost: return "lost";
  }
  return "?";
}

ReceiveClass classify_receive(int packet_ts, int last_accepted_ts,
                              int current_step, const ChannelConfig& config,
                              double step_len) {
  const double age = static_cast<double>(current_step - packet_ts) * step_len;
  if (age > config.delay_cap + 1e-12) return ReceiveClass::Lost;
  if (packet_ts > last_accepted_ts) return ReceiveClass::Fresh;
  return ReceiveClass::StaleDelayed;
}

Link::Link(const ChannelConfig& config, double step_len, int sender,
           int receiver, std::uint64_t run_seed)
    : config_(config),
      step_len_(step_len),
      sender_(sender),
      receiver_(receiver),
      bound_(outage_bound(config)),
      stream_(run_seed, {0x11a6ull, static_cast<std::uint64_t>(sender),
                         static_cast<std::uint64_t>(receiver)}) {
  config.validate();
}

void Link::send(Packet packet, int step) {
  packet.timestamp = step;
  log(step, "sent");
  last_sent_ = packet;
  outbox_.push_back(std::move(packet));
}

void Link::log(int step, const char* event) {
  if (log_) log_->push_back({step, sender_, receiver_, event});
}

std::vector<Link::Delivery> Link::advance(int step) {
  // Loss and delay decisions for this step's sends. The delay draw happens
  // even for lost packets so the stream position depends only on the send
  // schedule, not on loss outcomes.
  for (Packet& p : outbox_) {
    const bool lost = stream_.bernoulli(config_.loss_rate);
    const double delay = sample_delay(config_, stream_);
    if (lost) {
      log(step, "lost");
      continue;
    }
    const int delay_steps =
        static_cast<int>(std::ceil(delay / step_len_ - 1e-12));
    in_flight_.push_back({std::move(p), step + delay_steps});
  }
  outbox_.clear();

  std::vector<Delivery> out;
  std::vector<InFlight> keep;
  keep.reserve(in_flight_.size());
  for (auto& f : in_flight_) {
    if (f.deliver_step <= step) {
      out.push_back({std::move(f.packet), ReceiveClass::Lost, false});
    } else {
      keep.push_back(std::move(f));
    }
  }
  in_flight_ = std::move(keep);
  std::sort(out.begin(), out.end(), [](const Delivery& a, const Delivery& b) {
    return a.packet.timestamp < b.packet.timestamp;
  });

  bool any_fresh = false;
  for (Delivery& d : out) {
    d.cls = classify_receive(d.packet.timestamp, last_accepted_, step, config_,
                             step_len_);
    if (d.cls == ReceiveClass::Fresh) {
      last_accepted_ = d.packet.timestamp;
      any_fresh = true;
      log(step, "delivered");
    } else {
      log(step, to_string(d.cls));
    }
  }

  if (any_fresh) {
    streak_ = 0;
    return out;
  }

  // The streak of non-ideal steps may not exceed the outage bound: once it
  // would, the newest packet is delivered regardless of its scheduled fate.
  // Only a packet that still classifies Fresh can end the outage.
  if (streak_ + 1 > bound_ && last_sent_ &&
      last_sent_->timestamp > last_accepted_ &&
      classify_receive(last_sent_->timestamp, last_accepted_, step, config_,
                       step_len_) == ReceiveClass::Fresh) {
    Delivery forced{*last_sent_, ReceiveClass::Fresh, true};
    last_accepted_ = forced.packet.timestamp;
    std::erase_if(in_flight_, [&](const InFlight& f) {
      return f.packet.timestamp == forced.packet.timestamp;
    });
    log(step, "forced");
    out.push_back(std::move(forced));
    streak_ = 0;
  } else {
    ++streak_;
  }
  return out;
}

}  // namespace platoon
