#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "platoon/broadcast.hpp"
#include "platoon/rng.hpp"

namespace platoon {

/// Per-link model of the non-ideal V2X channel: truncated-exponential
/// delays, Bernoulli packet loss, and a hard cap on how long a receiver can
/// go without usable data.
struct ChannelConfig {
  double delay_lambda = 0.1;   ///< exponential rate parameter [1/s]
  double delay_cap = 0.1;      ///< maximum delay [s]
  double loss_rate = 0.15;     ///< per-packet loss probability, in [0,1)
  double outage_upsilon = 3.0; ///< continuous non-ideal-duration cap [steps]
  double outage_rho = 0.25;    ///< non-ideal-duration proportion, in (0,1)

  void validate() const;
};

/// Maximum consecutive non-ideal steps: ceil(upsilon / (1 - rho)), at least 1.
int outage_bound(const ChannelConfig& config);

/// Delay law kernel lambda*exp(-lambda*t) on [0, delay_cap], 0 outside.
double delay_density_kernel(const ChannelConfig& config, double t);

/// Draw a delay in seconds by inverse CDF of the truncated exponential.
double sample_delay(const ChannelConfig& config, rng::Stream& stream);

enum class ReceiveClass { Fresh, StaleDelayed, Lost };

const char* to_string(ReceiveClass c);

/// Timestamp-based staleness check. Fresh packets carry a strictly newer
/// timestamp than the last accepted one and are at most delay_cap old;
/// older-but-recent packets are StaleDelayed; anything beyond the cap is
/// Lost. Receivers keep the previous trajectory for the latter two.
ReceiveClass classify_receive(int packet_ts, int last_accepted_ts,
                              int current_step, const ChannelConfig& config,
                              double step_len);

struct Packet {
  int sender = -1;
  int timestamp = 0;  ///< send step
  BroadcastTrajectory payload;
};

struct ChannelEvent {
  int step;
  int sender;
  int receiver;
  const char* event;  // sent | delivered | lost | stale | forced
};

/// One directed link. `send` enqueues this step's packet; `advance` (call
/// exactly once per step) decides loss and delay, releases anything due, and
/// force-delivers the newest packet once the non-ideal streak hits the
/// outage bound, so no run of unusable steps ever exceeds it.
class Link {
 public:
  struct Delivery {
    Packet packet;
    ReceiveClass cls;
    bool forced = false;
  };

  Link(const ChannelConfig& config, double step_len, int sender, int receiver,
       std::uint64_t run_seed);

  void send(Packet packet, int step);
  std::vector<Delivery> advance(int step);

  int bound() const { return bound_; }
  int streak() const { return streak_; }
  int last_accepted_ts() const { return last_accepted_; }
  void set_event_log(std::vector<ChannelEvent>* log) { log_ = log; }

 private:
  struct InFlight {
    Packet packet;
    int deliver_step;
  };

  void log(int step, const char* event);

  ChannelConfig config_;
  double step_len_;
  int sender_;
  int receiver_;
  int bound_;
  rng::Stream stream_;
  std::vector<Packet> outbox_;       // sent this step, not yet scheduled
  std::vector<InFlight> in_flight_;
  std::optional<Packet> last_sent_;  // candidate for forced delivery
  int last_accepted_ = -1;
  int streak_ = 0;
  std::vector<ChannelEvent>* log_ = nullptr;
};

}  // namespace platoon
