#pragma once

// Multi-process KLJN over TCP. Alice, Bob, the wire emulator ("channel") and
// an optional Eve run as separate endpoints in lockstep: per tick each party
// sends one block of source samples, the channel solves the loop and returns
// the end measurements. Alice and Bob publish those over an authenticated
// comparison link and run the same alarm monitor as the in-process session.
//
// Wire format (little-endian):
//   "KLJN" | ver u8 | role u8 | session_id u64 | bit_index u32 |
//   block_index u16 | count u16 | count x f64 | crc32 u32     (SampleFrame)
// A CompareFrame has the same header and payload, followed by a 32-byte
// HMAC-SHA256 tag instead of the CRC.

#include "kljn/protocol.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kljn::net {

enum class Role : std::uint8_t { alice = 0, bob = 1, channel = 2, eve = 3 };
std::string_view to_string(Role r);

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 22;
inline constexpr std::size_t kMaxCount = 1024;
inline constexpr std::size_t kTagSize = 32;
/// Source samples per tick; replies carry (u_end, i_end) pairs, 2x as many values.
inline constexpr std::size_t kBlockSamples = 512;

/// block_index values reserved for control frames.
namespace control {
inline constexpr std::uint16_t nack = 0xFFFF;   ///< payload: none; resend the last data frame
inline constexpr std::uint16_t abort = 0xFFFE;  ///< session aborted by the sender
inline constexpr std::uint16_t hello = 0xFFFD;  ///< payload: samples_per_bit, sample_rate_hz, n_bits
inline constexpr std::uint16_t term = 0xFFFC;   ///< payload: the sender's resistance for this bit
inline constexpr std::uint16_t bye = 0xFFFB;    ///< orderly end of session
inline constexpr std::uint16_t sift = 0xFFFA;   ///< payload: 1 if the sender keeps the bit
inline constexpr std::uint16_t first = 0xFFFA;
}  // namespace control

struct Frame {
  Role role = Role::alice;
  std::uint64_t session_id = 0;
  std::uint32_t bit_index = 0;
  std::uint16_t block_index = 0;
  std::vector<double> payload;

  bool is_control() const { return block_index >= control::first; }
};

struct NetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TimeoutError : NetError {
  using NetError::NetError;
};
struct FrameError : NetError {
  using NetError::NetError;
};
struct CrcError : FrameError {
  using FrameError::FrameError;
};
struct AuthError : NetError {
  using NetError::NetError;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::array<std::uint8_t, kTagSize> hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg);

std::vector<std::uint8_t> encode_header(const Frame& f);
/// Parses the fixed header; returns the frame (empty payload) and count.
std::pair<Frame, std::size_t> decode_header(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_sample_frame(const Frame& f);
/// Throws CrcError on checksum mismatch, FrameError on malformed input.
Frame decode_sample_frame(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_compare_frame(const Frame& f, std::span<const std::uint8_t> key);
/// Throws AuthError when the tag does not verify under `key`.
Frame decode_compare_frame(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> key);

// ---------------------------------------------------------------------------
// Sockets.

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; throws std::invalid_argument.
  static Endpoint parse(const std::string& s);
  std::string str() const;
};

/// Connected TCP stream (RAII).
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd);
  ~Socket();
  Socket(Socket&& o) noexcept;
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int native_handle() const { return fd_; }
  void send_all(std::span<const std::uint8_t> bytes);
  /// Blocks until bytes.size() bytes arrived; TimeoutError after timeout_s.
  void recv_exact(std::span<std::uint8_t> bytes, double timeout_s);
  void close();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  explicit Listener(const Endpoint& at);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  /// Actual bound port (useful when binding port 0).
  std::uint16_t port() const { return port_; }
  Socket accept(double timeout_s);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Connects, retrying until timeout_s while the peer is not yet listening.
Socket connect_to(const Endpoint& to, double timeout_s);

// ---------------------------------------------------------------------------
// Framed links.

struct LinkStats {
  long frames_sent = 0;
  long frames_received = 0;
  long crc_failures = 0;
  long retransmits = 0;
  long corrupted = 0;  ///< frames deliberately damaged by fault injection
};

/// SampleFrame stream with CRC checking and NACK-driven retransmission of
/// the last data frame. Fault injection flips payload bytes after the CRC
/// is computed; control frames are never damaged.
class FrameLink {
 public:
  FrameLink(Socket sock, Role self, std::uint64_t session_id, double timeout_s, double corrupt_rate = 0.0,
            std::uint64_t corrupt_seed = 0);

  void send(Frame f);
  void send_control(std::uint16_t code, std::uint32_t bit_index, std::vector<double> payload = {});
  /// Next intact frame; NACKs and damaged frames are handled internally.
  Frame recv();
  /// Reads exactly one frame. Returns nothing if it was a NACK (answered by
  /// a retransmission) or arrived damaged (answered by a NACK).
  std::optional<Frame> recv_step();
  int native_handle() const { return sock_.native_handle(); }
  double timeout() const { return timeout_; }
  /// Best-effort ABORT; never throws.
  void abort(std::uint32_t bit_index) noexcept;
  const LinkStats& stats() const { return stats_; }
  void set_corrupt_rate(double rate);

 private:
  void transmit(const Frame& f, bool may_corrupt);

  Socket sock_;
  Role self_;
  std::uint64_t session_;
  double timeout_;
  double corrupt_rate_;
  Xoshiro256 rng_;
  std::optional<Frame> last_data_;
  int nacks_ = 0;
  LinkStats stats_;
};

/// CompareFrame stream authenticated with a pre-shared key.
class CompareLink {
 public:
  CompareLink(Socket sock, Role self, std::uint64_t session_id, std::vector<std::uint8_t> key, double timeout_s);

  void send(Frame f);
  /// Throws AuthError on a bad tag.
  Frame recv();
  void abort(std::uint32_t bit_index) noexcept;

 private:
  Socket sock_;
  Role self_;
  std::uint64_t session_;
  std::vector<std::uint8_t> key_;
  double timeout_;
};

// ---------------------------------------------------------------------------
// Processes.

enum class EveMode { none, tap, inject };
std::string_view to_string(EveMode m);
EveMode parse_eve_mode(const std::string& s);

struct ChannelOptions {
  Endpoint listen;
  SessionConfig cfg;       ///< wire, noise timing and n_bits must match the parties
  std::uint64_t session_id = 1;
  double timeout_s = 5.0;
  double corrupt_rate = 0.0;
  std::uint64_t corrupt_seed = 0;
  EveMode eve = EveMode::none;  ///< whether an Eve endpoint is expected to attach
  /// Eve substitutes herself for the wire: cut, terminate each side with her
  /// own resistor and generator (needs eve_seed).
  bool splitter = false;
  std::uint64_t eve_seed = 0;
  std::function<void(std::uint16_t)> on_listening;
};

struct ChannelReport {
  int bits_completed = 0;
  bool aborted = false;
  std::string reason;
  LinkStats alice, bob;
};

ChannelReport run_channel(const ChannelOptions& opts);

struct PartyOptions {
  Role role = Role::alice;
  Endpoint channel;
  /// Alice listens here, Bob connects here.
  Endpoint compare;
  SessionConfig cfg;
  std::uint64_t seed = 0;  ///< the party's own seed (SessionSeeds::alice / bob)
  std::uint64_t session_id = 1;
  std::vector<std::uint8_t> auth_key;
  double timeout_s = 5.0;
  double corrupt_rate = 0.0;
  std::function<void(std::uint16_t)> on_compare_listening;
};

struct PartyOutcome {
  /// Own choices and own key only; the peer's fields stay empty.
  SessionResult result;
  std::string abort_reason;
  LinkStats channel;
};

PartyOutcome run_party(const PartyOptions& opts);

struct EveOptions {
  Endpoint channel;
  EveMode mode = EveMode::tap;
  SessionConfig cfg;        ///< cfg.injection sets the injected waveform
  std::uint64_t seed = 0;   ///< SessionSeeds::eve
  std::uint64_t session_id = 1;
  double timeout_s = 5.0;
};

struct EveReport {
  int bits_observed = 0;
  bool aborted = false;
  /// Per bit: cross-correlation statistic at the midpoint and the guess
  /// (Bob's key bit under that guess).
  std::vector<double> statistic;
  Bits guesses;
};

EveReport run_eve(const EveOptions& opts);

}  // namespace kljn::net
