#include "kljn/netwire.hpp"

#include "kljn/attacks.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <zlib.h>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

namespace kljn::net {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::alice: return "alice";
    case Role::bob: return "bob";
    case Role::channel: return "channel";
    case Role::eve: return "eve";
  }
  return "?";
}

std::string_view to_string(EveMode m) {
  switch (m) {
    case EveMode::none: return "none";
    case EveMode::tap: return "tap";
    case EveMode::inject: return "inject";
  }
  return "?";
}

EveMode parse_eve_mode(const std::string& s) {
  for (auto m : {EveMode::none, EveMode::tap, EveMode::inject})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown eve mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Encoding.

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[at + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> encode_body(const Frame& f) {
  if (f.payload.size() > kMaxCount) throw FrameError("frame payload exceeds 1024 samples");
  std::vector<std::uint8_t> out = encode_header(f);
  out.reserve(kHeaderSize + 8 * f.payload.size() + kTagSize);
  for (double v : f.payload) put_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::vector<double> decode_payload(std::span<const std::uint8_t> bytes, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, kHeaderSize + 8 * i));
  return out;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::array<std::uint8_t, kTagSize> hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
  std::array<std::uint8_t, kTagSize> tag{};
  unsigned len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), tag.data(), &len) ||
      len != kTagSize)
    throw NetError("HMAC-SHA256 failed");
  return tag;
}

std::vector<std::uint8_t> encode_header(const Frame& f) {
  std::vector<std::uint8_t> out{'K', 'L', 'J', 'N', kVersion, static_cast<std::uint8_t>(f.role)};
  put_le(out, f.session_id);
  put_le(out, f.bit_index);
  put_le(out, f.block_index);
  put_le(out, static_cast<std::uint16_t>(f.payload.size()));
  return out;
}

std::pair<Frame, std::size_t> decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw FrameError("truncated frame header");
  if (std::memcmp(bytes.data(), "KLJN", 4) != 0) throw FrameError("bad frame magic");
  if (bytes[4] != kVersion) throw FrameError("unsupported frame version " + std::to_string(bytes[4]));
  if (bytes[5] > static_cast<std::uint8_t>(Role::eve)) throw FrameError("bad frame role");
  Frame f;
  f.role = static_cast<Role>(bytes[5]);
  f.session_id = get_le<std::uint64_t>(bytes, 6);
  f.bit_index = get_le<std::uint32_t>(bytes, 14);
  f.block_index = get_le<std::uint16_t>(bytes, 18);
  const std::size_t count = get_le<std::uint16_t>(bytes, 20);
  if (count > kMaxCount) throw FrameError("frame count exceeds 1024");
  return {f, count};
}

std::vector<std::uint8_t> encode_sample_frame(const Frame& f) {
  std::vector<std::uint8_t> out = encode_body(f);
  put_le(out, crc32(out));
  return out;
}

Frame decode_sample_frame(std::span<const std::uint8_t> bytes) {
  auto [f, count] = decode_header(bytes);
  const std::size_t body = kHeaderSize + 8 * count;
  if (bytes.size() != body + 4) throw FrameError("sample frame length does not match count");
  if (crc32(bytes.first(body)) != get_le<std::uint32_t>(bytes, body)) throw CrcError("sample frame CRC mismatch");
  f.payload = decode_payload(bytes, count);
  return f;
}

std::vector<std::uint8_t> encode_compare_frame(const Frame& f, std::span<const std::uint8_t> key) {
  std::vector<std::uint8_t> out = encode_body(f);
  const auto tag = hmac_sha256(key, out);
  out.insert(out.end(), tag.begin(), tag.end());
  return out;
}

Frame decode_compare_frame(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> key) {
  auto [f, count] = decode_header(bytes);
  const std::size_t body = kHeaderSize + 8 * count;
  if (bytes.size() != body + kTagSize) throw FrameError("compare frame length does not match count");
  const auto tag = hmac_sha256(key, bytes.first(body));
  if (CRYPTO_memcmp(tag.data(), bytes.data() + body, kTagSize) != 0)
    throw AuthError("compare frame authentication failed");
  f.payload = decode_payload(bytes, count);
  return f;
}

// ---------------------------------------------------------------------------
// Sockets.

Endpoint Endpoint::parse(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
    throw std::invalid_argument("endpoint must be host:port, got '" + s + "'");
  Endpoint e;
  e.host = s.substr(0, colon);
  const std::string port = s.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) throw std::invalid_argument("bad port in endpoint '" + s + "'");
  e.port = static_cast<std::uint16_t>(p);
  return e;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

namespace {

sockaddr_in resolve(const Endpoint& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(e.host.c_str(), nullptr, &hints, &res); rc != 0 || !res)
    throw NetError("cannot resolve " + e.host + ": " + ::gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(e.port);
  return addr;
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

int wait_readable(int fd, double timeout_s) {
  pollfd p{fd, POLLIN, 0};
  const int ms = static_cast<int>(std::ceil(std::max(0.0, timeout_s) * 1000.0));
  int rc;
  do {
    rc = ::poll(&p, 1, ms);
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) throw NetError(errno_text("poll"));
  return rc;
}

}  // namespace

Socket::Socket(int fd) : fd_(fd) {}
Socket::~Socket() { close(); }
Socket::Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = std::exchange(o.fd_, -1);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  if (fd_ < 0) throw NetError("send on closed socket");
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

void Socket::recv_exact(std::span<std::uint8_t> bytes, double timeout_s) {
  if (fd_ < 0) throw NetError("recv on closed socket");
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration<double>(timeout_s);
  std::size_t got = 0;
  while (got < bytes.size()) {
    const double left = std::chrono::duration<double>(deadline - clock::now()).count();
    if (left <= 0.0 || wait_readable(fd_, left) == 0) throw TimeoutError("timed out waiting for peer");
    const ssize_t n = ::recv(fd_, bytes.data() + got, bytes.size() - got, 0);
    if (n == 0) throw NetError("peer closed the connection");
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetError(errno_text("recv"));
    }
    got += static_cast<std::size_t>(n);
  }
}

Listener::Listener(const Endpoint& at) {
  const sockaddr_in addr = resolve(at);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw NetError(errno_text("socket"));
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string msg = errno_text(("bind " + at.str()).c_str());
    ::close(fd_);
    throw NetError(msg);
  }
  if (::listen(fd_, 8) < 0) {
    ::close(fd_);
    throw NetError(errno_text("listen"));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

Socket Listener::accept(double timeout_s) {
  if (wait_readable(fd_, timeout_s) == 0) throw TimeoutError("timed out waiting for a connection");
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw NetError(errno_text("accept"));
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

Socket connect_to(const Endpoint& to, double timeout_s) {
  const sockaddr_in addr = resolve(to);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    const int err = errno;
    ::close(fd);
    if (err != ECONNREFUSED && err != EINTR) throw NetError("connect " + to.str() + ": " + std::strerror(err));
    if (std::chrono::steady_clock::now() >= deadline) throw TimeoutError("timed out connecting to " + to.str());
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

// ---------------------------------------------------------------------------
// Links.

namespace {

std::vector<std::uint8_t> read_frame_bytes(Socket& sock, double timeout_s, std::size_t trailer) {
  std::vector<std::uint8_t> buf(kHeaderSize);
  sock.recv_exact(buf, timeout_s);
  const std::size_t count = decode_header(buf).second;
  buf.resize(kHeaderSize + 8 * count + trailer);
  sock.recv_exact(std::span(buf).subspan(kHeaderSize), timeout_s);
  return buf;
}

constexpr int kMaxRetransmits = 64;

}  // namespace

FrameLink::FrameLink(Socket sock, Role self, std::uint64_t session_id, double timeout_s, double corrupt_rate,
                     std::uint64_t corrupt_seed)
    : sock_(std::move(sock)),
      self_(self),
      session_(session_id),
      timeout_(timeout_s),
      corrupt_rate_(corrupt_rate),
      rng_(make_stream(derive_seed({corrupt_seed, static_cast<std::uint64_t>(self)}), Stream::transport)) {
  set_corrupt_rate(corrupt_rate);
}

void FrameLink::set_corrupt_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("corrupt rate must be in [0, 1)");
  corrupt_rate_ = rate;
}

void FrameLink::transmit(const Frame& f, bool may_corrupt) {
  std::vector<std::uint8_t> bytes = encode_sample_frame(f);
  if (may_corrupt && corrupt_rate_ > 0.0 && !f.payload.empty() && rng_.uniform() < corrupt_rate_) {
    const std::size_t at = kHeaderSize + rng_() % (8 * f.payload.size());
    bytes[at] ^= static_cast<std::uint8_t>(1u << (rng_() % 8));
    ++stats_.corrupted;
  }
  sock_.send_all(bytes);
  ++stats_.frames_sent;
}

void FrameLink::send(Frame f) {
  f.role = self_;
  f.session_id = session_;
  if (f.is_control()) {
    transmit(f, false);
    return;
  }
  transmit(f, true);
  last_data_ = std::move(f);
}

void FrameLink::send_control(std::uint16_t code, std::uint32_t bit_index, std::vector<double> payload) {
  Frame f;
  f.bit_index = bit_index;
  f.block_index = code;
  f.payload = std::move(payload);
  send(std::move(f));
}

Frame FrameLink::recv() {
  while (true)
    if (auto f = recv_step()) return std::move(*f);
}

std::optional<Frame> FrameLink::recv_step() {
  const std::vector<std::uint8_t> bytes = read_frame_bytes(sock_, timeout_, 4);
  Frame f;
  try {
    f = decode_sample_frame(bytes);
  } catch (const CrcError&) {
    ++stats_.crc_failures;
    send_control(control::nack, decode_header(bytes).first.bit_index);
    return std::nullopt;
  }
  if (f.session_id != session_) throw FrameError("frame from a different session");
  if (f.block_index == control::nack) {
    if (!last_data_) throw FrameError("NACK without a frame to resend");
    if (++nacks_ > kMaxRetransmits) throw NetError("too many retransmissions");
    ++stats_.retransmits;
    transmit(*last_data_, true);
    return std::nullopt;
  }
  nacks_ = 0;
  ++stats_.frames_received;
  return f;
}

void FrameLink::abort(std::uint32_t bit_index) noexcept {
  try {
    send_control(control::abort, bit_index);
  } catch (...) {
  }
}

CompareLink::CompareLink(Socket sock, Role self, std::uint64_t session_id, std::vector<std::uint8_t> key,
                         double timeout_s)
    : sock_(std::move(sock)), self_(self), session_(session_id), key_(std::move(key)), timeout_(timeout_s) {}

void CompareLink::send(Frame f) {
  f.role = self_;
  f.session_id = session_;
  sock_.send_all(encode_compare_frame(f, key_));
}

Frame CompareLink::recv() {
  const std::vector<std::uint8_t> bytes = read_frame_bytes(sock_, timeout_, kTagSize);
  Frame f = decode_compare_frame(bytes, key_);
  if (f.session_id != session_) throw FrameError("compare frame from a different session");
  return f;
}

void CompareLink::abort(std::uint32_t bit_index) noexcept {
  try {
    Frame f;
    f.bit_index = bit_index;
    f.block_index = control::abort;
    send(std::move(f));
  } catch (...) {
  }
}

// ---------------------------------------------------------------------------
// Session plumbing shared by the processes.

namespace {

struct PeerAbort : NetError {
  using NetError::NetError;
};

std::vector<double> hello_payload(const SessionConfig& cfg) {
  return {static_cast<double>(cfg.noise.samples_per_bit), cfg.noise.sample_rate_hz, static_cast<double>(cfg.n_bits)};
}

void check_hello(const Frame& f, const SessionConfig& cfg, std::string_view from) {
  if (f.block_index != control::hello) throw FrameError("expected HELLO from " + std::string(from));
  if (f.payload != hello_payload(cfg))
    throw FrameError("session parameters of " + std::string(from) + " do not match (M, fs, n_bits)");
}

std::size_t n_blocks(const SessionConfig& cfg) {
  return (static_cast<std::size_t>(cfg.noise.samples_per_bit) + kBlockSamples - 1) / kBlockSamples;
}

Eigen::Index block_len(const SessionConfig& cfg, std::size_t b) {
  const Eigen::Index m = cfg.noise.samples_per_bit;
  return std::min<Eigen::Index>(static_cast<Eigen::Index>(kBlockSamples), m - static_cast<Eigen::Index>(b * kBlockSamples));
}

void check_data(const Frame& f, std::uint32_t bit, std::uint16_t block, std::size_t count, std::string_view from) {
  if (f.block_index == control::abort) throw PeerAbort(std::string(from) + " aborted the session");
  if (f.block_index == control::bye) throw PeerAbort(std::string(from) + " ended the session");
  if (f.is_control() || f.bit_index != bit || f.block_index != block || f.payload.size() != count)
    throw FrameError("out-of-sequence frame from " + std::string(from));
}

void check_control(const Frame& f, std::uint16_t code, std::uint32_t bit, std::string_view from) {
  if (f.block_index == control::abort && code != control::abort)
    throw PeerAbort(std::string(from) + " aborted the session");
  if (f.block_index != code || f.bit_index != bit) throw FrameError("unexpected control frame from " + std::string(from));
}

/// Receives a data frame for (bit, block) with `count` values, or raises
/// PeerAbort when the peer gave up.
template <typename Link>
Frame expect_data(Link& link, std::uint32_t bit, std::uint16_t block, std::size_t count, std::string_view from) {
  Frame f = link.recv();
  check_data(f, bit, block, count, from);
  return f;
}

template <typename Link>
Frame expect_control(Link& link, std::uint16_t code, std::uint32_t bit, std::string_view from) {
  Frame f = link.recv();
  check_control(f, code, bit, from);
  return f;
}

/// Next intact frame from each of Alice and Bob. Both links are serviced
/// together: a NACK from one side must be answered even while the other
/// side's frame is still outstanding, since the parties wait on each other.
std::pair<Frame, Frame> recv_both(FrameLink& alice, FrameLink& bob) {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration<double>(std::max(alice.timeout(), bob.timeout()));
  std::optional<Frame> a, b;
  while (!a || !b) {
    pollfd fds[2];
    FrameLink* links[2];
    nfds_t n = 0;
    if (!a) {
      fds[n] = {alice.native_handle(), POLLIN, 0};
      links[n++] = &alice;
    }
    if (!b) {
      fds[n] = {bob.native_handle(), POLLIN, 0};
      links[n++] = &bob;
    }
    const double left = std::chrono::duration<double>(deadline - clock::now()).count();
    if (left <= 0.0) throw TimeoutError("timed out waiting for peer");
    const int ready = ::poll(fds, n, static_cast<int>(std::ceil(left * 1000.0)));
    if (ready < 0 && errno != EINTR) throw NetError(errno_text("poll"));
    for (nfds_t k = 0; k < n && ready > 0; ++k) {
      if (fds[k].revents == 0) continue;
      auto f = links[k]->recv_step();
      if (!f) continue;
      (links[k] == &alice ? a : b) = std::move(f);
    }
  }
  return {std::move(*a), std::move(*b)};
}

std::pair<Frame, Frame> expect_data_both(FrameLink& alice, FrameLink& bob, std::uint32_t bit, std::uint16_t block,
                                         std::size_t count) {
  auto fr = recv_both(alice, bob);
  check_data(fr.first, bit, block, count, "alice");
  check_data(fr.second, bit, block, count, "bob");
  return fr;
}

std::pair<Frame, Frame> expect_control_both(FrameLink& alice, FrameLink& bob, std::uint16_t code, std::uint32_t bit) {
  auto fr = recv_both(alice, bob);
  check_control(fr.first, code, bit, "alice");
  check_control(fr.second, code, bit, "bob");
  return fr;
}

std::vector<double> interleave(const Signal& u, const Signal& i) {
  std::vector<double> out(static_cast<std::size_t>(2 * u.size()));
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    out[static_cast<std::size_t>(2 * k)] = u[k];
    out[static_cast<std::size_t>(2 * k + 1)] = i[k];
  }
  return out;
}

void deinterleave(const std::vector<double>& in, Signal& u, Signal& i) {
  const Eigen::Index n = static_cast<Eigen::Index>(in.size() / 2);
  u.resize(n);
  i.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    u[k] = in[static_cast<std::size_t>(2 * k)];
    i[k] = in[static_cast<std::size_t>(2 * k + 1)];
  }
}

Signal to_signal(const std::vector<double>& v) {
  return Eigen::Map<const Signal>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// One side of the loop for the current bit, solved block by block. Gives
/// the same samples as propagate_bit on the whole period.
class BlockLoop {
 public:
  BlockLoop(const SessionConfig& cfg, double r_a, double r_b, bool integrate)
      : r_a_(r_a), r_b_(r_b), dt_(cfg.noise.dt()) {
    if (integrate) loop_.emplace(r_a, r_b, cfg.wire, dt_);
  }

  TraceEnds step(const Signal& u_a, const Signal& u_b, const Signal* injection) {
    if (!loop_) return TraceEnds::from_ideal(solve_ideal(u_a, u_b, r_a_, r_b_, dt_));
    TraceEnds out;
    out.dt = dt_;
    out.resize(u_a.size());
    for (Eigen::Index k = 0; k < u_a.size(); ++k) {
      const auto s = loop_->step(u_a[k], u_b[k], injection ? (*injection)[k] : 0.0);
      out.u_end_a[k] = s.u_end_a;
      out.u_end_b[k] = s.u_end_b;
      out.i_a[k] = s.i_a;
      out.i_b[k] = s.i_b;
      out.u_mid[k] = s.u_mid;
    }
    return out;
  }

 private:
  double r_a_, r_b_, dt_;
  std::optional<LoopIntegrator<double>> loop_;
};

Frame data_frame(std::uint32_t bit, std::size_t block, std::vector<double> payload) {
  Frame f;
  f.bit_index = bit;
  f.block_index = static_cast<std::uint16_t>(block);
  f.payload = std::move(payload);
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// Channel.

ChannelReport run_channel(const ChannelOptions& opts) {
  const SessionConfig& cfg = opts.cfg;
  cfg.validate();
  if (opts.splitter && opts.eve != EveMode::none)
    throw std::invalid_argument("run_channel: splitter mode does not take an Eve endpoint");

  Listener listener(opts.listen);
  if (opts.on_listening) opts.on_listening(listener.port());

  ChannelReport report;
  std::optional<FrameLink> alice, bob, eve;
  std::uint32_t bit = 0;
  auto abort_all = [&](std::string reason) {
    report.aborted = true;
    report.reason = std::move(reason);
    for (auto* l : {&alice, &bob, &eve})
      if (*l) (*l)->abort(bit);
  };
  auto finish = [&] {
    if (alice) report.alice = alice->stats();
    if (bob) report.bob = bob->stats();
    return report;
  };

  try {
    const bool want_eve = opts.eve != EveMode::none;
    while (!alice || !bob || (want_eve && !eve)) {
      FrameLink link(listener.accept(opts.timeout_s), Role::channel, opts.session_id, opts.timeout_s, 0.0,
                     opts.corrupt_seed);
      const Frame hello = link.recv();
      const std::string_view who = to_string(hello.role);
      check_hello(hello, cfg, who);
      auto& slot = hello.role == Role::alice ? alice : hello.role == Role::bob ? bob : eve;
      if (hello.role == Role::channel || (hello.role == Role::eve && !want_eve) || slot)
        throw FrameError("unexpected " + std::string(who) + " connection");
      // Fault injection only on the party links: Eve's tap never answers NACKs.
      if (hello.role != Role::eve) link.set_corrupt_rate(opts.corrupt_rate);
      slot.emplace(std::move(link));
    }
    if (eve) eve->send_control(control::hello, 0, hello_payload(cfg));

    const bool inject = opts.eve == EveMode::inject;
    const bool integrate = !cfg.wire.ideal() || inject;
    Xoshiro256 eve_rng = make_stream(opts.eve_seed, Stream::eve);
    std::optional<JohnsonNoiseSource> eve_noise_a, eve_noise_b;
    if (opts.splitter) {
      eve_noise_a.emplace(cfg.noise, make_stream(opts.eve_seed, Stream::eve_noise_a));
      eve_noise_b.emplace(cfg.noise, make_stream(opts.eve_seed, Stream::eve_noise_b));
    }

    for (; bit < static_cast<std::uint32_t>(cfg.n_bits); ++bit) {
      const auto [term_a, term_b] = expect_control_both(*alice, *bob, control::term, bit);
      const double r_a = term_a.payload.at(0);
      const double r_b = term_b.payload.at(0);

      std::optional<BlockLoop> side_a, side_b;
      Signal u_ea, u_eb;
      if (opts.splitter) {
        const double r_ea = cfg.resistors.pick(eve_rng.bit());
        const double r_eb = cfg.resistors.pick(eve_rng.bit());
        u_ea = eve_noise_a->block(r_ea);
        u_eb = eve_noise_b->block(r_eb);
        side_a.emplace(cfg, r_a, r_ea, integrate);
        side_b.emplace(cfg, r_eb, r_b, integrate);
      } else {
        side_a.emplace(cfg, r_a, r_b, integrate);
      }

      for (std::size_t b = 0; b < n_blocks(cfg); ++b) {
        const Eigen::Index len = block_len(cfg, b);
        const auto block = static_cast<std::uint16_t>(b);
        const auto [data_a, data_b] = expect_data_both(*alice, *bob, bit, block, static_cast<std::size_t>(len));
        const Signal u_a = to_signal(data_a.payload);
        const Signal u_b = to_signal(data_b.payload);
        Signal injection;
        if (inject) injection = to_signal(expect_data(*eve, bit, block, static_cast<std::size_t>(len), "eve").payload);

        TraceEnds ends;
        if (opts.splitter) {
          const Eigen::Index at = static_cast<Eigen::Index>(b * kBlockSamples);
          const TraceEnds a = side_a->step(u_a, u_ea.segment(at, len), nullptr);
          const TraceEnds c = side_b->step(u_eb.segment(at, len), u_b, nullptr);
          ends = TraceEnds{a.u_end_a, c.u_end_b, a.i_a, c.i_b, a.u_mid, a.dt};
        } else {
          ends = side_a->step(u_a, u_b, inject ? &injection : nullptr);
        }
        alice->send(data_frame(bit, b, interleave(ends.u_end_a, ends.i_a)));
        bob->send(data_frame(bit, b, interleave(ends.u_end_b, ends.i_b)));
        if (eve) eve->send(data_frame(bit, b, interleave(ends.u_mid, Signal(0.5 * (ends.i_a - ends.i_b)))));
      }
      report.bits_completed = static_cast<int>(bit) + 1;
    }
    expect_control_both(*alice, *bob, control::bye, bit);
    if (eve) eve->send_control(control::bye, bit);
  } catch (const NetError& e) {
    abort_all(e.what());
  } catch (const std::out_of_range&) {
    abort_all("malformed TERM frame");
  }
  return finish();
}

// ---------------------------------------------------------------------------
// Parties.

PartyOutcome run_party(const PartyOptions& opts) {
  const SessionConfig& cfg = opts.cfg;
  cfg.validate();
  if (opts.role != Role::alice && opts.role != Role::bob) throw std::invalid_argument("run_party: role must be alice or bob");
  if (cfg.oracle_levels) throw std::invalid_argument("run_party: oracle_levels is an in-process diagnostic only");
  if (cfg.mitm != MitmMode::none || cfg.injection.active())
    throw std::invalid_argument("run_party: attacks are separate processes, not party settings");
  if (opts.auth_key.empty()) throw std::invalid_argument("run_party: empty authentication key");

  const bool is_alice = opts.role == Role::alice;
  const std::string_view peer_name = is_alice ? "bob" : "alice";

  std::optional<Listener> compare_listener;
  if (is_alice) {
    compare_listener.emplace(opts.compare);
    if (opts.on_compare_listening) opts.on_compare_listening(compare_listener->port());
  }

  PartyOutcome out;
  SessionResult& res = out.result;
  std::optional<FrameLink> link;
  std::optional<CompareLink> cmp;
  std::uint32_t bit = 0;
  auto fail = [&](std::string reason) {
    res.aborted = true;
    out.abort_reason = std::move(reason);
    if (link) link->abort(bit);
    if (cmp) cmp->abort(bit);
  };

  try {
    link.emplace(connect_to(opts.channel, opts.timeout_s), opts.role, opts.session_id, opts.timeout_s,
                 opts.corrupt_rate, opts.seed);
    link->send_control(control::hello, 0, hello_payload(cfg));
    Socket cs = is_alice ? compare_listener->accept(opts.timeout_s) : connect_to(opts.compare, opts.timeout_s);
    cmp.emplace(std::move(cs), opts.role, opts.session_id, opts.auth_key, opts.timeout_s);
    {
      Frame hello;
      hello.block_index = control::hello;
      hello.payload = hello_payload(cfg);
      cmp->send(hello);
      check_hello(cmp->recv(), cfg, peer_name);
    }

    Xoshiro256 choice = make_stream(opts.seed, is_alice ? Stream::alice_choice : Stream::bob_choice);
    JohnsonNoiseSource noise(cfg.noise, make_stream(opts.seed, is_alice ? Stream::alice_noise : Stream::bob_noise));
    const ExpectedLevels levels = expected_levels(cfg.resistors, cfg.noise);
    const Quantizer quantizer(cfg, levels);
    const Eigen::Index warmup = cfg.warmup_samples();
    const Eigen::Index m = cfg.noise.samples_per_bit;
    AlarmMonitor monitor(cfg.wire, cfg.noise.dt(), cfg.alarm_tol_rel, alarm_scale(levels));
    Bits& choices = is_alice ? res.alice_choices : res.bob_choices;
    Bits& key = is_alice ? res.shared_key_alice : res.shared_key_bob;

    for (; bit < static_cast<std::uint32_t>(cfg.n_bits); ++bit) {
      const bool high = choice.bit();
      const double r = is_alice ? cfg.alice_resistance(high) : cfg.bob_resistance(high);
      const Signal u = noise.block(r, is_alice ? cfg.alice_temp_scale : cfg.bob_temp_scale);
      link->send_control(control::term, bit, {r});

      Signal own_u(m), own_i(m);
      monitor.reset();
      std::optional<AlarmEvent> alarm;
      for (std::size_t b = 0; b < n_blocks(cfg); ++b) {
        const Eigen::Index len = block_len(cfg, b);
        const Eigen::Index at = static_cast<Eigen::Index>(b * kBlockSamples);
        const auto block = static_cast<std::uint16_t>(b);
        const Signal seg = u.segment(at, len);
        link->send(data_frame(bit, b, std::vector<double>(seg.data(), seg.data() + len)));

        Signal bu, bi;
        deinterleave(expect_data(*link, bit, block, static_cast<std::size_t>(2 * len), "channel").payload, bu, bi);
        quantizer.apply_voltage(bu);
        quantizer.apply_current(bi);
        own_u.segment(at, len) = bu;
        own_i.segment(at, len) = bi;

        cmp->send(data_frame(bit, b, interleave(bu, bi)));
        Signal pu, pi;
        deinterleave(expect_data(*cmp, bit, block, static_cast<std::size_t>(2 * len), peer_name).payload, pu, pi);
        if (!alarm) {
          alarm = is_alice ? monitor.feed(bu, bi, pu, pi, at) : monitor.feed(pu, pi, bu, bi, at);
          if (alarm) alarm->bit_index = static_cast<int>(bit);
        }
      }

      const PartyDecision d = decide(cfg, levels, own_u, own_i, warmup);
      {
        Frame s;
        s.bit_index = bit;
        s.block_index = control::sift;
        s.payload = {d.keep() ? 1.0 : 0.0, d.erasure ? 1.0 : 0.0};
        cmp->send(s);
      }
      const Frame peer = expect_control(*cmp, control::sift, bit, peer_name);
      if (peer.payload.size() != 2) throw FrameError("malformed SIFT frame");
      if (d.erasure || peer.payload[1] != 0.0) ++res.erasures;
      const bool sifted = !alarm && d.keep() && peer.payload[0] != 0.0;

      choices.push_back(high ? 1 : 0);
      if (alarm) res.alarms.push_back(*alarm);
      if (sifted) {
        res.sifted_indices.push_back(static_cast<int>(bit));
        key.push_back(is_alice ? (high ? 0 : 1) : (high ? 1 : 0));
      }
      res.bits_completed = static_cast<int>(bit) + 1;
      if (alarm && cfg.abort_on_alarm) {
        res.aborted = true;
        out.abort_reason = "alarm at bit " + std::to_string(bit);
        link->abort(bit + 1);
        break;
      }
    }
    if (!res.aborted) link->send_control(control::bye, bit);
  } catch (const AuthError& e) {
    // A forged or altered comparison frame is itself the alarm.
    res.alarms.push_back({static_cast<int>(bit), 0, std::numeric_limits<double>::infinity()});
    fail(e.what());
  } catch (const NetError& e) {
    fail(e.what());
  }

  res.sift_fraction = res.bits_completed == 0 ? 0.0
                                              : static_cast<double>(res.sifted_indices.size()) / res.bits_completed;
  if (link) out.channel = link->stats();
  return out;
}

// ---------------------------------------------------------------------------
// Eve.

EveReport run_eve(const EveOptions& opts) {
  const SessionConfig& cfg = opts.cfg;
  cfg.validate();
  if (opts.mode == EveMode::none) throw std::invalid_argument("run_eve: mode must be tap or inject");
  const bool inject = opts.mode == EveMode::inject;
  if (inject && !cfg.injection.active()) throw std::invalid_argument("run_eve: inject mode needs injection.amplitude_frac > 0");

  EveReport report;
  try {
    FrameLink link(connect_to(opts.channel, opts.timeout_s), Role::eve, opts.session_id, opts.timeout_s);
    link.send_control(control::hello, 0, hello_payload(cfg));
    check_hello(expect_control(link, control::hello, 0, "channel"), cfg, "channel");

    const ExpectedLevels levels = expected_levels(cfg.resistors, cfg.noise);
    Xoshiro256 rng = make_stream(opts.seed, Stream::eve);
    const Eigen::Index m = cfg.noise.samples_per_bit;
    const Eigen::Index warmup = cfg.warmup_samples();

    for (std::uint32_t bit = 0; bit < static_cast<std::uint32_t>(cfg.n_bits); ++bit) {
      Signal injection;
      if (inject) injection = injection_waveform(cfg, levels, rng, static_cast<int>(bit));
      Trace trace{Signal(m), Signal(m), cfg.noise.dt()};
      for (std::size_t b = 0; b < n_blocks(cfg); ++b) {
        const Eigen::Index len = block_len(cfg, b);
        const Eigen::Index at = static_cast<Eigen::Index>(b * kBlockSamples);
        if (inject) {
          const Signal seg = injection.segment(at, len);
          link.send(data_frame(bit, b, std::vector<double>(seg.data(), seg.data() + len)));
        }
        Signal bu, bi;
        deinterleave(expect_data(link, bit, static_cast<std::uint16_t>(b), static_cast<std::size_t>(2 * len), "channel")
                         .payload,
                     bu, bi);
        trace.u_ch.segment(at, len) = bu;
        trace.i_ch.segment(at, len) = bi;
      }
      const Trace tail{trace.u_ch.tail(m - warmup), trace.i_ch.tail(m - warmup), trace.dt};
      const Guess g = eve_cross_correlation(tail);
      report.statistic.push_back(g.statistic);
      report.guesses.push_back(g.key_bit());
      report.bits_observed = static_cast<int>(bit) + 1;
    }
  } catch (const NetError&) {
    report.aborted = true;
  }
  return report;
}

}  // namespace kljn::net
