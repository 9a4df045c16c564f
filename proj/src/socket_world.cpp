// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
//
// Local-socket backend: every rank worker owns a loopback TCP connection to
// each peer. Frames are [length: 8 bytes LE][tag: 8 bytes LE][payload]; the
// sender is identified by the connection. Rank-to-port mapping goes through
// a manifest file ("rank port" lines).
#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sf/detail/world.hpp"

namespace sf::detail {

namespace {

void encode_le64(std::uint64_t v, std::byte* out) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

std::uint64_t decode_le64(const std::byte* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

void write_exact(int fd, const std::byte* data, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    ssize_t n = ::send(fd, data + off, len - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("socket send failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

// Returns false on orderly shutdown before any byte arrived.
bool read_exact(int fd, std::byte* data, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    ssize_t n = ::recv(fd, data + off, len - off, 0);
    if (n == 0) {
      if (off == 0) return false;
      throw Error("socket closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("socket recv failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string default_manifest_path() {
  static std::atomic<std::uint64_t> counter{0};
  auto dir = std::filesystem::temp_directory_path();
  return (dir / ("sf_manifest_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)) + ".txt"))
      .string();
}

class SocketWorld final : public World {
public:
  explicit SocketWorld(const CommConfig& cfg) : World(cfg) {
    const int n = size();
    fds_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), -1);
    send_mu_ = std::vector<std::mutex>(fds_.size());

    std::vector<int> listeners(static_cast<std::size_t>(n), -1);
    std::vector<int> ports(static_cast<std::size_t>(n), 0);
    for (int r = 0; r < n; ++r) {
      int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      SF_REQUIRE(fd >= 0, "socket() failed");
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
      addr.sin_port = 0;
      SF_REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0,
                 "bind() failed");
      SF_REQUIRE(::listen(fd, n) == 0, "listen() failed");
      socklen_t alen = sizeof(addr);
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &alen);
      listeners[static_cast<std::size_t>(r)] = fd;
      ports[static_cast<std::size_t>(r)] = ntohs(addr.sin_port);
    }

    manifest_ = cfg.manifest_path.empty() ? default_manifest_path() : cfg.manifest_path;
    {
      std::ofstream out(manifest_);
      SF_REQUIRE(out.good(), "cannot write manifest file " + manifest_);
      for (int r = 0; r < n; ++r) out << r << ' ' << ports[static_cast<std::size_t>(r)] << '\n';
    }
    // Connect using the manifest, exercising the published interface.
    std::vector<int> mports(static_cast<std::size_t>(n), 0);
    {
      std::ifstream in(manifest_);
      int r = 0, port = 0;
      while (in >> r >> port) mports.at(static_cast<std::size_t>(r)) = port;
    }

    // Full mesh: rank j initiates to every i < j and announces itself.
    for (int j = 1; j < n; ++j) {
      for (int i = 0; i < j; ++i) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        SF_REQUIRE(fd >= 0, "socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(static_cast<std::uint16_t>(mports[static_cast<std::size_t>(i)]));
        SF_REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0,
                   "connect() failed");
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        std::byte hello[8];
        encode_le64(static_cast<std::uint64_t>(j), hello);
        write_exact(fd, hello, 8);
        fd_at(j, i) = fd;
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int c = i + 1; c < n; ++c) {
        int fd = ::accept(listeners[static_cast<std::size_t>(i)], nullptr, nullptr);
        SF_REQUIRE(fd >= 0, "accept() failed");
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        std::byte hello[8];
        SF_REQUIRE(read_exact(fd, hello, 8), "peer closed during handshake");
        const int peer = static_cast<int>(decode_le64(hello));
        SF_REQUIRE(peer > i && peer < n, "bad handshake rank");
        fd_at(i, peer) = fd;
      }
      ::close(listeners[static_cast<std::size_t>(i)]);
    }

    readers_.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) readers_.emplace_back([this, r] { reader_loop(r); });
  }

  ~SocketWorld() override {
    closing_.store(true);
    for (int fd : fds_)
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    for (auto& t : readers_) t.join();
    for (int fd : fds_)
      if (fd >= 0) ::close(fd);
    std::error_code ec;
    std::filesystem::remove(manifest_, ec);
  }

  void transmit(int src, int dest, Tag tag, std::span<const std::byte> payload) override {
    if (src == dest) {
      Message m;
      m.src = src;
      m.tag = tag;
      m.payload.assign(payload.begin(), payload.end());
      deliver(dest, std::move(m));
      return;
    }
    std::vector<std::byte> frame(16 + payload.size());
    encode_le64(payload.size(), frame.data());
    encode_le64(tag, frame.data() + 8);
    if (!payload.empty()) std::memcpy(frame.data() + 16, payload.data(), payload.size());
    std::lock_guard lk(send_mu_[pair_index(src, dest)]);
    write_exact(fd_at(src, dest), frame.data(), frame.size());
  }

private:
  std::size_t pair_index(int a, int b) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(size()) +
           static_cast<std::size_t>(b);
  }
  int& fd_at(int a, int b) { return fds_[pair_index(a, b)]; }

  void reader_loop(int me) {
    const int n = size();
    std::vector<pollfd> pfds;
    std::vector<int> peers;
    for (int p = 0; p < n; ++p) {
      if (p == me) continue;
      pfds.push_back(pollfd{fd_at(me, p), POLLIN, 0});
      peers.push_back(p);
    }
    std::vector<bool> open(peers.size(), true);
    std::size_t open_count = peers.size();
    while (open_count > 0 && !closing_.load()) {
      int ready = ::poll(pfds.data(), pfds.size(), 100);
      if (ready <= 0) continue;
      for (std::size_t k = 0; k < pfds.size(); ++k) {
        if (!open[k] || !(pfds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        try {
          std::byte hdr[16];
          if (!read_exact(pfds[k].fd, hdr, 16)) {
            open[k] = false;
            pfds[k].fd = -1;
            --open_count;
            continue;
          }
          Message m;
          m.src = peers[k];
          m.tag = decode_le64(hdr + 8);
          m.payload.resize(decode_le64(hdr));
          if (!m.payload.empty()) {
            if (!read_exact(pfds[k].fd, m.payload.data(), m.payload.size()))
              throw Error("socket closed mid-frame");
          }
          deliver(me, std::move(m));
        } catch (const Error&) {
          // On a live connection this is fatal for the run; unstick everyone.
          if (!closing_.load()) cancel.aborted.store(true);
          open[k] = false;
          pfds[k].fd = -1;
          --open_count;
        }
      }
    }
  }

  std::vector<int> fds_;
  std::vector<std::mutex> send_mu_;
  std::vector<std::thread> readers_;
  std::atomic<bool> closing_{false};
  std::string manifest_;
};

} // namespace

std::unique_ptr<World> make_socket_world(const CommConfig& cfg) {
  return std::make_unique<SocketWorld>(cfg);
}

} // namespace sf::detail
