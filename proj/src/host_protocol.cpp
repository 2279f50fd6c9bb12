#include "snapper/host_protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "snapper/byte_io.hpp"

namespace snapper::protocol {
namespace {

bool known_opcode(std::uint8_t op) { return op >= 0x01 && op <= 0x06; }

bool connected(ReceiverState s) {
  return s == ReceiverState::ConnectedUnconfigured || s == ReceiverState::ConnectedConfigured;
}

Bytes nak(std::uint8_t opcode, const std::string& reason) {
  return encode_response({Status::Nak, opcode, Bytes(reason.begin(), reason.end())});
}

Bytes ack(std::uint8_t opcode, Bytes payload = {}) { return encode_response({Status::Ack, opcode, std::move(payload)}); }

std::size_t frame_size(std::span<const std::uint8_t> buffer, std::size_t header, std::size_t length_at) {
  if (buffer.size() >= 1 && buffer[0] != kMagic0) throw ProtocolError("bad frame magic");
  if (buffer.size() >= 2 && buffer[1] != kMagic1) throw ProtocolError("bad frame magic");
  if (buffer.size() < header) return 0;
  io::Reader r(buffer.subspan(length_at, 4));
  const auto length = r.get<std::uint32_t>();
  if (length > kMaxPayloadBytes) throw ProtocolError("frame payload too large");
  const std::size_t total = header + length;
  return buffer.size() >= total ? total : 0;
}

Bytes handle_request(SimulatedReceiver& device, const Request& req) {
  const auto op = static_cast<Opcode>(req.opcode);
  io::Reader in(req.payload);
  switch (op) {
    case Opcode::GetStatus: {
      DeviceStatus s;
      s.battery_mv = static_cast<std::uint16_t>(std::clamp(std::lround(device.environment().battery_v * 1000.0), 0L, 65535L));
      s.snapshot_count = static_cast<std::uint32_t>(device.records().size());
      s.firmware_version = device.firmware_version();
      s.state = device.state();
      s.configured = device.config().has_value();
      s.device_clock_ms = device.device_clock_ms();
      if (device.config()) s.config = *device.config();
      s.device_id = device.device_id();
      s.firmware_staged = device.has_staged_firmware();
      return ack(req.opcode, encode_status(s));
    }
    case Opcode::SetConfig: {
      if (device.state() != ReceiverState::ConnectedUnconfigured) return nak(req.opcode, "device already configured");
      DeploymentConfig cfg;
      try {
        cfg = decode_config(req.payload);
        device.configure(cfg);
      } catch (const std::exception& e) {
        return nak(req.opcode, std::string("invalid configuration: ") + e.what());
      }
      return ack(req.opcode);
    }
    case Opcode::GetSnapshots: {
      const auto start = in.get<std::uint32_t>();
      const auto max = std::min(in.get<std::uint32_t>(), kMaxRecordsPerMessage);
      const auto& records = device.records();
      const auto total = static_cast<std::uint32_t>(records.size());
      const std::uint32_t first = std::min(start, total);
      const std::uint32_t n = std::min(max, total - first);
      Bytes out;
      io::Writer w(out);
      w.put(total);
      w.put(n);
      for (std::uint32_t i = 0; i < n; ++i) snpr::append_record(out, records[first + i]);
      return ack(req.opcode, std::move(out));
    }
    case Opcode::FirmwareUpdate: {
      const auto expected = in.get<std::uint32_t>();
      const auto image = in.get_bytes(in.remaining());
      const std::uint32_t crc = crc32(image);
      if (crc != expected) {
        Bytes out;
        io::Writer w(out);
        w.put(crc);
        const std::string msg = "firmware CRC mismatch";
        w.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size()));
        return encode_response({Status::Nak, req.opcode, std::move(out)});
      }
      device.stage_firmware(Bytes(image.begin(), image.end()));
      Bytes out;
      io::Writer(out).put(crc);
      return ack(req.opcode, std::move(out));
    }
    case Opcode::Reboot: {
      if (!device.reboot()) return nak(req.opcode, "no firmware staged");
      Bytes out;
      io::Writer(out).put(device.firmware_version());
      return ack(req.opcode, std::move(out));
    }
    case Opcode::Shutdown: {
      try {
        device.shutdown_command();
      } catch (const RejectedTransition& e) {
        return nak(req.opcode, e.what());
      }
      return ack(req.opcode);
    }
  }
  return nak(req.opcode, "unknown opcode");
}

void write_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Appends received bytes; false on orderly close.
bool read_some(int fd, Bytes& out) {
  std::uint8_t buf[65536];
  while (true) {
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    out.insert(out.end(), buf, buf + n);
    return true;
  }
}

}  // namespace

Bytes encode_request(const Request& r) {
  if (r.payload.size() > kMaxPayloadBytes) throw ProtocolError("frame payload too large");
  Bytes out;
  out.reserve(kRequestHeaderBytes + r.payload.size());
  io::Writer w(out);
  w.put(kMagic0);
  w.put(kMagic1);
  w.put(r.opcode);
  w.put(static_cast<std::uint32_t>(r.payload.size()));
  w.put_bytes(r.payload);
  return out;
}

Bytes encode_response(const Response& r) {
  if (r.payload.size() > kMaxPayloadBytes) throw ProtocolError("frame payload too large");
  Bytes out;
  out.reserve(kResponseHeaderBytes + r.payload.size());
  io::Writer w(out);
  w.put(kMagic0);
  w.put(kMagic1);
  w.put(static_cast<std::uint8_t>(r.status));
  w.put(r.opcode);
  w.put(static_cast<std::uint32_t>(r.payload.size()));
  w.put_bytes(r.payload);
  return out;
}

std::size_t request_frame_size(std::span<const std::uint8_t> buffer) {
  return frame_size(buffer, kRequestHeaderBytes, 3);
}

std::size_t response_frame_size(std::span<const std::uint8_t> buffer) {
  return frame_size(buffer, kResponseHeaderBytes, 4);
}

Request decode_request(std::span<const std::uint8_t> frame) {
  const std::size_t size = request_frame_size(frame);
  if (size == 0 || size != frame.size()) throw ProtocolError("truncated or oversized request frame");
  Request r;
  r.opcode = frame[2];
  r.payload.assign(frame.begin() + kRequestHeaderBytes, frame.end());
  return r;
}

Response decode_response(std::span<const std::uint8_t> frame) {
  const std::size_t size = response_frame_size(frame);
  if (size == 0 || size != frame.size()) throw ProtocolError("truncated or oversized response frame");
  Response r;
  if (frame[2] != static_cast<std::uint8_t>(Status::Ack) && frame[2] != static_cast<std::uint8_t>(Status::Nak)) {
    throw ProtocolError("bad response status");
  }
  r.status = static_cast<Status>(frame[2]);
  r.opcode = frame[3];
  r.payload.assign(frame.begin() + kResponseHeaderBytes, frame.end());
  return r;
}

Bytes encode_config(const DeploymentConfig& c) {
  Bytes out;
  io::Writer w(out);
  w.put(c.start_ms);
  w.put(c.end_ms);
  w.put(c.interval_s);
  w.put(c.host_time_ms);
  return out;
}

DeploymentConfig decode_config(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  DeploymentConfig c;
  c.start_ms = r.get<std::int64_t>();
  c.end_ms = r.get<std::int64_t>();
  c.interval_s = r.get<std::uint32_t>();
  c.host_time_ms = r.get<std::int64_t>();
  if (r.remaining() != 0) throw ProtocolError("trailing bytes in configuration");
  return c;
}

Bytes encode_status(const DeviceStatus& s) {
  Bytes out;
  io::Writer w(out);
  w.put(s.battery_mv);
  w.put(s.snapshot_count);
  w.put(s.firmware_version);
  w.put(static_cast<std::uint8_t>(s.state));
  w.put(static_cast<std::uint8_t>(s.configured));
  w.put(s.device_clock_ms);
  w.put_bytes(encode_config(s.config));
  w.put(s.device_id);
  w.put(static_cast<std::uint8_t>(s.firmware_staged));
  return out;
}

DeviceStatus decode_status(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  DeviceStatus s;
  s.battery_mv = r.get<std::uint16_t>();
  s.snapshot_count = r.get<std::uint32_t>();
  s.firmware_version = r.get<std::uint32_t>();
  const auto state = r.get<std::uint8_t>();
  if (state >= kAllStates.size()) throw ProtocolError("bad receiver state");
  s.state = static_cast<ReceiverState>(state);
  s.configured = r.get<std::uint8_t>() != 0;
  s.device_clock_ms = r.get<std::int64_t>();
  s.config = decode_config(r.get_bytes(28));
  s.device_id = r.get<std::uint64_t>();
  s.firmware_staged = r.get<std::uint8_t>() != 0;
  return s;
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, data.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

Bytes handle_host_message(SimulatedReceiver& device, std::span<const std::uint8_t> frame) {
  Request req;
  try {
    req = decode_request(frame);
  } catch (const ProtocolError& e) {
    return nak(frame.size() > 2 ? frame[2] : 0, std::string("malformed frame: ") + e.what());
  }
  if (!known_opcode(req.opcode)) return nak(req.opcode, "unknown opcode");
  if (!connected(device.state())) return nak(req.opcode, "device not connected");
  try {
    return handle_request(device, req);
  } catch (const std::out_of_range&) {
    return nak(req.opcode, "malformed payload");
  }
}

void ByteQueue::write(std::span<const std::uint8_t> data) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw ProtocolError("channel closed");
    data_.insert(data_.end(), data.begin(), data.end());
  }
  cv_.notify_all();
}

bool ByteQueue::read_some(Bytes& out) {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return closed_ || !data_.empty(); });
  if (data_.empty()) return false;
  out.insert(out.end(), data_.begin(), data_.end());
  data_.clear();
  return true;
}

void ByteQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

InMemoryDevice::InMemoryDevice(SimulatedReceiver& device, DuplexChannel& channel, std::mutex& device_mutex)
    : channel_(channel) {
  thread_ = std::thread([this, &device, &device_mutex] {
    Bytes buffer;
    while (channel_.to_device.read_some(buffer)) {
      while (true) {
        std::size_t size = 0;
        try {
          size = request_frame_size(buffer);
        } catch (const ProtocolError& e) {
          // Unrecoverable framing; answer once and drop what we have.
          channel_.to_host.write(nak(0, std::string("malformed frame: ") + e.what()));
          buffer.clear();
          break;
        }
        if (size == 0) break;
        Bytes reply;
        {
          std::lock_guard lock(device_mutex);
          reply = handle_host_message(device, std::span(buffer).first(size));
        }
        buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(size));
        channel_.to_host.write(reply);
      }
    }
    channel_.to_host.close();
  });
}

InMemoryDevice::~InMemoryDevice() {
  channel_.to_device.close();
  if (thread_.joinable()) thread_.join();
}

Response ChannelTransport::transact(const Request& request) {
  channel_.to_device.write(encode_request(request));
  while (true) {
    const std::size_t size = response_frame_size(buffer_);
    if (size != 0) {
      Response r = decode_response(std::span(buffer_).first(size));
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(size));
      return r;
    }
    if (!channel_.to_host.read_some(buffer_)) throw ProtocolError("device closed the channel");
  }
}

DeviceServer::DeviceServer(SimulatedReceiver& device, std::mutex& device_mutex, const std::string& host,
                           std::uint16_t port)
    : device_(device), device_mutex_(device_mutex) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("cannot create socket");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error("invalid listen address: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 4) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(listen_fd_);
    throw Error("cannot listen on " + host + ":" + std::to_string(port) + ": " + reason);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread([this] { serve(); });
}

DeviceServer::~DeviceServer() { stop(); }

std::uint64_t DeviceServer::requests_handled() const {
  std::lock_guard lock(count_mutex_);
  return handled_;
}

void DeviceServer::wait_for_requests(std::uint64_t n) {
  std::unique_lock lock(count_mutex_);
  count_cv_.wait(lock, [&] { return stopping_ || handled_ >= n; });
}

void DeviceServer::stop() {
  {
    std::lock_guard lock(count_mutex_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  count_cv_.notify_all();
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (thread_.joinable()) thread_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

void DeviceServer::serve() {
  while (true) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    {
      std::lock_guard lock(count_mutex_);
      if (stopping_) {
        ::close(fd);
        return;
      }
    }
    Bytes buffer;
    try {
      while (read_some(fd, buffer)) {
        while (true) {
          const std::size_t size = request_frame_size(buffer);
          if (size == 0) break;
          Bytes reply;
          {
            std::lock_guard lock(device_mutex_);
            reply = handle_host_message(device_, std::span(buffer).first(size));
          }
          buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(size));
          write_all(fd, reply);
          {
            std::lock_guard lock(count_mutex_);
            ++handled_;
          }
          count_cv_.notify_all();
        }
      }
    } catch (const ProtocolError& e) {
      try {
        write_all(fd, nak(0, std::string("malformed frame: ") + e.what()));
      } catch (const ProtocolError&) {
      }
    }
    ::close(fd);
  }
}

TcpTransport::TcpTransport(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    throw ProtocolError("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    if (fd_ >= 0) ::close(fd_);
    throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port));
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpTransport::~TcpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

Response TcpTransport::transact(const Request& request) {
  write_all(fd_, encode_request(request));
  while (true) {
    const std::size_t size = response_frame_size(buffer_);
    if (size != 0) {
      Response r = decode_response(std::span(buffer_).first(size));
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(size));
      return r;
    }
    if (!read_some(fd_, buffer_)) throw ProtocolError("device closed the connection");
  }
}

Response HostClient::call(Opcode op, Bytes payload) {
  Response r = transport_.transact({static_cast<std::uint8_t>(op), std::move(payload)});
  if (r.opcode != static_cast<std::uint8_t>(op) && r.status == Status::Ack) throw ProtocolError("response opcode mismatch");
  if (r.status == Status::Nak) throw ProtocolError("device refused request: " + r.message());
  return r;
}

DeviceStatus HostClient::get_status() { return decode_status(call(Opcode::GetStatus, {}).payload); }

void HostClient::set_config(const DeploymentConfig& cfg) { call(Opcode::SetConfig, encode_config(cfg)); }

HostClient::SnapshotPage HostClient::get_snapshots(std::uint32_t start, std::uint32_t max) {
  Bytes payload;
  io::Writer w(payload);
  w.put(start);
  w.put(max);
  const Response r = call(Opcode::GetSnapshots, std::move(payload));
  io::Reader in(r.payload);
  SnapshotPage page;
  page.total = in.get<std::uint32_t>();
  const auto n = in.get<std::uint32_t>();
  if (n > kMaxRecordsPerMessage) throw ProtocolError("too many records in one message");
  page.records.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) page.records.push_back(snpr::read_record(in.get_bytes(snpr::kRecordBytes)));
  if (in.remaining() != 0) throw ProtocolError("trailing bytes in snapshot page");
  return page;
}

std::vector<Snapshot> HostClient::download_all() {
  std::vector<Snapshot> all;
  while (true) {
    auto page = get_snapshots(static_cast<std::uint32_t>(all.size()), kMaxRecordsPerMessage);
    if (page.records.empty()) break;
    for (auto& s : page.records) all.push_back(std::move(s));
    if (all.size() >= page.total) break;
  }
  return all;
}

std::uint32_t HostClient::firmware_update(std::span<const std::uint8_t> image, std::uint32_t expected_crc) {
  Bytes payload;
  io::Writer w(payload);
  w.put(expected_crc);
  w.put_bytes(image);
  const Response r = transport_.transact({static_cast<std::uint8_t>(Opcode::FirmwareUpdate), std::move(payload)});
  if (r.status == Status::Nak) {
    if (r.payload.size() >= 4) {
      io::Reader in(r.payload);
      const auto crc = in.get<std::uint32_t>();
      const auto rest = in.get_bytes(in.remaining());
      char hex[16];
      std::snprintf(hex, sizeof hex, "%08x", crc);
      throw ProtocolError(std::string(rest.begin(), rest.end()) + " (device computed " + hex + ")");
    }
    throw ProtocolError("device refused request: " + r.message());
  }
  io::Reader in(r.payload);
  return in.get<std::uint32_t>();
}

std::uint32_t HostClient::reboot() {
  const Response r = call(Opcode::Reboot, {});
  io::Reader in(r.payload);
  return in.get<std::uint32_t>();
}

void HostClient::shutdown() { call(Opcode::Shutdown, {}); }

}  // namespace snapper::protocol
