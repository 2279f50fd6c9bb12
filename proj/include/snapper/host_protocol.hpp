#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "snapper/receiver.hpp"

namespace snapper::protocol {

// Frames: 'S' 'G' | opcode u8 | length u32 | payload            (host -> device)
//         'S' 'G' | status u8 | opcode u8 | length u32 | payload (device -> host)
// All integers little-endian.
enum class Opcode : std::uint8_t {
  GetStatus = 0x01,
  SetConfig = 0x02,
  GetSnapshots = 0x03,
  FirmwareUpdate = 0x04,
  Reboot = 0x05,
  Shutdown = 0x06,
};

enum class Status : std::uint8_t { Ack = 0x06, Nak = 0x15 };

inline constexpr std::uint8_t kMagic0 = 'S';
inline constexpr std::uint8_t kMagic1 = 'G';
inline constexpr std::size_t kRequestHeaderBytes = 7;
inline constexpr std::size_t kResponseHeaderBytes = 8;
inline constexpr std::uint32_t kMaxPayloadBytes = 16u << 20;
inline constexpr std::uint32_t kMaxRecordsPerMessage = 64;

using Bytes = std::vector<std::uint8_t>;

class ProtocolError : public Error {
 public:
  using Error::Error;
};

struct Request {
  std::uint8_t opcode = 0;
  Bytes payload;
};

struct Response {
  Status status = Status::Nak;
  std::uint8_t opcode = 0;
  Bytes payload;

  // NAK payloads carry a UTF-8 reason.
  std::string message() const { return {payload.begin(), payload.end()}; }
};

Bytes encode_request(const Request& r);
Bytes encode_response(const Response& r);
// Number of bytes of the first complete frame in `buffer`, or 0 if more are
// needed. Throws ProtocolError on a bad magic or oversize length.
std::size_t request_frame_size(std::span<const std::uint8_t> buffer);
std::size_t response_frame_size(std::span<const std::uint8_t> buffer);
Request decode_request(std::span<const std::uint8_t> frame);
Response decode_response(std::span<const std::uint8_t> frame);

struct DeviceStatus {
  std::uint16_t battery_mv = 0;
  std::uint32_t snapshot_count = 0;
  std::uint32_t firmware_version = 0;
  ReceiverState state = ReceiverState::Shutdown;
  bool configured = false;
  std::int64_t device_clock_ms = 0;
  DeploymentConfig config;  // meaningful when configured
  std::uint64_t device_id = 0;
  bool firmware_staged = false;
};

Bytes encode_status(const DeviceStatus& s);
DeviceStatus decode_status(std::span<const std::uint8_t> payload);
Bytes encode_config(const DeploymentConfig& c);
DeploymentConfig decode_config(std::span<const std::uint8_t> payload);

std::uint32_t crc32(std::span<const std::uint8_t> data);

// Device side: handles one framed request and returns one framed response.
// Requests outside the connected states, unknown opcodes and malformed
// frames are answered with NAK.
Bytes handle_host_message(SimulatedReceiver& device, std::span<const std::uint8_t> frame);

// Thread-safe byte pipe; read blocks until data or close.
class ByteQueue {
 public:
  void write(std::span<const std::uint8_t> data);
  // Appends at least one byte to `out`; returns false once closed and empty.
  bool read_some(Bytes& out);
  void close();

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::uint8_t> data_;
  bool closed_ = false;
};

// Two ByteQueues standing in for the USB bulk endpoints.
struct DuplexChannel {
  ByteQueue to_device;
  ByteQueue to_host;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response transact(const Request& request) = 0;
};

// Serves a receiver on the device end of a DuplexChannel from a thread.
class InMemoryDevice {
 public:
  InMemoryDevice(SimulatedReceiver& device, DuplexChannel& channel, std::mutex& device_mutex);
  ~InMemoryDevice();
  InMemoryDevice(const InMemoryDevice&) = delete;
  InMemoryDevice& operator=(const InMemoryDevice&) = delete;

 private:
  DuplexChannel& channel_;
  std::thread thread_;
};

class ChannelTransport : public Transport {
 public:
  explicit ChannelTransport(DuplexChannel& channel) : channel_(channel) {}
  Response transact(const Request& request) override;

 private:
  DuplexChannel& channel_;
  Bytes buffer_;
};

// Serves framed requests over TCP (one connection at a time) from a thread.
class DeviceServer {
 public:
  // Port 0 picks a free port. Throws Error when the address cannot be bound.
  DeviceServer(SimulatedReceiver& device, std::mutex& device_mutex, const std::string& host, std::uint16_t port);
  ~DeviceServer();
  DeviceServer(const DeviceServer&) = delete;
  DeviceServer& operator=(const DeviceServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::uint64_t requests_handled() const;
  // Blocks until at least n requests have been answered or stop() is called.
  void wait_for_requests(std::uint64_t n);
  void stop();

 private:
  void serve();

  SimulatedReceiver& device_;
  std::mutex& device_mutex_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  mutable std::mutex count_mutex_;
  std::condition_variable count_cv_;
  std::uint64_t handled_ = 0;
  bool stopping_ = false;
  std::thread thread_;
};

class TcpTransport : public Transport {
 public:
  TcpTransport(const std::string& host, std::uint16_t port);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;
  Response transact(const Request& request) override;

 private:
  int fd_ = -1;
  Bytes buffer_;
};

// Typed host-side calls. NAK responses throw ProtocolError with the reason.
class HostClient {
 public:
  explicit HostClient(Transport& transport) : transport_(transport) {}

  DeviceStatus get_status();
  void set_config(const DeploymentConfig& cfg);
  struct SnapshotPage {
    std::uint32_t total = 0;
    std::vector<Snapshot> records;
  };
  SnapshotPage get_snapshots(std::uint32_t start, std::uint32_t max);
  std::vector<Snapshot> download_all();
  // Returns the CRC the device computed over the staged image.
  std::uint32_t firmware_update(std::span<const std::uint8_t> image, std::uint32_t expected_crc);
  std::uint32_t reboot();
  void shutdown();

 private:
  Response call(Opcode op, Bytes payload);
  Transport& transport_;
};

}  // namespace snapper::protocol
