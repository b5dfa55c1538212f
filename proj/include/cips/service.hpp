#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "cips/generator.hpp"

namespace httplib {
class Server;
}

namespace cips {

struct ServiceOptions {
  /// Largest number of points a single request may synthesise.
  std::size_t pixel_cap = std::size_t{1} << 20;
  /// Concurrent synthesis workers.
  std::size_t workers = 2;
  /// Requests allowed to wait for a worker before 503.
  std::size_t queue_depth = 8;
  /// Threads used inside one synthesis call.
  unsigned threads_per_request = 1;
  /// Served under /ui when it exists.
  std::filesystem::path ui_dir;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handling independent of the transport. Handlers only read the
/// model; reload() takes the model lock exclusively and so waits for
/// in-flight requests.
class Service {
 public:
  explicit Service(ServiceOptions options = {});

  void load_checkpoint(const std::filesystem::path& path);
  void set_generator(std::shared_ptr<const Generator> gen, std::string source = "<memory>");
  bool loaded() const;

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& body);

  HttpResponse healthz() const;
  HttpResponse model() const;
  HttpResponse map(const std::string& body) const;
  HttpResponse synthesize(const std::string& body);
  HttpResponse reload(const std::string& body);

  /// Registers every route plus the /ui mount on `server`.
  void mount(httplib::Server& server);

  const ServiceOptions& options() const { return options_; }

 private:
  ServiceOptions options_;
  mutable std::shared_mutex model_mutex_;
  std::shared_ptr<const Generator> gen_;
  std::string source_;
  std::atomic<std::size_t> admitted_{0};
};

/// "host:port" from `addr` (default CIPS_ADDR, then 127.0.0.1:8080).
std::pair<std::string, int> parse_listen_address(const std::string& addr);

/// Blocks serving HTTP until the process is stopped. Returns false when the
/// address cannot be bound.
bool run_server(Service& service, const std::string& host, int port);

}  // namespace cips
