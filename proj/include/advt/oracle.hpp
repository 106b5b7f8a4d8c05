#ifndef ADVT_ORACLE_HPP
#define ADVT_ORACLE_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "advt/dataset.hpp"
#include "advt/models.hpp"

namespace httplib {
class Client;
class Server;
}  // namespace httplib

namespace advt {

// Label-only query channel. The counter moves by exactly one per label handed
// back; a query that fails (budget, transport) leaves it untouched.
class Oracle {
 public:
  explicit Oracle(std::optional<std::uint64_t> budget = std::nullopt) : budget_(budget) {}
  virtual ~Oracle() = default;
  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  int query(const VectorRef& x);
  // Labels rows in order. With max_in_flight > 1 the rows are labeled
  // concurrently; results are still returned by row index. If the budget runs
  // out part way, the affordable prefix is labeled (and counted) before
  // BudgetExhausted is thrown.
  std::vector<int> query_batch(const Features& x, int max_in_flight = 1);

  std::uint64_t queries() const { return count_.load(); }
  std::optional<std::uint64_t> budget() const { return budget_; }
  virtual int dim() const = 0;

 protected:
  // Backend call; must be safe to run from several threads at once.
  virtual int label(const VectorRef& x) = 0;

 private:
  bool reserve(std::uint64_t n);
  void release(std::uint64_t n) { count_.fetch_sub(n); }

  std::atomic<std::uint64_t> count_{0};
  std::optional<std::uint64_t> budget_;
};

class LocalOracle final : public Oracle {
 public:
  explicit LocalOracle(std::shared_ptr<const Model> model,
                       std::optional<std::uint64_t> budget = std::nullopt);
  int dim() const override { return model_->dim(); }

 protected:
  int label(const VectorRef& x) override;

 private:
  std::shared_ptr<const Model> model_;
};

struct HttpOptions {
  std::chrono::milliseconds timeout{5000};
  int retries = 2;  // extra attempts after a transport failure
  std::chrono::milliseconds backoff{50};
};

// Speaks the /predict protocol. Server-side budget refusals surface as
// BudgetExhausted; an unreachable server as TransportError after retries.
class HttpOracle final : public Oracle {
 public:
  // url: http://host:port
  explicit HttpOracle(const std::string& url, HttpOptions options = {},
                      std::optional<std::uint64_t> budget = std::nullopt);
  ~HttpOracle() override;
  // Asked from the server's /stats on first use.
  int dim() const override;
  // Queries the server has answered so far, across all clients.
  std::uint64_t server_queries() const;

 protected:
  int label(const VectorRef& x) override;

 private:
  std::unique_ptr<httplib::Client> make_client() const;

  std::string host_;
  int port_ = 0;
  HttpOptions options_;
  mutable std::mutex mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
  mutable std::optional<int> dim_;
};

struct ServerOptions {
  std::optional<std::uint64_t> budget;
  std::chrono::milliseconds latency{0};  // injected before every /predict answer
  bool log_features = false;
};

// POST /predict {"features":[...]} -> {"label":k}
// GET  /stats -> {"queries":n,"dim":d,"num_classes":c}
// Errors: {"error":code,"message":text} with status 400 malformed_request,
// 422 dimension_mismatch, 429 budget_exhausted, 404 not_found.
class OracleServer {
 public:
  explicit OracleServer(std::shared_ptr<const Model> model, ServerOptions options = {});
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port; the
  // bound port is returned.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks the calling thread until stop() is called from elsewhere.
  void serve(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string url() const;
  std::uint64_t queries() const { return count_.load(); }

 private:
  void install_routes();

  std::shared_ptr<const Model> model_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
  std::atomic<std::uint64_t> count_{0};
};

// Parses "local:<model file>" or "http://host:port" (also "http:<url>").
std::unique_ptr<Oracle> open_oracle(const std::string& spec, HttpOptions options = {},
                                    std::optional<std::uint64_t> budget = std::nullopt);

}  // namespace advt

#endif  // ADVT_ORACLE_HPP
