#include "advt/oracle.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>

// Small request/response pairs; without this every query waits on delayed ACKs.
#define CPPHTTPLIB_TCP_NODELAY true
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace advt {

namespace {

using nlohmann::json;

std::string error_body(const std::string& code, const std::string& message) {
  return json{{"error", code}, {"message", message}}.dump();
}

}  // namespace

bool Oracle::reserve(std::uint64_t n) {
  const std::uint64_t before = count_.fetch_add(n);
  if (budget_ && before + n > *budget_) {
    count_.fetch_sub(n);
    return false;
  }
  return true;
}

int Oracle::query(const VectorRef& x) {
  if (!reserve(1)) {
    throw BudgetExhausted("oracle budget of " + std::to_string(*budget_) + " queries exhausted");
  }
  try {
    return label(x);
  } catch (...) {
    release(1);
    throw;
  }
}

std::vector<int> Oracle::query_batch(const Features& x, int max_in_flight) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::size_t affordable = n;
  if (budget_) {
    const std::uint64_t used = queries();
    affordable = used >= *budget_ ? 0 : std::min<std::uint64_t>(n, *budget_ - used);
  }
  std::vector<int> labels(affordable);
  const std::size_t workers =
      std::min<std::size_t>(affordable, static_cast<std::size_t>(std::max(1, max_in_flight)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < affordable; ++i) {
      labels[i] = query(x.row(static_cast<Eigen::Index>(i)).transpose());
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t i = next++; i < affordable; i = next++) {
          try {
            labels[i] = query(x.row(static_cast<Eigen::Index>(i)).transpose());
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = affordable;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  if (affordable < n) {
    throw BudgetExhausted("oracle budget of " + std::to_string(*budget_) + " queries exhausted");
  }
  return labels;
}

LocalOracle::LocalOracle(std::shared_ptr<const Model> model, std::optional<std::uint64_t> budget)
    : Oracle(budget), model_(std::move(model)) {
  if (!model_) throw ContractError("local oracle needs a model");
}

int LocalOracle::label(const VectorRef& x) {
  if (x.size() != model_->dim()) throw ContractError("query dimension does not match the oracle");
  return predict(*model_, x);
}

HttpOracle::HttpOracle(const std::string& url, HttpOptions options,
                       std::optional<std::uint64_t> budget)
    : Oracle(budget), options_(options) {
  static const std::regex pattern(R"(^http://([^:/]+):(\d+)/?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) {
    throw ContractError("oracle url must look like http://host:port, got '" + url + "'");
  }
  host_ = m[1];
  port_ = std::stoi(m[2]);
}

HttpOracle::~HttpOracle() = default;

std::unique_ptr<httplib::Client> HttpOracle::make_client() const {
  auto client = std::make_unique<httplib::Client>(host_, port_);
  const auto ms = options_.timeout.count();
  client->set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client->set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  client->set_write_timeout(ms / 1000, (ms % 1000) * 1000);
  client->set_keep_alive(true);
  return client;
}

int HttpOracle::label(const VectorRef& x) {
  std::unique_ptr<httplib::Client> client;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (!idle_.empty()) {
      client = std::move(idle_.back());
      idle_.pop_back();
    }
  }
  if (!client) client = make_client();

  json body;
  body["features"] = std::vector<double>(x.data(), x.data() + x.size());
  const std::string payload = body.dump();

  const int attempts = 1 + std::max(0, options_.retries);
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client->Post("/predict", payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "server answered " + std::to_string(res->status);
    } else {
      json reply;
      try {
        reply = json::parse(res->body);
      } catch (const json::exception&) {
        throw ProtocolError("bad_response", "oracle reply is not JSON");
      }
      if (res->status == 200) {
        if (!reply.contains("label") || !reply["label"].is_number_integer()) {
          throw ProtocolError("bad_response", "oracle reply has no integer label");
        }
        std::lock_guard<std::mutex> lock(mutex_);
        idle_.push_back(std::move(client));
        return reply["label"].get<int>();
      }
      const std::string code = reply.value("error", "unknown");
      const std::string message = reply.value("message", "");
      if (res->status == 429) throw BudgetExhausted("server refused: " + message);
      if (res->status == 422) throw ContractError("server rejected the query: " + message);
      throw ProtocolError(code, message);
    }
    client = make_client();
    if (attempt < attempts) std::this_thread::sleep_for(options_.backoff * attempt);
  }
  throw TransportError("oracle at " + host_ + ":" + std::to_string(port_) +
                           " unreachable: " + last_error,
                       attempts);
}

namespace {

json fetch_stats(const std::string& host, int port, const HttpOptions& options) {
  httplib::Client client(host, port);
  const auto ms = options.timeout.count();
  client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  const int attempts = 1 + std::max(0, options.retries);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (auto res = client.Get("/stats"); res && res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::exception&) {
        throw ProtocolError("bad_response", "stats reply is not JSON");
      }
    }
    if (attempt < attempts) std::this_thread::sleep_for(options.backoff * attempt);
  }
  throw TransportError("cannot read /stats from " + host + ":" + std::to_string(port), attempts);
}

}  // namespace

int HttpOracle::dim() const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!dim_) dim_ = fetch_stats(host_, port_, options_).at("dim").get<int>();
  return *dim_;
}

std::uint64_t HttpOracle::server_queries() const {
  return fetch_stats(host_, port_, options_).at("queries").get<std::uint64_t>();
}

OracleServer::OracleServer(std::shared_ptr<const Model> model, ServerOptions options)
    : model_(std::move(model)), options_(options), server_(std::make_unique<httplib::Server>()) {
  if (!model_) throw ContractError("oracle server needs a model");
  install_routes();
}

OracleServer::~OracleServer() { stop(); }

void OracleServer::install_routes() {
  server_->Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(error_body("malformed_request", "body is not JSON"), "application/json");
      return;
    }
    if (!body.is_object() || !body.contains("features") || !body["features"].is_array()) {
      res.status = 400;
      res.set_content(error_body("malformed_request", "expected {\"features\": [reals]}"),
                      "application/json");
      return;
    }
    const auto& features = body["features"];
    Vector x(static_cast<Eigen::Index>(features.size()));
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (!features[i].is_number()) {
        res.status = 400;
        res.set_content(error_body("malformed_request", "features must be numbers"),
                        "application/json");
        return;
      }
      x(static_cast<Eigen::Index>(i)) = features[i].get<double>();
    }
    if (x.size() != model_->dim()) {
      res.status = 422;
      res.set_content(error_body("dimension_mismatch",
                                 "expected " + std::to_string(model_->dim()) + " features, got " +
                                     std::to_string(x.size())),
                      "application/json");
      return;
    }
    const std::uint64_t before = count_.fetch_add(1);
    if (options_.budget && before + 1 > *options_.budget) {
      count_.fetch_sub(1);
      res.status = 429;
      res.set_content(error_body("budget_exhausted",
                                 "budget of " + std::to_string(*options_.budget) + " queries used"),
                      "application/json");
      return;
    }
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    if (options_.log_features) {
      std::fprintf(stderr, "predict %s\n", features.dump().c_str());
    }
    res.set_content(json{{"label", predict(*model_, x)}}.dump(), "application/json");
  });

  server_->Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"queries", count_.load()},
                         {"dim", model_->dim()},
                         {"num_classes", model_->num_classes()}}
                        .dump(),
                    "application/json");
  });

  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 404 ? "not_found" : "http_" + std::to_string(res.status);
    res.set_content(error_body(code, "no such endpoint"), "application/json");
  });
}

namespace {

int bind_server(httplib::Server& server, const std::string& host, int port) {
  const int bound = port == 0 ? server.bind_to_any_port(host)
                              : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw TransportError("cannot bind " + host + ":" + std::to_string(port), 1);
  return bound;
}

}  // namespace

int OracleServer::start(const std::string& host, int port) {
  if (thread_.joinable()) throw ContractError("oracle server already running");
  host_ = host;
  port_ = bind_server(*server_, host, port);
  thread_ = std::thread([this]() { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void OracleServer::serve(const std::string& host, int port) {
  host_ = host;
  port_ = bind_server(*server_, host, port);
  server_->listen_after_bind();
}

void OracleServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string OracleServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

std::unique_ptr<Oracle> open_oracle(const std::string& spec, HttpOptions options,
                                    std::optional<std::uint64_t> budget) {
  if (spec.rfind("local:", 0) == 0) {
    return std::make_unique<LocalOracle>(std::make_shared<const Model>(load_model(spec.substr(6))),
                                         budget);
  }
  if (spec.rfind("http://", 0) == 0) return std::make_unique<HttpOracle>(spec, options, budget);
  if (spec.rfind("http:", 0) == 0) return std::make_unique<HttpOracle>(spec.substr(5), options, budget);
  throw ContractError("oracle must be local:<model file> or http://host:port, got '" + spec + "'");
}

}  // namespace advt
