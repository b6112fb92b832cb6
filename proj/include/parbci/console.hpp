#pragma once

#include "parbci/session.hpp"

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace parbci {

// Line-delimited TCP endpoint for the operator console.
//
// Outbound: every SessionEvent line verbatim, command replies
//   {"v":1,"reply":"ok"|"error","seq":n,"error":"..."}
// and, after an overflow of a client's bounded queue, {"v":1,"dropped":n}
// ahead of the next event. Inbound: one OperatorCommand per line.
// Replies echo the command's seq, or its 1-based line number when it had none.
class ConsoleServer : public ConsoleLink {
public:
  // `listen` is host:port; port 0 picks a free one. Throws std::runtime_error.
  ConsoleServer(const std::string& listen, std::size_t queue_capacity);
  ~ConsoleServer() override;
  ConsoleServer(const ConsoleServer&) = delete;
  ConsoleServer& operator=(const ConsoleServer&) = delete;

  int port() const { return port_; }

  void publish(const std::string& line) override;
  std::vector<OperatorCommand> poll() override;
  std::optional<OperatorCommand> wait(int timeout_ms) override;
  void reply(const OperatorCommand& c, const std::string& error) override;
  void wait_ready() override;
  int clients() const override;

  // Waits until every connected client's queue is written out, up to `timeout_ms`.
  bool flush(int timeout_ms);
  void stop();

private:
  struct Client;

  void accept_loop();
  void read_loop(const std::shared_ptr<Client>& c);
  void write_loop(const std::shared_ptr<Client>& c);
  void send_reply(Client& c, long long seq, const std::string& error);
  void reap();

  int listen_fd_{-1};
  int port_{0};
  std::size_t capacity_;
  bool running_{true};
  std::thread acceptor_;

  mutable std::mutex mu_;
  std::condition_variable cv_; // inbound commands, client count
  std::vector<std::shared_ptr<Client>> clients_;
  std::deque<OperatorCommand> inbound_;
  int next_id_{0};
};

} // namespace parbci
