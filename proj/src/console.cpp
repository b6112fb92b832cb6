#include "parbci/console.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>

namespace parbci {

struct ConsoleServer::Client {
  int fd{-1};
  int id{0};
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> events;
  std::deque<std::string> replies;
  long long dropped{0};
  bool alive{true};
  bool writing{false};
  std::thread reader, writer;
};

namespace {

bool send_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

} // namespace

ConsoleServer::ConsoleServer(const std::string& listen, std::size_t queue_capacity) : capacity_(queue_capacity) {
  if (capacity_ == 0) throw std::runtime_error("console queue capacity must be >= 1");
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("listen endpoint must be host:port: " + listen);
  const std::string host = listen.substr(0, colon);
  const std::string port = listen.substr(colon + 1);

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw std::runtime_error("cannot resolve " + listen + ": " + ::gai_strerror(rc));
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const bool ok = listen_fd_ >= 0 && ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) == 0 && ::listen(listen_fd_, 8) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    const std::string err = std::strerror(errno);
    if (listen_fd_ >= 0) ::close(listen_fd_);
    throw std::runtime_error("cannot listen on " + listen + ": " + err);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

ConsoleServer::~ConsoleServer() { stop(); }

void ConsoleServer::accept_loop() {
  for (;;) {
    {
      std::lock_guard lk(mu_);
      if (!running_) return;
    }
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) {
      reap();
      continue;
    }
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto c = std::make_shared<Client>();
    c->fd = fd;
    {
      std::lock_guard lk(mu_);
      if (!running_) {
        ::close(fd);
        return;
      }
      c->id = next_id_++;
      clients_.push_back(c);
    }
    c->reader = std::thread([this, c] { read_loop(c); });
    c->writer = std::thread([this, c] { write_loop(c); });
    cv_.notify_all();
  }
}

void ConsoleServer::read_loop(const std::shared_ptr<Client>& c) {
  std::string buf;
  char chunk[4096];
  long long line_no = 0;
  for (;;) {
    const ssize_t n = ::recv(c->fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
      std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ++line_no;
      try {
        OperatorCommand cmd = parse_command(line);
        if (!cmd.client_seq) cmd.client_seq = line_no;
        cmd.client = c->id;
        {
          std::lock_guard lk(mu_);
          inbound_.push_back(std::move(cmd));
        }
        cv_.notify_all();
      } catch (const std::invalid_argument& e) {
        long long seq = line_no;
        try {
          const Json j = Json::parse(line);
          if (j.is_object() && j.contains("seq") && j["seq"].is_number_integer()) seq = j["seq"].get<long long>();
        } catch (const nlohmann::json::exception&) {
        }
        send_reply(*c, seq, e.what());
      }
    }
  }
  {
    std::lock_guard lk(c->mu);
    c->alive = false;
  }
  c->cv.notify_all();
  cv_.notify_all();
}

void ConsoleServer::write_loop(const std::shared_ptr<Client>& c) {
  for (;;) {
    std::string out;
    {
      std::unique_lock lk(c->mu);
      c->writing = false;
      c->cv.notify_all();
      c->cv.wait(lk, [&] { return !c->alive || !c->replies.empty() || !c->events.empty(); });
      if (!c->alive) return;
      if (!c->replies.empty()) {
        out = std::move(c->replies.front());
        c->replies.pop_front();
      } else {
        if (c->dropped > 0) {
          out = Json{{"v", kLogVersion}, {"dropped", c->dropped}}.dump() + "\n";
          c->dropped = 0;
        }
        out += c->events.front() + "\n";
        c->events.pop_front();
      }
      c->writing = true;
    }
    if (!send_all(c->fd, out)) {
      std::lock_guard lk(c->mu);
      c->alive = false;
      c->writing = false;
      c->cv.notify_all();
      ::shutdown(c->fd, SHUT_RDWR);
      return;
    }
  }
}

void ConsoleServer::send_reply(Client& c, long long seq, const std::string& error) {
  Json r{{"v", kLogVersion}, {"reply", error.empty() ? "ok" : "error"}, {"seq", seq}};
  if (!error.empty()) r["error"] = error;
  {
    std::lock_guard lk(c.mu);
    if (!c.alive) return;
    c.replies.push_back(r.dump() + "\n");
  }
  c.cv.notify_all();
}

void ConsoleServer::publish(const std::string& line) {
  std::lock_guard lk(mu_);
  for (const auto& c : clients_) {
    {
      std::lock_guard ck(c->mu);
      if (!c->alive) continue;
      if (c->events.size() >= capacity_) {
        c->events.pop_front();
        ++c->dropped;
      }
      c->events.push_back(line);
    }
    c->cv.notify_all();
  }
}

std::vector<OperatorCommand> ConsoleServer::poll() {
  std::lock_guard lk(mu_);
  std::vector<OperatorCommand> out(inbound_.begin(), inbound_.end());
  inbound_.clear();
  return out;
}

std::optional<OperatorCommand> ConsoleServer::wait(int timeout_ms) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms), [&] { return !inbound_.empty() || !running_; });
  if (inbound_.empty()) return std::nullopt;
  OperatorCommand c = std::move(inbound_.front());
  inbound_.pop_front();
  return c;
}

void ConsoleServer::reply(const OperatorCommand& c, const std::string& error) {
  std::shared_ptr<Client> target;
  {
    std::lock_guard lk(mu_);
    for (const auto& cl : clients_)
      if (cl->id == c.client) target = cl;
  }
  if (target) send_reply(*target, c.client_seq.value_or(-1), error);
}

void ConsoleServer::wait_ready() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] {
    if (!running_) return true;
    for (const auto& c : clients_) {
      std::lock_guard ck(c->mu);
      if (c->alive) return true;
    }
    return false;
  });
}

int ConsoleServer::clients() const {
  std::lock_guard lk(mu_);
  int n = 0;
  for (const auto& c : clients_) {
    std::lock_guard ck(c->mu);
    if (c->alive) ++n;
  }
  return n;
}

bool ConsoleServer::flush(int timeout_ms) {
  std::vector<std::shared_ptr<Client>> snapshot;
  {
    std::lock_guard lk(mu_);
    snapshot = clients_;
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  for (const auto& c : snapshot) {
    std::unique_lock lk(c->mu);
    if (!c->cv.wait_until(lk, deadline, [&] {
          return !c->alive || (c->events.empty() && c->replies.empty() && !c->writing);
        }))
      return false;
  }
  return true;
}

void ConsoleServer::reap() {
  std::vector<std::shared_ptr<Client>> dead;
  {
    std::lock_guard lk(mu_);
    for (auto it = clients_.begin(); it != clients_.end();) {
      bool alive;
      {
        std::lock_guard ck((*it)->mu);
        alive = (*it)->alive;
      }
      if (alive) {
        ++it;
      } else {
        dead.push_back(*it);
        it = clients_.erase(it);
      }
    }
  }
  for (auto& c : dead) {
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

void ConsoleServer::stop() {
  {
    std::lock_guard lk(mu_);
    if (!running_) return;
    running_ = false;
  }
  cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::shared_ptr<Client>> all;
  {
    std::lock_guard lk(mu_);
    all.swap(clients_);
  }
  for (auto& c : all) {
    {
      std::lock_guard ck(c->mu);
      c->alive = false;
    }
    c->cv.notify_all();
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
  ::close(listen_fd_);
}

} // namespace parbci
