#include "parbci/console.hpp"

#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <functional>
#include <future>
#include <thread>

using namespace parbci;
using namespace std::chrono_literals;

namespace {

// Minimal line client standing in for the operator console.
class LineClient {
public:
  explicit LineClient(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(static_cast<std::uint16_t>(port));
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0);
  }
  ~LineClient() { close(); }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void send(const std::string& line) {
    const std::string s = line + "\n";
    REQUIRE(::send(fd_, s.data(), s.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(s.size()));
  }

  // Next line, or nullopt on timeout or EOF.
  std::optional<std::string> next(int timeout_ms = 5000) {
    for (;;) {
      if (const auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, timeout_ms) <= 0) return std::nullopt;
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return std::nullopt;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  // Reads until a line satisfies `pred`; every line read is appended to `seen`.
  std::optional<Json> until(const std::function<bool(const Json&)>& pred, std::vector<Json>& seen) {
    while (const auto l = next()) {
      seen.push_back(Json::parse(*l));
      if (pred(seen.back())) return seen.back();
    }
    return std::nullopt;
  }

private:
  int fd_{-1};
  std::string buf_;
};

bool is_event(const Json& j) { return j.contains("kind"); }
bool is_reply(const Json& j) { return j.contains("reply"); }

SessionConfig paced_config() {
  SessionConfig c;
  c.scenario.seed = 4;
  c.scenario.duration = 12.0;
  c.speed = 4.0;
  c.wait_for_console = true;
  c.classifier.calibration_seconds = 48.0;
  return c;
}

} // namespace

TEST_CASE("serve: inject_par, malformed commands, pause and resume over a live session") {
  const SessionConfig cfg = paced_config();
  ConsoleServer server("127.0.0.1:0", cfg.queue_capacity);
  REQUIRE(server.port() > 0);
  auto session = std::async(std::launch::async, [&] { return run_session(cfg, SessionKind::free_use, &server); });

  LineClient client(server.port());
  std::vector<Json> seen;
  const auto first_state = client.until([](const Json& j) { return is_event(j) && j["kind"] == "ui_state"; }, seen);
  REQUIRE(first_state);
  CHECK((*first_state)["payload"]["view"] == "main_menu");

  client.send(R"({"v":1,"seq":1,"cmd":"inject_par"})");
  const auto ok = client.until(is_reply, seen);
  REQUIRE(ok);
  CHECK((*ok)["reply"] == "ok");
  CHECK((*ok)["seq"] == 1);
  const auto next_state = client.until([](const Json& j) { return is_event(j) && j["kind"] == "ui_state"; }, seen);
  REQUIRE(next_state);
  CHECK((*next_state)["payload"]["view"] == "confirmation");

  client.send("this is not json");
  const auto bad_text = client.until(is_reply, seen);
  REQUIRE(bad_text);
  CHECK((*bad_text)["reply"] == "error");
  CHECK((*bad_text)["seq"] == 2); // line number
  client.send(R"({"v":1,"seq":17,"cmd":"warp"})");
  const auto bad_cmd = client.until(is_reply, seen);
  REQUIRE(bad_cmd);
  CHECK((*bad_cmd)["reply"] == "error");
  CHECK((*bad_cmd)["seq"] == 17);
  CHECK((*bad_cmd)["error"].get<std::string>().find("warp") != std::string::npos);

  client.send(R"({"v":1,"seq":5,"cmd":"pause"})");
  const auto paused = client.until([](const Json& j) { return is_reply(j) && j["seq"] == 5; }, seen);
  REQUIRE(paused);
  // Drain whatever was already queued, then nothing may arrive while paused.
  while (const auto l = client.next(300)) seen.push_back(Json::parse(*l));
  long long last_seq = -1;
  for (const auto& j : seen)
    if (is_event(j)) last_seq = j["seq"];
  CHECK(!client.next(400));
  client.send(R"({"v":1,"seq":6,"cmd":"resume"})");
  while (const auto l = client.next(3000)) seen.push_back(Json::parse(*l));

  const SessionResult r = session.get();
  server.stop();

  std::vector<std::string> dump;
  for (const auto& j : seen)
    if (is_event(j)) dump.push_back(j.dump());
  CHECK(dump == r.log); // console dump seq-matches the engine log

  const auto& pause_line = r.log[static_cast<std::size_t>(last_seq)];
  CHECK(parse_log_line(pause_line).kind == "operator");
  CHECK(parse_log_line(pause_line).payload["command"] == "pause");
  CHECK(parse_log_line(r.log[static_cast<std::size_t>(last_seq + 1)]).payload["command"] == "resume");
  CHECK(replay(r.log).log == r.log);
}

TEST_CASE("serve: press_button opens the three-choice overlay") {
  const SessionConfig cfg = paced_config();
  ConsoleServer server("127.0.0.1:0", cfg.queue_capacity);
  auto session = std::async(std::launch::async, [&] { return run_session(cfg, SessionKind::free_use, &server); });
  LineClient client(server.port());
  std::vector<Json> seen;
  client.send(R"({"v":1,"seq":1,"cmd":"press_button"})");
  const auto overlay = client.until(
      [](const Json& j) { return is_event(j) && j["kind"] == "ui_state" && j["payload"]["view"] == "simple_answers"; },
      seen);
  REQUIRE(overlay);
  CHECK((*overlay)["payload"]["entries"].size() == 3);
  client.close();
  session.get();
  server.stop();
}

TEST_CASE("serve: a console that disconnects while paused does not stall the session") {
  SessionConfig cfg = paced_config();
  cfg.speed = 20.0;
  ConsoleServer server("127.0.0.1:0", cfg.queue_capacity);
  auto session = std::async(std::launch::async, [&] { return run_session(cfg, SessionKind::free_use, &server); });
  {
    LineClient client(server.port());
    std::vector<Json> seen;
    client.send(R"({"v":1,"seq":1,"cmd":"pause"})");
    REQUIRE(client.until(is_reply, seen));
  }
  REQUIRE(session.wait_for(20s) == std::future_status::ready);
  const auto r = session.get();
  server.stop();
  bool auto_resume = false;
  for (const auto& l : r.log) {
    const auto e = parse_log_line(l);
    if (e.kind == "operator" && e.payload["command"] == "resume") auto_resume = e.payload["source"] == "auto";
  }
  CHECK(auto_resume);
}

TEST_CASE("serve: no console attached never blocks the engine") {
  SessionConfig cfg = paced_config();
  cfg.speed = 0.0;
  cfg.wait_for_console = false;
  ConsoleServer server("127.0.0.1:0", cfg.queue_capacity);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_session(cfg, SessionKind::free_use, &server);
  CHECK(std::chrono::steady_clock::now() - t0 < 10s);
  CHECK(r.log == run_session(cfg, SessionKind::free_use).log);
  server.stop();
}

TEST_CASE("console queue: slow reader gets drop-oldest with a drop count") {
  ConsoleServer server("127.0.0.1:0", 8);
  LineClient client(server.port());
  while (server.clients() == 0) std::this_thread::sleep_for(5ms);

  // Enough payload to fill the socket buffers while the client is not reading.
  const std::string pad(20000, 'x');
  constexpr int kLines = 1500;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < kLines; ++i)
    server.publish(Json{{"v", 1}, {"seq", i}, {"t", 0.0}, {"kind", "pad"}, {"payload", pad}}.dump());
  CHECK(std::chrono::steady_clock::now() - t0 < 2s);

  long long received = 0, dropped = 0, last = -1;
  bool ordered = true;
  while (const auto l = client.next(1000)) {
    const Json j = Json::parse(*l);
    if (j.contains("dropped")) {
      dropped += j["dropped"].get<long long>();
      continue;
    }
    ++received;
    const long long s = j["seq"];
    ordered = ordered && s > last;
    last = s;
  }
  CHECK(dropped > 0);
  CHECK(received + dropped == kLines);
  CHECK(last == kLines - 1);
  CHECK(ordered);
  server.stop();
}

TEST_CASE("console server: bad endpoint") {
  CHECK_THROWS_AS(ConsoleServer("127.0.0.1", 4), std::runtime_error);
  CHECK_THROWS_AS(ConsoleServer("127.0.0.1:0", 0), std::runtime_error);
  ConsoleServer a("127.0.0.1:0", 4);
  CHECK_THROWS_AS(ConsoleServer("127.0.0.1:" + std::to_string(a.port()), 4), std::runtime_error);
}
